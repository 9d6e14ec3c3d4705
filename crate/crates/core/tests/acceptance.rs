//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use conelab::cone::{ConeSpec, GeneralizedCone, GridPoint};
use conelab::converge::{ell_converge_check, precompact_harness, tangent_cone, ConeSequence, ScheduleEntry};
use conelab::lorot::{sigma, tau_modified, tcd_verify, tmcp_verify, truncated_bump, Flavor, VerifyOptions};
use conelab::metricspace::{gh_distance, FiniteMetricSpace, GhMode};
use conelab::model2d::{tcbb_verify, tcbb_verify_configs, FourPointConfig};
use conelab::smoothcurv::{monotonicity_witness, ricci_reduction, sectional_reduction};
use conelab::warp::WarpingFunction;
use conelab::{simplex, Error, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cone(spec: ConeSpec) -> GeneralizedCone {
    GeneralizedCone::new(spec).unwrap()
}

fn strip_spec() -> ConeSpec {
    ConeSpec::minkowski_strip(2.0, 1.0, 101, 200, 100).unwrap().with_window(8)
}

fn milne_spec() -> ConeSpec {
    let w = WarpingFunction::sample(0.5, 2.0, 151, |t| t).unwrap();
    ConeSpec::new(w, FiniteMetricSpace::segment(1.0, 101).unwrap(), 150, 100)
}

fn sin_arc_spec() -> ConeSpec {
    let w = WarpingFunction::sample(0.0, PI, 201, f64::sin).unwrap();
    ConeSpec::new(w, FiniteMetricSpace::circle_arc(1.0, 1.0, 41).unwrap(), 200, 80).with_n(2.0)
}

fn cos_arc_spec() -> ConeSpec {
    let w = WarpingFunction::sample(-1.4, 1.4, 201, f64::cos).unwrap();
    ConeSpec::new(w, FiniteMetricSpace::circle_arc(1.0, 1.0, 41).unwrap(), 200, 80)
}

fn c1_strip_oracle() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let c = pool.install(|| {
        let c = cone(strip_spec());
        c.tables();
        c
    });
    let secs = start.elapsed().as_secs_f64();
    let (mut err, mut order): (f64, usize) = (0.0, 0);
    for s in 0..c.nt() {
        for t in s..c.nt() {
            for j in 0..=c.nr() {
                let Some(truth) = common::minkowski_tau(c.time(t) - c.time(s), j as f64 * c.dr()) else { continue };
                let (lo, hi) = (c.tau2d_lo(s, t, j), c.tau2d_hi(s, t, j));
                err = err.max((lo - truth).abs());
                if !(lo <= truth + 1e-12 && truth <= hi + 1e-12) {
                    order += 1;
                }
            }
        }
    }
    ensure(err <= 0.05, format!("max error {err:.4}"))?;
    ensure(order == 0, format!("{order} pairs outside [lo, hi]"))?;
    ensure(secs <= 30.0, format!("build took {secs:.1} s"))?;
    Ok(format!("max |lo - truth| = {err:.4}, bracket ordered, single-threaded build {secs:.2} s"))
}

fn c2_milne_oracle() -> Outcome {
    let spec = milne_spec();
    let (ts, nr, dr) = (spec.warp.ts().to_vec(), spec.dist_steps, spec.fiber.diameter() / spec.dist_steps as f64);
    let mut oracle = Vec::new();
    for s in 0..ts.len() {
        for t in s..ts.len() {
            for j in 0..=nr {
                if let Some(v) = common::milne_tau2(ts[s], ts[t], j as f64 * dr) {
                    oracle.push((s, t, j, v));
                }
            }
        }
    }
    let c = cone(spec);
    let mut err: f64 = 0.0;
    for &(s, t, j, v) in &oracle {
        let lo = c.tau2d_lo(s, t, j);
        err = err.max((lo * lo - v).abs());
    }
    ensure(err <= 0.1, format!("max error {err:.4}"))?;
    Ok(format!("max |lo^2 - oracle| = {err:.4} over {} causal pairs", oracle.len()))
}

fn random_point(rng: &mut ChaCha8Rng, c: &GeneralizedCone) -> GridPoint {
    GridPoint::new(rng.gen_range(0..c.nt()), rng.gen_range(0..c.fiber().n()))
}

fn c3_reverse_triangle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = f64::INFINITY;
    for spec in [strip_spec(), milne_spec(), sin_arc_spec()] {
        let c = cone(spec);
        let mut found = 0;
        while found < 10_000 {
            let mut pts = [random_point(&mut rng, &c), random_point(&mut rng, &c), random_point(&mut rng, &c)];
            pts.sort_by_key(|p| p.t);
            let [x, y, z] = pts;
            let (a, b) = (c.signed_separation(x, y), c.signed_separation(y, z));
            if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                continue;
            }
            found += 1;
            worst = worst.min(c.signed_separation(x, z) - a - b);
        }
    }
    ensure(worst >= -1e-9, format!("slack {worst:e}"))?;
    Ok(format!("3 x 10^4 causal triples, min slack {worst:e}"))
}

fn c4_warping_monotonicity() -> Outcome {
    let mut pairs = 0usize;
    for spec in [strip_spec(), milne_spec()] {
        let mut scaled = spec.clone();
        scaled.warp = spec.warp.scale_values(0.8);
        let (f, g) = (cone(spec), cone(scaled));
        for (i, (lf, lg)) in f.tables().lo.iter().zip(&g.tables().lo).enumerate() {
            ensure(lg >= lf, format!("entry {i}: l_g = {lg} < l_f = {lf}"))?;
            pairs += 1;
        }
    }
    Ok(format!("l_g >= l_f and causal sets nest on {pairs} table entries"))
}

fn c5_scaling() -> Outcome {
    let a = cone(strip_spec()).scaling_isomorphism_check(2.0).unwrap();
    let b = cone(milne_spec()).scaling_isomorphism_check(2.0).unwrap();
    ensure(a <= 1e-12 && b <= 1e-12, format!("deviation {a:e} / {b:e}"))?;
    Ok(format!("lambda = 2 deviation {a:e} (strip), {b:e} (cone)"))
}

fn c6_transport() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let masses = |rng: &mut ChaCha8Rng, n: usize| {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for _ in 0..20 {
        let (mu, nu) = (masses(&mut rng, 4), masses(&mut rng, 4));
        let cost: Vec<Option<f64>> =
            (0..16).map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0.0..2.0)) }).collect();
        let oracle = common::transport_by_vertices(&mu, &nu, &cost);
        let lp = simplex::transport(&mu, &nu, &cost).map(|(_, v)| v);
        match (oracle, lp) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => infeasible += 1,
            (a, b) => return Err(format!("feasibility disagrees: oracle {a:?}, lp {b:?}")),
        }
    }
    for _ in 0..10 {
        let cost: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..2.0)).collect();
        let u = vec![0.2; 5];
        let cells: Vec<Option<f64>> = cost.iter().map(|&c| Some(c)).collect();
        let (_, v) = simplex::transport(&u, &u, &cells).ok_or("uniform instance infeasible")?;
        worst = worst.max((v - common::best_permutation(5, &cost)).abs());
    }
    ensure(worst <= 1e-8, format!("max gap {worst:e}"))?;
    Ok(format!("max gap {worst:e} over 30 instances ({infeasible} infeasible agreed)"))
}

fn c7_distortion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (n, t, theta) = (rng.gen_range(1.0..10.0), rng.gen(), rng.gen_range(0.0..5.0));
        ensure(sigma(0.0, n, t, theta) == t, format!("sigma_0 at t = {t}, theta = {theta}"))?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (k, n, t): (f64, f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(1.0..10.0), rng.gen());
        let cap = if k > 0.0 { 0.9 * PI / (k / n).sqrt() } else { 3.0 };
        let theta = rng.gen_range(0.01..cap);
        worst = worst.max((sigma(k, n, t, theta) - common::sigma_ode(k, n, t, theta)).abs());
    }
    ensure(worst <= 1e-6, format!("ode gap {worst:e}"))?;
    for k in [0.5, 1.0, 3.0] {
        ensure(tau_modified(k, 1.0, 0.4, 0.7) == f64::INFINITY, "tau_{K,1} finite for K > 0")?;
        ensure(tau_modified(k, 1.0, 0.4, 0.0) == 0.0, "tau_{K,1}(0) != 0")?;
    }
    Ok(format!("sigma_0 = t exactly, ODE gap {worst:e}, tau_(K,1) = theta * inf"))
}

fn c8_tcd() -> Outcome {
    let start = Instant::now();
    let c = cone(strip_spec());
    let mu0 = truncated_bump(&c, GridPoint::new(50, 40), 1, 3).unwrap();
    let mu1 = truncated_bump(&c, GridPoint::new(150, 60), 1, 2).unwrap();
    ensure(mu0.atoms().len() == 9 && mu1.atoms().len() == 9, "bumps must have 9 atoms")?;
    let r = tcd_verify(&c, &mu0, &mu1, 0.5, 0.0, 2.0, Flavor::Entropic, &VerifyOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure(r.slots.len() == 7, "expected slots t = 1/8 .. 7/8")?;
    ensure(r.min_margin >= -0.05, format!("min margin {:.4}", r.min_margin))?;
    ensure(secs <= 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("min margin {:e}, bracket width {:.4}, {secs:.1} s", r.min_margin, r.max_bracket_width))
}

fn c9_tmcp() -> Outcome {
    let opts = VerifyOptions::default();
    let c = cone(strip_spec());
    let mu = truncated_bump(&c, GridPoint::new(40, 50), 2, 2).unwrap();
    let flat = tmcp_verify(&c, &mu, GridPoint::new(170, 50), 0.0, 2.0, &opts).unwrap();
    let c = cone(sin_arc_spec());
    let mu = truncated_bump(&c, GridPoint::new(60, 20), 2, 2).unwrap();
    // TMCP(N K, N + 1) for K = 1, N = 2
    let curved = tmcp_verify(&c, &mu, GridPoint::new(140, 20), 2.0, 3.0, &opts).unwrap();
    for (name, r) in [("flat", &flat), ("sin", &curved)] {
        ensure(r.verdict != Verdict::Fail, format!("{name}: FAIL with min margin {:.4}", r.min_margin))?;
        ensure(
            r.min_margin >= -0.05 || r.verdict == Verdict::Inconclusive,
            format!("{name}: min margin {:.4}", r.min_margin),
        )?;
    }
    Ok(format!(
        "flat min margin {:.4} ({:?}), sin TMCP(2,3) min margin {:.4} ({:?}), widths {:.3}/{:.3}",
        flat.min_margin, flat.verdict, curved.min_margin, curved.verdict, flat.max_bracket_width, curved.max_bracket_width
    ))
}

fn c10_tcbb() -> Outcome {
    let strip = cone(strip_spec());
    let a = tcbb_verify(&strip, 0.0, 500, 0.02, 7).unwrap();
    let again = tcbb_verify(&strip, 0.0, 500, 0.02, 7).unwrap();
    ensure(a == again, "strip report not seed-deterministic")?;
    ensure(a.valid == 500, format!("only {} valid configurations", a.valid))?;
    ensure(a.verdict == Verdict::Pass, format!("strip worst margin {:.4}", a.worst_margin))?;
    let b = tcbb_verify(&cone(cos_arc_spec()), -1.0, 500, 0.02, 7).unwrap();
    ensure(b.verdict == Verdict::Pass, format!("cos arc worst margin {:.4}", b.worst_margin))?;
    // z1 = (1.5, 0) and z2 = (3, 0) in the model, but tau(z1, z2) is claimed 0
    let bad = FourPointConfig::future(1.0, [1.5, 3.0], [0.5, 2.0], 0.0);
    let good = FourPointConfig::future(1.0, [1.5, 3.0], [0.5, 2.0], 1.5);
    let (m, v) = tcbb_verify_configs(&[good, bad], 0.0, 0.02).unwrap();
    ensure(v == Verdict::Fail, format!("injected violation not flagged (margin {m})"))?;
    Ok(format!(
        "strip K=0 worst {:.4}, cos arc K=-1 worst {:.4}, injected margin {m:.2} flagged FAIL",
        a.worst_margin, b.worst_margin
    ))
}

fn c11_ell_convergence() -> Outcome {
    let fiber = FiniteMetricSpace::segment(1.0, 21).unwrap();
    let mk = |f: &dyn Fn(f64) -> f64| cone(ConeSpec::new(WarpingFunction::sample(-1.4, 1.4, 101, f).unwrap(), fiber.clone(), 100, 50));
    let cones: Vec<GeneralizedCone> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|&i| mk(&|t: f64| t.cos().powf(1.0 / i))).collect();
    let seq = ConeSequence::new(cones, mk(&|_| 1.0), 0.0, 2).unwrap();
    let schedule: Vec<ScheduleEntry> =
        [1, 2, 4, 8].iter().map(|&l| ScheduleEntry { k: 2, l, eps: None, delta: None }).collect();
    let r = ell_converge_check(&seq, &schedule).unwrap();
    let row: Vec<_> = r.moduli.iter().filter(|m| m.l == 8).collect();
    ensure(row.len() == 5, "missing moduli at l = 8")?;
    let e1: Vec<f64> = row.iter().map(|m| m.eps1).collect();
    let e2: Vec<f64> = row.iter().map(|m| m.eps2).collect();
    let desc = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    ensure(desc(&e1) && desc(&e2), format!("not strictly decreasing: eps1 [{}], eps2 [{}]", fmt(&e1), fmt(&e2)))?;
    ensure(e1[4] <= 0.2 && e2[4] <= 0.2, format!("at i = 16: eps1 {:.3}, eps2 {:.3}", e1[4], e2[4]))?;
    let applies: Vec<_> = r.moduli.iter().filter(|m| m.remark_applies).collect();
    let broken_a: Vec<String> = applies.iter().filter(|m| !m.inclusion_a).map(|m| format!("(i={}, l={})", m.i, m.l)).collect();
    let broken_b = applies.iter().filter(|m| !m.inclusion_b).count();
    let shifted = applies.iter().all(|m| m.inclusion_a_shifted);
    ensure(
        broken_a.is_empty() && broken_b == 0,
        format!(
            "eps1 [{}], eps2 [{}]; inclusion A fails at {} of {} applicable entries {}, inclusion B fails at {broken_b}, shifted A holds: {shifted}",
            fmt(&e1),
            fmt(&e2),
            broken_a.len(),
            applies.len(),
            broken_a.join(" ")
        ),
    )?;
    Ok(format!("eps1 [{}], eps2 [{}], inclusions hold on {} entries", fmt(&e1), fmt(&e2), applies.len()))
}

fn sin_profile(a: f64, shift: f64) -> GeneralizedCone {
    let w = WarpingFunction::sample(0.0, PI, 61, |t| a * t.sin() + shift).unwrap();
    cone(ConeSpec::new(w, FiniteMetricSpace::segment(1.0, 21).unwrap(), 60, 40))
}

fn c12_precompact() -> Outcome {
    let mut cones: Vec<GeneralizedCone> = (0..5).map(|j| sin_profile(1.0 + 0.5 * j as f64, 0.0)).collect();
    let r = precompact_harness(&cones, 1.0, 2.0, PI, 0.05, 2).unwrap();
    ensure(r.profiles.iter().all(|p| p.slope_bound_ok), "slope bound rejected a profile")?;
    ensure(r.verdict == Verdict::Pass, format!("harness verdict {:?}: {:?}", r.verdict, r.ell.reasons))?;
    cones.push(sin_profile(1.0, 0.1));
    match precompact_harness(&cones, 1.0, 2.0, PI, 0.05, 2) {
        Err(Error::NotFkConcave { index, t, violation }) => {
            ensure(index == 5, format!("rejected index {index}"))?;
            Ok(format!("5 profiles PASS; profile 5 rejected at t = {t:.4}, violation {violation:.4}"))
        }
        other => Err(format!("non-FK-concave profile not rejected: {:?}", other.map(|r| r.verdict))),
    }
}

fn c13_tangent() -> Outcome {
    let c = cone(milne_spec());
    let eps = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
    let r = tangent_cone(&c, GridPoint::new(50, 50), &eps).unwrap();
    for e in &r.entries {
        ensure(
            e.f_deviation.iter().all(|&d| d <= 2.0 * e.eps + 1e-12),
            format!("eps {}: deviations {:?}", e.eps, e.f_deviation),
        )?;
    }
    ensure(r.verdict == Verdict::Pass, format!("verdict {:?}: {:?}", r.verdict, r.ell.reasons))?;
    let worst = r.entries.iter().map(|e| e.f_deviation.iter().cloned().fold(0.0, f64::max) / e.eps).fold(0.0, f64::max);
    Ok(format!("t0 = {}, max deviation / eps = {worst:.3}, verdict PASS", r.t0))
}

fn c14_reductions() -> Outcome {
    let sin = WarpingFunction::sample(0.0, PI, 401, f64::sin).unwrap();
    ensure(ricci_reduction(&sin, 1.0, 2, 1.0).unwrap().verdict, "sin Ricci example")?;
    let cos = WarpingFunction::sample(-PI / 2.0, PI / 2.0, 401, f64::cos).unwrap();
    ensure(sectional_reduction(&cos, 1.0, -1.0).unwrap().verdict, "cos sectional example")?;
    let lin = WarpingFunction::sample(0.0, 1.0, 51, |t| 1.0 + 0.5 * t).unwrap();
    ensure(sectional_reduction(&lin, 0.0, 0.0).unwrap().verdict, "linear sectional example")?;
    let bumped = WarpingFunction::sample(0.0, PI, 401, |t| t.sin() + 0.1).unwrap();
    let r = ricci_reduction(&bumped, 1.0, 2, 1.0).unwrap();
    ensure(!r.cond1 && !r.verdict, "sin + 0.1 should fail FK-concavity")?;
    let w = monotonicity_witness(&sin, 1.0, 0.0, -1.0).unwrap();
    ensure(w.at_k.verdict && !w.at_k_prime.verdict, "witness should pass at K = 1 and fail at K' = 0")?;
    Ok(format!("examples reproduced; witness K_f = {:.3} passes at K = 1, fails at K' = 0", w.at_k_prime.kf))
}

fn two(gap: f64) -> FiniteMetricSpace {
    FiniteMetricSpace::new(2, 0, vec![0.0, gap, gap, 0.0]).unwrap()
}

fn c15_gh() -> Outcome {
    let a = FiniteMetricSpace::segment(3.0, 4).unwrap();
    let g = gh_distance(&a, &a, GhMode::Exact).unwrap();
    ensure(g.lower == 0.0 && g.upper == 0.0, "d(A, A) != 0")?;
    let g = gh_distance(&two(1.0), &two(3.0), GhMode::Exact).unwrap();
    ensure((g.lower - 1.0).abs() < 1e-12 && (g.upper - 1.0).abs() < 1e-12, "gap 1 vs gap 3")?;
    let g = gh_distance(&FiniteMetricSpace::point(), &two(2.0), GhMode::Exact).unwrap();
    ensure((g.lower - 1.0).abs() < 1e-12 && (g.upper - 1.0).abs() < 1e-12, "point vs gap 2")?;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (na, nb) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (x, y) = (common::random_space(&mut rng, na), common::random_space(&mut rng, nb));
        let (u, v) = (gh_distance(&x, &y, GhMode::Exact).unwrap(), gh_distance(&y, &x, GhMode::Exact).unwrap());
        worst = worst.max((u.upper - v.upper).abs()).max((u.lower - v.lower).abs());
    }
    ensure(worst <= 1e-12, format!("asymmetry {worst:e}"))?;
    Ok(format!("three examples exact; max asymmetry {worst:e} over 50 pairs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("strip oracle", c1_strip_oracle),
        ("Minkowski cone oracle", c2_milne_oracle),
        ("reverse triangle inequality", c3_reverse_triangle),
        ("warping monotonicity", c4_warping_monotonicity),
        ("scaling isomorphism", c5_scaling),
        ("transport oracle", c6_transport),
        ("distortion coefficients", c7_distortion),
        ("TCD on the flat strip", c8_tcd),
        ("TMCP flat and sin", c9_tmcp),
        ("TCBB", c10_tcbb),
        ("uniform l-convergence", c11_ell_convergence),
        ("precompactness harness", c12_precompact),
        ("tangent cone", c13_tangent),
        ("Ricci and sectional reductions", c14_reductions),
        ("GH exact oracle", c15_gh),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let n = n + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
