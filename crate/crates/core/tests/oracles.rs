mod common;

use conelab::cone::{ConeSpec, GeneralizedCone, GridPoint};
use conelab::converge::{covered_gh, ConeSequence};
use conelab::lorot::{solve_lp, DiscreteMeasure};
use conelab::metricspace::{gh_distance, FiniteMetricSpace, GhMode};
use conelab::model2d::{realize_comparison, FourPointConfig};
use conelab::simplex;
use conelab::warp::WarpingFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn milne(n: usize) -> GeneralizedCone {
    let w = WarpingFunction::sample(0.5, 2.0, n + 1, |t| t).unwrap();
    GeneralizedCone::new(ConeSpec::new(w, FiniteMetricSpace::segment(1.0, 21).unwrap(), n, 20)).unwrap()
}

#[test]
fn gh_exact_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let na = rng.gen_range(1..=4);
        let nb = rng.gen_range(1..=16 / na).min(4);
        let (a, b) = (common::random_space(&mut rng, na), common::random_space(&mut rng, nb));
        let exact = gh_distance(&a, &b, GhMode::Exact).unwrap();
        let oracle = common::gh_brute_force(&a, &b);
        assert!((exact.upper - oracle).abs() < 1e-12 && exact.lower == exact.upper, "{exact:?} vs {oracle}");
        let h = gh_distance(&a, &b, GhMode::Heuristic).unwrap();
        assert!(h.lower <= oracle + 1e-12 && oracle <= h.upper + 1e-12);
    }
}

#[test]
fn rectangular_transport_matches_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (m, n) in [(3, 5), (5, 3), (2, 6), (1, 4)] {
        for _ in 0..5 {
            let norm = |v: Vec<f64>| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let mu = norm((0..m).map(|_| rng.gen_range(0.1..1.0)).collect());
            let nu = norm((0..n).map(|_| rng.gen_range(0.1..1.0)).collect());
            let cost: Vec<Option<f64>> =
                (0..m * n).map(|_| if rng.gen_bool(0.15) { None } else { Some(rng.gen_range(-1.0..1.0)) }).collect();
            let lp = simplex::transport(&mu, &nu, &cost).map(|r| r.1);
            let oracle = common::transport_by_vertices(&mu, &nu, &cost);
            match (lp, oracle) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-8, "{a} vs {b}"),
                (None, None) => {}
                other => panic!("feasibility disagrees: {other:?}"),
            }
        }
    }
}

#[test]
fn causal_lp_on_the_strip_matches_vertices() {
    let c = GeneralizedCone::new(ConeSpec::minkowski_strip(2.0, 1.0, 41, 80, 40).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut solved = 0;
    for _ in 0..20 {
        let src: Vec<GridPoint> = (0..3).map(|_| GridPoint::new(rng.gen_range(0..25), rng.gen_range(0..41))).collect();
        let dst: Vec<GridPoint> = (0..4).map(|_| GridPoint::new(rng.gen_range(55..81), rng.gen_range(0..41))).collect();
        let (Ok(mu0), Ok(mu1)) = (DiscreteMeasure::uniform(&src), DiscreteMeasure::uniform(&dst)) else { continue };
        let (mu, nu) = (mu0.masses(), mu1.masses());
        let (ps, pt) = (mu0.points(), mu1.points());
        let cost: Vec<Option<f64>> = ps
            .iter()
            .flat_map(|&s| pt.iter().map(move |&t| (s, t)))
            .map(|(s, t)| {
                let l = c.signed_separation(s, t);
                (l >= 0.0).then(|| l.powf(0.5))
            })
            .collect();
        let oracle = common::transport_by_vertices(&mu, &nu, &cost);
        match (solve_lp(&c, &mu0, &mu1, 0.5), oracle) {
            (Ok(pi), Some(v)) => {
                assert!((pi.p_value - v).abs() < 1e-8);
                solved += 1;
            }
            (Err(e), None) => assert_eq!(e.code(), "NOT_CAUSALLY_COUPLABLE"),
            (r, o) => panic!("disagreement: {:?} vs {o:?}", r.map(|p| p.p_value)),
        }
    }
    assert!(solved > 5);
}

#[test]
fn milne_geodesic_closed_form() {
    let f = WarpingFunction::sample(0.5, 2.0, 16, |t| t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    while checked < 200 {
        let (s, t, d) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.0..1.2));
        let Some(v) = common::milne_tau2(s, t, d) else { continue };
        assert!((f.geodesic_tau(s, t, d) - v.sqrt()).abs() < 1e-9, "s {s} t {t} d {d}");
        checked += 1;
    }
}

#[test]
fn radial_lines_are_maximal() {
    let c = milne(60);
    let g = c.maximizer(GridPoint::new(5, 7), GridPoint::new(50, 7)).unwrap();
    assert!((g.tau_length - (c.time(50) - c.time(5))).abs() < 1e-12);
}

/// Doubling the grid together with the move window keeps every coarse move
/// available, so the lower table can only rise and the upper only fall.
#[test]
fn brackets_tighten_under_refinement() {
    let strip = |n: usize| ConeSpec::minkowski_strip(1.0, 1.0, 41, n, n).unwrap();
    let milne = |n: usize| {
        let w = WarpingFunction::sample(0.5, 2.0, n + 1, |t| t).unwrap();
        ConeSpec::new(w, FiniteMetricSpace::segment(1.0, 21).unwrap(), n, 20)
    };
    for (coarse, fine) in [(strip(20), strip(40)), (milne(20), milne(40))] {
        let w = coarse.window;
        let coarse = GeneralizedCone::new(coarse).unwrap();
        let fine = GeneralizedCone::new(fine.with_window(2 * w)).unwrap();
        let (rj, rt) = (fine.nr() / coarse.nr(), (fine.nt() - 1) / (coarse.nt() - 1));
        for s in 0..coarse.nt() {
            for t in s..coarse.nt() {
                for j in 0..=coarse.nr() {
                    let (lo, hi) = (coarse.tau2d_lo(s, t, j), coarse.tau2d_hi(s, t, j));
                    let (flo, fhi) = (fine.tau2d_lo(s * rt, t * rt, j * rj), fine.tau2d_hi(s * rt, t * rt, j * rj));
                    assert!(lo <= flo + 1e-12, "lo at ({s}, {t}, {j}): {lo} > {flo}");
                    assert!(hi >= fhi - 1e-12, "hi at ({s}, {t}, {j}): {hi} < {fhi}");
                }
            }
        }
    }
}

#[test]
fn comparison_reproduces_minkowski_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tau = |a: (f64, f64), b: (f64, f64)| {
        let (dt, dx) = (b.0 - a.0, b.1 - a.1);
        (dt >= dx.abs()).then(|| (dt * dt - dx * dx).sqrt())
    };
    let mut checked = 0;
    while checked < 100 {
        let c = rng.gen_range(0.2..1.0);
        let z1 = (c + rng.gen_range(0.1..2.0), rng.gen_range(0.0..0.8));
        let z2 = (c + rng.gen_range(0.1..2.0), -rng.gen_range(0.0..0.8));
        let (y, x) = ((0.0, 0.0), (c, 0.0));
        let (Some(a1), Some(a2), Some(b1), Some(b2)) = (tau(y, z1), tau(y, z2), tau(x, z1), tau(x, z2)) else { continue };
        let truth = tau(z1, z2).unwrap_or(0.0);
        let cfg = FourPointConfig::future(c, [a1, a2], [b1, b2], truth);
        let cmp = realize_comparison(&cfg, 0.0).unwrap();
        assert!(cmp.residual <= 1e-8);
        assert!((cmp.tau_bar() - truth).abs() < 1e-8, "{} vs {truth}", cmp.tau_bar());
        checked += 1;
    }
}

#[test]
fn covered_gh_of_stretched_fibers() {
    let cone = |len: f64| {
        GeneralizedCone::new(ConeSpec::minkowski_strip(1.0, len, 21, 20, 20).unwrap()).unwrap()
    };
    let cones: Vec<GeneralizedCone> = (1..=4).map(|i| cone(1.0 + 1.0 / i as f64)).collect();
    let seq = ConeSequence::new(cones, cone(1.0), 0.5, 1).unwrap();
    for g in covered_gh(&seq, 1).unwrap() {
        let i = (g.i + 1) as f64;
        assert!(g.lower <= g.upper);
        assert!(g.upper <= 0.5 / i + 1e-12, "i = {i}: upper {}", g.upper);
        // endpoints of the fibers alone already force half the length gap
        let ends = |l: f64| FiniteMetricSpace::segment(l, 2).unwrap();
        let lb = gh_distance(&ends(1.0 + 1.0 / i), &ends(1.0), GhMode::Exact).unwrap().lower;
        assert!((lb - 0.5 / i).abs() < 1e-12);
    }
}
