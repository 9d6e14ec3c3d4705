//! Convergence harnesses for sequences of cones: covered GH brackets,
//! moduli of uniform convergence of `l`, measured convergence, the
//! precompactness extraction and tangent cones.
//!
//! The ambient space `Z^k` of each cover level is realized through a
//! correspondence `phi` between the cover of cone `i` and the cover of the
//! limit: a monotone rescaling of time rows times a fiber correspondence.
//! Neighbourhoods `d^Z(x_i, x) <= delta` are read as `d(phi(x_i), x) <= delta`
//! in the limit metric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeCover, ConeSpec, CoverLevel, GeneralizedCone, GridPoint};
use crate::metricspace::{distortion, gh_heuristic, gh_lower_bound_values, FiniteMetricSpace};
use crate::simplex;
use crate::warp::{pi_k, WarpingFunction};
use crate::{Error, Result, Verdict};

/// Endpoints per side used for the moduli; neighbourhoods use the full cover.
const MAX_SAMPLE: usize = 144;
const MAX_CENTERS: usize = 64;
/// Larger neighbourhoods are thinned evenly by distance, keeping the closest.
const MAX_NEIGHBOURS: usize = 64;
pub const DEFAULT_LEVELS: [usize; 4] = [1, 2, 4, 8];

pub struct ConeSequence {
    pub cones: Vec<GeneralizedCone>,
    pub limit: GeneralizedCone,
    pub covers: Vec<ConeCover>,
    pub limit_cover: ConeCover,
    pub depth: usize,
}

impl ConeSequence {
    /// Covers of depth `depth` centred at time `center` on every cone.
    pub fn new(cones: Vec<GeneralizedCone>, limit: GeneralizedCone, center: f64, depth: usize) -> Result<Self> {
        if cones.is_empty() {
            return Err(Error::InvalidInput("sequence needs at least one cone".into()));
        }
        if depth == 0 {
            return Err(Error::InvalidInput("cover depth must be at least 1".into()));
        }
        let covers = cones.iter().map(|c| ConeCover::new(c, center, depth)).collect();
        let limit_cover = ConeCover::new(&limit, center, depth);
        Ok(ConeSequence { cones, limit, covers, limit_cover, depth })
    }

    pub fn len(&self) -> usize {
        self.cones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cones.is_empty()
    }

    fn level(&self, i: usize, k: usize) -> Result<(&CoverLevel, &CoverLevel)> {
        if i >= self.cones.len() || k == 0 || k > self.depth {
            return Err(Error::InvalidInput(format!("no cover level (i = {i}, k = {k})")));
        }
        Ok((&self.covers[i].levels[k - 1], &self.limit_cover.levels[k - 1]))
    }

    /// Correspondence between `U^k_i` and `U^k_inf`.
    pub fn cover_match(&self, i: usize, k: usize) -> Result<CoverMatch> {
        let (li, ll) = self.level(i, k)?;
        Ok(CoverMatch::build(&self.cones[i], li, &self.limit, ll))
    }
}

/// Product correspondence between two cover sets.
#[derive(Debug, Clone)]
pub struct CoverMatch {
    pub points: Vec<GridPoint>,
    /// `phi(points[j])` in the limit cover.
    pub images: Vec<GridPoint>,
    pub limit_points: Vec<GridPoint>,
    /// `psi(limit_points[j])` in the cover of cone `i`.
    pub preimages: Vec<GridPoint>,
    pub distortion: f64,
    /// Largest distance between neighbouring limit grid points.
    pub grid_step: f64,
}

impl CoverMatch {
    fn build(ci: &GeneralizedCone, li: &CoverLevel, cl: &GeneralizedCone, ll: &CoverLevel) -> Self {
        let (ri, rl): (Vec<usize>, Vec<usize>) = ((li.t_lo..=li.t_hi).collect(), (ll.t_lo..=ll.t_hi).collect());
        let row_map = |from: &GeneralizedCone, fr: &[usize], to: &GeneralizedCone, tr: &[usize]| -> Vec<usize> {
            let (f0, f1) = (from.time(fr[0]), from.time(*fr.last().unwrap()));
            let (t0, t1) = (to.time(tr[0]), to.time(*tr.last().unwrap()));
            fr.iter()
                .map(|&r| {
                    let s = if f1 > f0 { (from.time(r) - f0) / (f1 - f0) } else { 0.0 };
                    let target = t0 + s * (t1 - t0);
                    *tr.iter().min_by(|&&a, &&b| (to.time(a) - target).abs().total_cmp(&(to.time(b) - target).abs())).unwrap()
                })
                .collect()
        };
        let fwd_rows = row_map(ci, &ri, cl, &rl);
        let back_rows = row_map(cl, &rl, ci, &ri);
        let (fi, fl) = (ball(ci.fiber(), &li.fiber_idx), ball(cl.fiber(), &ll.fiber_idx));
        let pairs = fiber_pairs(&fi, &fl);
        let mut fwd_fib = vec![usize::MAX; fi.n()];
        let mut back_fib = vec![usize::MAX; fl.n()];
        for &(a, b) in &pairs {
            if fwd_fib[a] == usize::MAX {
                fwd_fib[a] = b;
            }
            if back_fib[b] == usize::MAX {
                back_fib[b] = a;
            }
        }
        let mut points = Vec::new();
        let mut images = Vec::new();
        for (r, &rr) in ri.iter().zip(&fwd_rows) {
            for (a, &x) in li.fiber_idx.iter().enumerate() {
                points.push(GridPoint::new(*r, x));
                images.push(GridPoint::new(rr, ll.fiber_idx[fwd_fib[a]]));
            }
        }
        let mut limit_points = Vec::new();
        let mut preimages = Vec::new();
        for (r, &rr) in rl.iter().zip(&back_rows) {
            for (b, &y) in ll.fiber_idx.iter().enumerate() {
                limit_points.push(GridPoint::new(*r, y));
                preimages.push(GridPoint::new(rr, li.fiber_idx[back_fib[b]]));
            }
        }
        // distortion over the whole correspondence
        let mut rel: Vec<(GridPoint, GridPoint)> = points.iter().copied().zip(images.iter().copied()).collect();
        rel.extend(preimages.iter().copied().zip(limit_points.iter().copied()));
        rel.sort_by_key(|(p, q)| (p.t, p.x, q.t, q.x));
        rel.dedup();
        let distortion = (0..rel.len())
            .into_par_iter()
            .map(|a| {
                let mut w: f64 = 0.0;
                for b in a + 1..rel.len() {
                    w = w.max((ci.d(rel[a].0, rel[b].0) - cl.d(rel[a].1, rel[b].1)).abs());
                }
                w
            })
            .reduce(|| 0.0, f64::max);
        let fmax = rl.iter().map(|&r| cl.f_at(r)).fold(0.0, f64::max);
        let gap = (0..fl.n())
            .map(|a| (0..fl.n()).filter(|&b| b != a).map(|b| fl.d(a, b)).fold(f64::INFINITY, f64::min))
            .filter(|g| g.is_finite())
            .fold(0.0, f64::max);
        let dt = if rl.len() > 1 { cl.dt() } else { 0.0 };
        CoverMatch { points, images, limit_points, preimages, distortion, grid_step: dt.max(fmax * gap) }
    }

    /// Half the distortion bounds the GH distance of the two covers.
    pub fn gh_upper(&self) -> f64 {
        0.5 * self.distortion
    }
}

fn ball(fiber: &FiniteMetricSpace, idx: &[usize]) -> FiniteMetricSpace {
    fiber.subspace(idx, fiber.base())
}

/// Fiber correspondence: the index identity when sizes agree and it beats
/// the heuristic witness, otherwise the heuristic witness.
fn fiber_pairs(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> Vec<(usize, usize)> {
    let h = gh_heuristic(a, b).witness;
    if a.n() == b.n() {
        let id: Vec<(usize, usize)> = (0..a.n()).map(|j| (j, j)).collect();
        if distortion(a, b, &id) <= h.distortion {
            return id;
        }
    }
    h.pairs
}

fn strided(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let step = n.div_ceil(cap);
    (0..n).step_by(step).collect()
}

/// Sample of a cover's points on a product lattice of rows and fiber points.
fn lattice_sample(points: &[GridPoint], cap: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = points.iter().map(|p| p.t).collect();
    rows.dedup();
    let per_row = points.len() / rows.len().max(1);
    let side = (cap as f64).sqrt().floor().max(1.0) as usize;
    let keep_rows: Vec<usize> = strided(rows.len(), side).into_iter().map(|r| rows[r]).collect();
    let keep_cols = strided(per_row, side);
    points
        .iter()
        .enumerate()
        .filter(|(j, p)| keep_rows.binary_search(&p.t).is_ok() && keep_cols.binary_search(&(j % per_row)).is_ok())
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GhEntry {
    pub i: usize,
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
}

/// GH brackets between `U^k_i` and `U^k_inf` for every `i`.
pub fn covered_gh(seq: &ConeSequence, k: usize) -> Result<Vec<GhEntry>> {
    (0..seq.len())
        .map(|i| {
            let m = seq.cover_match(i, k)?;
            let lower = cover_gh_lower(&seq.cones[i], &m.points, &seq.limit, &m.limit_points);
            Ok(GhEntry { i, k, lower, upper: m.gh_upper().max(lower) })
        })
        .collect()
}

fn cover_gh_lower(ci: &GeneralizedCone, pi: &[GridPoint], cl: &GeneralizedCone, pl: &[GridPoint]) -> f64 {
    let values = |c: &GeneralizedCone, p: &[GridPoint]| -> Vec<f64> {
        (0..p.len()).flat_map(|a| (a + 1..p.len()).map(move |b| (a, b))).map(|(a, b)| c.d(p[a], p[b])).collect()
    };
    gh_lower_bound_values(values(ci, pi), values(cl, pl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceModulus {
    pub i: usize,
    pub k: usize,
    pub l: usize,
    pub delta: f64,
    /// Level used for the inclusion checks.
    pub eps: f64,
    #[serde(with = "crate::extf64")]
    pub eps1: f64,
    #[serde(with = "crate::extf64")]
    pub eps2: f64,
    /// `{l_i >= 1/l - eps} subset B_delta({l >= 1/l})`.
    pub inclusion_a: bool,
    /// `B_delta({l >= 1/l}) cap U_i subset {l_i >= 1/(2l)}`.
    pub inclusion_b: bool,
    pub inclusion_ok: bool,
    /// `eps < 1/(2l)`, the range in which the inclusions are claimed.
    pub remark_applies: bool,
    /// `{l_i >= 1/l + eps} subset B_delta({l >= 1/l})`, which property (1)
    /// does imply.
    pub inclusion_a_shifted: bool,
    pub bracket_width: f64,
    pub distortion: f64,
    pub grid_step: f64,
    pub level_set_size: usize,
}

/// Neighbours of `center` among `pool` (through `img`) within `delta`,
/// sorted by distance.
fn neighbours(
    cl: &GeneralizedCone,
    center: GridPoint,
    pool: &[GridPoint],
    img: impl Fn(usize) -> GridPoint,
    delta: f64,
) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = (0..pool.len())
        .filter_map(|j| {
            let r = cl.d(img(j), center);
            (r <= delta + 1e-12).then_some((r, j))
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    if out.len() > MAX_NEIGHBOURS {
        let keep = strided(out.len(), MAX_NEIGHBOURS);
        out = keep.into_iter().map(|j| out[j]).collect();
    }
    out
}

/// `min f(p, q)` over neighbour pairs with `r_p + r_q <= delta`; `None` if
/// there is no such pair.
fn min_over(na: &[(f64, usize)], nb: &[(f64, usize)], delta: f64, f: impl Fn(usize, usize) -> f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &(ra, a) in na {
        for &(rb, b) in nb {
            if ra + rb > delta + 1e-12 {
                break;
            }
            let v = f(a, b);
            best = Some(best.map_or(v, |x: f64| x.min(v)));
        }
    }
    best
}

fn any_over(na: &[(f64, usize)], nb: &[(f64, usize)], delta: f64, f: impl Fn(usize, usize) -> bool) -> bool {
    for &(ra, a) in na {
        for &(rb, b) in nb {
            if ra + rb > delta + 1e-12 {
                break;
            }
            if f(a, b) {
                return true;
            }
        }
    }
    false
}

/// Moduli of the two uniform-convergence properties on cover level `k` at
/// level set `{l >= 1/l}`. Neighbour values enter as `tau = max(l, 0)`, so a
/// non-causal neighbour counts as separation 0 rather than `-inf`. `delta`
/// defaults to the correspondence distortion, `eps` (the inclusion level) to
/// `max(eps1, eps2)`.
pub fn uniform_modulus(
    seq: &ConeSequence,
    i: usize,
    k: usize,
    l: usize,
    delta: Option<f64>,
    eps: Option<f64>,
) -> Result<ConvergenceModulus> {
    if l == 0 {
        return Err(Error::InvalidInput("level l must be at least 1".into()));
    }
    let m = seq.cover_match(i, k)?;
    modulus_on(&seq.cones[i], &seq.limit, &m, i, k, l, delta, eps)
}

#[allow(clippy::too_many_arguments)]
fn modulus_on(
    ci: &GeneralizedCone,
    cl: &GeneralizedCone,
    m: &CoverMatch,
    i: usize,
    k: usize,
    l: usize,
    delta: Option<f64>,
    eps: Option<f64>,
) -> Result<ConvergenceModulus> {
    let delta = delta.unwrap_or(m.distortion);
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput("delta must be nonnegative".into()));
    }
    let level = 1.0 / l as f64;
    let si = lattice_sample(&m.points, MAX_SAMPLE);
    let sl = lattice_sample(&m.limit_points, MAX_SAMPLE);
    let tau_l = |x: GridPoint, y: GridPoint| cl.signed_separation(x, y).max(0.0);
    let tau_i = |x: GridPoint, y: GridPoint| ci.signed_separation(x, y).max(0.0);

    // property (1): cone i pairs against limit neighbours of their images
    let n1: Vec<Vec<(f64, usize)>> = si
        .par_iter()
        .map(|&a| neighbours(cl, m.images[a], &m.limit_points, |j| m.limit_points[j], delta))
        .collect();
    let eps1 = (0..si.len())
        .into_par_iter()
        .map(|a| {
            let mut w = f64::NEG_INFINITY;
            for b in 0..si.len() {
                let li = ci.signed_separation(m.points[si[a]], m.points[si[b]]);
                if li < 0.0 {
                    continue;
                }
                if let Some(v) = min_over(&n1[a], &n1[b], delta, |x, y| tau_l(m.limit_points[x], m.limit_points[y])) {
                    w = w.max(li - v);
                }
            }
            w
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
        .max(0.0);

    // property (2): limit pairs in the level set against cone i pairs mapped near them
    let n2: Vec<Vec<(f64, usize)>> = sl
        .par_iter()
        .map(|&x| neighbours(cl, m.limit_points[x], &m.points, |j| m.images[j], delta))
        .collect();
    let level_pairs: Vec<(usize, usize)> = (0..sl.len())
        .flat_map(|a| (0..sl.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| cl.signed_separation(m.limit_points[sl[a]], m.limit_points[sl[b]]) >= level)
        .collect();
    if level_pairs.is_empty() {
        return Err(Error::EmptyLevelSet(level));
    }
    let eps2 = level_pairs
        .par_iter()
        .map(|&(a, b)| {
            let ll = cl.signed_separation(m.limit_points[sl[a]], m.limit_points[sl[b]]);
            match min_over(&n2[a], &n2[b], delta, |p, q| tau_i(m.points[p], m.points[q])) {
                Some(v) => ll - v,
                None => f64::NEG_INFINITY,
            }
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
        .max(0.0);

    let eps = eps.unwrap_or(eps1.max(eps2));
    let (inclusion_a, inclusion_b, inclusion_a_shifted) = (0..si.len())
        .into_par_iter()
        .map(|a| {
            let (mut ok_a, mut ok_b, mut ok_s) = (true, true, true);
            for b in 0..si.len() {
                let li = ci.signed_separation(m.points[si[a]], m.points[si[b]]);
                let near_level = any_over(&n1[a], &n1[b], delta, |x, y| {
                    cl.signed_separation(m.limit_points[x], m.limit_points[y]) >= level
                });
                if li >= level - eps && !near_level {
                    ok_a = false;
                }
                if li >= level + eps && !near_level {
                    ok_s = false;
                }
                if near_level && li < 0.5 * level {
                    ok_b = false;
                }
            }
            (ok_a, ok_b, ok_s)
        })
        .reduce(|| (true, true, true), |x, y| (x.0 && y.0, x.1 && y.1, x.2 && y.2));

    let width = |c: &GeneralizedCone, pts: &[GridPoint], s: &[usize]| -> f64 {
        let mut w: f64 = 0.0;
        for &a in s {
            for &b in s {
                let (lo, hi) = (c.signed_separation(pts[a], pts[b]), c.signed_separation_hi(pts[a], pts[b]));
                if lo.is_finite() && hi.is_finite() {
                    w = w.max(hi - lo);
                }
            }
        }
        w
    };
    let bracket_width = width(ci, &m.points, &si).max(width(cl, &m.limit_points, &sl));
    Ok(ConvergenceModulus {
        i,
        k,
        l,
        delta,
        eps,
        eps1,
        eps2,
        inclusion_a,
        inclusion_b,
        inclusion_ok: inclusion_a && inclusion_b,
        remark_applies: eps < 0.5 * level,
        inclusion_a_shifted,
        bracket_width,
        distortion: m.distortion,
        grid_step: m.grid_step,
        level_set_size: level_pairs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScheduleEntry {
    pub k: usize,
    pub l: usize,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

/// `k = 1..=depth` against `l in {1, 2, 4, 8}`.
pub fn default_schedule(depth: usize) -> Vec<ScheduleEntry> {
    (1..=depth)
        .flat_map(|k| DEFAULT_LEVELS.iter().map(move |&l| ScheduleEntry { k, l, eps: None, delta: None }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SufficientConditions {
    /// GH distance of the base cover intervals, `|len_i - len_inf| / 2`.
    pub base_gh: Vec<f64>,
    pub fiber_gh_upper: Vec<f64>,
    /// `sup |f_i - f_inf o phi|` on the cover rows.
    pub f_sup: Vec<f64>,
    pub hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EllReport {
    pub gh: Vec<GhEntry>,
    /// Uniform bound on the `d`-length of causal curves in `U^k`, per `k`.
    pub imprisoning_bound: Vec<f64>,
    pub moduli: Vec<ConvergenceModulus>,
    pub empty_levels: Vec<(usize, usize, usize)>,
    pub sufficient: SufficientConditions,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

/// (a) covered GH brackets, (b) the causal-curve length bound, (c) moduli
/// over the schedule. PASS when at the last index every modulus is within
/// the bracket width and the GH upper bracket within the bracket width plus
/// two grid steps; FAIL when a modulus exceeds ten bracket widths at the last
/// two indices or the lower GH bracket grows over the last three beyond ten
/// grid steps; INCONCLUSIVE otherwise.
pub fn ell_converge_check(seq: &ConeSequence, schedule: &[ScheduleEntry]) -> Result<EllReport> {
    let n = seq.len();
    let mut gh = Vec::new();
    for k in 1..=seq.depth {
        gh.extend(covered_gh(seq, k)?);
    }
    let imprisoning_bound: Vec<f64> = (0..seq.depth)
        .map(|k| {
            seq.covers.iter().chain(std::iter::once(&seq.limit_cover)).map(|c| c.levels[k].c_k).fold(0.0, f64::max)
        })
        .collect();
    let mut moduli = Vec::new();
    let mut empty_levels = Vec::new();
    for e in schedule {
        for i in 0..n {
            match uniform_modulus(seq, i, e.k, e.l, e.delta, e.eps) {
                Ok(m) => moduli.push(m),
                Err(Error::EmptyLevelSet(_)) => empty_levels.push((i, e.k, e.l)),
                Err(err) => return Err(err),
            }
        }
    }
    let sufficient = sufficient_conditions(seq)?;

    let mut reasons = Vec::new();
    let last = n - 1;
    let step = |i: usize, k: usize| seq.cover_match(i, k).map(|m| m.grid_step);
    let mut fail = false;
    let mut pass = true;
    for k in 1..=seq.depth {
        let row: Vec<&GhEntry> = gh.iter().filter(|g| g.k == k).collect();
        let h = step(last, k)?;
        if n >= 3 {
            let tail = &row[n - 3..];
            if tail.windows(2).all(|w| w[1].lower >= w[0].lower) && tail[2].lower > 10.0 * h {
                fail = true;
                reasons.push(format!("lower GH bracket diverges on cover {k}"));
            }
        }
        let width = moduli.iter().filter(|m| m.k == k && m.i == last).map(|m| m.bracket_width).fold(0.0, f64::max);
        if row[last].upper > width + 2.0 * h {
            pass = false;
            reasons.push(format!("GH upper bracket {:.4} on cover {k} above tolerance", row[last].upper));
        }
    }
    for e in schedule {
        let at = |i: usize| moduli.iter().find(|m| m.i == i && m.k == e.k && m.l == e.l);
        let Some(ml) = at(last) else { continue };
        let worst = ml.eps1.max(ml.eps2);
        if worst > ml.bracket_width {
            pass = false;
            reasons.push(format!("modulus {worst:.4} above bracket width at (k={}, l={})", e.k, e.l));
        }
        let persistent = (last.saturating_sub(1)..=last)
            .filter_map(at)
            .all(|m| m.eps1.max(m.eps2) > 10.0 * m.bracket_width.max(1e-12));
        if persistent && n >= 2 {
            fail = true;
            reasons.push(format!("modulus persistently above 10x bracket width at (k={}, l={})", e.k, e.l));
        }
    }
    let verdict = if fail {
        Verdict::Fail
    } else if pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(EllReport { gh, imprisoning_bound, moduli, empty_levels, sufficient, verdict, reasons })
}

fn sufficient_conditions(seq: &ConeSequence) -> Result<SufficientConditions> {
    let k = seq.depth;
    let ll = &seq.limit_cover.levels[k - 1];
    let len = |c: &GeneralizedCone, l: &CoverLevel| c.time(l.t_hi) - c.time(l.t_lo);
    let mut base_gh = Vec::new();
    let mut fiber_gh_upper = Vec::new();
    let mut f_sup = Vec::new();
    for (i, c) in seq.cones.iter().enumerate() {
        let li = &seq.covers[i].levels[k - 1];
        base_gh.push(0.5 * (len(c, li) - len(&seq.limit, ll)).abs());
        let (fi, fl) = (ball(c.fiber(), &li.fiber_idx), ball(seq.limit.fiber(), &ll.fiber_idx));
        let pairs = fiber_pairs(&fi, &fl);
        fiber_gh_upper.push(0.5 * distortion(&fi, &fl, &pairs));
        let m = seq.cover_match(i, k)?;
        let dev = m
            .points
            .iter()
            .zip(&m.images)
            .map(|(p, q)| (c.f_at(p.t) - seq.limit.f_at(q.t)).abs())
            .fold(0.0, f64::max);
        f_sup.push(dev);
    }
    let settles = |v: &[f64]| v.last().copied().unwrap_or(0.0) <= v.first().copied().unwrap_or(0.0) + 1e-12;
    let hold = settles(&base_gh) && settles(&fiber_gh_upper) && settles(&f_sup);
    Ok(SufficientConditions { base_gh, fiber_gh_upper, f_sup, hold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasuredEntry {
    pub i: usize,
    /// W1 between the coarsened measures.
    pub distance: f64,
    /// Radius of the k-center coarsening; the uncoarsened W1 is within
    /// `2 * coarsening_radius` of `distance`.
    pub coarsening_radius: f64,
    pub distortion: f64,
    pub centers: usize,
}

/// Normalized reference measures of `U^k_i`, pushed through `phi`, against
/// that of `U^k_inf`, in W1 for the limit metric. Both are first moved to at
/// most 64 k-centers of the limit cover.
pub fn measured_converge_check(seq: &ConeSequence, k: usize) -> Result<Vec<MeasuredEntry>> {
    let (_, ll) = seq.level(0, k)?;
    let cl = &seq.limit;
    let pts = ll.points();
    let centers = k_centers(cl, &pts, MAX_CENTERS);
    let nearest = |p: GridPoint| -> (usize, f64) {
        centers
            .iter()
            .enumerate()
            .map(|(j, &c)| (j, cl.d(pts[c], p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    };
    let radius = pts.par_iter().map(|&p| nearest(p).1).reduce(|| 0.0, f64::max);
    let limit_mass = coarse_mass(cl, &pts, &pts, centers.len(), &nearest)?;
    let cost: Vec<Option<f64>> =
        centers.iter().flat_map(|&a| centers.iter().map(move |&b| (a, b))).map(|(a, b)| Some(-cl.d(pts[a], pts[b]))).collect();
    (0..seq.len())
        .map(|i| {
            let m = seq.cover_match(i, k)?;
            let mass = coarse_mass(&seq.cones[i], &m.points, &m.images, centers.len(), &nearest)?;
            let distance = w1(&mass, &limit_mass, &cost);
            Ok(MeasuredEntry { i, distance, coarsening_radius: radius, distortion: m.distortion, centers: centers.len() })
        })
        .collect()
}

/// Normalized cell weights of `points`, accumulated at the center nearest to
/// each point's image.
fn coarse_mass(
    cone: &GeneralizedCone,
    points: &[GridPoint],
    images: &[GridPoint],
    nc: usize,
    nearest: &(impl Fn(GridPoint) -> (usize, f64) + Sync),
) -> Result<Vec<f64>> {
    let w = cone.reference_measure();
    let nx = cone.fiber().n();
    let mut mass = vec![0.0; nc];
    for (p, q) in points.iter().zip(images) {
        mass[nearest(*q).0] += w[p.t * nx + p.x];
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("cover carries no reference mass".into()));
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

fn w1(a: &[f64], b: &[f64], neg_cost: &[Option<f64>]) -> f64 {
    let n = a.len();
    // drop empty atoms to keep the LP small
    let ia: Vec<usize> = (0..n).filter(|&j| a[j] > 0.0).collect();
    let ib: Vec<usize> = (0..n).filter(|&j| b[j] > 0.0).collect();
    let ma: Vec<f64> = ia.iter().map(|&j| a[j]).collect();
    let mb: Vec<f64> = ib.iter().map(|&j| b[j]).collect();
    let cost: Vec<Option<f64>> = ia.iter().flat_map(|&x| ib.iter().map(move |&y| neg_cost[x * n + y])).collect();
    match simplex::transport(&ma, &mb, &cost) {
        Some((_, v)) => (-v).max(0.0),
        None => f64::INFINITY,
    }
}

/// Farthest-first traversal from the first point.
fn k_centers(cone: &GeneralizedCone, pts: &[GridPoint], max: usize) -> Vec<usize> {
    let mut centers = vec![0usize];
    let mut dist: Vec<f64> = pts.iter().map(|&p| cone.d(pts[0], p)).collect();
    while centers.len() < max.min(pts.len()) {
        let (far, r) = dist.iter().enumerate().fold((0, -1.0), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
        if r <= 0.0 {
            break;
        }
        centers.push(far);
        for (j, &p) in pts.iter().enumerate() {
            dist[j] = dist[j].min(cone.d(pts[far], p));
        }
    }
    centers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileCheck {
    pub index: usize,
    pub lambda: f64,
    pub slope_bound_ok: bool,
    pub worst_excess: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrecompactReport {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub d: f64,
    pub profiles: Vec<ProfileCheck>,
    pub selected: Vec<usize>,
    pub limit_index: usize,
    pub selection_tol: f64,
    pub ell: EllReport,
    pub verdict: Verdict,
}

/// Normalized cone: `f / max f` over the fiber scaled by `max f`.
pub fn normalize_cone(cone: &GeneralizedCone) -> Result<GeneralizedCone> {
    let lambda = cone.warp().vals().iter().cloned().fold(0.0, f64::max);
    if !(lambda > 0.0) {
        return Err(Error::ZeroFunction);
    }
    let mut spec: ConeSpec = cone.spec().clone();
    spec.warp = cone.warp().scale_values(1.0 / lambda);
    spec.fiber = cone.fiber().scaled(lambda);
    GeneralizedCone::new(spec)
}

/// Checks the class conditions (interval length at most `d`, FK-concavity,
/// log-slope bound after normalization), then selects a subsequence whose
/// normalized profiles stay within `tol` (sup norm on a common affine
/// parametrization) of the first candidate, scanning even indices first,
/// and runs the convergence check against the last selected cone.
pub fn precompact_harness(cones: &[GeneralizedCone], k: f64, n: f64, d: f64, tol: f64, depth: usize) -> Result<PrecompactReport> {
    if cones.is_empty() {
        return Err(Error::InvalidInput("no cones".into()));
    }
    let mut profiles = Vec::new();
    let mut normalized = Vec::new();
    for (index, c) in cones.iter().enumerate() {
        let w = c.warp();
        let len = w.b() - w.a();
        if len > d + 1e-12 {
            return Err(Error::Precondition(format!("profile {index}: interval length {len} exceeds D = {d}")));
        }
        if k > 0.0 && len > pi_k(k) + 1e-12 {
            return Err(Error::Precondition(format!("profile {index}: interval length {len} exceeds pi_K")));
        }
        let fk = w.fk_concavity(k)?;
        if !fk.fk_concave {
            let (j, v) = fk
                .residuals
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &r)| if r > acc.1 { (j, r) } else { acc });
            return Err(Error::NotFkConcave { index, t: w.ts()[j + 1], violation: v });
        }
        let (_, rep) = w.normalize_and_bound(k)?;
        if !rep.slope_bound_ok {
            return Err(Error::SlopeBoundViolated { index, t: rep.worst_t, excess: rep.worst_excess });
        }
        profiles.push(ProfileCheck {
            index,
            lambda: rep.lambda,
            slope_bound_ok: true,
            worst_excess: rep.worst_excess,
            worst_t: rep.worst_t,
        });
        normalized.push(normalize_cone(c)?);
    }
    let shape = |c: &GeneralizedCone| -> Vec<f64> {
        let w = c.warp();
        (0..=200).map(|j| w.eval(w.a() + (w.b() - w.a()) * j as f64 / 200.0)).collect()
    };
    let shapes: Vec<Vec<f64>> = normalized.iter().map(shape).collect();
    let order: Vec<usize> = (0..cones.len()).step_by(2).chain((1..cones.len()).step_by(2)).collect();
    let anchor = order[0];
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut selected: Vec<usize> = order.into_iter().filter(|&j| sup(&shapes[j], &shapes[anchor]) <= tol).collect();
    selected.sort_unstable();
    let limit_index = *selected.last().unwrap();
    let limit = normalized[limit_index].clone();
    let center = 0.5 * (limit.warp().a() + limit.warp().b());
    let seq_cones: Vec<GeneralizedCone> = selected.iter().map(|&j| normalized[j].clone()).collect();
    let seq = ConeSequence::new(seq_cones, limit, center, depth)?;
    let ell = ell_converge_check(&seq, &default_schedule(depth))?;
    let verdict = ell.verdict;
    Ok(PrecompactReport { k, n, d, profiles, selected, limit_index, selection_tol: tol, ell, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TangentEntry {
    pub eps: f64,
    /// `sup |f(t0 + eps s) - f(t0)|` over the `k`-th cover window, per `k`.
    pub f_deviation: Vec<f64>,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FiberTangent {
    pub points: usize,
    pub diameter: f64,
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TangentReport {
    pub point: GridPoint,
    pub t0: f64,
    pub f0: f64,
    pub entries: Vec<TangentEntry>,
    pub fiber: FiberTangent,
    pub ell: EllReport,
    pub verdict: Verdict,
}

pub const TANGENT_WINDOW: f64 = 1.0;
pub const TANGENT_DEPTH: usize = 2;
const TANGENT_ROWS: usize = 40;

/// Blow-ups `1/eps Y` recentred at `point`, cut to the window
/// `|s| <= TANGENT_WINDOW` and the fiber ball of radius `2^TANGENT_DEPTH`,
/// compared with the product cone `f = f(t0)` over the fiber of the smallest
/// `eps`. PASS needs the warping deviation within `2 eps` on every cover and
/// the convergence check not to fail.
pub fn tangent_cone(cone: &GeneralizedCone, point: GridPoint, eps_list: &[f64]) -> Result<TangentReport> {
    let w = cone.warp();
    if point.t == 0 || point.t + 1 >= cone.nt() || point.x >= cone.fiber().n() {
        return Err(Error::BoundaryPoint);
    }
    let t0 = cone.time(point.t);
    let f0 = w.eval(t0);
    if !(f0 > 0.0) {
        return Err(Error::BoundaryPoint);
    }
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("eps values must be positive".into()));
    }
    let radius = 2f64.powi(TANGENT_DEPTH as i32);
    let build = |eps: f64, warp_fn: &dyn Fn(f64) -> f64| -> Result<GeneralizedCone> {
        let lo = ((w.a() - t0) / eps).max(-TANGENT_WINDOW);
        let hi = ((w.b() - t0) / eps).min(TANGENT_WINDOW);
        let warp = WarpingFunction::sample(lo, hi, TANGENT_ROWS + 1, warp_fn)?;
        let fiber = cone.fiber().with_base(point.x)?.scaled(1.0 / eps).ball_subspace(radius);
        let nr = fiber.n().max(2) * 2;
        let mut spec = ConeSpec::new(warp, fiber, TANGENT_ROWS, nr).with_n(cone.spec().n);
        spec.window = cone.spec().window;
        GeneralizedCone::new(spec)
    };
    let mut cones = Vec::new();
    let mut entries = Vec::new();
    for &eps in eps_list {
        let c = build(eps, &|s| w.eval(t0 + eps * s))?;
        let f_deviation: Vec<f64> = (1..=TANGENT_DEPTH)
            .map(|k| {
                let half = 0.5 * k as f64;
                let cw = c.warp();
                cw.ts()
                    .iter()
                    .filter(|&&s| s.abs() <= half + 1e-12)
                    .map(|&s| (cw.eval(s) - f0).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let within_bound = f_deviation.iter().all(|&v| v <= 2.0 * eps + 1e-12);
        entries.push(TangentEntry { eps, f_deviation, within_bound });
        cones.push(c);
    }
    let smallest = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = build(smallest, &|_| f0)?;
    let lf = limit.fiber();
    let fiber = FiberTangent {
        points: lf.n(),
        diameter: lf.diameter(),
        min_gap: (0..lf.n())
            .flat_map(|a| (0..lf.n()).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| lf.d(a, b))
            .fold(f64::INFINITY, f64::min),
    };
    let seq = ConeSequence::new(cones, limit, 0.0, TANGENT_DEPTH)?;
    let ell = ell_converge_check(&seq, &default_schedule(TANGENT_DEPTH))?;
    let verdict = if !entries.iter().all(|e| e.within_bound) || ell.verdict == Verdict::Fail {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(TangentReport { point, t0, f0, entries, fiber, ell, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(n: usize) -> GeneralizedCone {
        GeneralizedCone::new(ConeSpec::minkowski_strip(2.0, 1.0, n, 40, 20).unwrap()).unwrap()
    }

    #[test]
    fn constant_sequence_is_exact() {
        let seq = ConeSequence::new(vec![strip(11), strip(11)], strip(11), 1.0, 2).unwrap();
        for g in covered_gh(&seq, 1).unwrap() {
            assert_eq!((g.lower, g.upper), (0.0, 0.0));
        }
        let m = uniform_modulus(&seq, 1, 2, 2, None, None).unwrap();
        assert_eq!((m.eps1, m.eps2), (0.0, 0.0));
        assert!(m.inclusion_ok);
        for e in measured_converge_check(&seq, 1).unwrap() {
            assert!(e.distance.abs() < 1e-12);
        }
        assert_eq!(ell_converge_check(&seq, &default_schedule(2)).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn empty_level_set() {
        let seq = ConeSequence::new(vec![strip(11)], strip(11), 1.0, 1).unwrap();
        assert!(uniform_modulus(&seq, 0, 1, 1, Some(0.0), None).is_ok());
        // the cover spans 0.4 time units, so nothing reaches 1/2
        let s = GeneralizedCone::new(ConeSpec::minkowski_strip(0.4, 1.0, 11, 8, 20).unwrap()).unwrap();
        let seq = ConeSequence::new(vec![s.clone()], s, 0.2, 1).unwrap();
        assert_eq!(uniform_modulus(&seq, 0, 1, 2, None, None).unwrap_err().code(), "EMPTY_LEVEL_SET");
    }

    #[test]
    fn boundary_point_rejected() {
        let c = strip(11);
        assert_eq!(tangent_cone(&c, GridPoint::new(0, 5), &[0.5]).unwrap_err().code(), "BOUNDARY_POINT");
    }
}
