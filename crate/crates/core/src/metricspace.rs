//! Finite metric spaces, correspondences and Gromov-Hausdorff brackets.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const EXACT_GH_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct FiniteMetricSpace {
    n: usize,
    base: usize,
    dist: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    n: usize,
    base: usize,
    dist: Vec<f64>,
}

impl TryFrom<RawSpace> for FiniteMetricSpace {
    type Error = Error;
    fn try_from(r: RawSpace) -> Result<Self> {
        FiniteMetricSpace::new(r.n, r.base, r.dist)
    }
}

impl From<FiniteMetricSpace> for RawSpace {
    fn from(x: FiniteMetricSpace) -> Self {
        RawSpace { n: x.n, base: x.base, dist: x.dist }
    }
}

impl FiniteMetricSpace {
    pub fn new(n: usize, base: usize, dist: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(n, base, dist, DEFAULT_TOL)
    }

    pub fn with_tolerance(n: usize, base: usize, dist: Vec<f64>, tol: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("metric space needs at least one point".into()));
        }
        if base >= n {
            return Err(Error::InvalidInput(format!("base {base} out of range for {n} points")));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!("dist({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidInput(format!("dist({i},{j}) = {d} is not a nonnegative real")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::InvalidInput(format!("distinct points {i},{j} at distance 0")));
                }
                if (d - dist[j * n + i]).abs() > tol {
                    return Err(Error::InvalidInput(format!("dist not symmetric at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i * n + k] > dist[i * n + j] + dist[j * n + k] + tol {
                        return Err(Error::InvalidInput(format!("triangle inequality fails at ({i},{j},{k})")));
                    }
                }
            }
        }
        Ok(FiniteMetricSpace { n, base, dist })
    }

    pub fn point() -> Self {
        FiniteMetricSpace { n: 1, base: 0, dist: vec![0.0] }
    }

    /// `n` evenly spaced points on a segment of length `len`, base at the left end.
    pub fn segment(len: f64, n: usize) -> Result<Self> {
        if n == 0 || !(len >= 0.0) || (n > 1 && len <= 0.0) {
            return Err(Error::InvalidInput("segment needs n >= 1 and positive length".into()));
        }
        if n == 1 {
            return Ok(Self::point());
        }
        let h = len / (n - 1) as f64;
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (i as f64 - j as f64).abs() * h;
            }
        }
        Ok(FiniteMetricSpace { n, base: 0, dist })
    }

    /// `n` points evenly spaced on a circular arc of the given radius and
    /// opening angle, with the intrinsic (arclength) metric.
    pub fn circle_arc(radius: f64, angle: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0) || !(angle > 0.0) || angle > std::f64::consts::PI {
            return Err(Error::InvalidInput("circle arc needs radius > 0 and angle in (0, pi]".into()));
        }
        Self::segment(radius * angle, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> usize {
        self.base
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn dist_table(&self) -> &[f64] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FiniteMetricSpace {
            n: self.n,
            base: self.base,
            dist: self.dist.iter().map(|d| d * factor).collect(),
        }
    }

    pub fn with_base(&self, base: usize) -> Result<Self> {
        if base >= self.n {
            return Err(Error::InvalidInput(format!("base {base} out of range")));
        }
        Ok(FiniteMetricSpace { base, ..self.clone() })
    }

    /// Restriction to the given indices; `base` must be one of them.
    pub fn subspace(&self, idx: &[usize], base: usize) -> Self {
        let m = idx.len();
        let mut dist = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                dist[a * m + b] = self.d(i, j);
            }
        }
        let base = idx.iter().position(|&i| i == base).unwrap_or(0);
        FiniteMetricSpace { n: m, base, dist }
    }

    /// Indices of the closed ball around the base point.
    pub fn ball_indices(&self, radius: f64) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.d(self.base, i) <= radius + DEFAULT_TOL)
            .collect()
    }

    pub fn ball_subspace(&self, radius: f64) -> Self {
        let idx = self.ball_indices(radius.max(0.0));
        self.subspace(&idx, self.base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    pub distortion: f64,
}

impl Correspondence {
    pub fn from_pairs(a: &FiniteMetricSpace, b: &FiniteMetricSpace, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let distortion = distortion(a, b, &pairs);
        Correspondence { pairs, distortion }
    }

    pub fn is_surjective(&self, na: usize, nb: usize) -> bool {
        let mut sa = vec![false; na];
        let mut sb = vec![false; nb];
        for &(i, j) in &self.pairs {
            sa[i] = true;
            sb[j] = true;
        }
        sa.iter().all(|&x| x) && sb.iter().all(|&x| x)
    }
}

pub fn distortion(a: &FiniteMetricSpace, b: &FiniteMetricSpace, pairs: &[(usize, usize)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &(x, xp)) in pairs.iter().enumerate() {
        for &(y, yp) in &pairs[k + 1..] {
            worst = worst.max((a.d(x, y) - b.d(xp, yp)).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GhMode {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhBracket {
    pub lower: f64,
    pub upper: f64,
    pub witness: Correspondence,
}

pub fn gh_distance(a: &FiniteMetricSpace, b: &FiniteMetricSpace, mode: GhMode) -> Result<GhBracket> {
    match mode {
        GhMode::Exact => gh_exact(a, b),
        GhMode::Heuristic => Ok(gh_heuristic(a, b)),
    }
}

fn sorted_values(x: &FiniteMetricSpace) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::with_capacity(x.n * (x.n + 1) / 2);
    v.push(0.0);
    for i in 0..x.n {
        for j in i + 1..x.n {
            v.push(x.d(i, j));
        }
    }
    v.sort_by(|p, q| p.total_cmp(q));
    v.dedup();
    v
}

/// One-sided Hausdorff distance between two sorted value sets.
fn directed_gap(p: &[f64], q: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for &x in p {
        while k + 1 < q.len() && q[k + 1] <= x {
            k += 1;
        }
        let mut best = (x - q[k]).abs();
        if k + 1 < q.len() {
            best = best.min((q[k + 1] - x).abs());
        }
        worst = worst.max(best);
    }
    worst
}

/// Lower bound `1/2 * max(|diam A - diam B|, H(D_A, D_B))` where `D` is the
/// set of realized distances (including 0) and `H` the Hausdorff distance on
/// the line. Any correspondence of distortion `e` moves each realized value
/// of one space to within `e` of a realized value of the other.
pub fn gh_lower_bound(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> f64 {
    gh_lower_bound_values(sorted_values(a), sorted_values(b))
}

/// [`gh_lower_bound`] from the realized distance values of two spaces, for
/// distance tables that are only approximately metric.
pub fn gh_lower_bound_values(mut va: Vec<f64>, mut vb: Vec<f64>) -> f64 {
    for v in [&mut va, &mut vb] {
        v.push(0.0);
        v.sort_by(|p, q| p.total_cmp(q));
        v.dedup();
    }
    let h = directed_gap(&va, &vb).max(directed_gap(&vb, &va));
    let diam = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    0.5 * h.max((diam(&va) - diam(&vb)).abs())
}

fn greedy_anchor(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(a.n + b.n);
    for i in 0..a.n {
        let ra = a.d(a.base, i);
        let j = (0..b.n)
            .min_by(|&p, &q| (b.d(b.base, p) - ra).abs().total_cmp(&(b.d(b.base, q) - ra).abs()))
            .unwrap();
        pairs.push((i, j));
    }
    for j in 0..b.n {
        let rb = b.d(b.base, j);
        let i = (0..a.n)
            .min_by(|&p, &q| (a.d(a.base, p) - rb).abs().total_cmp(&(a.d(a.base, q) - rb).abs()))
            .unwrap();
        pairs.push((i, j));
    }
    pairs
}

pub fn gh_heuristic(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> GhBracket {
    let lower = gh_lower_bound(a, b);
    let greedy = Correspondence::from_pairs(a, b, greedy_anchor(a, b));
    let full_dis = a.diameter().max(b.diameter());
    let witness = if greedy.distortion <= full_dis || a.n * b.n > 4096 {
        greedy
    } else {
        let pairs = (0..a.n).flat_map(|i| (0..b.n).map(move |j| (i, j))).collect();
        Correspondence::from_pairs(a, b, pairs)
    };
    let upper = (0.5 * witness.distortion).max(lower);
    GhBracket { lower, upper, witness }
}

fn gh_exact(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> Result<GhBracket> {
    let big = a.n.max(b.n);
    if big > EXACT_GH_LIMIT {
        return Err(Error::SizeLimit { limit: EXACT_GH_LIMIT, got: big });
    }
    // Candidate distortion values; the optimum is one of them.
    let mut cands = vec![0.0];
    for x in 0..a.n {
        for y in 0..a.n {
            for u in 0..b.n {
                for v in 0..b.n {
                    cands.push((a.d(x, y) - b.d(u, v)).abs());
                }
            }
        }
    }
    cands.sort_by(|p, q| p.total_cmp(q));
    cands.dedup_by(|p, q| (*p - *q).abs() <= 1e-15);
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    let mut best = feasible(a, b, cands[hi]).expect("full relation is always feasible");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match feasible(a, b, cands[mid]) {
            Some(p) => {
                best = p;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let witness = Correspondence::from_pairs(a, b, best);
    let v = 0.5 * witness.distortion;
    Ok(GhBracket { lower: v, upper: v, witness })
}

/// Backtracking search for a correspondence with distortion at most `eps`:
/// every point of `a` picks a partner, then every uncovered point of `b`.
fn feasible(a: &FiniteMetricSpace, b: &FiniteMetricSpace, eps: f64) -> Option<Vec<(usize, usize)>> {
    let slack = eps + 1e-12;
    let ok = |p: (usize, usize), q: (usize, usize)| (a.d(p.0, q.0) - b.d(p.1, q.1)).abs() <= slack;
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    fn rec(
        step: usize,
        a: &FiniteMetricSpace,
        b: &FiniteMetricSpace,
        chosen: &mut Vec<(usize, usize)>,
        ok: &dyn Fn((usize, usize), (usize, usize)) -> bool,
    ) -> bool {
        if step < a.n {
            for j in 0..b.n {
                let p = (step, j);
                if chosen.iter().all(|&q| ok(p, q)) {
                    chosen.push(p);
                    if rec(step + 1, a, b, chosen, ok) {
                        return true;
                    }
                    chosen.pop();
                }
            }
            return false;
        }
        let uncovered = (0..b.n).find(|&j| !chosen.iter().any(|&(_, y)| y == j));
        match uncovered {
            None => true,
            Some(j) => {
                for i in 0..a.n {
                    let p = (i, j);
                    if chosen.iter().all(|&q| ok(p, q)) {
                        chosen.push(p);
                        if rec(step + 1, a, b, chosen, ok) {
                            return true;
                        }
                        chosen.pop();
                    }
                }
                false
            }
        }
    }
    if rec(0, a, b, &mut chosen, &ok) {
        Some(chosen)
    } else {
        None
    }
}
