//! Generalized cones `-I x_f X` on a (time, fiber distance) grid.
//!
//! Fiber independence reduces the time separation to a two-dimensional
//! problem `tau2d(s, t, r)`. Two tables are built by longest-path dynamic
//! programming over moves `(a, b)` of `a` time steps and `b` distance steps:
//!
//! * `lo`: each move is a straight line in conformal time `u = int dt / f`,
//!   causal iff `b dr <= du`, of length `dt_total sqrt(1 - (b dr / du)^2)`.
//!   Every grid path is a causal curve, so `lo` is a lower bound. Columns
//!   store the best value over paths covering at least the column's distance
//!   (tau2d is nonincreasing in `r`), with the last column absorbing overshoot.
//! * `hi`: a causal curve is cut into blocks of `HI_BLOCK` rows plus one
//!   remainder. Over a block covering `b` floored distance steps the curve has
//!   `tau^2 <= dt^2 - dt ((b-1)^+ dr)^2 / int f^-2` (Cauchy-Schwarz), so the
//!   chain of such moves dominates it.
//!
//! Fiber distances are rounded up for `lo` and down for `hi`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metricspace::FiniteMetricSpace;
use crate::warp::WarpingFunction;
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_NULL_BAND: usize = 128;
pub const NULL_BAND_WIDTH: usize = 3;
pub const DEFAULT_BUDGET: u64 = 20_000_000_000;
const SNAP: f64 = 1e-9;
const HI_BLOCK: usize = 64;
const CAUSAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConeSpec {
    pub warp: WarpingFunction,
    pub fiber: FiniteMetricSpace,
    #[serde(rename = "N", default = "one")]
    pub n: f64,
    pub time_steps: usize,
    pub dist_steps: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_null_band", skip_serializing_if = "is_default_band")]
    pub null_band: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_weights: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_null_band() -> usize {
    DEFAULT_NULL_BAND
}

fn is_default_band(x: &usize) -> bool {
    *x == DEFAULT_NULL_BAND
}

impl ConeSpec {
    pub fn new(warp: WarpingFunction, fiber: FiniteMetricSpace, time_steps: usize, dist_steps: usize) -> Self {
        ConeSpec {
            warp,
            fiber,
            n: 1.0,
            time_steps,
            dist_steps,
            window: DEFAULT_WINDOW,
            null_band: DEFAULT_NULL_BAND,
            fiber_weights: None,
        }
    }

    pub fn with_window(mut self, w: usize) -> Self {
        self.window = w;
        self
    }

    pub fn with_n(mut self, n: f64) -> Self {
        self.n = n;
        self
    }

    pub fn with_null_band(mut self, band: usize) -> Self {
        self.null_band = band;
        self
    }

    /// `f = 1` on `[0, len_t]` over a segment of length `len_x`.
    pub fn minkowski_strip(len_t: f64, len_x: f64, fiber_pts: usize, time_steps: usize, dist_steps: usize) -> Result<Self> {
        let warp = WarpingFunction::sample(0.0, len_t, time_steps + 1, |_| 1.0)?;
        Ok(ConeSpec::new(warp, FiniteMetricSpace::segment(len_x, fiber_pts)?, time_steps, dist_steps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: usize,
    pub x: usize,
}

impl GridPoint {
    pub fn new(t: usize, x: usize) -> Self {
        GridPoint { t, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Character {
    Timelike,
    Null,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridGeodesic {
    /// `(time index, distance steps traversed)`, strictly increasing in time.
    pub states: Vec<(usize, usize)>,
    pub step_weights: Vec<f64>,
    pub tau_length: f64,
    pub character: Character,
    pub from: GridPoint,
    pub to: GridPoint,
}

impl GridGeodesic {
    pub fn total_steps(&self) -> usize {
        self.states.last().map(|s| s.1).unwrap_or(0)
    }
}

/// Step tables shared by the DP passes.
struct Moves {
    /// `lo[i0][a - 1]`: `(b, weight)` pairs for moves starting at `i0`.
    lo: Vec<Vec<Vec<(usize, f64)>>>,
    hi: Vec<Vec<Vec<(usize, f64)>>>,
}

#[derive(Debug)]
pub struct TauTables {
    nt: usize,
    nr: usize,
    row_off: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TauTables {
    #[inline]
    pub fn idx(&self, s: usize, t: usize, j: usize) -> usize {
        (self.row_off[s] + (t - s)) * (self.nr + 1) + j
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.nr
    }
}

/// Riemannian distance of the warped product `I x_f X`, reduced like `tau2d`.
#[derive(Debug)]
pub struct MetricTable {
    nt: usize,
    nr: usize,
    d: Vec<f64>,
}

impl MetricTable {
    pub fn get(&self, s: usize, t: usize, j: usize) -> f64 {
        self.d[(s * self.nt + t) * (self.nr + 1) + j.min(self.nr)]
    }
}

#[derive(Debug)]
pub struct GeneralizedCone {
    spec: ConeSpec,
    warp: WarpingFunction,
    weights: Vec<f64>,
    nt: usize,
    nr: usize,
    dt: f64,
    dr: f64,
    tables: OnceLock<TauTables>,
    metric: OnceLock<MetricTable>,
}

impl Clone for GeneralizedCone {
    fn clone(&self) -> Self {
        GeneralizedCone::new(self.spec.clone()).expect("spec already validated")
    }
}

impl GeneralizedCone {
    pub fn new(spec: ConeSpec) -> Result<Self> {
        Self::with_budget(spec, DEFAULT_BUDGET)
    }

    pub fn with_budget(spec: ConeSpec, budget: u64) -> Result<Self> {
        if spec.time_steps < 1 {
            return Err(Error::InvalidInput("timeSteps must be positive".into()));
        }
        if !(spec.n >= 1.0) {
            return Err(Error::InvalidInput(format!("N = {} must be >= 1", spec.n)));
        }
        let nx = spec.fiber.n();
        let weights = match &spec.fiber_weights {
            Some(w) if w.len() != nx || w.iter().any(|v| !(*v >= 0.0)) => {
                return Err(Error::InvalidInput("fiber weights must be nonnegative, one per point".into()))
            }
            Some(w) => w.clone(),
            None => vec![1.0; nx],
        };
        let diam = spec.fiber.diameter();
        let nr = if diam > 0.0 {
            if spec.dist_steps < 1 {
                return Err(Error::InvalidInput("distSteps must be positive".into()));
            }
            spec.dist_steps
        } else {
            0
        };
        let nt = spec.time_steps + 1;
        let (a, b) = (spec.warp.a(), spec.warp.b());
        let uniform = spec.warp.len() == nt
            && spec
                .warp
                .ts()
                .iter()
                .enumerate()
                .all(|(i, &t)| (t - (a + (b - a) * i as f64 / spec.time_steps as f64)).abs() <= 1e-12 * (b - a).max(1.0));
        let warp = if uniform {
            spec.warp.clone()
        } else {
            spec.warp.resample(a, b, nt)?
        };
        let window = if spec.window == 0 { nt } else { spec.window };
        let states = (nt as u64) * (nt as u64 + 1) / 2 * (nr as u64 + 1);
        let work = states.saturating_mul(window as u64);
        if work > budget {
            return Err(Error::ResourceLimit { work, budget });
        }
        let dt = (b - a) / spec.time_steps as f64;
        let dr = if nr > 0 { diam / nr as f64 } else { 1.0 };
        Ok(GeneralizedCone {
            spec,
            warp,
            weights,
            nt,
            nr,
            dt,
            dr,
            tables: OnceLock::new(),
            metric: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &ConeSpec {
        &self.spec
    }

    pub fn warp(&self) -> &WarpingFunction {
        &self.warp
    }

    pub fn fiber(&self) -> &FiniteMetricSpace {
        &self.spec.fiber
    }

    pub fn n_exp(&self) -> f64 {
        self.spec.n
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn time(&self, i: usize) -> f64 {
        self.warp.ts()[i]
    }

    pub fn f_at(&self, i: usize) -> f64 {
        self.warp.vals()[i]
    }

    /// Block length of the upper table.
    pub fn hi_block(&self) -> usize {
        HI_BLOCK.min(self.nt.saturating_sub(1)).max(1)
    }

    pub fn window(&self) -> usize {
        if self.spec.window == 0 {
            self.nt
        } else {
            self.spec.window
        }
    }

    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        let nx = self.fiber().n();
        (0..self.nt).flat_map(move |t| (0..nx).map(move |x| GridPoint { t, x }))
    }

    /// Distance column for the lower table (rounded up).
    pub fn col_lo(&self, d: f64) -> usize {
        if self.nr == 0 {
            return 0;
        }
        ((d / self.dr - SNAP).ceil().max(0.0) as usize).min(self.nr)
    }

    /// Distance column for the upper table (rounded down).
    pub fn col_hi(&self, d: f64) -> usize {
        if self.nr == 0 {
            return 0;
        }
        ((d / self.dr + SNAP).floor().max(0.0) as usize).min(self.nr)
    }

    pub fn nearest_col(&self, d: f64) -> usize {
        if self.nr == 0 {
            return 0;
        }
        ((d / self.dr).round().max(0.0) as usize).min(self.nr)
    }

    /// Prefix integrals `int dt / f` and `int dt / f^2` of the interpolant
    /// from `a` to each sample, skipping pieces that touch a zero of `f`.
    fn conformal_prefix(&self) -> (Vec<f64>, Vec<f64>) {
        let f = self.warp.vals();
        let ts = self.warp.ts();
        let mut u = vec![0.0; self.nt];
        let mut h = vec![0.0; self.nt];
        for i in 1..self.nt {
            let (f0, f1, dt) = (f[i - 1], f[i], ts[i] - ts[i - 1]);
            // pieces touching a zero of f (only at the ends) are infinite;
            // spans over them are detected by the caller
            let (du, dh) = if f0 <= 0.0 || f1 <= 0.0 {
                (0.0, 0.0)
            } else if (f1 - f0).abs() <= 1e-12 * f0.max(f1) {
                let m = 0.5 * (f0 + f1);
                (dt / m, dt / (m * m))
            } else {
                (dt * (f1.ln() - f0.ln()) / (f1 - f0), dt / (f0 * f1))
            };
            u[i] = u[i - 1] + du;
            h[i] = h[i - 1] + dh;
        }
        (u, h)
    }

    /// Conformal time `int dt / f` between two samples.
    pub fn conformal_span(&self, i0: usize, i1: usize) -> f64 {
        let f = self.warp.vals();
        if f[i0] <= 0.0 || f[i1] <= 0.0 {
            return f64::INFINITY;
        }
        let (u, _) = self.conformal_prefix();
        u[i1] - u[i0]
    }

    fn moves(&self) -> Moves {
        let nt = self.nt;
        let f = self.warp.vals();
        let (dt, dr, nr) = (self.dt, self.dr, self.nr);
        let (u, h) = self.conformal_prefix();
        let w = self.window().min(nt - 1).max(1);
        let hb = self.hi_block();
        let lo_band = self.spec.null_band.max(w);
        let band = lo_band.max(hb).min(nt - 1).max(1);
        let mut lo = Vec::with_capacity(nt);
        let mut hi = Vec::with_capacity(nt);
        for i0 in 0..nt {
            let mut lo_i = Vec::new();
            let mut hi_i = Vec::new();
            for a in 1..=band {
                if i0 + a >= nt {
                    break;
                }
                let i1 = i0 + a;
                let span = a as f64 * dt;
                let (du, dh) = if f[i0] <= 0.0 || f[i1] <= 0.0 {
                    (f64::INFINITY, f64::INFINITY)
                } else {
                    (u[i1] - u[i0], h[i1] - h[i0])
                };
                // conformally straight move: tau = span * sqrt(1 - (b dr / du)^2)
                let bnull = if nr == 0 {
                    0
                } else if du.is_infinite() {
                    nr
                } else {
                    ((du / dr) * (1.0 + CAUSAL_SLACK)).floor().min(nr as f64) as usize
                };
                let w_lo = |b: usize| {
                    if du.is_infinite() {
                        return span;
                    }
                    let x = 1.0 - (b as f64 * dr / du).powi(2);
                    if x > SNAP {
                        span * x.sqrt()
                    } else {
                        0.0
                    }
                };
                let mut moves_lo = Vec::new();
                if a > lo_band {
                    // only needed as an upper-table block
                } else if a <= w {
                    // where f varies, chained primitive steps drift off the light
                    // cone, so non-primitive moves are kept as well
                    let varies = f[i0..=i1].iter().any(|&v| v != f[i0]);
                    for b in 0..=bnull {
                        if varies || gcd(a, b) == 1 {
                            moves_lo.push((b, w_lo(b)));
                        }
                    }
                } else {
                    for b in bnull.saturating_sub(NULL_BAND_WIDTH - 1)..=bnull {
                        moves_lo.push((b, w_lo(b)));
                    }
                }
                lo_i.push(moves_lo);
                if a <= hb {
                    // any causal curve over the block: fiber length L <= du and
                    // tau^2 <= span^2 - span L^2 / int f^-2
                    let bmax = if nr == 0 {
                        0
                    } else if du.is_infinite() {
                        nr
                    } else {
                        ((du / dr) * (1.0 + CAUSAL_SLACK) + 1.0).floor().min(nr as f64) as usize
                    };
                    let moves_hi = (0..=bmax)
                        .map(|b| {
                            let l = b.saturating_sub(1) as f64 * dr;
                            let x = if dh.is_infinite() { span * span } else { span * span - span * l * l / dh };
                            (b, if x > 0.0 { x.sqrt() } else { 0.0 })
                        })
                        .collect();
                    hi_i.push(moves_hi);
                }
            }
            lo.push(lo_i);
            hi.push(hi_i);
        }
        Moves { lo, hi }
    }

    pub fn tables(&self) -> &TauTables {
        self.tables.get_or_init(|| self.build_tables())
    }

    /// Builds (or returns the cached) lower and upper tables.
    pub fn build_tau_table(&self) -> (&[f64], &[f64]) {
        let t = self.tables();
        (&t.lo, &t.hi)
    }

    fn build_tables(&self) -> TauTables {
        let (nt, nr) = (self.nt, self.nr);
        let mut row_off = Vec::with_capacity(nt);
        let mut acc = 0;
        for s in 0..nt {
            row_off.push(acc);
            acc += nt - s;
        }
        let total = acc * (nr + 1);
        if self.warp.is_zero() {
            let mut lo = vec![0.0; total];
            for s in 0..nt {
                for t in s..nt {
                    let base = (row_off[s] + t - s) * (nr + 1);
                    for j in 0..=nr {
                        lo[base + j] = self.time(t) - self.time(s);
                    }
                }
            }
            let hi = lo.clone();
            return TauTables { nt, nr, row_off, lo, hi };
        }
        let moves = self.moves();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..nt)
            .into_par_iter()
            .map(|s| (self.dp_lo(&moves, s, None).0, self.dp_hi(&moves, s)))
            .collect();
        let mut lo = Vec::with_capacity(total);
        let mut hi = Vec::with_capacity(total);
        for (l, h) in rows {
            lo.extend(l);
            hi.extend(h);
        }
        TauTables { nt, nr, row_off, lo, hi }
    }

    /// Lower DP from source time `s`. With `track`, also returns for every
    /// stored cell the raw state it came from and that state's predecessor
    /// `(a, b, j0)`.
    #[allow(clippy::type_complexity)]
    fn dp_lo(&self, moves: &Moves, s: usize, track: Option<()>) -> (Vec<f64>, Vec<(usize, usize, usize, usize)>) {
        let (nt, nr) = (self.nt, self.nr);
        let width = nr + 1;
        let rows = nt - s;
        let mut val = vec![f64::NEG_INFINITY; rows * width];
        let mut reach = vec![0usize; rows];
        let mut pred = if track.is_some() {
            vec![(usize::MAX, 0, 0, 0); rows * width]
        } else {
            Vec::new()
        };
        val[0] = 0.0;
        let mut raw = vec![f64::NEG_INFINITY; width];
        let mut raw_pred = vec![(0usize, 0usize, 0usize); width];
        for row in 1..rows {
            let i = s + row;
            raw.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            let amax = moves.lo[0].len().min(row);
            for a in 1..=amax {
                let i0 = i - a;
                if a > moves.lo[i0].len() {
                    continue;
                }
                let prow = row - a;
                let prev = &val[prow * width..(prow + 1) * width];
                let top = reach[prow];
                for &(b, w) in &moves.lo[i0][a - 1] {
                    for j0 in 0..=top {
                        let v = prev[j0];
                        if v == f64::NEG_INFINITY {
                            continue;
                        }
                        let jt = (j0 + b).min(nr);
                        let cand = v + w;
                        if cand > raw[jt] {
                            raw[jt] = cand;
                            if track.is_some() {
                                raw_pred[jt] = (a, b, j0);
                            }
                        }
                    }
                }
            }
            // suffix maximum: column j holds the best path covering >= j steps
            let cur = &mut val[row * width..(row + 1) * width];
            let mut best = f64::NEG_INFINITY;
            let mut src = nr;
            let mut top = 0;
            for j in (0..=nr).rev() {
                if raw[j] > best {
                    best = raw[j];
                    src = j;
                }
                cur[j] = best;
                if track.is_some() && best > f64::NEG_INFINITY {
                    let (a, b, j0) = raw_pred[src];
                    pred[row * width + j] = (src, a, b, j0);
                }
                if top == 0 && raw[j] > f64::NEG_INFINITY {
                    top = j;
                }
            }
            reach[row] = top;
        }
        (val, pred)
    }

    /// Upper table from source `s`. A causal curve from row `s` to row `t` is
    /// cut into full blocks of `hi_block` rows followed by one shorter block;
    /// each block is dominated by a single move, so the chain bounds every curve.
    fn dp_hi(&self, moves: &Moves, s: usize) -> Vec<f64> {
        let (nt, nr) = (self.nt, self.nr);
        let width = nr + 1;
        let rows = nt - s;
        let blk = self.hi_block();
        let mut val = vec![f64::NEG_INFINITY; rows * width];
        if self.f_at(s) <= 0.0 {
            val[..width].iter_mut().for_each(|v| *v = 0.0);
        } else {
            val[0] = 0.0;
        }
        let relax = |prev: &[f64], cur: &mut [f64], mv: &[(usize, f64)]| {
            let top = (0..=nr).rev().find(|&j| prev[j] > f64::NEG_INFINITY).unwrap_or(0);
            for &(b, w) in mv {
                if b > nr {
                    break;
                }
                for j0 in 0..=top.min(nr - b) {
                    let v = prev[j0];
                    if v == f64::NEG_INFINITY {
                        continue;
                    }
                    let cand = v + w;
                    if cand > cur[j0 + b] {
                        cur[j0 + b] = cand;
                    }
                }
            }
        };
        let mut base = 0;
        while base < rows {
            let (before, after) = val.split_at_mut((base + 1) * width);
            let prev = &before[base * width..];
            let last = (rows - 1 - base).min(blk);
            for a in 1..=last {
                let cur = &mut after[(a - 1) * width..a * width];
                relax(prev, cur, &moves.hi[s + base][a - 1]);
            }
            base += blk;
        }
        val
    }

    pub fn tau2d_lo(&self, s: usize, t: usize, j: usize) -> f64 {
        if t < s {
            return f64::NEG_INFINITY;
        }
        let tb = self.tables();
        tb.lo[tb.idx(s, t, j.min(self.nr))]
    }

    pub fn tau2d_hi(&self, s: usize, t: usize, j: usize) -> f64 {
        if t < s {
            return f64::NEG_INFINITY;
        }
        let tb = self.tables();
        tb.hi[tb.idx(s, t, j.min(self.nr))]
    }

    /// Canonical signed separation: the lower table value, `-inf` when no
    /// causal grid path exists.
    pub fn signed_separation(&self, p: GridPoint, q: GridPoint) -> f64 {
        if p == q {
            return 0.0;
        }
        if q.t < p.t {
            return f64::NEG_INFINITY;
        }
        let d = self.fiber().d(p.x, q.x);
        self.tau2d_lo(p.t, q.t, self.col_lo(d))
    }

    /// Upper companion of [`signed_separation`](Self::signed_separation).
    pub fn signed_separation_hi(&self, p: GridPoint, q: GridPoint) -> f64 {
        if p == q {
            return 0.0;
        }
        if q.t < p.t {
            return f64::NEG_INFINITY;
        }
        let d = self.fiber().d(p.x, q.x);
        self.tau2d_hi(p.t, q.t, self.col_hi(d))
    }

    /// Continuum refinement of `l(p, q)`: the warped geodesic separation at
    /// the exact fiber distance, clamped into the `[lo, hi]` bracket.
    pub fn tau_geodesic(&self, p: GridPoint, q: GridPoint) -> f64 {
        if p == q {
            return 0.0;
        }
        let (lo, hi) = (self.signed_separation(p, q), self.signed_separation_hi(p, q));
        if hi == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let g = self.warp.geodesic_tau(self.time(p.t), self.time(q.t), self.fiber().d(p.x, q.x));
        if g == f64::NEG_INFINITY {
            return lo;
        }
        g.min(hi).max(lo)
    }

    pub fn tau(&self, p: GridPoint, q: GridPoint) -> f64 {
        self.signed_separation(p, q).max(0.0)
    }

    pub fn causal(&self, p: GridPoint, q: GridPoint) -> bool {
        self.signed_separation(p, q) > f64::NEG_INFINITY
    }

    pub fn timelike(&self, p: GridPoint, q: GridPoint) -> bool {
        self.signed_separation(p, q) > CAUSAL_SLACK
    }

    pub fn maximizer(&self, p: GridPoint, q: GridPoint) -> Result<GridGeodesic> {
        let ell = self.signed_separation(p, q);
        if ell == f64::NEG_INFINITY {
            return Err(Error::NotCausallyRelated);
        }
        if p.t == q.t {
            return Ok(GridGeodesic {
                states: vec![(p.t, 0)],
                step_weights: vec![],
                tau_length: 0.0,
                character: Character::Null,
                from: p,
                to: q,
            });
        }
        if self.warp.is_zero() {
            let states: Vec<(usize, usize)> = (p.t..=q.t).map(|i| (i, 0)).collect();
            let step_weights: Vec<f64> = (p.t..q.t).map(|i| self.time(i + 1) - self.time(i)).collect();
            return Ok(GridGeodesic {
                states,
                tau_length: step_weights.iter().sum(),
                step_weights,
                character: Character::Timelike,
                from: p,
                to: q,
            });
        }
        let moves = self.moves();
        let (_, pred) = self.dp_lo(&moves, p.t, Some(()));
        let width = self.nr + 1;
        let mut row = q.t - p.t;
        let mut j = self.col_lo(self.fiber().d(p.x, q.x));
        let mut edges = Vec::new();
        while row > 0 {
            let (_src, a, b, j0) = pred[row * width + j];
            if a == 0 || a == usize::MAX {
                return Err(Error::NoMaximizer(p.t, p.x, q.t, q.x));
            }
            edges.push((a, b));
            row -= a;
            j = j0;
        }
        edges.reverse();
        let mut states = vec![(p.t, 0)];
        let mut step_weights = Vec::new();
        let (mut i, mut r) = (p.t, 0);
        for (a, b) in edges {
            let w = moves.lo[i][a - 1]
                .iter()
                .find(|m| m.0 == b)
                .map(|m| m.1)
                .ok_or(Error::NoMaximizer(p.t, p.x, q.t, q.x))?;
            i += a;
            r += b;
            states.push((i, r));
            step_weights.push(w);
        }
        let tau_length: f64 = step_weights.iter().sum();
        let tol = 1e-9 * (1.0 + self.dt);
        let timelike = step_weights.iter().filter(|&&w| w > tol).count();
        let character = if timelike == step_weights.len() {
            Character::Timelike
        } else if timelike == 0 {
            Character::Null
        } else {
            Character::Mixed
        };
        Ok(GridGeodesic { states, step_weights, tau_length, character, from: p, to: q })
    }

    /// Point at `tau`-arclength fraction `lambda` of the maximizer joining the
    /// endpoints of `g` (time fraction for null geodesics), taken on the
    /// refined continuous geodesic rather than the lattice path, which may
    /// bunch its slanted moves at one end: `(nearest time index, fraction of
    /// the fiber distance traversed)`.
    pub fn geodesic_point(&self, g: &GridGeodesic, lambda: f64) -> (usize, f64) {
        let (p, q) = (g.from, g.to);
        let d = self.fiber().d(p.x, q.x);
        let (tm, r) = self.warp.geodesic_point(self.time(p.t), self.time(q.t), d, lambda);
        let i = (((tm - self.warp.a()) / self.dt).round().max(0.0) as usize).clamp(p.t, q.t);
        (i, if d > 0.0 { r / d } else { lambda.clamp(0.0, 1.0) })
    }

    /// Cell weight `int_cell f^N dt * w(x)` over the Voronoi cell of each
    /// time sample; indexed `[t * nx + x]`.
    pub fn reference_measure(&self) -> Vec<f64> {
        let nx = self.fiber().n();
        let ts = self.warp.ts();
        let mut out = Vec::with_capacity(self.nt * nx);
        for i in 0..self.nt {
            let lo = if i == 0 { ts[0] } else { 0.5 * (ts[i - 1] + ts[i]) };
            let hi = if i + 1 == self.nt { ts[i] } else { 0.5 * (ts[i] + ts[i + 1]) };
            let base = self.warp.power_integral(lo, hi, self.spec.n);
            for x in 0..nx {
                out.push(base * self.weights[x]);
            }
        }
        out
    }

    pub fn fiber_weights(&self) -> &[f64] {
        &self.weights
    }

    /// `1/eps Y`: base interval and fiber scaled by `1/eps`, same sample values.
    pub fn rescale(&self, eps: f64) -> Result<GeneralizedCone> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        let mut spec = self.spec.clone();
        spec.warp = self.warp.rescale_time(0.0, eps);
        spec.fiber = self.fiber().scaled(1.0 / eps);
        GeneralizedCone::new(spec)
    }

    /// Max deviation of `l` between this cone and the one built from
    /// `(lambda f, X / lambda)`, over every table entry.
    pub fn scaling_isomorphism_check(&self, lambda: f64) -> Result<f64> {
        let mut spec = self.spec.clone();
        spec.warp = self.warp.scale_values(lambda);
        spec.fiber = self.fiber().scaled(1.0 / lambda);
        let other = GeneralizedCone::new(spec)?;
        let (a, b) = (self.tables(), other.tables());
        let mut worst: f64 = 0.0;
        for (x, y) in a.lo.iter().zip(&b.lo) {
            let dev = if x == y { 0.0 } else { (x - y).abs() };
            worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
        }
        Ok(worst)
    }

    /// Riemannian distance of `I x_f X` between grid points.
    pub fn metric_table(&self) -> &MetricTable {
        self.metric.get_or_init(|| self.build_metric())
    }

    pub fn d(&self, p: GridPoint, q: GridPoint) -> f64 {
        if p == q {
            return 0.0;
        }
        let j = self.nearest_col(self.fiber().d(p.x, q.x));
        self.metric_table().get(p.t, q.t, j)
    }

    fn build_metric(&self) -> MetricTable {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let (nt, nr) = (self.nt, self.nr);
        let width = nr + 1;
        let f = self.warp.vals();
        let (dt, dr) = (self.dt, self.dr);
        let steps: [(i64, usize); 9] = [(1, 0), (-1, 0), (0, 1), (1, 1), (-1, 1), (2, 1), (-2, 1), (1, 2), (-1, 2)];
        let rows: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|s| {
                let mut dist = vec![f64::INFINITY; nt * width];
                let mut heap = BinaryHeap::new();
                dist[s * width] = 0.0;
                heap.push((Reverse(Ord64(0.0)), s, 0usize));
                while let Some((Reverse(Ord64(d0)), i, j)) = heap.pop() {
                    if d0 > dist[i * width + j] {
                        continue;
                    }
                    for &(di, dj) in steps.iter() {
                        let ni = i as i64 + di;
                        let nj = j + dj;
                        if ni < 0 || ni >= nt as i64 || nj > nr {
                            continue;
                        }
                        let ni = ni as usize;
                        let fbar = 0.5 * (f[i] + f[ni]);
                        let w = ((di as f64 * dt).powi(2) + (fbar * dj as f64 * dr).powi(2)).sqrt();
                        let nd = d0 + w;
                        if nd < dist[ni * width + nj] {
                            dist[ni * width + nj] = nd;
                            heap.push((Reverse(Ord64(nd)), ni, nj));
                        }
                    }
                }
                // distance is nondecreasing in the fiber separation
                for i in 0..nt {
                    for j in (0..nr).rev() {
                        let v = dist[i * width + j + 1];
                        if v < dist[i * width + j] {
                            dist[i * width + j] = v;
                        }
                    }
                }
                dist
            })
            .collect();
        let mut d = Vec::with_capacity(nt * nt * width);
        for r in rows {
            d.extend(r);
        }
        MetricTable { nt, nr, d }
    }

    /// Points `z` with `p <= z <= q`.
    pub fn causal_diamond(&self, p: GridPoint, q: GridPoint) -> Vec<GridPoint> {
        self.points()
            .filter(|&z| z.t >= p.t && z.t <= q.t && self.causal(p, z) && self.causal(z, q))
            .collect()
    }

    /// Writes `(s, t, r, lo, hi)` rows.
    pub fn write_table_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let tb = self.tables();
        writeln!(w, "s,t,r,lo,hi")?;
        for s in 0..self.nt {
            for t in s..self.nt {
                for j in 0..=self.nr {
                    let k = tb.idx(s, t, j);
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        self.time(s),
                        self.time(t),
                        j as f64 * self.dr,
                        fmt_ext(tb.lo[k]),
                        fmt_ext(tb.hi[k])
                    )?;
                }
            }
        }
        Ok(())
    }
}

pub fn fmt_ext(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ord64(f64);

impl Eq for Ord64 {}

impl PartialOrd for Ord64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ord64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverLevel {
    pub k: usize,
    pub t_lo: usize,
    pub t_hi: usize,
    pub fiber_radius: f64,
    pub fiber_idx: Vec<usize>,
    /// Bound on the `d`-length of any causal curve inside the cover set.
    pub c_k: f64,
}

impl CoverLevel {
    pub fn contains(&self, p: GridPoint) -> bool {
        p.t >= self.t_lo && p.t <= self.t_hi && self.fiber_idx.binary_search(&p.x).is_ok()
    }

    pub fn points(&self) -> Vec<GridPoint> {
        (self.t_lo..=self.t_hi)
            .flat_map(|t| self.fiber_idx.iter().map(move |&x| GridPoint { t, x }))
            .collect()
    }
}

/// Exhaustion `U^k = I^k x B_{2^k}(o)`: `I^k` is centered at `center` (shifted
/// to stay inside `I`) with length `min(k, |I|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCover {
    pub center: f64,
    pub levels: Vec<CoverLevel>,
}

impl ConeCover {
    pub fn new(cone: &GeneralizedCone, center: f64, depth: usize) -> Self {
        let (a, b) = (cone.warp.a(), cone.warp.b());
        let len = b - a;
        let mut levels = Vec::with_capacity(depth);
        for k in 1..=depth {
            let l = (k as f64).min(len);
            let mut lo = center - 0.5 * l;
            let mut hi = center + 0.5 * l;
            if lo < a {
                hi += a - lo;
                lo = a;
            }
            if hi > b {
                lo -= hi - b;
                hi = b;
            }
            let lo = lo.max(a);
            let t_lo = (((lo - a) / cone.dt) - SNAP).ceil().max(0.0) as usize;
            let t_hi = ((((hi - a) / cone.dt) + SNAP).floor() as usize).min(cone.nt - 1);
            let radius = 2f64.powi(k as i32);
            let fiber_idx = cone.fiber().ball_indices(radius);
            let span = cone.time(t_hi) - cone.time(t_lo);
            levels.push(CoverLevel {
                k,
                t_lo,
                t_hi: t_hi.max(t_lo),
                fiber_radius: radius,
                fiber_idx,
                c_k: std::f64::consts::SQRT_2 * span,
            });
        }
        ConeCover { center, levels }
    }

    pub fn level(&self, k: usize) -> &CoverLevel {
        &self.levels[k - 1]
    }
}

/// `d`-length of a grid path: each step is a straight line in conformal
/// time, of length `sqrt(1 + sigma^2) dt` with `sigma = dr / du`.
pub fn path_d_length(cone: &GeneralizedCone, g: &GridGeodesic) -> f64 {
    g.states
        .windows(2)
        .map(|w| {
            let (i0, r0) = w[0];
            let (i1, r1) = w[1];
            let dtt = cone.time(i1) - cone.time(i0);
            let du = cone.conformal_span(i0, i1);
            let drr = (r1 - r0) as f64 * cone.dr;
            if du.is_infinite() {
                // through a zero of f the fiber motion costs nothing
                dtt
            } else {
                dtt * (1.0 + (drr / du).powi(2)).sqrt()
            }
        })
        .sum()
}
