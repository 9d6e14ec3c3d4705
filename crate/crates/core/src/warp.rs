//! Warping functions sampled on a grid, with the local slope, FK-concavity,
//! the constant `K_f`, normalization and FK-preserving mollification.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `sin_k`: solution of `v'' + k v = 0`, `v(0) = 0`, `v'(0) = 1`.
pub fn sin_k(k: f64, x: f64) -> f64 {
    if k > 0.0 {
        let s = k.sqrt();
        (s * x).sin() / s
    } else if k < 0.0 {
        let s = (-k).sqrt();
        (s * x).sinh() / s
    } else {
        x
    }
}

pub fn cos_k(k: f64, x: f64) -> f64 {
    if k > 0.0 {
        (k.sqrt() * x).cos()
    } else if k < 0.0 {
        ((-k).sqrt() * x).cosh()
    } else {
        1.0
    }
}

/// `cot_k = sin_k' / sin_k`.
pub fn cot_k(k: f64, x: f64) -> f64 {
    cos_k(k, x) / sin_k(k, x)
}

/// First positive zero of `sin_k`; infinite for `k <= 0`.
pub fn pi_k(k: f64) -> f64 {
    if k > 0.0 {
        std::f64::consts::PI / k.sqrt()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWarp", into = "RawWarp")]
pub struct WarpingFunction {
    a: f64,
    b: f64,
    ts: Vec<f64>,
    vals: Vec<f64>,
    zero: bool,
}

#[derive(Serialize, Deserialize)]
struct RawWarp {
    a: f64,
    b: f64,
    ts: Vec<f64>,
    vals: Vec<f64>,
}

impl TryFrom<RawWarp> for WarpingFunction {
    type Error = Error;
    fn try_from(r: RawWarp) -> Result<Self> {
        WarpingFunction::new(r.a, r.b, r.ts, r.vals)
    }
}

impl From<WarpingFunction> for RawWarp {
    fn from(w: WarpingFunction) -> Self {
        RawWarp { a: w.a, b: w.b, ts: w.ts, vals: w.vals }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Preset {
    Const { c: f64 },
    /// `c0 + c1 * t`
    Linear { c0: f64, c1: f64 },
    Sin,
    Cos,
    /// `sin_K(t - a)`
    SinK { k: f64 },
    /// `t^p`
    Power { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConcavityReport {
    #[serde(rename = "K")]
    pub k: f64,
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    pub kf: f64,
    pub argmin_g: usize,
    pub argmin_t: f64,
    pub tol: f64,
    pub fk_concave: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizeReport {
    pub lambda: f64,
    pub slope_bound_ok: bool,
    /// Worst excess of the discrete log-slope over the bound, with its location.
    pub worst_excess: f64,
    pub worst_t: f64,
}

impl WarpingFunction {
    pub fn new(a: f64, b: f64, ts: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("bad interval [{a}, {b}]")));
        }
        if ts.len() < 2 || ts.len() != vals.len() {
            return Err(Error::InvalidInput("need at least 2 samples and matching lengths".into()));
        }
        let span = b - a;
        if (ts[0] - a).abs() > 1e-12 * span.max(1.0) || (ts[ts.len() - 1] - b).abs() > 1e-12 * span.max(1.0) {
            return Err(Error::InvalidInput("sample grid must start at a and end at b".into()));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("sample grid must be strictly increasing".into()));
        }
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("warping values must be finite and nonnegative".into()));
        }
        let zero = vals.iter().all(|&v| v == 0.0);
        if !zero && vals[1..vals.len() - 1].iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidInput("warping function must be positive at interior samples".into()));
        }
        let mut ts = ts;
        ts[0] = a;
        let last = ts.len() - 1;
        ts[last] = b;
        Ok(WarpingFunction { a, b, ts, vals, zero })
    }

    /// Uniform sampling with `n` points (including both ends).
    pub fn sample(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        let ts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let vals = ts.iter().map(|&t| clean(f(t))).collect();
        Self::new(a, b, ts, vals)
    }

    pub fn preset(p: Preset, a: f64, b: f64, n: usize) -> Result<Self> {
        match p {
            Preset::Const { c } => Self::sample(a, b, n, |_| c),
            Preset::Linear { c0, c1 } => Self::sample(a, b, n, |t| c0 + c1 * t),
            Preset::Sin => Self::sample(a, b, n, f64::sin),
            Preset::Cos => Self::sample(a, b, n, f64::cos),
            Preset::SinK { k } => Self::sample(a, b, n, |t| sin_k(k, t - a)),
            Preset::Power { p } => Self::sample(a, b, n, |t| t.powf(p)),
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn max_val(&self) -> f64 {
        self.vals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        self.ts.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Piecewise-linear evaluation, clamped to `[a, b]`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.a {
            return self.vals[0];
        }
        if t >= self.b {
            return self.vals[self.vals.len() - 1];
        }
        let i = self.ts.partition_point(|&s| s <= t).min(self.ts.len() - 1).max(1);
        let (t0, t1) = (self.ts[i - 1], self.ts[i]);
        let w = (t - t0) / (t1 - t0);
        self.vals[i - 1] * (1.0 - w) + self.vals[i] * w
    }

    /// Maximum and minimum of the interpolant over `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (lo, hi) = (lo.max(self.a), hi.min(self.b));
        let mut mx = self.eval(lo).max(self.eval(hi));
        let mut mn = self.eval(lo).min(self.eval(hi));
        let start = self.ts.partition_point(|&s| s <= lo);
        for i in start..self.ts.len() {
            if self.ts[i] >= hi {
                break;
            }
            mx = mx.max(self.vals[i]);
            mn = mn.min(self.vals[i]);
        }
        (mx, mn)
    }

    /// Continuum time separation of `-[a,b] x_f R` between `(s, 0)` and `(t, d)`.
    ///
    /// `d/dr` is a Killing field, so a geodesic keeps `c = f^2 dr/dtau`; then
    /// `d(c) = int c / (f sqrt(f^2 + c^2)) dt` increases from 0 to the conformal
    /// span `int dt / f`, and `tau(c) = int f / sqrt(f^2 + c^2) dt`. Both have
    /// closed forms on linear pieces. The unique geodesic with `d(c) = d` is the
    /// maximizer. Returns `-inf` beyond the light cone.
    pub fn geodesic_tau(&self, s: f64, t: f64, d: f64) -> f64 {
        match self.geodesic_constant(s, t, d) {
            Geodesic::Invalid => f64::NEG_INFINITY,
            Geodesic::Vertical => t - s,
            Geodesic::Null => 0.0,
            Geodesic::Timelike(c) => self.pieces(s, t).iter().map(|&(h, f0, f1)| piece_tau(h, f0, f1, c)).sum(),
        }
    }

    fn geodesic_constant(&self, s: f64, t: f64, d: f64) -> Geodesic {
        if t < s {
            return Geodesic::Invalid;
        }
        if self.zero || d <= 0.0 {
            return Geodesic::Vertical;
        }
        let pieces = self.pieces(s, t);
        let span: f64 = pieces.iter().map(|&(h, f0, f1)| piece_d(h, f0, f1, f64::INFINITY)).sum();
        if d >= span {
            return if d <= span * (1.0 + 1e-12) { Geodesic::Null } else { Geodesic::Invalid };
        }
        let dist = |c: f64| pieces.iter().map(|&(h, f0, f1)| piece_d(h, f0, f1, c)).sum::<f64>();
        if span.is_infinite() && dist(f64::MIN_POSITIVE).is_infinite() {
            // through a zero of f every fiber distance is free
            return Geodesic::Timelike(0.0);
        }
        let mut hi = pieces.iter().map(|p| p.1.max(p.2)).fold(1e-300, f64::max);
        for _ in 0..2100 {
            if dist(hi) >= d {
                break;
            }
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dist(mid) < d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Geodesic::Timelike(0.5 * (lo + hi))
    }

    /// Point `(time, fiber distance from the start)` at `tau`-arclength fraction
    /// `lambda` of the maximizer from `(s, 0)` to `(t, d)`. Null geodesics are
    /// parametrized by time; a geodesic through a zero of `f` moves in the fiber
    /// proportionally to `lambda`.
    pub fn geodesic_point(&self, s: f64, t: f64, d: f64, lambda: f64) -> (f64, f64) {
        let lambda = lambda.clamp(0.0, 1.0);
        let at_time = |x: f64| s + lambda * (x - s);
        match self.geodesic_constant(s, t, d) {
            Geodesic::Invalid => (s, 0.0),
            Geodesic::Vertical => (at_time(t), if d > 0.0 { lambda * d } else { 0.0 }),
            Geodesic::Null => {
                let tm = at_time(t);
                let span = |x: f64| self.pieces(s, x).iter().map(|&(h, f0, f1)| piece_d(h, f0, f1, f64::INFINITY)).sum::<f64>();
                let (u, total) = (span(tm), span(t));
                let r = if total.is_finite() && total > 0.0 { d * u / total } else { lambda * d };
                (tm, r.min(d))
            }
            Geodesic::Timelike(c) if c == 0.0 => (at_time(t), lambda * d),
            Geodesic::Timelike(c) => {
                let tau_to = |x: f64| self.pieces(s, x).iter().map(|&(h, f0, f1)| piece_tau(h, f0, f1, c)).sum::<f64>();
                let target = lambda * tau_to(t);
                let (mut lo, mut hi) = (s, t);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if tau_to(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tm = 0.5 * (lo + hi);
                let r: f64 = self.pieces(s, tm).iter().map(|&(h, f0, f1)| piece_d(h, f0, f1, c)).sum();
                (tm, r.min(d))
            }
        }
    }

    /// Linear pieces `(length, f_start, f_end)` of the interpolant on `[s, t]`.
    fn pieces(&self, s: f64, t: f64) -> Vec<(f64, f64, f64)> {
        let (s, t) = (s.max(self.a), t.min(self.b));
        let mut cuts = vec![s];
        let start = self.ts.partition_point(|&x| x <= s);
        for &x in &self.ts[start..] {
            if x >= t {
                break;
            }
            cuts.push(x);
        }
        cuts.push(t);
        cuts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[1] - w[0], self.eval(w[0]), self.eval(w[1])))
            .collect()
    }

    /// Exact integral of the interpolant over `[lo, hi]` (clamped to `[a, b]`).
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.power_integral(lo, hi, 1.0)
    }

    /// `int_lo^hi f(t)^p dt`, Gauss-Legendre on each linear piece.
    pub fn power_integral(&self, lo: f64, hi: f64, p: f64) -> f64 {
        let (lo, hi) = (lo.max(self.a), hi.min(self.b));
        if hi <= lo {
            return 0.0;
        }
        let mut knots = vec![lo];
        knots.extend(self.ts.iter().cloned().filter(|&s| s > lo && s < hi));
        knots.push(hi);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let (f0, f1) = (self.eval(x0), self.eval(x1));
            if p == 1.0 {
                total += 0.5 * (f0 + f1) * (x1 - x0);
            } else {
                total += gauss5(|s| (f0 + (f1 - f0) * s).max(0.0).powf(p), 0.0, 1.0) * (x1 - x0);
            }
        }
        total
    }

    pub fn slope(&self, i: usize) -> f64 {
        let n = self.ts.len();
        let fwd = if i + 1 < n {
            (self.vals[i + 1] - self.vals[i]) / (self.ts[i + 1] - self.ts[i])
        } else {
            f64::NEG_INFINITY
        };
        let neg_bwd = if i > 0 {
            -(self.vals[i] - self.vals[i - 1]) / (self.ts[i] - self.ts[i - 1])
        } else {
            f64::NEG_INFINITY
        };
        fwd.max(neg_bwd).max(0.0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.slope(i)).collect()
    }

    /// Centered second difference at an interior sample (non-uniform stencil).
    pub fn second_diff(&self, i: usize) -> f64 {
        let (hm, hp) = (self.ts[i] - self.ts[i - 1], self.ts[i + 1] - self.ts[i]);
        2.0 * ((self.vals[i + 1] - self.vals[i]) / hp - (self.vals[i] - self.vals[i - 1]) / hm) / (hp + hm)
    }

    /// Centered first difference (one-sided at the ends).
    pub fn first_diff(&self, i: usize) -> f64 {
        let n = self.len();
        let (l, r) = if i == 0 {
            (0, 1)
        } else if i + 1 == n {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        (self.vals[r] - self.vals[l]) / (self.ts[r] - self.ts[l])
    }

    /// `G = K f^2 + |df|^2` at every sample.
    pub fn g_values(&self, k: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| k * self.vals[i] * self.vals[i] + self.slope(i).powi(2))
            .collect()
    }

    /// `K_f = -min G` and the minimizing index.
    pub fn kf(&self, k: f64) -> (f64, usize) {
        let g = self.g_values(k);
        let mut best = 0;
        for i in 1..g.len() {
            if g[i] < g[best] {
                best = i;
            }
        }
        (-g[best], best)
    }

    /// Discretization bound for `|G_pl - G_smooth|` (first-order slopes on a
    /// smooth profile): `h_max * max|df| * max|d2f|`.
    pub fn g_tolerance(&self) -> f64 {
        if self.len() < 3 {
            return 1e-9;
        }
        let smax = self.slopes().into_iter().filter(|s| s.is_finite()).fold(0.0, f64::max);
        let d2 = (1..self.len() - 1).map(|i| self.second_diff(i).abs()).fold(0.0, f64::max);
        1e-9 + self.h_max() * smax * d2
    }

    /// Default FK tolerance: `1e-6 (1 + |K| max f)` plus the `O(h^2)` stencil
    /// error of the FK-affine profile, `|K| max f h^2 / 8`.
    pub fn default_fk_tol(&self, k: f64) -> f64 {
        let m = self.max_val();
        1e-6 * (1.0 + k.abs() * m) + k.abs() * m * self.h_max().powi(2) / 8.0
    }

    pub fn fk_concavity(&self, k: f64) -> Result<ConcavityReport> {
        self.fk_concavity_tol(k, self.default_fk_tol(k))
    }

    pub fn fk_concavity_tol(&self, k: f64, tol: f64) -> Result<ConcavityReport> {
        if self.len() < 3 {
            return Err(Error::GridTooCoarse(self.len()));
        }
        let residuals: Vec<f64> = (1..self.len() - 1)
            .map(|i| self.second_diff(i) + k * self.vals[i])
            .collect();
        let max_violation = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (kf, argmin_g) = self.kf(k);
        Ok(ConcavityReport {
            k,
            residuals,
            max_violation,
            kf,
            argmin_g,
            argmin_t: self.ts[argmin_g],
            tol,
            fk_concave: max_violation <= tol,
        })
    }

    /// Interior index of the worst FK residual.
    pub fn worst_fk_point(&self, k: f64) -> Option<(usize, f64)> {
        (1..self.len().saturating_sub(1))
            .map(|i| (i, self.second_diff(i) + k * self.vals[i]))
            .max_by(|x, y| x.1.total_cmp(&y.1))
    }

    pub fn scale_values(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= lambda;
        }
        out.zero = out.vals.iter().all(|&v| v == 0.0);
        out
    }

    pub fn translate(&self, dt: f64) -> Self {
        WarpingFunction {
            a: self.a + dt,
            b: self.b + dt,
            ts: self.ts.iter().map(|t| t + dt).collect(),
            vals: self.vals.clone(),
            zero: self.zero,
        }
    }

    /// Time rescaling `t -> (t - center) / eps` with the same sample values.
    pub fn rescale_time(&self, center: f64, eps: f64) -> Self {
        let map = |t: f64| (t - center) / eps;
        WarpingFunction {
            a: map(self.a),
            b: map(self.b),
            ts: self.ts.iter().map(|&t| map(t)).collect(),
            vals: self.vals.clone(),
            zero: self.zero,
        }
    }

    /// Resample the interpolant uniformly on `[lo, hi]` with `n` points.
    pub fn resample(&self, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::sample(lo, hi, n, |t| self.eval(t))
    }

    /// `g = f / max f`, `lambda = max f`, and the discrete log-slope check
    /// `|(log g)'| <= max{cot_K(t - a), cot_K(b - t)}`.
    ///
    /// The check runs on each grid interval away from the ends: the difference
    /// quotient of `log g` is compared with the interval average of the bound,
    /// which is exact for `log sin_K` profiles.
    pub fn normalize_and_bound(&self, k: f64) -> Result<(WarpingFunction, NormalizeReport)> {
        let lambda = self.max_val();
        if lambda <= 0.0 {
            return Err(Error::ZeroFunction);
        }
        let g = self.scale_values(1.0 / lambda);
        let (a, b) = (g.a, g.b);
        let mut worst = f64::NEG_INFINITY;
        let mut worst_t = a;
        let n = g.len();
        for i in 1..n.saturating_sub(2) {
            let (t0, t1) = (g.ts[i], g.ts[i + 1]);
            let (v0, v1) = (g.vals[i], g.vals[i + 1]);
            if v0 <= 0.0 || v1 <= 0.0 {
                continue;
            }
            let q = ((v1.ln() - v0.ln()) / (t1 - t0)).abs();
            let avg_left = log_sin_k_increment(k, t0 - a, t1 - a) / (t1 - t0);
            let avg_right = -log_sin_k_increment(k, b - t0, b - t1) / (t1 - t0);
            let bound = avg_left.max(avg_right);
            let excess = if bound.is_nan() {
                f64::INFINITY
            } else {
                q - bound - 1e-9 * (1.0 + bound.abs())
            };
            if excess > worst {
                worst = excess;
                worst_t = 0.5 * (t0 + t1);
            }
        }
        if worst == f64::NEG_INFINITY {
            worst = 0.0;
        }
        let report = NormalizeReport {
            lambda,
            slope_bound_ok: worst <= 0.0,
            worst_excess: worst,
            worst_t,
        };
        Ok((g, report))
    }

    /// Moving-average smoothing that keeps FK-concavity for the relaxed
    /// constant `K' = K - eta |K|`.
    ///
    /// The profile is extended past each end before averaging: oddly when it
    /// vanishes there, otherwise by the `C^1` solution of `F'' + K' F = 0`.
    /// Both extensions keep `F'' + K' F <= 0` in the weak sense against the
    /// box kernel, so the average inherits it. The window half-width starts
    /// at `eta (b - a) / 2` and is halved on failure.
    pub fn mollify_fk(&self, k: f64, eta: f64) -> Result<WarpingFunction> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidInput(format!("eta = {eta} not in (0,1)")));
        }
        if self.len() < 3 {
            return Err(Error::GridTooCoarse(self.len()));
        }
        let kp = k - eta * k.abs();
        let mut delta = 0.5 * eta * (self.b - self.a);
        let mut last_violation = f64::INFINITY;
        for _ in 0..=10 {
            let ext = Extended::new(self, kp, delta);
            let vals: Vec<f64> = self
                .ts
                .iter()
                .map(|&t| clean(ext.integral(t - delta, t + delta) / (2.0 * delta)).max(0.0))
                .collect();
            let cand = WarpingFunction::new(self.a, self.b, self.ts.clone(), vals)?;
            let rep = cand.fk_concavity(kp)?;
            if rep.fk_concave {
                return Ok(cand);
            }
            last_violation = rep.max_violation;
            delta *= 0.5;
        }
        Err(Error::MollifyFailed { retries: 10, violation: last_violation })
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-14 {
        0.0
    } else {
        v
    }
}

/// `log sin_k(x1) - log sin_k(x0)`; infinite when `sin_k` is not positive.
fn log_sin_k_increment(k: f64, x0: f64, x1: f64) -> f64 {
    let (s0, s1) = (sin_k(k, x0), sin_k(k, x1));
    if s0 <= 0.0 || s1 <= 0.0 || x0 >= pi_k(k) || x1 >= pi_k(k) {
        return f64::NAN;
    }
    s1.ln() - s0.ln()
}

fn piece_tau(h: f64, f0: f64, f1: f64, c: f64) -> f64 {
    h * (f0 + f1) / ((f1 * f1 + c * c).sqrt() + (f0 * f0 + c * c).sqrt())
}

enum Geodesic {
    Invalid,
    Vertical,
    Null,
    Timelike(f64),
}

/// `int c / (f sqrt(f^2 + c^2)) dt` over one linear piece; `c = inf` gives
/// the conformal span `int dt / f`.
fn piece_d(h: f64, f0: f64, f1: f64, c: f64) -> f64 {
    if f0 <= 0.0 || f1 <= 0.0 {
        return if c > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let df = f1 - f0;
    if c.is_infinite() {
        return if df.abs() <= 1e-12 * f0.max(f1) { h * 2.0 / (f0 + f1) } else { h * (f1.ln() - f0.ln()) / df };
    }
    if df.abs() <= 1e-4 * f0.max(f1) {
        return gauss5(|x| {
            let f = f0 + df * x / h;
            c / (f * (f * f + c * c).sqrt())
        }, 0.0, h);
    }
    h * ((c / f0).asinh() - (c / f1).asinh()) / df
}

fn gauss5(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    X.iter().zip(W.iter()).map(|(x, w)| w * f(m + r * x)).sum::<f64>() * r
}

/// Profile extended past `[a, b]` for mollification.
struct Extended<'a> {
    f: &'a WarpingFunction,
    kp: f64,
    left: EndExt,
    right: EndExt,
}

enum EndExt {
    Odd,
    /// `F(end + s) = v cos_K(s) + d sin_K(s)` with `s` measured outward.
    Affine { v: f64, d: f64 },
}

impl<'a> Extended<'a> {
    fn new(f: &'a WarpingFunction, kp: f64, _delta: f64) -> Self {
        let n = f.len();
        let left = if f.vals[0] <= 1e-14 {
            EndExt::Odd
        } else {
            let d = -(f.vals[1] - f.vals[0]) / (f.ts[1] - f.ts[0]);
            EndExt::Affine { v: f.vals[0], d }
        };
        let right = if f.vals[n - 1] <= 1e-14 {
            EndExt::Odd
        } else {
            let d = (f.vals[n - 1] - f.vals[n - 2]) / (f.ts[n - 1] - f.ts[n - 2]);
            EndExt::Affine { v: f.vals[n - 1], d }
        };
        Extended { f, kp, left, right }
    }

    fn eval(&self, t: f64) -> f64 {
        let (a, b) = (self.f.a, self.f.b);
        if t < a {
            let s = a - t;
            match self.left {
                EndExt::Odd => -self.f.eval(a + s),
                EndExt::Affine { v, d } => v * cos_k(self.kp, s) + d * sin_k(self.kp, s),
            }
        } else if t > b {
            let s = t - b;
            match self.right {
                EndExt::Odd => -self.f.eval(b - s),
                EndExt::Affine { v, d } => v * cos_k(self.kp, s) + d * sin_k(self.kp, s),
            }
        } else {
            self.f.eval(t)
        }
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = (self.f.a, self.f.b);
        let mut total = self.f.integral(lo.max(a), hi.min(b));
        for (x0, x1) in [(lo, hi.min(a)), (lo.max(b), hi)] {
            if x1 > x0 {
                let m = 32;
                let h = (x1 - x0) / m as f64;
                for j in 0..m {
                    let s0 = x0 + j as f64 * h;
                    total += gauss5(|t| self.eval(t), s0, s0 + h);
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn slope_examples() {
        let c = WarpingFunction::preset(Preset::Const { c: 1.0 }, 0.0, 1.0, 11).unwrap();
        assert!(c.slopes().iter().all(|&s| s == 0.0));
        let l = WarpingFunction::preset(Preset::Linear { c0: 0.0, c1: 1.0 }, 0.0, 1.0, 11).unwrap();
        assert_abs_diff_eq!(l.slope(5), 1.0, epsilon = 1e-12);
        let s = WarpingFunction::preset(Preset::Sin, 0.0, PI, 201).unwrap();
        assert_eq!(s.slope(100), 0.0);
        // boundary convention: at a local max on the boundary the slope is 0
        let d = WarpingFunction::preset(Preset::Linear { c0: 1.0, c1: -1.0 }, 0.0, 1.0, 11).unwrap();
        assert_eq!(d.slope(0), 0.0);
        assert_abs_diff_eq!(d.slope(10), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fk_examples() {
        let s = WarpingFunction::preset(Preset::Sin, 0.0, PI, 201).unwrap();
        let r = s.fk_concavity(1.0).unwrap();
        assert!(r.max_violation <= 1e-3);
        assert!(r.fk_concave);
        assert_abs_diff_eq!(r.kf, -1.0, epsilon = 1e-2);

        let c = WarpingFunction::preset(Preset::Const { c: 1.0 }, 0.0, 1.0, 11).unwrap();
        let r = c.fk_concavity(0.0).unwrap();
        assert!(r.residuals.iter().all(|&x| x == 0.0));
        assert_eq!(r.kf, 0.0);

        let p = WarpingFunction::sample(0.0, PI, 201, |t| t.sin() + 0.1).unwrap();
        let r = p.fk_concavity(1.0).unwrap();
        assert_abs_diff_eq!(r.max_violation, 0.1, epsilon = 1e-3);
        assert!(!r.fk_concave);

        let tiny = WarpingFunction::sample(0.0, 1.0, 2, |_| 1.0).unwrap();
        assert!(matches!(tiny.fk_concavity(0.0), Err(Error::GridTooCoarse(2))));
    }

    #[test]
    fn normalize_examples() {
        let s = WarpingFunction::sample(0.0, PI, 201, |t| 2.0 * t.sin()).unwrap();
        let (g, rep) = s.normalize_and_bound(1.0).unwrap();
        assert_abs_diff_eq!(rep.lambda, 2.0, epsilon = 1e-4);
        assert!(rep.slope_bound_ok);
        assert_abs_diff_eq!(g.eval(1.0), 1.0f64.sin(), epsilon = 1e-3);

        let c = WarpingFunction::preset(Preset::Const { c: 5.0 }, 0.0, 1.0, 11).unwrap();
        let (g, rep) = c.normalize_and_bound(0.0).unwrap();
        assert_eq!(rep.lambda, 5.0);
        assert!(g.vals().iter().all(|&v| v == 1.0));
        assert!(rep.slope_bound_ok);

        // 1/t <= 1/(t - 0.1) everywhere on (0.1, 1]
        let l = WarpingFunction::preset(Preset::Linear { c0: 0.0, c1: 1.0 }, 0.1, 1.0, 91).unwrap();
        assert!(l.normalize_and_bound(0.0).unwrap().1.slope_bound_ok);

        let z = WarpingFunction::sample(0.0, 1.0, 5, |_| 0.0).unwrap();
        assert!(matches!(z.normalize_and_bound(0.0), Err(Error::ZeroFunction)));
    }

    #[test]
    fn mollify_examples() {
        let l = WarpingFunction::preset(Preset::Linear { c0: 0.5, c1: 2.0 }, 0.0, 1.0, 51).unwrap();
        let m = l.mollify_fk(0.0, 0.3).unwrap();
        for (x, y) in l.vals().iter().zip(m.vals()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }

        let s = WarpingFunction::preset(Preset::Sin, 0.0, PI, 201).unwrap();
        let m = s.mollify_fk(1.0, 0.1).unwrap();
        assert!(m.fk_concavity(0.9).unwrap().fk_concave);
        let gap = s.vals().iter().zip(m.vals()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap <= 0.05, "gap {gap}");

        let tent = WarpingFunction::new(0.0, 2.0, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0])
            .unwrap()
            .resample(0.0, 2.0, 201)
            .unwrap();
        let m = tent.mollify_fk(0.0, 0.05).unwrap();
        assert!(m.fk_concavity(0.0).unwrap().fk_concave);
        let gap = tent.vals().iter().zip(m.vals()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap <= 0.05, "gap {gap}");
    }

    #[test]
    fn json_round_trip() {
        let s = WarpingFunction::preset(Preset::Cos, -1.0, 1.0, 5).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.starts_with("{\"a\":"));
        let back: WarpingFunction = serde_json::from_str(&js).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<WarpingFunction>(r#"{"a":0,"b":1,"ts":[0,0.5,1],"vals":[1,0,1]}"#).is_err());
    }

    #[test]
    fn trig_helpers() {
        assert_abs_diff_eq!(cot_k(1.0, 0.3), 0.3f64.tan().recip(), epsilon = 1e-14);
        assert_abs_diff_eq!(cot_k(-1.0, 0.3), 0.3f64.tanh().recip(), epsilon = 1e-14);
        assert_abs_diff_eq!(cot_k(0.0, 0.3), 1.0 / 0.3, epsilon = 1e-14);
        assert_eq!(pi_k(-1.0), f64::INFINITY);
        assert_abs_diff_eq!(pi_k(4.0), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn geodesic_tau_closed_forms() {
        let flat = WarpingFunction::sample(0.0, 2.0, 11, |_| 1.0).unwrap();
        assert!((flat.geodesic_tau(0.1, 1.7, 0.9) - (1.6f64 * 1.6 - 0.81).sqrt()).abs() < 1e-12);
        assert_eq!(flat.geodesic_tau(0.0, 1.0, 1.5), f64::NEG_INFINITY);
        let cone = WarpingFunction::sample(0.5, 2.0, 7, |t| t).unwrap();
        for (s, t, d) in [(0.5, 2.0, 1.0), (0.6, 1.9, 0.3), (1.0, 1.1, 0.05)] {
            let want = (s * s + t * t - 2.0 * s * t * f64::cosh(d)).sqrt();
            assert!((cone.geodesic_tau(s, t, d) - want).abs() < 1e-10, "{s} {t} {d}");
        }
        let tip = WarpingFunction::sample(0.0, 1.0, 5, |t| t).unwrap();
        assert!((tip.geodesic_tau(0.0, 0.8, 3.0) - 0.8).abs() < 1e-12);
    }
}
