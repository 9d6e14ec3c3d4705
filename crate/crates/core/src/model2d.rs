//! Two-dimensional Lorentzian model spaces `L2(K)` and the 4-point
//! timelike curvature comparison.
//!
//! `K = 0` is Minkowski space in `(t, x)`. For `K != 0` points live on a
//! quadric in `R^{2,1}` with `r = 1 / sqrt|K|`, parametrized by a global time
//! chart of the universal cover:
//!
//! * `K < 0` (anti-de Sitter): `p = (r ch cos(t/r), r ch sin(t/r), r sinh(x/r))`,
//!   `ch = cosh(x/r)`, form `-dz0^2 - dz1^2 + dz2^2`, `<p,p> = -r^2`,
//!   metric `-cosh^2(x/r) dt^2 + dx^2`. Timelike geodesics refocus after `pi r`.
//! * `K > 0` (de Sitter): `p = (r sinh(t/r), r cosh(t/r) cos(x/r), r cosh(t/r) sin(x/r))`,
//!   form `-dz0^2 + dz1^2 + dz2^2`, `<p,p> = r^2`, metric `-dt^2 + cosh^2(t/r) dx^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{GeneralizedCone, GridPoint};
use crate::warp::pi_k;
use crate::{Error, Result, Verdict};

const NORM_TOL: f64 = 1e-12;
const REALIZE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelPoint {
    #[serde(rename = "K")]
    pub k: f64,
    /// Chart coordinates `(t, x)`.
    pub t: f64,
    pub x: f64,
}

impl ModelPoint {
    pub fn new(k: f64, t: f64, x: f64) -> Self {
        ModelPoint { k, t, x }
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.k.abs().sqrt()
    }

    /// Coordinates in `R^{2,1}`; for `K = 0`, `(t, x, 0)`.
    pub fn embedding(&self) -> [f64; 3] {
        let (t, x) = (self.t, self.x);
        if self.k == 0.0 {
            return [t, x, 0.0];
        }
        let r = self.radius();
        if self.k < 0.0 {
            let ch = (x / r).cosh();
            [r * ch * (t / r).cos(), r * ch * (t / r).sin(), r * (x / r).sinh()]
        } else {
            let ch = (t / r).cosh();
            [r * (t / r).sinh(), r * ch * (x / r).cos(), r * ch * (x / r).sin()]
        }
    }

    /// Inverse of [`embedding`](Self::embedding), choosing the chart time
    /// branch nearest `t_hint` (AdS time is only defined mod `2 pi r`).
    pub fn from_embedding(k: f64, z: [f64; 3], t_hint: f64) -> Self {
        if k == 0.0 {
            return ModelPoint::new(k, z[0], z[1]);
        }
        let r = 1.0 / k.abs().sqrt();
        if k < 0.0 {
            let x = r * (z[2] / r).asinh();
            let mut t = r * z[1].atan2(z[0]);
            let period = 2.0 * std::f64::consts::PI * r;
            t += period * ((t_hint - t) / period).round();
            ModelPoint::new(k, t, x)
        } else {
            let t = r * (z[0] / r).asinh();
            let x = r * z[2].atan2(z[1]);
            ModelPoint::new(k, t, x)
        }
    }
}

/// Bilinear form of the ambient `R^{2,1}` for curvature `k`.
pub fn inner(k: f64, p: [f64; 3], q: [f64; 3]) -> f64 {
    if k == 0.0 {
        -p[0] * q[0] + p[1] * q[1]
    } else if k < 0.0 {
        -p[0] * q[0] - p[1] * q[1] + p[2] * q[2]
    } else {
        -p[0] * q[0] + p[1] * q[1] + p[2] * q[2]
    }
}

/// Timelike diameter bound `pi_{-K}` of the comparison condition.
pub fn model_diameter(k: f64) -> f64 {
    pi_k(-k)
}

/// Signed time separation in `L2(K)`: `tau` on causal pairs, `-inf` otherwise.
/// For `K < 0` pairs at least `pi r` apart in chart time get the timelike
/// diameter `pi r`.
pub fn model_tau(p: &ModelPoint, q: &ModelPoint) -> Result<f64> {
    if p.k != q.k {
        return Err(Error::MixedModels(p.k, q.k));
    }
    let k = p.k;
    let dt = q.t - p.t;
    if dt == 0.0 && q.x == p.x {
        return Ok(0.0);
    }
    if dt < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if k == 0.0 {
        let dx = q.x - p.x;
        let s = dt * dt - dx * dx;
        return Ok(if s >= -NORM_TOL * (dt * dt).max(1.0) { s.max(0.0).sqrt() } else { f64::NEG_INFINITY });
    }
    let r = p.radius();
    let (zp, zq) = (p.embedding(), q.embedding());
    if k < 0.0 {
        let pi_r = std::f64::consts::PI * r;
        let c = -inner(k, zp, zq) / (r * r);
        if dt >= pi_r {
            // beyond the first conjugate time every point is in the future
            return Ok(pi_r);
        }
        if c > 1.0 + NORM_TOL {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(r * c.clamp(-1.0, 1.0).acos())
    } else {
        if (q.x - p.x).abs() >= std::f64::consts::PI * r {
            return Ok(f64::NEG_INFINITY);
        }
        let c = inner(k, zp, zq) / (r * r);
        if c < 1.0 - NORM_TOL {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(r * c.max(1.0).acosh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Future,
    Past,
}

/// A 4-point configuration given by its separations. For the past case
/// `z2 <= z1 << x << y` the values are stored time-reversed, so both cases
/// share the future comparison: `tau_yx = tau(x, y)`, `tau_yz[i] = tau(z_i, y)`,
/// `tau_xz[i] = tau(z_i, x)` and `tau_z1z2 = tau(z2, z1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FourPointConfig {
    pub orientation: Orientation,
    pub tau_yx: f64,
    pub tau_yz: [f64; 2],
    pub tau_xz: [f64; 2],
    pub tau_z1z2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<[GridPoint; 4]>,
}

impl FourPointConfig {
    pub fn future(tau_yx: f64, tau_yz: [f64; 2], tau_xz: [f64; 2], tau_z1z2: f64) -> Self {
        FourPointConfig { orientation: Orientation::Future, tau_yx, tau_yz, tau_xz, tau_z1z2, points: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub y: ModelPoint,
    pub x: ModelPoint,
    pub z: [ModelPoint; 2],
    /// Largest deviation of the five realized separations.
    pub residual: f64,
}

impl Comparison {
    /// `tau(z1_bar, z2_bar)`, zero when the comparison points are not causal.
    pub fn tau_bar(&self) -> f64 {
        model_tau(&self.z[0], &self.z[1]).map(|v| v.max(0.0)).unwrap_or(0.0)
    }
}

/// Places `y_bar` at the chart origin, `x_bar` on the time axis and solves
/// for `z_bar_i` in closed form from the two inner products, `z1` at `x >= 0`
/// and `z2` at `x <= 0`.
pub fn realize_comparison(cfg: &FourPointConfig, k: f64) -> Result<Comparison> {
    let diam = model_diameter(k);
    if !(cfg.tau_yz[1] < diam) || !(cfg.tau_yz[0] < diam) {
        return Err(Error::DomainViolation(format!(
            "tau(y, z) = {} not below pi_(-K) = {diam}",
            cfg.tau_yz[1].max(cfg.tau_yz[0])
        )));
    }
    let c = cfg.tau_yx;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Unrealizable(format!("tau(y, x) = {c} must be positive")));
    }
    let y = ModelPoint::new(k, 0.0, 0.0);
    let x = ModelPoint::new(k, c, 0.0);
    let mut z = [y; 2];
    for i in 0..2 {
        let (a, b) = (cfg.tau_yz[i], cfg.tau_xz[i]);
        let side = if i == 0 { 1.0 } else { -1.0 };
        z[i] = solve_third(k, c, a, b, side)?;
    }
    let mut residual: f64 = 0.0;
    let checks = [
        (model_tau(&y, &x)?, c),
        (model_tau(&y, &z[0])?, cfg.tau_yz[0]),
        (model_tau(&y, &z[1])?, cfg.tau_yz[1]),
        (model_tau(&x, &z[0])?, cfg.tau_xz[0]),
        (model_tau(&x, &z[1])?, cfg.tau_xz[1]),
    ];
    for (got, want) in checks {
        residual = residual.max((got - want).abs());
    }
    if !(residual <= REALIZE_TOL) {
        return Err(Error::Unrealizable(format!("realized separations off by {residual:e}")));
    }
    Ok(Comparison { y, x, z, residual })
}

/// Point `z` with `tau(o, z) = a`, `tau(x, z) = b` where `o` is the origin and
/// `x = (c, 0)`, on the side `sign(x) = side`.
fn solve_third(k: f64, c: f64, a: f64, b: f64, side: f64) -> Result<ModelPoint> {
    let unreal = |what: &str, v: f64| Error::Unrealizable(format!("{what} (a={a}, b={b}, c={c}): {v:e}"));
    if k == 0.0 {
        let t = (a * a - b * b + c * c) / (2.0 * c);
        let x2 = t * t - a * a;
        if x2 < -REALIZE_TOL * (1.0 + t * t) {
            return Err(unreal("no real solution", x2));
        }
        return Ok(ModelPoint::new(0.0, t, side * x2.max(0.0).sqrt()));
    }
    let r = 1.0 / k.abs().sqrt();
    let z = if k < 0.0 {
        let z0 = r * (a / r).cos();
        let z1 = (r * (b / r).cos() - (c / r).cos() * z0) / (c / r).sin();
        let z2sq = z0 * z0 + z1 * z1 - r * r;
        if z2sq < -REALIZE_TOL * r * r {
            return Err(unreal("no real solution", z2sq));
        }
        [z0, z1, side * z2sq.max(0.0).sqrt()]
    } else {
        let z1 = r * (a / r).cosh();
        let z0 = ((c / r).cosh() * z1 - r * (b / r).cosh()) / (c / r).sinh();
        let z2sq = r * r + z0 * z0 - z1 * z1;
        if z2sq < -REALIZE_TOL * r * r {
            return Err(unreal("no real solution", z2sq));
        }
        [z0, z1, side * z2sq.max(0.0).sqrt()]
    };
    Ok(ModelPoint::from_embedding(k, z, a.max(c)))
}

/// Margin `tau(z1, z2) - tau_bar(z1_bar, z2_bar)` of one configuration.
pub fn config_margin(cfg: &FourPointConfig, k: f64) -> Result<(f64, Comparison)> {
    let cmp = realize_comparison(cfg, k)?;
    Ok((cfg.tau_z1z2 - cmp.tau_bar(), cmp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigDump {
    pub config: FourPointConfig,
    pub comparison: Comparison,
    pub margin: f64,
    /// `hi - lo` for the pair `(z1, z2)`.
    pub bracket_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TcbbReport {
    #[serde(rename = "K")]
    pub k: f64,
    pub seed: u64,
    pub requested: usize,
    pub attempts: usize,
    pub valid: usize,
    pub future: usize,
    pub past: usize,
    pub excluded_domain: usize,
    pub excluded_unrealizable: usize,
    pub tol: f64,
    pub worst_margin: f64,
    /// Worst margin when the five realized separations are the raw lower
    /// table values instead of the geodesic refinement (diagnostic).
    #[serde(with = "crate::extf64")]
    pub worst_margin_table: f64,
    /// Largest `hi - lo` gap over all sampled separations.
    pub max_bracket_width: f64,
    pub worst: Option<ConfigDump>,
    pub verdict: Verdict,
}

const MAX_ATTEMPTS_PER_SAMPLE: usize = 400;
const MIN_VALID: usize = 10;

/// Samples grid 4-point configurations (half future, half past), realizes
/// their comparisons and reports the worst margin. Causal relations are read
/// from the lower table; the compared separation `tau(z1, z2)` comes from the
/// upper table and the five realized ones from the geodesic refinement
/// (clamped into the table bracket).
pub fn tcbb_verify(cone: &GeneralizedCone, k: f64, samples: usize, tol: f64, seed: u64) -> Result<TcbbReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = cone.nt();
    let nx = cone.fiber().n();
    let diam = model_diameter(k);
    let mut configs = Vec::with_capacity(samples);
    let mut attempts = 0;
    let mut excluded_domain = 0;
    let mut max_width: f64 = 0.0;
    let lo = |p: GridPoint, q: GridPoint| cone.signed_separation(p, q);
    let geo = |p: GridPoint, q: GridPoint| cone.tau_geodesic(p, q);
    let hi = |p: GridPoint, q: GridPoint| cone.signed_separation_hi(p, q);
    while configs.len() < samples && attempts < samples * MAX_ATTEMPTS_PER_SAMPLE {
        attempts += 1;
        let mut ts: Vec<usize> = (0..4).map(|_| rng.gen_range(0..nt)).collect();
        ts.sort_unstable();
        let xs: Vec<usize> = (0..4).map(|_| rng.gen_range(0..nx)).collect();
        let pts: Vec<GridPoint> = ts.iter().zip(&xs).map(|(&t, &x)| GridPoint::new(t, x)).collect();
        let past = configs.len() % 2 == 1;
        // future: y << x << z1 <= z2 ; past: z2 <= z1 << x << y, in time order
        let (y, x, z1, z2) = if past { (pts[3], pts[2], pts[1], pts[0]) } else { (pts[0], pts[1], pts[2], pts[3]) };
        let (ord, pairs) = if past {
            ([(x, y), (z1, x), (z2, z1)], [(x, y), (z1, y), (z2, y), (z1, x), (z2, x)])
        } else {
            ([(y, x), (x, z1), (z1, z2)], [(y, x), (y, z1), (y, z2), (x, z1), (x, z2)])
        };
        if !(lo(ord[0].0, ord[0].1) > 0.0 && lo(ord[1].0, ord[1].1) > 0.0 && cone.causal(ord[2].0, ord[2].1)) {
            continue;
        }
        let rel_lo = pairs.map(|(a, b)| lo(a, b));
        if rel_lo.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            continue;
        }
        let rel = pairs.map(|(a, b)| geo(a, b));
        if !(rel[2] < diam) {
            excluded_domain += 1;
            continue;
        }
        let (zp, zq) = ord[2];
        let left = hi(zp, zq).max(0.0);
        let width = left - lo(zp, zq).max(0.0);
        for (a, b) in pairs {
            max_width = max_width.max(hi(a, b).max(0.0) - lo(a, b).max(0.0));
        }
        max_width = max_width.max(width);
        let cfg = FourPointConfig {
            orientation: if past { Orientation::Past } else { Orientation::Future },
            tau_yx: rel[0],
            tau_yz: [rel[1], rel[2]],
            tau_xz: [rel[3], rel[4]],
            tau_z1z2: left,
            points: Some([y, x, z1, z2]),
        };
        let raw = FourPointConfig {
            tau_yx: rel_lo[0],
            tau_yz: [rel_lo[1], rel_lo[2]],
            tau_xz: [rel_lo[3], rel_lo[4]],
            ..cfg.clone()
        };
        configs.push((cfg, raw, width));
    }
    let results: Vec<(std::result::Result<(f64, Comparison), bool>, Option<f64>)> = configs
        .par_iter()
        .map(|(cfg, raw, _)| {
            let res = match config_margin(cfg, k) {
                Ok(v) => Ok(v),
                Err(Error::DomainViolation(_)) => Err(true),
                Err(_) => Err(false),
            };
            (res, config_margin(raw, k).ok().map(|m| m.0))
        })
        .collect();
    let mut worst_table = f64::INFINITY;
    let mut worst: Option<ConfigDump> = None;
    let mut valid = 0;
    let (mut future, mut past) = (0, 0);
    let mut excluded_unrealizable = 0;
    for ((cfg, _, width), (res, raw)) in configs.into_iter().zip(results) {
        if let Some(m) = raw {
            worst_table = worst_table.min(m);
        }
        match res {
            Ok((margin, comparison)) => {
                valid += 1;
                match cfg.orientation {
                    Orientation::Future => future += 1,
                    Orientation::Past => past += 1,
                }
                if worst.as_ref().map_or(true, |w| margin < w.margin) {
                    worst = Some(ConfigDump { config: cfg, comparison, margin, bracket_width: width });
                }
            }
            Err(true) => excluded_domain += 1,
            Err(false) => excluded_unrealizable += 1,
        }
    }
    if valid < MIN_VALID {
        return Err(Error::InsufficientSamples { got: valid, need: MIN_VALID });
    }
    let worst_margin = worst.as_ref().map(|w| w.margin).unwrap_or(0.0);
    Ok(TcbbReport {
        k,
        seed,
        requested: samples,
        attempts,
        valid,
        future,
        past,
        excluded_domain,
        excluded_unrealizable,
        tol,
        worst_margin,
        worst_margin_table: worst_table,
        max_bracket_width: max_width,
        worst,
        verdict: if worst_margin >= -tol { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Verdict for injected configurations (no cone behind them).
pub fn tcbb_verify_configs(configs: &[FourPointConfig], k: f64, tol: f64) -> Result<(f64, Verdict)> {
    let mut worst = f64::INFINITY;
    for cfg in configs {
        let (m, _) = config_margin(cfg, k)?;
        worst = worst.min(m);
    }
    Ok((worst, if worst >= -tol { Verdict::Pass } else { Verdict::Fail }))
}
