//! Scalar curvature reductions for smooth warped products `-I x_f M`.
//!
//! The fiber is only sampled, so its curvature bound is a declared input.
//! Both reductions check `f'' + K f <= 0` on the grid and compare the
//! declared fiber bound against `K_f = -inf (K f^2 + |df|^2)` recomputed
//! from the profile.

use serde::{Deserialize, Serialize};

use crate::warp::WarpingFunction;
use crate::{Error, Result};

/// Below this `f` is treated as zero by the O'Neill diagnostics.
pub const NEAR_ZERO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Reduction {
    Ricci,
    Sectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvatureReductionReport {
    pub reduction: Reduction,
    #[serde(rename = "K")]
    pub k: f64,
    /// Fiber dimension; `None` for the sectional reduction.
    pub n: Option<usize>,
    pub fiber_bound: f64,
    pub fiber_bound_source: String,
    pub cond1: bool,
    pub cond1_violation: f64,
    pub cond1_tol: f64,
    /// Worst FK residual location.
    pub cond1_t: f64,
    pub kf: f64,
    pub kf_t: f64,
    /// `(n - 1) K_f` for Ricci, `K_f` for sectional.
    pub threshold: f64,
    pub cond2: bool,
    pub cond2_tol: f64,
    pub verdict: bool,
}

fn reduce(f: &WarpingFunction, k: f64, n: Option<usize>, fiber_bound: f64) -> Result<CurvatureReductionReport> {
    if !fiber_bound.is_finite() || !k.is_finite() {
        return Err(Error::InvalidInput("K and the fiber bound must be finite".into()));
    }
    let fk = f.fk_concavity(k)?;
    let (cond1_t, _) = f
        .worst_fk_point(k)
        .map(|(i, v)| (f.ts()[i], v))
        .unwrap_or((f.a(), 0.0));
    let mult = n.map_or(1.0, |n| n as f64 - 1.0);
    let threshold = mult * fk.kf;
    let cond2_tol = mult.max(1.0) * f.g_tolerance();
    let cond2 = fiber_bound >= threshold - cond2_tol;
    Ok(CurvatureReductionReport {
        reduction: if n.is_some() { Reduction::Ricci } else { Reduction::Sectional },
        k,
        n,
        fiber_bound,
        fiber_bound_source: "declared by caller; not computed from the sampled fiber".into(),
        cond1: fk.fk_concave,
        cond1_violation: fk.max_violation,
        cond1_tol: fk.tol,
        cond1_t,
        kf: fk.kf,
        kf_t: fk.argmin_t,
        threshold,
        cond2,
        cond2_tol,
        verdict: fk.fk_concave && cond2,
    })
}

/// `ric >= n K` on `I x_f M` versus `f'' + K f <= 0` and
/// `ric_M >= (n - 1) K_f`.
pub fn ricci_reduction(f: &WarpingFunction, k: f64, n: usize, fiber_ric_bound: f64) -> Result<CurvatureReductionReport> {
    if n == 0 {
        return Err(Error::InvalidInput("fiber dimension must be at least 1".into()));
    }
    reduce(f, k, Some(n), fiber_ric_bound)
}

/// `R >= -K` on `-I x_f M` versus `f'' + K f <= 0` and `R^M >= K_f`.
pub fn sectional_reduction(f: &WarpingFunction, k: f64, fiber_sec_bound: f64) -> Result<CurvatureReductionReport> {
    reduce(f, k, None, fiber_sec_bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OneillPoint {
    pub t: f64,
    /// `Ric(d_t, d_t) = -n f''/f`
    pub radial: f64,
    /// `Ric(d_t, V)`, identically zero.
    pub mixed: f64,
    /// Coefficient `f''/f + (n - 1) f'^2/f^2` added to `Ric_M` on `<V, W>`.
    pub tangential: f64,
    pub near_zero: bool,
}

/// The three O'Neill coefficients at every interior sample, from centred
/// differences. Points with `f < NEAR_ZERO` are flagged and carry NaN.
pub fn oneill_diagnostics(f: &WarpingFunction, n: usize) -> Result<Vec<OneillPoint>> {
    if f.len() < 3 {
        return Err(Error::GridTooCoarse(f.len()));
    }
    let nf = n as f64;
    Ok((1..f.len() - 1)
        .map(|i| {
            let v = f.vals()[i];
            let t = f.ts()[i];
            if v < NEAR_ZERO {
                return OneillPoint { t, radial: f64::NAN, mixed: 0.0, tangential: f64::NAN, near_zero: true };
            }
            let d2 = f.second_diff(i) / v;
            let d1 = f.first_diff(i) / v;
            OneillPoint {
                t,
                radial: -nf * d2,
                mixed: 0.0,
                tangential: d2 + (nf - 1.0) * d1 * d1,
                near_zero: false,
            }
        })
        .collect())
}

/// Lower bound for `Ric(V, V) / <V, V>` on tangential unit vectors implied
/// by `Ric_M >= fiber_ric_bound`: `fiber_ric_bound / f^2` plus the
/// tangential coefficient. Compare with `-n K`.
pub fn tangential_ricci_bound(f: &WarpingFunction, n: usize, fiber_ric_bound: f64) -> Result<Vec<(f64, f64)>> {
    Ok(oneill_diagnostics(f, n)?
        .into_iter()
        .zip(&f.vals()[1..f.len() - 1])
        .filter(|(p, _)| !p.near_zero)
        .map(|(p, &v)| (p.t, fiber_ric_bound / (v * v) + p.tangential))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MonotonicityWitness {
    pub at_k: CurvatureReductionReport,
    pub at_k_prime: CurvatureReductionReport,
}

/// Sectional reduction of the same profile and fiber bound at `K` and at
/// `K' < K`. For `f = sin` on `[0, pi]` and fiber bound `-1` it passes at
/// `K = 1` and fails at `K' = 0`: a lower bound `-K` does not give `-K'`.
pub fn monotonicity_witness(f: &WarpingFunction, k: f64, k_prime: f64, fiber_sec_bound: f64) -> Result<MonotonicityWitness> {
    if !(k_prime < k) {
        return Err(Error::InvalidInput(format!("need K' < K, got K' = {k_prime}, K = {k}")));
    }
    Ok(MonotonicityWitness {
        at_k: sectional_reduction(f, k, fiber_sec_bound)?,
        at_k_prime: sectional_reduction(f, k_prime, fiber_sec_bound)?,
    })
}

/// Concave `f` over a fiber of curvature `-1` (hyperbolic plane). The cone
/// has timelike sectional curvature bounded below by `0`, hence by any
/// `K < 0`, yet for very negative `K` the reduction fails through `K_f > 0`.
pub fn timelike_only_demo(k: f64) -> Result<CurvatureReductionReport> {
    let f = WarpingFunction::sample(0.0, 2.0, 201, |t| 2.0 - 0.5 * (t - 1.0) * (t - 1.0))?;
    sectional_reduction(&f, k, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sin() -> WarpingFunction {
        WarpingFunction::sample(0.0, PI, 401, f64::sin).unwrap()
    }

    #[test]
    fn ricci_examples() {
        assert!(ricci_reduction(&sin(), 1.0, 2, 1.0).unwrap().verdict);
        let one = WarpingFunction::sample(0.0, 1.0, 11, |_| 1.0).unwrap();
        let r = ricci_reduction(&one, 0.0, 3, 0.0).unwrap();
        assert!(r.verdict);
        assert_eq!(r.kf, 0.0);
        let bumped = WarpingFunction::sample(0.0, PI, 401, |t| t.sin() + 0.1).unwrap();
        let r = ricci_reduction(&bumped, 1.0, 2, 1.0).unwrap();
        assert!(!r.cond1 && !r.verdict);
        assert!((r.cond1_violation - 0.1).abs() < 1e-3);
    }

    #[test]
    fn sectional_examples() {
        let c = WarpingFunction::sample(-PI / 2.0, PI / 2.0, 401, f64::cos).unwrap();
        assert!(sectional_reduction(&c, 1.0, -1.0).unwrap().verdict);
        let m = 0.5;
        let lin = WarpingFunction::sample(0.0, 1.0, 51, |t| 1.0 + m * t).unwrap();
        let r = sectional_reduction(&lin, 0.0, 0.0).unwrap();
        assert!(r.verdict);
        // the local slope vanishes at the right end of an increasing profile
        assert_eq!(r.kf, 0.0);
        assert!(lin.g_values(0.0)[..50].iter().all(|g| (g - m * m).abs() < 1e-9));
        let convex = WarpingFunction::sample(0.0, 1.0, 51, |t| 1.0 + t * t).unwrap();
        assert!(!sectional_reduction(&convex, 0.0, 10.0).unwrap().verdict);
    }

    #[test]
    fn oneill_examples() {
        let c = WarpingFunction::sample(0.0, 1.0, 11, |_| 2.5).unwrap();
        for p in oneill_diagnostics(&c, 4).unwrap() {
            assert_eq!((p.radial, p.mixed, p.tangential), (0.0, 0.0, 0.0));
        }
        let e = WarpingFunction::sample(0.0, 1.0, 2001, f64::exp).unwrap();
        for p in oneill_diagnostics(&e, 3).unwrap() {
            assert!((p.radial + 3.0).abs() < 1e-5 && (p.tangential - 3.0).abs() < 1e-5, "{p:?}");
        }
        let s = sin();
        let mid = oneill_diagnostics(&s, 2).unwrap().into_iter().find(|p| (p.t - PI / 2.0).abs() < 1e-12).unwrap();
        assert!((mid.radial - 2.0).abs() < 1e-4 && (mid.tangential + 1.0).abs() < 1e-4);
    }

    #[test]
    fn near_zero_flagged() {
        let f = WarpingFunction::new(0.0, 2.0, vec![0.0, 1.0, 2.0], vec![1.0, 1e-9, 1.0]).unwrap();
        assert!(oneill_diagnostics(&f, 2).unwrap()[0].near_zero);
    }

    #[test]
    fn witness_and_demo() {
        let w = monotonicity_witness(&sin(), 1.0, 0.0, -1.0).unwrap();
        assert!(w.at_k.verdict);
        assert!(w.at_k_prime.cond1 && !w.at_k_prime.cond2 && !w.at_k_prime.verdict);
        let demo = timelike_only_demo(-10.0).unwrap();
        assert!(demo.cond1 && demo.kf > 0.0 && !demo.verdict);
    }
}
