//! Lorentzian optimal transport on cone grids: causal couplings maximizing
//! `int l^p`, cyclical monotonicity, dynamical plans along grid maximizers,
//! entropies against the cone's reference measure, distortion coefficients
//! and the TCD / TMCP verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{GeneralizedCone, GridGeodesic, GridPoint};
use crate::simplex;
use crate::warp::{pi_k, sin_k};
use crate::{Error, Result, Verdict};

const MASS_TOL: f64 = 1e-12;
const PLAN_EPS: f64 = 1e-14;
pub const DEFAULT_DENSITY_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: usize,
    pub x: usize,
    pub mass: f64,
}

impl Atom {
    pub fn point(&self) -> GridPoint {
        GridPoint::new(self.t, self.x)
    }
}

/// Finitely supported probability measure on cone grid points, atoms sorted
/// by `(t, x)` and merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl TryFrom<Vec<Atom>> for DiscreteMeasure {
    type Error = Error;

    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        DiscreteMeasure::new(atoms)
    }
}

impl From<DiscreteMeasure> for Vec<Atom> {
    fn from(m: DiscreteMeasure) -> Self {
        m.atoms
    }
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.mass > 0.0) || !a.mass.is_finite()) {
            return Err(Error::InvalidInput(format!("atom mass {} must be positive", a.mass)));
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!("masses sum to {total}, not 1")));
        }
        Ok(DiscreteMeasure { atoms: merge(atoms) })
    }

    /// Masses proportional to `weights` (zero weights dropped).
    pub fn from_weights(points: &[GridPoint], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput("points and weights differ in length".into()));
        }
        let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("weights must have positive total".into()));
        }
        let atoms = points
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, w)| Atom { t: p.t, x: p.x, mass: w / total })
            .collect();
        Ok(DiscreteMeasure { atoms: merge(atoms) })
    }

    pub fn dirac(p: GridPoint) -> Self {
        DiscreteMeasure { atoms: vec![Atom { t: p.t, x: p.x, mass: 1.0 }] }
    }

    pub fn uniform(points: &[GridPoint]) -> Result<Self> {
        Self::from_weights(points, &vec![1.0; points.len()])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn points(&self) -> Vec<GridPoint> {
        self.atoms.iter().map(|a| a.point()).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn check_on(&self, cone: &GeneralizedCone) -> Result<()> {
        let nx = cone.fiber().n();
        match self.atoms.iter().find(|a| a.t >= cone.nt() || a.x >= nx) {
            Some(a) => Err(Error::InvalidInput(format!("atom ({}, {}) is off the cone grid", a.t, a.x))),
            None => Ok(()),
        }
    }
}

fn merge(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by_key(|a| (a.t, a.x));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(b) if b.t == a.t && b.x == a.x => b.mass += a.mass,
            _ => out.push(a),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CausalCoupling {
    pub sources: Vec<GridPoint>,
    pub targets: Vec<GridPoint>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    /// Row-major `sources x targets`.
    pub plan: Vec<f64>,
    pub p: f64,
    /// `int l^p d pi`.
    pub p_value: f64,
}

impl CausalCoupling {
    /// Product coupling `mu0 x delta_x1`.
    pub fn product_with_dirac(cone: &GeneralizedCone, mu0: &DiscreteMeasure, x1: GridPoint, p: f64) -> Self {
        let sources = mu0.points();
        let mu = mu0.masses();
        let p_value = sources.iter().zip(&mu).map(|(&s, m)| m * cone.tau(s, x1).powf(p)).sum();
        CausalCoupling { sources, targets: vec![x1], plan: mu.clone(), nu: vec![1.0], mu, p, p_value }
    }

    /// `(i, j, mass)` with positive mass.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let n = self.targets.len();
        self.plan
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > PLAN_EPS)
            .map(|(k, &m)| (k / n, k % n, m))
            .collect()
    }

    pub fn marginal_error(&self) -> f64 {
        let (m, n) = (self.sources.len(), self.targets.len());
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let s: f64 = self.plan[i * n..(i + 1) * n].iter().sum();
            worst = worst.max((s - self.mu[i]).abs());
        }
        for j in 0..n {
            let s: f64 = (0..m).map(|i| self.plan[i * n + j]).sum();
            worst = worst.max((s - self.nu[j]).abs());
        }
        worst
    }

    /// `int l^2 d pi` with `l` from the given separation.
    pub fn l2_norm(&self, sep: impl Fn(GridPoint, GridPoint) -> f64) -> f64 {
        self.support()
            .iter()
            .map(|&(i, j, m)| m * sep(self.sources[i], self.targets[j]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("p = {p} must lie in (0, 1]")))
    }
}

/// Optimal coupling for `cost` (maximized); `None` cells are excluded.
fn couple(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    p: f64,
    cost: impl Fn(GridPoint, GridPoint) -> Option<f64>,
) -> std::result::Result<CausalCoupling, f64> {
    let (sources, targets) = (mu0.points(), mu1.points());
    let (mu, nu) = (mu0.masses(), mu1.masses());
    let cells: Vec<Option<f64>> =
        sources.iter().flat_map(|&s| targets.iter().map(move |&t| (s, t))).map(|(s, t)| cost(s, t)).collect();
    let allowed: Vec<bool> = cells.iter().map(|c| c.is_some()).collect();
    let flow = if allowed.iter().any(|&a| a) { simplex::max_flow(&mu, &nu, &allowed) } else { 0.0 };
    if flow < 1.0 - 1e-9 {
        return Err(flow);
    }
    let (mut plan, value) = simplex::transport(&mu, &nu, &cells).ok_or(flow)?;
    for v in plan.iter_mut() {
        if *v < PLAN_EPS {
            *v = 0.0;
        }
    }
    Ok(CausalCoupling { sources, targets, mu, nu, plan, p, p_value: value })
}

/// Maximizes `sum l(x, y)^p pi(x, y)` over couplings supported on `{l >= 0}`.
pub fn solve_lp(cone: &GeneralizedCone, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, p: f64) -> Result<CausalCoupling> {
    check_p(p)?;
    mu0.check_on(cone)?;
    mu1.check_on(cone)?;
    couple(mu0, mu1, p, |s, t| {
        let l = cone.signed_separation(s, t);
        (l >= 0.0).then(|| l.powf(p))
    })
    .map_err(|flow| Error::NotCausallyCouplable { flow })
}

/// As [`solve_lp`] but restricted to strictly timelike pairs.
pub fn solve_lp_timelike(
    cone: &GeneralizedCone,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    p: f64,
) -> Result<CausalCoupling> {
    solve_lp(cone, mu0, mu1, p)?;
    couple(mu0, mu1, p, |s, t| cone.timelike(s, t).then(|| cone.signed_separation(s, t).powf(p)))
        .map_err(|_| Error::NotTimelikeDualizable)
}

/// Worst slack `sum l(x_i, y_i)^p - sum l(x_{i+1}, y_i)^p` over cycles through
/// the support: every 2-cycle, then `cycles` random cycles of length 3 to 5.
/// A non-causal shifted pair makes the slack `+inf`.
pub fn check_cyclical_monotonicity(
    cone: &GeneralizedCone,
    coupling: &CausalCoupling,
    p: f64,
    cycles: usize,
    seed: u64,
) -> f64 {
    let supp = coupling.support();
    if supp.len() < 2 {
        return 0.0;
    }
    let lp = |i: usize, j: usize| {
        let l = cone.signed_separation(coupling.sources[i], coupling.targets[j]);
        if l == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            l.max(0.0).powf(p)
        }
    };
    let slack = |cyc: &[usize]| {
        let lhs: f64 = cyc.iter().map(|&k| lp(supp[k].0, supp[k].1)).sum();
        let rhs: f64 = (0..cyc.len()).map(|c| lp(supp[cyc[(c + 1) % cyc.len()]].0, supp[cyc[c]].1)).sum();
        if rhs == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            lhs - rhs
        }
    };
    let mut worst = f64::INFINITY;
    for a in 0..supp.len() {
        for b in a + 1..supp.len() {
            worst = worst.min(slack(&[a, b]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cycles {
        let len = rng.gen_range(3..=5).min(supp.len());
        let mut cyc: Vec<usize> = Vec::with_capacity(len);
        while cyc.len() < len {
            let k = rng.gen_range(0..supp.len());
            if !cyc.contains(&k) {
                cyc.push(k);
            }
        }
        worst = worst.min(slack(&cyc));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanPath {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
    pub geodesic: GridGeodesic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicalPlan {
    pub paths: Vec<PlanPath>,
    pub sources: Vec<GridPoint>,
    pub targets: Vec<GridPoint>,
    /// `(t, mu_t)` for `t = k / steps`.
    pub slices: Vec<(f64, DiscreteMeasure)>,
}

impl DynamicalPlan {
    /// `mu_t`: each geodesic evaluated at `tau`-arclength fraction `t`, snapped
    /// to the grid. The fiber point is the one best splitting `d(x, y)` in the
    /// ratio of the traversed distance.
    pub fn slice(&self, cone: &GeneralizedCone, t: f64) -> DiscreteMeasure {
        let mut atoms: Vec<Atom> = self
            .paths
            .iter()
            .map(|path| {
                let (x, y) = (self.sources[path.source], self.targets[path.target]);
                let p = if t <= 0.0 {
                    x
                } else if t >= 1.0 {
                    y
                } else {
                    let (ti, frac) = cone.geodesic_point(&path.geodesic, t);
                    GridPoint::new(ti, split_point(cone, x.x, y.x, frac))
                };
                Atom { t: p.t, x: p.x, mass: path.mass }
            })
            .collect();
        // renormalize the floating sum so slice masses add to exactly the plan mass
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        for a in atoms.iter_mut() {
            a.mass /= total;
        }
        DiscreteMeasure { atoms: merge(atoms) }
    }
}

/// Fiber point `z` minimizing `|d(x,z) - s d| + |d(z,y) - (1-s) d|`, `d = d(x,y)`.
fn split_point(cone: &GeneralizedCone, x: usize, y: usize, s: f64) -> usize {
    let fib = cone.fiber();
    if s <= 0.0 {
        return x;
    }
    if s >= 1.0 {
        return y;
    }
    let d = fib.d(x, y);
    let mut best = (f64::INFINITY, x);
    for z in 0..fib.n() {
        let e = (fib.d(x, z) - s * d).abs() + (fib.d(z, y) - (1.0 - s) * d).abs();
        if e < best.0 - 1e-15 {
            best = (e, z);
        }
    }
    best.1
}

pub fn build_dynamical_plan(cone: &GeneralizedCone, coupling: &CausalCoupling, steps: usize) -> Result<DynamicalPlan> {
    let supp = coupling.support();
    let paths: Vec<Result<PlanPath>> = supp
        .par_iter()
        .map(|&(i, j, mass)| {
            let (x, y) = (coupling.sources[i], coupling.targets[j]);
            let geodesic = cone.maximizer(x, y).map_err(|_| Error::NoMaximizer(x.t, x.x, y.t, y.x))?;
            Ok(PlanPath { source: i, target: j, mass, geodesic })
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let mut plan = DynamicalPlan {
        paths,
        sources: coupling.sources.clone(),
        targets: coupling.targets.clone(),
        slices: vec![],
    };
    let steps = steps.max(1);
    plan.slices = (0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            (t, plan.slice(cone, t))
        })
        .collect();
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EntropyKind {
    /// `S_N = -sum rho^(1 - 1/N) w`.
    Renyi { n: f64 },
    /// `Ent = sum rho log rho w`.
    Boltzmann,
    /// `U_N = exp(-Ent / N)`.
    U { n: f64 },
}

pub fn entropy(measure: &DiscreteMeasure, cone: &GeneralizedCone, kind: EntropyKind) -> Result<f64> {
    let w = cone.reference_measure();
    entropy_with(measure, &w, cone.fiber().n(), kind)
}

/// [`entropy`] against a precomputed reference table `[t * nx + x]`.
pub fn entropy_with(measure: &DiscreteMeasure, weights: &[f64], nx: usize, kind: EntropyKind) -> Result<f64> {
    let cell = |a: &Atom| weights[a.t * nx + a.x];
    match kind {
        EntropyKind::Renyi { n } => {
            let mut s = 0.0;
            for a in measure.atoms() {
                let w = cell(a);
                if w <= 0.0 {
                    return Err(Error::ZeroReferenceCell(a.t, a.x));
                }
                s -= (a.mass / w).powf(1.0 - 1.0 / n) * w;
            }
            Ok(s)
        }
        EntropyKind::Boltzmann => Ok(boltzmann(measure, &cell)),
        EntropyKind::U { n } => Ok((-boltzmann(measure, &cell) / n).exp()),
    }
}

fn boltzmann(measure: &DiscreteMeasure, cell: &impl Fn(&Atom) -> f64) -> f64 {
    let mut e = 0.0;
    for a in measure.atoms() {
        let w = cell(a);
        if w <= 0.0 {
            return f64::INFINITY;
        }
        e += a.mass * (a.mass / w).ln();
    }
    e
}

/// `sigma_{K,N}^{(t)}(theta)`.
pub fn sigma(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    if theta == 0.0 || k == 0.0 {
        return t;
    }
    let kappa = k / n;
    if theta > 0.0 && theta < pi_k(kappa) {
        sin_k(kappa, t * theta) / sin_k(kappa, theta)
    } else {
        f64::INFINITY
    }
}

/// Modified coefficient `tau_{K,N}^{(t)}(theta)`; `theta * inf` (with
/// `0 * inf = 0`) when `K > 0`, `N = 1`.
pub fn tau_modified(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    if n == 1.0 {
        if k > 0.0 {
            return if theta == 0.0 { 0.0 } else { f64::INFINITY };
        }
        return t;
    }
    let s = sigma(k, n - 1.0, t, theta);
    t.powf(1.0 / n) * s.powf(1.0 - 1.0 / n)
}

pub fn distortion(k: f64, n: f64, t: f64, theta: f64, modified: bool) -> f64 {
    if modified {
        tau_modified(k, n, t, theta)
    } else {
        sigma(k, n, t, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Entropic,
    Renyi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotMargin {
    pub t: f64,
    /// Margin with separations from the lower table (canonical).
    #[serde(with = "crate::extf64")]
    pub margin: f64,
    /// Same margin with separations from the upper table.
    #[serde(with = "crate::extf64")]
    pub margin_hi: f64,
    #[serde(with = "crate::extf64")]
    pub bracket_width: f64,
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarginReport {
    pub condition: String,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub p: f64,
    pub flavor: Flavor,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub p_value: f64,
    pub support_size: usize,
    pub slots: Vec<SlotMargin>,
    #[serde(with = "crate::extf64")]
    pub min_margin: f64,
    #[serde(with = "crate::extf64")]
    pub max_bracket_width: f64,
    pub tol: f64,
    pub verdict: Verdict,
}

/// `pass` if every slot margin is at least `-tol`, `fail` if some slot stays
/// below `-tol` even after adding its bracket width.
fn verdict_of(slots: &[SlotMargin], tol: f64) -> (f64, f64, Verdict) {
    let live: Vec<&SlotMargin> = slots.iter().filter(|s| s.excluded.is_none()).collect();
    let min = live.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    let width = live.iter().map(|s| s.bracket_width).fold(0.0, f64::max);
    let verdict = if live.iter().all(|s| s.margin >= -tol) {
        Verdict::Pass
    } else if live.iter().any(|s| s.margin + s.bracket_width < -tol) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    (min, width, verdict)
}

fn density_excluded(slice: &DiscreteMeasure, weights: &[f64], nx: usize, median: f64, cap: f64) -> Option<String> {
    for a in slice.atoms() {
        let w = weights[a.t * nx + a.x];
        let rho = if w > 0.0 { a.mass / w } else { f64::INFINITY };
        if rho > cap * median {
            return Some(format!("density {rho:e} at ({}, {}) exceeds cap", a.t, a.x));
        }
    }
    None
}

fn median_density(measures: &[&DiscreteMeasure], weights: &[f64], nx: usize) -> f64 {
    let mut d: Vec<f64> = measures
        .iter()
        .flat_map(|m| m.atoms().iter())
        .map(|a| a.mass / weights[a.t * nx + a.x])
        .filter(|v| v.is_finite())
        .collect();
    if d.is_empty() {
        return f64::INFINITY;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyOptions {
    pub tol: f64,
    pub t_grid: Vec<f64>,
    pub density_cap: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { tol: 0.05, t_grid: (1..8).map(|k| k as f64 / 8.0).collect(), density_cap: DEFAULT_DENSITY_CAP }
    }
}

/// Checks `TCD_p^e(K, N)` (entropic) or `TCD_p(K, N)` (Renyi) along the
/// optimal strictly timelike coupling and its grid dynamical plan.
#[allow(clippy::too_many_arguments)]
pub fn tcd_verify(
    cone: &GeneralizedCone,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    p: f64,
    k: f64,
    n: f64,
    flavor: Flavor,
    opts: &VerifyOptions,
) -> Result<MarginReport> {
    let coupling = solve_lp_timelike(cone, mu0, mu1, p)?;
    if !(coupling.p_value > 0.0) {
        return Err(Error::NotTimelikeDualizable);
    }
    let weights = cone.reference_measure();
    let nx = cone.fiber().n();
    if flavor == Flavor::Renyi {
        for a in mu0.atoms().iter().chain(mu1.atoms()) {
            if weights[a.t * nx + a.x] <= 0.0 {
                return Err(Error::ZeroReferenceCell(a.t, a.x));
            }
        }
    }
    let plan = build_dynamical_plan(cone, &coupling, 1)?;
    let theta_lo = coupling.l2_norm(|a, b| cone.signed_separation(a, b));
    let theta_hi = coupling.l2_norm(|a, b| cone.signed_separation_hi(a, b));
    let median = median_density(&[mu0, mu1], &weights, nx);
    let supp = coupling.support();
    let u0 = entropy_with(mu0, &weights, nx, EntropyKind::U { n })?;
    let u1 = entropy_with(mu1, &weights, nx, EntropyKind::U { n })?;
    let rho = |m: &DiscreteMeasure, q: GridPoint| {
        let a = m.atoms().iter().find(|a| a.t == q.t && a.x == q.x).expect("support point is an atom");
        a.mass / weights[a.t * nx + a.x]
    };
    let slots: Vec<Result<SlotMargin>> = opts
        .t_grid
        .par_iter()
        .map(|&t| {
            let slice = plan.slice(cone, t);
            let excluded = density_excluded(&slice, &weights, nx, median, opts.density_cap);
            let margin_for = |theta: f64, sep: &dyn Fn(GridPoint, GridPoint) -> f64| -> Result<f64> {
                match flavor {
                    Flavor::Entropic => {
                        let ut = entropy_with(&slice, &weights, nx, EntropyKind::U { n })?;
                        Ok(ut - (sigma(k, n, 1.0 - t, theta) * u0 + sigma(k, n, t, theta) * u1))
                    }
                    Flavor::Renyi => {
                        let st = entropy_with(&slice, &weights, nx, EntropyKind::Renyi { n })?;
                        let mut rhs = 0.0;
                        for &(i, j, m) in &supp {
                            let (x0, x1) = (coupling.sources[i], coupling.targets[j]);
                            let th = sep(x0, x1).max(0.0);
                            rhs -= m
                                * (tau_modified(k, n, 1.0 - t, th) * rho(mu0, x0).powf(-1.0 / n)
                                    + tau_modified(k, n, t, th) * rho(mu1, x1).powf(-1.0 / n));
                        }
                        Ok(rhs - st)
                    }
                }
            };
            let lo_sep = |a, b| cone.signed_separation(a, b);
            let hi_sep = |a, b| cone.signed_separation_hi(a, b);
            let margin = margin_for(theta_lo, &lo_sep)?;
            let margin_hi = margin_for(theta_hi, &hi_sep)?;
            Ok(SlotMargin { t, margin, margin_hi, bracket_width: (margin_hi - margin).abs(), excluded })
        })
        .collect();
    let slots = slots.into_iter().collect::<Result<Vec<_>>>()?;
    let (min_margin, max_bracket_width, verdict) = verdict_of(&slots, opts.tol);
    Ok(MarginReport {
        condition: match flavor {
            Flavor::Entropic => "TCD^e".into(),
            Flavor::Renyi => "TCD".into(),
        },
        k,
        n,
        p,
        flavor,
        theta_lo,
        theta_hi,
        p_value: coupling.p_value,
        support_size: supp.len(),
        slots,
        min_margin,
        max_bracket_width,
        tol: opts.tol,
        verdict,
    })
}

/// Checks `TMCP^e(K, N)` for `mu0` contracting to `delta_{x1}`. The `t = 1`
/// slot is excluded (Dirac density).
pub fn tmcp_verify(
    cone: &GeneralizedCone,
    mu0: &DiscreteMeasure,
    x1: GridPoint,
    k: f64,
    n: f64,
    opts: &VerifyOptions,
) -> Result<MarginReport> {
    mu0.check_on(cone)?;
    let bad: Vec<usize> = mu0
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| !cone.timelike(a.point(), x1))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::AtomNotInPast(bad));
    }
    let p = 0.5;
    let coupling = CausalCoupling::product_with_dirac(cone, mu0, x1, p);
    let plan = build_dynamical_plan(cone, &coupling, 1)?;
    let weights = cone.reference_measure();
    let nx = cone.fiber().n();
    let theta_lo = coupling.l2_norm(|a, b| cone.signed_separation(a, b));
    let theta_hi = coupling.l2_norm(|a, b| cone.signed_separation_hi(a, b));
    let median = median_density(&[mu0], &weights, nx);
    let u0 = entropy_with(mu0, &weights, nx, EntropyKind::U { n })?;
    let slots: Vec<Result<SlotMargin>> = opts
        .t_grid
        .par_iter()
        .map(|&t| {
            let slice = plan.slice(cone, t);
            let excluded = if t >= 1.0 {
                Some("Dirac endpoint".to_string())
            } else {
                density_excluded(&slice, &weights, nx, median, opts.density_cap)
            };
            let ut = entropy_with(&slice, &weights, nx, EntropyKind::U { n })?;
            let margin = ut - sigma(k, n, 1.0 - t, theta_lo) * u0;
            let margin_hi = ut - sigma(k, n, 1.0 - t, theta_hi) * u0;
            Ok(SlotMargin { t, margin, margin_hi, bracket_width: (margin_hi - margin).abs(), excluded })
        })
        .collect();
    let slots = slots.into_iter().collect::<Result<Vec<_>>>()?;
    let (min_margin, max_bracket_width, verdict) = verdict_of(&slots, opts.tol);
    Ok(MarginReport {
        condition: "TMCP^e".into(),
        k,
        n,
        p,
        flavor: Flavor::Entropic,
        theta_lo,
        theta_hi,
        p_value: coupling.p_value,
        support_size: coupling.support().len(),
        slots,
        min_margin,
        max_bracket_width,
        tol: opts.tol,
        verdict,
    })
}

/// Measure with masses `(1 - |r|^2)_+` over a `(2h+1) x (2h+1)` block of grid
/// points centred at `center` (`r` normalized to the block).
pub fn truncated_bump(cone: &GeneralizedCone, center: GridPoint, half: usize, step: usize) -> Result<DiscreteMeasure> {
    let (nt, nx) = (cone.nt() as i64, cone.fiber().n() as i64);
    let (h, st) = (half as i64, step.max(1) as i64);
    let mut pts = Vec::new();
    let mut w = Vec::new();
    for a in -h..=h {
        for b in -h..=h {
            let (t, x) = (center.t as i64 + a * st, center.x as i64 + b * st);
            if t < 0 || t >= nt || x < 0 || x >= nx {
                continue;
            }
            let r2 = ((a * a + b * b) as f64) / ((h + 1) * (h + 1)) as f64;
            pts.push(GridPoint::new(t as usize, x as usize));
            w.push((1.0 - r2).max(0.0));
        }
    }
    DiscreteMeasure::from_weights(&pts, &w)
}
