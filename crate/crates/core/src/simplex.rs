//! Dense two-phase simplex for small equality-form LPs, plus a
//! transportation wrapper with forbidden cells.
//!
//! Pricing is Dantzig's largest coefficient; after a run of degenerate
//! pivots it switches to Bland's rule, which cannot cycle.

const EPS: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
}

struct Tableau {
    m: usize,
    n: usize,
    /// `m` rows of `n + 1` entries; the last entry is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.n + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.n + 1) + self.n]
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let w = self.n + 1;
        let p = self.t[r * w + c];
        for k in 0..w {
            self.t[r * w + k] /= p;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for k in 0..w {
                    row[k] -= f * prow[k];
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for k in 0..w {
                obj[k] -= f * prow[k];
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Maximizes with reduced costs `obj` (`obj[j] > 0` means improving);
    /// `obj[n]` tracks minus the objective value. Columns with `allowed[j] = false`
    /// never enter.
    fn run(&mut self, obj: &mut [f64], allowed: &[bool]) -> LpStatus {
        let mut degenerate = 0usize;
        let max_iter = 50_000 + 100 * (self.m + self.n);
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = EPS;
            for j in 0..self.n {
                if !allowed[j] || obj[j] <= EPS {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if obj[j] > best {
                    best = obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, c);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < lv - EPS || (ratio <= lv + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return LpStatus::Unbounded;
            };
            if ratio <= EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c, obj);
        }
        // Bland's rule terminates; reaching this means numerical trouble.
        LpStatus::Optimal
    }
}

/// Maximizes `c . x` subject to `a x = b`, `x >= 0`. `a` is row-major `m x n`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpSolution {
    let m = a.len();
    let n = c.len();
    let total = n + m;
    let w = total + 1;
    let mut t = vec![0.0; m * w];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r * w + j] = sign * a[r][j];
        }
        t[r * w + n + r] = 1.0;
        t[r * w + total] = sign * b[r];
    }
    let mut tab = Tableau { m, n: total, t, basis: (n..total).collect() };

    // phase 1: maximize -sum(artificials)
    let mut obj = vec![0.0; w];
    for r in 0..m {
        for k in 0..w {
            if k < n || k == total {
                obj[k] += tab.t[r * w + k];
            }
        }
    }
    let all = vec![true; total];
    tab.run(&mut obj, &all);
    let infeas: f64 = (0..m).filter(|&r| tab.basis[r] >= n).map(|r| tab.rhs(r)).sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).sum::<f64>();
    if infeas > 1e-9 * scale {
        return LpSolution { status: LpStatus::Infeasible, x: vec![], value: f64::NEG_INFINITY };
    }
    // drive zero-level artificials out of the basis; drop redundant rows
    let mut r = 0;
    while r < tab.m {
        if tab.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, j, &mut obj);
            } else {
                tab.t.drain(r * w..(r + 1) * w);
                tab.basis.remove(r);
                tab.m -= 1;
                continue;
            }
        }
        r += 1;
    }

    // phase 2
    let mut obj = vec![0.0; w];
    obj[..n].copy_from_slice(c);
    for r in 0..tab.m {
        let bj = tab.basis[r];
        let f = obj[bj];
        if f != 0.0 {
            for k in 0..w {
                obj[k] -= f * tab.t[r * w + k];
            }
        }
    }
    let allowed: Vec<bool> = (0..total).map(|j| j < n).collect();
    let status = tab.run(&mut obj, &allowed);
    let mut x = vec![0.0; n];
    for r in 0..tab.m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let value = x.iter().zip(c).map(|(x, c)| x * c).sum();
    LpSolution { status, x, value }
}

/// Transportation problem: maximize `sum cost[i][j] pi[i][j]` over couplings of
/// `mu` and `nu`, with `None` cells forbidden. Returns `None` when infeasible.
/// The plan is indexed `[i * nu.len() + j]`.
pub fn transport(mu: &[f64], nu: &[f64], cost: &[Option<f64>]) -> Option<(Vec<f64>, f64)> {
    let (m, n) = (mu.len(), nu.len());
    let cells: Vec<usize> = (0..m * n).filter(|&k| cost[k].is_some()).collect();
    let c: Vec<f64> = cells.iter().map(|&k| cost[k].unwrap()).collect();
    let mut a = vec![vec![0.0; cells.len()]; m + n];
    for (v, &k) in cells.iter().enumerate() {
        a[k / n][v] = 1.0;
        a[m + k % n][v] = 1.0;
    }
    let mut b = mu.to_vec();
    b.extend_from_slice(nu);
    let sol = maximize(&c, &a, &b);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut plan = vec![0.0; m * n];
    for (v, &k) in cells.iter().enumerate() {
        plan[k] = sol.x[v];
    }
    Some((plan, sol.value))
}

/// Maximum flow through the bipartite graph of allowed cells, i.e. the
/// largest mass any sub-coupling can move. Less than 1 means no coupling.
pub fn max_flow(mu: &[f64], nu: &[f64], allowed: &[bool]) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let cost: Vec<Option<f64>> = allowed.iter().map(|&ok| if ok { Some(1.0) } else { None }).collect();
    // inequality form via slack columns: rows <= mu, columns <= nu
    let cells: Vec<usize> = (0..m * n).filter(|&k| cost[k].is_some()).collect();
    let nv = cells.len() + m + n;
    let mut a = vec![vec![0.0; nv]; m + n];
    for (v, &k) in cells.iter().enumerate() {
        a[k / n][v] = 1.0;
        a[m + k % n][v] = 1.0;
    }
    for r in 0..m + n {
        a[r][cells.len() + r] = 1.0;
    }
    let mut c = vec![1.0; cells.len()];
    c.extend(std::iter::repeat(0.0).take(m + n));
    let mut b = mu.to_vec();
    b.extend_from_slice(nu);
    let sol = maximize(&c, &a, &b);
    sol.value.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y, x + 2y + s1 = 4, 3x + y + s2 = 6
        let sol = maximize(
            &[1.0, 1.0, 0.0, 0.0],
            &[vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]],
            &[4.0, 6.0],
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let sol = maximize(&[1.0], &[vec![1.0], vec![1.0]], &[1.0, 2.0]);
        assert_eq!(sol.status, LpStatus::Infeasible);
        let sol = maximize(&[1.0, 0.0], &[vec![1.0, -1.0]], &[1.0]);
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn assignment() {
        let mu = [1.0 / 3.0; 3];
        let cost = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 3.0, 6.0, 9.0];
        let cost: Vec<Option<f64>> = cost.iter().map(|&c| Some(c)).collect();
        let (plan, v) = transport(&mu, &mu, &cost).unwrap();
        assert!((v - 14.0 / 3.0).abs() < 1e-12);
        let s: f64 = plan.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forbidden_cells() {
        let mu = [0.5, 0.5];
        let cost = [Some(1.0), None, None, None];
        assert!(transport(&mu, &mu, &cost).is_none());
        assert!((max_flow(&mu, &mu, &[true, false, false, false]) - 0.5).abs() < 1e-12);
    }
}
