//! Test-side oracles. Nothing here calls into the library's solvers.
#![allow(dead_code)]

use conelab::metricspace::FiniteMetricSpace;
use rand::Rng;

/// Flat strip: `sqrt(dt^2 - dx^2)`, `None` when spacelike.
pub fn minkowski_tau(dt: f64, dx: f64) -> Option<f64> {
    (dt >= dx - 1e-12).then(|| (dt * dt - dx * dx).max(0.0).sqrt())
}

/// Milne wedge `f(t) = t`: squared separation `s^2 + t^2 - 2 s t cosh d` from
/// the embedding `(t cosh x, t sinh x)` into 2D Minkowski space, `None`
/// unless `s e^d <= t`.
pub fn milne_tau2(s: f64, t: f64, d: f64) -> Option<f64> {
    (s * d.exp() <= t * (1.0 + 1e-12)).then(|| (s * s + t * t - 2.0 * s * t * d.cosh()).max(0.0))
}

/// Solves `v'' + c v = 0`, `v(0) = 0`, `v'(0) = 1` by classical RK4 up to `x`.
pub fn rk4_sin(c: f64, x: f64, steps: usize) -> f64 {
    let h = x / steps as f64;
    let (mut v, mut w) = (0.0f64, 1.0f64);
    let rhs = |v: f64, w: f64| (w, -c * v);
    for _ in 0..steps {
        let k1 = rhs(v, w);
        let k2 = rhs(v + 0.5 * h * k1.0, w + 0.5 * h * k1.1);
        let k3 = rhs(v + 0.5 * h * k2.0, w + 0.5 * h * k2.1);
        let k4 = rhs(v + h * k3.0, w + h * k3.1);
        v += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        w += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    v
}

/// `sigma_{K,N}^{(t)}(theta)` from the ODE.
pub fn sigma_ode(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    rk4_sin(k / n, t * theta, 4000) / rk4_sin(k / n, theta, 4000)
}

/// Unique solution of `A_S x = b` when the columns are independent and the
/// system is consistent. `a` is row-major `rows x cols`.
fn solve_columns(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())) else { return None };
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(r, p);
        for i in 0..rows {
            if i != r {
                let f = m[i][c] / m[r][c];
                for j in c..=cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if m[r..].iter().any(|row| row[cols].abs() > 1e-9) {
        return None;
    }
    Some((0..cols).map(|c| m[c][cols] / m[c][c]).collect())
}

fn rank(a: &[Vec<f64>]) -> usize {
    let mut m = a.to_vec();
    let (rows, cols) = (m.len(), m.first().map_or(0, |r| r.len()));
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let p = (r..rows).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if m[p][c].abs() < 1e-12 {
            continue;
        }
        m.swap(r, p);
        for i in r + 1..rows {
            let f = m[i][c] / m[r][c];
            for j in c..cols {
                m[i][j] -= f * m[r][j];
            }
        }
        r += 1;
    }
    r
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        subsets(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Best value of the transportation problem by enumerating every basic
/// feasible solution. `None` when infeasible.
pub fn transport_by_vertices(mu: &[f64], nu: &[f64], cost: &[Option<f64>]) -> Option<f64> {
    let (m, n) = (mu.len(), nu.len());
    let cells: Vec<usize> = (0..m * n).filter(|&k| cost[k].is_some()).collect();
    let column = |k: usize| -> Vec<f64> {
        let mut c = vec![0.0; m + n];
        c[k / n] = 1.0;
        c[m + k % n] = 1.0;
        c
    };
    let full: Vec<Vec<f64>> = (0..m + n).map(|r| cells.iter().map(|&k| column(k)[r]).collect()).collect();
    let r = rank(&full);
    let b: Vec<f64> = mu.iter().chain(nu).copied().collect();
    let mut best: Option<f64> = None;
    subsets(cells.len(), r, 0, &mut Vec::new(), &mut |s: &[usize]| {
        let a: Vec<Vec<f64>> = (0..m + n).map(|row| s.iter().map(|&i| column(cells[i])[row]).collect()).collect();
        if let Some(x) = solve_columns(&a, &b) {
            if x.iter().all(|&v| v >= -1e-12) {
                let val: f64 = s.iter().zip(&x).map(|(&i, &v)| v * cost[cells[i]].unwrap()).sum();
                best = Some(best.map_or(val, |bv: f64| bv.max(val)));
            }
        }
    });
    best
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Uniform marginals with `n` atoms each: by Birkhoff the optimum is a
/// permutation.
pub fn best_permutation(n: usize, cost: &[f64]) -> f64 {
    permutations(n)
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean distances of `n` random points in the unit square.
pub fn random_space(rng: &mut impl Rng, n: usize) -> FiniteMetricSpace {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
        }
    }
    FiniteMetricSpace::new(n, 0, dist).unwrap()
}

/// `1/2` the least distortion over every relation that is surjective both
/// ways. Exponential in `|A| |B|`, for tiny spaces only.
pub fn gh_brute_force(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> f64 {
    let (na, nb) = (a.n(), b.n());
    let cells = na * nb;
    assert!(cells <= 16);
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << cells) {
        let pairs: Vec<(usize, usize)> = (0..cells).filter(|&c| mask >> c & 1 == 1).map(|c| (c / nb, c % nb)).collect();
        let cover_a = (0..na).all(|i| pairs.iter().any(|p| p.0 == i));
        let cover_b = (0..nb).all(|j| pairs.iter().any(|p| p.1 == j));
        if !(cover_a && cover_b) {
            continue;
        }
        let mut dis: f64 = 0.0;
        for &(x, y) in &pairs {
            for &(u, v) in &pairs {
                dis = dis.max((a.d(x, u) - b.d(y, v)).abs());
            }
        }
        best = best.min(dis);
    }
    0.5 * best
}
