//! Numerical check of the perturbation bound
//!
//! `|x1(t) - x2(t)| <= e^{nu t} |x1(0) - x2(0)|
//!                     + int_0^t e^{nu (t - s)} |(A1 - A2)(s) x2(s) + (u1 - u2)(s)| ds`
//!
//! for `x_i' = A_i(t) x_i + u_i(t)` with piecewise-constant data and `nu`
//! bounding the log-norm of every `A_i(t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, sub_vec, Matrix};
use crate::system::log_norm;

pub const GRONWALL_SLACK: f64 = 1e-6;
const LOG_NORM_TOL: f64 = 1e-12;

/// `x' = a[k] x + u[k]` on the `k`-th piece; pieces are separated by the
/// strictly increasing interior `breaks`.
#[derive(Clone, Debug)]
pub struct PiecewiseAffineFlow {
    pub breaks: Vec<f64>,
    pub a: Vec<Matrix>,
    pub u: Vec<Vec<f64>>,
}

impl PiecewiseAffineFlow {
    pub fn new(breaks: Vec<f64>, a: Vec<Matrix>, u: Vec<Vec<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != breaks.len() + 1 || u.len() != a.len() {
            return Err(Error::invalid("need one matrix and input per piece"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("breakpoints must be increasing"));
        }
        let d = a[0].rows();
        if a.iter().any(|m| m.shape() != (d, d) || !m.is_finite()) || u.iter().any(|v| v.len() != d) {
            return Err(Error::invalid("inconsistent dimensions"));
        }
        Ok(Self { breaks, a, u })
    }

    pub fn dim(&self) -> usize {
        self.a[0].rows()
    }

    /// Piece active on `[t, t + dt)` for small `dt`.
    pub fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b <= t)
    }

    fn max_log_norm(&self) -> Result<f64> {
        self.a
            .iter()
            .map(log_norm)
            .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)))
    }

    /// Exact step over `dt` inside piece `k`.
    fn step(&self, k: usize, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut g = Matrix::zeros(d + 1, d + 1);
        g.set_block(0, 0, &self.a[k]);
        g.set_block(0, d, &Matrix::column(&self.u[k]));
        let z: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        let mut out = linalg::expm(&g.scale(dt))?.mul_vec(&z);
        out.truncate(d);
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GronwallResult {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: bool,
    /// `max lhs / rhs` over points with `rhs > 0`.
    pub worst_ratio: f64,
}

/// Evaluates both sides on `cells` uniform steps refined at every
/// breakpoint; the integral is a trapezoid sum per cell.
pub fn gronwall_check(
    f1: &PiecewiseAffineFlow,
    f2: &PiecewiseAffineFlow,
    x10: &[f64],
    x20: &[f64],
    horizon: f64,
    nu: f64,
    cells: usize,
) -> Result<GronwallResult> {
    let d = f1.dim();
    if f2.dim() != d || x10.len() != d || x20.len() != d {
        return Err(Error::invalid("dimension mismatch"));
    }
    if !(horizon > 0.0) || cells == 0 {
        return Err(Error::invalid("horizon and cell count must be positive"));
    }
    let bound = f1.max_log_norm()?.max(f2.max_log_norm()?);
    if nu < bound - LOG_NORM_TOL {
        return Err(Error::invalid(format!("nu = {nu} is below a log-norm {bound}")));
    }

    let mut times: Vec<f64> = (0..=cells).map(|i| horizon * i as f64 / cells as f64).collect();
    times.extend(f1.breaks.iter().chain(&f2.breaks).filter(|&&b| b > 0.0 && b < horizon));
    times.sort_by(f64::total_cmp);
    times.dedup();

    let integrand = |k1: usize, k2: usize, x2: &[f64], s: f64| {
        let da = f1.a[k1].sub(&f2.a[k2]);
        let mut v = da.mul_vec(x2);
        for (vi, (a, b)) in v.iter_mut().zip(f1.u[k1].iter().zip(&f2.u[k2])) {
            *vi += a - b;
        }
        (-nu * s).exp() * norm2(&v)
    };

    let dx0 = norm2(&sub_vec(x10, x20));
    let mut x1 = x10.to_vec();
    let mut x2 = x20.to_vec();
    let mut acc = 0.0;
    let mut lhs = vec![dx0];
    let mut rhs = vec![dx0];
    for w in times.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let (k1, k2) = (f1.piece(s0), f2.piece(s0));
        let g0 = integrand(k1, k2, &x2, s0);
        x1 = f1.step(k1, &x1, s1 - s0)?;
        x2 = f2.step(k2, &x2, s1 - s0)?;
        let g1 = integrand(k1, k2, &x2, s1);
        acc += 0.5 * (g0 + g1) * (s1 - s0);
        lhs.push(norm2(&sub_vec(&x1, &x2)));
        rhs.push((nu * s1).exp() * (dx0 + acc));
    }
    let holds = lhs
        .iter()
        .zip(&rhs)
        .all(|(l, r)| *l <= r * (1.0 + GRONWALL_SLACK));
    let worst_ratio = lhs
        .iter()
        .zip(&rhs)
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, r)| l / r)
        .fold(0.0, f64::max);
    Ok(GronwallResult { times, lhs, rhs, holds, worst_ratio })
}

/// A random two-mode switched pair in dimension `dim` on `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct GronwallCase {
    pub f1: PiecewiseAffineFlow,
    pub f2: PiecewiseAffineFlow,
    pub x10: Vec<f64>,
    pub x20: Vec<f64>,
    pub nu: f64,
    pub horizon: f64,
}

pub fn random_gronwall_case(seed: u64, dim: usize, horizon: f64) -> Result<GronwallCase> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let flow = |rng: &mut ChaCha8Rng| -> Result<PiecewiseAffineFlow> {
        let modes: Vec<Matrix> = (0..2)
            .map(|_| Matrix::from_fn(dim, dim, |_, _| normal(rng)))
            .collect();
        let switches = rng.random_range(1..=6);
        let mut breaks: Vec<f64> = (0..switches).map(|_| rng.random_range(0.0..horizon)).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let first = rng.random_range(0..2usize);
        let a = (0..=breaks.len()).map(|k| modes[(first + k) % 2].clone()).collect();
        let u = (0..=breaks.len())
            .map(|_| (0..dim).map(|_| 0.5 * normal(rng)).collect())
            .collect();
        PiecewiseAffineFlow::new(breaks, a, u)
    };
    let f1 = flow(&mut rng)?;
    let f2 = flow(&mut rng)?;
    let x10: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let x20: Vec<f64> = x10.iter().map(|v| v + 0.1 * normal(&mut rng)).collect();
    let nu = f1.max_log_norm()?.max(f2.max_log_norm()?);
    Ok(GronwallCase { f1, f2, x10, x20, nu, horizon })
}

impl GronwallCase {
    pub fn check(&self, cells: usize) -> Result<GronwallResult> {
        gronwall_check(&self.f1, &self.f2, &self.x10, &self.x20, self.horizon, self.nu, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_systems_give_zero() {
        let f = PiecewiseAffineFlow::new(vec![0.5], vec![m(&[&[-1.0]]), m(&[&[0.3]])], vec![vec![1.0], vec![0.0]]).unwrap();
        let r = gronwall_check(&f, &f, &[1.0], &[1.0], 1.0, 0.3, 100).unwrap();
        assert!(r.holds);
        assert!(r.lhs.iter().all(|&v| v == 0.0));
        assert!(r.rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_dynamics_first_term_only() {
        let a = m(&[&[0.2, 1.0], &[-1.0, 0.2]]);
        let f = PiecewiseAffineFlow::new(vec![], vec![a], vec![vec![0.0, 0.0]]).unwrap();
        let r = gronwall_check(&f, &f, &[1.0, 0.0], &[0.0, 0.5], 2.0, 0.2, 50).unwrap();
        assert!(r.holds);
        for (i, t) in r.times.iter().enumerate() {
            let first = (0.2 * t).exp() * 1.25f64.sqrt();
            assert!((r.rhs[i] - first).abs() <= 1e-12 * first);
            // Rotation plus uniform growth: the bound is attained.
            assert!((r.lhs[i] - first).abs() <= 1e-10 * first);
        }
    }

    #[test]
    fn scalar_constant_input_difference() {
        // x1' = u, x2' = 0, same start: lhs = t, rhs = int_0^t e^{0} 1 ds = t.
        let f1 = PiecewiseAffineFlow::new(vec![], vec![m(&[&[0.0]])], vec![vec![1.0]]).unwrap();
        let f2 = PiecewiseAffineFlow::new(vec![], vec![m(&[&[0.0]])], vec![vec![0.0]]).unwrap();
        let r = gronwall_check(&f1, &f2, &[0.0], &[0.0], 1.0, 0.0, 10).unwrap();
        assert!(r.holds);
        assert!((r.worst_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nu_below_log_norm_is_rejected() {
        let f = PiecewiseAffineFlow::new(vec![], vec![m(&[&[0.5]])], vec![vec![0.0]]).unwrap();
        assert!(gronwall_check(&f, &f, &[1.0], &[1.0], 1.0, 0.4, 10).is_err());
    }

    #[test]
    fn random_cases_hold() {
        for seed in 0..20 {
            let c = random_gronwall_case(seed, 1 + (seed as usize % 3), 2.0).unwrap();
            let r = c.check(2000).unwrap();
            assert!(r.holds, "seed {seed}: ratio {}", r.worst_ratio);
        }
    }
}
