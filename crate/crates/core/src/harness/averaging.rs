//! Averaging experiment on the scalar plant `x' = B_sigma u` with
//! `B_0 = -1`, `B_1 = 1`.
//!
//! Under the square-wave signal `sigma_n` (mode 0 on `[2k/n, (2k+1)/n)`, mode
//! 1 on `[(2k+1)/n, (2k+2)/n)`) the integral `int_0^T B_sigma_n u dt` of any
//! fixed input vanishes as `n` grows, so no finite input set can steer the
//! state to zero for every `n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `u(t) = offset_i + slope_i t` on the `i`-th piece; pieces are separated by
/// strictly increasing interior `breaks`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffine {
    pub breaks: Vec<f64>,
    pub pieces: Vec<(f64, f64)>,
}

impl PiecewiseAffine {
    pub fn new(breaks: Vec<f64>, pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(Error::invalid("need one more piece than breakpoints"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("breakpoints must be finite and increasing"));
        }
        if pieces.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("piece coefficients must be finite"));
        }
        Ok(Self { breaks, pieces })
    }

    pub fn constant(value: f64) -> Self {
        Self { breaks: vec![], pieces: vec![(value, 0.0)] }
    }

    pub fn ramp(slope: f64) -> Self {
        Self { breaks: vec![], pieces: vec![(0.0, slope)] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (a, b) = self.pieces[self.breaks.partition_point(|&s| s <= t)];
        a + b * t
    }

    /// `int_lo^hi u(t) dt`, exact per piece.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut total = 0.0;
        let mut start = lo;
        let mut i = self.breaks.partition_point(|&s| s <= lo);
        loop {
            let end = self.breaks.get(i).map_or(hi, |&b| b.min(hi));
            let (a, b) = self.pieces[i];
            total += a * (end - start) + 0.5 * b * (end * end - start * start);
            if end >= hi {
                return total;
            }
            start = end;
            i += 1;
        }
    }
}

/// `int_0^T B_{sigma_n(t)} u(t) dt`.
pub fn sigma_n_integral(u: &PiecewiseAffine, n: u64, horizon: f64) -> Result<f64> {
    if n == 0 || !(horizon > 0.0) {
        return Err(Error::invalid("n and T must be positive"));
    }
    let nf = n as f64;
    let halves = (horizon * nf).ceil() as u64;
    let mut total = 0.0;
    for i in 0..halves {
        let lo = i as f64 / nf;
        let hi = ((i + 1) as f64 / nf).min(horizon);
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        total += sign * u.integral(lo, hi);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragingRow {
    pub n: u64,
    /// `max_u |int_0^T B_sigma_n u|`
    pub sup: f64,
    /// Index of the maximising input.
    pub argmax: usize,
    /// `min_u |x0 + int_0^T B_sigma_n u|`
    pub min_final_state: f64,
}

pub fn averaging_experiment(
    n_values: &[u64],
    inputs: &[PiecewiseAffine],
    horizon: f64,
    x0: f64,
) -> Result<Vec<AveragingRow>> {
    if inputs.is_empty() {
        return Err(Error::invalid("input set is empty"));
    }
    n_values
        .iter()
        .map(|&n| {
            let vals = inputs
                .iter()
                .map(|u| sigma_n_integral(u, n, horizon))
                .collect::<Result<Vec<_>>>()?;
            let (argmax, sup) = vals
                .iter()
                .map(|v| v.abs())
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
            let min_final_state = vals
                .iter()
                .map(|v| (x0 + v).abs())
                .fold(f64::INFINITY, f64::min);
            Ok(AveragingRow { n, sup, argmax, min_final_state })
        })
        .collect()
}

/// `count` piecewise-constant inputs on `[0, horizon]` with `breaks_each`
/// uniform breakpoints and values uniform in `[-1, 1]`.
pub fn random_piecewise_constant(
    seed: u64,
    count: usize,
    breaks_each: usize,
    horizon: f64,
) -> Vec<PiecewiseAffine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut breaks: Vec<f64> = (0..breaks_each).map(|_| rng.random_range(0.0..horizon)).collect();
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let pieces = (0..=breaks.len()).map(|_| (rng.random_range(-1.0..=1.0), 0.0)).collect();
            PiecewiseAffine { breaks, pieces }
        })
        .collect()
}

/// Eight random three-break piecewise-constant inputs, the constant 1 and the
/// unit ramp.
pub fn standard_input_set(horizon: f64) -> Vec<PiecewiseAffine> {
    let mut set = random_piecewise_constant(2024, 8, 3, horizon);
    set.push(PiecewiseAffine::constant(1.0));
    set.push(PiecewiseAffine::ramp(1.0));
    set
}
