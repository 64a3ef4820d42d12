//! Per-block checks on a finished trace and empirical decay rates.

use serde::Serialize;

use crate::design::{decay_rates, CoderControllerConfig};
use crate::error::Result;
use crate::harness::sim::ClosedLoopTrace;
use crate::switching::{mismatch_flags, SwitchingSignal};

const PRODUCT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub blocks: usize,
    /// Blocks with `|x(t_k)| > r_k`.
    pub soundness_violations: Vec<u64>,
    /// Blocks with `b_k > N*_{k-1}` or `N*_{k-1} > n`.
    pub nmissed_violations: Vec<u64>,
    /// Blocks where `r_k` differs from `r_0 prod beta_q`.
    pub product_violations: Vec<u64>,
    pub halted: Option<String>,
    /// `-slope` of `ln r_k` against `t_k` over the trailing half of the blocks.
    pub radius_decay: Option<f64>,
    /// Same fit for `ln |x(t_k)|`, skipping zero states.
    pub state_decay: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    /// Whether `radius_decay >= lambda`; `None` when either is unavailable.
    pub decay_ok: Option<bool>,
    pub adt_admissible: Option<bool>,
}

impl VerifyReport {
    pub fn per_block_ok(&self) -> bool {
        self.soundness_violations.is_empty()
            && self.nmissed_violations.is_empty()
            && self.product_violations.is_empty()
            && self.halted.is_none()
    }

    pub fn passed(&self) -> bool {
        self.per_block_ok() && self.decay_ok != Some(false)
    }
}

/// Least-squares slope of `y` against `t`; `None` with fewer than two points.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (st, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, y) in points {
        num += (t - mt) * (y - my);
        den += (t - mt) * (t - mt);
    }
    (den > 0.0).then(|| num / den)
}

pub fn verify_trace(
    trace: &ClosedLoopTrace,
    sig: &SwitchingSignal,
    cfg: &CoderControllerConfig,
) -> Result<VerifyReport> {
    let mut soundness = Vec::new();
    let mut nmissed = Vec::new();
    let mut product = Vec::new();
    let mut prod = cfg.r0;
    for b in &trace.blocks {
        if !(b.state_norm <= b.radius) {
            soundness.push(b.k);
        }
        if b.k > 0 {
            prod *= b.beta.unwrap_or(f64::NAN);
            let n_star = mismatch_flags(sig, trace.tau_s, trace.n, b.k - 1)?.count as u64;
            if b.nmissed > n_star || n_star > trace.n {
                nmissed.push(b.k);
            }
        } else if b.nmissed != 0 {
            nmissed.push(b.k);
        }
        if !((b.radius - prod).abs() <= PRODUCT_TOL * prod) {
            product.push(b.k);
        }
    }

    let tail_start = trace.blocks.len() / 2;
    let tail = &trace.blocks[tail_start..];
    let secs = |tick: u64| tick as f64 * trace.tick_seconds;
    let radius_pts: Vec<(f64, f64)> = tail.iter().map(|b| (secs(b.tick), b.radius.ln())).collect();
    let state_pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|b| b.state_norm > 0.0)
        .map(|b| (secs(b.tick), b.state_norm.ln()))
        .collect();
    let radius_decay = fit_slope(&radius_pts).map(|s| -s);
    let state_decay = fit_slope(&state_pts).map(|s| -s);
    let rates = decay_rates(cfg).ok();
    let lambda = rates.map(|r| r.lambda);
    let decay_ok = match (radius_decay, lambda) {
        (Some(r), Some(l)) => Some(r >= l),
        _ => None,
    };
    Ok(VerifyReport {
        blocks: trace.blocks.len(),
        soundness_violations: soundness,
        nmissed_violations: nmissed,
        product_violations: product,
        halted: trace.halted.clone(),
        radius_decay,
        state_decay,
        mu: rates.map(|r| r.mu),
        lambda,
        decay_ok,
        adt_admissible: trace.adt.map(|a| a.admissible),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::harness::sim::{run_closed_loop, LoopSetup, RunOptions};
    use crate::switching::{generate_adt_signal, generate_sigma_n, AdtBudget, TimeGrid};

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        assert!((fit_slope(&pts).unwrap() + 0.5).abs() < 1e-14);
        assert_eq!(fit_slope(&pts[..1]), None);
        assert_eq!(fit_slope(&[(1.0, 0.0), (1.0, 2.0)]), None);
    }

    #[test]
    fn admissible_run_passes() {
        let cfg = fixtures::slow_switching_config();
        let grid = TimeGrid::new(1e-4).unwrap();
        let setup = LoopSetup::new(fixtures::two_mode_plant(), cfg, grid).unwrap();
        let budget = AdtBudget::new(1.0, 2.0).unwrap();
        let sig = generate_adt_signal(&budget, grid, 400_000, 2, 5).unwrap();
        let opts = RunOptions { adt: Some(budget), ..Default::default() };
        let tr = run_closed_loop(&setup, &sig, &[0.0, 1.0], &opts).unwrap();
        let rep = verify_trace(&tr, &sig, &cfg).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.adt_admissible, Some(true));
        assert!(rep.radius_decay.unwrap() >= rep.lambda.unwrap());
        assert!((rep.mu.unwrap() - 0.01735).abs() < 1e-4);
    }

    #[test]
    fn fast_chattering_is_flagged_not_asserted() {
        let cfg = fixtures::slow_switching_config();
        let grid = TimeGrid::new(1e-4).unwrap();
        let setup = LoopSetup::new(fixtures::two_mode_plant(), cfg, grid).unwrap();
        let sig = generate_sigma_n(100, grid, 80_000).unwrap();
        let budget = AdtBudget::new(1.0, 2.0).unwrap();
        let opts = RunOptions { adt: Some(budget), lenient: true, ..Default::default() };
        let tr = run_closed_loop(&setup, &sig, &[0.6, 0.8], &opts).unwrap();
        let rep = verify_trace(&tr, &sig, &cfg).unwrap();
        assert_eq!(rep.adt_admissible, Some(false));
        // Soundness does not rely on the dwell-time budget.
        assert!(rep.per_block_ok(), "{rep:?}");
    }
}
