//! Coder-controller parameters: the contraction condition, the parameter
//! search, the data rate, the per-block contraction factor `beta(b)` and the
//! guaranteed decay rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer;
use crate::system::{StabilizabilityCertificate, SystemConstants};

/// Sampling period `tau_s`, block length `n`, quantizer accuracy `alpha`,
/// initial radius `r0`, and the dwell time and system constants they were
/// chosen for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoderControllerConfig {
    pub tau_s: f64,
    pub n: u64,
    pub alpha: f64,
    pub r0: f64,
    pub tau_a: f64,
    pub certificate: StabilizabilityCertificate,
    pub constants: SystemConstants,
}

impl CoderControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be finite and > 0")))
            }
        };
        positive("tau_s", self.tau_s)?;
        positive("alpha", self.alpha)?;
        positive("r0", self.r0)?;
        positive("tau_a", self.tau_a)?;
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        self.certificate
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !self.certificate.admits_dwell_time(self.tau_a) {
            return Err(Error::Config(format!(
                "mu1 / tau_a = {} is not below mu2 = {}",
                self.certificate.mu1 / self.tau_a,
                self.certificate.mu2
            )));
        }
        Ok(())
    }

    /// Block duration `n tau_s`.
    pub fn block_time(&self) -> f64 {
        self.n as f64 * self.tau_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub n: u64,
    pub mu1: f64,
    /// `D exp(-mu2 n tau_s)`
    pub psi: f64,
    /// `exp(nu n tau_s) alpha`
    pub alpha_bar: f64,
    /// `exp(nu n tau_s) tau_s D (Delta1 + Delta2 L)`
    pub eps_bar: f64,
    /// `eps_bar * n tau_s / tau_a`
    pub eps_block: f64,
    /// Left side of the contraction condition.
    pub rho_bar: f64,
    /// Right side, `exp(-mu1 n tau_s / tau_a)`.
    pub rhs: f64,
}

impl DerivedConstants {
    pub fn new(cfg: &CoderControllerConfig) -> Self {
        let c = &cfg.constants;
        let cert = &cfg.certificate;
        let block = cfg.block_time();
        let growth = (c.nu * block).exp();
        let psi = cert.overshoot * (-cert.mu2 * block).exp();
        let alpha_bar = growth * cfg.alpha;
        let eps_bar =
            growth * cfg.tau_s * cert.overshoot * (c.delta1 + c.delta2 * c.gain_bound);
        let eps_block = eps_bar * (block / cfg.tau_a);
        Self {
            n: cfg.n,
            mu1: cert.mu1,
            psi,
            alpha_bar,
            eps_bar,
            eps_block,
            rho_bar: psi + alpha_bar + eps_block,
            rhs: (-cert.mu1 * block / cfg.tau_a).exp(),
        }
    }

    pub fn beta(&self, nmissed: u64) -> Result<f64> {
        beta_k(nmissed, self, self.mu1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `D e^{-mu2 n tau_s} + e^{nu n tau_s} alpha + eps(n, tau_s) < e^{-mu1 n tau_s / tau_a}`.
pub fn check_condition(cfg: &CoderControllerConfig) -> ConditionCheck {
    let dc = DerivedConstants::new(cfg);
    ConditionCheck {
        lhs: dc.rho_bar,
        rhs: dc.rhs,
        satisfied: dc.rho_bar < dc.rhs,
    }
}

/// `beta(b) = e^{mu1 b} psi + alpha_bar + e^{mu1 b} b eps_bar`.
///
/// Coder and controller both call this with the same arguments, which keeps
/// their radii bit-identical.
pub fn beta_k(nmissed: u64, dc: &DerivedConstants, mu1: f64) -> Result<f64> {
    if nmissed > dc.n {
        return Err(Error::invalid(format!(
            "nmissed = {nmissed} outside 0..={}",
            dc.n
        )));
    }
    let b = nmissed as f64;
    let jump = (mu1 * b).exp();
    Ok(jump * dc.psi + dc.alpha_bar + jump * b * dc.eps_bar)
}

/// Bits per unit time with `log2 m_hat` given directly.
pub fn rate_from_log2(tau_s: f64, n: u64, log2_m_hat: f64, mode_count: usize) -> f64 {
    let n_f = n as f64;
    (log2_m_hat / n_f + ((n + 1) as f64).log2() / n_f + (mode_count as f64).log2()) / tau_s
}

/// `(1/tau_s) [ (1/n) log2 m_hat + (1/n) log2(n+1) + log2 |Sigma| ]`.
pub fn data_rate(cfg: &CoderControllerConfig, mode_count: usize, m_hat: u64) -> f64 {
    rate_from_log2(cfg.tau_s, cfg.n, (m_hat as f64).log2(), mode_count)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    /// Guaranteed rate `mu1 / tau_a - ln(rho_bar) / (n tau_s)`.
    pub mu: f64,
    /// Reported rate, `mu / 2`.
    pub lambda: f64,
}

pub fn decay_rates(cfg: &CoderControllerConfig) -> Result<DecayRates> {
    let check = check_condition(cfg);
    if !check.satisfied {
        return Err(Error::InvalidState(format!(
            "contraction condition fails: lhs {} >= rhs {}",
            check.lhs, check.rhs
        )));
    }
    let mu = cfg.certificate.mu1 / cfg.tau_a - check.lhs.ln() / cfg.block_time();
    Ok(DecayRates { mu, lambda: 0.5 * mu })
}

/// Search budget and fixed inputs for [`search_parameters`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTargets {
    pub dim: usize,
    pub mode_count: usize,
    pub base_tick: f64,
    pub r0: f64,
    /// The block time is chosen so that `D e^{(mu1/tau_a - mu2) T} <= 1 - margin`.
    pub margin: f64,
    pub alpha_start: f64,
    pub alpha_ratio: f64,
    pub alpha_steps: u32,
    /// `n` runs over `1, 2, 4, .., 2^max_doublings`.
    pub max_doublings: u32,
}

impl SearchTargets {
    pub fn new(dim: usize, mode_count: usize, base_tick: f64, r0: f64) -> Self {
        Self {
            dim,
            mode_count,
            base_tick,
            r0,
            margin: 0.05,
            alpha_start: 0.5,
            alpha_ratio: 0.5,
            alpha_steps: 16,
            max_doublings: 16,
        }
    }
}

/// Two-phase parameter choice.
///
/// First the block time: the smallest whole number of ticks `T` with
/// `D e^{(mu1/tau_a - mu2) T} <= 1 - margin`. Then a grid over `alpha`
/// (geometric, decreasing) and `n` (doubling), with `tau_s` the smallest
/// whole number of ticks such that `n tau_s >= T`. Among the pairs that
/// satisfy the contraction condition, the one with the lowest data rate wins;
/// ties go to the smaller `n`.
pub fn search_parameters(
    consts: &SystemConstants,
    cert: &StabilizabilityCertificate,
    tau_a: f64,
    targets: &SearchTargets,
) -> Result<CoderControllerConfig> {
    cert.validate()?;
    if !(tau_a > 0.0) {
        return Err(Error::invalid(format!("tau_a = {tau_a} must be > 0")));
    }
    let slack = cert.mu2 - cert.mu1 / tau_a;
    if slack <= 0.0 {
        return Err(Error::Infeasible(format!(
            "mu1 / tau_a = {} >= mu2 = {}: no block time contracts",
            cert.mu1 / tau_a,
            cert.mu2
        )));
    }
    if !(targets.margin > 0.0 && targets.margin < 1.0) {
        return Err(Error::invalid("margin must lie in (0, 1)"));
    }
    if !(targets.alpha_ratio > 0.0 && targets.alpha_ratio < 1.0) || !(targets.alpha_start > 0.0)
    {
        return Err(Error::invalid("alpha sequence must start > 0 and decrease"));
    }
    let tick = targets.base_tick;
    let block_min = (cert.overshoot / (1.0 - targets.margin)).ln() / slack;
    let block_ticks = ((block_min / tick).ceil() as u64).max(1);

    let mut best: Option<(f64, CoderControllerConfig)> = None;
    let mut closest = f64::INFINITY;
    let mut closest_rhs = 1.0;
    let mut alpha = targets.alpha_start;
    for _ in 0..targets.alpha_steps {
        let Ok(m_hat) = quantizer::m_hat(targets.dim, alpha) else {
            break;
        };
        for doubling in 0..=targets.max_doublings {
            let n = 1u64 << doubling;
            if n > block_ticks {
                break;
            }
            let tau_ticks = block_ticks.div_ceil(n);
            let cfg = CoderControllerConfig {
                tau_s: tau_ticks as f64 * tick,
                n,
                alpha,
                r0: targets.r0,
                tau_a,
                certificate: *cert,
                constants: *consts,
            };
            let check = check_condition(&cfg);
            if check.lhs - check.rhs < closest - closest_rhs {
                closest = check.lhs;
                closest_rhs = check.rhs;
            }
            if !check.satisfied {
                continue;
            }
            let rate = data_rate(&cfg, targets.mode_count, m_hat);
            let better = match &best {
                None => true,
                Some((r, b)) => rate < *r || (rate == *r && n < b.n),
            };
            if better {
                best = Some((rate, cfg));
            }
        }
        alpha *= targets.alpha_ratio;
    }
    best.map(|(_, cfg)| cfg).ok_or(Error::NotFound {
        best_lhs: closest,
        rhs: closest_rhs,
    })
}

/// Everything the `design` step reports for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub config: CoderControllerConfig,
    pub derived: DerivedConstants,
    pub condition: ConditionCheck,
    pub decay: Option<DecayRates>,
    pub m_hat: u64,
    pub mode_count: usize,
    /// Bits per unit time.
    pub rate: f64,
}

impl DesignReport {
    pub fn new(cfg: CoderControllerConfig, dim: usize, mode_count: usize) -> Result<Self> {
        cfg.validate()?;
        let m_hat = quantizer::m_hat(dim, cfg.alpha)?;
        Ok(Self {
            config: cfg,
            derived: DerivedConstants::new(&cfg),
            condition: check_condition(&cfg),
            decay: decay_rates(&cfg).ok(),
            m_hat,
            mode_count,
            rate: data_rate(&cfg, mode_count, m_hat),
        })
    }
}
