//! Event-driven closed-loop simulation.
//!
//! The timeline is the union of the sampling instants `j tau_s` and the switch
//! times of the true signal. Between two consecutive events the pair
//! `(x, xhat)` follows one LTI flow and is advanced with a matrix exponential,
//! so the only discretisation is the tick grid on which events live.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::coder::{bit_cost, wire_bits, Coder, Symbol};
use crate::controller::{Controller, InputSegment};
use crate::design::{decay_rates, CoderControllerConfig, DecayRates};
use crate::error::{Error, Result};
use crate::linalg::{self, norm2, Matrix};
use crate::quantizer::BallQuantizer;
use crate::switching::{
    is_adt_admissible, mismatch_flags, AdtBudget, AdtReport, SwitchingSignal, Tick, TimeGrid,
};
use crate::system::{augmented_generator, PlantSpec};

/// Everything a run needs that does not depend on the signal or `x0`.
#[derive(Clone, Debug)]
pub struct LoopSetup {
    pub plant: PlantSpec,
    pub cfg: CoderControllerConfig,
    pub grid: TimeGrid,
    pub tau_s: Tick,
    pub quantizer: BallQuantizer,
    // Augmented generators and their exp over one full sampling period,
    // indexed by `true_mode * mode_count + model_mode`.
    generators: Vec<Matrix>,
    full_step: Vec<Matrix>,
}

impl LoopSetup {
    pub fn new(plant: PlantSpec, cfg: CoderControllerConfig, grid: TimeGrid) -> Result<Self> {
        cfg.validate()?;
        let tau_s = grid
            .ticks(cfg.tau_s)
            .map_err(|e| Error::Config(format!("tau_s: {e}")))?;
        if tau_s == 0 {
            return Err(Error::Config("tau_s is shorter than one tick".into()));
        }
        let quantizer = BallQuantizer::build(plant.system.state_dim(), cfg.alpha)?;
        let modes = plant.system.modes();
        let mut generators = Vec::with_capacity(modes.len() * modes.len());
        for true_mode in modes {
            for (model, gain) in modes.iter().zip(plant.feedback.gains()) {
                generators.push(augmented_generator(true_mode, model, gain));
            }
        }
        let dt = grid.seconds(tau_s);
        let full_step = generators
            .iter()
            .map(|g| linalg::expm(&g.scale(dt)))
            .collect::<Result<_>>()?;
        Ok(Self {
            plant,
            cfg,
            grid,
            tau_s,
            quantizer,
            generators,
            full_step,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.plant.system.mode_count()
    }

    pub fn block_ticks(&self) -> Tick {
        self.cfg.n * self.tau_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceDetail {
    /// Rows at every sample and switch, plus all input segments.
    #[default]
    Full,
    /// Block records and symbols only.
    Blocks,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub detail: TraceDetail,
    /// Stop and record a soundness violation instead of returning it as an error.
    pub lenient: bool,
    /// Budget to check the signal against; the run proceeds either way.
    pub adt: Option<AdtBudget>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockRecord {
    pub k: u64,
    pub tick: Tick,
    /// `|x(k n tau_s)|`
    pub state_norm: f64,
    /// `r_k`
    pub radius: f64,
    /// `beta_k`, absent for `k = 0`.
    pub beta: Option<f64>,
    /// `b_k`
    pub nmissed: u64,
    /// `N*_{k-1}`: mismatched sampling intervals in the previous block.
    pub mismatches_prev: Option<usize>,
    /// Switches of the true signal in the previous block.
    pub switches_prev: Option<usize>,
    /// `xi_{kn}`
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub tick: Tick,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub u: Vec<f64>,
    pub sigma: usize,
    pub sigma_hat: usize,
    /// Index into `blocks` when the row is a block start.
    pub block: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ClosedLoopTrace {
    pub tick_seconds: f64,
    pub tau_s: Tick,
    pub n: u64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub mode_count: usize,
    pub x0: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub blocks: Vec<BlockRecord>,
    pub symbols: Vec<Symbol>,
    pub segments: Vec<InputSegment>,
    /// Blocks whose every sampling interval was simulated.
    pub complete_blocks: u64,
    /// Information content of the symbols of the complete blocks.
    pub info_bits: f64,
    /// Fixed-width wire size of the same symbols.
    pub wire_bits: u64,
    pub halted: Option<String>,
    pub adt: Option<AdtReport>,
    pub decay: Option<DecayRates>,
}

impl ClosedLoopTrace {
    pub fn block_seconds(&self) -> f64 {
        (self.n * self.tau_s) as f64 * self.tick_seconds
    }

    /// Average information rate over the complete blocks, bits per second.
    pub fn info_rate(&self) -> Option<f64> {
        (self.complete_blocks > 0)
            .then(|| self.info_bits / (self.complete_blocks as f64 * self.block_seconds()))
    }

    pub fn wire_rate(&self) -> Option<f64> {
        (self.complete_blocks > 0)
            .then(|| self.wire_bits as f64 / (self.complete_blocks as f64 * self.block_seconds()))
    }

    /// `t,x1..xd,xhat1..xhatd,u1..uc,sigma,sigma_hat,r_k,beta_k,b_k`; block
    /// fields are blank on rows that are not block starts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        header.extend((1..=self.state_dim).map(|i| format!("xhat{i}")));
        header.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        header.extend(["sigma", "sigma_hat", "r_k", "beta_k", "b_k"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut f: Vec<String> = vec![format!("{}", row.tick as f64 * self.tick_seconds)];
            f.extend(row.x.iter().chain(&row.xhat).chain(&row.u).map(|v| format!("{v:e}")));
            f.push(row.sigma.to_string());
            f.push(row.sigma_hat.to_string());
            match row.block.map(|i| &self.blocks[i]) {
                Some(b) => {
                    f.push(format!("{:e}", b.radius));
                    f.push(b.beta.map(|v| format!("{v:e}")).unwrap_or_default());
                    f.push(b.nmissed.to_string());
                }
                None => f.extend([String::new(), String::new(), String::new()]),
            }
            writeln!(w, "{}", f.join(","))?;
        }
        Ok(())
    }
}

struct Propagator<'s> {
    setup: &'s LoopSetup,
    partial: HashMap<(usize, Tick), Matrix>,
}

impl Propagator<'_> {
    fn step(&mut self, true_mode: usize, model: usize, dt: Tick, z: &[f64]) -> Result<Vec<f64>> {
        let idx = true_mode * self.setup.mode_count() + model;
        if dt == self.setup.tau_s {
            return Ok(self.setup.full_step[idx].mul_vec(z));
        }
        if let Some(m) = self.partial.get(&(idx, dt)) {
            return Ok(m.mul_vec(z));
        }
        let m = linalg::expm(&self.setup.generators[idx].scale(self.setup.grid.seconds(dt)))?;
        let out = m.mul_vec(z);
        self.partial.insert((idx, dt), m);
        Ok(out)
    }
}

/// Runs whole blocks up to the signal horizon and observes the state once
/// more at the last block boundary.
pub fn run_closed_loop(
    setup: &LoopSetup,
    sig: &SwitchingSignal,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<ClosedLoopTrace> {
    let d = setup.plant.system.state_dim();
    let n = setup.cfg.n;
    let tau_s = setup.tau_s;
    if x0.len() != d || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("x0 must be a finite {d}-vector")));
    }
    if norm2(x0) > setup.cfg.r0 {
        return Err(Error::invalid(format!(
            "|x0| = {} exceeds r0 = {}",
            norm2(x0),
            setup.cfg.r0
        )));
    }
    if sig.grid().base_tick != setup.grid.base_tick {
        return Err(Error::invalid("signal and setup use different tick grids"));
    }
    if sig.max_mode() >= setup.mode_count() {
        return Err(Error::invalid("signal uses a mode the system does not have"));
    }
    let blocks = sig.horizon() / setup.block_ticks();
    if blocks == 0 {
        return Err(Error::invalid("horizon is shorter than one block"));
    }
    let total = blocks * n;
    let full = opts.detail == TraceDetail::Full;

    let mut coder = Coder::new(&setup.cfg, tau_s, &setup.quantizer)?;
    let mut ctrl = Controller::new(
        &setup.plant,
        &setup.cfg,
        tau_s,
        setup.grid.base_tick,
        &setup.quantizer,
    )?;
    let mut prop = Propagator {
        setup,
        partial: HashMap::new(),
    };
    let gains = setup.plant.feedback.gains();
    let m_hat = setup.quantizer.m_hat();
    let mode_count = setup.mode_count();

    let mut trace = ClosedLoopTrace {
        tick_seconds: setup.grid.base_tick,
        tau_s,
        n,
        state_dim: d,
        input_dim: setup.plant.system.input_dim(),
        mode_count,
        x0: x0.to_vec(),
        rows: Vec::new(),
        blocks: Vec::with_capacity(blocks as usize + 1),
        symbols: Vec::with_capacity(total as usize + 1),
        segments: Vec::new(),
        complete_blocks: 0,
        info_bits: 0.0,
        wire_bits: 0,
        halted: None,
        adt: opts.adt.map(|b| is_adt_admissible(sig, &b)),
        decay: decay_rates(&setup.cfg).ok(),
    };

    let mut x = x0.to_vec();
    for j in 0..=total {
        let t = j * tau_s;
        let sigma = sig.mode_at(t);
        let block_start = j % n == 0;
        let sym = if block_start {
            match coder.block_step(&x, sigma) {
                Ok(s) => s,
                Err(e @ Error::Soundness { .. }) if opts.lenient => {
                    trace.halted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            coder.mode_step(sigma)?
        };
        let seg = ctrl.receive(&sym)?;
        if j < total {
            trace.info_bits += bit_cost(&sym, n, m_hat, mode_count);
            trace.wire_bits += u64::from(wire_bits(&sym, n, setup.quantizer.len(), mode_count));
        }
        trace.symbols.push(sym);

        let block_index = if block_start {
            let k = j / n;
            let (mismatches_prev, switches_prev) = if k > 0 {
                let bt = setup.block_ticks();
                (
                    Some(mismatch_flags(sig, tau_s, n, k - 1)?.count),
                    Some(sig.count_switches((k - 1) * bt, k * bt)?),
                )
            } else {
                (None, None)
            };
            trace.blocks.push(BlockRecord {
                k,
                tick: t,
                state_norm: norm2(&x),
                radius: coder.radius(),
                beta: coder.last_beta(),
                nmissed: coder.last_nmissed(),
                mismatches_prev,
                switches_prev,
                xi: seg.xhat0.clone(),
            });
            Some(trace.blocks.len() - 1)
        } else {
            None
        };
        if full {
            trace.rows.push(TraceRow {
                tick: t,
                x: x.clone(),
                xhat: seg.xhat0.clone(),
                u: gains[seg.mode].mul_vec(&seg.xhat0),
                sigma,
                sigma_hat: seg.mode,
                block: block_index,
            });
        }
        if j == total {
            if full {
                trace.segments.push(seg);
            }
            break;
        }

        let end = t + tau_s;
        let mut z: Vec<f64> = x.iter().chain(&seg.xhat0).copied().collect();
        let mut cur = t;
        let mut true_mode = sigma;
        let mut ev = sig.first_event_from(t + 1);
        while let Some(&(te, mode)) = sig.events().get(ev) {
            if te >= end {
                break;
            }
            z = prop.step(true_mode, seg.mode, te - cur, &z)?;
            true_mode = mode;
            cur = te;
            ev += 1;
            if full {
                let xhat = z[d..].to_vec();
                trace.rows.push(TraceRow {
                    tick: te,
                    x: z[..d].to_vec(),
                    u: gains[seg.mode].mul_vec(&xhat),
                    xhat,
                    sigma: true_mode,
                    sigma_hat: seg.mode,
                    block: None,
                });
            }
        }
        z = prop.step(true_mode, seg.mode, end - cur, &z)?;
        x.copy_from_slice(&z[..d]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("state diverged at tick {end}")));
        }
        if full {
            trace.segments.push(seg);
        }
        if (j + 1) % n == 0 {
            trace.complete_blocks += 1;
        }
    }
    Ok(trace)
}
