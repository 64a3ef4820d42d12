//! Experiment configuration, randomized runs and controller replay.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coder::{Symbol, SymbolKind};
use crate::controller::{Controller, InputSegment};
use crate::design::CoderControllerConfig;
use crate::error::{Error, Result};
use crate::harness::sim::{run_closed_loop, ClosedLoopTrace, LoopSetup, RunOptions, TraceDetail};
use crate::harness::verify::{verify_trace, VerifyReport};
use crate::switching::{generate_adt_signal, AdtBudget, SwitchingSignal, Tick, TimeGrid};
use crate::system::{system_constants, PlantSpec, SystemDocument};

fn default_n0() -> f64 {
    2.0
}
fn default_base_tick() -> f64 {
    1e-4
}
fn default_horizon() -> f64 {
    40.0
}
fn default_seeds() -> u64 {
    1
}

/// Either a path to a system document (relative to the config file) or the
/// document inline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Path(PathBuf),
    Inline(SystemDocument),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    pub tau_s: f64,
    pub n: u64,
    pub alpha: f64,
    pub r0: f64,
    pub tau_a: f64,
    #[serde(default = "default_n0")]
    pub n0: f64,
    #[serde(default = "default_base_tick")]
    pub base_tick: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Radius of the sphere initial states are drawn from; defaults to `r0`.
    #[serde(default)]
    pub initial_radius: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
}

/// A loaded and validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub setup: LoopSetup,
    pub budget: AdtBudget,
    pub horizon: Tick,
    pub initial_radius: f64,
    pub seeds: u64,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PlantSpec)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let plant = cfg.plant(base)?;
        Ok((cfg, plant))
    }

    pub fn plant(&self, base: &Path) -> Result<PlantSpec> {
        match &self.system {
            SystemSource::Path(p) => PlantSpec::load(base.join(p)).map_err(|e| match e {
                Error::Io(m) => Error::Config(format!("{}: {m}", p.display())),
                Error::Parse(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            }),
            SystemSource::Inline(doc) => doc.clone().try_into(),
        }
    }

    pub fn coder_config(&self, plant: &PlantSpec) -> Result<CoderControllerConfig> {
        let cfg = CoderControllerConfig {
            tau_s: self.tau_s,
            n: self.n,
            alpha: self.alpha,
            r0: self.r0,
            tau_a: self.tau_a,
            certificate: plant.certificate()?,
            constants: system_constants(&plant.system, &plant.feedback)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build(&self, plant: PlantSpec) -> Result<Experiment> {
        let cfg = self.coder_config(&plant)?;
        let grid = TimeGrid::new(self.base_tick).map_err(|e| Error::Config(e.to_string()))?;
        let horizon = grid
            .ticks(self.horizon)
            .map_err(|e| Error::Config(format!("horizon: {e}")))?;
        let budget = AdtBudget::new(self.tau_a, self.n0).map_err(|e| Error::Config(e.to_string()))?;
        let initial_radius = self.initial_radius.unwrap_or(self.r0);
        if !(initial_radius >= 0.0 && initial_radius <= self.r0) {
            return Err(Error::Config(format!(
                "initial_radius = {initial_radius} must lie in [0, r0]"
            )));
        }
        let setup = LoopSetup::new(plant, cfg, grid)?;
        if horizon < setup.block_ticks() {
            return Err(Error::Config("horizon is shorter than one block".into()));
        }
        Ok(Experiment {
            setup,
            budget,
            horizon,
            initial_radius,
            seeds: self.seeds,
        })
    }
}

/// Uniform on the sphere of the given radius.
pub fn sample_on_sphere(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::linalg::norm2(&v);
        if norm > 1e-12 {
            // Keep the result inside the closed ball despite rounding.
            return v.iter().map(|x| x / norm * radius * (1.0 - 1e-15)).collect();
        }
    }
}

// Independent streams for the signal and the initial state of one seed.
const STATE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn initial_state(seed: u64, dim: usize, radius: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STATE_STREAM);
    sample_on_sphere(dim, radius, &mut rng)
}

pub struct SeededRun {
    pub signal: SwitchingSignal,
    pub x0: Vec<f64>,
    pub trace: ClosedLoopTrace,
    pub report: VerifyReport,
}

impl Experiment {
    pub fn signal(&self, seed: u64) -> Result<SwitchingSignal> {
        generate_adt_signal(
            &self.budget,
            self.setup.grid,
            self.horizon,
            self.setup.mode_count(),
            seed,
        )
    }

    pub fn run_seed(&self, seed: u64, detail: TraceDetail) -> Result<SeededRun> {
        let signal = self.signal(seed)?;
        let x0 = initial_state(seed, self.setup.plant.system.state_dim(), self.initial_radius);
        let opts = RunOptions {
            detail,
            lenient: false,
            adt: Some(self.budget),
        };
        let trace = run_closed_loop(&self.setup, &signal, &x0, &opts)?;
        let report = verify_trace(&trace, &signal, &self.setup.cfg)?;
        Ok(SeededRun { signal, x0, trace, report })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n0: f64,
    pub tau_a: f64,
    pub switches: usize,
    pub report: VerifyReport,
    /// Set when the run itself failed (e.g. a soundness error).
    pub error: Option<String>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.report.passed()
    }
}

/// Runs every seed in parallel; results are in seed order.
pub fn run_batch(exp: &Experiment, seeds: &[u64]) -> Vec<RunSummary> {
    seeds
        .par_iter()
        .map(|&seed| {
            let empty = || VerifyReport {
                blocks: 0,
                soundness_violations: vec![],
                nmissed_violations: vec![],
                product_violations: vec![],
                halted: None,
                radius_decay: None,
                state_decay: None,
                mu: None,
                lambda: None,
                decay_ok: None,
                adt_admissible: None,
            };
            match exp.run_seed(seed, TraceDetail::Blocks) {
                Ok(run) => RunSummary {
                    seed,
                    n0: exp.budget.n0,
                    tau_a: exp.budget.tau_a,
                    switches: run.signal.events().len(),
                    report: run.report,
                    error: None,
                },
                Err(e) => RunSummary {
                    seed,
                    n0: exp.budget.n0,
                    tau_a: exp.budget.tau_a,
                    switches: 0,
                    report: empty(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Controller output reconstructed from a symbol log alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub radii: Vec<f64>,
    pub block_xi: Vec<Vec<f64>>,
    pub segments: Vec<InputSegment>,
}

pub fn replay(setup: &LoopSetup, symbols: &[Symbol]) -> Result<Replay> {
    let mut ctrl = Controller::new(
        &setup.plant,
        &setup.cfg,
        setup.tau_s,
        setup.grid.base_tick,
        &setup.quantizer,
    )?;
    let mut out = Replay {
        radii: vec![],
        block_xi: vec![],
        segments: Vec::with_capacity(symbols.len()),
    };
    for sym in symbols {
        let seg = ctrl.receive(sym)?;
        if matches!(sym.kind, SymbolKind::Block { .. }) {
            out.radii.push(ctrl.radius());
            out.block_xi.push(seg.xhat0.clone());
        }
        out.segments.push(seg);
    }
    Ok(out)
}

/// Bit-level comparison of a replay with the recorded trace.
pub fn replay_matches(trace: &ClosedLoopTrace, rep: &Replay) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    trace.blocks.len() == rep.radii.len()
        && trace
            .blocks
            .iter()
            .zip(rep.radii.iter().zip(&rep.block_xi))
            .all(|(b, (r, xi))| b.radius.to_bits() == r.to_bits() && bits(&b.xi) == bits(xi))
        && trace.segments.len() == rep.segments.len()
        && trace.segments.iter().zip(&rep.segments).all(|(a, b)| {
            a.t_start == b.t_start && a.t_end == b.t_end && a.mode == b.mode && bits(&a.xhat0) == bits(&b.xhat0)
        })
}
