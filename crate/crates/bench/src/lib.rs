//! Shared inputs for the benchmarks.

use slsrate_core::fixtures;
use slsrate_core::harness::experiment::initial_state;
use slsrate_core::harness::LoopSetup;
use slsrate_core::switching::{generate_adt_signal, AdtBudget, SwitchingSignal, TimeGrid};

pub const TICK: f64 = 1e-4;

pub fn slow_setup() -> LoopSetup {
    LoopSetup::new(fixtures::two_mode_plant(), fixtures::slow_switching_config(), TimeGrid::new(TICK).unwrap())
        .expect("fixture setup is valid")
}

pub fn fast_setup() -> LoopSetup {
    LoopSetup::new(fixtures::two_mode_plant(), fixtures::fast_switching_config(), TimeGrid::new(TICK).unwrap())
        .expect("fixture setup is valid")
}

/// A dwell-time admissible signal over `horizon` seconds and a unit initial state.
pub fn workload(setup: &LoopSetup, horizon: f64, seed: u64) -> (SwitchingSignal, Vec<f64>) {
    let budget = AdtBudget::new(setup.cfg.tau_a, 2.0).unwrap();
    let ticks = (horizon / TICK).round() as u64;
    let sig = generate_adt_signal(&budget, setup.grid, ticks, setup.mode_count(), seed).unwrap();
    (sig, initial_state(seed, setup.plant.system.state_dim(), 1.0))
}
