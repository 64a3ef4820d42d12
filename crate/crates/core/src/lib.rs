//! Rate-limited stabilization of switched linear systems under an average
//! dwell-time constraint: plant model, switching signals, ball quantizer,
//! parameter design, the coder/controller pair and a closed-loop harness.

pub mod coder;
pub mod controller;
pub mod design;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod linalg;
pub mod quantizer;
pub mod switching;
pub mod system;

pub use coder::{Coder, Symbol, SymbolKind};
pub use controller::{Controller, InputSegment};
pub use design::{
    check_condition, data_rate, decay_rates, search_parameters, CoderControllerConfig,
    ConditionCheck, DecayRates, DerivedConstants, DesignReport, SearchTargets,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use quantizer::BallQuantizer;
pub use switching::{AdtBudget, SwitchingSignal, Tick, TimeGrid};
pub use system::{
    FeedbackLaw, Mode, PlantSpec, StabilizabilityCertificate, SwitchedLinearSystem,
    SystemConstants,
};
