//! Controller state machine.
//!
//! The controller mirrors the coder's radius bookkeeping from the transmitted
//! `b_k`, reconstructs `xi_{kn} = r_k eta_k` at block starts and between them
//! runs the closed-loop model `xhat' = (A_i + B_i K_i) xhat` of the last
//! reported mode. Each sampling interval yields one [`InputSegment`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::coder::{Symbol, SymbolKind};
use crate::design::{CoderControllerConfig, DerivedConstants};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::quantizer::BallQuantizer;
use crate::switching::Tick;
use crate::system::{closed_loop_matrix, PlantSpec};

/// `u(t) = K_mode xhat(t)` on `[t_start, t_end)`, where `xhat` solves the
/// closed-loop model of `mode` from `xhat0` at `t_start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSegment {
    pub t_start: Tick,
    pub t_end: Tick,
    pub tick_seconds: f64,
    pub mode: usize,
    pub xhat0: Vec<f64>,
}

impl InputSegment {
    pub fn start_seconds(&self) -> f64 {
        self.t_start as f64 * self.tick_seconds
    }

    pub fn end_seconds(&self) -> f64 {
        self.t_end as f64 * self.tick_seconds
    }
}

#[derive(Clone, Debug)]
pub struct Controller<'a> {
    plant: &'a PlantSpec,
    quantizer: &'a BallQuantizer,
    derived: DerivedConstants,
    n: u64,
    tau_s: Tick,
    tick_seconds: f64,
    r0: f64,
    closed_loop: Vec<Matrix>,
    // exp((A_i + B_i K_i) tau_s)
    step_maps: Vec<Matrix>,
    block: u64,
    step: u64,
    radius: f64,
    segment: Option<InputSegment>,
}

impl<'a> Controller<'a> {
    pub fn new(
        plant: &'a PlantSpec,
        cfg: &CoderControllerConfig,
        tau_s: Tick,
        tick_seconds: f64,
        quantizer: &'a BallQuantizer,
    ) -> Result<Self> {
        cfg.validate()?;
        if tau_s == 0 || !(tick_seconds > 0.0) {
            return Err(Error::invalid("sampling period must be positive"));
        }
        if quantizer.dim() != plant.system.state_dim() {
            return Err(Error::invalid("quantizer dimension differs from the state dimension"));
        }
        let closed_loop: Vec<Matrix> = plant
            .system
            .modes()
            .iter()
            .zip(plant.feedback.gains())
            .map(|(m, k)| closed_loop_matrix(m, k))
            .collect();
        let dt = tau_s as f64 * tick_seconds;
        let step_maps = closed_loop
            .iter()
            .map(|m| linalg::expm(&m.scale(dt)))
            .collect::<Result<_>>()?;
        Ok(Self {
            plant,
            quantizer,
            derived: DerivedConstants::new(cfg),
            n: cfg.n,
            tau_s,
            tick_seconds,
            r0: cfg.r0,
            closed_loop,
            step_maps,
            block: 0,
            step: 0,
            radius: cfg.r0,
            segment: None,
        })
    }

    pub fn next_tick(&self) -> Tick {
        (self.block * self.n + self.step) * self.tau_s
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Current reconstruction `xi`, the initial value of the active segment.
    pub fn xi(&self) -> Option<&[f64]> {
        self.segment.as_ref().map(|s| s.xhat0.as_slice())
    }

    pub fn segment(&self) -> Option<&InputSegment> {
        self.segment.as_ref()
    }

    fn check_tick(&self, sym: &Symbol) -> Result<()> {
        let want = self.next_tick();
        if sym.tick != want {
            return Err(Error::Protocol(format!(
                "symbol at tick {} but expected tick {want}",
                sym.tick
            )));
        }
        if sym.mode() >= self.plant.system.mode_count() {
            return Err(Error::Protocol(format!("undecodable mode {}", sym.mode())));
        }
        Ok(())
    }

    pub fn block_step(&mut self, sym: &Symbol) -> Result<InputSegment> {
        self.check_tick(sym)?;
        let SymbolKind::Block { eta, mode, nmissed } = sym.kind else {
            return Err(Error::Protocol(format!(
                "expected a block symbol at tick {}",
                sym.tick
            )));
        };
        if self.step != 0 {
            return Err(Error::Protocol(format!(
                "block symbol at step {} of block {}",
                self.step, self.block
            )));
        }
        if nmissed > self.n {
            return Err(Error::Protocol(format!("nmissed {nmissed} exceeds n = {}", self.n)));
        }
        let radius = if self.block == 0 {
            if nmissed != 0 {
                return Err(Error::Protocol("first block must carry nmissed = 0".into()));
            }
            self.r0
        } else {
            let r_prev = self.radius;
            self.derived.beta(nmissed)? * r_prev
        };
        let index = usize::try_from(eta).map_err(|_| Error::Protocol("index overflow".into()))?;
        let point = self.quantizer.point(index)?;
        let xi: Vec<f64> = point.iter().map(|p| radius * p).collect();
        self.radius = radius;
        Ok(self.start_segment(sym.tick, mode, xi))
    }

    pub fn mode_step(&mut self, sym: &Symbol) -> Result<InputSegment> {
        self.check_tick(sym)?;
        let SymbolKind::ModeOnly { mode } = sym.kind else {
            return Err(Error::Protocol(format!(
                "expected a mode-only symbol at tick {}",
                sym.tick
            )));
        };
        let prev = match (&self.segment, self.step) {
            (Some(seg), s) if s != 0 => seg,
            _ => {
                return Err(Error::Protocol(format!(
                    "mode-only symbol at the start of block {}",
                    self.block
                )))
            }
        };
        let xi = self.step_maps[prev.mode].mul_vec(&prev.xhat0);
        Ok(self.start_segment(sym.tick, mode, xi))
    }

    pub fn receive(&mut self, sym: &Symbol) -> Result<InputSegment> {
        match sym.kind {
            SymbolKind::Block { .. } => self.block_step(sym),
            SymbolKind::ModeOnly { .. } => self.mode_step(sym),
        }
    }

    fn start_segment(&mut self, tick: Tick, mode: usize, xi: Vec<f64>) -> InputSegment {
        let seg = InputSegment {
            t_start: tick,
            t_end: tick + self.tau_s,
            tick_seconds: self.tick_seconds,
            mode,
            xhat0: xi,
        };
        self.segment = Some(seg.clone());
        self.step += 1;
        if self.step == self.n {
            self.step = 0;
            self.block += 1;
        }
        seg
    }

    /// `xhat(t)` for `t` in `[t_start, t_end]` (seconds).
    pub fn xhat_at(&self, seg: &InputSegment, t: f64) -> Result<Vec<f64>> {
        let (a, b) = (seg.start_seconds(), seg.end_seconds());
        if !(t >= a && t <= b) {
            return Err(Error::invalid(format!("t = {t} outside the segment [{a}, {b}]")));
        }
        let m = self
            .closed_loop
            .get(seg.mode)
            .ok_or_else(|| Error::invalid(format!("mode {} out of range", seg.mode)))?;
        Ok(linalg::expm(&m.scale(t - a))?.mul_vec(&seg.xhat0))
    }

    /// `u(t) = K_i xhat(t)` for `t` in `[t_start, t_end)` (seconds).
    pub fn input_at(&self, seg: &InputSegment, t: f64) -> Result<Vec<f64>> {
        if t >= seg.end_seconds() {
            return Err(Error::invalid(format!(
                "t = {t} is not before the segment end {}",
                seg.end_seconds()
            )));
        }
        let xhat = self.xhat_at(seg, t)?;
        Ok(self.plant.feedback.gain(seg.mode).mul_vec(&xhat))
    }
}

pub fn write_segments_jsonl<W: Write>(segments: &[InputSegment], mut w: W) -> Result<()> {
    for s in segments {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_segments_jsonl<R: BufRead>(r: R) -> Result<Vec<InputSegment>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
