//! Coder state machine.
//!
//! Every `tau_s` the coder sends one symbol. At block starts `k n tau_s` the
//! symbol carries the quantized scaled state, the mode and `b_k`; at the
//! `n - 1` sampling instants in between it carries only the mode. The radius
//! `r_k = beta(b_k) r_{k-1}` is chosen with the smallest `b_k` for which
//! `|x(k n tau_s)| <= r_k`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::design::{CoderControllerConfig, DerivedConstants};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::quantizer::{bits_for, BallQuantizer};
use crate::switching::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SymbolKind {
    Block { eta: u64, mode: usize, nmissed: u64 },
    ModeOnly { mode: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub tick: Tick,
    #[serde(flatten)]
    pub kind: SymbolKind,
}

impl Symbol {
    pub fn mode(&self) -> usize {
        match self.kind {
            SymbolKind::Block { mode, .. } | SymbolKind::ModeOnly { mode } => mode,
        }
    }
}

/// Information content in bits, counting alphabet sizes as real `log2`.
pub fn bit_cost(symbol: &Symbol, n: u64, m_hat: u64, mode_count: usize) -> f64 {
    let mode_bits = (mode_count as f64).log2();
    match symbol.kind {
        SymbolKind::Block { .. } => (m_hat as f64).log2() + ((n + 1) as f64).log2() + mode_bits,
        SymbolKind::ModeOnly { .. } => mode_bits,
    }
}

/// Bits of the fixed-width wire encoding: `ceil(log2 .)` per field, using the
/// actual point count `m` of the quantizer.
pub fn wire_bits(symbol: &Symbol, n: u64, point_count: usize, mode_count: usize) -> u32 {
    let mode_bits = bits_for(mode_count as u64);
    match symbol.kind {
        SymbolKind::Block { .. } => bits_for(point_count as u64) + bits_for(n + 1) + mode_bits,
        SymbolKind::ModeOnly { .. } => mode_bits,
    }
}

#[derive(Clone, Debug)]
pub struct Coder<'q> {
    derived: DerivedConstants,
    quantizer: &'q BallQuantizer,
    n: u64,
    tau_s: Tick,
    r0: f64,
    // Position of the next expected observation.
    block: u64,
    step: u64,
    radius: f64,
    last_beta: Option<f64>,
    last_nmissed: u64,
}

impl<'q> Coder<'q> {
    pub fn new(cfg: &CoderControllerConfig, tau_s: Tick, quantizer: &'q BallQuantizer) -> Result<Self> {
        cfg.validate()?;
        if tau_s == 0 {
            return Err(Error::invalid("sampling period must be at least one tick"));
        }
        if (quantizer.alpha() - cfg.alpha).abs() > 0.0 {
            return Err(Error::invalid("quantizer alpha differs from the configuration"));
        }
        Ok(Self {
            derived: DerivedConstants::new(cfg),
            quantizer,
            n: cfg.n,
            tau_s,
            r0: cfg.r0,
            block: 0,
            step: 0,
            radius: cfg.r0,
            last_beta: None,
            last_nmissed: 0,
        })
    }

    /// Tick of the next observation.
    pub fn next_tick(&self) -> Tick {
        (self.block * self.n + self.step) * self.tau_s
    }

    pub fn at_block_start(&self) -> bool {
        self.step == 0
    }

    /// Index of the block the last block symbol belonged to.
    pub fn block(&self) -> u64 {
        self.block.saturating_sub(u64::from(self.step == 0))
    }

    /// Current `r_k`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `beta_k` of the last block step; `None` for `k = 0`.
    pub fn last_beta(&self) -> Option<f64> {
        self.last_beta
    }

    pub fn last_nmissed(&self) -> u64 {
        self.last_nmissed
    }

    pub fn derived(&self) -> &DerivedConstants {
        &self.derived
    }

    /// Observation at `k n tau_s`.
    pub fn block_step(&mut self, x: &[f64], mode: usize) -> Result<Symbol> {
        if self.step != 0 {
            return Err(Error::Protocol(format!(
                "block observation at step {} of block {}",
                self.step, self.block
            )));
        }
        let tick = self.next_tick();
        let state_norm = norm2(x);
        if !state_norm.is_finite() {
            return Err(Error::invalid("observed state is not finite"));
        }
        let (nmissed, beta, radius) = if self.block == 0 {
            if state_norm > self.r0 {
                return Err(Error::Soundness {
                    block: 0,
                    state_norm,
                    bound: self.r0,
                });
            }
            (0, None, self.r0)
        } else {
            let r_prev = self.radius;
            let mut found = None;
            for b in 0..=self.n {
                let beta = self.derived.beta(b)?;
                if state_norm <= beta * r_prev {
                    found = Some((b, beta));
                    break;
                }
            }
            let (b, beta) = found.ok_or_else(|| Error::Soundness {
                block: self.block,
                state_norm,
                bound: self.derived.beta(self.n).unwrap_or(f64::NAN) * r_prev,
            })?;
            (b, Some(beta), beta * r_prev)
        };
        let scaled: Vec<f64> = x.iter().map(|v| v / radius).collect();
        let (eta, _) = self.quantizer.quantize(&scaled)?;

        self.radius = radius;
        self.last_beta = beta;
        self.last_nmissed = nmissed;
        self.advance();
        Ok(Symbol {
            tick,
            kind: SymbolKind::Block {
                eta: eta as u64,
                mode,
                nmissed,
            },
        })
    }

    /// Observation at `(k n + j) tau_s`, `1 <= j <= n - 1`.
    pub fn mode_step(&mut self, mode: usize) -> Result<Symbol> {
        if self.step == 0 {
            return Err(Error::Protocol(format!(
                "mode-only observation at the start of block {}",
                self.block
            )));
        }
        let tick = self.next_tick();
        self.advance();
        Ok(Symbol {
            tick,
            kind: SymbolKind::ModeOnly { mode },
        })
    }

    /// Dispatches on the cadence: block step at block starts, mode step otherwise.
    pub fn observe(&mut self, x: &[f64], mode: usize) -> Result<Symbol> {
        if self.at_block_start() {
            self.block_step(x, mode)
        } else {
            self.mode_step(mode)
        }
    }

    fn advance(&mut self) {
        self.step += 1;
        if self.step == self.n {
            self.step = 0;
            self.block += 1;
        }
    }
}

const LOG_MAGIC: &[u8; 4] = b"SLSY";
const LOG_VERSION: u8 = 1;
const RECORD_LEN: usize = 8 + 1 + 4 + 8 + 8;

/// Binary symbol log: `SLSY`, a version byte, then fixed 29-byte records
/// `tick:u64 | kind:u8 | mode:u32 | eta:u64 | nmissed:u64`, all big-endian.
/// `kind` is 0 for block symbols and 1 for mode-only symbols (eta and nmissed zero).
pub fn write_binary_log<W: Write>(symbols: &[Symbol], mut w: W) -> Result<()> {
    w.write_all(LOG_MAGIC)?;
    w.write_all(&[LOG_VERSION])?;
    let mut rec = [0u8; RECORD_LEN];
    for s in symbols {
        let (kind, mode, eta, nmissed) = match s.kind {
            SymbolKind::Block { eta, mode, nmissed } => (0u8, mode, eta, nmissed),
            SymbolKind::ModeOnly { mode } => (1u8, mode, 0, 0),
        };
        let mode = u32::try_from(mode).map_err(|_| Error::Protocol("mode index too large".into()))?;
        rec[0..8].copy_from_slice(&s.tick.to_be_bytes());
        rec[8] = kind;
        rec[9..13].copy_from_slice(&mode.to_be_bytes());
        rec[13..21].copy_from_slice(&eta.to_be_bytes());
        rec[21..29].copy_from_slice(&nmissed.to_be_bytes());
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn read_binary_log<R: Read>(mut r: R) -> Result<Vec<Symbol>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 5 || &bytes[..4] != LOG_MAGIC {
        return Err(Error::Protocol("not a symbol log".into()));
    }
    if bytes[4] != LOG_VERSION {
        return Err(Error::Protocol(format!("unsupported log version {}", bytes[4])));
    }
    let body = &bytes[5..];
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Protocol("truncated symbol record".into()));
    }
    body.chunks(RECORD_LEN)
        .map(|rec| {
            let u64_at = |i: usize| u64::from_be_bytes(rec[i..i + 8].try_into().expect("8 bytes"));
            let tick = u64_at(0);
            let mode = u32::from_be_bytes(rec[9..13].try_into().expect("4 bytes")) as usize;
            let kind = match rec[8] {
                0 => SymbolKind::Block {
                    eta: u64_at(13),
                    mode,
                    nmissed: u64_at(21),
                },
                1 => SymbolKind::ModeOnly { mode },
                other => return Err(Error::Protocol(format!("unknown symbol kind {other}"))),
            };
            Ok(Symbol { tick, kind })
        })
        .collect()
}

pub fn write_jsonl<W: Write>(symbols: &[Symbol], mut w: W) -> Result<()> {
    for s in symbols {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Symbol>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Protocol(e.to_string()))?);
    }
    Ok(out)
}
