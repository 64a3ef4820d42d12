//! Switching signals on an integer tick grid.
//!
//! A signal is an initial mode plus a strictly increasing list of
//! `(tick, new_mode)` events; `sigma(t)` is the mode of the last event at or
//! before `t`. Keeping every time on the grid makes event ordering exact and
//! traces reproducible bit for bit.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tick = u64;

// Relative slack when deciding whether a time is a whole number of ticks.
const ALIGN_TOL: f64 = 1e-9;
// Absolute slack on the dwell-time inequality (counts are O(1..1e4)).
const ADT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub base_tick: f64,
}

impl TimeGrid {
    pub fn new(base_tick: f64) -> Result<Self> {
        if !(base_tick > 0.0) || !base_tick.is_finite() {
            return Err(Error::invalid(format!("base tick {base_tick} must be > 0")));
        }
        Ok(Self { base_tick })
    }

    /// Converts a time to ticks, failing unless it is a whole number of ticks.
    pub fn ticks(&self, t: f64) -> Result<Tick> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
        }
        let q = t / self.base_tick;
        let r = q.round();
        if (q - r).abs() > ALIGN_TOL * q.max(1.0) {
            return Err(Error::invalid(format!(
                "time {t} is not a multiple of the base tick {}",
                self.base_tick
            )));
        }
        Ok(r as Tick)
    }

    pub fn seconds(&self, ticks: Tick) -> f64 {
        ticks as f64 * self.base_tick
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSignal {
    grid: TimeGrid,
    initial_mode: usize,
    events: Vec<(Tick, usize)>,
    horizon: Tick,
}

impl SwitchingSignal {
    pub fn new(
        grid: TimeGrid,
        initial_mode: usize,
        events: Vec<(Tick, usize)>,
        horizon: Tick,
    ) -> Result<Self> {
        let mut prev_tick = 0;
        let mut prev_mode = initial_mode;
        for (i, &(t, m)) in events.iter().enumerate() {
            if t == 0 || (i > 0 && t <= prev_tick) {
                return Err(Error::invalid(format!(
                    "event {i} at tick {t}: times must be positive and strictly increasing"
                )));
            }
            if t > horizon {
                return Err(Error::invalid(format!(
                    "event {i} at tick {t} is past the horizon {horizon}"
                )));
            }
            if m == prev_mode {
                return Err(Error::invalid(format!(
                    "event {i} at tick {t} does not change the mode"
                )));
            }
            prev_tick = t;
            prev_mode = m;
        }
        Ok(Self {
            grid,
            initial_mode,
            events,
            horizon,
        })
    }

    pub fn constant(grid: TimeGrid, mode: usize, horizon: Tick) -> Self {
        Self {
            grid,
            initial_mode: mode,
            events: Vec::new(),
            horizon,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn initial_mode(&self) -> usize {
        self.initial_mode
    }

    pub fn events(&self) -> &[(Tick, usize)] {
        &self.events
    }

    pub fn horizon(&self) -> Tick {
        self.horizon
    }

    pub fn max_mode(&self) -> usize {
        self.events
            .iter()
            .map(|e| e.1)
            .fold(self.initial_mode, usize::max)
    }

    pub fn mode_at(&self, t: Tick) -> usize {
        match self.events.partition_point(|e| e.0 <= t) {
            0 => self.initial_mode,
            i => self.events[i - 1].1,
        }
    }

    /// Index of the first event at or after `t`.
    pub fn first_event_from(&self, t: Tick) -> usize {
        self.events.partition_point(|e| e.0 < t)
    }

    /// Number of switches in the half-open window `[s, t)`.
    pub fn count_switches(&self, s: Tick, t: Tick) -> Result<usize> {
        if s > t {
            return Err(Error::invalid(format!("window start {s} after end {t}")));
        }
        Ok(self.first_event_from(t) - self.first_event_from(s))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SignalDocument::from(self)).expect("signal serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SignalDocument = serde_json::from_str(text)?;
        Self::new(
            TimeGrid::new(doc.base_tick)?,
            doc.initial_mode,
            doc.events,
            doc.horizon,
        )
    }

    /// Step-function CSV `t,sigma`, one row at 0, one per switch, one at the horizon.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,sigma")?;
        writeln!(w, "{},{}", 0.0, self.initial_mode)?;
        for &(t, m) in &self.events {
            writeln!(w, "{},{}", self.grid.seconds(t), m)?;
        }
        writeln!(w, "{},{}", self.grid.seconds(self.horizon), self.mode_at(self.horizon))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SignalDocument {
    base_tick: f64,
    initial_mode: usize,
    events: Vec<(Tick, usize)>,
    horizon: Tick,
}

impl From<&SwitchingSignal> for SignalDocument {
    fn from(s: &SwitchingSignal) -> Self {
        Self {
            base_tick: s.grid.base_tick,
            initial_mode: s.initial_mode,
            events: s.events.clone(),
            horizon: s.horizon,
        }
    }
}

/// Average dwell time `tau_a` and chatter bound `N0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdtBudget {
    pub tau_a: f64,
    pub n0: f64,
}

impl AdtBudget {
    pub fn new(tau_a: f64, n0: f64) -> Result<Self> {
        if !(tau_a > 0.0) || !tau_a.is_finite() {
            return Err(Error::invalid(format!("tau_a = {tau_a} must be > 0")));
        }
        if !(n0 >= 0.0) || !n0.is_finite() {
            return Err(Error::invalid(format!("N0 = {n0} must be >= 0")));
        }
        Ok(Self { tau_a, n0 })
    }
}

/// The window `[start, end]` (closed at the last switch) that comes closest
/// to, or furthest past, the dwell-time budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdtWindow {
    pub start: Tick,
    pub end: Tick,
    pub switches: usize,
    /// `switches - N0 - (end - start) / tau_a`; positive means a violation.
    pub excess: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdtReport {
    pub admissible: bool,
    pub worst: Option<AdtWindow>,
}

/// Checks `N(t, s) <= N0 + (t - s) / tau_a` over every window.
///
/// The worst windows start at a switch and end just after another, so it is
/// enough to scan pairs of switch times `i <= j`. For a fixed `j` the best `i`
/// maximises `t_i / tau_a - i`, which a running maximum tracks in one pass.
pub fn is_adt_admissible(sig: &SwitchingSignal, budget: &AdtBudget) -> AdtReport {
    let rate = sig.grid.base_tick / budget.tau_a;
    let mut worst: Option<AdtWindow> = None;
    // (value of t_i * rate - i, i)
    let mut best_start: Option<(f64, usize)> = None;
    for (j, &(tj, _)) in sig.events.iter().enumerate() {
        let cand = sig.events[j].0 as f64 * rate - j as f64;
        if best_start.is_none_or(|(v, _)| cand > v) {
            best_start = Some((cand, j));
        }
        let (_, i) = best_start.expect("set above");
        let ti = sig.events[i].0;
        let switches = j - i + 1;
        let excess = switches as f64 - budget.n0 - (tj - ti) as f64 * rate;
        if worst.is_none_or(|w| excess > w.excess) {
            worst = Some(AdtWindow {
                start: ti,
                end: tj,
                switches,
                excess,
            });
        }
    }
    AdtReport {
        admissible: worst.is_none_or(|w| w.excess <= ADT_TOL),
        worst,
    }
}

/// Pseudorandom signal satisfying the dwell-time budget by construction.
///
/// A token bucket of capacity `N0` starts full and refills at `1 / tau_a`
/// tokens per second; every switch spends one whole token. Candidate switch
/// times are exponential with mean `tau_a` after the previous switch, rounded
/// up to the grid and delayed until a token is available. Any window `[s, t)`
/// then holds at most `N0 + (t - s) / tau_a` switches. With `N0 < 1` the
/// bucket can never hold a token and the signal is constant, as the budget
/// demands.
pub fn generate_adt_signal(
    budget: &AdtBudget,
    grid: TimeGrid,
    horizon: Tick,
    mode_count: usize,
    seed: u64,
) -> Result<SwitchingSignal> {
    if mode_count == 0 {
        return Err(Error::invalid("mode_count must be >= 1"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial_mode = rng.random_range(0..mode_count);
    if mode_count == 1 || budget.n0 < 1.0 {
        return Ok(SwitchingSignal::constant(grid, initial_mode, horizon));
    }
    let gap = Exp::new(1.0 / budget.tau_a).map_err(|e| Error::invalid(e.to_string()))?;
    let refill_per_tick = grid.base_tick / budget.tau_a;
    let capacity = budget.n0;
    let mut level = capacity;
    let mut level_tick: Tick = 0;
    let level_at = |level: f64, since: Tick, t: Tick| {
        (level + (t - since) as f64 * refill_per_tick).min(capacity)
    };

    let mut mode = initial_mode;
    let mut last: Tick = 0;
    let mut events = Vec::new();
    loop {
        let wait = gap.sample(&mut rng);
        let mut t = last + ((wait / grid.base_tick).ceil() as Tick).max(1);
        if t >= horizon {
            break;
        }
        let have = level_at(level, level_tick, t);
        if have < 1.0 {
            let need = ((1.0 - have) / refill_per_tick).ceil() as Tick;
            t += need;
            while level_at(level, level_tick, t) < 1.0 {
                t += 1;
            }
        }
        if t >= horizon {
            break;
        }
        level = level_at(level, level_tick, t) - 1.0;
        level_tick = t;
        let mut next = rng.random_range(0..mode_count - 1);
        if next >= mode {
            next += 1;
        }
        mode = next;
        events.push((t, mode));
        last = t;
    }
    SwitchingSignal::new(grid, initial_mode, events, horizon)
}

/// Mode 0 on `[0, 1/n) + 2k/n`, mode 1 on `[1/n, 2/n) + 2k/n`.
pub fn generate_sigma_n(n: u64, grid: TimeGrid, horizon: Tick) -> Result<SwitchingSignal> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let half = grid.ticks(1.0 / n as f64).map_err(|_| {
        Error::invalid(format!(
            "1/{n} is not a multiple of the base tick {}; refine the grid",
            grid.base_tick
        ))
    })?;
    if half == 0 {
        return Err(Error::invalid("half period shorter than one tick"));
    }
    let events = (1..)
        .map(|k| k * half)
        .take_while(|&t| t < horizon)
        .enumerate()
        .map(|(i, t)| (t, (i + 1) % 2))
        .collect();
    SwitchingSignal::new(grid, 0, events, horizon)
}

/// `sigma_hat(t) = sigma(j tau_s)` on `[j tau_s, (j+1) tau_s)`.
pub fn sample_and_hold(sig: &SwitchingSignal, tau_s: Tick) -> Result<SwitchingSignal> {
    if tau_s == 0 {
        return Err(Error::invalid("sampling period must be at least one tick"));
    }
    let mut held = sig.initial_mode;
    let mut events = Vec::new();
    let mut last_sample = 0;
    for &(t, _) in &sig.events {
        let sample = t.div_ceil(tau_s) * tau_s;
        if sample == last_sample || sample > sig.horizon {
            continue;
        }
        last_sample = sample;
        let m = sig.mode_at(sample);
        if m != held {
            events.push((sample, m));
            held = m;
        }
    }
    SwitchingSignal::new(sig.grid, sig.initial_mode, events, sig.horizon)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MismatchFlags {
    /// `b*_j` for `j = kn .. kn + n - 1`: a switch happened in `[j tau_s, (j+1) tau_s)`.
    pub flags: Vec<bool>,
    /// `N*_k`, the number of set flags.
    pub count: usize,
}

pub fn mismatch_flags(sig: &SwitchingSignal, tau_s: Tick, n: u64, k: u64) -> Result<MismatchFlags> {
    if tau_s == 0 || n == 0 {
        return Err(Error::invalid("tau_s and n must be positive"));
    }
    let flags: Vec<bool> = (k * n..(k + 1) * n)
        .map(|j| sig.count_switches(j * tau_s, (j + 1) * tau_s).map(|c| c >= 1))
        .collect::<Result<_>>()?;
    let count = flags.iter().filter(|&&b| b).count();
    Ok(MismatchFlags { flags, count })
}
