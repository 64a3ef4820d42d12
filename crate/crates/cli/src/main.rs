//! `slsrate`: design, simulate and check rate-limited coder/controller pairs
//! for switched linear systems.
//!
//! Exit status: 0 when every requested check passes, 1 when a check fails,
//! 2 for a malformed or unreadable configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use slsrate_core::coder::{read_binary_log, read_jsonl, write_binary_log, write_jsonl};
use slsrate_core::controller::{read_segments_jsonl, write_segments_jsonl};
use slsrate_core::design::{search_parameters, DesignReport, SearchTargets};
use slsrate_core::harness::experiment::{initial_state, replay, sample_on_sphere, Experiment, ExperimentConfig};
use slsrate_core::harness::averaging::{averaging_experiment, standard_input_set};
use slsrate_core::harness::svg::trace_svg;
use slsrate_core::harness::{run_closed_loop, verify_trace, RunOptions, TraceDetail};
use slsrate_core::linalg::norm2;
use slsrate_core::switching::{generate_adt_signal, is_adt_admissible, AdtBudget, TimeGrid};
use slsrate_core::system::{system_constants, verify_certificate_lognorm, CertificateVerdict};
use slsrate_core::{BallQuantizer, CoderControllerConfig, Error, PlantSpec};

#[derive(Parser)]
#[command(name = "slsrate", version, about = "Finite-rate stabilization of switched linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate or search coder/controller parameters.
    Design {
        /// Experiment config or bare system document.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tau_a: Option<f64>,
        #[arg(long)]
        tau_s: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        r0: Option<f64>,
        /// Tick used by the parameter search.
        #[arg(long, default_value_t = 1e-4)]
        base_tick: f64,
        /// Fail unless the contraction condition holds.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one closed loop and verify its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial state as comma-separated values; default is a seeded draw
        /// on the sphere of radius `initial_radius`.
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table of sup_u |int_0^T B_sigma_n u| for the scalar averaging example.
    Averaging {
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        n: Vec<u64>,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certificate, quantizer and dwell-time checks for a configuration.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random points for the quantizer and signals for the dwell-time check.
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the controller from a symbol log.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// `.bin` binary log or JSON-lines symbol log.
        #[arg(long)]
        log: PathBuf,
        /// Recorded segment log to compare against.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error that ends a subcommand, tagged with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn config_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: format!("{}: {e}", path.display()) }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Design { config, tau_a, tau_s, n, alpha, r0, base_tick, check, out } => {
            design(&config, DesignOverrides { tau_a, tau_s, n, alpha, r0 }, base_tick, check, out.as_deref())
        }
        Command::Simulate { config, seed, x0, out } => simulate(&config, seed, x0, out.as_deref()),
        Command::Averaging { n, horizon, out } => averaging(&n, horizon, out.as_deref()),
        Command::Verify { config, seed, samples, out } => verify(&config, seed, samples, out.as_deref()),
        Command::Replay { config, log, segments, out } => {
            replay_cmd(&config, &log, segments.as_deref(), out.as_deref())
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

enum Loaded {
    System(PlantSpec),
    Experiment(Box<ExperimentConfig>, PlantSpec),
}

/// Reads either an experiment config (has a `system` key) or a system document.
fn load_any(path: &Path) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_failure(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| config_failure(path, e))?;
    if value.get("system").is_some() {
        let (cfg, plant) = ExperimentConfig::load(path).map_err(|e| config_failure(path, e))?;
        Ok(Loaded::Experiment(Box::new(cfg), plant))
    } else {
        let plant = PlantSpec::from_json(&text).map_err(|e| config_failure(path, e))?;
        Ok(Loaded::System(plant))
    }
}

fn load_experiment(path: &Path) -> Result<(ExperimentConfig, Experiment), Failure> {
    match load_any(path)? {
        Loaded::Experiment(cfg, plant) => {
            let exp = cfg.build(plant).map_err(|e| config_failure(path, e))?;
            Ok((*cfg, exp))
        }
        Loaded::System(_) => Err(config_failure(path, "expected an experiment config with a `system` field")),
    }
}

fn out_dir(out: Option<&Path>) -> Result<Option<&Path>, Failure> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    Ok(out)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure { code: 1, message: e.to_string() })?;
    w.write_all(b"\n")?;
    Ok(())
}

struct DesignOverrides {
    tau_a: Option<f64>,
    tau_s: Option<f64>,
    n: Option<u64>,
    alpha: Option<f64>,
    r0: Option<f64>,
}

fn design(path: &Path, ov: DesignOverrides, base_tick: f64, check: bool, out: Option<&Path>) -> Outcome {
    let (plant, defaults) = match load_any(path)? {
        Loaded::System(p) => (p, None),
        Loaded::Experiment(c, p) => (p, Some(c)),
    };
    let cert = plant.certificate().map_err(|e| config_failure(path, e))?;
    let consts = system_constants(&plant.system, &plant.feedback)?;
    let pick = |o: Option<f64>, f: fn(&ExperimentConfig) -> f64| o.or(defaults.as_deref().map(f));
    let tau_a = pick(ov.tau_a, |c| c.tau_a)
        .ok_or_else(|| config_failure(path, "tau_a is required (flag or experiment config)"))?;
    let r0 = pick(ov.r0, |c| c.r0).unwrap_or(1.0);
    let tau_s = pick(ov.tau_s, |c| c.tau_s);
    let alpha = pick(ov.alpha, |c| c.alpha);
    let n = ov.n.or(defaults.as_deref().map(|c| c.n));
    let dim = plant.system.state_dim();
    let modes = plant.system.mode_count();

    let (cfg, searched) = match (tau_s, n, alpha) {
        (Some(tau_s), Some(n), Some(alpha)) => (
            CoderControllerConfig { tau_s, n, alpha, r0, tau_a, certificate: cert, constants: consts },
            false,
        ),
        (None, None, None) => {
            let targets = SearchTargets::new(dim, modes, base_tick, r0);
            (search_parameters(&consts, &cert, tau_a, &targets)?, true)
        }
        _ => return Err(config_failure(path, "give all of --tau-s, --n, --alpha or none of them")),
    };
    let report = DesignReport::new(cfg, dim, modes).map_err(|e| match e {
        Error::Config(m) => config_failure(path, m),
        other => other.into(),
    })?;
    let doc = json!({ "searched": searched, "report": report });
    println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    eprintln!(
        "rate {:.2} bits/s, condition lhs {:.5} {} rhs {:.5}",
        report.rate,
        report.condition.lhs,
        if report.condition.satisfied { "<" } else { ">=" },
        report.condition.rhs
    );
    if let Some(dir) = out_dir(out)? {
        write_json(&dir.join("design.json"), &doc)?;
    }
    Ok(!check || report.condition.satisfied)
}

fn simulate(path: &Path, seed: u64, x0: Option<Vec<f64>>, out: Option<&Path>) -> Outcome {
    let (_, exp) = load_experiment(path)?;
    let setup = &exp.setup;
    let d = setup.plant.system.state_dim();
    let x0 = match x0 {
        Some(v) if v.len() != d => {
            return Err(Failure { code: 2, message: format!("--x0 needs {d} values") })
        }
        Some(v) => v,
        None => initial_state(seed, d, exp.initial_radius),
    };
    let sig = exp.signal(seed)?;
    let opts = RunOptions { detail: TraceDetail::Full, lenient: true, adt: Some(exp.budget) };
    let trace = run_closed_loop(setup, &sig, &x0, &opts)?;
    let report = verify_trace(&trace, &sig, &setup.cfg)?;

    let last = trace.blocks.last().expect("at least one block");
    println!(
        "blocks {}, switches {}, |x0| {:.4}, final |x| {:.3e}, final r_k {:.3e}",
        trace.blocks.len(),
        sig.events().len(),
        norm2(&x0),
        last.state_norm,
        last.radius
    );
    println!(
        "rate {:.2} bits/s (wire {:.2}), decay of r_k {:.4}, of |x| {:.4}, lambda {:.4}",
        trace.info_rate().unwrap_or(f64::NAN),
        trace.wire_rate().unwrap_or(f64::NAN),
        report.radius_decay.unwrap_or(f64::NAN),
        report.state_decay.unwrap_or(f64::NAN),
        report.lambda.unwrap_or(f64::NAN)
    );
    println!(
        "soundness violations {}, b_k violations {}, product violations {}{}",
        report.soundness_violations.len(),
        report.nmissed_violations.len(),
        report.product_violations.len(),
        report.halted.as_ref().map(|h| format!(", halted: {h}")).unwrap_or_default()
    );

    if let Some(dir) = out_dir(out)? {
        trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
        fs::write(dir.join("trace.svg"), trace_svg(&trace))?;
        write_binary_log(&trace.symbols, BufWriter::new(File::create(dir.join("symbols.bin"))?))?;
        write_jsonl(&trace.symbols, BufWriter::new(File::create(dir.join("symbols.jsonl"))?))?;
        write_segments_jsonl(&trace.segments, BufWriter::new(File::create(dir.join("segments.jsonl"))?))?;
        fs::write(dir.join("signal.json"), sig.to_json())?;
        sig.write_csv(BufWriter::new(File::create(dir.join("signal.csv"))?))?;
        write_json(&dir.join("report.json"), &json!({ "seed": seed, "x0": x0, "verify": report }))?;
    }
    Ok(report.passed())
}

fn averaging(ns: &[u64], horizon: f64, out: Option<&Path>) -> Outcome {
    let inputs = standard_input_set(horizon);
    let rows = averaging_experiment(ns, &inputs, horizon, 1.0)?;
    println!("{:>8}  {:>12}  {:>6}  {:>12}", "n", "sup|int|", "argmax", "min|x(T)|");
    for r in &rows {
        println!("{:>8}  {:>12.4e}  {:>6}  {:>12.6}", r.n, r.sup, r.argmax, r.min_final_state);
    }
    let monotone = rows.windows(2).all(|w| w[1].sup <= w[0].sup);
    if !monotone {
        println!("sup is not non-increasing in n");
    }
    if let Some(dir) = out_dir(out)? {
        write_json(&dir.join("averaging.json"), &json!({ "horizon": horizon, "inputs": inputs, "rows": rows }))?;
    }
    Ok(monotone)
}

fn verify(path: &Path, seed: u64, samples: u64, out: Option<&Path>) -> Outcome {
    let (plant, exp_cfg) = match load_any(path)? {
        Loaded::System(p) => (p, None),
        Loaded::Experiment(c, p) => (p, Some(c)),
    };
    let cert = plant.certificate().map_err(|e| config_failure(path, e))?;
    let mut all_ok = true;

    let cr = verify_certificate_lognorm(&plant.system, &plant.feedback, &cert)?;
    let cert_ok = cr.verdict != CertificateVerdict::Failed;
    all_ok &= cert_ok;
    println!("certificate: {:?}, margins {:?}", cr.verdict, cr.margins);

    let mut summary = json!({ "certificate": { "verdict": format!("{:?}", cr.verdict), "margins": cr.margins } });
    if let Some(cfg) = exp_cfg {
        let d = plant.system.state_dim();
        let q = BallQuantizer::build(d, cfg.alpha).map_err(|e| config_failure(path, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = cfg.alpha / (d as f64).sqrt();
        let mut worst = 0.0f64;
        let mut q_ok = (q.len() as u64) <= q.m_hat();
        for _ in 0..samples {
            let dir = sample_on_sphere(d, 1.0, &mut rng);
            let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
            let xi: Vec<f64> = dir.iter().map(|v| v * r).collect();
            let (_, p) = q.quantize(&xi)?;
            let err = norm2(&xi.iter().zip(p).map(|(a, b)| a - b).collect::<Vec<_>>());
            worst = worst.max(err);
            q_ok &= err <= cfg.alpha;
            let tiny: Vec<f64> = dir.iter().map(|v| v * small).collect();
            q_ok &= q.quantize(&tiny)?.1.iter().all(|&v| v == 0.0);
        }
        all_ok &= q_ok;
        println!(
            "quantizer: m = {}, m_hat = {}, max error {:.4} (alpha {}), {}",
            q.len(),
            q.m_hat(),
            worst,
            cfg.alpha,
            if q_ok { "ok" } else { "FAILED" }
        );

        let grid = TimeGrid::new(cfg.base_tick).map_err(|e| config_failure(path, e))?;
        let horizon = grid.ticks(cfg.horizon).map_err(|e| config_failure(path, e))?;
        let budget = AdtBudget::new(cfg.tau_a, cfg.n0).map_err(|e| config_failure(path, e))?;
        let mut bad = 0;
        for s in 0..samples {
            let sig = generate_adt_signal(&budget, grid, horizon, plant.system.mode_count(), seed.wrapping_add(s))?;
            if !is_adt_admissible(&sig, &budget).admissible {
                bad += 1;
            }
        }
        all_ok &= bad == 0;
        println!("dwell time: {samples} generated signals, {bad} inadmissible");
        summary["quantizer"] = json!({ "m": q.len(), "m_hat": q.m_hat(), "max_error": worst, "ok": q_ok });
        summary["dwell_time"] = json!({ "signals": samples, "inadmissible": bad });
    }
    if let Some(dir) = out_dir(out)? {
        write_json(&dir.join("verify.json"), &summary)?;
    }
    Ok(all_ok)
}

fn replay_cmd(path: &Path, log: &Path, segments: Option<&Path>, out: Option<&Path>) -> Outcome {
    let (_, exp) = load_experiment(path)?;
    let file = BufReader::new(File::open(log)?);
    let symbols = if log.extension().is_some_and(|e| e == "bin") {
        read_binary_log(file)?
    } else {
        read_jsonl(file)?
    };
    let rep = replay(&exp.setup, &symbols)?;
    println!(
        "replayed {} symbols, {} blocks, final r_k {:.6e}",
        symbols.len(),
        rep.radii.len(),
        rep.radii.last().copied().unwrap_or(f64::NAN)
    );
    let mut ok = true;
    if let Some(seg_path) = segments {
        let recorded = read_segments_jsonl(BufReader::new(File::open(seg_path)?))?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let same = recorded.len() == rep.segments.len()
            && recorded.iter().zip(&rep.segments).all(|(a, b)| {
                a.t_start == b.t_start && a.t_end == b.t_end && a.mode == b.mode && bits(&a.xhat0) == bits(&b.xhat0)
            });
        println!("segments {}", if same { "identical" } else { "DIFFER" });
        ok &= same;
    }
    if let Some(dir) = out_dir(out)? {
        write_segments_jsonl(&rep.segments, BufWriter::new(File::create(dir.join("replayed_segments.jsonl"))?))?;
    }
    Ok(ok)
}
