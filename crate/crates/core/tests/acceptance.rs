//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::io::Cursor;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use slsrate_core::coder::{read_binary_log, write_binary_log};
use slsrate_core::design::{check_condition, data_rate, decay_rates, DerivedConstants};
use slsrate_core::fixtures;
use slsrate_core::harness::experiment::{replay, replay_matches, run_batch, ExperimentConfig, SystemSource};
use slsrate_core::harness::averaging::{averaging_experiment, sigma_n_integral, standard_input_set};
use slsrate_core::harness::random_gronwall_case;
use slsrate_core::harness::TraceDetail;
use slsrate_core::quantizer::{m_hat, BallQuantizer};
use slsrate_core::system::{system_constants, verify_certificate_lognorm, CertificateVerdict};
use slsrate_core::CoderControllerConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// Closed-form 2x2 helpers, independent of the library's Jacobi/SVD path.
fn sym_max_eig_2x2(m: [[f64; 2]; 2]) -> f64 {
    let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

fn spectral_norm_2x2(m: [[f64; 2]; 2]) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|v| v * v).sum();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (0.5 * (fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

const A1: [[f64; 2]; 2] = [[0.1, -1.0], [1.5, 0.1]];
const A2: [[f64; 2]; 2] = [[-0.5, 2.0], [-1.5, 0.0]];
const B1: [f64; 2] = [1.0, 1.0];
const B2: [f64; 2] = [0.0, 1.0];
const K1: [f64; 2] = [-0.43, -0.43];
const K2: [f64; 2] = [-0.38, -0.52];

fn closed_loop_2x2(a: [[f64; 2]; 2], b: [f64; 2], k: [f64; 2]) -> [[f64; 2]; 2] {
    let mut m = a;
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] += b[i] * k[j];
        }
    }
    m
}

/// Oracle contraction lhs from hand-computed constants.
fn oracle_lhs(tau_s: f64, n: f64, alpha: f64, tau_a: f64) -> f64 {
    let nu = sym_max_eig_2x2(A1).max(sym_max_eig_2x2(A2));
    let diff = [[A1[0][0] - A2[0][0], A1[0][1] - A2[0][1]], [A1[1][0] - A2[1][0], A1[1][1] - A2[1][1]]];
    let delta1 = spectral_norm_2x2(diff);
    let delta2 = ((B1[0] - B2[0]).powi(2) + (B1[1] - B2[1]).powi(2)).sqrt();
    let l = (K1[0].hypot(K1[1])).max(K2[0].hypot(K2[1]));
    let block = n * tau_s;
    let psi = (-0.15 * block).exp();
    let abar = (nu * block).exp() * alpha;
    let ebar = (nu * block).exp() * tau_s * (delta1 + delta2 * l);
    psi + abar + ebar * block / tau_a
}

fn criterion_1() -> Outcome {
    let m = m_hat(2, 0.05).unwrap();
    let r1 = data_rate(&fixtures::slow_switching_config(), 2, m);
    let r2 = data_rate(&fixtures::fast_switching_config(), 2, m);
    // Hand evaluation of the rate formula.
    let oracle = |tau_s: f64, n: f64| (841f64.log2() / n + (n + 1.0).log2() / n + 1.0) / tau_s;
    let ok = (145.0..=146.0).contains(&r1)
        && r1.round() == 145.0
        && (522.5..=523.5).contains(&r2)
        && r2.round() == 523.0
        && (r1 - oracle(0.008, 100.0)).abs() < 1e-9
        && (r2 - oracle(0.002, 400.0)).abs() < 1e-9;
    outcome(ok, format!("m_hat = {m}, R(0.008, 100) = {r1:.4}, R(0.002, 400) = {r2:.4} bits/s"))
}

fn criterion_2() -> Outcome {
    let c = fixtures::slow_switching_config().constants;
    let nu_ok = (c.nu - 0.35).abs() < 1e-12 && (c.delta2 - 1.0).abs() < 1e-12;
    let diff = [[0.6, -3.0], [3.0, 0.1]];
    let consts_ok = (c.delta1 - spectral_norm_2x2(diff)).abs() < 1e-12
        && (c.gain_bound - K2[0].hypot(K2[1])).abs() < 1e-12;
    let mut parts = vec![];
    let mut ok = nu_ok && consts_ok;
    for (name, cfg) in [("slow", fixtures::slow_switching_config()), ("fast", fixtures::fast_switching_config())] {
        let chk = check_condition(&cfg);
        let oracle = oracle_lhs(cfg.tau_s, cfg.n as f64, cfg.alpha, cfg.tau_a);
        ok &= chk.satisfied && (chk.lhs - oracle).abs() < 1e-12;
        parts.push(format!("{name}: lhs = {:.5} < rhs = {:.1}", chk.lhs, chk.rhs));
    }
    let lhs1 = check_condition(&fixtures::slow_switching_config()).lhs;
    ok &= (0.97..=0.999).contains(&lhs1);
    outcome(
        ok,
        format!(
            "nu = {:.4}, Delta1 = {:.4}, Delta2 = {:.1}, L = {:.4}; {}",
            c.nu,
            c.delta1,
            c.delta2,
            c.gain_bound,
            parts.join("; ")
        ),
    )
}

fn criterion_3() -> Outcome {
    let plant = fixtures::two_mode_plant();
    let rep = verify_certificate_lognorm(&plant.system, &plant.feedback, &plant.certificate.unwrap()).unwrap();
    let oracle = [
        -0.15 - sym_max_eig_2x2(closed_loop_2x2(A1, B1, K1)),
        -0.15 - sym_max_eig_2x2(closed_loop_2x2(A2, B2, K2)),
    ];
    let ok = rep.verdict == CertificateVerdict::Verified
        && rep.margins.iter().zip(oracle).all(|(m, o)| (m - o).abs() < 1e-12 && *m >= -1e-9)
        && rep.margins[0].abs() < 1e-3
        && (rep.margins[1] - 0.30).abs() < 0.01;
    outcome(ok, format!("margins = [{:.2e}, {:.4}]", rep.margins[0], rep.margins[1]))
}

fn criterion_4() -> Outcome {
    const TOTAL: usize = 10_000;
    let combos: Vec<(CoderControllerConfig, f64)> = [fixtures::slow_switching_config(), fixtures::fast_switching_config()]
        .into_iter()
        .flat_map(|cfg| [0.0, 2.0, 5.0].map(|n0| (cfg, n0)))
        .collect();
    let per = TOTAL.div_ceil(combos.len());
    let mut runs = 0;
    let (mut errors, mut sound, mut nmissed, mut product, mut decay, mut inadmissible, mut too_short) =
        (0, 0, 0, 0, 0, 0, 0);
    let mut min_decay = f64::INFINITY;
    let mut lambda = 0.0;
    let mut switched_runs = 0;
    for (ci, (cfg, n0)) in combos.iter().enumerate() {
        let exp = ExperimentConfig {
            system: SystemSource::Inline(fixtures::two_mode_plant().to_document()),
            tau_s: cfg.tau_s,
            n: cfg.n,
            alpha: cfg.alpha,
            r0: cfg.r0,
            tau_a: cfg.tau_a,
            n0: *n0,
            base_tick: 1e-4,
            horizon: 40.0,
            initial_radius: None,
            seeds: per as u64,
        }
        .build(fixtures::two_mode_plant())
        .expect("experiment");
        let seeds: Vec<u64> = (0..per as u64).map(|i| ci as u64 * 1_000_000 + i).collect();
        for s in run_batch(&exp, &seeds) {
            runs += 1;
            if s.error.is_some() {
                errors += 1;
                continue;
            }
            let r = &s.report;
            sound += r.soundness_violations.len();
            nmissed += r.nmissed_violations.len();
            product += r.product_violations.len();
            if r.decay_ok != Some(true) {
                decay += 1;
            }
            if r.adt_admissible != Some(true) {
                inadmissible += 1;
            }
            if s.switches > 0 {
                switched_runs += 1;
            }
            min_decay = min_decay.min(r.radius_decay.unwrap_or(f64::NAN));
            lambda = r.lambda.unwrap_or(f64::NAN);
            if !(r.blocks > 1) {
                too_short += 1;
            }
        }
    }
    // r_k -> 0: the trailing-half fit must be a strict decay.
    let ok = runs >= TOTAL
        && errors == 0
        && sound == 0
        && nmissed == 0
        && product == 0
        && decay == 0
        && inadmissible == 0
        && too_short == 0
        && min_decay > 0.0;
    outcome(
        ok,
        format!(
            "{runs} runs ({switched_runs} with switches), errors {errors}, soundness {sound}, b_k bound {nmissed}, \
             product {product}, inadmissible {inadmissible}, decay below lambda {decay}; \
             min trailing decay {min_decay:.4} vs lambda {lambda:.4}"
        ),
    )
}

/// Brute-force quantizer oracle: recursive enumeration of the grid, radial
/// projection, tolerance deduplication, exhaustive nearest point.
fn oracle_points(d: usize, alpha: f64) -> Vec<Vec<f64>> {
    let beta = 2.0 * alpha / (d as f64).sqrt();
    let h = ((d as f64).sqrt() / (2.0 * alpha)).round_ties_even() as i64;
    fn rec(d: usize, h: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for s in -h..=h {
            prefix.push(s);
            rec(d, h, prefix, out);
            prefix.pop();
        }
    }
    let mut ints = vec![];
    rec(d, h, &mut vec![], &mut ints);
    let mut pts: Vec<Vec<f64>> = vec![];
    for s in ints {
        let mut p: Vec<f64> = s.iter().map(|&v| v as f64 * beta).collect();
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 {
            p.iter_mut().for_each(|v| *v /= n);
        }
        if !pts.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            pts.push(p);
        }
    }
    pts
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ok = true;
    let mut notes = vec![];
    let mut worst = 0.0f64;
    for d in 1..=3usize {
        for alpha in [0.5, 0.1, 0.05] {
            let q = BallQuantizer::build(d, alpha).unwrap();
            let oracle = oracle_points(d, alpha);
            let mh = m_hat(d, alpha).unwrap();
            ok &= q.len() == oracle.len() && q.len() as u64 <= mh;
            ok &= q.points().all(|p| oracle.iter().any(|o| dist(o, p) <= 1e-12));
            ok &= q.points().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-15);
            let small = alpha / (d as f64).sqrt();
            for i in 0..10_000 {
                let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let nd = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = if i % 10 == 0 { 1.0 } else { rng.random::<f64>().powf(1.0 / d as f64) };
                let xi: Vec<f64> = dir.iter().map(|v| v / nd * radius).collect();
                let (_, p) = q.quantize(&xi).unwrap();
                let best = oracle.iter().map(|o| dist(o, &xi)).fold(f64::INFINITY, f64::min);
                let e = dist(p, &xi);
                worst = worst.max(e / alpha);
                ok &= e <= alpha && (e - best).abs() <= 1e-12;
                let tiny: Vec<f64> = xi.iter().map(|v| v * small).collect();
                ok &= q.quantize(&tiny).unwrap().1.iter().all(|&v| v == 0.0);
            }
            if d == 2 && alpha == 0.05 {
                ok &= mh == 841;
                notes.push(format!("d=2 alpha=0.05: m = {}, m_hat = {mh}", q.len()));
            }
        }
    }
    notes.push(format!("max |xi - Q(xi)| / alpha = {worst:.4}"));
    outcome(ok, format!("9 configurations x 10^4 points; {}", notes.join("; ")))
}

fn criterion_6() -> Outcome {
    let inputs = standard_input_set(2.0);
    let rows = averaging_experiment(&[1, 10, 100, 1000], &inputs, 2.0, 1.0).unwrap();
    let monotone = rows.windows(2).all(|w| w[1].sup <= w[0].sup);
    let last = rows.last().unwrap();
    // Midpoint-rule cross-check of the exact integrals at n = 10.
    let cells = 400_000;
    let h = 2.0 / cells as f64;
    let quad_ok = inputs.iter().all(|u| {
        let q: f64 = (0..cells)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                let sign = if ((t * 10.0).floor() as u64) % 2 == 0 { -1.0 } else { 1.0 };
                sign * u.eval(t) * h
            })
            .sum();
        (q - sigma_n_integral(u, 10, 2.0).unwrap()).abs() < 1e-4
    });
    let ok = inputs.len() >= 8 && monotone && last.sup < 1e-2 && last.min_final_state >= 1.0 - 1e-2 && quad_ok;
    let table: Vec<String> = rows.iter().map(|r| format!("n={}: {:.3e}", r.n, r.sup)).collect();
    outcome(
        ok,
        format!(
            "{} inputs; sup |int| {}; min |x(T)| at n=1000 = {:.5}",
            inputs.len(),
            table.join(", "),
            last.min_final_state
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let case = random_gronwall_case(7_000 + seed, 1 + (seed % 3) as usize, 2.0).unwrap();
        let r = case.check(2000).unwrap();
        if !r.holds {
            violations += 1;
        }
        worst = worst.max(r.worst_ratio);
    }
    outcome(violations == 0, format!("100 pairs, {violations} violations, max lhs/rhs = {worst:.4}"))
}

fn criterion_8() -> Outcome {
    let mut mismatches = 0;
    let mut symbols = 0;
    for seed in 0..100u64 {
        let cfg = if seed % 2 == 0 { fixtures::slow_switching_config() } else { fixtures::fast_switching_config() };
        let exp = ExperimentConfig {
            system: SystemSource::Inline(fixtures::two_mode_plant().to_document()),
            tau_s: cfg.tau_s,
            n: cfg.n,
            alpha: cfg.alpha,
            r0: cfg.r0,
            tau_a: cfg.tau_a,
            n0: 2.0 + (seed % 4) as f64,
            base_tick: 1e-4,
            horizon: 16.0,
            initial_radius: None,
            seeds: 1,
        }
        .build(fixtures::two_mode_plant())
        .unwrap();
        let run = exp.run_seed(80_000 + seed, TraceDetail::Full).unwrap();
        let mut log = Vec::new();
        write_binary_log(&run.trace.symbols, &mut log).unwrap();
        let decoded = read_binary_log(Cursor::new(log)).unwrap();
        symbols += decoded.len();
        let rep = replay(&exp.setup, &decoded).unwrap();
        if decoded != run.trace.symbols || !replay_matches(&run.trace, &rep) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 runs, {symbols} symbols replayed from binary logs, {mismatches} mismatches"))
}

fn main() {
    let dc = DerivedConstants::new(&fixtures::slow_switching_config());
    let mu = decay_rates(&fixtures::slow_switching_config()).unwrap().mu;
    let consts = {
        let p = fixtures::two_mode_plant();
        system_constants(&p.system, &p.feedback).unwrap()
    };
    println!(
        "derived: beta(0) = {:.4}, eps_bar = {:.5}, mu = {:.5}, Delta1 = {:.4}",
        dc.beta(0).unwrap(),
        dc.eps_bar,
        mu,
        consts.delta1
    );

    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 data rate", criterion_1),
        ("2 contraction condition", criterion_2),
        ("3 certificate", criterion_3),
        ("4 closed-loop soundness suite", criterion_4),
        ("5 quantizer suite", criterion_5),
        ("6 averaging experiment", criterion_6),
        ("7 perturbation bound suite", criterion_7),
        ("8 replica consistency", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{tag}] criterion {name}: {} ({:.2?})", o.detail, start.elapsed());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
