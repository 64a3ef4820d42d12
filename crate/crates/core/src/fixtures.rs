//! The two-mode reference plant and its two coder-controller configurations
//! (slow switching `tau_a = 1`, fast switching `tau_a = 0.25`).

use crate::design::CoderControllerConfig;
use crate::linalg::Matrix;
use crate::system::{
    system_constants, FeedbackLaw, Mode, PlantSpec, StabilizabilityCertificate,
    SwitchedLinearSystem,
};

fn mat(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixture matrix")
}

pub fn two_mode_plant() -> PlantSpec {
    let system = SwitchedLinearSystem::new(vec![
        Mode {
            a: mat(&[&[0.1, -1.0], &[1.5, 0.1]]),
            b: mat(&[&[1.0], &[1.0]]),
        },
        Mode {
            a: mat(&[&[-0.5, 2.0], &[-1.5, 0.0]]),
            b: mat(&[&[0.0], &[1.0]]),
        },
    ])
    .expect("fixture system");
    let feedback =
        FeedbackLaw::new(vec![mat(&[&[-0.43, -0.43]]), mat(&[&[-0.38, -0.52]])]).expect("gains");
    let cert = StabilizabilityCertificate::new(1.0, 0.0, 0.15).expect("certificate");
    PlantSpec::new(system, feedback, Some(cert)).expect("fixture plant")
}

fn config(tau_s: f64, n: u64, tau_a: f64) -> CoderControllerConfig {
    let plant = two_mode_plant();
    CoderControllerConfig {
        tau_s,
        n,
        alpha: 0.05,
        r0: 1.0,
        tau_a,
        certificate: plant.certificate.expect("certificate"),
        constants: system_constants(&plant.system, &plant.feedback).expect("constants"),
    }
}

/// `tau_a = 1`: `tau_s = 0.008`, `n = 100`, `alpha = 0.05`.
pub fn slow_switching_config() -> CoderControllerConfig {
    config(0.008, 100, 1.0)
}

/// `tau_a = 0.25`: `tau_s = 0.002`, `n = 400`, `alpha = 0.05`.
pub fn fast_switching_config() -> CoderControllerConfig {
    config(0.002, 400, 0.25)
}
