//! Switched linear systems `x' = A_i x + B_i u` with one linear feedback gain
//! per mode, the constants the coder-controller design needs, and exact
//! propagation of a plant/model pair over a constant-mode segment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// One mode `(A_i, B_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedLinearSystem {
    state_dim: usize,
    input_dim: usize,
    modes: Vec<Mode>,
}

impl SwitchedLinearSystem {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::invalid("a switched system needs at least one mode"))?;
        let d = first.a.rows();
        let c = first.b.cols();
        for (i, m) in modes.iter().enumerate() {
            if m.a.shape() != (d, d) {
                return Err(Error::invalid(format!(
                    "mode {i}: A is {:?}, expected ({d}, {d})",
                    m.a.shape()
                )));
            }
            if m.b.shape() != (d, c) {
                return Err(Error::invalid(format!(
                    "mode {i}: B is {:?}, expected ({d}, {c})",
                    m.b.shape()
                )));
            }
            if !m.a.is_finite() || !m.b.is_finite() {
                return Err(Error::invalid(format!("mode {i}: non-finite entries")));
            }
        }
        Ok(Self {
            state_dim: d,
            input_dim: c,
            modes,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }
}

/// A positively homogeneous state feedback `phi(xi, i)`.
///
/// Only [`FeedbackLaw`] (linear gains) is implemented; the simulator relies on
/// the closed loop being linear per mode.
pub trait HomogeneousFeedback {
    fn input(&self, xi: &[f64], mode: usize) -> Vec<f64>;
}

/// Linear per-mode feedback `phi(xi, i) = K_i xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackLaw {
    gains: Vec<Matrix>,
}

impl FeedbackLaw {
    pub fn new(gains: Vec<Matrix>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::invalid("feedback law needs at least one gain"));
        }
        if gains.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("feedback gain has non-finite entries"));
        }
        Ok(Self { gains })
    }

    /// Checks that gain `i` is `c x d` for every mode of `sys`.
    pub fn check_compatible(&self, sys: &SwitchedLinearSystem) -> Result<()> {
        if self.gains.len() != sys.mode_count() {
            return Err(Error::invalid(format!(
                "{} gains for {} modes",
                self.gains.len(),
                sys.mode_count()
            )));
        }
        let want = (sys.input_dim(), sys.state_dim());
        for (i, k) in self.gains.iter().enumerate() {
            if k.shape() != want {
                return Err(Error::invalid(format!(
                    "gain {i} is {:?}, expected {want:?}",
                    k.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn gains(&self) -> &[Matrix] {
        &self.gains
    }

    pub fn gain(&self, i: usize) -> &Matrix {
        &self.gains[i]
    }
}

impl HomogeneousFeedback for FeedbackLaw {
    fn input(&self, xi: &[f64], mode: usize) -> Vec<f64> {
        self.gains[mode].mul_vec(xi)
    }
}

/// Constants `(D, mu1, mu2)` of the closed-loop bound
/// `|x(t)| <= D |x(0)| exp(mu1 N(t,0) - mu2 t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizabilityCertificate {
    #[serde(rename = "D")]
    pub overshoot: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl StabilizabilityCertificate {
    pub fn new(overshoot: f64, mu1: f64, mu2: f64) -> Result<Self> {
        let cert = Self { overshoot, mu1, mu2 };
        cert.validate()?;
        Ok(cert)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overshoot.is_finite() && self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(Error::invalid("certificate has non-finite entries"));
        }
        // At t = 0 the bound reads |x0| <= D |x0|.
        if self.overshoot < 1.0 {
            return Err(Error::invalid(format!("D = {} < 1", self.overshoot)));
        }
        if self.mu1 < 0.0 {
            return Err(Error::invalid(format!("mu1 = {} < 0", self.mu1)));
        }
        if self.mu2 <= 0.0 {
            return Err(Error::invalid(format!("mu2 = {} <= 0", self.mu2)));
        }
        Ok(())
    }

    /// `mu1 / tau_a < mu2`.
    pub fn admits_dwell_time(&self, tau_a: f64) -> bool {
        self.mu1 / tau_a < self.mu2
    }
}

/// `nu`, `Delta1`, `Delta2` and `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConstants {
    pub nu: f64,
    pub delta1: f64,
    pub delta2: f64,
    #[serde(rename = "L")]
    pub gain_bound: f64,
}

/// Logarithmic norm `lambda_max(M + M^T) / 2`.
pub fn log_norm(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "log_norm needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if !m.is_finite() {
        return Err(Error::invalid("log_norm: non-finite entries"));
    }
    let sym = m.add(&m.transpose());
    let eig = linalg::symmetric_eigenvalues(&sym)?;
    Ok(0.5 * eig[eig.len() - 1])
}

fn max_pairwise_norm(ms: &[&Matrix]) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, a) in ms.iter().enumerate() {
        for b in &ms[i + 1..] {
            best = best.max(linalg::spectral_norm(&a.sub(b))?);
        }
    }
    Ok(best)
}

pub fn system_constants(sys: &SwitchedLinearSystem, fb: &FeedbackLaw) -> Result<SystemConstants> {
    fb.check_compatible(sys)?;
    let mut nu = f64::NEG_INFINITY;
    for m in sys.modes() {
        nu = nu.max(log_norm(&m.a)?);
    }
    let a: Vec<&Matrix> = sys.modes().iter().map(|m| &m.a).collect();
    let b: Vec<&Matrix> = sys.modes().iter().map(|m| &m.b).collect();
    let mut gain_bound = 0.0f64;
    for k in fb.gains() {
        gain_bound = gain_bound.max(linalg::spectral_norm(k)?);
    }
    Ok(SystemConstants {
        nu,
        delta1: max_pairwise_norm(&a)?,
        delta2: max_pairwise_norm(&b)?,
        gain_bound,
    })
}

/// `A_i + B_i K_i`.
pub fn closed_loop_matrix(mode: &Mode, gain: &Matrix) -> Matrix {
    mode.a.add(&mode.b.matmul(gain))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateVerdict {
    Verified,
    Failed,
    /// The log-norm test only covers `D = 1, mu1 = 0`.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub verdict: CertificateVerdict,
    /// Per mode, `-mu2 - log_norm(A_i + B_i K_i)`; nonnegative means the mode passes.
    pub margins: Vec<f64>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.verdict == CertificateVerdict::Verified
    }
}

const CERT_TOL: f64 = 1e-9;

/// Sufficient check for the certificate when `D = 1` and `mu1 = 0`: every
/// closed-loop matrix has log-norm at most `-mu2`, so `|x|` decays at rate
/// `mu2` whatever the switching.
pub fn verify_certificate_lognorm(
    sys: &SwitchedLinearSystem,
    fb: &FeedbackLaw,
    cert: &StabilizabilityCertificate,
) -> Result<CertificateReport> {
    fb.check_compatible(sys)?;
    let mut margins = Vec::with_capacity(sys.mode_count());
    for (mode, k) in sys.modes().iter().zip(fb.gains()) {
        margins.push(-cert.mu2 - log_norm(&closed_loop_matrix(mode, k))?);
    }
    let verdict = if cert.overshoot != 1.0 || cert.mu1 != 0.0 {
        CertificateVerdict::Inconclusive
    } else if margins.iter().all(|&m| m >= -CERT_TOL) {
        CertificateVerdict::Verified
    } else {
        CertificateVerdict::Failed
    };
    Ok(CertificateReport { verdict, margins })
}

/// Generator of the joint plant/model flow `z = (x, xhat)`:
/// `[[A_true, B_true K], [0, A_model + B_model K]]`.
pub fn augmented_generator(true_mode: &Mode, model: &Mode, gain: &Matrix) -> Matrix {
    let d = true_mode.a.rows();
    let mut g = Matrix::zeros(2 * d, 2 * d);
    g.set_block(0, 0, &true_mode.a);
    g.set_block(0, d, &true_mode.b.matmul(gain));
    g.set_block(d, d, &closed_loop_matrix(model, gain));
    g
}

/// Exact joint solution after `dt` of the plant driven by `u = K xhat` and the
/// model `xhat' = (A_model + B_model K) xhat`.
pub fn propagate_segment(
    true_mode: &Mode,
    model: &Mode,
    gain: &Matrix,
    x0: &[f64],
    xhat0: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt = {dt} must be finite and >= 0")));
    }
    let d = true_mode.a.rows();
    if x0.len() != d || xhat0.len() != d || model.a.rows() != d {
        return Err(Error::invalid("propagate_segment: dimension mismatch"));
    }
    if gain.shape() != (true_mode.b.cols(), d) || model.b.shape() != true_mode.b.shape() {
        return Err(Error::invalid("propagate_segment: gain/input dimension mismatch"));
    }
    let phi = linalg::expm(&augmented_generator(true_mode, model, gain).scale(dt))?;
    let z0: Vec<f64> = x0.iter().chain(xhat0).copied().collect();
    let z1 = phi.mul_vec(&z0);
    Ok((z1[..d].to_vec(), z1[d..].to_vec()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModeDocument {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Matrix,
    #[serde(rename = "K")]
    k: Matrix,
}

/// JSON form: `{"modes":[{"A":..,"B":..,"K":..}], "certificate":{"D":..,"mu1":..,"mu2":..}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDocument {
    modes: Vec<ModeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<StabilizabilityCertificate>,
}

/// A validated system, its gains, and (optionally) a certificate.
#[derive(Clone, Debug)]
pub struct PlantSpec {
    pub system: SwitchedLinearSystem,
    pub feedback: FeedbackLaw,
    pub certificate: Option<StabilizabilityCertificate>,
}

impl PlantSpec {
    pub fn new(
        system: SwitchedLinearSystem,
        feedback: FeedbackLaw,
        certificate: Option<StabilizabilityCertificate>,
    ) -> Result<Self> {
        feedback.check_compatible(&system)?;
        if let Some(c) = &certificate {
            c.validate()?;
        }
        Ok(Self {
            system,
            feedback,
            certificate,
        })
    }

    pub fn certificate(&self) -> Result<StabilizabilityCertificate> {
        self.certificate
            .ok_or_else(|| Error::Config("system document has no certificate".into()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            modes: self
                .system
                .modes()
                .iter()
                .zip(self.feedback.gains())
                .map(|(m, k)| ModeDocument {
                    a: m.a.clone(),
                    b: m.b.clone(),
                    k: k.clone(),
                })
                .collect(),
            certificate: self.certificate,
        }
    }
}

impl TryFrom<SystemDocument> for PlantSpec {
    type Error = Error;

    fn try_from(doc: SystemDocument) -> Result<Self> {
        let (modes, gains) = doc
            .modes
            .into_iter()
            .map(|m| (Mode { a: m.a, b: m.b }, m.k))
            .unzip();
        let system = SwitchedLinearSystem::new(modes).map_err(|e| Error::Config(e.to_string()))?;
        let feedback = FeedbackLaw::new(gains).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(system, feedback, doc.certificate).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn two_mode() -> PlantSpec {
        crate::fixtures::two_mode_plant()
    }

    #[test]
    fn log_norm_examples() {
        assert!((log_norm(&Matrix::identity(3).scale(-1.0)).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(log_norm(&m(&[&[0.0, -1.0], &[1.0, 0.0]])).unwrap(), 0.0);
        let a1 = m(&[&[0.1, -1.0], &[1.5, 0.1]]);
        assert!((log_norm(&a1).unwrap() - 0.35).abs() < 1e-14);
    }

    #[test]
    fn log_norm_rejects_bad_input() {
        assert!(log_norm(&Matrix::zeros(2, 3)).is_err());
        assert!(log_norm(&m(&[&[f64::NAN]])).is_err());
    }

    #[test]
    fn constants_single_mode_have_no_mismatch() {
        let sys = SwitchedLinearSystem::new(vec![Mode {
            a: m(&[&[0.3, 1.0], &[0.0, -2.0]]),
            b: m(&[&[0.0], &[1.0]]),
        }])
        .unwrap();
        let fb = FeedbackLaw::new(vec![m(&[&[1.0, 2.0]])]).unwrap();
        let c = system_constants(&sys, &fb).unwrap();
        assert_eq!((c.delta1, c.delta2), (0.0, 0.0));
    }

    #[test]
    fn constants_two_mode_example() {
        let p = two_mode();
        let c = system_constants(&p.system, &p.feedback).unwrap();
        assert!((c.nu - 0.35).abs() < 1e-14);
        assert!((c.delta2 - 1.0).abs() < 1e-14);
        // max(|K1|, |K2|) = sqrt(0.38^2 + 0.52^2)
        assert!((c.gain_bound - (0.38f64.powi(2) + 0.52f64.powi(2)).sqrt()).abs() < 1e-14);
        assert!((c.gain_bound - 0.64405).abs() < 1e-5);
        assert!((c.delta1 - 3.2704).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = two_mode();
        let fb = FeedbackLaw::new(vec![m(&[&[1.0, 2.0, 3.0]]); 2]).unwrap();
        assert!(system_constants(&p.system, &fb).is_err());
        assert!(SwitchedLinearSystem::new(vec![
            Mode { a: Matrix::identity(2), b: Matrix::zeros(2, 1) },
            Mode { a: Matrix::identity(3), b: Matrix::zeros(3, 1) },
        ])
        .is_err());
    }

    #[test]
    fn certificate_two_mode_margins() {
        let p = two_mode();
        let r = verify_certificate_lognorm(&p.system, &p.feedback, &p.certificate().unwrap())
            .unwrap();
        assert!(r.passed());
        assert!(r.margins[0].abs() < 1e-12);
        assert!((r.margins[1] - 0.2992).abs() < 1e-3);
    }

    #[test]
    fn certificate_unstable_mode_fails() {
        let sys = SwitchedLinearSystem::new(vec![Mode {
            a: m(&[&[1.0]]),
            b: m(&[&[0.0]]),
        }])
        .unwrap();
        let fb = FeedbackLaw::new(vec![m(&[&[0.0]])]).unwrap();
        for mu2 in [1e-6, 0.5, 3.0] {
            let cert = StabilizabilityCertificate::new(1.0, 0.0, mu2).unwrap();
            let r = verify_certificate_lognorm(&sys, &fb, &cert).unwrap();
            assert_eq!(r.verdict, CertificateVerdict::Failed);
        }
    }

    #[test]
    fn certificate_inconclusive_outside_d1_mu0() {
        let p = two_mode();
        let cert = StabilizabilityCertificate::new(2.0, 0.0, 0.15).unwrap();
        let r = verify_certificate_lognorm(&p.system, &p.feedback, &cert).unwrap();
        assert_eq!(r.verdict, CertificateVerdict::Inconclusive);
    }

    #[test]
    fn certificate_validation() {
        assert!(StabilizabilityCertificate::new(0.5, 0.0, 1.0).is_err());
        assert!(StabilizabilityCertificate::new(1.0, -0.1, 1.0).is_err());
        assert!(StabilizabilityCertificate::new(1.0, 0.0, 0.0).is_err());
        let c = StabilizabilityCertificate::new(1.0, 0.2, 0.15).unwrap();
        assert!(c.admits_dwell_time(2.0));
        assert!(!c.admits_dwell_time(1.0));
    }

    #[test]
    fn feedback_is_homogeneous() {
        let p = two_mode();
        for mode in 0..2 {
            assert_eq!(p.feedback.input(&[0.0, 0.0], mode), vec![0.0]);
            let xi = [0.3, -1.7];
            let base = p.feedback.input(&xi, mode);
            for s in [0.0, 0.5, 2.0, 13.0] {
                let scaled = p.feedback.input(&[s * xi[0], s * xi[1]], mode);
                assert!((scaled[0] - s * base[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn propagate_trivial_cases() {
        let p = two_mode();
        let (a, b) = (p.system.mode(0), p.system.mode(1));
        let k = p.feedback.gain(1);
        let (x, xh) = propagate_segment(a, b, k, &[1.0, 2.0], &[3.0, 4.0], 0.0).unwrap();
        assert_eq!((x, xh), (vec![1.0, 2.0], vec![3.0, 4.0]));

        let zero = Mode { a: Matrix::zeros(2, 2), b: Matrix::zeros(2, 1) };
        let (x, xh) =
            propagate_segment(&zero, &zero, &Matrix::zeros(1, 2), &[1.0, 2.0], &[3.0, 4.0], 5.0)
                .unwrap();
        assert_eq!((x, xh), (vec![1.0, 2.0], vec![3.0, 4.0]));

        assert!(propagate_segment(a, b, k, &[1.0, 2.0], &[3.0, 4.0], -1.0).is_err());
    }

    #[test]
    fn propagate_scalar_closed_form() {
        let mode = Mode { a: m(&[&[0.0]]), b: m(&[&[1.0]]) };
        let k = m(&[&[-1.0]]);
        let (x, xh) = propagate_segment(&mode, &mode, &k, &[1.0], &[1.0], 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((x[0] - e).abs() < 1e-15 && (xh[0] - e).abs() < 1e-15);

        // Fixed-step RK4 on the augmented system as an independent oracle.
        let (mut x, mut xh) = (1.0f64, 1.0f64);
        let h = 1e-4;
        for _ in 0..10_000 {
            let f = |_x: f64, xh: f64| (-xh, -xh);
            let (k1x, k1h) = f(x, xh);
            let (k2x, k2h) = f(x + 0.5 * h * k1x, xh + 0.5 * h * k1h);
            let (k3x, k3h) = f(x + 0.5 * h * k2x, xh + 0.5 * h * k2h);
            let (k4x, k4h) = f(x + h * k3x, xh + h * k3h);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            xh += h / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h);
        }
        assert!((x - e).abs() < 1e-12 && (xh - e).abs() < 1e-12);
    }

    #[test]
    fn document_round_trip() {
        let p = two_mode();
        let text = serde_json::to_string(&p.to_document()).unwrap();
        let q = PlantSpec::from_json(&text).unwrap();
        assert_eq!(q.system, p.system);
        assert_eq!(q.feedback, p.feedback);
        assert_eq!(q.certificate, p.certificate);
    }

    #[test]
    fn document_errors_are_config_errors() {
        let bad = r#"{"modes":[{"A":[[1,0],[0,1]],"B":[[1],[0]],"K":[[1,0,0]]}]}"#;
        assert!(matches!(PlantSpec::from_json(bad), Err(Error::Config(_))));
        assert!(matches!(PlantSpec::from_json("{"), Err(Error::Parse(_))));
    }
}
