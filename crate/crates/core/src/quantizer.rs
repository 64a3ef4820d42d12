//! Finite quantizer of the closed unit ball.
//!
//! The point set is the grid `(beta S)^d`, `S = {-h, .., h}`, `beta = 2 alpha / sqrt(d)`,
//! `h = round(1 / beta)`, with every grid point outside the ball pulled radially
//! onto the sphere. Encoding is the nearest point, so `|xi - Q(xi)| <= alpha`
//! on the ball and `Q(xi) = 0` for `|xi| <= alpha / sqrt(d)`.
//!
//! Index order: the origin is index 0, then the remaining grid points in
//! lexicographic order of their integer coordinates. Points that project onto
//! the same sphere point keep the first index.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refuse point sets larger than this.
pub const MAX_POINTS: u64 = 1 << 40;

/// Round to nearest, ties to even.
pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

fn half_width(dim: usize, alpha: f64) -> u64 {
    round_half_even((dim as f64).sqrt() / (2.0 * alpha)) as u64
}

/// `(2 round(sqrt(d) / (2 alpha)) + 1)^d`, the bound on the alphabet size.
pub fn m_hat(dim: usize, alpha: f64) -> Result<u64> {
    check_params(dim, alpha)?;
    let side = 2 * half_width(dim, alpha) + 1;
    let mut total: u64 = 1;
    for _ in 0..dim {
        total = total
            .checked_mul(side)
            .filter(|&t| t <= MAX_POINTS)
            .ok_or_else(|| {
                Error::Config(format!(
                    "quantizer with d = {dim}, alpha = {alpha} needs more than 2^40 points"
                ))
            })?;
    }
    Ok(total)
}

/// `log2` of [`m_hat`] without the overflow guard, for rate arithmetic.
pub fn log2_m_hat(dim: usize, alpha: f64) -> f64 {
    dim as f64 * ((2 * half_width(dim, alpha) + 1) as f64).log2()
}

fn check_params(dim: usize, alpha: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("quantizer dimension must be >= 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha = {alpha} must be > 0")));
    }
    Ok(())
}

/// Serialized form; the point set is always rebuilt from `(d, alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub d: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallQuantizer {
    dim: usize,
    alpha: f64,
    pitch: f64,
    half_width: u64,
    m_hat: u64,
    points: Vec<f64>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

impl BallQuantizer {
    pub fn build(dim: usize, alpha: f64) -> Result<Self> {
        let m_hat = m_hat(dim, alpha)?;
        let pitch = 2.0 * alpha / (dim as f64).sqrt();
        let h = half_width(dim, alpha);
        let side = 2 * h + 1;
        let h_i = h as i64;

        let mut points = vec![0.0; dim];
        let mut rays: HashSet<Vec<i64>> = HashSet::new();
        let mut coords = vec![-h_i; dim];
        for _ in 0..m_hat {
            let sq: i64 = coords.iter().map(|c| c * c).sum();
            if sq != 0 {
                let norm = pitch * (sq as f64).sqrt();
                if norm < 1.0 - 1e-12 {
                    points.extend(coords.iter().map(|&c| c as f64 * pitch));
                } else {
                    // On or outside the sphere: points on one ray share a projection.
                    let g = coords.iter().fold(0u64, |g, &c| gcd(g, c.unsigned_abs()));
                    let dir: Vec<i64> = coords.iter().map(|&c| c / g as i64).collect();
                    let len = (dir.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
                    if rays.insert(dir.clone()) {
                        points.extend(dir.iter().map(|&c| c as f64 / len));
                    }
                }
            }
            // Odometer increment, last coordinate fastest.
            for c in coords.iter_mut().rev() {
                if *c < h_i {
                    *c += 1;
                    break;
                }
                *c = -h_i;
            }
        }
        debug_assert!(side.pow(dim as u32) == m_hat);
        Ok(Self {
            dim,
            alpha,
            pitch,
            half_width: h,
            m_hat,
            points,
        })
    }

    pub fn from_spec(spec: QuantizerSpec) -> Result<Self> {
        Self::build(spec.d, spec.alpha)
    }

    pub fn spec(&self) -> QuantizerSpec {
        QuantizerSpec {
            d: self.dim,
            alpha: self.alpha,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Grid spacing `2 alpha / sqrt(d)`.
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn half_width(&self) -> u64 {
        self.half_width
    }

    /// Number of distinct points `m`.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn m_hat(&self) -> u64 {
        self.m_hat
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    pub fn point(&self, index: usize) -> Result<&[f64]> {
        if index >= self.len() {
            return Err(Error::Protocol(format!(
                "quantizer index {index} out of range (m = {})",
                self.len()
            )));
        }
        Ok(&self.points[index * self.dim..(index + 1) * self.dim])
    }

    /// Nearest point; ties go to the smallest index.
    pub fn quantize(&self, xi: &[f64]) -> Result<(usize, &[f64])> {
        if xi.len() != self.dim {
            return Err(Error::invalid(format!(
                "quantize: expected a {}-vector, got {}",
                self.dim,
                xi.len()
            )));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("quantize: non-finite input"));
        }
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in self.points().enumerate() {
            let dist: f64 = p.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.1 {
                best = (i, dist);
            }
        }
        Ok((best.0, self.point(best.0)?))
    }

    /// Bits per index on the wire, `ceil(log2 m)`.
    pub fn index_width(&self) -> u32 {
        bits_for(self.len() as u64)
    }

    pub fn encode_index(&self, index: usize) -> Result<BitCode> {
        self.point(index)?;
        Ok(BitCode {
            value: index as u64,
            width: self.index_width(),
        })
    }

    pub fn decode_index(&self, code: BitCode) -> Result<usize> {
        if code.width != self.index_width() {
            return Err(Error::Protocol(format!(
                "code width {} does not match quantizer width {}",
                code.width,
                self.index_width()
            )));
        }
        let index = code.value as usize;
        self.point(index)?;
        Ok(index)
    }
}

/// `ceil(log2 m)`; zero for `m <= 1`.
pub fn bits_for(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

/// A fixed-width unsigned code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitCode {
    pub value: u64,
    pub width: u32,
}

impl fmt::Display for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == 0 {
            return Ok(());
        }
        write!(f, "{:0w$b}", self.value, w = self.width as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_coarse() {
        let q = BallQuantizer::build(1, 0.5).unwrap();
        assert_eq!(q.pitch(), 1.0);
        assert_eq!(q.len(), 3);
        assert_eq!(q.m_hat(), 3);
        let mut pts: Vec<f64> = q.points().map(|p| p[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![-1.0, 0.0, 1.0]);
        assert_eq!(q.quantize(&[0.4]).unwrap().1, &[0.0]);
        assert_eq!(q.quantize(&[0.6]).unwrap().1, &[1.0]);
        // Boundary of the dead zone still maps to the origin.
        assert_eq!(q.quantize(&[-0.5]).unwrap().1, &[0.0]);
        assert_eq!(q.quantize(&[0.5]).unwrap().1, &[0.0]);
    }

    #[test]
    fn m_hat_two_dimensional() {
        assert_eq!(m_hat(2, 0.05).unwrap(), 841);
        let q = BallQuantizer::build(2, 0.05).unwrap();
        assert_eq!(q.half_width(), 14);
        assert!(q.len() as u64 <= 841);
        assert_eq!(q.index_width(), 10);
        assert!((log2_m_hat(2, 0.05) - 841f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_point() {
        for (d, alpha) in [(1, 1.0), (2, 2f64.sqrt()), (3, 5.0)] {
            let q = BallQuantizer::build(d, alpha).unwrap();
            assert_eq!(q.len(), 1);
            assert!(q.points().next().unwrap().iter().all(|&v| v == 0.0));
            assert_eq!(q.index_width(), 0);
        }
    }

    #[test]
    fn ties_round_to_even() {
        assert_eq!(round_half_even(0.5), 0.0);
        assert_eq!(round_half_even(1.5), 2.0);
        assert_eq!(round_half_even(2.5), 2.0);
        // sqrt(1) / (2 * 0.2) = 2.5 -> 2
        assert_eq!(m_hat(1, 0.2).unwrap(), 5);
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(m_hat(8, 1e-3), Err(Error::Config(_))));
        assert!(BallQuantizer::build(8, 1e-3).is_err());
        assert!(BallQuantizer::build(0, 0.1).is_err());
        assert!(BallQuantizer::build(2, 0.0).is_err());
    }

    #[test]
    fn points_in_ball_and_distinct() {
        for (d, alpha) in [(1, 0.1), (2, 0.3), (2, 0.05), (3, 0.1)] {
            let q = BallQuantizer::build(d, alpha).unwrap();
            let pts: Vec<&[f64]> = q.points().collect();
            assert!(pts[0].iter().all(|&v| v == 0.0));
            for p in &pts {
                assert!(p.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-15);
            }
            if pts.len() < 2000 {
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        let dist: f64 =
                            pts[i].iter().zip(pts[j]).map(|(a, b)| (a - b).powi(2)).sum();
                        assert!(dist.sqrt() > 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn quantize_errors() {
        let q = BallQuantizer::build(2, 0.1).unwrap();
        assert!(q.quantize(&[f64::NAN, 0.0]).is_err());
        assert!(q.quantize(&[0.0]).is_err());
        assert_eq!(q.quantize(&[0.0, 0.0]).unwrap().0, 0);
        // Inputs outside the ball are allowed; the outermost point on the axis wins.
        let (_, p) = q.quantize(&[10.0, 0.0]).unwrap();
        assert!(p[1].abs() < 1e-15 && p[0] >= 0.98 && p[0] <= 1.0);
    }

    #[test]
    fn index_codes() {
        let q = BallQuantizer::build(1, 0.5).unwrap();
        let codes: Vec<String> =
            (0..3).map(|i| q.encode_index(i).unwrap().to_string()).collect();
        assert_eq!(codes, ["00", "01", "10"]);
        assert!(matches!(q.encode_index(3), Err(Error::Protocol(_))));
        assert!(q.decode_index(BitCode { value: 3, width: 2 }).is_err());
        assert!(q.decode_index(BitCode { value: 1, width: 3 }).is_err());

        for (d, alpha) in [(2, 0.05), (1, 0.01), (2, 0.2)] {
            let q = BallQuantizer::build(d, alpha).unwrap();
            assert!(q.len() <= 1024);
            for i in 0..q.len() {
                assert_eq!(q.decode_index(q.encode_index(i).unwrap()).unwrap(), i);
            }
        }
        assert_eq!(bits_for(841), 10);
        assert_eq!(bits_for(1024), 10);
        assert_eq!(bits_for(1025), 11);
    }
}
