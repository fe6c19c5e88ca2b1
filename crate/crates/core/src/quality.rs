//! Capture quality gate.
//!
//! Scores a probe by its cross-correlation with the training mean image,
//! normalized by both energies. The correlation is taken on raw intensities
//! with no mean subtraction, so for nonnegative images it lies in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::ImageSample;

pub fn ncc(f: &ImageSample, g: &ImageSample) -> Result<f64> {
    f.check_shape(g.width(), g.height())?;
    let (mut fg, mut ff, mut gg) = (0.0, 0.0, 0.0);
    for (a, b) in f.pixels().iter().zip(g.pixels()) {
        fg += a * b;
        ff += a * a;
        gg += b * b;
    }
    if ff == 0.0 || gg == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(fg / (ff.sqrt() * gg.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityPolicy {
    min_ncc: f64,
    reference: ImageSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub ncc: f64,
    pub passed: bool,
}

impl QualityPolicy {
    pub fn new(min_ncc: f64, reference: ImageSample) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_ncc) {
            return Err(Error::InvalidPolicy(format!("min_ncc {min_ncc} outside [0, 1]")));
        }
        if reference.pixels().iter().all(|&v| v == 0.0) {
            return Err(Error::UndefinedCorrelation);
        }
        Ok(QualityPolicy { min_ncc, reference })
    }

    pub fn min_ncc(&self) -> f64 {
        self.min_ncc
    }

    pub fn reference(&self) -> &ImageSample {
        &self.reference
    }

    pub fn assess(&self, sample: &ImageSample) -> Result<QualityScore> {
        let ncc = ncc(sample, &self.reference)?;
        Ok(QualityScore {
            ncc,
            passed: ncc >= self.min_ncc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Modality;

    fn rows(r: &[Vec<f64>]) -> ImageSample {
        ImageSample::from_rows(r, Modality::Face).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let f = rows(&[vec![0.3, 0.9], vec![0.1, 0.4]]);
        assert!((ncc(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_is_zero() {
        let f = rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let g = rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(ncc(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_against_flat() {
        let f = rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        // 2 / (√2 · √4)
        assert!((ncc(&f, &g).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let z = rows(&[vec![0.0, 0.0]]);
        let f = rows(&[vec![0.5, 0.0]]);
        assert!(matches!(ncc(&f, &z), Err(Error::UndefinedCorrelation)));
        assert!(matches!(ncc(&z, &f), Err(Error::UndefinedCorrelation)));
        let tall = rows(&[vec![0.5], vec![0.0]]);
        assert!(matches!(ncc(&f, &tall), Err(Error::DimensionMismatch { .. })));
        assert!(QualityPolicy::new(1.5, f.clone()).is_err());
        assert!(QualityPolicy::new(0.5, z).is_err());
    }

    #[test]
    fn assess_gates_on_threshold() {
        let reference = rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let p = QualityPolicy::new(0.5, reference.clone()).unwrap();
        assert_eq!(
            p.assess(&reference).unwrap(),
            QualityScore { ncc: 1.0, passed: true }
        );
        let p = QualityPolicy::new(0.1, reference).unwrap();
        let disjoint = rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(
            p.assess(&disjoint).unwrap(),
            QualityScore { ncc: 0.0, passed: false }
        );
    }
}
