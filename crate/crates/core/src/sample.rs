use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Ear,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Face, Modality::Ear];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Ear => "ear",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "face" => Ok(Modality::Face),
            "ear" => Ok(Modality::Ear),
            other => Err(Error::InvalidPolicy(format!("unknown modality {other:?}"))),
        }
    }
}

/// A grayscale capture with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pixels: Vec<f64>,
    width: usize,
    height: usize,
    modality: Modality,
    subject_id: Option<String>,
}

impl ImageSample {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        modality: Modality,
        subject_id: Option<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(ImageSample {
            pixels,
            width,
            height,
            modality,
            subject_id,
        })
    }

    /// Builds a sample from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], modality: Modality) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidImage("ragged rows".into()));
        }
        Self::new(width, height, rows.concat(), modality, None)
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = Some(subject_id.into());
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn subject_id(&self) -> Option<&str> {
        self.subject_id.as_deref()
    }

    /// Row-major flattened intensities.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_width: width,
                expected_height: height,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub(crate) fn check_modality(&self, expected: Modality) -> Result<()> {
        if self.modality != expected {
            return Err(Error::ModalityMismatch {
                expected,
                actual: self.modality,
            });
        }
        Ok(())
    }
}
