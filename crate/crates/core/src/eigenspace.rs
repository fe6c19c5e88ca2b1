//! Karhunen-Loève subspaces ("eigenfaces" and "eigenears").
//!
//! A model is trained once from a gallery of same-sized images and is
//! immutable afterwards. Eigenvectors come from the M×M Gram matrix of the
//! centered gallery whenever M is smaller than the pixel count, mapped back
//! to pixel space and renormalized; otherwise the pixel covariance is
//! decomposed directly. Covariance uses the population 1/M scaling.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::linalg::{self, canonical_sign, dot, norm};
use crate::sample::{ImageSample, Modality};

pub const FORMAT_VERSION: u32 = 1;

/// Eigenvalues below this fraction of the largest are treated as zero rank.
pub const RANK_FLOOR: f64 = 1e-12;

pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Components {
    /// At most this many; fewer if the gallery rank is lower.
    Fixed(usize),
    /// The smallest count whose cumulative eigenvalue fraction reaches the target.
    VarianceFraction(f64),
    /// As `VarianceFraction`, but never more than the given count.
    VarianceFractionCapped(f64, usize),
}

impl Default for Components {
    fn default() -> Self {
        Components::VarianceFraction(DEFAULT_VARIANCE_FRACTION)
    }
}

/// Diagnostics from a training run; not persisted with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub gallery_size: usize,
    /// Number of eigenvalues above the rank floor.
    pub rank: usize,
    pub k: usize,
    /// Sum of all eigenvalues above the rank floor.
    pub total_variance: f64,
    /// Fraction of `total_variance` captured by the retained components.
    pub retained_fraction: f64,
    pub used_gram: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    modality: Modality,
    width: usize,
    height: usize,
    mean: Vec<f64>,
    /// Orthonormal eigenvectors, one `Vec` per column.
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

/// Projection coefficients of a sample in a model's subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub weights: Vec<f64>,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
}

impl FeatureVector {
    pub fn new(weights: Vec<f64>, modality: Modality) -> Self {
        FeatureVector {
            weights,
            modality,
            subject_id: None,
        }
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = Some(subject_id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Unclamped output of [`EigenModel::reconstruct`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub modality: Modality,
}

impl Reconstruction {
    /// Pixels that fall outside `[0, 1]` and would be clamped on export.
    pub fn out_of_range(&self) -> usize {
        self.values
            .iter()
            .filter(|v| !(0.0..=1.0).contains(*v))
            .count()
    }

    pub fn to_sample(&self) -> ImageSample {
        let pixels = self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ImageSample::new(self.width, self.height, pixels, self.modality, None)
            .expect("clamped reconstruction is a valid image")
    }
}

impl EigenModel {
    pub fn train(gallery: &[ImageSample], k: usize) -> Result<Self> {
        Self::train_with(gallery, Components::Fixed(k), Parallelism::default()).map(|(m, _)| m)
    }

    pub fn train_with(
        gallery: &[ImageSample],
        components: Components,
        par: Parallelism,
    ) -> Result<(Self, TrainSummary)> {
        let first = gallery.first().ok_or(Error::EmptyGallery)?;
        let (modality, width, height) = (first.modality(), first.width(), first.height());
        for s in gallery {
            s.check_modality(modality)?;
            s.check_shape(width, height)?;
        }
        match components {
            Components::Fixed(0) | Components::VarianceFractionCapped(_, 0) => {
                return Err(Error::InvalidPolicy("component count must be at least 1".into()))
            }
            Components::VarianceFraction(f) | Components::VarianceFractionCapped(f, _)
                if !(f > 0.0 && f <= 1.0) =>
            {
                return Err(Error::InvalidPolicy(format!(
                    "variance fraction {f} outside (0, 1]"
                )))
            }
            _ => {}
        }

        let m = gallery.len();
        let p = width * height;
        let scale = 1.0 / m as f64;

        let mean: Vec<f64> = par.map_range(p, |i| {
            gallery.iter().map(|s| s.pixels()[i]).sum::<f64>() * scale
        });
        let centered: Vec<Vec<f64>> = par.map(gallery, |s| {
            s.pixels().iter().zip(&mean).map(|(x, mu)| x - mu).collect()
        });
        if centered.iter().all(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::DegenerateGallery);
        }

        let used_gram = m < p;
        let (values, mut vectors) = if used_gram {
            let eig = linalg::symmetric_eigen(&gram_matrix(&centered, scale, par), m);
            let mapped = par.map(&eig.vectors, |v| {
                let mut u = vec![0.0; p];
                for (coef, c) in v.iter().zip(&centered) {
                    for (ui, ci) in u.iter_mut().zip(c) {
                        *ui += coef * ci;
                    }
                }
                u
            });
            (eig.values, mapped)
        } else {
            let eig = linalg::symmetric_eigen(&covariance_matrix(&centered, scale, par), p);
            (eig.values, eig.vectors)
        };

        let lead = values.first().copied().unwrap_or(0.0);
        if lead.is_nan() || lead <= 0.0 {
            return Err(Error::DegenerateGallery);
        }
        let rank = values
            .iter()
            .take_while(|&&v| v > RANK_FLOOR * lead)
            .count();
        let total_variance: f64 = values[..rank].iter().sum();

        let by_fraction = |f: f64| {
            let mut acc = 0.0;
            for (i, v) in values[..rank].iter().enumerate() {
                acc += v;
                if acc / total_variance >= f {
                    return i + 1;
                }
            }
            rank
        };
        let wanted = match components {
            Components::Fixed(k) => k,
            Components::VarianceFraction(f) => by_fraction(f),
            Components::VarianceFractionCapped(f, cap) => by_fraction(f).min(cap),
        };
        let k = wanted.min(m - 1).min(rank);
        if k == 0 {
            return Err(Error::DegenerateGallery);
        }

        vectors.truncate(k);
        // Two Gram-Schmidt passes restore orthogonality lost when small Gram
        // eigenvectors are mapped through the data matrix.
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = vectors.split_at_mut(j);
                let u = &mut rest[0];
                for prev in done.iter() {
                    let d = dot(prev, u);
                    u.iter_mut().zip(prev).for_each(|(x, y)| *x -= d * y);
                }
                let n = norm(u);
                u.iter_mut().for_each(|x| *x /= n);
            }
        }
        for u in &mut vectors {
            canonical_sign(u);
        }

        let eigenvalues = values[..k].to_vec();
        let retained_fraction = eigenvalues.iter().sum::<f64>() / total_variance;
        let model = EigenModel {
            modality,
            width,
            height,
            mean,
            basis: vectors,
            eigenvalues,
        };
        let summary = TrainSummary {
            gallery_size: m,
            rank,
            k,
            total_variance,
            retained_fraction,
            used_gram,
        };
        Ok((model, summary))
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The mean image as a sample, used as the quality reference.
    pub fn mean_image(&self) -> ImageSample {
        // The mean of [0, 1] images stays in [0, 1] up to rounding.
        let pixels = self.mean.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ImageSample::new(self.width, self.height, pixels, self.modality, None)
            .expect("mean image is valid")
    }

    pub fn check_sample(&self, sample: &ImageSample) -> Result<()> {
        sample.check_modality(self.modality)?;
        sample.check_shape(self.width, self.height)
    }

    pub fn project(&self, sample: &ImageSample) -> Result<FeatureVector> {
        self.check_sample(sample)?;
        let offset: Vec<f64> = sample
            .pixels()
            .iter()
            .zip(&self.mean)
            .map(|(x, mu)| x - mu)
            .collect();
        let mut fv = FeatureVector::new(self.project_centered(&offset), self.modality);
        fv.subject_id = sample.subject_id().map(str::to_owned);
        Ok(fv)
    }

    /// Weights for a vector already expressed as an offset from the mean.
    pub fn project_centered(&self, offset: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|u| dot(u, offset)).collect()
    }

    pub fn project_batch(&self, samples: &[ImageSample], par: Parallelism) -> Result<Vec<FeatureVector>> {
        par.try_map(samples, |s| self.project(s))
    }

    pub fn reconstruct(&self, fv: &FeatureVector) -> Result<Reconstruction> {
        if fv.modality != self.modality {
            return Err(Error::ModalityMismatch {
                expected: self.modality,
                actual: fv.modality,
            });
        }
        if fv.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                actual: fv.len(),
            });
        }
        let mut values = self.mean.clone();
        for (w, u) in fv.weights.iter().zip(&self.basis) {
            values.iter_mut().zip(u).for_each(|(v, ui)| *v += w * ui);
        }
        Ok(Reconstruction {
            values,
            width: self.width,
            height: self.height,
            modality: self.modality,
        })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            modality: self.modality,
            width: self.width,
            height: self.height,
            k: self.k(),
            mean: self.mean.clone(),
            eigenvalues: self.eigenvalues.clone(),
            basis: self.basis.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(f.format_version));
        }
        let p = f.width * f.height;
        if p == 0 {
            return Err(Error::Corrupt("model has a zero dimension".into()));
        }
        if f.mean.len() != p {
            return Err(Error::Corrupt(format!("mean has {} entries, expected {p}", f.mean.len())));
        }
        if f.k == 0 || f.basis.len() != f.k || f.eigenvalues.len() != f.k {
            return Err(Error::Corrupt(format!(
                "k = {} but {} basis columns and {} eigenvalues",
                f.k,
                f.basis.len(),
                f.eigenvalues.len()
            )));
        }
        if let Some(col) = f.basis.iter().find(|c| c.len() != p) {
            return Err(Error::Corrupt(format!("basis column has {} entries, expected {p}", col.len())));
        }
        Ok(EigenModel {
            modality: f.modality,
            width: f.width,
            height: f.height,
            mean: f.mean,
            basis: f.basis,
            eigenvalues: f.eigenvalues,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::error::write_file(path, &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    modality: Modality,
    width: usize,
    height: usize,
    k: usize,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Column-major: one inner array per eigenvector.
    basis: Vec<Vec<f64>>,
}

fn gram_matrix(centered: &[Vec<f64>], scale: f64, par: Parallelism) -> Vec<f64> {
    let m = centered.len();
    let rows = par.map_range(m, |i| {
        (0..m)
            .map(|j| if j < i { 0.0 } else { dot(&centered[i], &centered[j]) * scale })
            .collect::<Vec<_>>()
    });
    rows.concat()
}

fn covariance_matrix(centered: &[Vec<f64>], scale: f64, par: Parallelism) -> Vec<f64> {
    let p = centered[0].len();
    let rows = par.map_range(p, |a| {
        (0..p)
            .map(|b| {
                if b < a {
                    0.0
                } else {
                    centered.iter().map(|c| c[a] * c[b]).sum::<f64>() * scale
                }
            })
            .collect::<Vec<_>>()
    });
    rows.concat()
}
