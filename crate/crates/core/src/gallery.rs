//! Dataset ingestion and the enrollment store.
//!
//! Datasets follow `root/<subject>/<face|ear>/<file>.{pgm,png}`. Images are
//! decoded to grayscale in `[0, 1]`: 8-bit gray maps `v` to `v / 255`, color
//! uses `Y = 0.299 R + 0.587 G + 0.114 B`, and images whose size differs from
//! the target are resampled bilinearly with pixel-center alignment.

use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use image::DynamicImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigenspace::{EigenModel, FeatureVector};
use crate::error::{Error, Result};
use crate::sample::{ImageSample, Modality};

pub const STORE_FORMAT_VERSION: u32 = 1;

/// Width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl Size {
    pub const fn new(width: usize, height: usize) -> Self {
        Size { width, height }
    }

    /// Capture resolutions of the reference dataset: 150×200 faces, 100×150 ears.
    pub const fn default_for(modality: Modality) -> Self {
        match modality {
            Modality::Face => Size::new(150, 200),
            Modality::Ear => Size::new(100, 150),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(format!("size {s:?} is not WIDTHxHEIGHT"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let size = Size::new(w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
        if size.width == 0 || size.height == 0 {
            return Err(bad());
        }
        Ok(size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub face: Vec<PathBuf>,
    pub ear: Vec<PathBuf>,
    /// Set when a modality has no samples.
    pub flagged: bool,
}

impl SubjectEntry {
    pub fn paths(&self, modality: Modality) -> &[PathBuf] {
        match modality {
            Modality::Face => &self.face,
            Modality::Ear => &self.ear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub subjects: Vec<SubjectEntry>,
    pub face_size: Size,
    pub ear_size: Size,
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn size(&self, modality: Modality) -> Size {
        match modality {
            Modality::Face => self.face_size,
            Modality::Ear => self.ear_size,
        }
    }

    pub fn with_sizes(mut self, face: Size, ear: Size) -> Self {
        self.face_size = face;
        self.ear_size = ear;
        self
    }

    pub fn complete_subjects(&self) -> impl Iterator<Item = &SubjectEntry> {
        self.subjects.iter().filter(|s| !s.flagged)
    }
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(OsStr::to_str)
        .map(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let mut subjects = Vec::new();
    let mut warnings = Vec::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let Some(subject_id) = dir.file_name().and_then(OsStr::to_str).map(str::to_owned) else {
            warnings.push(format!("{}: subject directory name is not UTF-8, skipped", dir.display()));
            continue;
        };
        let mut entry = SubjectEntry {
            subject_id,
            face: Vec::new(),
            ear: Vec::new(),
            flagged: false,
        };
        for modality in Modality::ALL {
            let mdir = dir.join(modality.as_str());
            let files = if mdir.is_dir() {
                sorted_entries(&mdir)?
                    .into_iter()
                    .filter(|p| p.is_file() && is_supported(p))
                    .collect()
            } else {
                Vec::new()
            };
            if files.is_empty() {
                entry.flagged = true;
                warnings.push(format!("subject {}: no {modality} samples", entry.subject_id));
            }
            match modality {
                Modality::Face => entry.face = files,
                Modality::Ear => entry.ear = files,
            }
        }
        subjects.push(entry);
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        subjects,
        face_size: Size::default_for(Modality::Face),
        ear_size: Size::default_for(Modality::Ear),
        warnings,
    })
}

/// Decodes a PGM or PNG file to a grayscale sample of the target size.
pub fn load_image(path: impl AsRef<Path>, target: Size, modality: Modality) -> Result<ImageSample> {
    let path = path.as_ref();
    if target.width == 0 || target.height == 0 {
        return Err(Error::InvalidImage(format!("zero target size {target}")));
    }
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let gray = to_gray(&img);
    let pixels = if (width, height) == (target.width, target.height) {
        gray
    } else {
        resize_bilinear(&gray, Size::new(width, height), target)
    };
    ImageSample::new(target.width, target.height, pixels, modality, None)
}

fn to_gray(img: &DynamicImage) -> Vec<f64> {
    match img {
        DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                if r == g && g == b {
                    r as f64 / 255.0
                } else {
                    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                    (y / 255.0).clamp(0.0, 1.0)
                }
            })
            .collect(),
    }
}

/// Bilinear resampling of a row-major grayscale buffer.
///
/// Destination pixel centers map to `(x + 0.5) · src / dst − 0.5` in the
/// source, clamped to the image, and interpolate the four surrounding pixels.
pub fn resize_bilinear(src: &[f64], from: Size, to: Size) -> Vec<f64> {
    assert_eq!(src.len(), from.width * from.height);
    let coord = |d: usize, ds: usize, ss: usize| -> (usize, usize, f64) {
        let x = ((d as f64 + 0.5) * ss as f64 / ds as f64 - 0.5).clamp(0.0, (ss - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(ss - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut out = Vec::with_capacity(to.width * to.height);
    for y in 0..to.height {
        let (y0, y1, fy) = coord(y, to.height, from.height);
        for x in 0..to.width {
            let (x0, x1, fx) = coord(x, to.width, from.width);
            let at = |r: usize, c: usize| src[r * from.width + c];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    out
}

/// Per-subject train/probe counts, written `TRAIN:PROBE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: usize,
    pub probe: usize,
}

impl Default for Split {
    fn default() -> Self {
        Split { train: 4, probe: 3 }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.train, self.probe)
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(format!("split {s:?} is not TRAIN:PROBE with positive counts"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let split = Split {
            train: a.trim().parse().map_err(|_| bad())?,
            probe: b.trim().parse().map_err(|_| bad())?,
        };
        if split.train == 0 || split.probe == 0 {
            return Err(bad());
        }
        Ok(split)
    }
}

impl Split {
    /// Splits one subject's samples of one modality. Without a seed the first
    /// `train` files (sorted) train; with a seed the order is shuffled by a
    /// generator keyed on the seed, subject and modality.
    pub fn apply(
        &self,
        paths: &[PathBuf],
        subject_id: &str,
        modality: Modality,
        seed: Option<u64>,
    ) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
        if paths.len() != self.train + self.probe {
            return Err(Error::InvalidPolicy(format!(
                "subject {subject_id} has {} {modality} samples but split {self} needs {}",
                paths.len(),
                self.train + self.probe
            )));
        }
        let mut order = paths.to_vec();
        if let Some(seed) = seed {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(subject_id.as_bytes());
            h.update([0]);
            h.update(modality.as_str().as_bytes());
            let digest = h.finalize();
            let mut key = [0u8; 32];
            key.copy_from_slice(&digest);
            order.shuffle(&mut ChaCha8Rng::from_seed(key));
        }
        let probe = order.split_off(self.train);
        Ok((order, probe))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityTemplates {
    pub model_hash: String,
    pub k: usize,
    pub templates: Vec<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentStore {
    pub format_version: u32,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<ModalityTemplates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ear: Option<ModalityTemplates>,
}

impl Default for EnrollmentStore {
    fn default() -> Self {
        Self::new()
    }
}

impl EnrollmentStore {
    pub fn new() -> Self {
        EnrollmentStore {
            format_version: STORE_FORMAT_VERSION,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            face: None,
            ear: None,
        }
    }

    pub fn block(&self, modality: Modality) -> Option<&ModalityTemplates> {
        match modality {
            Modality::Face => self.face.as_ref(),
            Modality::Ear => self.ear.as_ref(),
        }
    }

    fn block_mut(&mut self, modality: Modality) -> &mut Option<ModalityTemplates> {
        match modality {
            Modality::Face => &mut self.face,
            Modality::Ear => &mut self.ear,
        }
    }

    pub fn templates(&self, modality: Modality) -> &[FeatureVector] {
        self.block(modality).map_or(&[], |b| b.templates.as_slice())
    }

    /// Templates grouped by subject, in label order.
    pub fn subjects(&self, modality: Modality) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for t in self.templates(modality) {
            if let Some(s) = t.subject_id.as_deref() {
                *m.entry(s).or_insert(0) += 1;
            }
        }
        m
    }

    /// Projects `samples` with `model` and appends them as templates of `subject_id`.
    pub fn enroll(&mut self, model: &EigenModel, samples: &[ImageSample], subject_id: &str) -> Result<usize> {
        let hash = model.content_hash();
        let templates = samples
            .iter()
            .map(|s| model.project(s).map(|fv| fv.with_subject(subject_id)))
            .collect::<Result<Vec<_>>>()?;
        let block = self.block_mut(model.modality());
        match block {
            Some(b) if b.model_hash != hash => {
                return Err(Error::StaleStore {
                    modality: model.modality(),
                    stored: b.model_hash.clone(),
                    loaded: hash,
                })
            }
            Some(_) => {}
            None => {
                *block = Some(ModalityTemplates {
                    model_hash: hash,
                    k: model.k(),
                    templates: Vec::new(),
                })
            }
        }
        let b = block.as_mut().expect("block initialized above");
        let n = templates.len();
        b.templates.extend(templates);
        Ok(n)
    }

    /// Rejects the store unless its block for the model's modality was built
    /// against exactly this model.
    pub fn check_model(&self, model: &EigenModel) -> Result<()> {
        let m = model.modality();
        let b = self
            .block(m)
            .ok_or_else(|| Error::Corrupt(format!("store has no {m} templates")))?;
        let loaded = model.content_hash();
        if b.model_hash != loaded {
            return Err(Error::StaleStore {
                modality: m,
                stored: b.model_hash.clone(),
                loaded,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: EnrollmentStore = serde_json::from_str(text)?;
        if s.format_version != STORE_FORMAT_VERSION {
            return Err(Error::FormatVersion(s.format_version));
        }
        for m in Modality::ALL {
            if let Some(b) = s.block(m) {
                for t in &b.templates {
                    if t.modality != m || t.len() != b.k || t.subject_id.is_none() {
                        return Err(Error::Corrupt(format!(
                            "{m} template does not match its block (k = {})",
                            b.k
                        )));
                    }
                }
            }
        }
        Ok(s)
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

    /// Loads a store and validates it against both models.
    pub fn load_for(path: impl AsRef<Path>, face: &EigenModel, ear: &EigenModel) -> Result<Self> {
        let s = Self::load(path)?;
        s.check_model(face)?;
        s.check_model(ear)?;
        Ok(s)
    }
}
