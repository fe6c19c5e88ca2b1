use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use super::CommonArgs;
use crate::evaluation::Protocol;
use crate::fusion::FusionPolicy;
use crate::gallery::{Size, Split};
use crate::sample::Modality;

/// On-disk config. Every key is optional; command-line flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub matching: MatchingSection,
    #[serde(default)]
    pub quality: QualitySection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub root: Option<PathBuf>,
    pub split: Option<String>,
    pub seed: Option<u64>,
    pub face_size: Option<String>,
    pub ear_size: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub face: Option<PathBuf>,
    pub ear: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchingSection {
    pub face_threshold: Option<f64>,
    pub ear_threshold: Option<f64>,
    pub protocol: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySection {
    pub min_ncc: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub samples_per_modality: Option<usize>,
    pub majority_min: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub components: Option<usize>,
    pub variance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Settings after merging the config file with flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub face_model: Option<PathBuf>,
    pub ear_model: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub face_threshold: Option<f64>,
    pub ear_threshold: Option<f64>,
    pub min_ncc: f64,
    pub fusion: FusionPolicy,
    pub split: Split,
    pub seed: Option<u64>,
    pub face_size: Size,
    pub ear_size: Size,
    pub protocol: Protocol,
    pub threads: Option<usize>,
    pub components: Option<usize>,
    pub variance: Option<f64>,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(file, args)
    }

    pub fn merge(file: FileConfig, args: &CommonArgs) -> Result<Self> {
        let min_ncc = args.min_ncc.or(file.quality.min_ncc).unwrap_or(0.0);
        if !(0.0..=1.0).contains(&min_ncc) {
            bail!("min_ncc {min_ncc} outside [0, 1]");
        }
        let fusion = FusionPolicy::new(
            args.samples.or(file.fusion.samples_per_modality).unwrap_or(3),
            args.majority.or(file.fusion.majority_min).unwrap_or(2),
        )?;
        let split = match args.split.as_deref().or(file.dataset.split.as_deref()) {
            Some(s) => s.parse()?,
            None => Split::default(),
        };
        let size = |flag: &Option<String>, key: &Option<String>, m: Modality| -> Result<Size> {
            Ok(match flag.as_deref().or(key.as_deref()) {
                Some(s) => s.parse()?,
                None => Size::default_for(m),
            })
        };
        let protocol = match args
            .protocol
            .as_deref()
            .or(file.matching.protocol.as_deref())
            .unwrap_or("verification")
        {
            "verification" => Protocol::Verification,
            "identification" => Protocol::Identification,
            other => bail!("unknown protocol {other:?} (expected verification or identification)"),
        };
        let face_threshold = args.face_threshold.or(file.matching.face_threshold);
        let ear_threshold = args.ear_threshold.or(file.matching.ear_threshold);
        for t in [face_threshold, ear_threshold].into_iter().flatten() {
            if t.is_nan() || t < 0.0 {
                bail!("threshold {t} must be >= 0");
            }
        }
        if args.threads == Some(0) {
            bail!("--threads must be at least 1");
        }
        Ok(RunConfig {
            dataset: args.dataset.clone().or(file.dataset.root),
            face_model: args.face_model.clone().or(file.models.face),
            ear_model: args.ear_model.clone().or(file.models.ear),
            store: args.store.clone().or(file.models.store),
            face_threshold,
            ear_threshold,
            min_ncc,
            fusion,
            split,
            seed: args.seed.or(file.dataset.seed),
            face_size: size(&args.face_size, &file.dataset.face_size, Modality::Face)?,
            ear_size: size(&args.ear_size, &file.dataset.ear_size, Modality::Ear)?,
            protocol,
            threads: args.threads,
            components: file.train.components,
            variance: file.train.variance,
        })
    }

    pub fn size(&self, m: Modality) -> Size {
        match m {
            Modality::Face => self.face_size,
            Modality::Ear => self.ear_size,
        }
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().context("no dataset given (--dataset or dataset.root)")
    }

    pub fn model_path(&self, m: Modality) -> Result<&Path> {
        let p = match m {
            Modality::Face => &self.face_model,
            Modality::Ear => &self.ear_model,
        };
        p.as_deref()
            .with_context(|| format!("no {m} model path given (--{m}-model or models.{m})"))
    }

    pub fn store(&self) -> Result<&Path> {
        self.store.as_deref().context("no store path given (--store or models.store)")
    }

    pub fn threshold(&self, m: Modality) -> Result<f64> {
        let t = match m {
            Modality::Face => self.face_threshold,
            Modality::Ear => self.ear_threshold,
        };
        t.with_context(|| format!("no {m} threshold given (--{m}-threshold or matching.{m}_threshold)"))
    }
}
