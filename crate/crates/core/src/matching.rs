//! Nearest-template scoring in eigenspace.

use serde::{Deserialize, Serialize};

use crate::eigenspace::FeatureVector;
use crate::error::{Error, Result};
use crate::sample::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub distance: f64,
    pub matched_subject: String,
    pub probe_modality: Modality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    threshold: f64,
}

impl DecisionPolicy {
    pub fn new(threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::InvalidPolicy(format!("threshold {threshold} must be >= 0")));
        }
        Ok(DecisionPolicy { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Accepts distances up to and including the threshold.
    pub fn accepts(&self, distance: f64) -> bool {
        distance <= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    UnderThreshold,
    OverThreshold,
    QualityRejected,
    /// Identification only: the rank-1 match is not the claimed subject.
    WrongSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub accept: bool,
    pub score: MatchScore,
    pub reason: Reason,
}

impl Decision {
    fn from_score(score: MatchScore, policy: &DecisionPolicy) -> Self {
        let accept = policy.accepts(score.distance);
        Decision {
            accept,
            score,
            reason: if accept {
                Reason::UnderThreshold
            } else {
                Reason::OverThreshold
            },
        }
    }

    /// A reject vote for a probe that failed the quality gate.
    pub fn quality_rejected(score: MatchScore) -> Self {
        Decision {
            accept: false,
            score,
            reason: Reason::QualityRejected,
        }
    }
}

pub fn euclidean(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.modality != b.modality {
        return Err(Error::ModalityMismatch {
            expected: a.modality,
            actual: b.modality,
        });
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn label(t: &FeatureVector) -> Result<&str> {
    t.subject_id.as_deref().ok_or(Error::UnlabeledTemplate)
}

/// Nearest template over `templates`; ties go to the lexicographically lowest subject.
fn nearest<'a, I>(templates: I, probe: &FeatureVector) -> Result<Option<MatchScore>>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut best: Option<(f64, &str)> = None;
    for t in templates {
        let subject = label(t)?;
        let d = euclidean(t, probe)?;
        let better = match best {
            None => true,
            Some((bd, bs)) => d < bd || (d == bd && subject < bs),
        };
        if better {
            best = Some((d, subject));
        }
    }
    Ok(best.map(|(distance, subject)| MatchScore {
        distance,
        matched_subject: subject.to_owned(),
        probe_modality: probe.modality,
    }))
}

/// Best match over the whole gallery.
pub fn identify(
    gallery: &[FeatureVector],
    probe: &FeatureVector,
    policy: &DecisionPolicy,
) -> Result<Decision> {
    let score = nearest(gallery, probe)?.ok_or(Error::EmptyGallery)?;
    Ok(Decision::from_score(score, policy))
}

/// Minimum distance to the claimed subject's templates.
pub fn verify(
    claimed: &str,
    gallery: &[FeatureVector],
    probe: &FeatureVector,
    policy: &DecisionPolicy,
) -> Result<Decision> {
    let own = gallery
        .iter()
        .filter(|t| t.subject_id.as_deref() == Some(claimed));
    let score = nearest(own, probe)?.ok_or_else(|| Error::UnknownSubject(claimed.to_owned()))?;
    Ok(Decision::from_score(score, policy))
}
