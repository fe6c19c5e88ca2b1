//! Two-level decision fusion: majority vote within a modality, AND across.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::Decision;
use crate::sample::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPolicy {
    samples_per_modality: usize,
    majority_min: usize,
}

impl Default for FusionPolicy {
    /// Three samples per modality, two accepts needed.
    fn default() -> Self {
        FusionPolicy {
            samples_per_modality: 3,
            majority_min: 2,
        }
    }
}

impl FusionPolicy {
    pub fn new(samples_per_modality: usize, majority_min: usize) -> Result<Self> {
        if majority_min == 0 || majority_min > samples_per_modality {
            return Err(Error::InvalidPolicy(format!(
                "majority {majority_min} of {samples_per_modality} samples"
            )));
        }
        Ok(FusionPolicy {
            samples_per_modality,
            majority_min,
        })
    }

    pub fn samples_per_modality(&self) -> usize {
        self.samples_per_modality
    }

    pub fn majority_min(&self) -> usize {
        self.majority_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityVerdict {
    pub modality: Modality,
    pub votes: Vec<Decision>,
    pub accept: bool,
}

impl ModalityVerdict {
    pub fn accepting_votes(&self) -> usize {
        self.votes.iter().filter(|d| d.accept).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDecision {
    pub face: ModalityVerdict,
    pub ear: ModalityVerdict,
    pub accept: bool,
}

pub fn majority(
    modality: Modality,
    votes: Vec<Decision>,
    policy: &FusionPolicy,
) -> Result<ModalityVerdict> {
    if votes.len() != policy.samples_per_modality {
        return Err(Error::VoteCount {
            expected: policy.samples_per_modality,
            actual: votes.len(),
        });
    }
    let accepted = votes.iter().filter(|d| d.accept).count();
    Ok(ModalityVerdict {
        modality,
        votes,
        accept: accepted >= policy.majority_min,
    })
}

/// Final AND across the two modality verdicts; arguments may come in either order.
pub fn and_fuse(a: ModalityVerdict, b: ModalityVerdict) -> Result<FusedDecision> {
    let (face, ear) = match (a.modality, b.modality) {
        (Modality::Face, Modality::Ear) => (a, b),
        (Modality::Ear, Modality::Face) => (b, a),
        (m, _) => {
            return Err(Error::InvalidPolicy(format!("duplicate modality {m}")));
        }
    };
    let accept = face.accept && ear.accept;
    Ok(FusedDecision { face, ear, accept })
}

pub fn fuse_attempt(
    face_votes: Vec<Decision>,
    ear_votes: Vec<Decision>,
    policy: &FusionPolicy,
) -> Result<FusedDecision> {
    and_fuse(
        majority(Modality::Face, face_votes, policy)?,
        majority(Modality::Ear, ear_votes, policy)?,
    )
}
