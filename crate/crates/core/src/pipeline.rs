//! Per-modality probe scoring and the full evaluation run.
//!
//! Every probe sample goes through the quality gate, is projected into its
//! modality's eigenspace and compared with the enrolled templates. A claim
//! against subject `c` then becomes one vote per sample; votes are fused by
//! majority within the modality and AND across modalities.
//!
//! For threshold sweeps each multi-sample attempt is reduced to a single
//! distance: the `majority_min`-th smallest per-sample claim distance. The
//! attempt's majority verdict accepts at threshold `t` exactly when that
//! distance is `<= t`, so one sorted sweep covers every operating point.

use serde::{Deserialize, Serialize};

use crate::eigenspace::{EigenModel, FeatureVector};
use crate::error::{Error, Result};
use crate::evaluation::{
    self, AttemptRecord, EvaluationReport, Protocol, Thresholds,
};
use crate::exec::Parallelism;
use crate::fusion::{self, FusedDecision, FusionPolicy};
use crate::matching::{self, Decision, DecisionPolicy, Reason};
use crate::quality::{QualityPolicy, QualityScore};
use crate::sample::{ImageSample, Modality};

/// Everything needed to score probes of one modality.
#[derive(Debug, Clone)]
pub struct ModalityMatcher<'a> {
    model: &'a EigenModel,
    templates: &'a [FeatureVector],
    quality: QualityPolicy,
    subjects: Vec<String>,
}

/// A probe after the quality gate and projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub quality: QualityScore,
    pub features: FeatureVector,
    /// Distance to each enrolled subject's nearest template, ordered by subject.
    pub subject_distances: Vec<(String, f64)>,
}

impl ScoredSample {
    /// Rank-1 subject; equal distances go to the lowest label.
    pub fn nearest(&self) -> (&str, f64) {
        let mut best = (self.subject_distances[0].0.as_str(), self.subject_distances[0].1);
        for (s, d) in &self.subject_distances[1..] {
            if *d < best.1 {
                best = (s, *d);
            }
        }
        best
    }

    pub fn distance_to(&self, subject: &str) -> Option<f64> {
        self.subject_distances
            .binary_search_by(|(s, _)| s.as_str().cmp(subject))
            .ok()
            .map(|i| self.subject_distances[i].1)
    }
}

impl<'a> ModalityMatcher<'a> {
    pub fn new(model: &'a EigenModel, templates: &'a [FeatureVector], min_ncc: f64) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::EmptyGallery);
        }
        for t in templates {
            if t.modality != model.modality() {
                return Err(Error::ModalityMismatch {
                    expected: model.modality(),
                    actual: t.modality,
                });
            }
            if t.len() != model.k() {
                return Err(Error::LengthMismatch {
                    expected: model.k(),
                    actual: t.len(),
                });
            }
            if t.subject_id.is_none() {
                return Err(Error::UnlabeledTemplate);
            }
        }
        let mut subjects: Vec<String> = templates
            .iter()
            .filter_map(|t| t.subject_id.clone())
            .collect();
        subjects.sort();
        subjects.dedup();
        Ok(ModalityMatcher {
            model,
            templates,
            quality: QualityPolicy::new(min_ncc, model.mean_image())?,
            subjects,
        })
    }

    pub fn modality(&self) -> Modality {
        self.model.modality()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn templates(&self) -> &[FeatureVector] {
        self.templates
    }

    pub fn score(&self, sample: &ImageSample) -> Result<ScoredSample> {
        let features = self.model.project(sample)?;
        let quality = self.quality.assess(sample)?;
        let mut subject_distances: Vec<(String, f64)> =
            self.subjects.iter().map(|s| (s.clone(), f64::INFINITY)).collect();
        for t in self.templates {
            let d = matching::euclidean(t, &features)?;
            let label = t.subject_id.as_deref().expect("checked in new");
            let i = self
                .subjects
                .binary_search_by(|s| s.as_str().cmp(label))
                .expect("subject list built from templates");
            if d < subject_distances[i].1 {
                subject_distances[i].1 = d;
            }
        }
        Ok(ScoredSample {
            quality,
            features,
            subject_distances,
        })
    }

    /// The per-sample vote for a claim, built from the matching primitives.
    pub fn decide(
        &self,
        sample: &ScoredSample,
        claimed: &str,
        policy: &DecisionPolicy,
        protocol: Protocol,
    ) -> Result<Decision> {
        let mut decision = match protocol {
            Protocol::Verification => {
                matching::verify(claimed, self.templates, &sample.features, policy)?
            }
            Protocol::Identification => {
                if !self.subjects.iter().any(|s| s == claimed) {
                    return Err(Error::UnknownSubject(claimed.to_owned()));
                }
                let mut d = matching::identify(self.templates, &sample.features, policy)?;
                if d.score.matched_subject != claimed {
                    d.accept = false;
                    d.reason = Reason::WrongSubject;
                }
                d
            }
        };
        if !sample.quality.passed {
            decision = Decision::quality_rejected(decision.score);
        }
        Ok(decision)
    }

    /// Distance at or above which the vote for `claimed` accepts; infinite
    /// when no threshold can make it accept.
    pub fn claim_distance(&self, sample: &ScoredSample, claimed: &str, protocol: Protocol) -> Result<f64> {
        let own = sample
            .distance_to(claimed)
            .ok_or_else(|| Error::UnknownSubject(claimed.to_owned()))?;
        if !sample.quality.passed {
            return Ok(f64::INFINITY);
        }
        Ok(match protocol {
            Protocol::Verification => own,
            Protocol::Identification => {
                let (subject, d) = sample.nearest();
                if subject == claimed {
                    d
                } else {
                    f64::INFINITY
                }
            }
        })
    }
}

/// The `majority_min`-th smallest vote distance of one attempt.
pub fn attempt_distance(mut votes: Vec<f64>, policy: &FusionPolicy) -> Result<f64> {
    if votes.len() != policy.samples_per_modality() {
        return Err(Error::VoteCount {
            expected: policy.samples_per_modality(),
            actual: votes.len(),
        });
    }
    votes.sort_by(f64::total_cmp);
    Ok(votes[policy.majority_min() - 1])
}

/// Probe captures of one subject, already cut to `samples_per_modality` per modality.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub subject_id: String,
    pub face: Vec<ImageSample>,
    pub ear: Vec<ImageSample>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvaluationSettings {
    pub protocol: Protocol,
    pub fusion: FusionPolicy,
    pub parallelism: Parallelism,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            protocol: Protocol::Verification,
            fusion: FusionPolicy::default(),
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedAttempt {
    pub record: AttemptRecord,
    pub decision: FusedDecision,
}

#[derive(Debug, Clone)]
pub struct PipelineEvaluation {
    pub face_curve: Vec<EvaluationReport>,
    pub ear_curve: Vec<EvaluationReport>,
    pub face: EvaluationReport,
    pub ear: EvaluationReport,
    pub fused: EvaluationReport,
    pub attempts: Vec<FusedAttempt>,
}

/// Attempt-level distances for every (probe subject, claimed subject) pair.
#[derive(Debug, Clone)]
pub struct AttemptDistances {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

/// Runs every probe set against every enrolled subject (full cross-product of
/// impostor claims), picks each modality's recognition-maximizing threshold,
/// and fuses at those thresholds.
pub fn evaluate(
    face: &ModalityMatcher<'_>,
    ear: &ModalityMatcher<'_>,
    probes: &[ProbeSet],
    settings: &EvaluationSettings,
) -> Result<PipelineEvaluation> {
    if face.subjects() != ear.subjects() {
        return Err(Error::InvalidPolicy(
            "face and ear templates enroll different subjects".into(),
        ));
    }
    if probes.is_empty() {
        return Err(Error::EmptyInput("probe sets"));
    }
    let n = settings.fusion.samples_per_modality();
    for p in probes {
        for (m, v) in [(Modality::Face, &p.face), (Modality::Ear, &p.ear)] {
            if v.len() != n {
                return Err(Error::InvalidPolicy(format!(
                    "subject {} has {} {m} probes, expected {n}",
                    p.subject_id,
                    v.len()
                )));
            }
        }
    }
    let par = settings.parallelism;
    let face_scored: Vec<Vec<ScoredSample>> =
        par.try_map(probes, |p| p.face.iter().map(|s| face.score(s)).collect())?;
    let ear_scored: Vec<Vec<ScoredSample>> =
        par.try_map(probes, |p| p.ear.iter().map(|s| ear.score(s)).collect())?;

    let claims = face.subjects();
    let protocol = settings.protocol;

    let best = |matcher: &ModalityMatcher<'_>, scored: &[Vec<ScoredSample>]| -> Result<(Vec<EvaluationReport>, EvaluationReport)> {
        let d = attempt_distances(matcher, probes, scored, claims, settings)?;
        let thresholds = evaluation::candidate_thresholds(&d.genuine, &d.impostor);
        let curve = evaluation::sweep_with(&d.genuine, &d.impostor, &thresholds, protocol)?;
        let best = evaluation::best_threshold(&curve)?;
        Ok((curve, best))
    };
    let (face_curve, face_best) = best(face, &face_scored)?;
    let (ear_curve, ear_best) = best(ear, &ear_scored)?;

    let face_t = single_threshold(&face_best);
    let ear_t = single_threshold(&ear_best);
    let face_policy = DecisionPolicy::new(face_t)?;
    let ear_policy = DecisionPolicy::new(ear_t)?;

    let pairs: Vec<(usize, &String)> = (0..probes.len())
        .flat_map(|p| claims.iter().map(move |c| (p, c)))
        .collect();
    let attempts: Vec<FusedAttempt> = par.try_map(&pairs, |&(p, claimed)| -> Result<FusedAttempt> {
        let face_votes = face_scored[p]
            .iter()
            .map(|s| face.decide(s, claimed, &face_policy, protocol))
            .collect::<Result<Vec<_>>>()?;
        let ear_votes = ear_scored[p]
            .iter()
            .map(|s| ear.decide(s, claimed, &ear_policy, protocol))
            .collect::<Result<Vec<_>>>()?;
        let decision = fusion::fuse_attempt(face_votes, ear_votes, &settings.fusion)?;
        Ok(FusedAttempt {
            record: AttemptRecord::new(&probes[p].subject_id, claimed, decision.accept),
            decision,
        })
    })?;
    let records: Vec<AttemptRecord> = attempts.iter().map(|a| a.record.clone()).collect();
    let fused = evaluation::rates(
        &records,
        Thresholds::PerModality {
            face: face_t,
            ear: ear_t,
        },
        protocol,
    )?;

    Ok(PipelineEvaluation {
        face_curve,
        ear_curve,
        face: face_best,
        ear: ear_best,
        fused,
        attempts,
    })
}

fn single_threshold(r: &EvaluationReport) -> f64 {
    match r.thresholds {
        Thresholds::Single(t) => t,
        Thresholds::PerModality { .. } => unreachable!("sweeps produce single thresholds"),
    }
}

/// Genuine and impostor attempt distances for one modality.
pub fn attempt_distances(
    matcher: &ModalityMatcher<'_>,
    probes: &[ProbeSet],
    scored: &[Vec<ScoredSample>],
    claims: &[String],
    settings: &EvaluationSettings,
) -> Result<AttemptDistances> {
    let mut out = AttemptDistances {
        genuine: Vec::new(),
        impostor: Vec::new(),
    };
    for (probe, samples) in probes.iter().zip(scored) {
        for claimed in claims {
            let votes = samples
                .iter()
                .map(|s| matcher.claim_distance(s, claimed, settings.protocol))
                .collect::<Result<Vec<_>>>()?;
            let d = attempt_distance(votes, &settings.fusion)?;
            if *claimed == probe.subject_id {
                out.genuine.push(d);
            } else {
                out.impostor.push(d);
            }
        }
    }
    Ok(out)
}
