//! Recognition rate, FAR and FRR over attempt sets and threshold sweeps.
//!
//! Acceptance is inclusive: a score (distance) is accepted when it is `<=` the
//! threshold. Non-finite scores mark attempts that can never be accepted.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Recognition rate is the genuine accept rate against the claimed subject.
    Verification,
    /// A vote counts only if the rank-1 match is the claimed subject and under threshold.
    Identification,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Verification => "verification",
            Protocol::Identification => "identification",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptKind {
    Genuine,
    Impostor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub true_subject: String,
    pub claimed_subject: String,
    pub accept: bool,
    pub kind: AttemptKind,
}

impl AttemptRecord {
    pub fn new(true_subject: impl Into<String>, claimed_subject: impl Into<String>, accept: bool) -> Self {
        let true_subject = true_subject.into();
        let claimed_subject = claimed_subject.into();
        let kind = if true_subject == claimed_subject {
            AttemptKind::Genuine
        } else {
            AttemptKind::Impostor
        };
        AttemptRecord {
            true_subject,
            claimed_subject,
            accept,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thresholds {
    Single(f64),
    PerModality { face: f64, ear: f64 },
}

impl Thresholds {
    fn key(&self) -> (f64, f64) {
        match *self {
            Thresholds::Single(t) => (t, t),
            Thresholds::PerModality { face, ear } => (face, ear),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub genuine_total: usize,
    pub genuine_accepted: usize,
    pub impostor_total: usize,
    pub impostor_accepted: usize,
}

impl Counts {
    pub fn genuine_rejected(&self) -> usize {
        self.genuine_total - self.genuine_accepted
    }

    pub fn impostor_rejected(&self) -> usize {
        self.impostor_total - self.impostor_accepted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub thresholds: Thresholds,
    pub protocol: Protocol,
    pub recognition_rate: f64,
    pub far: f64,
    pub frr: f64,
    pub counts: Counts,
}

impl EvaluationReport {
    pub fn from_counts(counts: Counts, thresholds: Thresholds, protocol: Protocol) -> Self {
        let far = ratio(counts.impostor_accepted, counts.impostor_total);
        let accept_rate = ratio(counts.genuine_accepted, counts.genuine_total);
        let frr = if counts.genuine_total == 0 { 0.0 } else { 1.0 - accept_rate };
        EvaluationReport {
            thresholds,
            protocol,
            recognition_rate: accept_rate,
            far,
            frr,
            counts,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts and rates for a set of decided attempts.
///
/// Under the identification protocol the decisions are expected to already
/// require a correct rank-1 match, so in both protocols the recognition rate
/// is the fraction of genuine attempts accepted.
pub fn rates(
    attempts: &[AttemptRecord],
    thresholds: Thresholds,
    protocol: Protocol,
) -> Result<EvaluationReport> {
    if attempts.is_empty() {
        return Err(Error::EmptyInput("attempts"));
    }
    let mut c = Counts::default();
    for a in attempts {
        match a.kind {
            AttemptKind::Genuine => {
                c.genuine_total += 1;
                c.genuine_accepted += a.accept as usize;
            }
            AttemptKind::Impostor => {
                c.impostor_total += 1;
                c.impostor_accepted += a.accept as usize;
            }
        }
    }
    Ok(EvaluationReport::from_counts(c, thresholds, protocol))
}

/// One verification report per threshold.
pub fn sweep(genuine: &[f64], impostor: &[f64], thresholds: &[f64]) -> Result<Vec<EvaluationReport>> {
    sweep_with(genuine, impostor, thresholds, Protocol::Verification)
}

pub fn sweep_with(
    genuine: &[f64],
    impostor: &[f64],
    thresholds: &[f64],
    protocol: Protocol,
) -> Result<Vec<EvaluationReport>> {
    if genuine.is_empty() {
        return Err(Error::EmptyInput("genuine scores"));
    }
    if impostor.is_empty() {
        return Err(Error::EmptyInput("impostor scores"));
    }
    if thresholds.is_empty() {
        return Err(Error::EmptyInput("thresholds"));
    }
    if thresholds.iter().any(|t| t.is_nan()) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidPolicy("thresholds must be sorted ascending".into()));
    }
    let g = sorted_scores(genuine)?;
    let i = sorted_scores(impostor)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let counts = Counts {
                genuine_total: g.len(),
                genuine_accepted: g.partition_point(|&s| s <= t),
                impostor_total: i.len(),
                impostor_accepted: i.partition_point(|&s| s <= t),
            };
            EvaluationReport::from_counts(counts, Thresholds::Single(t), protocol)
        })
        .collect())
}

fn sorted_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidPolicy("NaN score".into()));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Distinct finite scores, ascending. With inclusive acceptance these are
/// exactly the thresholds at which some operating point changes.
pub fn candidate_thresholds(genuine: &[f64], impostor: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = genuine
        .iter()
        .chain(impostor)
        .copied()
        .filter(|s| s.is_finite())
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    if t.is_empty() {
        t.push(0.0);
    }
    t
}

/// Highest recognition rate; ties go to the smallest threshold.
pub fn best_threshold(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
    let mut best: Option<&EvaluationReport> = None;
    for r in reports {
        best = match best {
            None => Some(r),
            Some(b) if r.recognition_rate > b.recognition_rate => Some(r),
            Some(b)
                if r.recognition_rate == b.recognition_rate
                    && r.thresholds.key() < b.thresholds.key() =>
            {
                Some(r)
            }
            keep => keep,
        };
    }
    best.cloned().ok_or(Error::EmptyInput("reports"))
}

pub const CSV_HEADER: &str = "threshold,far,frr,recognition_rate";

pub fn write_curve_csv<W: io::Write>(reports: &[EvaluationReport], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        let t = r.thresholds.key().0;
        writeln!(out, "{t},{},{},{}", r.far, r.frr, r.recognition_rate)?;
    }
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.1} %", 100.0 * x)
}

/// Face / ear / fused results laid out as rows of rates by column of system.
pub fn render_table(face: &EvaluationReport, ear: &EvaluationReport, fused: &EvaluationReport) -> String {
    let cols = [face, ear, fused];
    let mut s = String::new();
    let _ = writeln!(s, "{:<18}{:>10}{:>10}{:>20}", "", "Face", "Ear", "Multimodal Fusion");
    type Getter = fn(&EvaluationReport) -> f64;
    let rows: [(&str, Getter); 3] = [
        ("Recognition Rate", |r| r.recognition_rate),
        ("FAR", |r| r.far),
        ("FRR", |r| r.frr),
    ];
    for (label, get) in rows {
        let _ = writeln!(
            s,
            "{:<18}{:>10}{:>10}{:>20}",
            label,
            pct(get(cols[0])),
            pct(get(cols[1])),
            pct(get(cols[2]))
        );
    }
    s
}
