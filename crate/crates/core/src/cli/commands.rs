use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use super::config::RunConfig;
use super::{Command, EnrollArgs, EvaluateArgs, IdentifyArgs, SweepArgs, TrainArgs, VerifyArgs};
use crate::eigenspace::{Components, EigenModel, DEFAULT_VARIANCE_FRACTION};
use crate::evaluation::{self, EvaluationReport, Protocol};
use crate::exec::Parallelism;
use crate::fusion::{self, FusedDecision, ModalityVerdict};
use crate::gallery::{self, DatasetManifest, EnrollmentStore, Size, Split};
use crate::matching::{Decision, DecisionPolicy, Reason};
use crate::pipeline::{self, EvaluationSettings, ModalityMatcher, ProbeSet, ScoredSample};
use crate::sample::{ImageSample, Modality};

pub(super) fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Train(a) => train(a, out),
        Command::Enroll(a) => enroll(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Identify(a) => identify(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Sweep(a) => sweep(a, out),
    }
}

fn init_threads(rc: &RunConfig) {
    #[cfg(feature = "parallel")]
    if let Some(n) = rc.threads {
        // Fails only if the global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = rc;
}

struct SubjectSplit {
    subject_id: String,
    train: [Vec<PathBuf>; 2],
    probe: [Vec<PathBuf>; 2],
}

fn modality_index(m: Modality) -> usize {
    match m {
        Modality::Face => 0,
        Modality::Ear => 1,
    }
}

fn scan(rc: &RunConfig) -> Result<DatasetManifest> {
    let manifest = gallery::scan_dataset(rc.dataset()?)?.with_sizes(rc.face_size, rc.ear_size);
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(manifest)
}

fn split_subjects(manifest: &DatasetManifest, split: Split, seed: Option<u64>) -> Result<Vec<SubjectSplit>> {
    let mut v = Vec::new();
    for s in manifest.complete_subjects() {
        let mut train: [Vec<PathBuf>; 2] = Default::default();
        let mut probe: [Vec<PathBuf>; 2] = Default::default();
        for m in Modality::ALL {
            let (t, p) = split.apply(s.paths(m), &s.subject_id, m, seed)?;
            train[modality_index(m)] = t;
            probe[modality_index(m)] = p;
        }
        v.push(SubjectSplit {
            subject_id: s.subject_id.clone(),
            train,
            probe,
        });
    }
    if v.is_empty() {
        bail!("no subjects in dataset {}", manifest.root.display());
    }
    Ok(v)
}

fn load_all(paths: &[PathBuf], size: Size, m: Modality, subject: Option<&str>) -> Result<Vec<ImageSample>> {
    let samples = Parallelism::default().try_map(paths, |p| gallery::load_image(p, size, m))?;
    Ok(match subject {
        Some(s) => samples.into_iter().map(|x| x.with_subject(s)).collect(),
        None => samples,
    })
}

fn model_size(model: &EigenModel) -> Size {
    Size::new(model.width(), model.height())
}

fn load_models(rc: &RunConfig) -> Result<(EigenModel, EigenModel)> {
    let load = |m: Modality| -> Result<EigenModel> {
        let path = rc.model_path(m)?;
        let model = EigenModel::load(path).with_context(|| format!("loading {m} model"))?;
        if model.modality() != m {
            bail!("{} holds a {} model, expected {m}", path.display(), model.modality());
        }
        Ok(model)
    };
    Ok((load(Modality::Face)?, load(Modality::Ear)?))
}

fn train(args: TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let rc = RunConfig::resolve(&args.common)?;
    init_threads(&rc);
    let manifest = scan(&rc)?;
    let subjects = split_subjects(&manifest, rc.split, rc.seed)?;
    let fraction = args.variance.or(rc.variance).unwrap_or(DEFAULT_VARIANCE_FRACTION);
    let components = match args.components.or(rc.components) {
        Some(cap) => Components::VarianceFractionCapped(fraction, cap),
        None => Components::VarianceFraction(fraction),
    };
    for m in Modality::ALL {
        let mut gallery = Vec::new();
        for s in &subjects {
            gallery.extend(load_all(&s.train[modality_index(m)], rc.size(m), m, Some(&s.subject_id))?);
        }
        let (model, summary) = EigenModel::train_with(&gallery, components, Parallelism::default())
            .with_context(|| format!("training {m} model"))?;
        let path = rc.model_path(m)?;
        model.save(path)?;
        writeln!(
            out,
            "{m}: {} images {}x{}, k = {}, cumulative variance = {:.6}, wrote {}",
            summary.gallery_size,
            model.width(),
            model.height(),
            summary.k,
            summary.retained_fraction,
            path.display()
        )?;
    }
    Ok(0)
}

fn enroll(args: EnrollArgs, out: &mut dyn Write) -> Result<i32> {
    let rc = RunConfig::resolve(&args.common)?;
    init_threads(&rc);
    let (face, ear) = load_models(&rc)?;
    let store_path = rc.store()?;
    if let Some(subject) = &args.subject {
        let mut store = if store_path.exists() {
            EnrollmentStore::load_for(store_path, &face, &ear)?
        } else {
            EnrollmentStore::new()
        };
        let f = load_all(&args.face, model_size(&face), Modality::Face, Some(subject))?;
        let e = load_all(&args.ear, model_size(&ear), Modality::Ear, Some(subject))?;
        let nf = store.enroll(&face, &f, subject)?;
        let ne = store.enroll(&ear, &e, subject)?;
        store.save(store_path)?;
        writeln!(out, "enrolled {subject}: {nf} face, {ne} ear templates")?;
        return Ok(0);
    }
    let manifest = scan(&rc)?;
    let subjects = split_subjects(&manifest, rc.split, rc.seed)?;
    let mut store = EnrollmentStore::new();
    let (mut nf, mut ne) = (0, 0);
    for s in &subjects {
        let f = load_all(&s.train[0], model_size(&face), Modality::Face, Some(&s.subject_id))?;
        let e = load_all(&s.train[1], model_size(&ear), Modality::Ear, Some(&s.subject_id))?;
        nf += store.enroll(&face, &f, &s.subject_id)?;
        ne += store.enroll(&ear, &e, &s.subject_id)?;
    }
    store.save(store_path)?;
    writeln!(
        out,
        "enrolled {} subjects: {nf} face, {ne} ear templates, wrote {}",
        subjects.len(),
        store_path.display()
    )?;
    Ok(0)
}

fn vote_label(d: &Decision) -> &'static str {
    match d.reason {
        Reason::UnderThreshold => "accept",
        Reason::OverThreshold => "reject(over-threshold)",
        Reason::QualityRejected => "reject(quality)",
        Reason::WrongSubject => "reject(wrong-subject)",
    }
}

fn verdict_line(v: &ModalityVerdict, need: usize) -> String {
    format!(
        "{} verdict: {} ({}/{} votes, need {need})",
        v.modality,
        if v.accept { "accept" } else { "reject" },
        v.accepting_votes(),
        v.votes.len()
    )
}

struct Session {
    rc: RunConfig,
    face: EigenModel,
    ear: EigenModel,
    store: EnrollmentStore,
}

impl Session {
    fn open(rc: RunConfig) -> Result<Self> {
        let (face, ear) = load_models(&rc)?;
        let store = EnrollmentStore::load_for(rc.store()?, &face, &ear)?;
        Ok(Session { rc, face, ear, store })
    }

    fn model(&self, m: Modality) -> &EigenModel {
        match m {
            Modality::Face => &self.face,
            Modality::Ear => &self.ear,
        }
    }

    fn matcher(&self, m: Modality) -> Result<ModalityMatcher<'_>> {
        Ok(ModalityMatcher::new(self.model(m), self.store.templates(m), self.rc.min_ncc)?)
    }

    fn score_probes(&self, m: Modality, paths: &[PathBuf]) -> Result<Vec<ScoredSample>> {
        let n = self.rc.fusion.samples_per_modality();
        if paths.len() != n {
            bail!("expected {n} {m} images, got {}", paths.len());
        }
        let samples = load_all(paths, model_size(self.model(m)), m, None)?;
        let matcher = self.matcher(m)?;
        Ok(samples.iter().map(|s| matcher.score(s)).collect::<crate::Result<_>>()?)
    }

    fn fuse(
        &self,
        scored: &[Vec<ScoredSample>; 2],
        claimed: &str,
        protocol: Protocol,
    ) -> Result<FusedDecision> {
        let mut votes: [Vec<Decision>; 2] = Default::default();
        for m in Modality::ALL {
            let policy = DecisionPolicy::new(self.rc.threshold(m)?)?;
            let matcher = self.matcher(m)?;
            votes[modality_index(m)] = scored[modality_index(m)]
                .iter()
                .map(|s| matcher.decide(s, claimed, &policy, protocol))
                .collect::<crate::Result<_>>()?;
        }
        let [f, e] = votes;
        Ok(fusion::fuse_attempt(f, e, &self.rc.fusion)?)
    }
}

fn verify(args: VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let rc = RunConfig::resolve(&args.common)?;
    init_threads(&rc);
    // Thresholds are required before any file is touched.
    rc.threshold(Modality::Face)?;
    rc.threshold(Modality::Ear)?;
    let session = Session::open(rc)?;
    let scored = [
        session.score_probes(Modality::Face, &args.face)?,
        session.score_probes(Modality::Ear, &args.ear)?,
    ];
    let decision = session.fuse(&scored, &args.claim, Protocol::Verification)?;

    writeln!(out, "claimed subject: {}", args.claim)?;
    let need = session.rc.fusion.majority_min();
    for (m, verdict) in [(Modality::Face, &decision.face), (Modality::Ear, &decision.ear)] {
        for (i, (s, d)) in scored[modality_index(m)].iter().zip(&verdict.votes).enumerate() {
            writeln!(
                out,
                "{m} sample {}: ncc={:.6} quality={} distance={:.6} vote={}",
                i + 1,
                s.quality.ncc,
                if s.quality.passed { "pass" } else { "fail" },
                d.score.distance,
                vote_label(d)
            )?;
        }
        writeln!(out, "{}", verdict_line(verdict, need))?;
    }
    writeln!(out, "fused decision: {}", if decision.accept { "accept" } else { "reject" })?;
    Ok(if decision.accept { 0 } else { 1 })
}

fn identify(args: IdentifyArgs, out: &mut dyn Write) -> Result<i32> {
    let rc = RunConfig::resolve(&args.common)?;
    init_threads(&rc);
    rc.threshold(Modality::Face)?;
    rc.threshold(Modality::Ear)?;
    let session = Session::open(rc)?;
    let scored = [
        session.score_probes(Modality::Face, &args.face)?,
        session.score_probes(Modality::Ear, &args.ear)?,
    ];
    for m in Modality::ALL {
        for (i, s) in scored[modality_index(m)].iter().enumerate() {
            let (subject, d) = s.nearest();
            writeln!(
                out,
                "{m} sample {}: ncc={:.6} quality={} nearest={subject} distance={d:.6}",
                i + 1,
                s.quality.ncc,
                if s.quality.passed { "pass" } else { "fail" },
            )?;
        }
    }
    let mut identified = Vec::new();
    for subject in session.matcher(Modality::Face)?.subjects() {
        if session.fuse(&scored, subject, Protocol::Identification)?.accept {
            identified.push(subject.clone());
        }
    }
    match identified.as_slice() {
        [] => {
            writeln!(out, "identified: none")?;
            Ok(1)
        }
        ids => {
            writeln!(out, "identified: {}", ids.join(","))?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    format_version: u32,
    protocol: Protocol,
    split: String,
    seed: Option<u64>,
    min_ncc: f64,
    samples_per_modality: usize,
    majority_min: usize,
    face: &'a EvaluationReport,
    ear: &'a EvaluationReport,
    fused: &'a EvaluationReport,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<i32> {
    let rc = RunConfig::resolve(&args.common)?;
    init_threads(&rc);
    let session = Session::open(rc)?;
    let rc = &session.rc;
    let manifest = scan(rc)?;
    let subjects = split_subjects(&manifest, rc.split, rc.seed)?;
    let n = rc.fusion.samples_per_modality();
    if rc.split.probe < n {
        bail!("insufficient probes: split {} leaves {} per modality, need {n}", rc.split, rc.split.probe);
    }
    let mut probes = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let mut set = ProbeSet {
            subject_id: s.subject_id.clone(),
            face: Vec::new(),
            ear: Vec::new(),
        };
        for m in Modality::ALL {
            let paths = &s.probe[modality_index(m)][..n];
            let loaded = load_all(paths, model_size(session.model(m)), m, Some(&s.subject_id))?;
            match m {
                Modality::Face => set.face = loaded,
                Modality::Ear => set.ear = loaded,
            }
        }
        probes.push(set);
    }
    let settings = EvaluationSettings {
        protocol: rc.protocol,
        fusion: rc.fusion,
        parallelism: Parallelism::default(),
    };
    let result = pipeline::evaluate(
        &session.matcher(Modality::Face)?,
        &session.matcher(Modality::Ear)?,
        &probes,
        &settings,
    )
    .context("insufficient probes or enrollment for evaluation")?;

    let table = evaluation::render_table(&result.face, &result.ear, &result.fused);
    let report = EvaluationFile {
        format_version: 1,
        protocol: rc.protocol,
        split: rc.split.to_string(),
        seed: rc.seed,
        min_ncc: rc.min_ncc,
        samples_per_modality: rc.fusion.samples_per_modality(),
        majority_min: rc.fusion.majority_min(),
        face: &result.face,
        ear: &result.ear,
        fused: &result.fused,
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, curve) in [("face_curve.csv", &result.face_curve), ("ear_curve.csv", &result.ear_curve)] {
            let mut buf = Vec::new();
            evaluation::write_curve_csv(curve, &mut buf)?;
            write_file(&dir.join(name), &buf)?;
        }
        write_file(&dir.join("report.json"), json.as_bytes())?;
        write_file(&dir.join("report.txt"), table.as_bytes())?;
    }
    writeln!(
        out,
        "protocol: {}, split: {}, subjects: {}, attempts per modality: {} genuine / {} impostor",
        rc.protocol,
        rc.split,
        probes.len(),
        result.fused.counts.genuine_total,
        result.fused.counts.impostor_total
    )?;
    let t = |r: &EvaluationReport| match r.thresholds {
        evaluation::Thresholds::Single(t) => t,
        evaluation::Thresholds::PerModality { face, .. } => face,
    };
    writeln!(out, "face threshold: {}, ear threshold: {}", t(&result.face), t(&result.ear))?;
    write!(out, "{table}")?;
    Ok(0)
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .with_context(|| format!("{}:{}: not a number: {l:?}", path.display(), i + 1))
        })
        .collect()
}

fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let genuine = read_scores(&args.genuine)?;
    let impostor = read_scores(&args.impostor)?;
    let thresholds = if args.thresholds.is_empty() {
        evaluation::candidate_thresholds(&genuine, &impostor)
    } else {
        args.thresholds.clone()
    };
    let reports = evaluation::sweep(&genuine, &impostor, &thresholds)?;
    let best = evaluation::best_threshold(&reports)?;
    let summary = format!(
        "best threshold: {} recognition_rate={} far={} frr={}",
        match best.thresholds {
            evaluation::Thresholds::Single(t) => t,
            evaluation::Thresholds::PerModality { face, .. } => face,
        },
        best.recognition_rate,
        best.far,
        best.frr
    );
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            evaluation::write_curve_csv(&reports, &mut buf)?;
            write_file(path, &buf)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            evaluation::write_curve_csv(&reports, &mut *out)?;
            eprintln!("{summary}");
        }
    }
    Ok(0)
}
