//! Stage orchestration: each stage reads the previous stage's export format,
//! so a full run and a stage-by-stage run produce the same files.
//!
//! Output tree of a full run:
//!
//! ```text
//! <id>.clean.csv, <id>.trials.csv, preprocessed.csv   preprocess
//! codes.csv                                           features
//! networks/networks.csv, networks/<kind>_<id>_<cond>.csv
//! projection_<kind>.csv, layout_<kind>.csv, variance_<kind>.txt,
//! groups_<kind>.csv, group_<kind>_<group>.csv        project
//! stats_<kind>.txt, summary.txt                       stats
//! <kind>_<group>.svg, points_<kind>.svg               render
//! manifest.txt                                        always, last
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::codes::{Condition, UnitId};
use crate::dsp::{self, preprocess, segment_epochs};
use crate::ingest::{self, read_eeg_csv, read_trial_log, write_eeg_csv, write_trial_log, PipelineConfig, SignalRecording, TrialLog};
use crate::network::{
    accumulate_directed_runs, accumulate_symmetric, normalize, read_networks, write_networks, NetworkAccumulator,
    NetworkError, NetworkKind,
};
use crate::projection::{
    self, fit_projection, group_statistics, place_nodes, GroupLabel, GroupNetwork, NodeLayout, ProjectionModel,
};
use crate::render::{render_directed, render_scatter, render_symmetric, RenderSpec, SvgDocument};
use crate::spectral::{attach_labels, encode_epochs, read_code_table, write_code_table, CodeVector, Labelled};
use crate::stats::{welch_t_test_on, StatsError, TestReport};
use crate::synth::COHORT_HEADER;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Preprocess,
    Features,
    Network,
    Project,
    Stats,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Preprocess,
        Stage::Features,
        Stage::Network,
        Stage::Project,
        Stage::Stats,
        Stage::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Network => "network",
            Stage::Project => "project",
            Stage::Stats => "stats",
            Stage::Render => "render",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "preprocess" => Ok(Stage::Preprocess),
            "features" | "encode" => Ok(Stage::Features),
            "network" | "networks" => Ok(Stage::Network),
            "project" | "projection" => Ok(Stage::Project),
            "stats" => Ok(Stage::Stats),
            "render" => Ok(Stage::Render),
            other => Err(format!(
                "unknown stage `{other}` (expected one of preprocess, features, network, project, stats, render)"
            )),
        }
    }
}

/// Parses a comma-separated stage list.
pub fn parse_stages(list: &str) -> Result<BTreeSet<Stage>, String> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// A stage failure, naming the stage and the participant or file involved.
#[derive(Debug, thiserror::Error)]
pub struct StageError {
    pub stage: Stage,
    pub subject: Option<String>,
    #[source]
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(s) => write!(f, "stage `{}` failed for {s}: {}", self.stage, self.source),
            None => write!(f, "stage `{}` failed: {}", self.stage, self.source),
        }
    }
}

impl StageError {
    pub fn new(stage: Stage, subject: Option<String>, source: impl Into<Error>) -> Self {
        StageError {
            stage,
            subject,
            source: source.into(),
        }
    }

    /// 2 for numerical failures, 1 for everything else (inputs, I/O).
    pub fn exit_code(&self) -> i32 {
        if self.source.is_numerical() {
            2
        } else {
            1
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// inputs

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantInput {
    pub id: String,
    pub eeg: PathBuf,
    pub trials: PathBuf,
}

/// Reads a cohort manifest `participant,eeg,trials`; relative paths are
/// resolved against the manifest's directory.
pub fn read_cohort_manifest(path: &Path) -> Result<Vec<ParticipantInput>, Error> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found.to_ascii_lowercase() != COHORT_HEADER {
        return Err(Error::Spectral(crate::spectral::SpectralError::SchemaMismatch {
            expected: COHORT_HEADER.into(),
            found,
        }));
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let id = rec[0].to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(io_err(path, format!("empty or duplicate participant `{id}`")));
        }
        out.push(ParticipantInput {
            id,
            eeg: dir.join(&rec[1]),
            trials: dir.join(&rec[2]),
        });
    }
    Ok(out)
}

fn write_cohort_manifest(path: &Path, rows: &[(String, String, String)]) -> Result<(), Error> {
    let mut s = format!("{COHORT_HEADER}\n");
    for (id, eeg, trials) in rows {
        s.push_str(&format!("{id},{eeg},{trials}\n"));
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// per-participant stages

/// Everything the preprocessing stage produces for one participant.
#[derive(Debug, Clone)]
pub struct CleanedParticipant {
    pub id: String,
    /// Concatenated cleaned epochs on the original time base.
    pub cleaned: SignalRecording,
    pub trials: TrialLog,
    pub warnings: Vec<String>,
    /// Re-referenced and filtered signals, kept for debug dumps.
    pub intermediate: Option<(SignalRecording, SignalRecording)>,
}

pub fn preprocess_participant(input: &ParticipantInput, config: &PipelineConfig, keep_intermediate: bool) -> Result<CleanedParticipant, StageError> {
    let fail = |e: Error| StageError::new(Stage::Preprocess, Some(input.id.clone()), e);
    let (rec, report) = read_eeg_csv(&input.eeg, config.sample_rate).map_err(|e| fail(e.into()))?;
    let trials = read_trial_log(&input.trials).map_err(|e| fail(e.into()))?;
    let mut warnings = Vec::new();
    if report.dropped_rows > 0 {
        warnings.push(format!("{}: {} unparseable EEG rows dropped", input.id, report.dropped_rows));
    }
    if !report.gaps.is_empty() {
        warnings.push(format!("{}: {} timestamp gaps", input.id, report.gaps.len()));
    }
    let pre = preprocess(&rec, config).map_err(|e| fail(e.into()))?;
    if let Some(w) = &pre.ica.warning {
        warnings.push(format!("{}: {w}", input.id));
    }
    let cleaned = cleaned_recording(&rec, &pre.epochs).map_err(|e| fail(e.into()))?;
    Ok(CleanedParticipant {
        id: input.id.clone(),
        cleaned,
        trials,
        warnings,
        intermediate: keep_intermediate.then(|| (pre.rereferenced, pre.filtered)),
    })
}

/// Reads an already cleaned recording and its trial log (the exports of the
/// preprocess stage) without further processing.
pub fn load_cleaned(input: &ParticipantInput, config: &PipelineConfig) -> Result<CleanedParticipant, StageError> {
    let fail = |e: ingest::IngestError| StageError::new(Stage::Features, Some(input.id.clone()), e);
    let (cleaned, report) = read_eeg_csv(&input.eeg, config.sample_rate).map_err(fail)?;
    let trials = read_trial_log(&input.trials).map_err(fail)?;
    let mut warnings = Vec::new();
    if report.dropped_rows > 0 {
        warnings.push(format!("{}: {} unparseable EEG rows dropped", input.id, report.dropped_rows));
    }
    Ok(CleanedParticipant {
        id: input.id.clone(),
        cleaned,
        trials,
        warnings,
        intermediate: None,
    })
}

fn cleaned_recording(rec: &SignalRecording, epochs: &[dsp::Epoch]) -> Result<SignalRecording, dsp::DspError> {
    let samples = dsp::concat_epochs(epochs)?;
    let start = epochs.first().map_or(rec.start_time, |e| e.time_span.0);
    SignalRecording::new(rec.channels.clone(), rec.sample_rate, samples, start)
        .map_err(|_| dsp::DspError::RaggedEpochs)
}

/// Epochs a cleaned recording, encodes band presence and attaches labels
/// from the trial log shifted by `trial_offset`.
pub fn encode_participant(id: &str, cleaned: &SignalRecording, trials: &TrialLog, config: &PipelineConfig) -> Result<Labelled, StageError> {
    let fail = |e: Error| StageError::new(Stage::Features, Some(id.to_string()), e);
    let epochs = segment_epochs(cleaned, config.epoch_length).map_err(|e| fail(e.into()))?;
    let presence = encode_epochs(&epochs, cleaned.sample_rate, config).map_err(|e| fail(e.into()))?;
    let trials = trials.shifted(config.trial_offset);
    attach_labels(id, &epochs, &presence, &trials).map_err(|e| fail(e.into()))
}

// ---------------------------------------------------------------------------
// cohort stages

/// Symmetric and directed accumulators for every unit, ordered by
/// participant, condition, then kind. Units too short for the directed window
/// are skipped with a warning.
pub fn build_networks(vectors: &[CodeVector], window: usize) -> Result<(Vec<NetworkAccumulator>, Vec<String>), StageError> {
    let mut units: BTreeMap<UnitId, Vec<CodeVector>> = BTreeMap::new();
    for v in vectors {
        units.entry(v.unit.clone()).or_default().push(v.clone());
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (unit, mut vs) in units {
        let fail = |e: NetworkError| StageError::new(Stage::Network, Some(unit.to_string()), e);
        vs.sort_by_key(|v| v.epoch_index);
        out.push(accumulate_symmetric(&vs).map_err(fail)?);
        match accumulate_directed_runs(&vs, window) {
            Ok(acc) => out.push(acc),
            Err(NetworkError::TooFewEpochs { .. }) => {
                warnings.push(format!("{unit}: fewer than {window} consecutive epochs; no directed network"));
            }
            Err(e) => return Err(fail(e)),
        }
    }
    Ok((out, warnings))
}

/// Projection, node layout and group networks of one kind.
#[derive(Debug, Clone)]
pub struct KindAnalysis {
    pub kind: NetworkKind,
    pub model: ProjectionModel,
    pub layout: NodeLayout,
    pub groups: Vec<GroupNetwork>,
}

pub fn analyze_kind(accs: &[NetworkAccumulator], kind: NetworkKind, config: &PipelineConfig) -> Result<KindAnalysis, StageError> {
    let vectors = accs
        .iter()
        .filter(|a| a.kind == kind)
        .map(|a| {
            normalize(a, config.normalization_mode)
                .map_err(|e| StageError::new(Stage::Project, Some(a.unit.to_string()), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fail = |e: projection::ProjectionError| StageError::new(Stage::Project, Some(kind.to_string()), e);
    let model = fit_projection(&vectors).map_err(fail)?;
    let layout = place_nodes(&model, &vectors).map_err(fail)?;
    let groups = group_statistics(&model, &vectors, [Condition::Feedback, Condition::NoFeedback]).map_err(fail)?;
    Ok(KindAnalysis {
        kind,
        model,
        layout,
        groups,
    })
}

fn write_analysis(dir: &Path, a: &KindAnalysis) -> Result<Vec<String>, StageError> {
    let fail = |e: projection::ProjectionError| StageError::new(Stage::Project, Some(a.kind.to_string()), e);
    let k = a.kind;
    projection::write_projection(&dir.join(format!("projection_{k}.csv")), &a.model).map_err(fail)?;
    projection::write_layout(&dir.join(format!("layout_{k}.csv")), &a.layout).map_err(fail)?;
    let variance = projection::variance_report(&a.model, Some(&a.layout));
    let vpath = dir.join(format!("variance_{k}.txt"));
    fs::write(&vpath, variance).map_err(|e| StageError::new(Stage::Project, None, io_err(&vpath, e)))?;
    projection::write_groups(dir, &a.groups).map_err(fail)?;
    let mut files = vec![
        format!("projection_{k}.csv"),
        format!("layout_{k}.csv"),
        format!("variance_{k}.txt"),
        format!("groups_{k}.csv"),
    ];
    files.extend(a.groups.iter().map(|g| projection::group_file_name(k, g.label)));
    Ok(files)
}

/// Welch tests of one projection on both axes. Undefined tests (e.g. zero
/// variance in both groups) are kept as errors and reported as such.
#[derive(Debug, Clone)]
pub struct KindStats {
    pub kind: NetworkKind,
    pub variance: [f64; 2],
    pub tests: Vec<(String, Result<TestReport, StatsError>)>,
}

pub fn test_kind(kind: NetworkKind, points: &[(UnitId, [f64; 2])], variance: [f64; 2], alpha: f64) -> KindStats {
    let tests = (0..2)
        .map(|d| {
            let dim = format!("SVD{}", d + 1);
            let pick = |c: Condition| -> Vec<f64> {
                points.iter().filter(|(u, _)| u.condition == c).map(|(_, p)| p[d]).collect()
            };
            let r = welch_t_test_on(&dim, &pick(Condition::Feedback), &pick(Condition::NoFeedback), alpha);
            (dim, r)
        })
        .collect();
    KindStats { kind, variance, tests }
}

fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Plain-text table followed by a machine-readable `key=value` block.
pub fn stats_report(s: &KindStats) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} projection: feedback vs no_feedback (Welch two-sample t-test, two-sided)\n",
        s.kind.name().to_uppercase()
    ));
    out.push_str(&format!(
        "variance explained: SVD1 {}%, SVD2 {}%\n\n",
        fixed(100.0 * s.variance[0], 1),
        fixed(100.0 * s.variance[1], 1)
    ));
    out.push_str("axis  group        mean       sd         n    t          df        p          d\n");
    for (dim, r) in &s.tests {
        match r {
            Ok(r) => {
                for (k, (g, label)) in r.groups.iter().zip(["feedback", "no_feedback"]).enumerate() {
                    let tail = if k == 0 {
                        format!(
                            "  {:<10} {:<9} {:<10} {}",
                            fixed(r.t_statistic, 4),
                            fixed(r.degrees_of_freedom, 2),
                            fixed(r.p_value, 6),
                            r.cohens_d.map_or("n/a".into(), |d| fixed(d, 4))
                        )
                    } else {
                        String::new()
                    };
                    out.push_str(&format!(
                        "{:<5} {:<12} {:<10} {:<10} {:<4}{}\n",
                        if k == 0 { dim.as_str() } else { "" },
                        label,
                        fixed(g.mean, 4),
                        fixed(g.sd, 4),
                        g.n,
                        tail
                    ));
                }
            }
            Err(e) => out.push_str(&format!("{dim:<5} test undefined: {e}\n")),
        }
    }
    out.push('\n');
    let kv = |out: &mut String, k: String, v: String| out.push_str(&format!("{k}={v}\n"));
    kv(&mut out, "kind".into(), s.kind.to_string());
    kv(&mut out, "svd1.variance".into(), crate::codes::fmt_f64(s.variance[0]));
    kv(&mut out, "svd2.variance".into(), crate::codes::fmt_f64(s.variance[1]));
    for (dim, r) in &s.tests {
        let d = dim.to_ascii_lowercase();
        match r {
            Ok(r) => {
                for (g, label) in r.groups.iter().zip(["feedback", "no_feedback"]) {
                    kv(&mut out, format!("{d}.{label}.mean"), crate::codes::fmt_f64(g.mean));
                    kv(&mut out, format!("{d}.{label}.sd"), crate::codes::fmt_f64(g.sd));
                    kv(&mut out, format!("{d}.{label}.n"), g.n.to_string());
                }
                kv(&mut out, format!("{d}.t"), crate::codes::fmt_f64(r.t_statistic));
                kv(&mut out, format!("{d}.df"), crate::codes::fmt_f64(r.degrees_of_freedom));
                kv(&mut out, format!("{d}.p"), crate::codes::fmt_f64(r.p_value));
                kv(
                    &mut out,
                    format!("{d}.cohens_d"),
                    r.cohens_d.map_or("nan".into(), crate::codes::fmt_f64),
                );
                kv(&mut out, format!("{d}.significant"), r.significant.to_string());
            }
            Err(e) => kv(&mut out, format!("{d}.error"), e.to_string()),
        }
    }
    out
}

/// Human-readable summary over both analyses: variance explained and, per
/// axis, mean/SD/N per condition with p and d.
pub fn summary_text(all: &[KindStats]) -> String {
    let mut out = String::new();
    for s in all {
        let name = match s.kind {
            NetworkKind::Symmetric => "NENA (symmetric)",
            NetworkKind::Directed => "NONA (directed)",
        };
        out.push_str(&format!(
            "{name}: SVD1 explains {}% and SVD2 {}% of the variance.\n",
            fixed(100.0 * s.variance[0], 1),
            fixed(100.0 * s.variance[1], 1)
        ));
        for (dim, r) in &s.tests {
            match r {
                Ok(r) => {
                    let [a, b] = r.groups;
                    out.push_str(&format!(
                        "  {dim}: feedback (mean = {}, SD = {}, N = {}) vs no_feedback (mean = {}, SD = {}, N = {}); t({}) = {}, p {}, Cohen's d = {}{}\n",
                        fixed(a.mean, 2),
                        fixed(a.sd, 2),
                        a.n,
                        fixed(b.mean, 2),
                        fixed(b.sd, 2),
                        b.n,
                        fixed(r.degrees_of_freedom, 2),
                        fixed(r.t_statistic, 2),
                        if r.p_value < 1e-4 { "< 0.0001".to_string() } else { format!("= {}", fixed(r.p_value, 4)) },
                        r.cohens_d.map_or("n/a".into(), |d| fixed(d, 2)),
                        if r.significant {
                            format!(" (significant at alpha = {})", r.alpha)
                        } else {
                            String::new()
                        }
                    ));
                }
                Err(e) => out.push_str(&format!("  {dim}: test undefined ({e})\n")),
            }
        }
    }
    out
}

/// File name of a network figure, e.g. `nena_feedback.svg` or `nona_diff.svg`.
pub fn figure_name(kind: NetworkKind, label: GroupLabel) -> String {
    format!("{kind}_{label}.svg")
}

/// Renders the three network figures and the scatter plot of one kind from
/// exported files in `dir`.
pub fn render_from_exports(dir: &Path, kind: NetworkKind, spec: &RenderSpec) -> Result<Vec<(String, SvgDocument)>, StageError> {
    let fail = |e: Error| StageError::new(Stage::Render, Some(kind.to_string()), e);
    let layout = projection::read_layout(&dir.join(format!("layout_{kind}.csv"))).map_err(|e| fail(e.into()))?;
    let groups = projection::read_groups(dir, kind).map_err(|e| fail(e.into()))?;
    let points = projection::read_projection(&dir.join(format!("projection_{kind}.csv"))).map_err(|e| fail(e.into()))?;
    let variance = projection::read_variance(&dir.join(format!("variance_{kind}.txt"))).map_err(|e| fail(e.into()))?;
    let model = ProjectionModel::from_points(kind, points, variance);
    render_kind(kind, &layout, &groups, &model, spec).map_err(fail)
}

pub fn render_kind(
    kind: NetworkKind,
    layout: &NodeLayout,
    groups: &[GroupNetwork],
    model: &ProjectionModel,
    spec: &RenderSpec,
) -> Result<Vec<(String, SvgDocument)>, Error> {
    let mut out = Vec::new();
    for g in groups {
        let doc = match kind {
            NetworkKind::Symmetric => render_symmetric(layout, g, spec)?,
            NetworkKind::Directed => render_directed(layout, g, spec)?,
        };
        out.push((figure_name(kind, g.label), doc));
    }
    out.push((format!("points_{kind}.svg"), render_scatter(model, groups, spec)?));
    Ok(out)
}

// ---------------------------------------------------------------------------
// full runs

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub config: PipelineConfig,
    pub config_path: Option<PathBuf>,
    pub stages: BTreeSet<Stage>,
    /// Worker threads for per-participant stages; 0 uses all cores.
    pub jobs: usize,
    /// Also write `<id>.reref.csv` and `<id>.filt.csv`.
    pub dump_intermediate: bool,
    /// Skip participants that fail preprocessing or encoding instead of
    /// aborting (the run then ends as partial).
    pub keep_going: bool,
    pub render: RenderSpec,
    pub alpha: f64,
    /// Network kinds to build, project, test and draw.
    pub kinds: Vec<NetworkKind>,
    /// Code table for the network stage when features are not computed in
    /// the same run; defaults to `<out>/codes.csv`.
    pub codes: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>, config: PipelineConfig) -> Self {
        RunOptions {
            out: out.into(),
            config,
            config_path: None,
            stages: Stage::ALL.into_iter().collect(),
            jobs: 0,
            dump_intermediate: false,
            keep_going: false,
            render: RenderSpec::default(),
            alpha: 0.05,
            kinds: vec![NetworkKind::Symmetric, NetworkKind::Directed],
            codes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    /// Finished, but some participants were skipped.
    Partial,
    Failed,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Partial => "partial",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub status: RunStatus,
    pub inputs: Vec<ParticipantInput>,
    pub config_path: Option<PathBuf>,
    /// Effective configuration after flags, file and defaults are combined.
    pub settings: String,
    pub stages: Vec<Stage>,
    /// Wall-clock milliseconds per executed stage.
    pub timings: Vec<(Stage, f64)>,
    pub warnings: Vec<String>,
    /// Files written, relative to the output directory.
    pub outputs: BTreeSet<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("status={}\n", self.status.name()));
        s.push_str(&format!(
            "config={}\n",
            self.config_path.as_ref().map_or("(defaults)".into(), |p| p.display().to_string())
        ));
        for line in self.settings.lines() {
            if let Some((k, v)) = line.split_once('=') {
                s.push_str(&format!("setting.{}={}\n", k.trim(), v.trim()));
            }
        }
        s.push_str(&format!(
            "stages={}\n",
            self.stages.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
        ));
        for i in &self.inputs {
            s.push_str(&format!("input.{}.eeg={}\n", i.id, i.eeg.display()));
            s.push_str(&format!("input.{}.trials={}\n", i.id, i.trials.display()));
        }
        for o in &self.outputs {
            s.push_str(&format!("output={o}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning={w}\n"));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("error={e}\n"));
        }
        for (stage, ms) in &self.timings {
            s.push_str(&format!("timing.{stage}_ms={ms:.3}\n"));
        }
        s
    }
}

/// A failed run: the error plus the manifest of what was written before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: StageError,
    pub manifest: RunManifest,
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }
}

struct Runner<'a> {
    opts: &'a RunOptions,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn wants(&self, stage: Stage) -> bool {
        self.opts.stages.contains(&stage)
    }

    fn write(&mut self, stage: Stage, rel: &str, bytes: &[u8]) -> Result<(), StageError> {
        let path = self.opts.out.join(rel);
        fs::write(&path, bytes).map_err(|e| StageError::new(stage, None, io_err(&path, e)))?;
        self.manifest.outputs.insert(rel.to_string());
        Ok(())
    }

    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T, StageError>) -> Result<T, StageError> {
        let t0 = Instant::now();
        let r = f(self);
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        match self.manifest.timings.iter_mut().find(|(s, _)| *s == stage) {
            Some((_, total)) => *total += ms,
            None => self.manifest.timings.push((stage, ms)),
        }
        r
    }
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// Runs the selected stages over a cohort. Each stage consumes the previous
/// stage's exports from the output directory. The manifest is written last;
/// on failure a `.partial` marker with the error is left next to it.
pub fn run_all(inputs: &[ParticipantInput], opts: &RunOptions) -> Result<RunManifest, RunFailure> {
    let manifest = RunManifest {
        status: RunStatus::Complete,
        inputs: inputs.to_vec(),
        config_path: opts.config_path.clone(),
        settings: opts.config.to_text(),
        stages: opts.stages.iter().copied().collect(),
        timings: Vec::new(),
        warnings: Vec::new(),
        outputs: BTreeSet::new(),
        error: None,
    };
    let mut runner = Runner { opts, manifest };
    let result = run_stages(&mut runner, inputs);
    let mut manifest = runner.manifest;
    let marker = opts.out.join(".partial");
    let outcome = match result {
        Ok(()) => {
            if manifest.status == RunStatus::Partial {
                let _ = fs::write(&marker, manifest.warnings.join("\n") + "\n");
            } else if marker.exists() {
                let _ = fs::remove_file(&marker);
            }
            Ok(())
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    };
    let _ = fs::create_dir_all(&opts.out);
    let _ = fs::write(opts.out.join("manifest.txt"), manifest.to_text());
    match outcome {
        Ok(()) => Ok(manifest),
        Err(error) => Err(RunFailure { error, manifest }),
    }
}

fn run_stages(r: &mut Runner, inputs: &[ParticipantInput]) -> Result<(), StageError> {
    let opts = r.opts;
    let out = &opts.out;
    opts.config
        .validate()
        .map_err(|e| StageError::new(Stage::Preprocess, None, e))?;
    fs::create_dir_all(out).map_err(|e| StageError::new(Stage::Preprocess, None, io_err(out, e)))?;
    let config = &opts.config;

    // preprocess + features run per participant in parallel. Without the
    // preprocess stage the inputs are taken to be cleaned recordings already
    // (e.g. the `preprocessed.csv` manifest of an earlier run).
    let mut vectors: Option<Vec<CodeVector>> = None;
    if r.wants(Stage::Preprocess) || r.wants(Stage::Features) {
        let first = if r.wants(Stage::Preprocess) { Stage::Preprocess } else { Stage::Features };
        let cleaned: Vec<Result<CleanedParticipant, StageError>> = r.timed(first, |r| {
            let preprocessing = r.wants(Stage::Preprocess);
            Ok(pool(opts.jobs).install(|| {
                inputs
                    .par_iter()
                    .map(|i| {
                        if preprocessing {
                            preprocess_participant(i, config, opts.dump_intermediate)
                        } else {
                            load_cleaned(i, config)
                        }
                    })
                    .collect()
            }))
        })?;
        let mut kept = Vec::new();
        for c in cleaned {
            match c {
                Ok(c) => {
                    r.manifest.warnings.extend(c.warnings.iter().cloned());
                    kept.push(c);
                }
                Err(e) if opts.keep_going => {
                    r.manifest.status = RunStatus::Partial;
                    r.manifest.warnings.push(format!("skipped: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        if r.wants(Stage::Preprocess) {
            r.timed(Stage::Preprocess, |r| write_cleaned(r, &kept))?;
        }
        if r.wants(Stage::Features) {
            let all = r.timed(Stage::Features, |r| {
                let labelled: Vec<Result<Labelled, StageError>> = pool(opts.jobs).install(|| {
                    kept.par_iter()
                        .map(|c| encode_participant(&c.id, &c.cleaned, &c.trials, config))
                        .collect()
                });
                let mut all = Vec::new();
                for (c, l) in kept.iter().zip(labelled) {
                    match l {
                        Ok(l) => {
                            if l.dropped > 0 {
                                r.manifest
                                    .warnings
                                    .push(format!("{}: {} epochs outside every trial dropped", c.id, l.dropped));
                            }
                            all.extend(l.vectors);
                        }
                        Err(e) if opts.keep_going => {
                            r.manifest.status = RunStatus::Partial;
                            r.manifest.warnings.push(format!("skipped: {e}"));
                        }
                        Err(e) => return Err(e),
                    }
                }
                let path = out.join("codes.csv");
                write_code_table(&path, &all).map_err(|e| StageError::new(Stage::Features, None, e))?;
                r.manifest.outputs.insert("codes.csv".into());
                Ok(all)
            })?;
            vectors = Some(all);
        }
    }

    if r.wants(Stage::Network) {
        r.timed(Stage::Network, |r| {
            let vs = match vectors.take() {
                Some(v) => v,
                None => {
                    let path = opts.codes.clone().unwrap_or_else(|| out.join("codes.csv"));
                    read_code_table(&path)
                        .map_err(|e| StageError::new(Stage::Network, Some(path.display().to_string()), e))?
                }
            };
            network_stage(r, &vs, config.nona_window)
        })?;
    }
    if r.wants(Stage::Project) {
        r.timed(Stage::Project, project_stage)?;
    }
    if r.wants(Stage::Stats) {
        r.timed(Stage::Stats, stats_stage)?;
    }
    if r.wants(Stage::Render) {
        r.timed(Stage::Render, render_stage)?;
    }
    Ok(())
}

fn write_cleaned(r: &mut Runner, kept: &[CleanedParticipant]) -> Result<(), StageError> {
    let out = &r.opts.out;
    let mut rows = Vec::new();
    for c in kept {
        let fail = |e: ingest::IngestError| StageError::new(Stage::Preprocess, Some(c.id.clone()), e);
        let eeg = format!("{}.clean.csv", c.id);
        let trials = format!("{}.trials.csv", c.id);
        write_eeg_csv(out.join(&eeg), &c.cleaned).map_err(fail)?;
        write_trial_log(out.join(&trials), &c.trials).map_err(fail)?;
        if let Some((reref, filt)) = &c.intermediate {
            for (suffix, rec) in [("reref", reref), ("filt", filt)] {
                let rel = format!("{}.{suffix}.csv", c.id);
                write_eeg_csv(out.join(&rel), rec).map_err(fail)?;
                r.manifest.outputs.insert(rel);
            }
        }
        r.manifest.outputs.insert(eeg.clone());
        r.manifest.outputs.insert(trials.clone());
        rows.push((c.id.clone(), eeg, trials));
    }
    write_cohort_manifest(&out.join("preprocessed.csv"), &rows).map_err(|e| StageError::new(Stage::Preprocess, None, e))?;
    r.manifest.outputs.insert("preprocessed.csv".into());
    Ok(())
}

fn network_stage(r: &mut Runner, vectors: &[CodeVector], window: usize) -> Result<(), StageError> {
    let (mut accs, warnings) = build_networks(vectors, window)?;
    accs.retain(|a| r.opts.kinds.contains(&a.kind));
    r.manifest.warnings.extend(warnings);
    let dir = r.opts.out.join("networks");
    fs::create_dir_all(&dir).map_err(|e| StageError::new(Stage::Network, None, io_err(&dir, e)))?;
    write_networks(&dir, &accs).map_err(|e| StageError::new(Stage::Network, None, e))?;
    r.manifest.outputs.insert("networks/networks.csv".into());
    for a in &accs {
        r.manifest
            .outputs
            .insert(format!("networks/{}", crate::network::network_file_name(a)));
    }
    Ok(())
}

fn project_stage(r: &mut Runner) -> Result<(), StageError> {
    let manifest = r.opts.out.join("networks").join("networks.csv");
    let accs = read_networks(&manifest).map_err(|e| StageError::new(Stage::Project, Some(manifest.display().to_string()), e))?;
    for kind in r.opts.kinds.clone() {
        let a = analyze_kind(&accs, kind, &r.opts.config)?;
        for w in a.model.warnings.iter().chain(&a.layout.warnings) {
            r.manifest.warnings.push(format!("{kind}: {w}"));
        }
        let files = write_analysis(&r.opts.out, &a)?;
        r.manifest.outputs.extend(files);
    }
    Ok(())
}

/// Reads the projection exports of both kinds and writes the stats reports
/// and the run summary.
pub fn stats_from_exports(dir: &Path, kinds: &[NetworkKind], alpha: f64) -> Result<Vec<KindStats>, StageError> {
    kinds
        .iter()
        .copied()
        .map(|kind| {
            let fail = |e: projection::ProjectionError| StageError::new(Stage::Stats, Some(kind.to_string()), e);
            let points = projection::read_projection(&dir.join(format!("projection_{kind}.csv"))).map_err(fail)?;
            let variance = projection::read_variance(&dir.join(format!("variance_{kind}.txt"))).map_err(fail)?;
            Ok(test_kind(kind, &points, variance, alpha))
        })
        .collect()
}

fn stats_stage(r: &mut Runner) -> Result<(), StageError> {
    let all = stats_from_exports(&r.opts.out, &r.opts.kinds, r.opts.alpha)?;
    for s in &all {
        for (dim, t) in &s.tests {
            if let Err(e) = t {
                r.manifest.warnings.push(format!("{}: {dim} test undefined: {e}", s.kind));
            }
        }
        r.write(Stage::Stats, &format!("stats_{}.txt", s.kind), stats_report(s).as_bytes())?;
    }
    r.write(Stage::Stats, "summary.txt", summary_text(&all).as_bytes())
}

fn render_stage(r: &mut Runner) -> Result<(), StageError> {
    for kind in r.opts.kinds.clone() {
        let docs = render_from_exports(&r.opts.out, kind, &r.opts.render)?;
        for (name, doc) in docs {
            for w in &doc.warnings {
                r.manifest.warnings.push(format!("{name}: {w}"));
            }
            r.write(Stage::Render, &name, doc.text.as_bytes())?;
        }
    }
    Ok(())
}

/// Convenience for tests and the FFI: runs every stage on a cohort manifest.
pub fn run_manifest(cohort: &Path, opts: &RunOptions) -> Result<RunManifest, RunFailure> {
    let inputs = read_cohort_manifest(cohort).map_err(|e| RunFailure {
        error: StageError::new(Stage::Preprocess, Some(cohort.display().to_string()), e),
        manifest: RunManifest {
            status: RunStatus::Failed,
            inputs: Vec::new(),
            config_path: opts.config_path.clone(),
            settings: opts.config.to_text(),
            stages: opts.stages.iter().copied().collect(),
            timings: Vec::new(),
            warnings: Vec::new(),
            outputs: BTreeSet::new(),
            error: None,
        },
    })?;
    run_all(&inputs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_parsing() {
        let s = parse_stages("preprocess, encode,render").unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![Stage::Preprocess, Stage::Features, Stage::Render]);
        assert!(parse_stages("preprocess,bogus").is_err());
    }

    #[test]
    fn manifest_text_is_stable() {
        let m = RunManifest {
            status: RunStatus::Complete,
            inputs: vec![ParticipantInput {
                id: "P01".into(),
                eeg: "a.csv".into(),
                trials: "b.csv".into(),
            }],
            config_path: None,
            settings: String::new(),
            stages: vec![Stage::Preprocess, Stage::Features],
            timings: vec![(Stage::Preprocess, 1.5)],
            warnings: vec!["w".into()],
            outputs: ["codes.csv".to_string()].into_iter().collect(),
            error: None,
        };
        let t = m.to_text();
        assert!(t.starts_with("status=complete\nconfig=(defaults)\nstages=preprocess,features\n"));
        assert!(t.contains("input.P01.eeg=a.csv\n"));
        assert!(t.ends_with("timing.preprocess_ms=1.500\n"));
    }

    #[test]
    fn fixed_format_has_no_negative_zero() {
        assert_eq!(fixed(-0.00001, 2), "0.00");
        assert_eq!(fixed(-1.234, 2), "-1.23");
    }
}
