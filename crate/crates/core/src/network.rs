//! Per-unit co-occurrence accumulation.
//!
//! Symmetric (NENA): every unordered pair of distinct codes active in the same
//! epoch gains one count on both `(i, j)` and `(j, i)`.
//!
//! Directed (NONA): with window `L`, the ground set is every code active in the
//! previous `L − 1` epochs and the response set is the codes active in the
//! current epoch; each `(ground, response)` pair gains one count, including
//! self-connections. The first `L − 1` epochs only serve as ground.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codes::{fmt_f64, Code, Condition, UnitId, CODE_COUNT};
use crate::spectral::CodeVector;

pub type CountMatrix = [[u64; CODE_COUNT]; CODE_COUNT];
pub type WeightMatrix = [[f64; CODE_COUNT]; CODE_COUNT];

/// Length of the flattened vector of a symmetric network (upper triangle).
pub const SYMMETRIC_LEN: usize = CODE_COUNT * (CODE_COUNT - 1) / 2;
/// Length of the flattened vector of a directed network (full matrix).
pub const DIRECTED_LEN: usize = CODE_COUNT * CODE_COUNT;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("code vectors belong to more than one unit ({0} and {1})")]
    MixedUnits(String, String),
    #[error("no code vectors")]
    Empty,
    #[error("need at least {window} epochs for window {window}, got {got}")]
    TooFewEpochs { window: usize, got: usize },
    #[error("window must be at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("normalization denominator is zero")]
    ZeroDenominator,
    #[error("cannot merge networks of different unit or kind")]
    MergeMismatch,
    #[error("vector length {got} does not match kind {kind} ({expected})")]
    Length { kind: NetworkKind, expected: usize, got: usize },
    #[error("network file {file}: {message}")]
    Parse { file: String, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetworkKind {
    Symmetric,
    Directed,
}

impl NetworkKind {
    /// Short name used in file names and the manifest.
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Symmetric => "nena",
            NetworkKind::Directed => "nona",
        }
    }

    pub fn vector_len(self) -> usize {
        match self {
            NetworkKind::Symmetric => SYMMETRIC_LEN,
            NetworkKind::Directed => DIRECTED_LEN,
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetworkKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nena" | "symmetric" => Ok(NetworkKind::Symmetric),
            "nona" | "directed" => Ok(NetworkKind::Directed),
            other => Err(format!("unknown network kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Divide by the number of epochs (symmetric) or windows (directed).
    EpochCount,
    /// Divide by the sum of the flattened entries.
    EntrySum,
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizationMode::EpochCount => "epoch-count",
            NormalizationMode::EntrySum => "entry-sum",
        })
    }
}

impl FromStr for NormalizationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epoch-count" | "epoch_count" | "window-count" => Ok(NormalizationMode::EpochCount),
            "entry-sum" | "entry_sum" => Ok(NormalizationMode::EntrySum),
            other => Err(format!("unknown normalization mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkAccumulator {
    pub kind: NetworkKind,
    pub unit: UnitId,
    pub weights: CountMatrix,
    /// Epochs (symmetric) or windows (directed) processed.
    pub update_count: u64,
}

impl NetworkAccumulator {
    pub fn new(kind: NetworkKind, unit: UnitId) -> Self {
        NetworkAccumulator {
            kind,
            unit,
            weights: [[0; CODE_COUNT]; CODE_COUNT],
            update_count: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().flatten().sum()
    }

    /// Adds another accumulator of the same unit and kind.
    pub fn merge(&mut self, other: &NetworkAccumulator) -> Result<(), NetworkError> {
        if self.kind != other.kind || self.unit != other.unit {
            return Err(NetworkError::MergeMismatch);
        }
        for (a, b) in self.weights.iter_mut().flatten().zip(other.weights.iter().flatten()) {
            *a += b;
        }
        self.update_count += other.update_count;
        Ok(())
    }

    /// Raw counts in flattened order.
    pub fn flatten(&self) -> Vec<f64> {
        let w = self.weights.map(|row| row.map(|v| v as f64));
        flatten(self.kind, &w)
    }
}

fn single_unit(vectors: &[CodeVector]) -> Result<UnitId, NetworkError> {
    let first = vectors.first().ok_or(NetworkError::Empty)?;
    if let Some(other) = vectors.iter().find(|v| v.unit != first.unit) {
        return Err(NetworkError::MixedUnits(first.unit.to_string(), other.unit.to_string()));
    }
    Ok(first.unit.clone())
}

pub fn accumulate_symmetric(vectors: &[CodeVector]) -> Result<NetworkAccumulator, NetworkError> {
    let unit = single_unit(vectors)?;
    let mut acc = NetworkAccumulator::new(NetworkKind::Symmetric, unit);
    for v in vectors {
        let active: Vec<usize> = v.active().map(Code::index).collect();
        for (k, &i) in active.iter().enumerate() {
            for &j in &active[k + 1..] {
                acc.weights[i][j] += 1;
                acc.weights[j][i] += 1;
            }
        }
        acc.update_count += 1;
    }
    Ok(acc)
}

/// Directed accumulation over one uninterrupted, time-ordered sequence.
pub fn accumulate_directed(vectors: &[CodeVector], window: usize) -> Result<NetworkAccumulator, NetworkError> {
    if window < 2 {
        return Err(NetworkError::InvalidWindow(window));
    }
    let unit = single_unit(vectors)?;
    if vectors.len() < window {
        return Err(NetworkError::TooFewEpochs {
            window,
            got: vectors.len(),
        });
    }
    let mut acc = NetworkAccumulator::new(NetworkKind::Directed, unit);
    for t in window - 1..vectors.len() {
        let mut ground = [false; CODE_COUNT];
        for prev in &vectors[t + 1 - window..t] {
            for (g, &on) in ground.iter_mut().zip(&prev.codes) {
                *g |= on;
            }
        }
        for (g, &g_on) in ground.iter().enumerate() {
            if !g_on {
                continue;
            }
            for (r, &r_on) in vectors[t].codes.iter().enumerate() {
                if r_on {
                    acc.weights[g][r] += 1;
                }
            }
        }
        acc.update_count += 1;
    }
    Ok(acc)
}

/// Directed accumulation that restarts the window at every gap in
/// `epoch_index`, so ground sets never reach across epochs that were dropped
/// or belong to another unit. Runs shorter than the window are skipped.
pub fn accumulate_directed_runs(vectors: &[CodeVector], window: usize) -> Result<NetworkAccumulator, NetworkError> {
    if window < 2 {
        return Err(NetworkError::InvalidWindow(window));
    }
    let unit = single_unit(vectors)?;
    let mut acc = NetworkAccumulator::new(NetworkKind::Directed, unit);
    let mut start = 0;
    for end in 1..=vectors.len() {
        let split = end == vectors.len() || vectors[end].epoch_index != vectors[end - 1].epoch_index + 1;
        if split {
            let run = &vectors[start..end];
            if run.len() >= window {
                acc.merge(&accumulate_directed(run, window)?)?;
            }
            start = end;
        }
    }
    if acc.update_count == 0 {
        return Err(NetworkError::TooFewEpochs {
            window,
            got: vectors.len(),
        });
    }
    Ok(acc)
}

/// Flattened, optionally normalized network of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    pub unit: UnitId,
    pub kind: NetworkKind,
    pub values: Vec<f64>,
    /// `None` for raw counts.
    pub normalization: Option<NormalizationMode>,
}

impl UnitVector {
    pub fn new(
        unit: UnitId,
        kind: NetworkKind,
        values: Vec<f64>,
        normalization: Option<NormalizationMode>,
    ) -> Result<Self, NetworkError> {
        if values.len() != kind.vector_len() {
            return Err(NetworkError::Length {
                kind,
                expected: kind.vector_len(),
                got: values.len(),
            });
        }
        Ok(UnitVector {
            unit,
            kind,
            values,
            normalization,
        })
    }

    pub fn matrix(&self) -> WeightMatrix {
        unflatten(self.kind, &self.values).expect("length checked at construction")
    }
}

pub fn normalize(acc: &NetworkAccumulator, mode: NormalizationMode) -> Result<UnitVector, NetworkError> {
    let raw = acc.flatten();
    let denom = match mode {
        NormalizationMode::EpochCount => acc.update_count as f64,
        NormalizationMode::EntrySum => raw.iter().sum(),
    };
    if !(denom > 0.0) {
        return Err(NetworkError::ZeroDenominator);
    }
    Ok(UnitVector {
        unit: acc.unit.clone(),
        kind: acc.kind,
        values: raw.iter().map(|v| v / denom).collect(),
        normalization: Some(mode),
    })
}

/// Upper triangle `(i < j)` row by row for symmetric, full row-major for
/// directed.
pub fn flatten(kind: NetworkKind, m: &WeightMatrix) -> Vec<f64> {
    match kind {
        NetworkKind::Symmetric => (0..CODE_COUNT)
            .flat_map(|i| (i + 1..CODE_COUNT).map(move |j| m[i][j]))
            .collect(),
        NetworkKind::Directed => m.iter().flatten().copied().collect(),
    }
}

pub fn unflatten(kind: NetworkKind, values: &[f64]) -> Result<WeightMatrix, NetworkError> {
    if values.len() != kind.vector_len() {
        return Err(NetworkError::Length {
            kind,
            expected: kind.vector_len(),
            got: values.len(),
        });
    }
    let mut m = [[0.0; CODE_COUNT]; CODE_COUNT];
    match kind {
        NetworkKind::Symmetric => {
            let mut k = 0;
            for i in 0..CODE_COUNT {
                for j in i + 1..CODE_COUNT {
                    m[i][j] = values[k];
                    m[j][i] = values[k];
                    k += 1;
                }
            }
        }
        NetworkKind::Directed => {
            for (k, v) in values.iter().enumerate() {
                m[k / CODE_COUNT][k % CODE_COUNT] = *v;
            }
        }
    }
    Ok(m)
}

/// Code pair labels in flattened order, e.g. `alpha-beta` or `theta>correct`.
pub fn feature_names(kind: NetworkKind) -> Vec<String> {
    match kind {
        NetworkKind::Symmetric => (0..CODE_COUNT)
            .flat_map(|i| (i + 1..CODE_COUNT).map(move |j| format!("{}-{}", Code::ALL[i], Code::ALL[j])))
            .collect(),
        NetworkKind::Directed => (0..CODE_COUNT)
            .flat_map(|i| (0..CODE_COUNT).map(move |j| format!("{}>{}", Code::ALL[i], Code::ALL[j])))
            .collect(),
    }
}

// ---- export -------------------------------------------------------------

/// Writes a square adjacency CSV with code names as header row and column.
pub fn write_adjacency_to<W: Write>(w: &mut W, m: &WeightMatrix) -> std::io::Result<()> {
    write!(w, "code")?;
    for c in Code::ALL {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (i, row) in m.iter().enumerate() {
        write!(w, "{}", Code::ALL[i])?;
        for v in row {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_adjacency(path: &Path, m: &WeightMatrix) -> Result<(), NetworkError> {
    let io = |e: std::io::Error| NetworkError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_adjacency_to(&mut w, m).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_adjacency_from<R: Read>(reader: R, name: &str) -> Result<WeightMatrix, NetworkError> {
    let bad = |message: String| NetworkError::Parse {
        file: name.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("code").chain(Code::ALL.iter().map(|c| c.name())).collect();
    let found: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if found != expected {
        return Err(bad(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut m = [[0.0; CODE_COUNT]; CODE_COUNT];
    let mut seen = [false; CODE_COUNT];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let code = Code::from_name(&rec[0]).ok_or_else(|| bad(format!("unknown code `{}`", &rec[0])))?;
        for j in 0..CODE_COUNT {
            m[code.index()][j] = rec[j + 1]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad weight `{}`", &rec[j + 1])))?;
        }
        seen[code.index()] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(bad("missing rows".into()));
    }
    Ok(m)
}

pub fn read_adjacency(path: &Path) -> Result<WeightMatrix, NetworkError> {
    let file = File::open(path).map_err(|e| NetworkError::Io(format!("{}: {e}", path.display())))?;
    read_adjacency_from(file, &path.display().to_string())
}

/// One manifest row pointing at an adjacency CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub unit: UnitId,
    pub kind: NetworkKind,
    pub update_count: u64,
    pub file: String,
}

pub const NETWORK_MANIFEST_HEADER: &str = "participant,condition,kind,update_count,file";

pub fn network_file_name(acc: &NetworkAccumulator) -> String {
    format!("{}_{}_{}.csv", acc.kind, acc.unit.participant, acc.unit.condition)
}

/// Writes one adjacency CSV per accumulator into `dir` plus `networks.csv`.
pub fn write_networks(dir: &Path, accs: &[NetworkAccumulator]) -> Result<PathBuf, NetworkError> {
    let mut entries = Vec::new();
    for acc in accs {
        let file = network_file_name(acc);
        let w = acc.weights.map(|row| row.map(|v| v as f64));
        write_adjacency(&dir.join(&file), &w)?;
        entries.push(ManifestEntry {
            unit: acc.unit.clone(),
            kind: acc.kind,
            update_count: acc.update_count,
            file,
        });
    }
    let path = dir.join("networks.csv");
    let io = |e: std::io::Error| NetworkError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(w, "{NETWORK_MANIFEST_HEADER}").map_err(io)?;
    for e in &entries {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.unit.participant, e.unit.condition, e.kind, e.update_count, e.file
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Reads `networks.csv` and every adjacency file it lists (paths relative to
/// the manifest's directory).
pub fn read_networks(manifest: &Path) -> Result<Vec<NetworkAccumulator>, NetworkError> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let name = manifest.display().to_string();
    let bad = |message: String| NetworkError::Parse {
        file: name.clone(),
        message,
    };
    let file = File::open(manifest).map_err(|e| NetworkError::Io(format!("{name}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found.to_ascii_lowercase() != NETWORK_MANIFEST_HEADER {
        return Err(bad(format!("expected header `{NETWORK_MANIFEST_HEADER}`, found `{found}`")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let condition: Condition = rec[1].parse().map_err(|e: crate::codes::UnknownLabel| bad(e.to_string()))?;
        let unit = UnitId::new(&rec[0], condition).ok_or_else(|| bad("empty participant".into()))?;
        let kind: NetworkKind = rec[2].parse().map_err(bad)?;
        let update_count: u64 = rec[3].parse().map_err(|_| bad(format!("bad update_count `{}`", &rec[3])))?;
        let m = read_adjacency(&dir.join(&rec[4]))?;
        let mut weights = [[0u64; CODE_COUNT]; CODE_COUNT];
        for (dst, src) in weights.iter_mut().flatten().zip(m.iter().flatten()) {
            if *src < 0.0 || src.fract() != 0.0 {
                return Err(bad(format!("{}: counts must be non-negative integers", &rec[4])));
            }
            *dst = *src as u64;
        }
        out.push(NetworkAccumulator {
            kind,
            unit,
            weights,
            update_count,
        });
    }
    Ok(out)
}
