//! Joint centering and 2D SVD projection of unit vectors, least-squares node
//! co-registration and per-condition group networks.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::codes::{fmt_f64, Code, Condition, UnitId, CODE_COUNT};
use crate::network::{NetworkKind, NormalizationMode, UnitVector, WeightMatrix};
use crate::stats::{t_quantile, GroupSummary};

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("need at least 3 units, got {0}")]
    TooFewUnits(usize),
    #[error("unit vectors mix kinds or normalization modes")]
    Mixed,
    #[error("unit vector for {0} contains non-finite values")]
    NonFinite(String),
    #[error("unit {0} is not part of the fitted model")]
    UnknownUnit(String),
    #[error("group {0} has fewer than 2 units")]
    EmptyGroup(String),
    #[error("vector length {got} does not match model ({expected})")]
    Length { expected: usize, got: usize },
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("singular value decomposition did not converge")]
    NoConvergence,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionWarning {
    /// Fewer than two non-zero singular values; missing dimensions are zeroed.
    DegenerateRank { nonzero: usize },
    /// Node system is rank-deficient; a minimum-norm solution was used.
    SingularSystem { rank: usize },
}

impl fmt::Display for ProjectionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionWarning::DegenerateRank { nonzero } => {
                write!(f, "degenerate projection: {nonzero} non-zero singular value(s)")
            }
            ProjectionWarning::SingularSystem { rank } => write!(
                f,
                "node placement underdetermined (rank {rank} < {CODE_COUNT}); minimum-norm solution used"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub kind: NetworkKind,
    pub normalization: Option<NormalizationMode>,
    pub units: Vec<UnitId>,
    pub column_means: Vec<f64>,
    /// Two orthonormal right-singular vectors.
    pub basis: [Vec<f64>; 2],
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    pub unit_points: Vec<[f64; 2]>,
    /// `σ_k² / Σ σ_j²` for every singular value.
    pub variance_explained: Vec<f64>,
    pub warnings: Vec<ProjectionWarning>,
}

impl ProjectionModel {
    /// Projects a new vector of the same kind onto the fitted plane.
    pub fn project(&self, values: &[f64]) -> Result<[f64; 2], ProjectionError> {
        if values.len() != self.column_means.len() {
            return Err(ProjectionError::Length {
                expected: self.column_means.len(),
                got: values.len(),
            });
        }
        let mut p = [0.0; 2];
        for (d, b) in self.basis.iter().enumerate() {
            p[d] = values
                .iter()
                .zip(&self.column_means)
                .zip(b)
                .map(|((v, m), w)| (v - m) * w)
                .sum();
        }
        Ok(p)
    }

    pub fn point_of(&self, unit: &UnitId) -> Option<[f64; 2]> {
        self.units.iter().position(|u| u == unit).map(|i| self.unit_points[i])
    }

    fn feature_count(&self) -> usize {
        self.kind.vector_len()
    }
}

fn check_vectors(vectors: &[UnitVector]) -> Result<(), ProjectionError> {
    let first = &vectors[0];
    for v in vectors {
        if v.kind != first.kind || v.normalization != first.normalization {
            return Err(ProjectionError::Mixed);
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(ProjectionError::NonFinite(v.unit.to_string()));
        }
    }
    Ok(())
}

/// Centers the unit × feature matrix by column means over all units and
/// projects rows onto the top two right-singular vectors.
pub fn fit_projection(vectors: &[UnitVector]) -> Result<ProjectionModel, ProjectionError> {
    if vectors.len() < 3 {
        return Err(ProjectionError::TooFewUnits(vectors.len()));
    }
    check_vectors(vectors)?;
    let kind = vectors[0].kind;
    let (m, n) = (vectors.len(), vectors[0].values.len());
    let data = DMatrix::from_fn(m, n, |i, j| vectors[i].values[j]);
    let means: Vec<f64> = (0..n).map(|j| data.column(j).mean()).collect();
    let mut centered = data;
    for (j, mean) in means.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-mean);
    }

    let (_, sv, v) = thin_svd(&centered)?;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&k| sv[k]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    let nonzero = singular_values
        .iter()
        .filter(|&&s| top > 0.0 && s > RANK_TOL * top)
        .count();

    let mut warnings = Vec::new();
    if nonzero < 2 {
        log::warn!("degenerate projection with {nonzero} non-zero singular values");
        warnings.push(ProjectionWarning::DegenerateRank { nonzero });
    }

    let mut basis: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    for d in 0..2 {
        basis[d] = if d < nonzero {
            v.column(order[d]).iter().copied().collect()
        } else {
            placeholder_axis(&basis[..d], n)
        };
        // sign convention: largest-magnitude component positive
        let b = &mut basis[d];
        let (imax, _) = b
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if b[imax] < 0.0 {
            b.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let unit_points = (0..m)
        .map(|i| {
            let mut p = [0.0; 2];
            for (d, b) in basis.iter().enumerate() {
                if d < nonzero {
                    p[d] = centered.row(i).iter().zip(b).map(|(x, w)| x * w).sum();
                }
            }
            p
        })
        .collect();

    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let variance_explained = singular_values
        .iter()
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect();

    Ok(ProjectionModel {
        kind,
        normalization: vectors[0].normalization,
        units: vectors.iter().map(|v| v.unit.clone()).collect(),
        column_means: means,
        basis,
        singular_values,
        unit_points,
        variance_explained,
        warnings,
    })
}

/// Thin SVD `a = U diag(s) Vᵀ`. nalgebra's bidiagonal SVD can return
/// inaccurate factors for rank-deficient inputs (the usual case here), so
/// the decomposition goes through faer.
fn thin_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>), ProjectionError> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|_| ProjectionError::NoConvergence)?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    Ok((
        DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i]).collect(),
        DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
    ))
}

/// Unit vector orthogonal to `taken`, used for dimensions without variance
/// (their coordinates are zero, so only orthonormality matters).
fn placeholder_axis(taken: &[Vec<f64>], n: usize) -> Vec<f64> {
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        for t in taken {
            let dot: f64 = e.iter().zip(t).map(|(a, b)| a * b).sum();
            e.iter_mut().zip(t).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.5 {
            e.iter_mut().for_each(|v| *v /= norm);
            return e;
        }
    }
    unreachable!("n ≥ 2 features always leave room for another axis")
}

/// Co-registered node positions in the projection plane.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLayout {
    pub positions: [[f64; 2]; CODE_COUNT],
    /// Mean squared distance between each unit's centroid and its point.
    pub residual: f64,
    pub warnings: Vec<ProjectionWarning>,
}

/// Row of centroid coefficients: `centroid(u) = Σ_k c_k P_k`. Each weighted
/// pair contributes half its weight to both endpoints; a self-loop contributes
/// its full weight to its node. `None` when the unit has no weight.
pub fn centroid_coefficients(kind: NetworkKind, weights: &WeightMatrix) -> Option<[f64; CODE_COUNT]> {
    let mut c = [0.0; CODE_COUNT];
    let mut total = 0.0;
    for i in 0..CODE_COUNT {
        for j in 0..CODE_COUNT {
            let include = match kind {
                NetworkKind::Symmetric => i < j,
                NetworkKind::Directed => true,
            };
            let w = weights[i][j];
            if !include || w == 0.0 {
                continue;
            }
            c[i] += 0.5 * w;
            c[j] += 0.5 * w;
            total += w;
        }
    }
    if total <= 0.0 {
        return None;
    }
    c.iter_mut().for_each(|v| *v /= total);
    Some(c)
}

/// Edge-weighted centroid of one network under `positions`.
pub fn network_centroid(kind: NetworkKind, weights: &WeightMatrix, positions: &[[f64; 2]; CODE_COUNT]) -> Option<[f64; 2]> {
    let c = centroid_coefficients(kind, weights)?;
    let mut p = [0.0; 2];
    for (k, ck) in c.iter().enumerate() {
        p[0] += ck * positions[k][0];
        p[1] += ck * positions[k][1];
    }
    Some(p)
}

/// Solves for node positions so that each unit's edge-weighted centroid is as
/// close as possible (least squares) to its projected point.
pub fn place_nodes(model: &ProjectionModel, vectors: &[UnitVector]) -> Result<NodeLayout, ProjectionError> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for v in vectors {
        if v.values.len() != model.feature_count() {
            return Err(ProjectionError::Length {
                expected: model.feature_count(),
                got: v.values.len(),
            });
        }
        let point = model
            .point_of(&v.unit)
            .ok_or_else(|| ProjectionError::UnknownUnit(v.unit.to_string()))?;
        if let Some(c) = centroid_coefficients(v.kind, &v.matrix()) {
            rows.push(c);
            targets.push(point);
        }
    }
    let mut warnings = Vec::new();
    if rows.is_empty() {
        warnings.push(ProjectionWarning::SingularSystem { rank: 0 });
        return Ok(NodeLayout {
            positions: [[0.0; 2]; CODE_COUNT],
            residual: 0.0,
            warnings,
        });
    }
    let a = DMatrix::from_fn(rows.len(), CODE_COUNT, |i, k| rows[i][k]);
    let b = DMatrix::from_fn(targets.len(), 2, |i, d| targets[i][d]);

    let (u, sv, v) = thin_svd(&a)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let rank = sv.iter().filter(|&&s| s > eps).count();
    if rank < CODE_COUNT {
        log::warn!("node placement rank {rank} < {CODE_COUNT}; using minimum-norm solution");
        warnings.push(ProjectionWarning::SingularSystem { rank });
    }
    // minimum-norm least squares: x = V Σ⁺ Uᵀ b
    let mut utb = u.transpose() * &b;
    for (k, s) in sv.iter().enumerate() {
        let inv = if *s > eps { 1.0 / s } else { 0.0 };
        utb.row_mut(k).scale_mut(inv);
    }
    let x = &v * utb;

    let fitted = &a * &x;
    let residual = (&fitted - &b).row_iter().map(|r| r.norm_squared()).sum::<f64>() / rows.len() as f64;
    let mut positions = [[0.0; 2]; CODE_COUNT];
    for (k, p) in positions.iter_mut().enumerate() {
        *p = [x[(k, 0)], x[(k, 1)]];
    }
    Ok(NodeLayout {
        positions,
        residual,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupLabel {
    Condition(Condition),
    /// First group minus second group.
    Difference,
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Condition(c) => write!(f, "{c}"),
            GroupLabel::Difference => f.write_str("diff"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNetwork {
    pub label: GroupLabel,
    pub kind: NetworkKind,
    pub n: usize,
    pub mean_weights: WeightMatrix,
    pub centroid: [f64; 2],
    /// Per-dimension 95% half-widths.
    pub ci95: [f64; 2],
}

/// Mean network, centroid and 95% CI of each condition, followed by the
/// difference `first − second`.
pub fn group_statistics(
    model: &ProjectionModel,
    vectors: &[UnitVector],
    order: [Condition; 2],
) -> Result<Vec<GroupNetwork>, ProjectionError> {
    let mut out = Vec::with_capacity(3);
    let mut summaries = Vec::with_capacity(2);
    for cond in order {
        let members: Vec<&UnitVector> = vectors.iter().filter(|v| v.unit.condition == cond).collect();
        if members.len() < 2 {
            return Err(ProjectionError::EmptyGroup(cond.to_string()));
        }
        let n = members.len();
        let mut mean = [[0.0; CODE_COUNT]; CODE_COUNT];
        let mut coords: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for v in &members {
            let m = v.matrix();
            for (dst, src) in mean.iter_mut().flatten().zip(m.iter().flatten()) {
                *dst += src / n as f64;
            }
            let p = model
                .point_of(&v.unit)
                .ok_or_else(|| ProjectionError::UnknownUnit(v.unit.to_string()))?;
            coords[0].push(p[0]);
            coords[1].push(p[1]);
        }
        let s = [GroupSummary::of(&coords[0]), GroupSummary::of(&coords[1])];
        let tq = t_quantile(0.975, (n - 1) as f64);
        out.push(GroupNetwork {
            label: GroupLabel::Condition(cond),
            kind: model.kind,
            n,
            mean_weights: mean,
            centroid: [s[0].mean, s[1].mean],
            ci95: [
                tq * s[0].sd / (n as f64).sqrt(),
                tq * s[1].sd / (n as f64).sqrt(),
            ],
        });
        summaries.push(s);
    }
    let (a, b) = (&out[0], &out[1]);
    let mut diff = [[0.0; CODE_COUNT]; CODE_COUNT];
    for ((d, x), y) in diff.iter_mut().flatten().zip(a.mean_weights.iter().flatten()).zip(b.mean_weights.iter().flatten()) {
        *d = x - y;
    }
    // Welch interval for the difference of centroids
    let mut ci = [0.0; 2];
    for (d, slot) in ci.iter_mut().enumerate() {
        let (sa, sb) = (summaries[0][d], summaries[1][d]);
        let (va, vb) = (sa.sd * sa.sd / sa.n as f64, sb.sd * sb.sd / sb.n as f64);
        if va + vb > 0.0 {
            let df = (va + vb).powi(2) / (va * va / (sa.n - 1) as f64 + vb * vb / (sb.n - 1) as f64);
            *slot = t_quantile(0.975, df) * (va + vb).sqrt();
        }
    }
    let diff_net = GroupNetwork {
        label: GroupLabel::Difference,
        kind: model.kind,
        n: a.n + b.n,
        mean_weights: diff,
        centroid: [a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1]],
        ci95: ci,
    };
    out.push(diff_net);
    Ok(out)
}

/// Convenience: points of the units of one condition along one dimension.
pub fn coordinates(model: &ProjectionModel, condition: Condition, dim: usize) -> Vec<f64> {
    model
        .units
        .iter()
        .zip(&model.unit_points)
        .filter(|(u, _)| u.condition == condition)
        .map(|(_, p)| p[dim])
        .collect()
}


// ---------------------------------------------------------------------------
// exports

pub const PROJECTION_HEADER: &str = "participant,condition,svd1,svd2";
pub const LAYOUT_HEADER: &str = "code,x,y";
pub const GROUPS_HEADER: &str = "group,n,centroid_x,centroid_y,ci95_x,ci95_y";

fn write_text(path: &Path, text: &str) -> Result<(), ProjectionError> {
    let io = |e: std::io::Error| ProjectionError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(text.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

fn open_csv(path: &Path, header: &str) -> Result<csv::Reader<File>, ProjectionError> {
    let file = File::open(path).map_err(|e| ProjectionError::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found.to_ascii_lowercase() != header {
        return Err(parse_err(path, format!("expected header `{header}`, found `{found}`")));
    }
    Ok(rdr)
}

fn parse_err(path: &Path, message: String) -> ProjectionError {
    ProjectionError::Parse {
        file: path.display().to_string(),
        message,
    }
}

fn num(path: &Path, s: &str) -> Result<f64, ProjectionError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(path, format!("bad number `{s}`")))
}

pub fn projection_csv(model: &ProjectionModel) -> String {
    let mut s = format!("{PROJECTION_HEADER}\n");
    for (u, p) in model.units.iter().zip(&model.unit_points) {
        s.push_str(&format!("{},{},{},{}\n", u.participant, u.condition, fmt_f64(p[0]), fmt_f64(p[1])));
    }
    s
}

pub fn write_projection(path: &Path, model: &ProjectionModel) -> Result<(), ProjectionError> {
    write_text(path, &projection_csv(model))
}

pub fn read_projection(path: &Path) -> Result<Vec<(UnitId, [f64; 2])>, ProjectionError> {
    let mut rdr = open_csv(path, PROJECTION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let cond: Condition = rec[1].parse().map_err(|e: crate::codes::UnknownLabel| parse_err(path, e.to_string()))?;
        let unit = UnitId::new(&rec[0], cond).ok_or_else(|| parse_err(path, "empty participant".into()))?;
        out.push((unit, [num(path, &rec[2])?, num(path, &rec[3])?]));
    }
    Ok(out)
}

pub fn layout_csv(layout: &NodeLayout) -> String {
    let mut s = format!("{LAYOUT_HEADER}\n");
    for (c, p) in Code::ALL.iter().zip(&layout.positions) {
        s.push_str(&format!("{},{},{}\n", c.name(), fmt_f64(p[0]), fmt_f64(p[1])));
    }
    s
}

pub fn write_layout(path: &Path, layout: &NodeLayout) -> Result<(), ProjectionError> {
    write_text(path, &layout_csv(layout))
}

/// Reads node positions; residual and warnings are not part of the file.
pub fn read_layout(path: &Path) -> Result<NodeLayout, ProjectionError> {
    let mut rdr = open_csv(path, LAYOUT_HEADER)?;
    let mut positions = [[0.0; 2]; CODE_COUNT];
    let mut seen = [false; CODE_COUNT];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let code = Code::from_name(&rec[0]).ok_or_else(|| parse_err(path, format!("unknown code `{}`", &rec[0])))?;
        positions[code.index()] = [num(path, &rec[1])?, num(path, &rec[2])?];
        seen[code.index()] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_err(path, format!("missing code `{}`", Code::ALL[i])));
    }
    Ok(NodeLayout {
        positions,
        residual: 0.0,
        warnings: Vec::new(),
    })
}

pub fn groups_csv(groups: &[GroupNetwork]) -> String {
    let mut s = format!("{GROUPS_HEADER}\n");
    for g in groups {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            g.label,
            g.n,
            fmt_f64(g.centroid[0]),
            fmt_f64(g.centroid[1]),
            fmt_f64(g.ci95[0]),
            fmt_f64(g.ci95[1])
        ));
    }
    s
}

/// File name of a group's mean adjacency, e.g. `group_nena_feedback.csv`.
pub fn group_file_name(kind: NetworkKind, label: GroupLabel) -> String {
    format!("group_{kind}_{label}.csv")
}

/// Writes `groups_<kind>.csv` plus one adjacency CSV per group into `dir`.
pub fn write_groups(dir: &Path, groups: &[GroupNetwork]) -> Result<(), ProjectionError> {
    let Some(first) = groups.first() else {
        return Ok(());
    };
    write_text(&dir.join(format!("groups_{}.csv", first.kind)), &groups_csv(groups))?;
    for g in groups {
        let path = dir.join(group_file_name(g.kind, g.label));
        crate::network::write_adjacency(&path, &g.mean_weights)
            .map_err(|e| ProjectionError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Reads the groups written by [`write_groups`] for `kind`.
pub fn read_groups(dir: &Path, kind: NetworkKind) -> Result<Vec<GroupNetwork>, ProjectionError> {
    let path = dir.join(format!("groups_{kind}.csv"));
    let mut rdr = open_csv(&path, GROUPS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(&path, e.to_string()))?;
        let label = match &rec[0] {
            "diff" => GroupLabel::Difference,
            other => GroupLabel::Condition(
                other
                    .parse()
                    .map_err(|e: crate::codes::UnknownLabel| parse_err(&path, e.to_string()))?,
            ),
        };
        let n = rec[1]
            .parse::<usize>()
            .map_err(|_| parse_err(&path, format!("bad n `{}`", &rec[1])))?;
        let adj = dir.join(group_file_name(kind, label));
        let mean_weights = crate::network::read_adjacency(&adj).map_err(|e| ProjectionError::Io(e.to_string()))?;
        out.push(GroupNetwork {
            label,
            kind,
            n,
            mean_weights,
            centroid: [num(&path, &rec[2])?, num(&path, &rec[3])?],
            ci95: [num(&path, &rec[4])?, num(&path, &rec[5])?],
        });
    }
    Ok(out)
}

/// Machine-readable `key=value` variance report.
pub fn variance_report(model: &ProjectionModel, layout: Option<&NodeLayout>) -> String {
    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
    let mut s = String::new();
    s.push_str(&format!("kind={}\n", model.kind));
    s.push_str(&format!("units={}\n", model.units.len()));
    s.push_str(&format!("features={}\n", model.column_means.len()));
    for d in 0..2 {
        let v = model.variance_explained.get(d).copied().unwrap_or(0.0);
        s.push_str(&format!("svd{}_variance={}\n", d + 1, fmt_f64(v)));
    }
    s.push_str(&format!("variance_explained={}\n", join(&model.variance_explained)));
    s.push_str(&format!("singular_values={}\n", join(&model.singular_values)));
    let warnings: Vec<String> = model
        .warnings
        .iter()
        .chain(layout.map(|l| l.warnings.as_slice()).unwrap_or(&[]))
        .map(|w| w.to_string())
        .collect();
    if let Some(l) = layout {
        s.push_str(&format!("layout_residual={}\n", fmt_f64(l.residual)));
    }
    s.push_str(&format!("warnings={}\n", warnings.join(" | ")));
    s
}

/// Reads `svd1_variance` and `svd2_variance` back from a variance report.
pub fn read_variance(path: &Path) -> Result<[f64; 2], ProjectionError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProjectionError::Io(format!("{}: {e}", path.display())))?;
    let mut out = [None, None];
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "svd1_variance" => out[0] = Some(num(path, v.trim())?),
                "svd2_variance" => out[1] = Some(num(path, v.trim())?),
                _ => {}
            }
        }
    }
    match out {
        [Some(a), Some(b)] => Ok([a, b]),
        _ => Err(parse_err(path, "missing svd1_variance/svd2_variance".into())),
    }
}

impl ProjectionModel {
    /// A model that only carries points and variance fractions, as read back
    /// from exports (enough for plotting and statistics).
    pub fn from_points(kind: NetworkKind, points: Vec<(UnitId, [f64; 2])>, variance: [f64; 2]) -> ProjectionModel {
        let (units, unit_points) = points.into_iter().unzip();
        ProjectionModel {
            kind,
            normalization: None,
            units,
            column_means: Vec::new(),
            basis: [Vec::new(), Vec::new()],
            singular_values: Vec::new(),
            unit_points,
            variance_explained: variance.to_vec(),
            warnings: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{flatten, SYMMETRIC_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build_vector(unit: UnitId, kind: NetworkKind, values: Vec<f64>) -> UnitVector {
        UnitVector {
            unit,
            kind,
            values,
            normalization: Some(NormalizationMode::EpochCount),
        }
    }

    fn unit(i: usize, c: Condition) -> UnitId {
        UnitId::new(format!("P{i:02}"), c).unwrap()
    }

    fn vecs(rows: Vec<Vec<f64>>) -> Vec<UnitVector> {
        rows.into_iter()
            .enumerate()
            .map(|(i, v)| {
                let c = if i % 2 == 0 { Condition::Feedback } else { Condition::NoFeedback };
                let kind = if v.len() == SYMMETRIC_LEN { NetworkKind::Symmetric } else { NetworkKind::Directed };
                build_vector(unit(i, c), kind, v)
            })
            .collect()
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let m = fit_projection(&vecs(vec![vec![0.3; SYMMETRIC_LEN]; 5])).unwrap();
        assert!(matches!(m.warnings[0], ProjectionWarning::DegenerateRank { nonzero: 0 }));
        assert!(m.unit_points.iter().all(|p| *p == [0.0, 0.0]));
        let dot: f64 = m.basis[0].iter().zip(&m.basis[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn rank_one_zeroes_second_axis() {
        let rows = (0..5).map(|i| (0..SYMMETRIC_LEN).map(|j| (i * (j + 1)) as f64).collect()).collect();
        let m = fit_projection(&vecs(rows)).unwrap();
        assert_eq!(m.warnings, vec![ProjectionWarning::DegenerateRank { nonzero: 1 }]);
        assert!(m.unit_points.iter().all(|p| p[1] == 0.0));
        let dot: f64 = m.basis[0].iter().zip(&m.basis[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        assert!((m.variance_explained[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_units_and_mixed() {
        assert_eq!(
            fit_projection(&vecs(vec![vec![0.0; SYMMETRIC_LEN]; 2])).unwrap_err(),
            ProjectionError::TooFewUnits(2)
        );
        let mut v = vecs(vec![vec![0.0; SYMMETRIC_LEN]; 3]);
        v[1].normalization = Some(NormalizationMode::EntrySum);
        assert_eq!(fit_projection(&v).unwrap_err(), ProjectionError::Mixed);
        let mut v = vecs(vec![vec![0.0; SYMMETRIC_LEN]; 3]);
        v[2].values[4] = f64::NAN;
        assert!(matches!(fit_projection(&v), Err(ProjectionError::NonFinite(_))));
    }

    #[test]
    fn basis_is_orthonormal_and_signed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = (0..12).map(|_| (0..SYMMETRIC_LEN).map(|_| rng.gen::<f64>()).collect()).collect();
        let m = fit_projection(&vecs(rows)).unwrap();
        for b in &m.basis {
            let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
            let big = b.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
        let dot: f64 = m.basis[0].iter().zip(&m.basis[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        assert!((m.variance_explained.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.variance_explained.windows(2).all(|w| w[0] >= w[1]));
        // the column means project to the origin
        let origin = m.project(&m.column_means).unwrap();
        assert!(origin[0].abs() < 1e-12 && origin[1].abs() < 1e-12);
    }

    #[test]
    fn n_equals_two_confidence_interval() {
        // two feedback units at (0,0) and (2,0) on SVD1, two no-feedback units
        let model = ProjectionModel {
            kind: NetworkKind::Symmetric,
            normalization: Some(NormalizationMode::EpochCount),
            units: vec![
                unit(0, Condition::Feedback),
                unit(1, Condition::Feedback),
                unit(2, Condition::NoFeedback),
                unit(3, Condition::NoFeedback),
            ],
            column_means: vec![0.0; SYMMETRIC_LEN],
            basis: [vec![0.0; SYMMETRIC_LEN], vec![0.0; SYMMETRIC_LEN]],
            singular_values: vec![],
            unit_points: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, 1.0]],
            variance_explained: vec![],
            warnings: vec![],
        };
        let v: Vec<UnitVector> = model
            .units
            .iter()
            .map(|u| build_vector(u.clone(), NetworkKind::Symmetric, vec![1.0; SYMMETRIC_LEN]))
            .collect();
        let groups = group_statistics(&model, &v, [Condition::Feedback, Condition::NoFeedback]).unwrap();
        assert_eq!(groups[0].centroid, [1.0, 0.0]);
        assert!((groups[0].ci95[0] - 12.706).abs() < 1e-3);
        assert_eq!(groups[0].ci95[1], 0.0);
        assert_eq!(groups[2].label, GroupLabel::Difference);
        assert!(groups[2].mean_weights.iter().flatten().all(|&w| w == 0.0));
        assert!(groups.iter().all(|g| g.ci95.iter().all(|&c| c >= 0.0)));

        let err = group_statistics(&model, &v[..3], [Condition::Feedback, Condition::NoFeedback]).unwrap_err();
        assert_eq!(err, ProjectionError::EmptyGroup("no_feedback".into()));
    }

    #[test]
    fn one_edge_centroid_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let mut v = vec![0.0; SYMMETRIC_LEN];
                v[0] = 1.0; // delta-theta
                v[20] = rng.gen::<f64>(); // correct-incorrect, varies by unit
                v
            })
            .collect();
        let vectors = vecs(rows.clone());
        let model = fit_projection(&vectors).unwrap();
        // single-edge units
        let single: Vec<UnitVector> = vectors
            .iter()
            .map(|v| {
                let mut w = vec![0.0; SYMMETRIC_LEN];
                w[0] = 1.0;
                UnitVector { values: w, ..v.clone() }
            })
            .collect();
        let layout = place_nodes(&model, &single).unwrap();
        assert!(matches!(layout.warnings[0], ProjectionWarning::SingularSystem { .. }));
        let mid = [
            0.5 * (layout.positions[0][0] + layout.positions[1][0]),
            0.5 * (layout.positions[0][1] + layout.positions[1][1]),
        ];
        let c = network_centroid(NetworkKind::Symmetric, &single[0].matrix(), &layout.positions).unwrap();
        assert!((c[0] - mid[0]).abs() < 1e-12 && (c[1] - mid[1]).abs() < 1e-12);
        // least squares puts the shared centroid at the mean of the points
        let mean_x = model.unit_points.iter().map(|p| p[0]).sum::<f64>() / 6.0;
        assert!((mid[0] - mean_x).abs() < 1e-10);
        // and the two nodes sit symmetric about it
        assert!((layout.positions[0][0] - mid[0] + layout.positions[1][0] - mid[0]).abs() < 1e-10);
    }

    #[test]
    fn underdetermined_uses_min_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = (0..3).map(|_| (0..SYMMETRIC_LEN).map(|_| rng.gen::<f64>()).collect()).collect();
        let vectors = vecs(rows);
        let model = fit_projection(&vectors).unwrap();
        let layout = place_nodes(&model, &vectors).unwrap();
        assert!(matches!(layout.warnings[0], ProjectionWarning::SingularSystem { rank: 3 }));
        assert!(layout.residual < 1e-20);
    }

    #[test]
    fn directed_self_loop_pulls_to_node() {
        let mut m = [[0.0; CODE_COUNT]; CODE_COUNT];
        m[2][2] = 1.0;
        let mut pos = [[0.0; 2]; CODE_COUNT];
        pos[2] = [3.0, -1.0];
        assert_eq!(network_centroid(NetworkKind::Directed, &m, &pos), Some([3.0, -1.0]));
        let v = flatten(NetworkKind::Directed, &m);
        assert_eq!(v.len(), 49);
        assert_eq!(network_centroid(NetworkKind::Symmetric, &[[0.0; 7]; 7], &pos), None);
    }

    #[test]
    fn rank_deficient_fit_is_exact() {
        // 12 units spanning a 2-D subspace of 21 features: the second singular
        // value and the point cloud must be reproduced to round-off
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b: Vec<Vec<f64>> = (0..2).map(|_| (0..SYMMETRIC_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let coef: Vec<[f64; 2]> = (0..12).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        let vectors: Vec<UnitVector> = coef
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let values = (0..SYMMETRIC_LEN).map(|j| 1.0 + c[0] * b[0][j] + c[1] * b[1][j]).collect();
                build_vector(unit(i, Condition::Feedback), NetworkKind::Symmetric, values)
            })
            .collect();
        let m = fit_projection(&vectors).unwrap();
        assert!(m.warnings.is_empty());
        for (v, p) in vectors.iter().zip(&m.unit_points) {
            let q = m.project(&v.values).unwrap();
            assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        }
        // total squared distance from the centroid equals σ1² + σ2²
        let spread: f64 = m.unit_points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
        let sv2 = m.singular_values[0].powi(2) + m.singular_values[1].powi(2);
        assert!((spread - sv2).abs() < 1e-9 * sv2, "{spread} vs {sv2}");
        let centered: f64 = vectors
            .iter()
            .map(|v| v.values.iter().zip(&m.column_means).map(|(x, mu)| (x - mu).powi(2)).sum::<f64>())
            .sum();
        assert!((spread - centered).abs() < 1e-9 * centered, "{spread} vs {centered}");
    }
}
