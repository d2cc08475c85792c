//! Deterministic SVG figures: symmetric networks, directed networks and the
//! unit-point scatter plot.
//!
//! All coordinates are written with three decimals; element order follows code
//! order, so identical inputs give identical bytes.

use std::fmt::{self, Write as _};

use crate::codes::{Code, Condition, CODE_COUNT};
use crate::network::WeightMatrix;
use crate::projection::{GroupLabel, GroupNetwork, NodeLayout, ProjectionModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("invalid render spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RenderWarning {
    /// Every weight is below the cutoff; only nodes were drawn.
    EmptyNetwork,
}

impl fmt::Display for RenderWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenderWarning::EmptyNetwork => f.write_str("no edge above the drawing cutoff; nodes only"),
        }
    }
}

/// A rendered document plus anything worth telling the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    pub text: String,
    pub warnings: Vec<RenderWarning>,
}

/// Color given as an HSL hue; saturation and lightness are chosen per element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hue(pub f64);

impl Hue {
    pub const BLUE: Hue = Hue(220.0);
    pub const RED: Hue = Hue(0.0);

    fn css(self, saturation: f64, lightness: f64) -> String {
        format!("hsl({},{}%,{}%)", num(self.0), num(saturation), num(lightness))
    }
}

/// Linear weight → stroke width map: `min + (max − min) · w / reference`.
/// Without a fixed reference the figure's largest drawn weight is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeScale {
    pub min_width: f64,
    pub max_width: f64,
    pub reference: Option<f64>,
}

impl EdgeScale {
    pub fn width(&self, w: f64, figure_max: f64) -> f64 {
        let r = self.reference.unwrap_or(figure_max);
        if r <= 0.0 {
            return self.min_width;
        }
        self.min_width + (self.max_width - self.min_width) * w / r
    }
}

/// Linear frequency → radius map, normalized by the figure's largest frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeScale {
    pub min_radius: f64,
    pub max_radius: f64,
}

impl NodeScale {
    pub fn radius(&self, freq: f64, max_freq: f64) -> f64 {
        if max_freq <= 0.0 {
            return self.min_radius;
        }
        self.min_radius + (self.max_radius - self.min_radius) * freq / max_freq
    }
}

/// Which edges are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Fraction of the largest absolute weight in the figure.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: f64,
    pub height: f64,
    pub color_a: Hue,
    pub color_b: Hue,
    pub edge_scale: EdgeScale,
    pub node_scale: NodeScale,
    pub min_edge_weight: Cutoff,
    pub font_family: String,
    pub font_size: f64,
    /// Codes drawn as nodes, in drawing order.
    pub codes: Vec<Code>,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: 1000.0,
            height: 800.0,
            color_a: Hue::BLUE,
            color_b: Hue::RED,
            edge_scale: EdgeScale {
                min_width: 1.0,
                max_width: 12.0,
                reference: None,
            },
            node_scale: NodeScale {
                min_radius: 8.0,
                max_radius: 30.0,
            },
            min_edge_weight: Cutoff::Relative(0.02),
            font_family: "sans-serif".into(),
            font_size: 16.0,
            codes: Code::ALL.to_vec(),
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidSpec(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("canvas must be positive");
        }
        let e = &self.edge_scale;
        if !(e.min_width >= 0.0 && e.max_width > e.min_width) {
            return bad("edge scale must be strictly increasing");
        }
        if e.reference.is_some_and(|r| !(r > 0.0)) {
            return bad("edge scale reference must be positive");
        }
        let n = &self.node_scale;
        if !(n.min_radius > 0.0 && n.max_radius > n.min_radius) {
            return bad("node scale must be strictly increasing");
        }
        match self.min_edge_weight {
            Cutoff::Relative(c) | Cutoff::Absolute(c) if c >= 0.0 && c.is_finite() => {}
            _ => return bad("cutoff must be ≥ 0"),
        }
        if !(self.font_size > 0.0) {
            return bad("font size must be positive");
        }
        Ok(())
    }

    fn group_hue(&self, label: GroupLabel) -> Hue {
        match label {
            GroupLabel::Condition(Condition::NoFeedback) => self.color_b,
            _ => self.color_a,
        }
    }

    fn cutoff(&self, max_abs: f64) -> f64 {
        match self.min_edge_weight {
            Cutoff::Relative(c) => c * max_abs,
            Cutoff::Absolute(c) => c,
        }
    }
}

/// Fixed three-decimal formatting without negative zero.
fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000".to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates onto the canvas with a uniform scale and y pointing up.
struct Frame {
    scale: f64,
    cx: f64,
    cy: f64,
    mx: f64,
    my: f64,
}

impl Frame {
    fn fit(points: &[[f64; 2]], spec: &RenderSpec, margin: f64) -> Frame {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let span = [(hi[0] - lo[0]).max(0.0), (hi[1] - lo[1]).max(0.0)];
        let avail = [(spec.width - 2.0 * margin).max(1.0), (spec.height - 2.0 * margin).max(1.0)];
        let scale = match (span[0] > 0.0, span[1] > 0.0) {
            (true, true) => (avail[0] / span[0]).min(avail[1] / span[1]),
            (true, false) => avail[0] / span[0],
            (false, true) => avail[1] / span[1],
            (false, false) => 1.0,
        };
        Frame {
            scale,
            cx: 0.5 * (lo[0] + hi[0]),
            cy: 0.5 * (lo[1] + hi[1]),
            mx: 0.5 * spec.width,
            my: 0.5 * spec.height,
        }
    }

    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [self.mx + (p[0] - self.cx) * self.scale, self.my - (p[1] - self.cy) * self.scale]
    }
}

fn open_svg(spec: &RenderSpec, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="{f}" font-size="{fs}">"#,
        w = num(spec.width),
        h = num(spec.height),
        f = escape(&spec.font_family),
        fs = num(spec.font_size),
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    s
}

fn check_inputs(layout: &NodeLayout, weights: &WeightMatrix) -> Result<(), RenderError> {
    if layout.positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite("layout"));
    }
    if weights.iter().flatten().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite("weights"));
    }
    Ok(())
}

/// Node centers on the canvas plus the centroid of all drawn nodes (used to
/// push labels outward).
fn node_frame(layout: &NodeLayout, spec: &RenderSpec) -> ([[f64; 2]; CODE_COUNT], [f64; 2]) {
    let pts: Vec<[f64; 2]> = spec.codes.iter().map(|c| layout.positions[c.index()]).collect();
    let margin = spec.node_scale.max_radius + 4.0 * spec.font_size;
    let frame = Frame::fit(&pts, spec, margin);
    let mut out = [[0.0; 2]; CODE_COUNT];
    for (k, p) in layout.positions.iter().enumerate() {
        out[k] = frame.map(*p);
    }
    let n = spec.codes.len().max(1) as f64;
    let center = spec
        .codes
        .iter()
        .fold([0.0, 0.0], |acc, c| [acc[0] + out[c.index()][0] / n, acc[1] + out[c.index()][1] / n]);
    (out, center)
}

fn label(s: &mut String, code: Code, at: [f64; 2], radius: f64, center: [f64; 2], spec: &RenderSpec) {
    let (dx, dy) = (at[0] - center[0], at[1] - center[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let (ux, uy) = if len > 1e-9 { (dx / len, dy / len) } else { (0.0, -1.0) };
    let off = radius + 0.8 * spec.font_size;
    let anchor = if ux > 0.3 {
        "start"
    } else if ux < -0.3 {
        "end"
    } else {
        "middle"
    };
    let _ = writeln!(
        s,
        r#"<text class="label" x="{}" y="{}" text-anchor="{anchor}" dominant-baseline="middle">{}</text>"#,
        num(at[0] + ux * off),
        num(at[1] + uy * off),
        escape(code.label())
    );
}

/// Edge color: signed networks use group A for positive and group B for
/// negative differences.
fn edge_hue(network: &GroupNetwork, w: f64, spec: &RenderSpec) -> Hue {
    match network.label {
        GroupLabel::Difference if w < 0.0 => spec.color_b,
        GroupLabel::Difference => spec.color_a,
        l => spec.group_hue(l),
    }
}

/// Undirected network: one line per pair with |weight| at or above the cutoff,
/// node radius from row sums.
pub fn render_symmetric(layout: &NodeLayout, network: &GroupNetwork, spec: &RenderSpec) -> Result<SvgDocument, RenderError> {
    spec.validate()?;
    let w = &network.mean_weights;
    check_inputs(layout, w)?;
    let (pos, center) = node_frame(layout, spec);
    let codes = &spec.codes;

    let mut edges = Vec::new();
    for (a, &ci) in codes.iter().enumerate() {
        for &cj in &codes[a + 1..] {
            let v = w[ci.index()][cj.index()];
            if v != 0.0 {
                edges.push((ci, cj, v));
            }
        }
    }
    let max_abs = edges.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
    let cut = spec.cutoff(max_abs);
    edges.retain(|e| e.2.abs() >= cut);

    let mut s = open_svg(spec, &format!("{} network, {}", network.kind, network.label));
    let mut warnings = Vec::new();
    if edges.is_empty() {
        warnings.push(RenderWarning::EmptyNetwork);
    }
    s.push_str("<g class=\"edges\" stroke-linecap=\"round\">\n");
    for (ci, cj, v) in &edges {
        let (p, q) = (pos[ci.index()], pos[cj.index()]);
        let _ = writeln!(
            s,
            r#"<line class="edge" data-from="{}" data-to="{}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}" stroke-opacity="0.8"/>"#,
            ci.name(),
            cj.name(),
            num(p[0]),
            num(p[1]),
            num(q[0]),
            num(q[1]),
            edge_hue(network, *v, spec).css(70.0, 45.0),
            num(spec.edge_scale.width(v.abs(), max_abs)),
        );
    }
    s.push_str("</g>\n<g class=\"nodes\">\n");
    let freq: Vec<f64> = codes
        .iter()
        .map(|c| codes.iter().map(|d| w[c.index()][d.index()].abs()).sum())
        .collect();
    let max_freq = freq.iter().copied().fold(0.0, f64::max);
    for (c, f) in codes.iter().zip(&freq) {
        let p = pos[c.index()];
        let r = spec.node_scale.radius(*f, max_freq);
        let _ = writeln!(
            s,
            r#"<circle class="node" data-code="{}" cx="{}" cy="{}" r="{}" fill="hsl(0,0%,35%)" stroke="white" stroke-width="1.500"/>"#,
            c.name(),
            num(p[0]),
            num(p[1]),
            num(r)
        );
        label(&mut s, *c, p, r, center, spec);
    }
    s.push_str("</g>\n</svg>\n");
    Ok(SvgDocument { text: s, warnings })
}

/// Directed network: each edge `i → j` is a triangle with its apex on `i` and
/// its base centered on `j`, plus a chevron pointing towards `j`. Node radius
/// encodes the column sum (how often a code is a response); the inner circle's
/// saturation encodes the self-connection weight.
pub fn render_directed(layout: &NodeLayout, network: &GroupNetwork, spec: &RenderSpec) -> Result<SvgDocument, RenderError> {
    spec.validate()?;
    let w = &network.mean_weights;
    check_inputs(layout, w)?;
    let (pos, center) = node_frame(layout, spec);
    let codes = &spec.codes;

    let mut edges = Vec::new();
    for &ci in codes {
        for &cj in codes {
            let v = w[ci.index()][cj.index()];
            if ci != cj && v != 0.0 {
                edges.push((ci, cj, v));
            }
        }
    }
    let max_abs = edges.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
    let cut = spec.cutoff(max_abs);
    edges.retain(|e| e.2.abs() >= cut);

    let mut s = open_svg(spec, &format!("{} network, {}", network.kind, network.label));
    let mut warnings = Vec::new();
    let has_loops = codes.iter().any(|c| w[c.index()][c.index()] != 0.0);
    if edges.is_empty() && !has_loops {
        warnings.push(RenderWarning::EmptyNetwork);
    }
    s.push_str("<g class=\"edges\">\n");
    for (ci, cj, v) in &edges {
        let (p, q) = (pos[ci.index()], pos[cj.index()]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-9 {
            continue;
        }
        let (ux, uy) = (dx / len, dy / len);
        let (nx, ny) = (-uy, ux);
        let half = spec.edge_scale.width(v.abs(), max_abs);
        let hue = edge_hue(network, *v, spec);
        let _ = writeln!(
            s,
            r#"<polygon class="edge" data-from="{}" data-to="{}" points="{},{} {},{} {},{}" fill="{}" fill-opacity="0.7"/>"#,
            ci.name(),
            cj.name(),
            num(p[0]),
            num(p[1]),
            num(q[0] + nx * half),
            num(q[1] + ny * half),
            num(q[0] - nx * half),
            num(q[1] - ny * half),
            hue.css(70.0, 45.0),
        );
        // chevron at 60% of the way, opening towards the source
        let t = 0.6 * len;
        let tip = [p[0] + ux * t, p[1] + uy * t];
        let arm = 5.0 + 0.5 * half;
        let _ = writeln!(
            s,
            r#"<polyline class="chevron" data-from="{}" data-to="{}" points="{},{} {},{} {},{}" fill="none" stroke="hsl(0,0%,15%)" stroke-width="1.500"/>"#,
            ci.name(),
            cj.name(),
            num(tip[0] - ux * arm + nx * arm),
            num(tip[1] - uy * arm + ny * arm),
            num(tip[0]),
            num(tip[1]),
            num(tip[0] - ux * arm - nx * arm),
            num(tip[1] - uy * arm - ny * arm),
        );
    }
    s.push_str("</g>\n<g class=\"nodes\">\n");
    let freq: Vec<f64> = codes
        .iter()
        .map(|c| codes.iter().map(|d| w[d.index()][c.index()].abs()).sum())
        .collect();
    let max_freq = freq.iter().copied().fold(0.0, f64::max);
    let max_loop = codes.iter().fold(0.0f64, |m, c| m.max(w[c.index()][c.index()].abs()));
    for (c, f) in codes.iter().zip(&freq) {
        let p = pos[c.index()];
        let r = spec.node_scale.radius(*f, max_freq);
        let d = w[c.index()][c.index()];
        let sat = if max_loop > 0.0 { 100.0 * d.abs() / max_loop } else { 0.0 };
        let hue = match network.label {
            GroupLabel::Difference if d < 0.0 => spec.color_b,
            GroupLabel::Difference => spec.color_a,
            l => spec.group_hue(l),
        };
        let _ = writeln!(
            s,
            r#"<circle class="node" data-code="{}" cx="{}" cy="{}" r="{}" fill="hsl(0,0%,35%)" stroke="white" stroke-width="1.500"/>"#,
            c.name(),
            num(p[0]),
            num(p[1]),
            num(r)
        );
        let _ = writeln!(
            s,
            r#"<circle class="self" data-code="{}" cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            c.name(),
            num(p[0]),
            num(p[1]),
            num(0.6 * r),
            hue.css(sat, 60.0)
        );
        label(&mut s, *c, p, r, center, spec);
    }
    s.push_str("</g>\n</svg>\n");
    Ok(SvgDocument { text: s, warnings })
}

/// Unit points (circles), group centroids (squares) and 95% confidence boxes
/// (dotted rectangles) in the SVD plane.
pub fn render_scatter(model: &ProjectionModel, groups: &[GroupNetwork], spec: &RenderSpec) -> Result<SvgDocument, RenderError> {
    spec.validate()?;
    if model.unit_points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite("points"));
    }
    let groups: Vec<&GroupNetwork> = groups
        .iter()
        .filter(|g| matches!(g.label, GroupLabel::Condition(_)))
        .collect();
    if groups.iter().any(|g| g.centroid.iter().chain(&g.ci95).any(|v| !v.is_finite())) {
        return Err(RenderError::NonFinite("groups"));
    }
    let mut extent: Vec<[f64; 2]> = model.unit_points.clone();
    for g in &groups {
        extent.push([g.centroid[0] - g.ci95[0], g.centroid[1] - g.ci95[1]]);
        extent.push([g.centroid[0] + g.ci95[0], g.centroid[1] + g.ci95[1]]);
    }
    extent.push([0.0, 0.0]);
    let frame = Frame::fit(&extent, spec, 4.0 * spec.font_size + 20.0);

    let mut s = open_svg(spec, &format!("{} projection", model.kind));
    let o = frame.map([0.0, 0.0]);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="hsl(0,0%,60%)" stroke-width="1.000"><line class="axis" x1="0.000" y1="{y}" x2="{w}" y2="{y}"/><line class="axis" x1="{x}" y1="0.000" x2="{x}" y2="{h}"/></g>"#,
        x = num(o[0]),
        y = num(o[1]),
        w = num(spec.width),
        h = num(spec.height)
    );
    let pct = |d: usize| 100.0 * model.variance_explained.get(d).copied().unwrap_or(0.0);
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="end">SVD1 ({:.1}%)</text>"#,
        num(spec.width - 10.0),
        num(o[1] - 8.0),
        pct(0)
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="start">SVD2 ({:.1}%)</text>"#,
        num(o[0] + 8.0),
        num(spec.font_size + 4.0),
        pct(1)
    );

    s.push_str("<g class=\"points\">\n");
    for (u, p) in model.units.iter().zip(&model.unit_points) {
        let q = frame.map(*p);
        let _ = writeln!(
            s,
            r#"<circle class="point" data-unit="{}" cx="{}" cy="{}" r="4.000" fill="{}" fill-opacity="0.8"/>"#,
            escape(&u.to_string()),
            num(q[0]),
            num(q[1]),
            spec.group_hue(GroupLabel::Condition(u.condition)).css(70.0, 50.0)
        );
    }
    s.push_str("</g>\n<g class=\"centroids\">\n");
    let side = 12.0;
    for g in &groups {
        let c = frame.map(g.centroid);
        let hue = spec.group_hue(g.label).css(80.0, 35.0);
        let (hw, hh) = (g.ci95[0] * frame.scale, g.ci95[1] * frame.scale);
        let _ = writeln!(
            s,
            r#"<rect class="ci" data-group="{}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{hue}" stroke-width="1.500" stroke-dasharray="4 3"/>"#,
            g.label,
            num(c[0] - hw),
            num(c[1] - hh),
            num(2.0 * hw),
            num(2.0 * hh)
        );
        let _ = writeln!(
            s,
            r#"<rect class="centroid" data-group="{}" x="{}" y="{}" width="{}" height="{}" fill="{hue}"/>"#,
            g.label,
            num(c[0] - side / 2.0),
            num(c[1] - side / 2.0),
            num(side),
            num(side)
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(SvgDocument {
        text: s,
        warnings: Vec::new(),
    })
}
