//! Sewing-pattern data model: panels, seams, symmetry pairs, the garment
//! spec file format, validation, and pattern-quality metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    diameter, polygon_centroid, polygon_is_simple, polygon_signed_area, signed_area2,
    Mat2, Vec2, Vec3,
};

/// Normalized (min, max) key for an undirected edge.
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub id: String,
    /// Pattern-space vertex positions in meters.
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// Vertex cycles; the outer loop comes first and runs counterclockwise.
    pub boundary_loops: Vec<Vec<usize>>,
    pub seam_edge_tags: BTreeMap<(usize, usize), String>,
}

impl Panel {
    pub fn outer_loop(&self) -> &[usize] {
        &self.boundary_loops[0]
    }

    pub fn outer_polygon(&self) -> Vec<Vec2> {
        self.outer_loop().iter().map(|&i| self.vertices[i]).collect()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_loops.iter().any(|l| l.contains(&v))
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.outer_polygon())
    }

    pub fn centroid(&self) -> Vec2 {
        polygon_centroid(&self.outer_polygon())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamSide {
    pub panel: String,
    /// Ordered boundary vertices of `panel`.
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seam {
    pub id: String,
    pub side_a: SeamSide,
    pub side_b: SeamSide,
}

/// Two panels related by a flip, with `correspondence[i]` the vertex of
/// `panel_b` that mirrors vertex `i` of `panel_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryPair {
    pub panel_a: String,
    pub panel_b: String,
    pub correspondence: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub stretch_compliance: f64,
    pub shear_compliance: f64,
    /// `None` disables bending constraints.
    #[serde(default)]
    pub bend_compliance: Option<f64>,
    /// Area density in kg/m².
    pub density: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            stretch_compliance: 1e-7,
            shear_compliance: 1e-6,
            bend_compliance: None,
            density: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GarmentSpec {
    pub panels: Vec<Panel>,
    pub seams: Vec<Seam>,
    pub symmetry_pairs: Vec<SymmetryPair>,
    pub material: Material,
    pub reference_drape3d: Option<Vec<Vec3>>,
    /// User-supplied control cages keyed by panel id.
    pub cages: BTreeMap<String, Vec<Vec2>>,
}

impl GarmentSpec {
    pub fn panel_index(&self, id: &str) -> Option<usize> {
        self.panels.iter().position(|p| p.id == id)
    }

    pub fn panel(&self, id: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.id == id)
    }

    pub fn vertex_count(&self) -> usize {
        self.panels.iter().map(|p| p.vertices.len()).sum()
    }

    pub fn triangle_count(&self) -> usize {
        self.panels.iter().map(|p| p.triangles.len()).sum()
    }

    /// Start index of each panel's vertices in the stitched vertex order.
    pub fn panel_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.panels
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.vertices.len();
                o
            })
            .collect()
    }

    /// All pattern vertices, concatenated in panel order.
    pub fn flat_vertices(&self) -> Vec<Vec2> {
        self.panels
            .iter()
            .flat_map(|p| p.vertices.iter().copied())
            .collect()
    }

    /// Replace pattern positions from a concatenated vertex list.
    pub fn set_flat_vertices(&mut self, flat: &[Vec2]) {
        let mut k = 0;
        for p in &mut self.panels {
            for v in &mut p.vertices {
                *v = flat[k];
                k += 1;
            }
        }
    }

    /// Symmetry pairs from the file, or detected ones when none are given.
    pub fn effective_symmetry_pairs(&self) -> Vec<SymmetryPair> {
        if !self.symmetry_pairs.is_empty() {
            return self.symmetry_pairs.clone();
        }
        detect_flip_symmetry(self, DEFAULT_SYMMETRY_TOLERANCE)
            .into_iter()
            .map(|d| d.pair)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
struct EdgeTagFile {
    edge: [usize; 2],
    seam: String,
}

#[derive(Serialize, Deserialize)]
struct PanelFile {
    id: String,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    seam_edge_tags: Vec<EdgeTagFile>,
}

#[derive(Serialize, Deserialize)]
struct GarmentFile {
    panels: Vec<PanelFile>,
    #[serde(default)]
    seams: Vec<Seam>,
    #[serde(default)]
    symmetry_pairs: Vec<SymmetryPair>,
    #[serde(default)]
    material: Option<Material>,
    #[serde(default)]
    reference_drape3d: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    cages: BTreeMap<String, Vec<[f64; 2]>>,
}

/// Non-fatal fix-ups applied while loading.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub warnings: Vec<String>,
}

pub fn load_garment_spec(path: impl AsRef<Path>) -> Result<GarmentSpec> {
    let (spec, report) = load_garment_spec_with_report(path)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok(spec)
}

pub fn load_garment_spec_with_report(path: impl AsRef<Path>) -> Result<(GarmentSpec, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_garment_spec(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path, message),
        other => other,
    })
}

pub fn parse_garment_spec(text: &str) -> Result<(GarmentSpec, LoadReport)> {
    let file: GarmentFile =
        serde_json::from_str(text).map_err(|e| Error::parse("<garment spec>", e))?;
    let panels = file
        .panels
        .into_iter()
        .map(|p| Panel {
            id: p.id,
            vertices: p.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect(),
            triangles: p.triangles,
            boundary_loops: p.boundary_loops,
            seam_edge_tags: p
                .seam_edge_tags
                .into_iter()
                .map(|t| (edge_key(t.edge[0], t.edge[1]), t.seam))
                .collect(),
        })
        .collect();
    let mut spec = GarmentSpec {
        panels,
        seams: file.seams,
        symmetry_pairs: file.symmetry_pairs,
        material: file.material.unwrap_or_default(),
        reference_drape3d: file
            .reference_drape3d
            .map(|d| d.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect()),
        cages: file
            .cages
            .into_iter()
            .map(|(k, v)| (k, v.iter().map(|p| Vec2::new(p[0], p[1])).collect()))
            .collect(),
    };
    let mut report = LoadReport::default();
    validate_panels(&spec)?;
    resample_seams(&mut spec, &mut report)?;
    tag_seam_edges(&mut spec);
    validate(&spec)?;
    Ok((spec, report))
}

pub fn garment_spec_to_json(spec: &GarmentSpec) -> String {
    let file = GarmentFile {
        panels: spec
            .panels
            .iter()
            .map(|p| PanelFile {
                id: p.id.clone(),
                vertices: p.vertices.iter().map(|v| [v.x, v.y]).collect(),
                triangles: p.triangles.clone(),
                boundary_loops: p.boundary_loops.clone(),
                seam_edge_tags: p
                    .seam_edge_tags
                    .iter()
                    .map(|(e, s)| EdgeTagFile {
                        edge: [e.0, e.1],
                        seam: s.clone(),
                    })
                    .collect(),
            })
            .collect(),
        seams: spec.seams.clone(),
        symmetry_pairs: spec.symmetry_pairs.clone(),
        material: Some(spec.material.clone()),
        reference_drape3d: spec
            .reference_drape3d
            .as_ref()
            .map(|d| d.iter().map(|v| [v.x, v.y, v.z]).collect()),
        cages: spec
            .cages
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|p| [p.x, p.y]).collect()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("garment spec serializes")
}

pub fn save_garment_spec(spec: &GarmentSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, garment_spec_to_json(spec)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Validation

fn vfail(msg: String) -> Error {
    Error::Validation(msg)
}

/// Per-panel triangulation and boundary checks.
fn validate_panels(spec: &GarmentSpec) -> Result<()> {
    let mut ids = HashSet::new();
    for p in &spec.panels {
        if !ids.insert(p.id.as_str()) {
            return Err(vfail(format!("duplicate panel id '{}'", p.id)));
        }
        validate_panel(p)?;
    }
    Ok(())
}

pub fn validate_panel(p: &Panel) -> Result<()> {
    let n = p.vertices.len();
    if n < 3 || p.triangles.is_empty() {
        return Err(vfail(format!("panel '{}' has no triangles", p.id)));
    }
    if p.vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
        return Err(vfail(format!("panel '{}' has non-finite vertices", p.id)));
    }
    // Directed edge -> owning triangle.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in p.triangles.iter().enumerate() {
        if tri.iter().any(|&i| i >= n) {
            return Err(vfail(format!(
                "panel '{}' triangle {t} references a missing vertex",
                p.id
            )));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(vfail(format!(
                "panel '{}' triangle {t} repeats a vertex",
                p.id
            )));
        }
        let area = signed_area2(&p.vertices[tri[0]], &p.vertices[tri[1]], &p.vertices[tri[2]]);
        if area <= 0.0 {
            return Err(vfail(format!(
                "panel '{}' triangle {t} has non-positive area {area:e}",
                p.id
            )));
        }
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            if directed.insert(e, t).is_some() {
                return Err(vfail(format!(
                    "panel '{}' is non-manifold or inconsistently oriented at edge {:?}",
                    p.id, e
                )));
            }
        }
    }
    let mut boundary: HashSet<(usize, usize)> = directed
        .keys()
        .filter(|(a, b)| !directed.contains_key(&(*b, *a)))
        .copied()
        .collect();
    if p.boundary_loops.is_empty() {
        return Err(vfail(format!("panel '{}' has no boundary loop", p.id)));
    }
    for (li, l) in p.boundary_loops.iter().enumerate() {
        if l.len() < 3 {
            return Err(vfail(format!(
                "panel '{}' boundary loop {li} is too short",
                p.id
            )));
        }
        for k in 0..l.len() {
            let e = (l[k], l[(k + 1) % l.len()]);
            if !boundary.remove(&e) {
                return Err(vfail(format!(
                    "panel '{}' boundary loop {li} edge {:?} is not a boundary edge of the triangulation",
                    p.id, e
                )));
            }
        }
        let poly: Vec<Vec2> = l.iter().map(|&i| p.vertices[i]).collect();
        if !polygon_is_simple(&poly) {
            return Err(vfail(format!(
                "panel '{}' boundary loop {li} self-intersects",
                p.id
            )));
        }
        if li == 0 && polygon_signed_area(&poly) <= 0.0 {
            return Err(vfail(format!(
                "panel '{}' outer boundary is not counterclockwise",
                p.id
            )));
        }
    }
    if let Some(e) = boundary.iter().next() {
        return Err(vfail(format!(
            "panel '{}' boundary edge {:?} is missing from the boundary loops",
            p.id, e
        )));
    }
    Ok(())
}

fn directed_boundary_edges(p: &Panel) -> HashSet<(usize, usize)> {
    let mut s = HashSet::new();
    for l in &p.boundary_loops {
        for k in 0..l.len() {
            s.insert((l[k], l[(k + 1) % l.len()]));
        }
    }
    s
}

fn validate_seam_side(spec: &GarmentSpec, seam: &Seam, side: &SeamSide) -> Result<()> {
    let p = spec.panel(&side.panel).ok_or_else(|| {
        vfail(format!(
            "seam '{}' references unknown panel '{}'",
            seam.id, side.panel
        ))
    })?;
    if side.vertices.len() < 2 {
        return Err(vfail(format!("seam '{}' side has < 2 vertices", seam.id)));
    }
    let edges = directed_boundary_edges(p);
    for w in side.vertices.windows(2) {
        if w[0] >= p.vertices.len() || w[1] >= p.vertices.len() {
            return Err(vfail(format!(
                "seam '{}' references a missing vertex of panel '{}'",
                seam.id, p.id
            )));
        }
        if !edges.contains(&(w[0], w[1])) && !edges.contains(&(w[1], w[0])) {
            return Err(vfail(format!(
                "seam '{}' edge ({}, {}) is not a boundary edge of panel '{}'",
                seam.id, w[0], w[1], p.id
            )));
        }
    }
    Ok(())
}

pub fn validate(spec: &GarmentSpec) -> Result<()> {
    validate_panels(spec)?;
    let mut seam_ids = HashSet::new();
    let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
    for s in &spec.seams {
        if !seam_ids.insert(s.id.as_str()) {
            return Err(vfail(format!("duplicate seam id '{}'", s.id)));
        }
        validate_seam_side(spec, s, &s.side_a)?;
        validate_seam_side(spec, s, &s.side_b)?;
        if s.side_a.vertices.len() != s.side_b.vertices.len() {
            return Err(vfail(format!(
                "seam '{}' sides have {} and {} vertices",
                s.id,
                s.side_a.vertices.len(),
                s.side_b.vertices.len()
            )));
        }
        for side in [&s.side_a, &s.side_b] {
            let pi = spec.panel_index(&side.panel).unwrap();
            let mut seen = HashSet::new();
            for &v in &side.vertices {
                if seen.insert(v) {
                    *uses.entry((pi, v)).or_default() += 1;
                }
            }
        }
    }
    if let Some(((pi, v), _)) = uses.iter().find(|(_, &c)| c > 2) {
        return Err(vfail(format!(
            "vertex {v} of panel '{}' appears in more than two seams",
            spec.panels[*pi].id
        )));
    }
    for pair in &spec.symmetry_pairs {
        let a = spec.panel(&pair.panel_a).ok_or_else(|| {
            vfail(format!("symmetry pair references unknown panel '{}'", pair.panel_a))
        })?;
        let b = spec.panel(&pair.panel_b).ok_or_else(|| {
            vfail(format!("symmetry pair references unknown panel '{}'", pair.panel_b))
        })?;
        if a.vertices.len() != b.vertices.len() {
            return Err(vfail(format!(
                "symmetry pair ('{}', '{}') has unequal vertex counts",
                a.id, b.id
            )));
        }
        let mut seen = vec![false; b.vertices.len()];
        if pair.correspondence.len() != a.vertices.len()
            || pair
                .correspondence
                .iter()
                .any(|&j| j >= seen.len() || std::mem::replace(&mut seen[j], true))
        {
            return Err(vfail(format!(
                "symmetry pair ('{}', '{}') correspondence is not a permutation",
                a.id, b.id
            )));
        }
    }
    let m = spec.material.clone();
    if !(m.density > 0.0)
        || !(m.stretch_compliance >= 0.0)
        || !(m.shear_compliance >= 0.0)
        || m.bend_compliance.is_some_and(|b| !(b >= 0.0))
    {
        return Err(vfail(
            "material density must be positive and compliances non-negative".into(),
        ));
    }
    if let Some(d) = &spec.reference_drape3d {
        if d.len() != spec.vertex_count() {
            return Err(vfail(format!(
                "reference_drape3d has {} vertices, stitched mesh has {}",
                d.len(),
                spec.vertex_count()
            )));
        }
    }
    for (id, cage) in &spec.cages {
        if spec.panel(id).is_none() {
            return Err(vfail(format!("cage given for unknown panel '{id}'")));
        }
        if cage.len() < 3 {
            return Err(vfail(format!("cage of panel '{id}' has < 3 vertices")));
        }
    }
    Ok(())
}

/// Record every seam edge in its panels' `seam_edge_tags`.
pub fn tag_seam_edges(spec: &mut GarmentSpec) {
    let seams = spec.seams.clone();
    for s in &seams {
        for side in [&s.side_a, &s.side_b] {
            let pi = spec.panel_index(&side.panel).unwrap();
            for w in side.vertices.windows(2) {
                spec.panels[pi]
                    .seam_edge_tags
                    .insert(edge_key(w[0], w[1]), s.id.clone());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Seam resampling

/// Split the boundary edge (a, b) of `panel` at `point`, returning the new
/// vertex index. The adjacent triangle is split in two and the boundary
/// loop gains the vertex between a and b.
fn split_boundary_edge(panel: &mut Panel, a: usize, b: usize, point: Vec2) -> usize {
    let nv = panel.vertices.len();
    panel.vertices.push(point);
    let t = panel
        .triangles
        .iter()
        .position(|tri| (0..3).any(|k| edge_key(tri[k], tri[(k + 1) % 3]) == edge_key(a, b)))
        .expect("boundary edge has a triangle");
    let tri = panel.triangles[t];
    let k = (0..3)
        .find(|&k| edge_key(tri[k], tri[(k + 1) % 3]) == edge_key(a, b))
        .unwrap();
    let (u, v, w) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
    panel.triangles[t] = [u, nv, w];
    panel.triangles.push([nv, v, w]);
    for l in &mut panel.boundary_loops {
        let len = l.len();
        if let Some(i) = (0..len).find(|&i| edge_key(l[i], l[(i + 1) % len]) == edge_key(a, b)) {
            l.insert(i + 1, nv);
            break;
        }
    }
    nv
}

/// Equalize seam side vertex counts by inserting arc-length midpoints into
/// the longest edges of the sparser side.
fn resample_seams(spec: &mut GarmentSpec, report: &mut LoadReport) -> Result<()> {
    for si in 0..spec.seams.len() {
        let seam = spec.seams[si].clone();
        for side in [&seam.side_a, &seam.side_b] {
            spec.panel(&side.panel).ok_or_else(|| {
                vfail(format!(
                    "seam '{}' references unknown panel '{}'",
                    seam.id, side.panel
                ))
            })?;
        }
        let (na, nb) = (seam.side_a.vertices.len(), seam.side_b.vertices.len());
        if na == nb {
            continue;
        }
        validate_seam_side(spec, &seam, &seam.side_a)?;
        validate_seam_side(spec, &seam, &seam.side_b)?;
        let (short_is_a, target) = (na < nb, na.max(nb));
        let side = if short_is_a {
            &seam.side_a
        } else {
            &seam.side_b
        };
        let pi = spec.panel_index(&side.panel).unwrap();
        let mut verts = side.vertices.clone();
        while verts.len() < target {
            let panel = &spec.panels[pi];
            let (k, _) = verts
                .windows(2)
                .enumerate()
                .map(|(k, w)| (k, (panel.vertices[w[1]] - panel.vertices[w[0]]).norm()))
                .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            let (a, b) = (verts[k], verts[k + 1]);
            let mid = (panel.vertices[a] + panel.vertices[b]) * 0.5;
            let nv = split_boundary_edge(&mut spec.panels[pi], a, b, mid);
            verts.insert(k + 1, nv);
        }
        if short_is_a {
            spec.seams[si].side_a.vertices = verts;
        } else {
            spec.seams[si].side_b.vertices = verts;
        }
        report.warnings.push(format!(
            "seam '{}': resampled side on panel '{}' from {} to {} vertices",
            seam.id,
            side.panel,
            na.min(nb),
            target
        ));
        if spec.reference_drape3d.take().is_some() {
            report.warnings.push(
                "reference_drape3d dropped: seam resampling changed the vertex count".into(),
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Metrics

pub fn panel_area(panel: &Panel) -> f64 {
    panel
        .triangles
        .iter()
        .map(|t| signed_area2(&panel.vertices[t[0]], &panel.vertices[t[1]], &panel.vertices[t[2]]))
        .sum()
}

/// Normalized triangle quality 4√3·A / (l₁² + l₂² + l₃²): 1 for equilateral
/// triangles, 0 for degenerate ones.
pub fn triangle_quality(p0: &Vec2, p1: &Vec2, p2: &Vec2) -> f64 {
    let l2 = (p1 - p0).norm_squared() + (p2 - p1).norm_squared() + (p0 - p2).norm_squared();
    if l2 == 0.0 {
        return 0.0;
    }
    let area = signed_area2(p0, p1, p2).abs();
    (4.0 * 3f64.sqrt() * area / l2).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub min: f64,
    pub mean: f64,
}

pub fn quality_of_triangles<'a>(
    tris: impl Iterator<Item = (&'a Vec2, &'a Vec2, &'a Vec2)>,
) -> QualityReport {
    let (mut min, mut sum, mut n) = (f64::INFINITY, 0.0, 0usize);
    for (a, b, c) in tris {
        let q = triangle_quality(a, b, c);
        min = min.min(q);
        sum += q;
        n += 1;
    }
    if n == 0 {
        return QualityReport { min: 0.0, mean: 0.0 };
    }
    QualityReport {
        min,
        mean: sum / n as f64,
    }
}

pub fn pattern_quality_report(spec: &GarmentSpec) -> QualityReport {
    quality_of_triangles(spec.panels.iter().flat_map(|p| {
        p.triangles
            .iter()
            .map(move |t| (&p.vertices[t[0]], &p.vertices[t[1]], &p.vertices[t[2]]))
    }))
}

// ---------------------------------------------------------------------------
// Flip symmetry

pub const DEFAULT_SYMMETRY_TOLERANCE: f64 = 1e-3;

/// A 2D reflection x ↦ Rx + t (det R = −1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reflection {
    pub linear: Mat2,
    pub offset: Vec2,
}

impl Reflection {
    pub fn apply(&self, p: &Vec2) -> Vec2 {
        self.linear * p + self.offset
    }

    /// Least-squares reflection mapping `from[i]` onto `to[i]`.
    pub fn fit(from: &[Vec2], to: &[Vec2]) -> Reflection {
        let n = from.len() as f64;
        let cf = from.iter().sum::<Vec2>() / n;
        let ct = to.iter().sum::<Vec2>() / n;
        // R = [[c, s], [s, -c]] maximizing Σ q·R p.
        let (mut c, mut s) = (0.0, 0.0);
        for (p, q) in from.iter().zip(to) {
            let (p, q) = (p - cf, q - ct);
            c += q.x * p.x - q.y * p.y;
            s += q.x * p.y + q.y * p.x;
        }
        let r = (c * c + s * s).sqrt();
        let (c, s) = if r > 0.0 { (c / r, s / r) } else { (-1.0, 0.0) };
        let linear = Mat2::new(c, s, s, -c);
        Reflection {
            linear,
            offset: ct - linear * cf,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectedSymmetry {
    pub pair: SymmetryPair,
    pub reflection: Reflection,
}

/// Principal-axis frame of the outer boundary: (origin, e1, e2) with
/// e2 = perp(e1). Returns several candidate e1 directions when the axes are
/// ambiguous (near-isotropic boundary).
fn panel_frames(p: &Panel) -> (Vec2, Vec<Vec2>) {
    let poly = p.outer_polygon();
    let c = polygon_centroid(&poly);
    let mut cov = Mat2::zeros();
    for q in &poly {
        let d = q - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (i_max, i_min) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let mut axes = vec![eig.eigenvectors.column(i_max).into_owned()];
    let spread = eig.eigenvalues[i_max] - eig.eigenvalues[i_min];
    if spread <= 1e-6 * eig.eigenvalues[i_max].abs().max(1e-300) {
        // Isotropic: try every longest-edge direction.
        let n = poly.len();
        let lens: Vec<f64> = (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).collect();
        let lmax = lens.iter().cloned().fold(0.0, f64::max);
        for i in 0..n {
            if lens[i] >= lmax * (1.0 - 1e-9) {
                axes.push((poly[(i + 1) % n] - poly[i]).normalize());
            }
        }
    }
    (c, axes)
}

fn local_coords(p: &Panel, origin: &Vec2, e1: &Vec2) -> Vec<Vec2> {
    let e2 = crate::geom::perp(e1);
    p.vertices
        .iter()
        .map(|v| {
            let d = v - origin;
            Vec2::new(d.dot(e1), d.dot(&e2))
        })
        .collect()
}

fn match_points(a: &[Vec2], b: &[Vec2], tol: f64) -> Option<Vec<usize>> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::with_capacity(a.len());
    for p in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .map(|(j, q)| (j, (p - q).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        if d > tol || used[j] {
            return None;
        }
        used[j] = true;
        out.push(j);
    }
    Some(out)
}

/// Find pairs of panels whose geometry matches under a reflection, within
/// `tol_rel` times the panel diameter. Each panel joins at most one pair.
pub fn detect_flip_symmetry(spec: &GarmentSpec, tol_rel: f64) -> Vec<DetectedSymmetry> {
    let mut out = Vec::new();
    let mut taken = vec![false; spec.panels.len()];
    for i in 0..spec.panels.len() {
        if taken[i] {
            continue;
        }
        let pa = &spec.panels[i];
        let (ca, axes_a) = panel_frames(pa);
        let la = local_coords(pa, &ca, &axes_a[0]);
        let tol = tol_rel * pa.diameter();
        'candidates: for j in i + 1..spec.panels.len() {
            if taken[j] {
                continue;
            }
            let pb = &spec.panels[j];
            if pb.vertices.len() != pa.vertices.len() || pb.triangles.len() != pa.triangles.len()
            {
                continue;
            }
            let (cb, axes_b) = panel_frames(pb);
            for e1 in &axes_b {
                let lb = local_coords(pb, &cb, e1);
                for flip in [Vec2::new(-1.0, 1.0), Vec2::new(1.0, -1.0)] {
                    let mirrored: Vec<Vec2> = la.iter().map(|p| p.component_mul(&flip)).collect();
                    if let Some(corr) = match_points(&mirrored, &lb, tol) {
                        let to: Vec<Vec2> = corr.iter().map(|&k| pb.vertices[k]).collect();
                        let reflection = Reflection::fit(&pa.vertices, &to);
                        out.push(DetectedSymmetry {
                            pair: SymmetryPair {
                                panel_a: pa.id.clone(),
                                panel_b: pb.id.clone(),
                                correspondence: corr,
                            },
                            reflection,
                        });
                        taken[i] = true;
                        taken[j] = true;
                        break 'candidates;
                    }
                }
            }
        }
    }
    out
}

/// Reflection implied by an explicit symmetry pair's correspondence.
pub fn pair_reflection(spec: &GarmentSpec, pair: &SymmetryPair) -> Reflection {
    let a = spec.panel(&pair.panel_a).expect("validated pair");
    let b = spec.panel(&pair.panel_b).expect("validated pair");
    let to: Vec<Vec2> = pair.correspondence.iter().map(|&k| b.vertices[k]).collect();
    Reflection::fit(&a.vertices, &to)
}

/// Largest distance between a panel vertex mirrored through the pair's
/// reflection and its partner.
pub fn mirror_error(spec: &GarmentSpec, pair: &SymmetryPair, r: &Reflection) -> f64 {
    let a = spec.panel(&pair.panel_a).unwrap();
    let b = spec.panel(&pair.panel_b).unwrap();
    a.vertices
        .iter()
        .zip(&pair.correspondence)
        .map(|(p, &k)| (r.apply(p) - b.vertices[k]).norm())
        .fold(0.0, f64::max)
}

/// Signed area derivative helper shared with the loss code: gradient of the
/// signed area of (a, b, c) with respect to each vertex.
pub fn signed_area_gradient(a: &Vec2, b: &Vec2, c: &Vec2) -> [Vec2; 3] {
    let gb = Vec2::new(c.y - a.y, -(c.x - a.x)) * 0.5;
    let gc = Vec2::new(-(b.y - a.y), b.x - a.x) * 0.5;
    [-(gb + gc), gb, gc]
}
