//! Green-coordinate control cages for 2D panels.
//!
//! A panel vertex η inside a cage with vertices ζⱼ and edges tⱼ = [ζⱼ, ζⱼ₊₁]
//! is written as
//!
//! ```text
//! η = Σⱼ φⱼ(η) ζⱼ + Σⱼ ψⱼ(η) σⱼ n̂ⱼ
//! ```
//!
//! where φ, ψ are the closed-form 2D Green coordinates of the rest cage,
//! n̂ⱼ is the outward unit normal of edge j and σⱼ is the ratio of deformed
//! to rest edge length. Because σⱼ n̂ⱼ equals the rotated deformed edge
//! divided by its rest length, deformation is linear in the cage vertices
//! and reproduces similarity transforms exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{
    diameter, point_in_polygon, point_polygon_distance, point_segment_distance,
    polygon_centroid, polygon_is_convex, polygon_is_simple, polygon_signed_area, Vec2,
};
use crate::pattern::{Panel, Reflection};

pub const DEFAULT_MARGIN_FRACTION: f64 = 0.05;
pub const DEFAULT_MAX_VERTICES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Cage {
    pub panel_id: String,
    /// Counterclockwise control polygon.
    pub vertices: Vec<Vec2>,
    pub rest_edge_lengths: Vec<f64>,
    pub rest_edge_normals: Vec<Vec2>,
}

/// Outward normal direction of an edge of a counterclockwise polygon,
/// scaled by the edge length.
#[inline]
fn outward(e: &Vec2) -> Vec2 {
    Vec2::new(e.y, -e.x)
}

impl Cage {
    /// Cage over `vertices`, reoriented counterclockwise if needed.
    pub fn new(panel_id: impl Into<String>, mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Cage("a cage needs at least 3 vertices".into()));
        }
        if polygon_signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        if !polygon_is_simple(&vertices) {
            return Err(Error::Cage("cage polygon is not simple".into()));
        }
        let n = vertices.len();
        let mut lens = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for j in 0..n {
            let e = vertices[(j + 1) % n] - vertices[j];
            let l = e.norm();
            lens.push(l);
            normals.push(outward(&e) / l);
        }
        Ok(Cage {
            panel_id: panel_id.into(),
            vertices,
            rest_edge_lengths: lens,
            rest_edge_normals: normals,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Mirror image of this cage through `r`, kept counterclockwise. Returns
    /// the mirrored cage and `corr[j]`, the index of the image of vertex j.
    pub fn mirrored(&self, panel_id: impl Into<String>, r: &Reflection) -> (Cage, Vec<usize>) {
        let n = self.len();
        // Reflection flips orientation, so reverse to stay counterclockwise.
        let verts: Vec<Vec2> = (0..n).map(|k| r.apply(&self.vertices[n - 1 - k])).collect();
        let cage = Cage::new(panel_id, verts).expect("mirror of a valid cage is valid");
        let corr = (0..n).map(|j| n - 1 - j).collect();
        (cage, corr)
    }
}

/// Douglas–Peucker on an open chain, keeping both ends.
fn dp_chain(pts: &[Vec2], eps: f64, keep: &mut Vec<Vec2>) {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let (mut imax, mut dmax) = (0, -1.0);
    for (i, p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = point_segment_distance(p, &a, &b);
        if d > dmax {
            imax = i;
            dmax = d;
        }
    }
    if dmax > eps {
        dp_chain(&pts[..=imax], eps, keep);
        keep.pop();
        dp_chain(&pts[imax..], eps, keep);
    } else {
        keep.push(a);
        keep.push(b);
    }
}

/// Douglas–Peucker simplification of a closed polygon.
pub fn simplify_closed(poly: &[Vec2], eps: f64) -> Vec<Vec2> {
    let n = poly.len();
    let c = polygon_centroid(poly);
    let i0 = (0..n)
        .max_by(|&a, &b| {
            (poly[a] - c)
                .norm()
                .partial_cmp(&(poly[b] - c).norm())
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap();
    let i1 = (0..n)
        .max_by(|&a, &b| {
            (poly[a] - poly[i0])
                .norm()
                .partial_cmp(&(poly[b] - poly[i0]).norm())
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap();
    let chain = |from: usize, to: usize| -> Vec<Vec2> {
        let mut out = vec![poly[from]];
        let mut i = from;
        while i != to {
            i = (i + 1) % n;
            out.push(poly[i]);
        }
        out
    };
    let mut keep = Vec::new();
    dp_chain(&chain(i0, i1), eps, &mut keep);
    keep.pop();
    dp_chain(&chain(i1, i0), eps, &mut keep);
    keep.pop();
    keep
}

/// Miter offset of a counterclockwise polygon by `d` along outward normals.
pub fn offset_polygon(poly: &[Vec2], d: f64) -> Vec<Vec2> {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let prev = poly[(i + n - 1) % n];
            let next = poly[(i + 1) % n];
            let n1 = outward(&(poly[i] - prev)).normalize();
            let n2 = outward(&(next - poly[i])).normalize();
            let denom = 1.0 + n1.dot(&n2);
            if denom < 1e-6 {
                poly[i] + n1 * d
            } else {
                poly[i] + (n1 + n2) * (d / denom)
            }
        })
        .collect()
}

fn check_encloses(cage: &[Vec2], panel: &Panel) -> Result<()> {
    let tol = 1e-9 * diameter(cage);
    for (i, v) in panel.vertices.iter().enumerate() {
        if !point_in_polygon(v, cage) || point_polygon_distance(v, cage) <= tol {
            return Err(Error::Cage(format!(
                "panel '{}' vertex {i} is not strictly inside its cage",
                panel.id
            )));
        }
    }
    Ok(())
}

/// Cage enclosing `panel`: the outer boundary simplified to at most
/// `max_vertices` vertices and offset outward by `margin` (plus the
/// simplification tolerance).
pub fn build_cage(panel: &Panel, margin: f64, max_vertices: usize) -> Result<Cage> {
    if !(margin > 0.0) {
        return Err(Error::Cage(format!(
            "panel '{}': cage margin must be positive",
            panel.id
        )));
    }
    if max_vertices < 4 {
        return Err(Error::Cage("max_vertices must be at least 4".into()));
    }
    let poly = panel.outer_polygon();
    let diam = diameter(&poly);
    let mut eps = 1e-12 * diam;
    let simplified = loop {
        let s = simplify_closed(&poly, eps);
        if s.len() <= max_vertices {
            break s;
        }
        eps = if eps < 1e-4 * diam { 1e-4 * diam } else { eps * 1.5 };
    };
    let verts = offset_polygon(&simplified, margin + eps);
    if !polygon_is_simple(&verts) {
        return Err(Error::Cage(format!(
            "panel '{}': offset cage self-intersects; increase max_vertices or reduce the margin",
            panel.id
        )));
    }
    check_encloses(&verts, panel).map_err(|e| {
        Error::Cage(format!("{e}; increase max_vertices"))
    })?;
    Cage::new(panel.id.clone(), verts)
}

/// Cage from user-supplied vertices, checked for enclosure.
pub fn cage_from_vertices(panel: &Panel, verts: Vec<Vec2>) -> Result<Cage> {
    let cage = Cage::new(panel.id.clone(), verts)?;
    check_encloses(&cage.vertices, panel)?;
    Ok(cage)
}

pub fn is_convex(cage: &Cage) -> bool {
    polygon_is_convex(&cage.vertices)
}

/// Green-coordinate weights of a set of points in a rest cage.
#[derive(Clone, Debug, PartialEq)]
pub struct CageCoords {
    /// points × cage vertices.
    pub w1: DMatrix<f64>,
    /// points × cage edges.
    pub w2: DMatrix<f64>,
}

/// Closed-form 2D Green coordinates of `points` with respect to `cage`.
pub fn compute_green_coords(cage: &Cage, points: &[Vec2]) -> Result<CageCoords> {
    let c = cage.len();
    let mut w1 = DMatrix::zeros(points.len(), c);
    let mut w2 = DMatrix::zeros(points.len(), c);
    let tol = 1e-12 * diameter(&cage.vertices);
    for (pi, eta) in points.iter().enumerate() {
        if !point_in_polygon(eta, &cage.vertices)
            || point_polygon_distance(eta, &cage.vertices) <= tol
        {
            return Err(Error::Cage(format!(
                "point {pi} ({:.6}, {:.6}) is not strictly inside the cage of panel '{}'",
                eta.x, eta.y, cage.panel_id
            )));
        }
        for j in 0..c {
            let j2 = (j + 1) % c;
            let v1 = cage.vertices[j];
            let v2 = cage.vertices[j2];
            let a = v2 - v1;
            let b = v1 - eta;
            let q = a.dot(&a);
            let s = b.dot(&b);
            let r = 2.0 * a.dot(&b);
            // The closed form is written for clockwise cages.
            let ba = -b.dot(&outward(&a));
            let srt = (4.0 * s * q - r * r).max(0.0).sqrt();
            let l0 = s.ln();
            let l1 = (s + q + r).ln();
            let a0 = (r / srt).atan() / srt;
            let a1 = ((2.0 * q + r) / srt).atan() / srt;
            let a10 = a1 - a0;
            let l10 = l1 - l0;
            w2[(pi, j)] =
                -q.sqrt() / (4.0 * PI) * ((4.0 * s - r * r / q) * a10 + r / (2.0 * q) * l10 + l1 - 2.0);
            w1[(pi, j2)] -= ba / (2.0 * PI) * (l10 / (2.0 * q) - a10 * r / q);
            w1[(pi, j)] += ba / (2.0 * PI) * (l10 / (2.0 * q) - a10 * (2.0 + r / q));
        }
    }
    Ok(CageCoords { w1, w2 })
}

/// Length-scaled outward edge normals σⱼ n̂ⱼ of a deformed cage.
fn scaled_normals(cage_rest: &Cage, zeta: &[Vec2]) -> Result<Vec<Vec2>> {
    let c = zeta.len();
    (0..c)
        .map(|j| {
            let e = zeta[(j + 1) % c] - zeta[j];
            if e.norm() == 0.0 {
                return Err(Error::Cage(format!(
                    "cage of panel '{}' has a zero-length edge {j}",
                    cage_rest.panel_id
                )));
            }
            Ok(outward(&e) / cage_rest.rest_edge_lengths[j])
        })
        .collect()
}

/// Panel vertices for deformed cage vertices `zeta`.
pub fn deform(coords: &CageCoords, cage_rest: &Cage, zeta: &[Vec2]) -> Result<Vec<Vec2>> {
    if zeta.len() != cage_rest.len() || coords.w1.ncols() != zeta.len() {
        return Err(Error::Dimension(format!(
            "cage has {} vertices, got {}",
            cage_rest.len(),
            zeta.len()
        )));
    }
    let normals = scaled_normals(cage_rest, zeta)?;
    Ok((0..coords.w1.nrows())
        .map(|i| {
            let mut p = Vec2::zeros();
            for j in 0..zeta.len() {
                p += zeta[j] * coords.w1[(i, j)] + normals[j] * coords.w2[(i, j)];
            }
            p
        })
        .collect())
}

/// Jacobian d x̄ / d ζ, (2·points) × (2·cage vertices), with x/y
/// interleaved in both rows and columns.
pub fn cage_jacobian(coords: &CageCoords, cage_rest: &Cage, zeta: &[Vec2]) -> Result<DMatrix<f64>> {
    scaled_normals(cage_rest, zeta)?;
    let (np, c) = (coords.w1.nrows(), cage_rest.len());
    let mut jac = DMatrix::zeros(2 * np, 2 * c);
    for i in 0..np {
        for k in 0..c {
            jac[(2 * i, 2 * k)] += coords.w1[(i, k)];
            jac[(2 * i + 1, 2 * k + 1)] += coords.w1[(i, k)];
        }
        for j in 0..c {
            // σⱼn̂ⱼ = M (ζⱼ₊₁ − ζⱼ) / Lⱼ with M = [[0, 1], [−1, 0]].
            let w = coords.w2[(i, j)] / cage_rest.rest_edge_lengths[j];
            let j2 = (j + 1) % c;
            for (k, sign) in [(j2, 1.0), (j, -1.0)] {
                jac[(2 * i, 2 * k + 1)] += sign * w;
                jac[(2 * i + 1, 2 * k)] -= sign * w;
            }
        }
    }
    Ok(jac)
}

/// True when `zeta` is a simple polygon strictly containing `points`.
pub fn cage_encloses(zeta: &[Vec2], points: &[Vec2]) -> bool {
    polygon_is_simple(zeta)
        && polygon_signed_area(zeta) > 0.0
        && points.iter().all(|p| point_in_polygon(p, zeta))
}

/// SVG drawing of a panel triangulation and its cage, for inspection.
pub fn cage_svg(points: &[Vec2], triangles: &[[usize; 3]], zeta: &[Vec2]) -> String {
    let all: Vec<Vec2> = points.iter().chain(zeta).copied().collect();
    let lo = all.iter().fold(Vec2::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = all.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let size = (hi - lo).max().max(1e-9);
    let scale = 800.0 / size;
    let pt = |p: &Vec2| ((p.x - lo.x) * scale + 10.0, (hi.y - p.y) * scale + 10.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}">"#,
        w = (hi.x - lo.x) * scale + 20.0,
        h = (hi.y - lo.y) * scale + 20.0
    );
    for t in triangles {
        let pts: Vec<String> = t
            .iter()
            .map(|&i| {
                let (x, y) = pt(&points[i]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#888" stroke-width="0.5"/>"##,
            pts.join(" ")
        );
    }
    let cage: Vec<String> = zeta
        .iter()
        .map(|p| {
            let (x, y) = pt(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="none" stroke="#c00" stroke-width="1.5"/>"##,
        cage.join(" ")
    );
    for p in zeta {
        let (x, y) = pt(p);
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#c00"/>"##);
    }
    s.push_str("</svg>\n");
    s
}
