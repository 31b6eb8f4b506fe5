//! Signed distance to a static body mesh and one-sided vertex contacts.
//!
//! Closest points come from an AABB tree over the body triangles; the sign
//! is taken from the angle-weighted pseudo-normal of the closest feature.

use std::collections::HashMap;

use crate::geom::Vec3;
use crate::mesh::BodyMesh;
use crate::pattern::edge_key;

/// Linearized body contact for one garment vertex: the constraint is
/// `margin − normal·(x − point)`, active while positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub vertex: usize,
    pub normal: Vec3,
    pub point: Vec3,
}

#[derive(Clone, Copy, Debug)]
enum Feature {
    Face,
    Edge(usize, usize),
    Vertex(usize),
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Extra distance beyond the margin at which contact rows are created [m].
/// Stiff cloth can travel several millimetres during one step's projection,
/// so rows must exist before the margin is reached.
pub const DEFAULT_DETECTION_BAND: f64 = 0.02;

/// Closest-point and signed-distance queries against a body mesh.
#[derive(Clone, Debug)]
pub struct BodySdf {
    verts: Vec<Vec3>,
    tris: Vec<[usize; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    face_normals: Vec<Vec3>,
    edge_normals: HashMap<(usize, usize), Vec3>,
    vertex_normals: Vec<Vec3>,
    pub margin: f64,
    /// Vertices within `margin + detection_band` get a contact row. The row
    /// only acts once the margin is violated, but having it in place stops a
    /// resting vertex at the margin instead of letting it bounce.
    pub detection_band: f64,
}

/// Result of a closest-point query.
#[derive(Clone, Copy, Debug)]
pub struct SignedDistance {
    pub distance: f64,
    pub closest: Vec3,
    /// Outward unit direction at the closest point.
    pub normal: Vec3,
}

impl BodySdf {
    pub fn new(body: &BodyMesh) -> Self {
        let verts = body.vertices.clone();
        let tris = body.triangles.clone();
        let mut face_normals = Vec::with_capacity(tris.len());
        let mut edge_normals: HashMap<(usize, usize), Vec3> = HashMap::new();
        let mut vertex_normals = vec![Vec3::zeros(); verts.len()];
        for t in &tris {
            let (a, b, c) = (verts[t[0]], verts[t[1]], verts[t[2]]);
            let n = (b - a).cross(&(c - a));
            let n = if n.norm() > 0.0 { n.normalize() } else { n };
            face_normals.push(n);
            for k in 0..3 {
                *edge_normals
                    .entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_insert_with(Vec3::zeros) += n;
                let p = verts[t[k]];
                let e1 = verts[t[(k + 1) % 3]] - p;
                let e2 = verts[t[(k + 2) % 3]] - p;
                let denom = e1.norm() * e2.norm();
                if denom > 0.0 {
                    let angle = (e1.dot(&e2) / denom).clamp(-1.0, 1.0).acos();
                    vertex_normals[t[k]] += n * angle;
                }
            }
        }
        let mut sdf = BodySdf {
            order: (0..tris.len()).collect(),
            verts,
            tris,
            nodes: Vec::new(),
            face_normals,
            edge_normals,
            vertex_normals,
            margin: body.collision_margin,
            detection_band: DEFAULT_DETECTION_BAND.max(body.collision_margin),
        };
        if !sdf.tris.is_empty() {
            let n = sdf.tris.len();
            sdf.build(0, n);
        }
        sdf
    }

    fn centroid(&self, t: usize) -> Vec3 {
        let tri = self.tris[t];
        (self.verts[tri[0]] + self.verts[tri[1]] + self.verts[tri[2]]) / 3.0
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut bbox = Aabb::empty();
        for &t in &self.order[start..end] {
            for &v in &self.tris[t] {
                bbox.grow(&self.verts[v]);
            }
        }
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return self.nodes.len() - 1;
        }
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            cb.grow(&self.centroid(t));
        }
        let ext = cb.hi - cb.lo;
        let axis = ext.imax();
        let mut slice: Vec<usize> = self.order[start..end].to_vec();
        slice.sort_by(|&a, &b| {
            self.centroid(a)[axis]
                .partial_cmp(&self.centroid(b)[axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        self.order[start..end].copy_from_slice(&slice);
        let mid = (start + end) / 2;
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            bbox,
            start: 0,
            end: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[idx] = Node::Inner { bbox, left, right };
        idx
    }

    /// Signed distance from `p` to the body surface (negative inside).
    pub fn query(&self, p: &Vec3) -> Option<SignedDistance> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, Vec3::zeros(), 0usize, Feature::Face);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bbox().dist2(p) >= best.0 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let tri = self.tris[t];
                        let (c, f) = closest_point_triangle(
                            p,
                            &self.verts[tri[0]],
                            &self.verts[tri[1]],
                            &self.verts[tri[2]],
                        );
                        let d2 = (p - c).norm_squared();
                        if d2 < best.0 {
                            let f = match f {
                                LocalFeature::Face => Feature::Face,
                                LocalFeature::Edge(i, j) => Feature::Edge(tri[i], tri[j]),
                                LocalFeature::Vertex(i) => Feature::Vertex(tri[i]),
                            };
                            best = (d2, c, t, f);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bbox().dist2(p);
                    let dr = self.nodes[right].bbox().dist2(p);
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let (d2, closest, t, feature) = best;
        let pseudo = match feature {
            Feature::Face => self.face_normals[t],
            Feature::Edge(a, b) => self.edge_normals[&edge_key(a, b)],
            Feature::Vertex(v) => self.vertex_normals[v],
        };
        let d = d2.sqrt();
        let diff = p - closest;
        let sign = if diff.dot(&pseudo) >= 0.0 { 1.0 } else { -1.0 };
        let normal = if d > 1e-12 {
            diff * (sign / d)
        } else {
            pseudo.normalize()
        };
        Some(SignedDistance {
            distance: sign * d,
            closest,
            normal,
        })
    }

    /// Contacts for every free vertex within the detection distance.
    pub fn contacts(&self, x: &[Vec3], pinned: &[bool]) -> Vec<Contact> {
        let mut out = Vec::new();
        for (v, p) in x.iter().enumerate() {
            if pinned[v] {
                continue;
            }
            if let Some(sd) = self.query(p) {
                if sd.distance < self.margin + self.detection_band {
                    out.push(Contact {
                        vertex: v,
                        normal: sd.normal,
                        point: sd.closest,
                    });
                }
            }
        }
        out
    }
}

/// Contacts for garment positions `x` against `body` (empty when no body).
pub fn collision_constraints(x: &[Vec3], pinned: &[bool], body: Option<&BodySdf>) -> Vec<Contact> {
    body.map(|b| b.contacts(x, pinned)).unwrap_or_default()
}

#[derive(Clone, Copy, Debug)]
enum LocalFeature {
    Face,
    Edge(usize, usize),
    Vertex(usize),
}

/// Closest point on triangle (a, b, c) to p, with the feature it lies on.
fn closest_point_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, LocalFeature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, LocalFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, LocalFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, LocalFeature::Edge(0, 1));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, LocalFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, LocalFeature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, LocalFeature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, LocalFeature::Face)
}
