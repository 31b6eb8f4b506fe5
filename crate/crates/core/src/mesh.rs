//! Stitched simulation mesh assembled from a garment spec, plus the body and
//! target-drape inputs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{triangle_area3, Mat2, Vec2, Vec3};
use crate::obj;
use crate::pattern::{edge_key, GarmentSpec, Material};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexClass {
    Interior,
    Boundary,
    Seam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimTriangle {
    pub verts: [usize; 3],
    pub panel: usize,
}

/// Rest-shape quantities of one triangle derived from its 2D pattern
/// coordinates: the inverse edge matrix and the (square root of the) area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleRest {
    pub inv_dm: Mat2,
    pub area: f64,
    pub sqrt_area: f64,
}

impl TriangleRest {
    pub fn from_points(p0: &Vec2, p1: &Vec2, p2: &Vec2) -> Option<Self> {
        let dm = Mat2::from_columns(&[p1 - p0, p2 - p0]);
        let det = dm.determinant();
        if !(det > 0.0) {
            return None;
        }
        let inv_dm = Mat2::new(dm[(1, 1)], -dm[(0, 1)], -dm[(1, 0)], dm[(0, 0)]) / det;
        let area = 0.5 * det;
        Some(TriangleRest {
            inv_dm,
            area,
            sqrt_area: area.sqrt(),
        })
    }
}

/// Distance-based bending element across an interior edge: the two vertices
/// opposite the shared edge keep their flat-pattern distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendPair {
    pub verts: [usize; 2],
    pub rest_length: f64,
}

#[derive(Clone, Debug)]
pub struct SimMesh {
    pub panel_ids: Vec<String>,
    /// `panel_offsets[p]..panel_offsets[p + 1]` are panel p's vertices.
    pub panel_offsets: Vec<usize>,
    /// Pattern-space (rest) position of every sim vertex.
    pub rest2d: Vec<Vec2>,
    pub triangles: Vec<SimTriangle>,
    pub tri_rest: Vec<TriangleRest>,
    /// Zero-rest-length vertex pairs joining seam sides.
    pub stitches: Vec<[usize; 2]>,
    pub bends: Vec<BendPair>,
    pub mass: Vec<f64>,
    pub inv_mass: Vec<f64>,
    pub pinned: Vec<bool>,
    pub class: Vec<VertexClass>,
    pub material: Material,
    /// Per seam: (side a, side b) vertex pairs in sim indexing.
    pub seam_pairs: Vec<Vec<[usize; 2]>>,
    /// Boundary loops in sim indexing, all panels.
    pub boundary_loops: Vec<Vec<usize>>,
}

impl SimMesh {
    pub fn num_vertices(&self) -> usize {
        self.rest2d.len()
    }

    pub fn num_panels(&self) -> usize {
        self.panel_ids.len()
    }

    pub fn panel_range(&self, p: usize) -> std::ops::Range<usize> {
        self.panel_offsets[p]..self.panel_offsets[p + 1]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// A one-triangle mesh carrying only rest data, for evaluating triangle
    /// constraints in isolation.
    pub(crate) fn single_triangle(rest: TriangleRest) -> SimMesh {
        SimMesh {
            panel_ids: vec![String::new()],
            panel_offsets: vec![0, 3],
            rest2d: vec![Vec2::zeros(); 3],
            triangles: vec![SimTriangle {
                verts: [0, 1, 2],
                panel: 0,
            }],
            tri_rest: vec![rest],
            stitches: vec![],
            bends: vec![],
            mass: vec![1.0; 3],
            inv_mass: vec![1.0; 3],
            pinned: vec![false; 3],
            class: vec![VertexClass::Boundary; 3],
            material: Material::default(),
            seam_pairs: vec![],
            boundary_loops: vec![vec![0, 1, 2]],
        }
    }

    /// Mark vertices as pinned (infinite mass).
    pub fn pin(&mut self, verts: &[usize]) {
        for &v in verts {
            self.pinned[v] = true;
            self.inv_mass[v] = 0.0;
        }
    }

    /// Replace the pattern-space rest positions and recompute every derived
    /// rest quantity (triangle frames, bend lengths, lumped masses).
    pub fn set_rest(&mut self, rest2d: &[Vec2]) -> Result<()> {
        if rest2d.len() != self.rest2d.len() {
            return Err(Error::Dimension(format!(
                "rest positions: expected {}, got {}",
                self.rest2d.len(),
                rest2d.len()
            )));
        }
        self.rest2d.copy_from_slice(rest2d);
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.verts;
            self.tri_rest[t] = TriangleRest::from_points(&rest2d[a], &rest2d[b], &rest2d[c])
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "panel '{}' triangle {t} is degenerate or inverted in the rest shape",
                        self.panel_ids[tri.panel]
                    ))
                })?;
        }
        for b in &mut self.bends {
            b.rest_length = (rest2d[b.verts[0]] - rest2d[b.verts[1]]).norm();
        }
        self.mass.iter_mut().for_each(|m| *m = 0.0);
        for (tri, rest) in self.triangles.iter().zip(&self.tri_rest) {
            for &v in &tri.verts {
                self.mass[v] += self.material.density * rest.area / 3.0;
            }
        }
        for v in 0..self.mass.len() {
            self.inv_mass[v] = if self.pinned[v] || self.mass[v] <= 0.0 {
                0.0
            } else {
                1.0 / self.mass[v]
            };
        }
        Ok(())
    }

    /// Per-panel total 3D area of the triangles at positions `x`.
    pub fn panel_areas_3d(&self, x: &[Vec3]) -> Vec<f64> {
        let mut areas = vec![0.0; self.num_panels()];
        for tri in &self.triangles {
            let [a, b, c] = tri.verts;
            areas[tri.panel] += triangle_area3(&x[a], &x[b], &x[c]);
        }
        areas
    }
}

/// Build the stitched simulation mesh: panel vertices are concatenated,
/// seam partners stay distinct and are joined by stitch constraints.
pub fn assemble_sim_mesh(spec: &GarmentSpec) -> Result<SimMesh> {
    let offsets = {
        let mut o = spec.panel_offsets();
        o.push(spec.vertex_count());
        o
    };
    let rest2d = spec.flat_vertices();
    let n = rest2d.len();
    let mut triangles = Vec::with_capacity(spec.triangle_count());
    let mut bends = Vec::new();
    let mut class = vec![VertexClass::Interior; n];
    let mut boundary_loops = Vec::new();
    for (pi, p) in spec.panels.iter().enumerate() {
        let off = offsets[pi];
        let mut opposite: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &p.triangles {
            triangles.push(SimTriangle {
                verts: [t[0] + off, t[1] + off, t[2] + off],
                panel: pi,
            });
            for k in 0..3 {
                let e = edge_key(t[k], t[(k + 1) % 3]);
                let opp = t[(k + 2) % 3];
                if let Some(other) = opposite.insert(e, opp) {
                    bends.push(BendPair {
                        verts: [other + off, opp + off],
                        rest_length: 0.0,
                    });
                }
            }
        }
        for l in &p.boundary_loops {
            for &v in l {
                class[v + off] = VertexClass::Boundary;
            }
            boundary_loops.push(l.iter().map(|&v| v + off).collect());
        }
    }
    let mut stitches = Vec::new();
    let mut seam_pairs = Vec::new();
    for s in &spec.seams {
        let oa = offsets[spec.panel_index(&s.side_a.panel).unwrap()];
        let ob = offsets[spec.panel_index(&s.side_b.panel).unwrap()];
        let pairs: Vec<[usize; 2]> = s
            .side_a
            .vertices
            .iter()
            .zip(&s.side_b.vertices)
            .map(|(&a, &b)| [a + oa, b + ob])
            .collect();
        for pr in &pairs {
            class[pr[0]] = VertexClass::Seam;
            class[pr[1]] = VertexClass::Seam;
            stitches.push(*pr);
        }
        seam_pairs.push(pairs);
    }
    if spec.material.bend_compliance.is_none() {
        bends.clear();
    }
    let ntri = triangles.len();
    let mut mesh = SimMesh {
        panel_ids: spec.panels.iter().map(|p| p.id.clone()).collect(),
        panel_offsets: offsets,
        rest2d: vec![Vec2::zeros(); n],
        triangles,
        tri_rest: vec![
            TriangleRest {
                inv_dm: Mat2::identity(),
                area: 0.0,
                sqrt_area: 0.0
            };
            ntri
        ],
        stitches,
        bends,
        mass: vec![0.0; n],
        inv_mass: vec![0.0; n],
        pinned: vec![false; n],
        class,
        material: spec.material.clone(),
        seam_pairs,
        boundary_loops,
    };
    mesh.set_rest(&rest2d)?;
    Ok(mesh)
}

/// Static collision body.
#[derive(Clone, Debug)]
pub struct BodyMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub collision_margin: f64,
}

impl BodyMesh {
    pub fn load(path: impl AsRef<Path>, collision_margin: f64) -> Result<Self> {
        let (vertices, triangles) = obj::read_obj(path)?;
        Ok(BodyMesh {
            vertices,
            triangles,
            collision_margin,
        })
    }
}

/// Target 3D drape (same vertex order as the sim mesh) and per-panel
/// target areas.
#[derive(Clone, Debug)]
pub struct TargetDrape {
    pub positions: Vec<Vec3>,
    pub total_area_per_panel: BTreeMap<String, f64>,
}

impl TargetDrape {
    /// Target whose per-panel areas are measured on the target positions.
    pub fn from_positions(mesh: &SimMesh, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != mesh.num_vertices() {
            return Err(Error::Dimension(format!(
                "target drape has {} vertices, sim mesh has {}",
                positions.len(),
                mesh.num_vertices()
            )));
        }
        let areas = mesh.panel_areas_3d(&positions);
        Ok(TargetDrape {
            total_area_per_panel: mesh.panel_ids.iter().cloned().zip(areas).collect(),
            positions,
        })
    }

    /// Load target positions from OBJ and optionally per-panel areas from a
    /// JSON object `{panel id: m²}`; missing areas are measured on the OBJ.
    pub fn load(
        mesh: &SimMesh,
        obj_path: impl AsRef<Path>,
        areas_path: Option<&Path>,
    ) -> Result<Self> {
        let (positions, _) = obj::read_obj(obj_path)?;
        let mut t = TargetDrape::from_positions(mesh, positions)?;
        if let Some(p) = areas_path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let given: BTreeMap<String, f64> =
                serde_json::from_str(&text).map_err(|e| Error::parse(p, e))?;
            for (k, v) in given {
                if !t.total_area_per_panel.contains_key(&k) {
                    return Err(Error::Validation(format!(
                        "{}: area given for unknown panel '{k}'",
                        p.display()
                    )));
                }
                t.total_area_per_panel.insert(k, v);
            }
        }
        Ok(t)
    }

    pub fn area_of(&self, mesh: &SimMesh, panel: usize) -> f64 {
        self.total_area_per_panel[&mesh.panel_ids[panel]]
    }
}
