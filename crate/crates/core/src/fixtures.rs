//! Procedural bodies, panels and garments used by the tests, the examples
//! and the `gradcheck` command.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::obj::write_obj;
use crate::pattern::save_garment_spec;
use crate::geom::{Vec2, Vec3};
use crate::mesh::{assemble_sim_mesh, BodyMesh, SimMesh, TargetDrape};
use crate::pattern::{tag_seam_edges, GarmentSpec, Material, Panel, Seam, SeamSide, SymmetryPair};
use crate::refit::{resolve_pins, PinRef, RefitConfig};
use crate::sim::collision::BodySdf;
use crate::sim::{drape_to_equilibrium, SimConfig, SimState};

/// Flip any triangle whose normal points towards `center` (closed convex
/// bodies only).
fn orient_outward(vertices: &[Vec3], triangles: &mut [[usize; 3]], center: impl Fn(&Vec3) -> Vec3) {
    for t in triangles.iter_mut() {
        let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        let n = (b - a).cross(&(c - a));
        let m = (a + b + c) / 3.0;
        if n.dot(&(m - center(&m))) < 0.0 {
            t.swap(1, 2);
        }
    }
}

pub fn uv_sphere(radius: f64, rings: usize, segments: usize, margin: f64) -> BodyMesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut vertices = vec![Vec3::new(0.0, radius, 0.0)];
    for r in 1..rings {
        let th = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let ph = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(
                radius * th.sin() * ph.cos(),
                radius * th.cos(),
                radius * th.sin() * ph.sin(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, -radius, 0.0));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
        triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    orient_outward(&vertices, &mut triangles, |_| Vec3::zeros());
    BodyMesh {
        vertices,
        triangles,
        collision_margin: margin,
    }
}

/// Closed cylinder around the y axis with flat caps.
pub fn capped_cylinder(radius: f64, y_min: f64, y_max: f64, segments: usize, margin: f64) -> BodyMesh {
    let segments = segments.max(3);
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for y in [y_min, y_max] {
        for s in 0..segments {
            let ph = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(radius * ph.sin(), y, radius * ph.cos()));
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::new(0.0, y_min, 0.0));
    vertices.push(Vec3::new(0.0, y_max, 0.0));
    let mut triangles = Vec::new();
    for s in 0..segments {
        let s1 = (s + 1) % segments;
        let (a, b, c, d) = (s, s1, s + segments, s1 + segments);
        triangles.push([a, b, d]);
        triangles.push([a, d, c]);
        triangles.push([bottom, b, a]);
        triangles.push([bottom + 1, c, d]);
    }
    let ymid = 0.5 * (y_min + y_max);
    let len = y_max - y_min;
    orient_outward(&vertices, &mut triangles, |m| {
        // Side faces point away from the axis, caps away from the middle.
        if (m.y - y_min).abs() < 1e-9 * len || (m.y - y_max).abs() < 1e-9 * len {
            Vec3::new(m.x, ymid, m.z)
        } else {
            Vec3::new(0.0, m.y, 0.0)
        }
    });
    BodyMesh {
        vertices,
        triangles,
        collision_margin: margin,
    }
}

/// A square slab of ground `thickness` deep whose top face is at `y`.
pub fn ground_box(y: f64, half: f64, thickness: f64, margin: f64) -> BodyMesh {
    let mut vertices = Vec::with_capacity(8);
    for yy in [y - thickness, y] {
        for (x, z) in [(-half, -half), (half, -half), (half, half), (-half, half)] {
            vertices.push(Vec3::new(x, yy, z));
        }
    }
    let mut triangles = vec![
        [0, 1, 2],
        [0, 2, 3],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    let c = Vec3::new(0.0, y - 0.5 * thickness, 0.0);
    orient_outward(&vertices, &mut triangles, |_| c);
    BodyMesh {
        vertices,
        triangles,
        collision_margin: margin,
    }
}

/// Regular `nx` × `ny` quad grid split into triangles, lower-left corner at
/// `origin`. Vertex (i, j) has index `j·(nx+1) + i`.
pub fn grid_panel(id: &str, origin: Vec2, width: f64, height: f64, nx: usize, ny: usize) -> Panel {
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(origin + Vec2::new(width * i as f64 / nx as f64, height * j as f64 / ny as f64));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            // Alternate the diagonal so the grid has no preferred shear.
            if (i + j) % 2 == 0 {
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            } else {
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
    }
    let mut outer = Vec::with_capacity(2 * (nx + ny));
    outer.extend((0..nx).map(|i| idx(i, 0)));
    outer.extend((0..ny).map(|j| idx(nx, j)));
    outer.extend((1..=nx).rev().map(|i| idx(i, ny)));
    outer.extend((1..=ny).rev().map(|j| idx(0, j)));
    Panel {
        id: id.to_string(),
        vertices,
        triangles,
        boundary_loops: vec![outer],
        seam_edge_tags: BTreeMap::new(),
    }
}

/// Mirror image of `panel` through the vertical line `x = axis`, with the
/// same vertex numbering and counterclockwise triangles.
pub fn mirror_panel(id: &str, panel: &Panel, axis: f64) -> Panel {
    Panel {
        id: id.to_string(),
        vertices: panel
            .vertices
            .iter()
            .map(|v| Vec2::new(2.0 * axis - v.x, v.y))
            .collect(),
        triangles: panel.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
        boundary_loops: panel
            .boundary_loops
            .iter()
            .map(|l| {
                let mut r = l.clone();
                r.reverse();
                r
            })
            .collect(),
        seam_edge_tags: BTreeMap::new(),
    }
}

pub fn single_panel_spec(panel: Panel, material: Material) -> GarmentSpec {
    GarmentSpec {
        panels: vec![panel],
        seams: vec![],
        symmetry_pairs: vec![],
        material,
        reference_drape3d: None,
        cages: BTreeMap::new(),
    }
}

/// A simulation set-up: mesh with pins applied, starting positions and an
/// optional collision body.
#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: GarmentSpec,
    pub mesh: SimMesh,
    pub x0: Vec<Vec3>,
    pub body: Option<BodyMesh>,
}

impl Scene {
    pub fn initial_state(&self) -> SimState {
        SimState::at_rest(self.x0.clone())
    }

    pub fn sdf(&self) -> Option<BodySdf> {
        self.body.as_ref().map(BodySdf::new)
    }
}

/// Two triangles forming a unit-ish square, lying flat at height 0.
pub fn square_patch(size: f64) -> Scene {
    let panel = grid_panel("patch", Vec2::zeros(), size, size, 1, 1);
    let spec = single_panel_spec(panel, Material::default());
    let mesh = assemble_sim_mesh(&spec).expect("square patch is valid");
    let x0 = lift_flat(&spec.flat_vertices(), 0.0);
    Scene {
        spec,
        mesh,
        x0,
        body: None,
    }
}

/// Pattern (u, v) laid in the horizontal plane y = height as (u, y, -v).
pub fn lift_flat(pts: &[Vec2], height: f64) -> Vec<Vec3> {
    pts.iter().map(|p| Vec3::new(p.x, height, -p.y)).collect()
}

/// Horizontal strip held along one short edge; it swings down under
/// gravity and settles hanging.
pub fn hanging_strip(width: f64, length: f64, nx: usize, ny: usize) -> Scene {
    let panel = grid_panel("strip", Vec2::zeros(), width, length, nx, ny);
    let spec = single_panel_spec(panel, Material::default());
    let mut mesh = assemble_sim_mesh(&spec).expect("strip is valid");
    let pins: Vec<usize> = (0..=nx).collect();
    mesh.pin(&pins);
    let x0 = lift_flat(&spec.flat_vertices(), 0.0);
    Scene {
        spec,
        mesh,
        x0,
        body: None,
    }
}

/// Square sheet held slightly above a sphere so that contacts appear in the
/// first few steps.
pub fn sheet_over_sphere(n: usize, size: f64, radius: f64, gap: f64) -> Scene {
    let panel = grid_panel("sheet", Vec2::new(-0.5 * size, -0.5 * size), size, size, n, n);
    let spec = single_panel_spec(panel, Material::default());
    let mesh = assemble_sim_mesh(&spec).expect("sheet is valid");
    let x0 = lift_flat(&spec.flat_vertices(), radius + gap);
    Scene {
        spec,
        mesh,
        x0,
        body: Some(uv_sphere(radius, 12, 24, 0.01)),
    }
}

/// Parameters of the two-panel tube skirt.
#[derive(Clone, Debug)]
pub struct TubeSkirtParams {
    /// Quads across each panel.
    pub nx: usize,
    /// Quads down each panel.
    pub ny: usize,
    /// Radius of the garment tube at rest.
    pub garment_radius: f64,
    pub height: f64,
    pub body_radius: f64,
    pub target_body_radius: f64,
    /// Height of the pinned waistline.
    pub waist_y: f64,
    pub margin: f64,
    pub body_segments: usize,
    /// Extra cage vertices along each side of the rectangular cages.
    pub cage_subdivisions: usize,
}

impl Default for TubeSkirtParams {
    fn default() -> Self {
        TubeSkirtParams {
            nx: 16,
            ny: 16,
            garment_radius: 0.16,
            height: 0.5,
            body_radius: 0.15,
            target_body_radius: 0.20,
            waist_y: 1.0,
            margin: 3e-3,
            body_segments: 48,
            cage_subdivisions: 2,
        }
    }
}

/// Front and back panels sewn into a tube, pinned along the waist.
#[derive(Clone, Debug)]
pub struct TubeSkirt {
    pub params: TubeSkirtParams,
    pub spec: GarmentSpec,
    /// Waistline vertices.
    pub pinned: Vec<PinRef>,
    /// Pattern wrapped onto the garment tube, sim vertex order.
    pub wrapped: Vec<Vec3>,
    pub body: BodyMesh,
    pub target_body: BodyMesh,
}

/// Gap between the two panels in the pattern plane.
const PANEL_GAP: f64 = 0.05;

impl TubeSkirt {
    pub fn new(params: TubeSkirtParams) -> Self {
        let p = &params;
        let width = PI * p.garment_radius;
        let front = grid_panel("front", Vec2::zeros(), width, p.height, p.nx, p.ny);
        let back = mirror_panel("back", &front, -0.5 * PANEL_GAP);
        let idx = |i: usize, j: usize| j * (p.nx + 1) + i;
        let left: Vec<usize> = (0..=p.ny).map(|j| idx(0, j)).collect();
        let right: Vec<usize> = (0..=p.ny).map(|j| idx(p.nx, j)).collect();
        // The back panel's vertex k mirrors the front's vertex k, so the
        // front's left edge meets the back's image of that same edge.
        let seams = vec![
            Seam {
                id: "side_left".into(),
                side_a: SeamSide {
                    panel: "front".into(),
                    vertices: left.clone(),
                },
                side_b: SeamSide {
                    panel: "back".into(),
                    vertices: left,
                },
            },
            Seam {
                id: "side_right".into(),
                side_a: SeamSide {
                    panel: "front".into(),
                    vertices: right.clone(),
                },
                side_b: SeamSide {
                    panel: "back".into(),
                    vertices: right,
                },
            },
        ];
        let n = front.vertices.len();
        let mut cages = BTreeMap::new();
        cages.insert(
            "front".to_string(),
            rectangle_cage(&front, 0.05 * p.height, p.cage_subdivisions),
        );
        let r = p.garment_radius;
        let wrap = |v: &Vec2, sign: f64| {
            let phi = v.x / r - 0.5 * PI;
            Vec3::new(r * phi.sin(), p.waist_y - p.height + v.y, sign * r * phi.cos())
        };
        let mut wrapped: Vec<Vec3> = front.vertices.iter().map(|v| wrap(v, 1.0)).collect();
        wrapped.extend(front.vertices.iter().map(|v| wrap(v, -1.0)));
        let mut spec = GarmentSpec {
            symmetry_pairs: vec![SymmetryPair {
                panel_a: "front".into(),
                panel_b: "back".into(),
                correspondence: (0..n).collect(),
            }],
            panels: vec![front, back],
            seams,
            material: Material::default(),
            reference_drape3d: None,
            cages,
        };
        tag_seam_edges(&mut spec);
        let top: Vec<usize> = (0..=p.nx).map(|i| idx(i, p.ny)).collect();
        let pinned = ["front", "back"]
            .iter()
            .flat_map(|id| {
                top.iter().map(move |&v| PinRef {
                    panel: id.to_string(),
                    vertex: v,
                })
            })
            .collect();
        let y0 = p.waist_y - p.height - 0.2;
        TubeSkirt {
            body: capped_cylinder(p.body_radius, y0, p.waist_y + 0.05, p.body_segments, p.margin),
            target_body: capped_cylinder(
                p.target_body_radius,
                y0,
                p.waist_y + 0.05,
                p.body_segments,
                p.margin,
            ),
            params,
            spec,
            pinned,
            wrapped,
        }
    }

    /// Sim mesh with the waistline pinned.
    pub fn mesh(&self) -> Result<SimMesh> {
        let mut mesh = assemble_sim_mesh(&self.spec)?;
        mesh.pin(&resolve_pins(&mesh, &self.pinned)?);
        Ok(mesh)
    }

    /// Equilibrium drape of the design pattern on the reference body.
    pub fn reference_drape(&self, cfg: &SimConfig) -> Result<Vec<Vec3>> {
        let mesh = self.mesh()?;
        let sdf = BodySdf::new(&self.body);
        let d = drape_to_equilibrium(SimState::at_rest(self.wrapped.clone()), &mesh, Some(&sdf), cfg)?;
        Ok(d.state.x)
    }

    /// Reference drape stretched radially (x and z only) by the ratio of
    /// the body radii; per-panel areas are measured on the result.
    pub fn target(&self, reference: &[Vec3]) -> Result<TargetDrape> {
        let s = self.params.target_body_radius / self.params.body_radius;
        let positions = reference
            .iter()
            .map(|p| Vec3::new(p.x * s, p.y, p.z * s))
            .collect();
        TargetDrape::from_positions(&self.mesh()?, positions)
    }
}

/// Simulation settings of the refit fixture. More sweeps than the default
/// keep the under-converged sag of stiff cloth small next to the fit.
pub fn fixture_sim() -> SimConfig {
    SimConfig {
        iterations: 50,
        ..SimConfig::default()
    }
}

impl TubeSkirt {
    /// Refit settings for this skirt: waist pinned, fixture simulation.
    pub fn refit_config(&self) -> RefitConfig {
        RefitConfig {
            pinned: self.pinned.clone(),
            sim: fixture_sim(),
            ..RefitConfig::default()
        }
    }

    /// Write the design, both bodies, the target and a run config into
    /// `dir`. Returns the config as written (paths relative to `dir`).
    pub fn write_files(&self, dir: &Path, target: &TargetDrape) -> Result<RunConfig> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_garment_spec(&self.spec, dir.join("garment.json"))?;
        write_obj(dir.join("body.obj"), &self.body.vertices, &self.body.triangles)?;
        write_obj(
            dir.join("target_body.obj"),
            &self.target_body.vertices,
            &self.target_body.triangles,
        )?;
        let faces: Vec<[usize; 3]> = self.mesh()?.triangles.iter().map(|t| t.verts).collect();
        write_obj(dir.join("target.obj"), &target.positions, &faces)?;
        let areas = serde_json::to_string_pretty(&target.total_area_per_panel)
            .expect("areas serialize");
        let p = dir.join("target_areas.json");
        std::fs::write(&p, areas).map_err(|e| Error::io(&p, e))?;
        let run = RunConfig {
            name: Some("tube_skirt".into()),
            garment: "garment.json".into(),
            body: Some("target_body.obj".into()),
            body_margin: self.params.margin,
            target: "target.obj".into(),
            target_areas: Some("target_areas.json".into()),
            out: None,
            refit: self.refit_config(),
        };
        let p = dir.join("refit.toml");
        std::fs::write(&p, run.to_toml()).map_err(|e| Error::io(&p, e))?;
        Ok(run)
    }
}

/// Axis-aligned rectangle around a panel, offset by `margin`, with `sub`
/// extra vertices on every side.
pub fn rectangle_cage(panel: &Panel, margin: f64, sub: usize) -> Vec<Vec2> {
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for v in &panel.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    lo -= Vec2::repeat(margin);
    hi += Vec2::repeat(margin);
    let corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    let mut out = Vec::with_capacity(4 * (sub + 1));
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for s in 0..=sub {
            out.push(a + (b - a) * (s as f64 / (sub + 1) as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::validate;

    #[test]
    fn bodies_are_closed_and_outward() {
        for body in [
            uv_sphere(1.0, 8, 12, 0.0),
            capped_cylinder(0.5, -1.0, 1.0, 16, 0.0),
            ground_box(0.0, 1.0, 0.5, 0.0),
        ] {
            // Divergence theorem: Σ (c · n) A / 3 is the volume and positive.
            let vol: f64 = body
                .triangles
                .iter()
                .map(|t| {
                    let (a, b, c) = (body.vertices[t[0]], body.vertices[t[1]], body.vertices[t[2]]);
                    a.dot(&b.cross(&c)) / 6.0
                })
                .sum();
            assert!(vol > 0.0);
            let mut edges = std::collections::HashMap::new();
            for t in &body.triangles {
                for k in 0..3 {
                    *edges.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
                }
            }
            for (&(a, b), &c) in &edges {
                assert_eq!(c, 1);
                assert_eq!(edges.get(&(b, a)), Some(&1));
            }
        }
    }

    #[test]
    fn tube_skirt_is_valid_and_closed() {
        let t = TubeSkirt::new(TubeSkirtParams {
            nx: 6,
            ny: 4,
            ..Default::default()
        });
        validate(&t.spec).unwrap();
        let mesh = t.mesh().unwrap();
        for s in &mesh.stitches {
            assert!((t.wrapped[s[0]] - t.wrapped[s[1]]).norm() < 1e-12);
        }
        assert_eq!(mesh.pinned.iter().filter(|p| **p).count(), 14);
    }

    #[test]
    fn mirrored_grid_is_valid() {
        let p = grid_panel("a", Vec2::zeros(), 1.0, 2.0, 3, 4);
        crate::pattern::validate_panel(&p).unwrap();
        crate::pattern::validate_panel(&mirror_panel("b", &p, -0.1)).unwrap();
    }
}
