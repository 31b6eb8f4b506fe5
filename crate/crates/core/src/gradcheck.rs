//! Finite-difference and closed-form checks of every gradient in the
//! pipeline, grouped the way the `gradcheck` command exposes them.

use std::fmt;
use std::str::FromStr;

use crate::adjoint::{adjoint_sweep, chain_to_cage, rest_shape_pullback};
use crate::cage::{build_cage, cage_from_vertices, cage_jacobian, compute_green_coords, deform, Cage};
use crate::error::{Error, Result};
use crate::fixtures::{
    capped_cylinder, grid_panel, hanging_strip, lift_flat, rectangle_cage, sheet_over_sphere, single_panel_spec,
    square_patch, Scene, TubeSkirt, TubeSkirtParams,
};
use crate::geom::{Mat2, Vec2, Vec3};
use crate::losses::{
    loss_boundary_curvature, loss_pattern_match, loss_shape_match, loss_total_area, total_loss,
    LossConfig,
};
use crate::mesh::{assemble_sim_mesh, SimMesh, TargetDrape};
use crate::pattern::{Material, Panel};
use crate::refit::CageRig;
use crate::sim::collision::Contact;
use crate::sim::{drape_to_equilibrium, step_frozen, SimConfig, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Cage,
    Adjoint,
    Losses,
    End2End,
}

impl FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cage" => Ok(Scope::Cage),
            "adjoint" => Ok(Scope::Adjoint),
            "losses" => Ok(Scope::Losses),
            "end2end" => Ok(Scope::End2End),
            other => Err(Error::Usage(format!(
                "unknown gradcheck scope '{other}' (expected cage, adjoint, losses or end2end)"
            ))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Cage => "cage",
            Scope::Adjoint => "adjoint",
            Scope::Losses => "losses",
            Scope::End2End => "end2end",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub scope: Scope,
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(scope: Scope, name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        CheckResult {
            scope,
            name: name.into(),
            error,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error < self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<8} {:<40} error {:.3e}  tol {:.1e}",
            if self.passed() { "ok" } else { "FAIL" },
            self.scope,
            self.name,
            self.error,
            self.tolerance
        )
    }
}

/// ‖a − b‖ / ‖b‖, or ‖a‖ when b vanishes.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

fn flat2(v: &[Vec2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn flat3(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Smooth deterministic field used to perturb fixtures.
fn wobble(i: usize, k: usize) -> f64 {
    (1.37 * i as f64 + 2.11 * k as f64 + 0.3).sin()
}

/// Central differences of `f` over every coordinate of `x`.
fn central_diff2(x: &[Vec2], h: f64, mut f: impl FnMut(&[Vec2]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(2 * x.len());
    for i in 0..x.len() {
        for k in 0..2 {
            let x0 = xs[i][k];
            xs[i][k] = x0 + h;
            let fp = f(&xs)?;
            xs[i][k] = x0 - h;
            let fm = f(&xs)?;
            xs[i][k] = x0;
            out.push((fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

fn central_diff3(x: &[Vec3], h: f64, mut f: impl FnMut(&[Vec3]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(3 * x.len());
    for i in 0..x.len() {
        for k in 0..3 {
            let x0 = xs[i][k];
            xs[i][k] = x0 + h;
            let fp = f(&xs)?;
            xs[i][k] = x0 - h;
            let fm = f(&xs)?;
            xs[i][k] = x0;
            out.push((fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cage

fn cage_cases() -> Result<Vec<(String, Panel, Cage)>> {
    let panel = grid_panel("panel", Vec2::new(0.1, -0.2), 0.4, 0.3, 6, 5);
    let built = build_cage(&panel, 0.02, 16)?;
    let dense = cage_from_vertices(&panel, rectangle_cage(&panel, 0.03, 2))?;
    // Pull the two middle vertices of the top side inwards: non-convex.
    let mut dent = rectangle_cage(&panel, 0.05, 2);
    for v in &mut dent[7..9] {
        v.y -= 0.035;
    }
    let dent = cage_from_vertices(&panel, dent)?;
    Ok(vec![
        ("built".into(), panel.clone(), built),
        ("dense".into(), panel.clone(), dense),
        ("nonconvex".into(), panel, dent),
    ])
}

fn max_dist(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

pub fn cage_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let (s, th): (f64, f64) = (1.3, 0.7);
    let rot = Mat2::new(th.cos(), -th.sin(), th.sin(), th.cos()) * s;
    let t = Vec2::new(0.2, -0.1);
    for (name, panel, cage) in cage_cases()? {
        let coords = compute_green_coords(&cage, &panel.vertices)?;
        let rest = deform(&coords, &cage, &cage.vertices)?;
        out.push(CheckResult::new(
            Scope::Cage,
            format!("{name}: rest reproduction [m]"),
            max_dist(&rest, &panel.vertices),
            1e-8,
        ));
        let moved: Vec<Vec2> = cage.vertices.iter().map(|z| rot * z + t).collect();
        let image = deform(&coords, &cage, &moved)?;
        let expect: Vec<Vec2> = panel.vertices.iter().map(|p| rot * p + t).collect();
        out.push(CheckResult::new(
            Scope::Cage,
            format!("{name}: similarity equivariance [m]"),
            max_dist(&image, &expect),
            1e-8,
        ));
        let zeta: Vec<Vec2> = cage
            .vertices
            .iter()
            .enumerate()
            .map(|(j, z)| z + Vec2::new(wobble(j, 0), wobble(j, 1)) * 0.01)
            .collect();
        let jac = cage_jacobian(&coords, &cage, &zeta)?;
        let h = 1e-6;
        let mut err2 = 0.0;
        let mut zp = zeta.clone();
        for j in 0..zeta.len() {
            for k in 0..2 {
                zp[j][k] = zeta[j][k] + h;
                let fp = deform(&coords, &cage, &zp)?;
                zp[j][k] = zeta[j][k] - h;
                let fm = deform(&coords, &cage, &zp)?;
                zp[j][k] = zeta[j][k];
                for i in 0..fp.len() {
                    for r in 0..2 {
                        let fd = (fp[i][r] - fm[i][r]) / (2.0 * h);
                        err2 += (fd - jac[(2 * i + r, 2 * j + k)]).powi(2);
                    }
                }
            }
        }
        out.push(CheckResult::new(
            Scope::Cage,
            format!("{name}: jacobian vs central differences"),
            err2.sqrt() / jac.norm(),
            1e-5,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Losses

/// Small two-panel garment with a perturbed pattern and drape.
struct LossFixture {
    mesh: SimMesh,
    design: Vec<Vec2>,
    current: Vec<Vec2>,
    x: Vec<Vec3>,
    target: TargetDrape,
}

fn loss_fixture() -> Result<LossFixture> {
    let skirt = TubeSkirt::new(TubeSkirtParams {
        nx: 4,
        ny: 3,
        ..Default::default()
    });
    let mesh = skirt.mesh()?;
    let design = mesh.rest2d.clone();
    let current: Vec<Vec2> = design
        .iter()
        .enumerate()
        .map(|(i, p)| p * 1.1 + Vec2::new(wobble(i, 0), wobble(i, 1)) * 0.01)
        .collect();
    let target = skirt.target(&skirt.wrapped)?;
    let x = target
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| p + Vec3::new(wobble(i, 2), wobble(i, 3), wobble(i, 4)) * 0.02)
        .collect();
    Ok(LossFixture {
        mesh,
        design,
        current,
        x,
        target,
    })
}

pub fn loss_checks() -> Result<Vec<CheckResult>> {
    let f = loss_fixture()?;
    let cfg = LossConfig::default();
    let mut out = Vec::new();
    let h = 1e-6;
    let tol = 1e-5;
    let push = |out: &mut Vec<CheckResult>, name: &str, e: f64, t: f64| {
        out.push(CheckResult::new(Scope::Losses, name, e, t))
    };

    // Shape match.
    let (_, g) = loss_shape_match(&f.x, &f.target, &f.mesh, &cfg)?;
    let fd = central_diff3(&f.x, h, |x| Ok(loss_shape_match(x, &f.target, &f.mesh, &cfg)?.0))?;
    push(&mut out, "shape match: gradient", rel_error(&flat3(&g), &fd), tol);
    let (v0, _) = loss_shape_match(&f.target.positions, &f.target, &f.mesh, &cfg)?;
    push(&mut out, "shape match: zero at target", v0.abs(), 1e-15);

    // Boundary curvature.
    let (_, g) = loss_boundary_curvature(&f.current, &f.design, &f.mesh)?;
    let fd = central_diff2(&f.current, h, |c| {
        Ok(loss_boundary_curvature(c, &f.design, &f.mesh)?.0)
    })?;
    push(&mut out, "curvature: gradient", rel_error(&flat2(&g), &fd), tol);
    let (v0, _) = loss_boundary_curvature(&f.design, &f.design, &f.mesh)?;
    push(&mut out, "curvature: zero at design", v0.abs(), 1e-15);
    let (s, th): (f64, f64) = (1.7, -0.4);
    let sim = Mat2::new(th.cos(), -th.sin(), th.sin(), th.cos());
    let shifted: Vec<Vec2> = f.design.iter().map(|p| sim * p * s + Vec2::new(3.0, -1.0)).collect();
    let (vs, _) = loss_boundary_curvature(&shifted, &f.design, &f.mesh)?;
    push(&mut out, "curvature: zero at similar design", vs.abs(), 1e-10);
    let (vc, _) = loss_boundary_curvature(&f.current, &f.design, &f.mesh)?;
    let moved: Vec<Vec2> = f.current.iter().map(|p| sim * p + Vec2::new(-2.0, 0.5)).collect();
    let (vm, _) = loss_boundary_curvature(&moved, &f.design, &f.mesh)?;
    push(
        &mut out,
        "curvature: rigid-motion invariance",
        (vm - vc).abs() / vc.max(1e-300),
        1e-10,
    );

    // Pattern match.
    let (_, g) = loss_pattern_match(&f.current, &f.mesh);
    let fd = central_diff2(&f.current, h, |c| Ok(loss_pattern_match(c, &f.mesh).0))?;
    push(&mut out, "pattern match: gradient", rel_error(&flat2(&g), &fd), tol);
    let (v0, _) = loss_pattern_match(&f.design, &f.mesh);
    push(&mut out, "pattern match: zero on matched seams", v0.abs(), 1e-15);

    // Total area.
    let (_, g) = loss_total_area(&f.current, &f.target, &f.mesh);
    let fd = central_diff2(&f.current, h, |c| Ok(loss_total_area(c, &f.target, &f.mesh).0))?;
    push(&mut out, "total area: gradient", rel_error(&flat2(&g), &fd), tol);
    let mut own = f.target.clone();
    for (p, a) in crate::losses::panel_pattern_areas(&f.current, &f.mesh).into_iter().enumerate() {
        own.total_area_per_panel.insert(f.mesh.panel_ids[p].clone(), a);
    }
    let (v0, _) = loss_total_area(&f.current, &own, &f.mesh);
    push(&mut out, "total area: zero at matching areas", v0.abs(), 1e-15);

    // Weighted total, both arguments.
    let l = total_loss(&f.x, &f.current, &f.design, &f.target, &f.mesh, &cfg)?;
    let fd = central_diff2(&f.current, h, |c| {
        Ok(total_loss(&f.x, c, &f.design, &f.target, &f.mesh, &cfg)?.total)
    })?;
    push(&mut out, "total: pattern gradient", rel_error(&flat2(&l.grad_rest), &fd), tol);
    let fd = central_diff3(&f.x, h, |x| {
        Ok(total_loss(x, &f.current, &f.design, &f.target, &f.mesh, &cfg)?.total)
    })?;
    push(&mut out, "total: drape gradient", rel_error(&flat3(&l.grad_x), &fd), tol);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Adjoint

/// A short simulation whose shape-match loss is differentiated with
/// respect to the pattern.
pub struct AdjointCase {
    pub name: String,
    pub scene: Scene,
    pub sim: SimConfig,
    pub target: TargetDrape,
    pub loss: LossConfig,
}

impl AdjointCase {
    fn new(name: &str, scene: Scene, steps: usize, sim: SimConfig) -> Result<Self> {
        let sim = SimConfig {
            max_steps: steps,
            v_tol: 0.0,
            ..sim
        };
        let positions = scene
            .x0
            .iter()
            .enumerate()
            .map(|(i, p)| p + Vec3::new(wobble(i, 5), wobble(i, 6) - 1.0, wobble(i, 7)) * 0.02)
            .collect();
        let target = TargetDrape::from_positions(&scene.mesh, positions)?;
        Ok(AdjointCase {
            name: name.into(),
            scene,
            sim,
            target,
            loss: LossConfig::default(),
        })
    }

    /// Forward run with collision detection; its contact sets are the ones
    /// frozen by [`Self::loss_frozen`].
    pub fn trajectory(&self, mesh: &SimMesh) -> Result<Trajectory> {
        let sdf = self.scene.sdf();
        Ok(drape_to_equilibrium(self.scene.initial_state(), mesh, sdf.as_ref(), &self.sim)?.trajectory)
    }

    /// Loss after replaying the steps with the given contact sets.
    pub fn loss_frozen(&self, mesh: &SimMesh, contacts: &[Vec<Contact>], margin: f64) -> Result<f64> {
        let mut s = self.scene.initial_state();
        for c in contacts {
            s = step_frozen(&s, mesh, c.clone(), margin, &self.sim)?;
        }
        Ok(loss_shape_match(&s.x, &self.target, mesh, &self.loss)?.0)
    }

    /// Adjoint gradient and its central-difference counterpart.
    pub fn gradients(&self, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mesh = &self.scene.mesh;
        let traj = self.trajectory(mesh)?;
        let x = &traj.last().x;
        let (_, gx) = loss_shape_match(x, &self.target, mesh, &self.loss)?;
        let sweep = adjoint_sweep(&traj, mesh, &gx, &vec![Vec3::zeros(); x.len()])?;
        let adj = rest_shape_pullback(mesh, &sweep);
        let mut m = mesh.clone();
        let fd = central_diff2(&mesh.rest2d, h, |r| {
            m.set_rest(r)?;
            self.loss_frozen(&m, &traj.contacts, traj.collision_margin)
        })?;
        Ok((flat2(&adj), fd))
    }

    pub fn contact_count(&self) -> Result<usize> {
        Ok(self.trajectory(&self.scene.mesh)?.contacts.iter().map(Vec::len).sum())
    }
}

fn stretched(scene: &mut Scene, s: f64) {
    let c = scene.x0.iter().sum::<Vec3>() / scene.x0.len() as f64;
    for (i, p) in scene.x0.iter_mut().enumerate() {
        *p = c + (*p - c) * s + Vec3::new(0.0, wobble(i, 8), 0.0) * 0.01;
    }
}

/// The adjoint fixtures: 3 to 40 vertices, 5 to 30 steps, with and without
/// contact, bending and compliant seams.
pub fn adjoint_cases() -> Result<Vec<AdjointCase>> {
    let sim = SimConfig::default();
    let mut cases = Vec::new();

    let tri = Panel {
        id: "tri".into(),
        vertices: vec![Vec2::new(0.0, 0.0), Vec2::new(0.2, 0.0), Vec2::new(0.05, 0.15)],
        triangles: vec![[0, 1, 2]],
        boundary_loops: vec![vec![0, 1, 2]],
        seam_edge_tags: Default::default(),
    };
    let spec = single_panel_spec(tri, Material::default());
    let mesh = assemble_sim_mesh(&spec)?;
    let x0 = lift_flat(&spec.flat_vertices(), 0.0);
    let mut scene = Scene {
        spec,
        mesh,
        x0,
        body: None,
    };
    stretched(&mut scene, 1.15);
    cases.push(AdjointCase::new("triangle, free fall", scene, 5, sim.clone())?);

    let mut scene = square_patch(0.1);
    scene.mesh.pin(&[0]);
    stretched(&mut scene, 0.9);
    cases.push(AdjointCase::new("patch, pinned corner", scene, 10, sim.clone())?);

    let scene = hanging_strip(0.1, 0.3, 2, 6);
    cases.push(AdjointCase::new("strip, hanging", scene, 20, sim.clone())?);

    let mut scene = hanging_strip(0.12, 0.16, 3, 4);
    scene.spec.material.bend_compliance = Some(1e-4);
    let pinned = scene.mesh.pinned.clone();
    scene.mesh = assemble_sim_mesh(&scene.spec)?;
    scene.mesh.pin(&(0..pinned.len()).filter(|&i| pinned[i]).collect::<Vec<_>>());
    cases.push(AdjointCase::new("strip, bending", scene, 15, sim.clone())?);

    let scene = sheet_over_sphere(6, 0.3, 0.1, 0.004);
    cases.push(AdjointCase::new("sheet on sphere, contact", scene, 15, sim.clone())?);

    let skirt = TubeSkirt::new(TubeSkirtParams {
        nx: 4,
        ny: 3,
        ..Default::default()
    });
    // Start slightly wider than the pattern so every seam and waist edge is
    // in tension; hoop tension then pulls the cloth onto the body.
    let x0 = skirt
        .wrapped
        .iter()
        .map(|p| Vec3::new(p.x * 1.05, p.y, p.z * 1.05))
        .collect();
    let scene = Scene {
        spec: skirt.spec.clone(),
        mesh: skirt.mesh()?,
        x0,
        body: Some(capped_cylinder(0.163, 0.3, 1.05, 48, 3e-3)),
    };
    let sim_soft = SimConfig {
        stitch_compliance: 1e-6,
        ..sim
    };
    cases.push(AdjointCase::new("skirt, seams and contact", scene, 30, sim_soft)?);
    Ok(cases)
}

/// Central-difference step for simulated quantities [m]. The cloth is stiff,
/// so third derivatives are large and truncation dominates at 1e-6.
pub const FD_STEP: f64 = 1e-7;

pub fn adjoint_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for case in adjoint_cases()? {
        let (adj, fd) = case.gradients(FD_STEP)?;
        out.push(CheckResult::new(
            Scope::Adjoint,
            format!("{} ({} vertices, {} steps)", case.name, case.scene.mesh.num_vertices(), case.sim.max_steps),
            rel_error(&adj, &fd),
            1e-4,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// End to end

/// Scene plus cages for a full dL/dζ check.
pub struct EndToEndCase {
    pub name: String,
    pub case: AdjointCase,
    pub rig: CageRig,
}

impl EndToEndCase {
    fn loss(&self, mesh: &mut SimMesh, zetas: &[Vec<Vec2>], traj: &Trajectory) -> Result<f64> {
        let pattern = self.rig.deform(zetas)?;
        mesh.set_rest(&pattern)?;
        let mut s = self.case.scene.initial_state();
        for c in &traj.contacts {
            s = step_frozen(&s, mesh, c.clone(), traj.collision_margin, &self.case.sim)?;
        }
        let design = &self.case.scene.mesh.rest2d;
        Ok(total_loss(&s.x, &pattern, design, &self.case.target, mesh, &self.case.loss)?.total)
    }

    /// Adjoint dL/dζ and central differences, at a perturbed cage state.
    pub fn gradients(&self, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let zetas: Vec<Vec<Vec2>> = self
            .rig
            .rest_zetas()
            .into_iter()
            .map(|z| {
                z.iter()
                    .enumerate()
                    .map(|(j, p)| p * 1.05 + Vec2::new(wobble(j, 9), wobble(j, 10)) * 0.003)
                    .collect()
            })
            .collect();
        let mut mesh = self.case.scene.mesh.clone();
        let pattern = self.rig.deform(&zetas)?;
        mesh.set_rest(&pattern)?;
        let traj = self.case.trajectory(&mesh)?;
        let x = &traj.last().x;
        let design = &self.case.scene.mesh.rest2d;
        let l = total_loss(x, &pattern, design, &self.case.target, &mesh, &self.case.loss)?;
        let sweep = adjoint_sweep(&traj, &mesh, &l.grad_x, &vec![Vec3::zeros(); x.len()])?;
        let mut d = rest_shape_pullback(&mesh, &sweep);
        for (a, b) in d.iter_mut().zip(&l.grad_rest) {
            *a += b;
        }
        let dz = chain_to_cage(&mesh, &d, &self.rig.jacobians())?;
        let adj: Vec<f64> = dz.iter().flat_map(|z| flat2(z)).collect();
        let mut fd = Vec::new();
        let mut zs = zetas.clone();
        for p in 0..zs.len() {
            for j in 0..zs[p].len() {
                for k in 0..2 {
                    let z0 = zs[p][j][k];
                    zs[p][j][k] = z0 + h;
                    let fp = self.loss(&mut mesh, &zs, &traj)?;
                    zs[p][j][k] = z0 - h;
                    let fm = self.loss(&mut mesh, &zs, &traj)?;
                    zs[p][j][k] = z0;
                    fd.push((fp - fm) / (2.0 * h));
                }
            }
        }
        Ok((adj, fd))
    }
}

pub fn end_to_end_cases() -> Result<Vec<EndToEndCase>> {
    let mut out = Vec::new();
    for case in adjoint_cases()? {
        let keep = case.name.starts_with("strip, hanging") || case.name.starts_with("skirt");
        if !keep {
            continue;
        }
        let rig = CageRig::build(&case.scene.spec, 0.05, 16)?;
        out.push(EndToEndCase {
            name: case.name.clone(),
            case,
            rig,
        });
    }
    Ok(out)
}

pub fn end_to_end_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for c in end_to_end_cases()? {
        let (adj, fd) = c.gradients(FD_STEP)?;
        out.push(CheckResult::new(
            Scope::End2End,
            format!("{}: dL/dcage", c.name),
            rel_error(&adj, &fd),
            1e-3,
        ));
    }
    Ok(out)
}

pub fn run_scope(scope: Scope) -> Result<Vec<CheckResult>> {
    match scope {
        Scope::Cage => cage_checks(),
        Scope::Adjoint => adjoint_checks(),
        Scope::Losses => loss_checks(),
        Scope::End2End => end_to_end_checks(),
    }
}
