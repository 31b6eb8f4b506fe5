//! Damped XPBD draping.
//!
//! One step predicts positions from velocity and gravity, regenerates body
//! contacts at the prediction, resets the multipliers, runs Gauss–Seidel
//! sweeps over all constraint rows, and sets the damped velocity
//! `v = τ/Δt · (x_new − x_old)`.

pub mod collision;
pub mod constraints;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::SimMesh;
use crate::obj;
pub use collision::{collision_constraints, BodySdf, Contact, SignedDistance};
pub use constraints::{triangle_constraint, ConstraintSet, Row, RowEval, TriangleEval};

/// Velocity damping applied every step.
pub const DEFAULT_TAU: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub tau: f64,
    /// Gauss–Seidel sweeps per step.
    pub iterations: usize,
    pub v_tol: f64,
    pub max_steps: usize,
    pub gravity: [f64; 3],
    pub collision_margin: f64,
    pub stitch_compliance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 60.0,
            tau: DEFAULT_TAU,
            iterations: 20,
            v_tol: 1e-3,
            max_steps: 2000,
            gravity: [0.0, -9.81, 0.0],
            collision_margin: 3e-3,
            stitch_compliance: 0.0,
        }
    }
}

impl SimConfig {
    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.tau > 0.0 && self.tau <= 1.0) || self.iterations == 0 {
            return Err(Error::Validation(
                "simulation needs dt > 0, 0 < tau <= 1 and iterations >= 1".into(),
            ));
        }
        if !(self.v_tol >= 0.0) || !(self.collision_margin >= 0.0) {
            return Err(Error::Validation(
                "v_tol and collision_margin must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    /// Multipliers of the last step's rows.
    pub lambda: Vec<f64>,
    pub step: usize,
}

impl SimState {
    pub fn at_rest(x: Vec<Vec3>) -> Self {
        let n = x.len();
        SimState {
            x,
            v: vec![Vec3::zeros(); n],
            lambda: Vec::new(),
            step: 0,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn kinetic_norm2(&self) -> f64 {
        self.v.iter().map(|v| v.norm_squared()).sum()
    }
}

/// Stored forward states (`states[0]` is the initial state) and, for each
/// step n → n+1, the contacts that step used.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    pub contacts: Vec<Vec<Contact>>,
    pub config: SimConfig,
    pub collision_margin: f64,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.contacts.len()
    }

    pub fn last(&self) -> &SimState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Write every stored state as `frame_XXXXX.obj` under `dir`.
    pub fn write_frames(&self, mesh: &SimMesh, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let faces: Vec<[usize; 3]> = mesh.triangles.iter().map(|t| t.verts).collect();
        for s in &self.states {
            obj::write_obj(dir.join(format!("frame_{:05}.obj", s.step)), &s.x, &faces)?;
        }
        Ok(())
    }
}

/// One projected row as recorded for the reverse sweep: the row, its local
/// positions and its multiplier before projection.
#[derive(Clone, Copy, Debug)]
pub struct TapeEntry {
    pub row: u32,
    pub x: [Vec3; 3],
    pub lambda: f64,
}

fn check_finite(v: f64, step: usize, row: Row) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            constraint: row.describe(),
        })
    }
}

/// Multiplier change of one row: the solution of
/// `(Σ wᵢ‖∇ᵢC‖² + α̃) Δλ = −C − α̃λ`, or `None` when the row cannot move
/// (all its vertices pinned and no compliance).
pub fn delta_lambda(c: f64, grad: &[Vec3], inv_mass: &[f64], alpha_tilde: f64, lambda: f64) -> Option<f64> {
    let mut s = alpha_tilde;
    for (g, w) in grad.iter().zip(inv_mass) {
        s += w * g.norm_squared();
    }
    (s > 0.0).then(|| -(c + alpha_tilde * lambda) / s)
}

/// Run `iterations` Gauss–Seidel sweeps over the rows of `set`, updating
/// positions and multipliers in place. Each projected row is appended to
/// `tape` when given.
#[allow(clippy::too_many_arguments)]
pub fn project_sweeps(
    x: &mut [Vec3],
    lambda: &mut [f64],
    mesh: &SimMesh,
    set: &ConstraintSet,
    dt: f64,
    iterations: usize,
    step: usize,
    mut tape: Option<&mut Vec<TapeEntry>>,
) -> Result<()> {
    let inv_dt2 = 1.0 / (dt * dt);
    let w = &mesh.inv_mass;
    for _ in 0..iterations {
        for (ri, &row) in set.rows.iter().enumerate() {
            let (verts, n) = set.row_verts(mesh, row);
            let mut xl = [Vec3::zeros(); 3];
            for i in 0..n {
                xl[i] = x[verts[i]];
            }
            let e = set.eval(mesh, row, &xl);
            if !set.is_active(row, e.c) {
                continue;
            }
            let mut wl = [0.0; 3];
            for i in 0..n {
                wl[i] = w[verts[i]];
            }
            let at = set.compliance[ri] * inv_dt2;
            let Some(dl) = delta_lambda(e.c, &e.grad[..n], &wl[..n], at, lambda[ri]) else {
                continue;
            };
            check_finite(dl, step, row)?;
            if let Some(t) = tape.as_deref_mut() {
                t.push(TapeEntry {
                    row: ri as u32,
                    x: xl,
                    lambda: lambda[ri],
                });
            }
            for i in 0..n {
                x[verts[i]] += e.grad[i] * (w[verts[i]] * dl);
            }
            lambda[ri] += dl;
        }
    }
    Ok(())
}

/// Position and multiplier changes produced by the configured sweeps from
/// the given state (multipliers start from `state.lambda`, or zero).
pub fn xpbd_project(
    state: &SimState,
    mesh: &SimMesh,
    set: &ConstraintSet,
    dt: f64,
    iterations: usize,
) -> Result<(Vec<Vec3>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::Validation("dt must be positive".into()));
    }
    let mut x = state.x.clone();
    let mut lambda = if state.lambda.len() == set.len() {
        state.lambda.clone()
    } else {
        vec![0.0; set.len()]
    };
    let lambda0 = lambda.clone();
    project_sweeps(&mut x, &mut lambda, mesh, set, dt, iterations, state.step, None)?;
    let dx = x.iter().zip(&state.x).map(|(a, b)| a - b).collect();
    let dl = lambda.iter().zip(&lambda0).map(|(a, b)| a - b).collect();
    Ok((dx, dl))
}

/// Predicted positions before constraint projection.
pub fn predict(state: &SimState, mesh: &SimMesh, cfg: &SimConfig) -> Vec<Vec3> {
    let g = cfg.gravity();
    let dt = cfg.dt;
    state
        .x
        .iter()
        .zip(&state.v)
        .enumerate()
        .map(|(i, (x, v))| {
            if mesh.pinned[i] {
                *x
            } else {
                x + (v + g * dt) * dt
            }
        })
        .collect()
}

/// Advance one step, returning the new state and the contacts it used.
pub fn step_recorded(
    state: &SimState,
    mesh: &SimMesh,
    body: Option<&BodySdf>,
    cfg: &SimConfig,
    tape: Option<&mut Vec<TapeEntry>>,
) -> Result<(SimState, Vec<Contact>)> {
    let x = predict(state, mesh, cfg);
    let contacts = collision_constraints(&x, &mesh.pinned, body);
    let margin = body.map_or(0.0, |b| b.margin);
    step_with_contacts(state, x, mesh, contacts, margin, cfg, tape)
}

/// Advance one step with a given contact set instead of detecting one.
/// Replaying a recorded trajectory this way keeps contacts frozen.
pub fn step_frozen(
    state: &SimState,
    mesh: &SimMesh,
    contacts: Vec<Contact>,
    margin: f64,
    cfg: &SimConfig,
) -> Result<SimState> {
    let x = predict(state, mesh, cfg);
    step_with_contacts(state, x, mesh, contacts, margin, cfg, None).map(|(s, _)| s)
}

fn step_with_contacts(
    state: &SimState,
    mut x: Vec<Vec3>,
    mesh: &SimMesh,
    contacts: Vec<Contact>,
    margin: f64,
    cfg: &SimConfig,
    tape: Option<&mut Vec<TapeEntry>>,
) -> Result<(SimState, Vec<Contact>)> {
    let set = ConstraintSet::new(mesh, contacts, margin, cfg.stitch_compliance);
    let mut lambda = vec![0.0; set.len()];
    project_sweeps(
        &mut x,
        &mut lambda,
        mesh,
        &set,
        cfg.dt,
        cfg.iterations,
        state.step,
        tape,
    )?;
    let k = cfg.tau / cfg.dt;
    let v = x.iter().zip(&state.x).map(|(a, b)| (a - b) * k).collect();
    Ok((
        SimState {
            x,
            v,
            lambda,
            step: state.step + 1,
        },
        set.contacts,
    ))
}

pub fn step(
    state: &SimState,
    mesh: &SimMesh,
    body: Option<&BodySdf>,
    cfg: &SimConfig,
) -> Result<SimState> {
    step_recorded(state, mesh, body, cfg, None).map(|(s, _)| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Max per-vertex speed fell below `v_tol` after this many steps.
    Converged { steps: usize },
    MaxSteps { steps: usize },
}

impl Termination {
    pub fn steps(&self) -> usize {
        match *self {
            Termination::Converged { steps } | Termination::MaxSteps { steps } => steps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Drape {
    pub state: SimState,
    pub trajectory: Trajectory,
    pub termination: Termination,
}

/// Step until the max per-vertex speed drops below `cfg.v_tol` or
/// `cfg.max_steps` is reached, recording the trajectory.
pub fn drape_to_equilibrium(
    state0: SimState,
    mesh: &SimMesh,
    body: Option<&BodySdf>,
    cfg: &SimConfig,
) -> Result<Drape> {
    cfg.validate()?;
    if state0.x.len() != mesh.num_vertices() || state0.v.len() != mesh.num_vertices() {
        return Err(Error::Dimension(format!(
            "initial state has {} vertices, mesh has {}",
            state0.x.len(),
            mesh.num_vertices()
        )));
    }
    let mut states = vec![state0];
    let mut contacts = Vec::new();
    let mut termination = Termination::MaxSteps {
        steps: cfg.max_steps,
    };
    for n in 0..cfg.max_steps {
        let (next, c) = step_recorded(states.last().unwrap(), mesh, body, cfg, None)?;
        let speed = next.max_speed();
        states.push(next);
        contacts.push(c);
        if speed < cfg.v_tol {
            termination = Termination::Converged { steps: n + 1 };
            break;
        }
    }
    let state = states.last().unwrap().clone();
    Ok(Drape {
        state,
        trajectory: Trajectory {
            states,
            contacts,
            config: cfg.clone(),
            collision_margin: body.map_or(0.0, |b| b.margin),
        },
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ground_box, hanging_strip, lift_flat, square_patch};

    #[test]
    fn two_particle_distance_projection() {
        // C = ‖x₁ − x₀‖ − 1 with unit masses, rigid, from distance 2.
        let mut x = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let n = (x[1] - x[0]).normalize();
        let c = (x[1] - x[0]).norm() - 1.0;
        let grad = [-n, n];
        let dl = delta_lambda(c, &grad, &[1.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(dl, -0.5);
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi += g * dl;
        }
        assert_eq!(x[0], Vec3::new(0.5, 0.0, 0.0));
        assert_eq!((x[1] - x[0]).norm(), 1.0);
    }

    #[test]
    fn compliant_and_satisfied_limits() {
        let g = [Vec3::x(), -Vec3::x()];
        let dl = delta_lambda(0.3, &g, &[1.0, 1.0], 1e300, 0.7).unwrap();
        assert!((dl + 0.7).abs() < 1e-12);
        assert_eq!(delta_lambda(0.0, &g, &[1.0, 1.0], 0.0, 0.0), Some(0.0));
        assert_eq!(delta_lambda(1.0, &g, &[0.0, 0.0], 0.0, 0.0), None);
    }

    fn no_gravity(tau: f64) -> SimConfig {
        SimConfig {
            gravity: [0.0; 3],
            tau,
            ..SimConfig::default()
        }
    }

    #[test]
    fn damped_free_motion() {
        let scene = square_patch(1.0);
        let cfg = no_gravity(DEFAULT_TAU);
        let v0 = Vec3::new(0.3, -0.2, 0.1);
        let mut s = scene.initial_state();
        s.v.iter_mut().for_each(|v| *v = v0);
        let (mut x_expect, mut v_expect) = (scene.x0.clone(), v0);
        for _ in 0..50 {
            x_expect.iter_mut().for_each(|x| *x += v_expect * cfg.dt);
            v_expect *= cfg.tau;
            s = step(&s, &scene.mesh, None, &cfg).unwrap();
            for (x, e) in s.x.iter().zip(&x_expect) {
                assert!((x - e).norm() < 1e-12);
            }
            for v in &s.v {
                assert!((v - v_expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn undamped_free_fall() {
        let scene = square_patch(1.0);
        let cfg = SimConfig {
            tau: 1.0,
            ..SimConfig::default()
        };
        let s = step(&scene.initial_state(), &scene.mesh, None, &cfg).unwrap();
        for (v, x) in s.v.iter().zip(&s.x) {
            assert!((v - cfg.gravity() * cfg.dt).norm() < 1e-12);
            assert!((x.y + 9.81 * cfg.dt * cfg.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn rest_shape_is_a_fixed_point() {
        let scene = square_patch(0.5);
        let cfg = SimConfig {
            max_steps: 100,
            v_tol: 0.0,
            ..no_gravity(DEFAULT_TAU)
        };
        let d = drape_to_equilibrium(scene.initial_state(), &scene.mesh, None, &cfg).unwrap();
        assert_eq!(d.termination, Termination::MaxSteps { steps: 100 });
        for (x, x0) in d.state.x.iter().zip(&scene.x0) {
            assert!((x - x0).norm() <= 1e-8);
        }
    }

    #[test]
    fn cloth_resting_on_a_plane_stays_put() {
        let mut scene = square_patch(0.4);
        let margin = 3e-3;
        scene.x0 = lift_flat(&scene.spec.flat_vertices(), margin);
        let body = ground_box(0.0, 1.0, 0.2, margin);
        let sdf = BodySdf::new(&body);
        let cfg = SimConfig::default();
        let d = drape_to_equilibrium(scene.initial_state(), &scene.mesh, Some(&sdf), &cfg).unwrap();
        assert!(matches!(d.termination, Termination::Converged { steps } if steps <= 3));
        for (x, x0) in d.state.x.iter().zip(&scene.x0) {
            assert!((x - x0).norm() < 1e-6);
        }
    }

    #[test]
    fn hanging_strip_settles() {
        let scene = hanging_strip(0.1, 0.4, 2, 8);
        let cfg = SimConfig::default();
        let d = drape_to_equilibrium(scene.initial_state(), &scene.mesh, None, &cfg).unwrap();
        let Termination::Converged { steps } = d.termination else {
            panic!("strip did not settle: {:?}", d.termination);
        };
        assert!(steps <= 2000);
        assert!(d.state.max_speed() < cfg.v_tol);
        // The strip swings as a pendulum, so kinetic energy oscillates; the
        // peak of each swing must shrink.
        let ke: Vec<f64> = d.trajectory.states.iter().map(SimState::kinetic_norm2).collect();
        let peaks: Vec<f64> = ke.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).map(|w| w[1]).collect();
        assert!(peaks.len() >= 2);
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
        let lowest = d.state.x.iter().map(|x| x.y).fold(f64::MAX, f64::min);
        assert!(lowest < -0.35);
    }

    #[test]
    fn pinned_vertices_do_not_move() {
        let scene = hanging_strip(0.1, 0.2, 1, 2);
        let s = step(&scene.initial_state(), &scene.mesh, None, &SimConfig::default()).unwrap();
        for i in 0..2 {
            assert_eq!(s.x[i], scene.x0[i]);
        }
    }
}
