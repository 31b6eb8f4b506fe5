//! Reverse sweep of the damped XPBD integrator.
//!
//! For a loss that depends on the final state, the sweep carries the adjoint
//! `(x̂ₙ, v̂ₙ)` of every stored state back to the initial one. Each step is
//! `pₙ = xₙ + Δt·vₙ + Δt²g`, `xₙ₊₁ = pₙ + Δx(pₙ)`, `vₙ₊₁ = τ/Δt·(xₙ₊₁ − xₙ)`,
//! so with `yₙ = x̂ₙ₊₁ + τ/Δt·v̂ₙ₊₁`:
//!
//! ```text
//! p̂ₙ = (I + ∂Δx/∂p)ᵀ yₙ
//! x̂ₙ = p̂ₙ − τ/Δt·v̂ₙ₊₁ + ∂L/∂xₙ
//! v̂ₙ = Δt·p̂ₙ + ∂L/∂vₙ
//! ```
//!
//! The transposed solver Jacobian is applied exactly by replaying the
//! step's Gauss–Seidel projections from the stored state (with the step's
//! recorded contact set) and running them backwards. The same pass collects
//! the adjoints of every rest-shape quantity the projections read, which
//! [`rest_shape_pullback`] maps onto the 2D pattern vertices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::mesh::SimMesh;
use crate::sim::constraints::{triangle_rest_pullback, RestAdjoint, TriRestAdjoint};
use crate::sim::{predict, project_sweeps, ConstraintSet, TapeEntry, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointState {
    pub x_hat: Vec<Vec3>,
    pub v_hat: Vec<Vec3>,
    pub step: usize,
}

/// Accumulated adjoints of the rest-shape quantities read by the solver.
#[derive(Clone, Debug)]
pub struct RestAdjoints {
    pub triangles: Vec<TriRestAdjoint>,
    pub bend_lengths: Vec<f64>,
    pub inv_mass: Vec<f64>,
}

impl RestAdjoints {
    fn zeros(mesh: &SimMesh) -> Self {
        RestAdjoints {
            triangles: vec![TriRestAdjoint::default(); mesh.triangles.len()],
            bend_lengths: vec![0.0; mesh.bends.len()],
            inv_mass: vec![0.0; mesh.num_vertices()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdjointSweep {
    /// `states[n]` is the adjoint of forward state n; `states[0]` holds
    /// dL/dx₀ and dL/dv₀.
    pub states: Vec<AdjointState>,
    pub rest: RestAdjoints,
}

/// Run one projection backwards: on entry `xbar`/`lbar` hold the adjoints of
/// the positions and multipliers after it, on exit those before it.
#[allow(clippy::too_many_arguments)]
fn reverse_projection(
    entry: &TapeEntry,
    mesh: &SimMesh,
    set: &ConstraintSet,
    inv_dt2: f64,
    xbar: &mut [Vec3],
    lbar: &mut [f64],
    rest: &mut RestAdjoints,
) {
    let ri = entry.row as usize;
    let row = set.rows[ri];
    let e = set.eval(mesh, row, &entry.x);
    let w = &mesh.inv_mass;
    let at = set.compliance[ri] * inv_dt2;
    let mut s = at;
    for i in 0..e.n {
        s += w[e.verts[i]] * e.grad[i].norm_squared();
    }
    let dl = -(e.c + at * entry.lambda) / s;

    let mut xb_out = [Vec3::zeros(); 3];
    let mut dl_bar = lbar[ri];
    for i in 0..e.n {
        xb_out[i] = xbar[e.verts[i]];
        dl_bar += w[e.verts[i]] * e.grad[i].dot(&xb_out[i]);
    }
    let r_bar = dl_bar / s;
    let s_bar = -dl_bar * dl / s;
    let c_bar = -r_bar;
    lbar[ri] -= at * r_bar;

    let mut g_bar = [Vec3::zeros(); 3];
    for i in 0..e.n {
        let v = e.verts[i];
        g_bar[i] = xb_out[i] * (w[v] * dl) + e.grad[i] * (2.0 * s_bar * w[v]);
        rest.inv_mass[v] += dl * e.grad[i].dot(&xb_out[i]) + s_bar * e.grad[i].norm_squared();
    }
    let vjp = set.vjp(mesh, row, &entry.x, c_bar, &g_bar);
    for i in 0..e.n {
        xbar[e.verts[i]] = xb_out[i] + vjp.x[i];
    }
    match vjp.rest {
        RestAdjoint::None => {}
        RestAdjoint::Triangle { tri, adj } => {
            let acc = &mut rest.triangles[tri];
            acc.inv_dm += adj.inv_dm;
            acc.sqrt_area += adj.sqrt_area;
        }
        RestAdjoint::BendLength { idx, adj } => rest.bend_lengths[idx] += adj,
    }
}

/// Adjoint sweep for a loss whose only dependence on the trajectory is
/// through the terminal state.
pub fn adjoint_sweep(
    traj: &Trajectory,
    mesh: &SimMesh,
    dl_dx_terminal: &[Vec3],
    dl_dv_terminal: &[Vec3],
) -> Result<AdjointSweep> {
    let nv = mesh.num_vertices();
    if dl_dx_terminal.len() != nv || dl_dv_terminal.len() != nv {
        return Err(Error::Dimension(format!(
            "terminal loss gradients must have {nv} entries"
        )));
    }
    let cfg = &traj.config;
    let (dt, k) = (cfg.dt, cfg.tau / cfg.dt);
    let inv_dt2 = 1.0 / (dt * dt);
    let n_steps = traj.num_steps();
    let mut rest = RestAdjoints::zeros(mesh);
    let mut out = vec![
        AdjointState {
            x_hat: dl_dx_terminal.to_vec(),
            v_hat: dl_dv_terminal.to_vec(),
            step: n_steps,
        };
        1
    ];
    let mut tape: Vec<TapeEntry> = Vec::new();
    for n in (0..n_steps).rev() {
        let next = out.last().unwrap();
        let state = &traj.states[n];
        let mut xbar: Vec<Vec3> = next
            .x_hat
            .iter()
            .zip(&next.v_hat)
            .map(|(a, b)| a + b * k)
            .collect();

        // Replay the step's projections with the recorded contacts.
        let mut p = predict(state, mesh, cfg);
        let set = ConstraintSet::new(
            mesh,
            traj.contacts[n].clone(),
            traj.collision_margin,
            cfg.stitch_compliance,
        );
        let mut lambda = vec![0.0; set.len()];
        tape.clear();
        project_sweeps(
            &mut p,
            &mut lambda,
            mesh,
            &set,
            dt,
            cfg.iterations,
            n,
            Some(&mut tape),
        )?;
        let mut lbar = vec![0.0; set.len()];
        for entry in tape.iter().rev() {
            reverse_projection(entry, mesh, &set, inv_dt2, &mut xbar, &mut lbar, &mut rest);
        }

        let x_hat: Vec<Vec3> = xbar
            .iter()
            .zip(&next.v_hat)
            .map(|(pb, vb)| pb - vb * k)
            .collect();
        let v_hat: Vec<Vec3> = xbar
            .iter()
            .enumerate()
            .map(|(i, pb)| if mesh.pinned[i] { Vec3::zeros() } else { pb * dt })
            .collect();
        if x_hat.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Adjoint {
                step: n,
                message: "non-finite adjoint state; try a smaller dt or fewer solver iterations"
                    .into(),
            });
        }
        out.push(AdjointState {
            x_hat,
            v_hat,
            step: n,
        });
    }
    out.reverse();
    Ok(AdjointSweep { states: out, rest })
}

/// Gradient of the loss with respect to every pattern-space vertex (sim
/// indexing), through triangle rest frames, bend lengths and lumped masses.
pub fn rest_shape_pullback(mesh: &SimMesh, sweep: &AdjointSweep) -> Vec<Vec2> {
    let rest = &sweep.rest;
    let mut grad = vec![Vec2::zeros(); mesh.num_vertices()];
    // w = 1/m with m = ρ/3·Σ incident areas.
    let mass_bar: Vec<f64> = (0..mesh.num_vertices())
        .map(|v| {
            if mesh.pinned[v] || mesh.mass[v] <= 0.0 {
                0.0
            } else {
                -rest.inv_mass[v] * mesh.inv_mass[v] * mesh.inv_mass[v]
            }
        })
        .collect();
    let rho3 = mesh.material.density / 3.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area_bar: f64 = tri.verts.iter().map(|&v| mass_bar[v] * rho3).sum();
        let g = triangle_rest_pullback(&mesh.tri_rest[t], &rest.triangles[t], area_bar);
        for i in 0..3 {
            grad[tri.verts[i]] += g[i];
        }
    }
    for (b, &lb) in mesh.bends.iter().zip(&rest.bend_lengths) {
        let d = mesh.rest2d[b.verts[0]] - mesh.rest2d[b.verts[1]];
        let len = d.norm();
        if len > 0.0 {
            grad[b.verts[0]] += d * (lb / len);
            grad[b.verts[1]] -= d * (lb / len);
        }
    }
    grad
}

/// Chain per-panel pattern gradients through cage Jacobians
/// (`jacobians[p]` is (2·V_p) × (2·C_p), rows and columns interleaved x/y).
pub fn chain_to_cage(
    mesh: &SimMesh,
    d_rest2d: &[Vec2],
    jacobians: &[DMatrix<f64>],
) -> Result<Vec<Vec<Vec2>>> {
    if jacobians.len() != mesh.num_panels() || d_rest2d.len() != mesh.num_vertices() {
        return Err(Error::Dimension(
            "one Jacobian per panel and one gradient per vertex required".into(),
        ));
    }
    let mut out = Vec::with_capacity(jacobians.len());
    for (p, jac) in jacobians.iter().enumerate() {
        let range = mesh.panel_range(p);
        if jac.nrows() != 2 * range.len() || jac.ncols() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "panel {p}: Jacobian is {}x{}, panel has {} vertices",
                jac.nrows(),
                jac.ncols(),
                range.len()
            )));
        }
        let mut g = nalgebra::DVector::zeros(jac.nrows());
        for (k, v) in range.enumerate() {
            g[2 * k] = d_rest2d[v].x;
            g[2 * k + 1] = d_rest2d[v].y;
        }
        let gc = jac.tr_mul(&g);
        out.push(
            (0..jac.ncols() / 2)
                .map(|j| Vec2::new(gc[2 * j], gc[2 * j + 1]))
                .collect(),
        );
    }
    Ok(out)
}
