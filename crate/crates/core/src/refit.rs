//! Cage-parameterized sewing-pattern refitting.
//!
//! Each iteration deforms the panels from the current cage vertices,
//! rebuilds the rest shapes, drapes to equilibrium (warm-started), scores
//! the drape against the target and walks the cage vertices down the
//! gradient obtained from the adjoint sweep.

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_sweep, chain_to_cage, rest_shape_pullback};
use crate::cage::{
    build_cage, cage_encloses, cage_from_vertices, cage_jacobian, compute_green_coords, deform,
    Cage, CageCoords, DEFAULT_MARGIN_FRACTION, DEFAULT_MAX_VERTICES,
};
use crate::error::{Error, Result};
use crate::geom::{signed_area2, triangle_area3, Vec2, Vec3};
use crate::losses::{total_loss, LossBreakdown, LossConfig};
use crate::mesh::{assemble_sim_mesh, BodyMesh, SimMesh, TargetDrape};
use crate::pattern::{
    pair_reflection, pattern_quality_report, validate, GarmentSpec, QualityReport, Reflection,
};
use crate::sim::collision::BodySdf;
use crate::sim::{drape_to_equilibrium, SimConfig, SimState, Termination};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// ζ ← ζ − lr·g.
    Descent,
    /// Adaptive moments with bias correction.
    Adam,
}

/// A pinned vertex given by panel id and panel-local index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinRef {
    pub panel: String,
    pub vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefitConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Cap on the global gradient norm; `None` disables clipping.
    pub gradient_clip: Option<f64>,
    /// Stop when the best loss improved by less than this fraction over
    /// the last `patience` iterations.
    pub relative_tolerance: f64,
    pub patience: usize,
    pub symmetry: bool,
    /// Cage offset as a fraction of the panel diameter.
    pub cage_margin_fraction: f64,
    pub cage_max_vertices: usize,
    /// Skip the initial global scaling.
    pub skip_global_scale: bool,
    /// Start each drape from the previous equilibrium instead of the target.
    pub warm_start: bool,
    /// Deterministic asymmetric perturbation added to the cage gradient,
    /// relative to its norm. Zero in normal use.
    pub gradient_jitter: f64,
    pub pinned: Vec<PinRef>,
    pub sim: SimConfig,
    pub loss: LossConfig,
}

impl Default for RefitConfig {
    fn default() -> Self {
        RefitConfig {
            max_iterations: 200,
            learning_rate: 2e-3,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            gradient_clip: None,
            relative_tolerance: 1e-4,
            patience: 10,
            symmetry: true,
            cage_margin_fraction: DEFAULT_MARGIN_FRACTION,
            cage_max_vertices: DEFAULT_MAX_VERTICES,
            skip_global_scale: false,
            warm_start: true,
            gradient_jitter: 0.0,
            pinned: Vec::new(),
            sim: SimConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl RefitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return bad("gradient_clip must be positive");
            }
        }
        if !(self.relative_tolerance >= 0.0) || self.patience == 0 {
            return bad("relative_tolerance must be non-negative and patience positive");
        }
        if !(self.cage_margin_fraction > 0.0) {
            return bad("cage_margin_fraction must be positive");
        }
        if !(self.gradient_jitter >= 0.0) {
            return bad("gradient_jitter must be non-negative");
        }
        self.sim.validate()?;
        for w in self.loss.validate()? {
            warn!("{w}");
        }
        Ok(())
    }
}

/// Cage and precomputed coordinates of one panel.
#[derive(Clone, Debug)]
pub struct PanelCage {
    pub rest: Cage,
    pub coords: CageCoords,
    /// Constant because the deformation is linear in the cage vertices.
    pub jacobian: DMatrix<f64>,
}

/// Two cages related by a reflection: `follower[corr[j]] = R·leader[j] + t`.
#[derive(Clone, Debug)]
pub struct CagePair {
    pub leader: usize,
    pub follower: usize,
    pub corr: Vec<usize>,
    pub reflection: Reflection,
}

/// All panel cages of a garment.
#[derive(Clone, Debug)]
pub struct CageRig {
    pub panels: Vec<PanelCage>,
    pub pairs: Vec<CagePair>,
    offsets: Vec<usize>,
}

impl CageRig {
    /// Cages from `spec.cages` where given, built otherwise. The second
    /// panel of every symmetry pair gets the mirror image of the first
    /// panel's cage.
    pub fn build(spec: &GarmentSpec, margin_fraction: f64, max_vertices: usize) -> Result<Self> {
        let mut cages: Vec<Option<Cage>> = vec![None; spec.panels.len()];
        let mut pairs = Vec::new();
        let make = |i: usize| -> Result<Cage> {
            let p = &spec.panels[i];
            match spec.cages.get(&p.id) {
                Some(v) => cage_from_vertices(p, v.clone()),
                None => build_cage(p, margin_fraction * p.diameter(), max_vertices),
            }
        };
        for pair in spec.effective_symmetry_pairs() {
            let a = spec.panel_index(&pair.panel_a).unwrap();
            let b = spec.panel_index(&pair.panel_b).unwrap();
            if cages[a].is_some() || cages[b].is_some() {
                continue;
            }
            let leader = make(a)?;
            let reflection = pair_reflection(spec, &pair);
            let (mirror, corr) = leader.mirrored(spec.panels[b].id.clone(), &reflection);
            let follower = cage_from_vertices(&spec.panels[b], mirror.vertices)?;
            cages[a] = Some(leader);
            cages[b] = Some(follower);
            pairs.push(CagePair {
                leader: a,
                follower: b,
                corr,
                reflection,
            });
        }
        let mut panels = Vec::with_capacity(spec.panels.len());
        for (i, c) in cages.into_iter().enumerate() {
            let rest = match c {
                Some(c) => c,
                None => make(i)?,
            };
            let coords = compute_green_coords(&rest, &spec.panels[i].vertices)?;
            let jacobian = cage_jacobian(&coords, &rest, &rest.vertices)?;
            panels.push(PanelCage {
                rest,
                coords,
                jacobian,
            });
        }
        let mut offsets = spec.panel_offsets();
        offsets.push(spec.vertex_count());
        Ok(CageRig {
            panels,
            pairs,
            offsets,
        })
    }

    pub fn rest_zetas(&self) -> Vec<Vec<Vec2>> {
        self.panels.iter().map(|p| p.rest.vertices.clone()).collect()
    }

    /// Pattern vertices (sim order) for cage vertices `zetas`.
    pub fn deform(&self, zetas: &[Vec<Vec2>]) -> Result<Vec<Vec2>> {
        if zetas.len() != self.panels.len() {
            return Err(Error::Dimension(format!(
                "{} cages, {} cage states",
                self.panels.len(),
                zetas.len()
            )));
        }
        let mut out = Vec::with_capacity(*self.offsets.last().unwrap());
        for (p, z) in self.panels.iter().zip(zetas) {
            out.extend(deform(&p.coords, &p.rest, z)?);
        }
        Ok(out)
    }

    pub fn jacobians(&self) -> Vec<DMatrix<f64>> {
        self.panels.iter().map(|p| p.jacobian.clone()).collect()
    }

    /// Overwrite every follower cage with the exact mirror of its leader.
    pub fn mirror_followers(&self, zetas: &mut [Vec<Vec2>]) {
        for pr in &self.pairs {
            for j in 0..pr.corr.len() {
                zetas[pr.follower][pr.corr[j]] = pr.reflection.apply(&zetas[pr.leader][j]);
            }
        }
    }

    /// Every cage must stay simple and strictly contain its deformed panel.
    pub fn check_valid(&self, zetas: &[Vec<Vec2>], pattern: &[Vec2], ids: &[String]) -> Result<()> {
        for (p, z) in zetas.iter().enumerate() {
            let pts = &pattern[self.offsets[p]..self.offsets[p + 1]];
            if !cage_encloses(z, pts) {
                return Err(Error::Cage(format!(
                    "cage of panel '{}' self-intersected or no longer encloses its panel; \
                     lower the learning rate or enlarge the cage margin",
                    ids[p]
                )));
            }
        }
        Ok(())
    }
}

/// √(mean over triangles of target area / rest area).
pub fn initial_global_scale(spec: &GarmentSpec, target: &TargetDrape) -> Result<f64> {
    let offsets = spec.panel_offsets();
    let x = &target.positions;
    if x.len() != spec.vertex_count() {
        return Err(Error::Dimension(format!(
            "target has {} vertices, garment {}",
            x.len(),
            spec.vertex_count()
        )));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, panel) in spec.panels.iter().enumerate() {
        let o = offsets[p];
        for (t, tri) in panel.triangles.iter().enumerate() {
            let v = &panel.vertices;
            let rest = signed_area2(&v[tri[0]], &v[tri[1]], &v[tri[2]]);
            if !(rest > 0.0) {
                return Err(Error::Validation(format!(
                    "panel '{}' triangle {t} is degenerate in the rest shape",
                    panel.id
                )));
            }
            sum += triangle_area3(&x[tri[0] + o], &x[tri[1] + o], &x[tri[2] + o]) / rest;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Validation("garment has no triangles".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Scale every panel (and any supplied cage) by `s` about the panel's
/// centroid.
pub fn apply_global_scale(spec: &mut GarmentSpec, s: f64) {
    for panel in &mut spec.panels {
        let c = panel.centroid();
        for v in &mut panel.vertices {
            *v = c + (*v - c) * s;
        }
        if let Some(cage) = spec.cages.get_mut(&panel.id) {
            for v in cage.iter_mut() {
                *v = c + (*v - c) * s;
            }
        }
    }
}

/// Replace each paired cage-vertex gradient by the average of the pair,
/// taken through the mirror map.
pub fn symmetrize_gradient(d_cage: &mut [Vec<Vec2>], pairs: &[CagePair]) -> Result<()> {
    for pr in pairs {
        let (na, nb) = (d_cage[pr.leader].len(), d_cage[pr.follower].len());
        if na != pr.corr.len() || nb != pr.corr.len() {
            return Err(Error::Dimension(format!(
                "symmetry pair cages have {na} and {nb} vertices, correspondence {}",
                pr.corr.len()
            )));
        }
        let m = pr.reflection.linear;
        for j in 0..na {
            let k = pr.corr[j];
            // m is an involution, so it maps in both directions.
            let avg = (d_cage[pr.leader][j] + m * d_cage[pr.follower][k]) * 0.5;
            d_cage[pr.leader][j] = avg;
            d_cage[pr.follower][k] = m * avg;
        }
    }
    Ok(())
}

/// Optimizer state over all cage vertices.
#[derive(Clone, Debug, Default)]
pub struct Optimizer {
    m: Vec<Vec<Vec2>>,
    v: Vec<Vec<Vec2>>,
    t: i32,
}

impl Optimizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Apply one update in place.
    pub fn update_step(
        &mut self,
        zetas: &mut [Vec<Vec2>],
        grad: &[Vec<Vec2>],
        cfg: &RefitConfig,
    ) -> Result<()> {
        let norm2: f64 = grad.iter().flatten().map(|g| g.norm_squared()).sum();
        if !norm2.is_finite() {
            return Err(Error::Validation("cage gradient is not finite".into()));
        }
        let norm = norm2.sqrt();
        let scale = match cfg.gradient_clip {
            Some(cap) if norm > cap => cap / norm,
            _ => 1.0,
        };
        let lr = cfg.learning_rate;
        match cfg.optimizer {
            OptimizerKind::Descent => {
                for (z, g) in zetas.iter_mut().zip(grad) {
                    for (zi, gi) in z.iter_mut().zip(g) {
                        *zi -= gi * (lr * scale);
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grad.iter().map(|g| vec![Vec2::zeros(); g.len()]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for p in 0..zetas.len() {
                    for j in 0..zetas[p].len() {
                        let g = grad[p][j] * scale;
                        let m = &mut self.m[p][j];
                        let v = &mut self.v[p][j];
                        *m = *m * b1 + g * (1.0 - b1);
                        *v = *v * b2 + g.component_mul(&g) * (1.0 - b2);
                        let mh = *m / c1;
                        let vh = *v / c2;
                        for k in 0..2 {
                            zetas[p][j][k] -= lr * mh[k] / (vh[k].sqrt() + cfg.adam_epsilon);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// One row of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub total: f64,
    pub shape_match: f64,
    pub curvature: f64,
    pub pattern_match: f64,
    pub total_area: f64,
    pub gradient_norm: f64,
    pub sim_steps: usize,
    pub sim_converged: bool,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RefitTermination {
    Converged { iterations: usize },
    MaxIterations { iterations: usize },
}

#[derive(Clone, Debug)]
pub struct RefitResult {
    /// Best pattern, with its cages and its drape as reference drape.
    pub spec: GarmentSpec,
    pub drape: Vec<Vec3>,
    pub history: Vec<HistoryRow>,
    pub quality_before: QualityReport,
    pub quality_after: QualityReport,
    pub termination: RefitTermination,
    pub best_iteration: usize,
    pub global_scale: f64,
    /// Loss terms of the best iterate.
    pub best: LossBreakdown,
}

/// Sim indices of the configured pins.
pub fn resolve_pins(mesh: &SimMesh, pins: &[PinRef]) -> Result<Vec<usize>> {
    pins.iter()
        .map(|p| {
            let i = mesh
                .panel_ids
                .iter()
                .position(|q| q == &p.panel)
                .ok_or_else(|| Error::Validation(format!("pin on unknown panel '{}'", p.panel)))?;
            let r = mesh.panel_range(i);
            if p.vertex >= r.len() {
                return Err(Error::Validation(format!(
                    "pin vertex {} out of range for panel '{}'",
                    p.vertex, p.panel
                )));
            }
            Ok(r.start + p.vertex)
        })
        .collect()
}

/// Deterministic, deliberately asymmetric perturbation of a cage gradient.
fn jitter(d_cage: &mut [Vec<Vec2>], amount: f64, iteration: usize) {
    let norm: f64 = d_cage.iter().flatten().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    let count = d_cage.iter().map(Vec::len).sum::<usize>().max(1) as f64;
    let k = amount * norm / count.sqrt();
    for (p, g) in d_cage.iter_mut().enumerate() {
        for (j, gj) in g.iter_mut().enumerate() {
            let a = 1.7 * (j + 1) as f64 + 2.3 * (p + 1) as f64 + 0.9 * iteration as f64;
            *gj += Vec2::new(a.sin(), (1.3 * a).cos()) * k;
        }
    }
}

/// Everything computed at one cage state.
pub struct Evaluation {
    pub pattern: Vec<Vec2>,
    pub drape: Vec<Vec3>,
    pub loss: LossBreakdown,
    /// dL/dζ per panel, before symmetrization.
    pub d_cage: Vec<Vec<Vec2>>,
    pub termination: Termination,
}

/// Deform, drape from `x_start`, score and differentiate.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    rig: &CageRig,
    zetas: &[Vec<Vec2>],
    mesh: &mut SimMesh,
    design: &[Vec2],
    sdf: Option<&BodySdf>,
    target: &TargetDrape,
    x_start: &[Vec3],
    sim: &SimConfig,
    loss_cfg: &LossConfig,
) -> Result<Evaluation> {
    let pattern = rig.deform(zetas)?;
    rig.check_valid(zetas, &pattern, &mesh.panel_ids)?;
    mesh.set_rest(&pattern)?;
    let drape = drape_to_equilibrium(SimState::at_rest(x_start.to_vec()), mesh, sdf, sim)?;
    let x = &drape.state.x;
    let loss = total_loss(x, &pattern, design, target, mesh, loss_cfg)?;
    let zero = vec![Vec3::zeros(); x.len()];
    let sweep = adjoint_sweep(&drape.trajectory, mesh, &loss.grad_x, &zero)?;
    let mut d_rest = rest_shape_pullback(mesh, &sweep);
    for (d, g) in d_rest.iter_mut().zip(&loss.grad_rest) {
        *d += g;
    }
    let d_cage = chain_to_cage(mesh, &d_rest, &rig.jacobians())?;
    Ok(Evaluation {
        pattern,
        drape: drape.state.x,
        loss,
        d_cage,
        termination: drape.termination,
    })
}

/// Refit `spec` so that its drape on `body` matches `target`.
pub fn refit(
    spec: &GarmentSpec,
    body: Option<&BodyMesh>,
    target: &TargetDrape,
    cfg: &RefitConfig,
) -> Result<RefitResult> {
    cfg.validate()?;
    validate(spec)?;
    let quality_before = pattern_quality_report(spec);
    let design = spec.flat_vertices();

    let mut work = spec.clone();
    let global_scale = if cfg.skip_global_scale {
        1.0
    } else {
        initial_global_scale(spec, target)?
    };
    apply_global_scale(&mut work, global_scale);
    info!("initial global scale {global_scale:.6}");

    let mut mesh = assemble_sim_mesh(&work)?;
    if target.positions.len() != mesh.num_vertices() {
        return Err(Error::Dimension(format!(
            "target has {} vertices, garment {}",
            target.positions.len(),
            mesh.num_vertices()
        )));
    }
    mesh.pin(&resolve_pins(&mesh, &cfg.pinned)?);
    let rig = CageRig::build(&work, cfg.cage_margin_fraction, cfg.cage_max_vertices)?;
    let sdf = body.map(BodySdf::new);

    let mut zetas = rig.rest_zetas();
    let mut opt = Optimizer::new();
    let mut x_start = target.positions.clone();
    let mut history: Vec<HistoryRow> = Vec::new();
    let mut best_curve: Vec<f64> = Vec::new();
    let mut best: Option<(usize, Vec<Vec<Vec2>>, Evaluation)> = None;
    let mut termination = RefitTermination::MaxIterations {
        iterations: cfg.max_iterations,
    };

    for it in 0..cfg.max_iterations {
        let t0 = Instant::now();
        let wrap = |e: Error| Error::Refit {
            iteration: it,
            source: Box::new(e),
        };
        let mut ev = evaluate(
            &rig,
            &zetas,
            &mut mesh,
            &design,
            sdf.as_ref(),
            target,
            &x_start,
            &cfg.sim,
            &cfg.loss,
        )
        .map_err(wrap)?;
        if let Termination::MaxSteps { steps } = ev.termination {
            debug!("iteration {it}: drape stopped at the step limit ({steps})");
        }
        if cfg.gradient_jitter > 0.0 {
            jitter(&mut ev.d_cage, cfg.gradient_jitter, it);
        }
        if cfg.symmetry {
            symmetrize_gradient(&mut ev.d_cage, &rig.pairs).map_err(wrap)?;
        }
        let gnorm = ev
            .d_cage
            .iter()
            .flatten()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt();
        let l = &ev.loss;
        history.push(HistoryRow {
            iteration: it,
            total: l.total,
            shape_match: l.shape_match,
            curvature: l.curvature,
            pattern_match: l.pattern_match,
            total_area: l.total_area,
            gradient_norm: gnorm,
            sim_steps: ev.termination.steps(),
            sim_converged: matches!(ev.termination, Termination::Converged { .. }),
            seconds: 0.0,
        });
        info!(
            "iteration {it}: loss {:.6e} (sm {:.3e}, curv {:.3e}, pm {:.3e}, ta {:.3e}) |g| {:.3e}, {} steps",
            l.total, l.shape_match, l.curvature, l.pattern_match, l.total_area, gnorm,
            ev.termination.steps()
        );

        let mut next = zetas.clone();
        opt.update_step(&mut next, &ev.d_cage, cfg).map_err(wrap)?;
        if cfg.symmetry {
            rig.mirror_followers(&mut next);
        }
        if cfg.warm_start {
            x_start.clone_from(&ev.drape);
        }
        let improved = best.as_ref().is_none_or(|b| ev.loss.total < b.2.loss.total);
        if improved {
            best = Some((it, zetas, ev));
        }
        zetas = next;
        best_curve.push(best.as_ref().unwrap().2.loss.total);
        history.last_mut().unwrap().seconds = t0.elapsed().as_secs_f64();

        if it >= cfg.patience {
            let old = best_curve[it - cfg.patience];
            let now = best_curve[it];
            if old - now <= cfg.relative_tolerance * old.abs() {
                termination = RefitTermination::Converged { iterations: it + 1 };
                break;
            }
        }
    }

    let (best_iteration, best_zetas, ev) = best.expect("at least one iteration");
    let mut out = spec.clone();
    out.set_flat_vertices(&ev.pattern);
    for (p, z) in best_zetas.iter().enumerate() {
        out.cages.insert(out.panels[p].id.clone(), z.clone());
    }
    out.reference_drape3d = Some(ev.drape.clone());
    let quality_after = pattern_quality_report(&out);
    Ok(RefitResult {
        spec: out,
        drape: ev.drape,
        history,
        quality_before,
        quality_after,
        termination,
        best_iteration,
        global_scale,
        best: ev.loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat2;

    fn mirror_x() -> Reflection {
        Reflection {
            linear: Mat2::new(-1.0, 0.0, 0.0, 1.0),
            offset: Vec2::zeros(),
        }
    }

    fn pair() -> CagePair {
        CagePair {
            leader: 0,
            follower: 1,
            corr: vec![0],
            reflection: mirror_x(),
        }
    }

    #[test]
    fn symmetrize_averages_through_the_mirror() {
        let m = mirror_x();
        let mut g = vec![vec![Vec2::new(1.0, 0.0)], vec![m.linear * Vec2::new(3.0, 0.0)]];
        symmetrize_gradient(&mut g, &[pair()]).unwrap();
        assert_eq!(g[0][0], Vec2::new(2.0, 0.0));
        assert_eq!(g[1][0], m.linear * Vec2::new(2.0, 0.0));

        let mut anti = vec![vec![Vec2::new(1.0, 2.0)], vec![-(m.linear * Vec2::new(1.0, 2.0))]];
        symmetrize_gradient(&mut anti, &[pair()]).unwrap();
        assert_eq!(anti[0][0], Vec2::zeros());
        assert_eq!(anti[1][0], Vec2::zeros());

        let mut same = vec![vec![Vec2::new(0.5, -1.0)], vec![m.linear * Vec2::new(0.5, -1.0)]];
        let before = same.clone();
        symmetrize_gradient(&mut same, &[pair()]).unwrap();
        assert_eq!(same, before);
    }

    #[test]
    fn symmetrize_rejects_mismatched_pairs() {
        let mut g = vec![vec![Vec2::zeros(); 2], vec![Vec2::zeros()]];
        assert!(symmetrize_gradient(&mut g, &[pair()]).is_err());
    }

    #[test]
    fn descent_zero_gradient_and_unit_step() {
        let cfg = RefitConfig {
            optimizer: OptimizerKind::Descent,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut z = vec![vec![Vec2::new(1.0, 1.0), Vec2::new(2.0, 0.0)]];
        let start = z.clone();
        let mut opt = Optimizer::new();
        opt.update_step(&mut z, &[vec![Vec2::zeros(); 2]], &cfg).unwrap();
        assert_eq!(z, start);
        opt.update_step(&mut z, &[vec![Vec2::new(1.0, 0.0), Vec2::zeros()]], &cfg)
            .unwrap();
        assert!((z[0][0] - Vec2::new(0.9, 1.0)).norm() < 1e-15);
        assert_eq!(z[0][1], start[0][1]);
    }

    #[test]
    fn clipping_caps_the_step() {
        let cfg = RefitConfig {
            optimizer: OptimizerKind::Descent,
            learning_rate: 0.5,
            gradient_clip: Some(1.0),
            ..Default::default()
        };
        let mut z = vec![vec![Vec2::zeros(), Vec2::zeros()]];
        let g = vec![vec![Vec2::new(1.2, 0.0), Vec2::new(0.0, 1.6)]];
        Optimizer::new().update_step(&mut z, &g, &cfg).unwrap();
        let step: f64 = z[0].iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        assert!((step - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut z = vec![vec![Vec2::zeros()]];
        let g = vec![vec![Vec2::new(f64::NAN, 0.0)]];
        assert!(Optimizer::new()
            .update_step(&mut z, &g, &RefitConfig::default())
            .is_err());
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        let cfg = RefitConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut z = vec![vec![Vec2::zeros()]];
        Optimizer::new()
            .update_step(&mut z, &[vec![Vec2::new(3.0, -0.2)]], &cfg)
            .unwrap();
        assert!((z[0][0].x + 0.01).abs() < 1e-9);
        assert!((z[0][0].y - 0.01).abs() < 1e-9);
    }
}
