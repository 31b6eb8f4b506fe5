//! Fit losses on the equilibrium drape and regularizers on the 2D pattern.
//!
//! `total = L_SM + w_curv·L_curvature + w_pm·L_PM + w_ta·L_TA`. The shape
//! match term acts on 3D positions and is differentiated through the
//! simulation; the other three act directly on pattern vertices.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cross2, perp, signed_area2, Mat2, Vec2, Vec3};
use crate::mesh::{SimMesh, TargetDrape, VertexClass};
use crate::pattern::signed_area_gradient;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of free-boundary vertices in the shape match.
    pub alpha: f64,
    /// Weight of seam vertices in the shape match.
    pub beta: f64,
    /// Weight of interior vertices in the shape match.
    pub gamma: f64,
    pub w_curv: f64,
    pub w_pm: f64,
    pub w_ta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.01,
            w_curv: 0.1,
            w_pm: 1.0,
            w_ta: 10.0,
        }
    }
}

impl LossConfig {
    /// Rejects negative weights; returns warnings for soft violations.
    pub fn validate(&self) -> Result<Vec<String>> {
        let w = [
            self.alpha, self.beta, self.gamma, self.w_curv, self.w_pm, self.w_ta,
        ];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("loss weights must be non-negative".into()));
        }
        let mut warnings = Vec::new();
        let cap = 0.1 * self.alpha.min(self.beta);
        if self.gamma > cap && (self.alpha > 0.0 || self.beta > 0.0) {
            warnings.push(format!(
                "interior weight gamma = {} exceeds 0.1·min(alpha, beta) = {cap}",
                self.gamma
            ));
        }
        Ok(warnings)
    }

    fn weight(&self, class: VertexClass) -> f64 {
        match class {
            VertexClass::Boundary => self.alpha,
            VertexClass::Seam => self.beta,
            VertexClass::Interior => self.gamma,
        }
    }
}

/// Per-term values (unweighted except for the per-class weights inside the
/// shape match), the weighted total, and both gradients.
#[derive(Clone, Debug)]
pub struct LossBreakdown {
    pub shape_match: f64,
    pub curvature: f64,
    pub pattern_match: f64,
    pub total_area: f64,
    pub total: f64,
    /// ∂L/∂x_N on the drape.
    pub grad_x: Vec<Vec3>,
    /// ∂L/∂x̄ from the pattern-space terms.
    pub grad_rest: Vec<Vec2>,
}

pub fn loss_shape_match(
    x: &[Vec3],
    target: &TargetDrape,
    mesh: &SimMesh,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec3>)> {
    let n = mesh.num_vertices();
    if x.len() != n || target.positions.len() != n {
        return Err(Error::Dimension(format!(
            "shape match: drape has {}, target {}, mesh {n} vertices",
            x.len(),
            target.positions.len()
        )));
    }
    let mut value = 0.0;
    let mut grad = vec![Vec3::zeros(); n];
    for i in 0..n {
        let w = cfg.weight(mesh.class[i]);
        let d = x[i] - target.positions[i];
        value += w * d.norm_squared();
        grad[i] = d * (2.0 * w);
    }
    Ok((value, grad))
}

/// Least-squares scaled rotation T = s·R with Σ‖eₖ − T ēₖ‖² minimal.
pub fn fit_similarity(e: &[Vec2], e_rest: &[Vec2]) -> Result<Mat2> {
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for (ek, rk) in e.iter().zip(e_rest) {
        a += ek.dot(rk);
        b += cross2(rk, ek);
        d += rk.norm_squared();
    }
    if d == 0.0 {
        return Err(Error::Validation(
            "similarity fit needs a non-zero rest edge".into(),
        ));
    }
    Ok(Mat2::new(a, -b, b, a) / d)
}

/// Boundary curvature distortion: at each boundary vertex a scaled rotation
/// is fitted to its two incident edges and the residual of their sum is
/// penalized.
pub fn loss_boundary_curvature(
    current: &[Vec2],
    rest: &[Vec2],
    mesh: &SimMesh,
) -> Result<(f64, Vec<Vec2>)> {
    let mut value = 0.0;
    let mut grad = vec![Vec2::zeros(); current.len()];
    for lp in &mesh.boundary_loops {
        let m = lp.len();
        for k in 0..m {
            let (i, inext, iprev) = (lp[k], lp[(k + 1) % m], lp[(k + m - 1) % m]);
            let e1 = current[inext] - current[i];
            let e2 = current[iprev] - current[i];
            let r1 = rest[inext] - rest[i];
            let r2 = rest[iprev] - rest[i];
            let t = fit_similarity(&[e1, e2], &[r1, r2])?;
            let rs = r1 + r2;
            let res = (e1 + e2) - t * rs;
            value += res.norm_squared();
            // T depends on e₁, e₂ through a = Σ e·ē and b = Σ ē×e.
            let d = r1.norm_squared() + r2.norm_squared();
            let ra = res.dot(&rs) / d;
            let rb = res.dot(&perp(&rs)) / d;
            let g1 = (res - (r1 * ra + perp(&r1) * rb)) * 2.0;
            let g2 = (res - (r2 * ra + perp(&r2) * rb)) * 2.0;
            grad[inext] += g1;
            grad[iprev] += g2;
            grad[i] -= g1 + g2;
        }
    }
    Ok((value, grad))
}

/// Squared mismatch of squared edge lengths along every seam.
pub fn loss_pattern_match(current: &[Vec2], mesh: &SimMesh) -> (f64, Vec<Vec2>) {
    let mut value = 0.0;
    let mut grad = vec![Vec2::zeros(); current.len()];
    for pairs in &mesh.seam_pairs {
        for w in pairs.windows(2) {
            let ea = current[w[1][0]] - current[w[0][0]];
            let eb = current[w[1][1]] - current[w[0][1]];
            let diff = ea.norm_squared() - eb.norm_squared();
            value += diff * diff;
            let ga = ea * (4.0 * diff);
            let gb = eb * (-4.0 * diff);
            grad[w[1][0]] += ga;
            grad[w[0][0]] -= ga;
            grad[w[1][1]] += gb;
            grad[w[0][1]] -= gb;
        }
    }
    (value, grad)
}

/// Pattern area of each panel.
pub fn panel_pattern_areas(current: &[Vec2], mesh: &SimMesh) -> Vec<f64> {
    let mut areas = vec![0.0; mesh.num_panels()];
    for tri in &mesh.triangles {
        let [a, b, c] = tri.verts;
        areas[tri.panel] += signed_area2(&current[a], &current[b], &current[c]);
    }
    areas
}

/// Σ_p (A_p − pattern area of p)².
pub fn loss_total_area(
    current: &[Vec2],
    target: &TargetDrape,
    mesh: &SimMesh,
) -> (f64, Vec<Vec2>) {
    let areas = panel_pattern_areas(current, mesh);
    let resid: Vec<f64> = (0..mesh.num_panels())
        .map(|p| target.area_of(mesh, p) - areas[p])
        .collect();
    let value = resid.iter().map(|r| r * r).sum();
    let mut grad = vec![Vec2::zeros(); current.len()];
    for tri in &mesh.triangles {
        let [a, b, c] = tri.verts;
        let g = signed_area_gradient(&current[a], &current[b], &current[c]);
        let k = -2.0 * resid[tri.panel];
        for i in 0..3 {
            grad[tri.verts[i]] += g[i] * k;
        }
    }
    (value, grad)
}

pub fn total_loss(
    x: &[Vec3],
    current: &[Vec2],
    rest: &[Vec2],
    target: &TargetDrape,
    mesh: &SimMesh,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if current.len() != mesh.num_vertices() || rest.len() != mesh.num_vertices() {
        return Err(Error::Dimension("pattern size does not match the mesh".into()));
    }
    for w in cfg.validate()? {
        warn!("{w}");
    }
    let (sm, grad_x) = loss_shape_match(x, target, mesh, cfg)?;
    let (curv, g_curv) = loss_boundary_curvature(current, rest, mesh)?;
    let (pm, g_pm) = loss_pattern_match(current, mesh);
    let (ta, g_ta) = loss_total_area(current, target, mesh);
    let grad_rest = (0..current.len())
        .map(|i| g_curv[i] * cfg.w_curv + g_pm[i] * cfg.w_pm + g_ta[i] * cfg.w_ta)
        .collect();
    Ok(LossBreakdown {
        shape_match: sm,
        curvature: curv,
        pattern_match: pm,
        total_area: ta,
        total: sm + cfg.w_curv * curv + cfg.w_pm * pm + cfg.w_ta * ta,
        grad_x,
        grad_rest,
    })
}
