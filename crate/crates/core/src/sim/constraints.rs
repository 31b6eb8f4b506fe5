//! Constraint rows of the XPBD solve and their first and second-order
//! derivative machinery.
//!
//! Every constraint is projected as a scalar row. Triangles contribute three
//! rows (two stretch, one shear), stitches one row per axis, bends and
//! contacts one row each. Besides the value and gradient used by the forward
//! solve, each row exposes a vector-Jacobian product of its gradient map so
//! the adjoint can run each projection backwards.

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2, Vec3};
use crate::mesh::{SimMesh, TriangleRest};
use crate::sim::collision::Contact;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Row {
    /// ‖F·eₖ‖ − 1 for column `col` of the rest frame, scaled by √area.
    Stretch { tri: usize, col: usize },
    /// (F·e₁)·(F·e₂), scaled by √area.
    Shear { tri: usize },
    Bend { idx: usize },
    Stitch { idx: usize, axis: usize },
    Contact { idx: usize },
}

impl Row {
    pub fn describe(&self) -> String {
        match *self {
            Row::Stretch { tri, col } => format!("stretch[{col}] of triangle {tri}"),
            Row::Shear { tri } => format!("shear of triangle {tri}"),
            Row::Bend { idx } => format!("bend {idx}"),
            Row::Stitch { idx, axis } => format!("stitch {idx} axis {axis}"),
            Row::Contact { idx } => format!("contact {idx}"),
        }
    }
}

/// Value and gradient of one row evaluated at current positions.
#[derive(Clone, Copy, Debug)]
pub struct RowEval {
    pub verts: [usize; 3],
    pub n: usize,
    pub c: f64,
    pub grad: [Vec3; 3],
}

/// Adjoints of the rest-shape quantities of one triangle.
#[derive(Clone, Copy, Debug, Default)]
pub struct TriRestAdjoint {
    pub inv_dm: Mat2,
    pub sqrt_area: f64,
}

/// Output of a row's second-order product: position adjoints of the local
/// vertices and the rest-parameter adjoint it touches.
#[derive(Clone, Copy, Debug)]
pub struct RowVjp {
    pub x: [Vec3; 3],
    pub rest: RestAdjoint,
}

#[derive(Clone, Copy, Debug)]
pub enum RestAdjoint {
    None,
    Triangle { tri: usize, adj: TriRestAdjoint },
    BendLength { idx: usize, adj: f64 },
}

/// Rows of one simulation step in their fixed Gauss–Seidel order:
/// triangles, then bends, then stitches, then contacts.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub rows: Vec<Row>,
    pub compliance: Vec<f64>,
    pub contacts: Vec<Contact>,
    pub collision_margin: f64,
}

impl ConstraintSet {
    pub fn new(
        mesh: &SimMesh,
        contacts: Vec<Contact>,
        collision_margin: f64,
        stitch_compliance: f64,
    ) -> Self {
        let m = &mesh.material;
        let mut rows = Vec::with_capacity(
            3 * mesh.triangles.len() + mesh.bends.len() + 3 * mesh.stitches.len() + contacts.len(),
        );
        let mut compliance = Vec::with_capacity(rows.capacity());
        for tri in 0..mesh.triangles.len() {
            rows.push(Row::Stretch { tri, col: 0 });
            compliance.push(m.stretch_compliance);
            rows.push(Row::Stretch { tri, col: 1 });
            compliance.push(m.stretch_compliance);
            rows.push(Row::Shear { tri });
            compliance.push(m.shear_compliance);
        }
        for idx in 0..mesh.bends.len() {
            rows.push(Row::Bend { idx });
            compliance.push(m.bend_compliance.unwrap_or(0.0));
        }
        for idx in 0..mesh.stitches.len() {
            for axis in 0..3 {
                rows.push(Row::Stitch { idx, axis });
                compliance.push(stitch_compliance);
            }
        }
        for idx in 0..contacts.len() {
            rows.push(Row::Contact { idx });
            compliance.push(0.0);
        }
        ConstraintSet {
            rows,
            compliance,
            contacts,
            collision_margin,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Vertices a row touches.
    pub fn row_verts(&self, mesh: &SimMesh, row: Row) -> ([usize; 3], usize) {
        match row {
            Row::Stretch { tri, .. } | Row::Shear { tri } => (mesh.triangles[tri].verts, 3),
            Row::Bend { idx } => {
                let v = mesh.bends[idx].verts;
                ([v[0], v[1], 0], 2)
            }
            Row::Stitch { idx, .. } => {
                let v = mesh.stitches[idx];
                ([v[0], v[1], 0], 2)
            }
            Row::Contact { idx } => ([self.contacts[idx].vertex, 0, 0], 1),
        }
    }

    /// Constraint value and gradient of `row` at local positions `x`.
    pub fn eval(&self, mesh: &SimMesh, row: Row, x: &[Vec3; 3]) -> RowEval {
        let (verts, n) = self.row_verts(mesh, row);
        let (c, grad) = match row {
            Row::Stretch { tri, col } => {
                let rest = &mesh.tri_rest[tri];
                let k = stretch_coeffs(&rest.inv_dm, col);
                let f = x[0] * k[0] + x[1] * k[1] + x[2] * k[2];
                let len = f.norm();
                let dir = if len > 0.0 { f / len } else { Vec3::zeros() };
                let s = rest.sqrt_area;
                (
                    s * (len - 1.0),
                    [dir * (s * k[0]), dir * (s * k[1]), dir * (s * k[2])],
                )
            }
            Row::Shear { tri } => {
                let rest = &mesh.tri_rest[tri];
                let k1 = stretch_coeffs(&rest.inv_dm, 0);
                let k2 = stretch_coeffs(&rest.inv_dm, 1);
                let f1 = x[0] * k1[0] + x[1] * k1[1] + x[2] * k1[2];
                let f2 = x[0] * k2[0] + x[1] * k2[1] + x[2] * k2[2];
                let s = rest.sqrt_area;
                let g = |i: usize| (f2 * k1[i] + f1 * k2[i]) * s;
                (s * f1.dot(&f2), [g(0), g(1), g(2)])
            }
            Row::Bend { idx } => {
                let d = x[0] - x[1];
                let len = d.norm();
                let dir = if len > 0.0 { d / len } else { Vec3::zeros() };
                (
                    len - mesh.bends[idx].rest_length,
                    [dir, -dir, Vec3::zeros()],
                )
            }
            Row::Stitch { axis, .. } => {
                let mut e = Vec3::zeros();
                e[axis] = 1.0;
                (x[0][axis] - x[1][axis], [e, -e, Vec3::zeros()])
            }
            Row::Contact { idx } => {
                let ct = &self.contacts[idx];
                (
                    self.collision_margin - ct.normal.dot(&(x[0] - ct.point)),
                    [-ct.normal, Vec3::zeros(), Vec3::zeros()],
                )
            }
        };
        RowEval { verts, n, c, grad }
    }

    /// Contacts are one-sided: they only act while their value is positive.
    pub fn is_active(&self, row: Row, c: f64) -> bool {
        !matches!(row, Row::Contact { .. }) || c > 0.0
    }

    /// Given adjoints `c_bar` of the row value and `g_bar` of its gradient,
    /// return the adjoints of the local positions and of the rest quantities
    /// the row depends on.
    pub fn vjp(
        &self,
        mesh: &SimMesh,
        row: Row,
        x: &[Vec3; 3],
        c_bar: f64,
        g_bar: &[Vec3; 3],
    ) -> RowVjp {
        let zero = [Vec3::zeros(); 3];
        match row {
            Row::Stretch { tri, col } => {
                let rest = &mesh.tri_rest[tri];
                let k = stretch_coeffs(&rest.inv_dm, col);
                let s = rest.sqrt_area;
                let f = x[0] * k[0] + x[1] * k[1] + x[2] * k[2];
                let len = f.norm();
                if len == 0.0 {
                    return RowVjp {
                        x: zero,
                        rest: RestAdjoint::None,
                    };
                }
                let dir = f / len;
                let gsum = g_bar[0] * k[0] + g_bar[1] * k[1] + g_bar[2] * k[2];
                // φ = c̄·s(|f|−1) + s·(Σ kᵢḡᵢ)·f̂
                let dphi_df = dir * (c_bar * s) + (gsum - dir * gsum.dot(&dir)) * (s / len);
                let dphi_ds = c_bar * (len - 1.0) + gsum.dot(&dir);
                let mut dk = [0.0; 3];
                for i in 0..3 {
                    dk[i] = x[i].dot(&dphi_df) + s * g_bar[i].dot(&dir);
                }
                let mut adj = TriRestAdjoint {
                    sqrt_area: dphi_ds,
                    ..Default::default()
                };
                add_coeff_adjoint(&mut adj.inv_dm, col, &dk);
                RowVjp {
                    x: [dphi_df * k[0], dphi_df * k[1], dphi_df * k[2]],
                    rest: RestAdjoint::Triangle { tri, adj },
                }
            }
            Row::Shear { tri } => {
                let rest = &mesh.tri_rest[tri];
                let k1 = stretch_coeffs(&rest.inv_dm, 0);
                let k2 = stretch_coeffs(&rest.inv_dm, 1);
                let s = rest.sqrt_area;
                let f1 = x[0] * k1[0] + x[1] * k1[1] + x[2] * k1[2];
                let f2 = x[0] * k2[0] + x[1] * k2[1] + x[2] * k2[2];
                let g1 = g_bar[0] * k1[0] + g_bar[1] * k1[1] + g_bar[2] * k1[2];
                let g2 = g_bar[0] * k2[0] + g_bar[1] * k2[1] + g_bar[2] * k2[2];
                // φ = c̄·s(f1·f2) + s·(G1·f2 + G2·f1)
                let dphi_df1 = (f2 * c_bar + g2) * s;
                let dphi_df2 = (f1 * c_bar + g1) * s;
                let dphi_ds = c_bar * f1.dot(&f2) + g1.dot(&f2) + g2.dot(&f1);
                let mut dk1 = [0.0; 3];
                let mut dk2 = [0.0; 3];
                for i in 0..3 {
                    dk1[i] = x[i].dot(&dphi_df1) + s * g_bar[i].dot(&f2);
                    dk2[i] = x[i].dot(&dphi_df2) + s * g_bar[i].dot(&f1);
                }
                let mut adj = TriRestAdjoint {
                    sqrt_area: dphi_ds,
                    ..Default::default()
                };
                add_coeff_adjoint(&mut adj.inv_dm, 0, &dk1);
                add_coeff_adjoint(&mut adj.inv_dm, 1, &dk2);
                let xa = |i: usize| dphi_df1 * k1[i] + dphi_df2 * k2[i];
                RowVjp {
                    x: [xa(0), xa(1), xa(2)],
                    rest: RestAdjoint::Triangle { tri, adj },
                }
            }
            Row::Bend { idx } => {
                let d = x[0] - x[1];
                let len = d.norm();
                if len == 0.0 {
                    return RowVjp {
                        x: zero,
                        rest: RestAdjoint::BendLength { idx, adj: -c_bar },
                    };
                }
                let dir = d / len;
                let g = g_bar[0] - g_bar[1];
                let dphi_dd = dir * c_bar + (g - dir * g.dot(&dir)) / len;
                RowVjp {
                    x: [dphi_dd, -dphi_dd, Vec3::zeros()],
                    rest: RestAdjoint::BendLength { idx, adj: -c_bar },
                }
            }
            Row::Stitch { axis, .. } => {
                let mut e = Vec3::zeros();
                e[axis] = c_bar;
                RowVjp {
                    x: [e, -e, Vec3::zeros()],
                    rest: RestAdjoint::None,
                }
            }
            Row::Contact { idx } => RowVjp {
                x: [-self.contacts[idx].normal * c_bar, Vec3::zeros(), Vec3::zeros()],
                rest: RestAdjoint::None,
            },
        }
    }
}

/// Coefficients kᵢ with F·e_col = Σ kᵢ xᵢ for F = [x₁−x₀, x₂−x₀]·Dm⁻¹.
#[inline]
fn stretch_coeffs(inv_dm: &Mat2, col: usize) -> [f64; 3] {
    let b0 = inv_dm[(0, col)];
    let b1 = inv_dm[(1, col)];
    [-(b0 + b1), b0, b1]
}

#[inline]
fn add_coeff_adjoint(adj: &mut Mat2, col: usize, dk: &[f64; 3]) {
    adj[(0, col)] += dk[1] - dk[0];
    adj[(1, col)] += dk[2] - dk[0];
}

/// Pull the adjoints of (Dm⁻¹, √area, area) of a triangle back to its three
/// pattern-space vertices.
pub fn triangle_rest_pullback(
    rest: &TriangleRest,
    adj: &TriRestAdjoint,
    area_adj: f64,
) -> [Vec2; 3] {
    let b = rest.inv_dm;
    let det = 2.0 * rest.area;
    let total_area_adj = area_adj + adj.sqrt_area / (2.0 * rest.sqrt_area);
    let det_adj = 0.5 * total_area_adj;
    // d(Dm⁻¹) = −B dDm B ; d det = det·tr(B dDm)
    let dm_adj = -(b.transpose() * adj.inv_dm * b.transpose()) + b.transpose() * (det_adj * det);
    let c0 = dm_adj.column(0).into_owned();
    let c1 = dm_adj.column(1).into_owned();
    [-(c0 + c1), c0, c1]
}

/// Stretch and shear constraint values of a single triangle, with
/// gradients with respect to its three world positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleEval {
    /// (stretch u, stretch v, shear), each scaled by √(rest area).
    pub values: [f64; 3],
    /// `grads[row][vertex]`.
    pub grads: [[Vec3; 3]; 3],
}

pub fn triangle_constraint(x: &[Vec3; 3], rest2d: &[Vec2; 3]) -> Result<TriangleEval> {
    let rest = TriangleRest::from_points(&rest2d[0], &rest2d[1], &rest2d[2]).ok_or_else(|| {
        Error::Validation("degenerate or inverted rest triangle".into())
    })?;
    let mesh = SimMesh::single_triangle(rest);
    let set = ConstraintSet {
        rows: vec![],
        compliance: vec![],
        contacts: vec![],
        collision_margin: 0.0,
    };
    let mut out = TriangleEval {
        values: [0.0; 3],
        grads: [[Vec3::zeros(); 3]; 3],
    };
    for (k, row) in [
        Row::Stretch { tri: 0, col: 0 },
        Row::Stretch { tri: 0, col: 1 },
        Row::Shear { tri: 0 },
    ]
    .into_iter()
    .enumerate()
    {
        let e = set.eval(&mesh, row, x);
        out.values[k] = e.c;
        out.grads[k] = e.grad;
    }
    Ok(out)
}
