use patternfit::cage::{
    build_cage, cage_encloses, cage_from_vertices, cage_jacobian, compute_green_coords, deform,
    is_convex, Cage, CageCoords,
};
use patternfit::fixtures::grid_panel;
use patternfit::geom::{signed_area2, Mat2};
use patternfit::pattern::Panel;
use patternfit::{Error, Vec2};
use proptest::prelude::*;

fn square() -> Panel {
    grid_panel("sq", Vec2::zeros(), 1.0, 1.0, 4, 4)
}

fn setup(panel: &Panel, margin: f64, max: usize) -> (Cage, CageCoords) {
    let cage = build_cage(panel, margin, max).unwrap();
    let coords = compute_green_coords(&cage, &panel.vertices).unwrap();
    (cage, coords)
}

fn max_dist(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Fan-triangulated convex polygon.
fn convex_panel(poly: &[Vec2]) -> Panel {
    let c = poly.iter().sum::<Vec2>() / poly.len() as f64;
    let mut vertices = poly.to_vec();
    vertices.push(c);
    let n = poly.len();
    Panel {
        id: "convex".into(),
        vertices,
        triangles: (0..n).map(|i| [i, (i + 1) % n, n]).collect(),
        boundary_loops: vec![(0..n).collect()],
        seam_edge_tags: Default::default(),
    }
}

#[test]
fn square_cage_offsets_by_margin() {
    let (cage, _) = setup(&square(), 0.1, 4);
    assert_eq!(cage.len(), 4);
    let lo = cage.vertices.iter().fold(Vec2::repeat(f64::MAX), |a, p| a.inf(p));
    let hi = cage.vertices.iter().fold(Vec2::repeat(f64::MIN), |a, p| a.sup(p));
    assert!(((hi - lo) - Vec2::new(1.2, 1.2)).norm() < 1e-9);
    for n in &cage.rest_edge_normals {
        assert!((n.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_margin_is_rejected() {
    assert!(matches!(build_cage(&square(), 0.0, 8), Err(Error::Cage(_))));
}

#[test]
fn cage_must_enclose_the_panel() {
    let tight = vec![
        Vec2::new(0.1, 0.1),
        Vec2::new(0.9, 0.1),
        Vec2::new(0.9, 0.9),
        Vec2::new(0.1, 0.9),
    ];
    assert!(cage_from_vertices(&square(), tight).is_err());
    let cage = Cage::new("sq", vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)]).unwrap();
    assert!(compute_green_coords(&cage, &[Vec2::new(3.0, 3.0)]).is_err());
}

#[test]
fn regular_cage_centre_has_equal_weights() {
    let n = 7;
    let verts: Vec<Vec2> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Vec2::new(a.cos(), a.sin())
        })
        .collect();
    let cage = Cage::new("reg", verts).unwrap();
    let c = compute_green_coords(&cage, &[Vec2::zeros()]).unwrap();
    for j in 1..n {
        assert!((c.w1[(0, j)] - c.w1[(0, 0)]).abs() < 1e-12);
        assert!((c.w2[(0, j)] - c.w2[(0, 0)]).abs() < 1e-12);
    }
}

#[test]
fn rest_reproduction_and_partition_of_unity() {
    let panel = grid_panel("p", Vec2::new(0.2, -0.1), 0.6, 0.8, 6, 8);
    let (cage, coords) = setup(&panel, 0.03, 16);
    let back = deform(&coords, &cage, &cage.vertices).unwrap();
    assert!(max_dist(&back, &panel.vertices) < 1e-8);
    for i in 0..coords.w1.nrows() {
        assert!((coords.w1.row(i).sum() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn translation_moves_every_point_by_the_same_amount() {
    let panel = square();
    let (cage, coords) = setup(&panel, 0.05, 8);
    let t = Vec2::new(0.3, -1.7);
    let moved: Vec<Vec2> = cage.vertices.iter().map(|v| v + t).collect();
    let out = deform(&coords, &cage, &moved).unwrap();
    for (o, p) in out.iter().zip(&panel.vertices) {
        assert!((o - p - t).norm() < 1e-10);
    }
    // The Jacobian applied to a uniform shift gives the same shift.
    let jac = cage_jacobian(&coords, &cage, &cage.vertices).unwrap();
    let dz = nalgebra::DVector::from_iterator(2 * cage.len(), (0..cage.len()).flat_map(|_| [t.x, t.y]));
    let dx = &jac * dz;
    for i in 0..panel.vertices.len() {
        assert!((Vec2::new(dx[2 * i], dx[2 * i + 1]) - t).norm() < 1e-10);
    }
}

/// Deformation gradient of triangle (a, b, c) → (a', b', c').
fn def_grad(r: [Vec2; 3], d: [Vec2; 3]) -> Mat2 {
    let dm = Mat2::from_columns(&[r[1] - r[0], r[2] - r[0]]);
    let ds = Mat2::from_columns(&[d[1] - d[0], d[2] - d[0]]);
    ds * dm.try_inverse().unwrap()
}

#[test]
fn anisotropic_stretch_is_less_distorted_than_bilinear() {
    let panel = square();
    let (cage, coords) = setup(&panel, 0.1, 4);
    let zeta: Vec<Vec2> = cage.vertices.iter().map(|v| Vec2::new(2.0 * v.x, v.y)).collect();
    let green = deform(&coords, &cage, &zeta).unwrap();
    // Bilinear interpolation on the bounding box of an axis-aligned stretch
    // is the stretch itself, with singular-value ratio 2 everywhere.
    let mut worst: f64 = 0.0;
    for t in &panel.triangles {
        let r = [panel.vertices[t[0]], panel.vertices[t[1]], panel.vertices[t[2]]];
        let d = [green[t[0]], green[t[1]], green[t[2]]];
        let sv = def_grad(r, d).singular_values();
        worst = worst.max(sv.max() / sv.min());
    }
    assert!(worst < 2.0, "{worst}");
}

#[test]
fn jacobian_matches_finite_differences() {
    let panel = grid_panel("p", Vec2::zeros(), 0.5, 0.7, 3, 4);
    let (cage, coords) = setup(&panel, 0.05, 16);
    let zeta: Vec<Vec2> = cage
        .vertices
        .iter()
        .enumerate()
        .map(|(k, v)| v + Vec2::new(0.01 * (k as f64).sin(), 0.02 * (k as f64 * 0.7).cos()))
        .collect();
    let jac = cage_jacobian(&coords, &cage, &zeta).unwrap();
    let h = 1e-6;
    let mut num = jac.clone() * 0.0;
    for k in 0..cage.len() {
        for a in 0..2 {
            let mut zp = zeta.clone();
            let mut zm = zeta.clone();
            zp[k][a] += h;
            zm[k][a] -= h;
            let p = deform(&coords, &cage, &zp).unwrap();
            let m = deform(&coords, &cage, &zm).unwrap();
            for i in 0..p.len() {
                let d = (p[i] - m[i]) / (2.0 * h);
                num[(2 * i, 2 * k + a)] = d.x;
                num[(2 * i + 1, 2 * k + a)] = d.y;
            }
        }
    }
    let rel = (&jac - &num).norm() / num.norm();
    assert!(rel < 1e-5, "{rel}");
}

#[test]
fn jacobian_predicts_finite_steps() {
    let panel = square();
    let (cage, coords) = setup(&panel, 0.05, 8);
    let jac = cage_jacobian(&coords, &cage, &cage.vertices).unwrap();
    let dir: Vec<Vec2> = cage.vertices.iter().map(|v| Vec2::new(v.y, 0.5 * v.x)).collect();
    let err = |eps: f64| {
        let z: Vec<Vec2> = cage.vertices.iter().zip(&dir).map(|(v, d)| v + d * eps).collect();
        let out = deform(&coords, &cage, &z).unwrap();
        let dz = nalgebra::DVector::from_iterator(2 * dir.len(), dir.iter().flat_map(|d| [d.x * eps, d.y * eps]));
        let lin = &jac * dz;
        (0..out.len())
            .map(|i| (out[i] - panel.vertices[i] - Vec2::new(lin[2 * i], lin[2 * i + 1])).norm())
            .fold(0.0, f64::max)
    };
    // The scaled normals are linear in the cage vertices, so the first-order
    // prediction leaves only roundoff, well inside any O(ε²) bound.
    for eps in [1e-1, 1e-2, 1e-3] {
        assert!(err(eps) < 1e-12 + eps * eps * 1e-3, "{eps}: {}", err(eps));
    }
}

proptest! {
    #[test]
    fn similarity_equivariance(
        angle in 0.0f64..std::f64::consts::TAU,
        s in 0.3f64..3.0,
        tx in -2.0f64..2.0,
        ty in -2.0f64..2.0,
        nx in 1usize..5,
        ny in 1usize..5,
    ) {
        let panel = grid_panel("p", Vec2::new(0.1, 0.2), 0.4, 0.9, nx, ny);
        let (cage, coords) = setup(&panel, 0.04, 16);
        let (sn, cs) = angle.sin_cos();
        let f = |v: &Vec2| Vec2::new(cs * v.x - sn * v.y, sn * v.x + cs * v.y) * s + Vec2::new(tx, ty);
        let z: Vec<Vec2> = cage.vertices.iter().map(f).collect();
        let out = deform(&coords, &cage, &z).unwrap();
        let expect: Vec<Vec2> = panel.vertices.iter().map(f).collect();
        prop_assert!(max_dist(&out, &expect) < 1e-8);
    }

    #[test]
    fn convex_panels_get_convex_cages(
        radii in prop::collection::vec(0.8f64..1.2, 5..12),
        margin in 0.01f64..0.2,
    ) {
        let n = radii.len();
        let poly: Vec<Vec2> = radii
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        prop_assume!(patternfit::geom::polygon_is_convex(&poly));
        let panel = convex_panel(&poly);
        let cage = build_cage(&panel, margin, 16).unwrap();
        prop_assert!(is_convex(&cage));
        prop_assert!(cage_encloses(&cage.vertices, &panel.vertices));
    }

    #[test]
    fn moderate_cage_edits_keep_triangles_positive(
        jitter in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
    ) {
        let panel = grid_panel("p", Vec2::zeros(), 1.0, 1.0, 6, 6);
        let (cage, coords) = setup(&panel, 0.1, 8);
        // Perturbations small enough that no cage edge changes length by
        // more than 25%.
        let k = 0.04;
        let z: Vec<Vec2> = cage
            .vertices
            .iter()
            .zip(jitter.iter().cycle())
            .map(|(v, (a, b))| v + Vec2::new(*a, *b) * k)
            .collect();
        let c = z.len();
        for j in 0..c {
            let l = (z[(j + 1) % c] - z[j]).norm();
            prop_assert!((l / cage.rest_edge_lengths[j] - 1.0).abs() <= 0.25);
        }
        let out = deform(&coords, &cage, &z).unwrap();
        for t in &panel.triangles {
            prop_assert!(signed_area2(&out[t[0]], &out[t[1]], &out[t[2]]) > 0.0);
        }
    }
}
