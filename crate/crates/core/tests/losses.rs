use std::collections::BTreeMap;

use patternfit::fixtures::{grid_panel, single_panel_spec, TubeSkirt, TubeSkirtParams};
use patternfit::geom::Mat2;
use patternfit::gradcheck::loss_checks;
use patternfit::losses::{
    fit_similarity, loss_boundary_curvature, loss_pattern_match, loss_shape_match,
    loss_total_area, total_loss, LossConfig,
};
use patternfit::mesh::{assemble_sim_mesh, SimMesh, TargetDrape, VertexClass};
use patternfit::pattern::{GarmentSpec, Material, Seam, SeamSide};
use patternfit::{Vec2, Vec3};
use proptest::prelude::*;

fn skirt() -> (SimMesh, TubeSkirt) {
    let s = TubeSkirt::new(TubeSkirtParams {
        nx: 4,
        ny: 4,
        ..Default::default()
    });
    (s.mesh().unwrap(), s)
}

fn similarity(p: &[Vec2], angle: f64, s: f64, t: Vec2) -> Vec<Vec2> {
    let (sn, cs) = angle.sin_cos();
    p.iter()
        .map(|v| Vec2::new(cs * v.x - sn * v.y, sn * v.x + cs * v.y) * s + t)
        .collect()
}

#[test]
fn shape_match_examples() {
    let (mesh, s) = skirt();
    let target = TargetDrape::from_positions(&mesh, s.wrapped.clone()).unwrap();
    let cfg = LossConfig::default();
    let (v, g) = loss_shape_match(&s.wrapped, &target, &mesh, &cfg).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|g| *g == Vec3::zeros()));

    let i = mesh.class.iter().position(|c| *c == VertexClass::Interior).unwrap();
    let mut x = s.wrapped.clone();
    x[i].x += 0.1;
    let (v, g) = loss_shape_match(&x, &target, &mesh, &cfg).unwrap();
    assert!((v - 1e-4).abs() < 1e-15);
    assert!((g[i] - Vec3::new(0.002, 0.0, 0.0)).norm() < 1e-15);

    let t = Vec3::new(0.01, -0.02, 0.03);
    let x: Vec<Vec3> = s.wrapped.iter().map(|p| p + t).collect();
    let (v, _) = loss_shape_match(&x, &target, &mesh, &cfg).unwrap();
    let count = |c| mesh.class.iter().filter(|k| **k == c).count() as f64;
    let expect = t.norm_squared()
        * (cfg.alpha * count(VertexClass::Boundary)
            + cfg.beta * count(VertexClass::Seam)
            + cfg.gamma * count(VertexClass::Interior));
    assert!((v - expect).abs() < 1e-12 * expect);

    // With γ = 0 interior vertices get no gradient.
    let cfg0 = LossConfig { gamma: 0.0, ..cfg };
    let (_, g) = loss_shape_match(&x, &target, &mesh, &cfg0).unwrap();
    for (k, c) in mesh.class.iter().enumerate() {
        if *c == VertexClass::Interior {
            assert_eq!(g[k], Vec3::zeros());
        }
    }
}

#[test]
fn seam_vertices_are_weighted_as_seams() {
    let (mesh, _) = skirt();
    for s in &mesh.stitches {
        assert_eq!(mesh.class[s[0]], VertexClass::Seam);
        assert_eq!(mesh.class[s[1]], VertexClass::Seam);
    }
}

#[test]
fn similarity_fit_examples() {
    let e = [Vec2::new(1.0, 0.2), Vec2::new(-0.3, 0.8)];
    assert!((fit_similarity(&e, &e).unwrap() - Mat2::identity()).norm() < 1e-15);
    let rot = Mat2::new(0.0, -2.0, 2.0, 0.0);
    let moved = [rot * e[0], rot * e[1]];
    let t = fit_similarity(&moved, &e).unwrap();
    assert!((t - rot).norm() < 1e-15);
    let residual: f64 = (0..2).map(|k| (moved[k] - t * e[k]).norm_squared()).sum();
    assert!(residual < 1e-28);
}

proptest! {
    #[test]
    fn similarity_fit_is_locally_optimal(
        v in prop::array::uniform8(-1.0f64..1.0),
        da in -1e-3f64..1e-3,
        db in -1e-3f64..1e-3,
    ) {
        prop_assume!(da.abs() + db.abs() > 1e-6);
        let e = [Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3])];
        let r = [Vec2::new(v[4], v[5]), Vec2::new(v[6], v[7])];
        prop_assume!(r[0].norm() + r[1].norm() > 0.1);
        let t = fit_similarity(&e, &r).unwrap();
        let res = |m: &Mat2| (0..2).map(|k| (e[k] - m * r[k]).norm_squared()).sum::<f64>();
        let bumped = t + Mat2::new(da, -db, db, da);
        prop_assert!(res(&bumped) >= res(&t));
    }

    #[test]
    fn curvature_is_similarity_invariant(
        angle in 0.0f64..std::f64::consts::TAU,
        s in 0.2f64..5.0,
        tx in -1.0f64..1.0,
        ty in -1.0f64..1.0,
    ) {
        let (mesh, _) = skirt();
        let rest = mesh.rest2d.clone();
        // A deformed pattern with some curvature distortion.
        let cur: Vec<Vec2> = rest.iter().map(|p| Vec2::new(p.x * (1.0 + 0.2 * p.y), p.y + 0.05 * p.x * p.x)).collect();
        let (v0, _) = loss_boundary_curvature(&cur, &rest, &mesh).unwrap();
        let moved = similarity(&cur, angle, s, Vec2::new(tx, ty));
        let (v1, _) = loss_boundary_curvature(&moved, &rest, &mesh).unwrap();
        // The per-vertex fits absorb rotation and translation; the residual
        // scales with the square of the global scale.
        prop_assert!((v1 - s * s * v0).abs() <= 1e-10 * (1.0 + v1));
        let (z, _) = loss_boundary_curvature(&similarity(&rest, angle, s, Vec2::new(tx, ty)), &rest, &mesh).unwrap();
        prop_assert!(z < 1e-10);
    }
}

#[test]
fn curvature_pulls_a_dented_boundary_back() {
    let panel = grid_panel("p", Vec2::zeros(), 1.0, 1.0, 4, 4);
    let spec = single_panel_spec(panel, Material::default());
    let mesh = assemble_sim_mesh(&spec).unwrap();
    let rest = mesh.rest2d.clone();
    let (v, _) = loss_boundary_curvature(&rest, &rest, &mesh).unwrap();
    assert_eq!(v, 0.0);
    // Middle vertex of the bottom edge pushed inward (upwards).
    let mut cur = rest.clone();
    cur[2].y += 0.05;
    let (v, g) = loss_boundary_curvature(&cur, &rest, &mesh).unwrap();
    assert!(v > 0.0);
    assert!(g[2].y > 0.0, "descent moves the vertex back down: {:?}", g[2]);
}

fn two_squares(height_b: f64) -> GarmentSpec {
    let a = grid_panel("a", Vec2::zeros(), 1.0, 1.0, 1, 1);
    let b = grid_panel("b", Vec2::new(2.0, 0.0), 1.0, height_b, 1, 1);
    let side = |p: &str| SeamSide {
        panel: p.into(),
        vertices: vec![0, 2],
    };
    GarmentSpec {
        panels: vec![a, b],
        seams: vec![Seam {
            id: "s".into(),
            side_a: side("a"),
            side_b: side("b"),
        }],
        symmetry_pairs: vec![],
        material: Material::default(),
        reference_drape3d: None,
        cages: Default::default(),
    }
}

#[test]
fn pattern_match_examples() {
    let mesh = assemble_sim_mesh(&two_squares(1.0)).unwrap();
    assert_eq!(loss_pattern_match(&mesh.rest2d, &mesh).0, 0.0);
    let scaled: Vec<Vec2> = mesh.rest2d.iter().map(|p| p * 3.0).collect();
    assert_eq!(loss_pattern_match(&scaled, &mesh).0, 0.0);
    let mesh = assemble_sim_mesh(&two_squares(1.1)).unwrap();
    let (v, _) = loss_pattern_match(&mesh.rest2d, &mesh);
    assert!((v - 0.0441).abs() < 1e-12, "{v}");
}

fn area_target(mesh: &SimMesh, area: f64) -> TargetDrape {
    TargetDrape {
        positions: vec![Vec3::zeros(); mesh.num_vertices()],
        total_area_per_panel: mesh.panel_ids.iter().map(|p| (p.clone(), area)).collect::<BTreeMap<_, _>>(),
    }
}

#[test]
fn total_area_examples() {
    let spec = single_panel_spec(grid_panel("p", Vec2::zeros(), 0.6, 0.8, 3, 4), Material::default());
    let mesh = assemble_sim_mesh(&spec).unwrap();
    let (v, _) = loss_total_area(&mesh.rest2d, &area_target(&mesh, 0.48), &mesh);
    assert!(v < 1e-28);
    let (v, _) = loss_total_area(&mesh.rest2d, &area_target(&mesh, 0.50), &mesh);
    assert!((v - 4e-4).abs() < 1e-15);
}

#[test]
fn total_area_gradient_on_two_triangles() {
    let spec = single_panel_spec(grid_panel("p", Vec2::zeros(), 1.0, 0.7, 1, 1), Material::default());
    let mesh = assemble_sim_mesh(&spec).unwrap();
    let target = area_target(&mesh, 0.9);
    let x: Vec<Vec2> = mesh.rest2d.iter().enumerate().map(|(i, p)| p + Vec2::new(0.03 * i as f64, -0.02)).collect();
    let (_, g) = loss_total_area(&x, &target, &mesh);
    let h = 1e-6;
    let (mut num, mut ana) = (Vec::new(), Vec::new());
    for i in 0..x.len() {
        for a in 0..2 {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i][a] += h;
            m[i][a] -= h;
            num.push((loss_total_area(&p, &target, &mesh).0 - loss_total_area(&m, &target, &mesh).0) / (2.0 * h));
            ana.push(g[i][a]);
        }
    }
    let rel = patternfit::gradcheck::rel_error(&ana, &num);
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn total_loss_identities() {
    let (mesh, s) = skirt();
    let rest = mesh.rest2d.clone();
    let target = TargetDrape::from_positions(&mesh, s.wrapped.clone()).unwrap();
    // Drape on target, pattern a rigid motion of the rest: areas and seams
    // match, so the total is zero.
    let cur = similarity(&rest, 0.3, 1.0, Vec2::new(0.1, 0.2));
    let mut perfect = target.clone();
    for (p, a) in perfect.total_area_per_panel.iter_mut() {
        let i = mesh.panel_ids.iter().position(|q| q == p).unwrap();
        *a = patternfit::losses::panel_pattern_areas(&cur, &mesh)[i];
    }
    let cfg = LossConfig::default();
    let l = total_loss(&s.wrapped, &cur, &rest, &perfect, &mesh, &cfg).unwrap();
    assert!(l.total < 1e-20, "{}", l.total);

    // Away from the optimum: the total is the weighted sum, and zeroing a
    // weight removes exactly that term.
    let x: Vec<Vec3> = s.wrapped.iter().map(|p| p * 1.01).collect();
    let cur: Vec<Vec2> = rest.iter().map(|p| Vec2::new(p.x * 1.05, p.y + 0.01 * p.x)).collect();
    let l = total_loss(&x, &cur, &rest, &target, &mesh, &cfg).unwrap();
    let sum = l.shape_match + cfg.w_curv * l.curvature + cfg.w_pm * l.pattern_match + cfg.w_ta * l.total_area;
    assert!((l.total - sum).abs() <= 1e-12 * l.total);
    let no_area = total_loss(&x, &cur, &rest, &target, &mesh, &LossConfig { w_ta: 0.0, ..cfg.clone() }).unwrap();
    assert!((l.total - no_area.total - cfg.w_ta * l.total_area).abs() <= 1e-12 * l.total);
    let no_curv = total_loss(&x, &cur, &rest, &target, &mesh, &LossConfig { w_curv: 0.0, ..cfg }).unwrap();
    assert!((l.total - no_curv.total - 0.1 * l.curvature).abs() <= 1e-12 * l.total);
}

#[test]
fn negative_weights_are_rejected() {
    let cfg = LossConfig {
        beta: -1.0,
        ..LossConfig::default()
    };
    assert!(cfg.validate().is_err());
    let loud = LossConfig {
        gamma: 0.5,
        ..LossConfig::default()
    };
    assert_eq!(loud.validate().unwrap().len(), 1);
}

#[test]
fn every_term_matches_finite_differences() {
    for r in loss_checks().unwrap() {
        assert!(r.passed(), "{r}");
    }
}
