use patternfit::fixtures::{fixture_sim, grid_panel, single_panel_spec, TubeSkirt, TubeSkirtParams};
use patternfit::mesh::{assemble_sim_mesh, TargetDrape};
use patternfit::pattern::{detect_flip_symmetry, Material};
use patternfit::refit::{initial_global_scale, refit, RefitConfig};
use patternfit::sim::SimConfig;
use patternfit::{Error, Vec2, Vec3};

fn small() -> TubeSkirt {
    TubeSkirt::new(TubeSkirtParams {
        nx: 6,
        ny: 6,
        body_segments: 24,
        ..Default::default()
    })
}

fn lifted(p: &[Vec2]) -> Vec<Vec3> {
    p.iter().map(|v| Vec3::new(v.x, v.y, 0.0)).collect()
}

#[test]
fn global_scale_examples() {
    let spec = single_panel_spec(grid_panel("p", Vec2::zeros(), 1.0, 1.0, 1, 1), Material::default());
    let mesh = assemble_sim_mesh(&spec).unwrap();
    let rest = lifted(&mesh.rest2d);
    let t = TargetDrape::from_positions(&mesh, rest.clone()).unwrap();
    assert!((initial_global_scale(&spec, &t).unwrap() - 1.0).abs() < 1e-15);
    let doubled = TargetDrape::from_positions(&mesh, rest.iter().map(|p| p * 2.0).collect()).unwrap();
    assert!((initial_global_scale(&spec, &doubled).unwrap() - 2.0).abs() < 1e-15);
    // x stretched by 2 gives area ratio 2 on both triangles; lifting the
    // corner (1, 0), which only the first triangle uses, by 1 raises that
    // triangle's ratio to 3. The mean ratio is 2.5.
    let mut x: Vec<Vec3> = rest.iter().map(|p| Vec3::new(2.0 * p.x, p.y, 0.0)).collect();
    x[1].z = 1.0;
    let t = TargetDrape::from_positions(&mesh, x).unwrap();
    assert!((initial_global_scale(&spec, &t).unwrap() - 2.5f64.sqrt()).abs() < 1e-14);
}

fn identity_target(s: &TubeSkirt) -> TargetDrape {
    let reference = s.reference_drape(&fixture_sim()).unwrap();
    TargetDrape::from_positions(&s.mesh().unwrap(), reference).unwrap()
}

fn max_move(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

#[test]
fn identity_refit_keeps_the_design() {
    let s = small();
    let target = identity_target(&s);
    let cfg = RefitConfig {
        max_iterations: 4,
        skip_global_scale: true,
        ..s.refit_config()
    };
    let r = refit(&s.spec, Some(&s.body), &target, &cfg).unwrap();
    // The design already drapes onto the target, so nothing beats the
    // starting point and the output is the design itself.
    assert_eq!(r.best_iteration, 0);
    assert!(r.best.total < 1e-4, "{}", r.best.total);
    assert!(max_move(&r.spec.flat_vertices(), &s.spec.flat_vertices()) < 1e-12);

    // With the global scale on, the scale is close to one.
    let r = refit(&s.spec, Some(&s.body), &target, &RefitConfig { skip_global_scale: false, ..cfg }).unwrap();
    assert!((r.global_scale - 1.0).abs() < 0.01, "{}", r.global_scale);
    assert!(max_move(&r.spec.flat_vertices(), &s.spec.flat_vertices()) < 1e-3);
}

#[test]
fn runaway_step_is_reported() {
    let s = small();
    let target = identity_target(&s);
    let cfg = RefitConfig {
        max_iterations: 3,
        learning_rate: 1.0,
        ..s.refit_config()
    };
    let err = refit(&s.spec, Some(&s.body), &target, &cfg).unwrap_err();
    // The first Adam step moves every cage vertex by about a metre, which
    // folds the cage.
    match &err {
        Error::Refit { source, .. } => assert!(matches!(**source, Error::Cage(_)), "{err}"),
        _ => panic!("{err}"),
    }
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn short_refit_toward_a_wider_body() {
    let s = small();
    let target = s.target(&s.reference_drape(&fixture_sim()).unwrap()).unwrap();
    // The coarse skirt sits tight on the wider body; starting each drape
    // from the target keeps it out of the alternative equilibria that a
    // warm start can snap into.
    let cfg = RefitConfig {
        max_iterations: 3,
        warm_start: false,
        sim: SimConfig {
            max_steps: 300,
            ..fixture_sim()
        },
        ..s.refit_config()
    };
    let r = refit(&s.spec, Some(&s.target_body), &target, &cfg).unwrap();
    // Topology and ids survive.
    assert_eq!(r.spec.panels.len(), s.spec.panels.len());
    for (a, b) in r.spec.panels.iter().zip(&s.spec.panels) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.boundary_loops, b.boundary_loops);
    }
    assert_eq!(r.spec.seams, s.spec.seams);
    assert!(r.global_scale > 1.0);
    assert!(r.best.total < r.history[0].total);
    assert!((r.best.total - r.history[r.best_iteration].total).abs() == 0.0);
    // Front and back stay mirror images.
    let found = detect_flip_symmetry(&r.spec, 1e-6);
    assert_eq!(found.len(), 1);
    assert!(r.spec.reference_drape3d.is_some());
    assert!(r.quality_after.min > 0.0);
}

#[test]
fn bad_config_is_rejected_before_any_work() {
    let s = small();
    let target = identity_target(&s);
    let cfg = RefitConfig {
        max_iterations: 0,
        ..s.refit_config()
    };
    assert!(matches!(refit(&s.spec, None, &target, &cfg), Err(Error::Validation(_))));
    let short = TargetDrape::from_positions(
        &assemble_sim_mesh(&single_panel_spec(grid_panel("p", Vec2::zeros(), 1.0, 1.0, 1, 1), Material::default())).unwrap(),
        vec![Vec3::zeros(); 4],
    )
    .unwrap();
    assert!(matches!(refit(&s.spec, None, &short, &s.refit_config()), Err(Error::Dimension(_))));
}
