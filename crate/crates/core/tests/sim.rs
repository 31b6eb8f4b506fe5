use patternfit::fixtures::{fixture_sim, hanging_strip, uv_sphere, TubeSkirt, TubeSkirtParams};
use patternfit::mesh::{SimMesh, VertexClass};
use patternfit::pattern::Material;
use patternfit::sim::{
    collision_constraints, drape_to_equilibrium, project_sweeps, step, BodySdf, ConstraintSet,
    SimConfig, SimState, Termination,
};
use patternfit::{Error, Vec2, Vec3};

/// Free unit-mass particles with no internal constraints.
fn particles(n: usize) -> SimMesh {
    SimMesh {
        panel_ids: vec!["p".into()],
        panel_offsets: vec![0, n],
        rest2d: vec![Vec2::zeros(); n],
        triangles: vec![],
        tri_rest: vec![],
        stitches: vec![],
        bends: vec![],
        mass: vec![1.0; n],
        inv_mass: vec![1.0; n],
        pinned: vec![false; n],
        class: vec![VertexClass::Interior; n],
        material: Material::default(),
        seam_pairs: vec![],
        boundary_loops: vec![],
    }
}

const MARGIN: f64 = 3e-3;

fn unit_sphere() -> BodySdf {
    BodySdf::new(&uv_sphere(1.0, 48, 96, MARGIN))
}

/// Contact rows at `x` and their constraint values.
fn contact_values(x: &[Vec3], sdf: &BodySdf) -> (ConstraintSet, Vec<f64>) {
    let mesh = particles(x.len());
    let contacts = collision_constraints(x, &mesh.pinned, Some(sdf));
    let set = ConstraintSet::new(&mesh, contacts, MARGIN, 0.0);
    let c = set
        .rows
        .iter()
        .map(|&r| set.eval(&mesh, r, &[x[set.row_verts(&mesh, r).0[0]], Vec3::zeros(), Vec3::zeros()]).c)
        .collect();
    (set, c)
}

#[test]
fn far_vertex_has_no_active_contact() {
    let sdf = unit_sphere();
    // Twice the margin outside a mesh vertex of the tessellated sphere.
    let x = vec![Vec3::new(0.0, 1.0 + 2.0 * MARGIN, 0.0)];
    let (set, c) = contact_values(&x, &sdf);
    assert!(c.iter().all(|&c| c < 0.0));
    let mut y = x.clone();
    let mut lambda = vec![0.0; set.len()];
    project_sweeps(&mut y, &mut lambda, &particles(1), &set, 1.0 / 60.0, 5, 0, None).unwrap();
    assert_eq!(y, x);
}

#[test]
fn surface_vertex_is_pushed_out_by_the_margin() {
    let sdf = unit_sphere();
    let x = vec![Vec3::new(0.0, 1.0, 0.0)];
    let (set, c) = contact_values(&x, &sdf);
    assert_eq!(set.len(), 1);
    assert!((c[0] - MARGIN).abs() < 1e-12);
    let mut y = x.clone();
    let mut lambda = vec![0.0];
    project_sweeps(&mut y, &mut lambda, &particles(1), &set, 1.0 / 60.0, 1, 0, None).unwrap();
    assert!(((y[0] - x[0]) - Vec3::new(0.0, MARGIN, 0.0)).norm() < 1e-12);
}

#[test]
fn inside_vertex_exits_to_the_offset_surface() {
    let sdf = unit_sphere();
    let mesh = particles(1);
    let mut x = vec![Vec3::new(0.3, 0.9, 0.2)];
    let cfg = SimConfig {
        gravity: [0.0; 3],
        ..SimConfig::default()
    };
    let (_, c) = contact_values(&x, &sdf);
    assert!(c[0] > MARGIN);
    for _ in 0..3 {
        let s = step(&SimState::at_rest(x.clone()), &mesh, Some(&sdf), &cfg).unwrap();
        x = s.x;
    }
    let d = sdf.query(&x[0]).unwrap().distance;
    assert!((d - MARGIN).abs() < 1e-9, "{d}");
}

#[test]
fn zero_velocity_tolerance_runs_to_the_step_limit() {
    let scene = hanging_strip(0.1, 0.2, 1, 3);
    let cfg = SimConfig {
        v_tol: 0.0,
        max_steps: 40,
        ..SimConfig::default()
    };
    let d = drape_to_equilibrium(scene.initial_state(), &scene.mesh, None, &cfg).unwrap();
    assert_eq!(d.termination, Termination::MaxSteps { steps: 40 });
    assert_eq!(d.trajectory.num_steps(), 40);
    assert_eq!(d.trajectory.states.len(), 41);
}

#[test]
fn non_finite_state_reports_step_and_constraint() {
    let scene = hanging_strip(0.1, 0.2, 1, 3);
    let mut s = scene.initial_state();
    s.x[5] = Vec3::new(f64::NAN, 0.0, 0.0);
    let err = step(&s, &scene.mesh, None, &SimConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite { step: 0, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn mismatched_state_is_rejected() {
    let scene = hanging_strip(0.1, 0.2, 1, 3);
    let s = SimState::at_rest(vec![Vec3::zeros(); 3]);
    let err = drape_to_equilibrium(s, &scene.mesh, None, &SimConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn tube_skirt_settles_on_the_cylinder() {
    let skirt = TubeSkirt::new(TubeSkirtParams::default());
    let mesh = skirt.mesh().unwrap();
    let sdf = BodySdf::new(&skirt.body);
    let cfg = fixture_sim();
    let d = drape_to_equilibrium(SimState::at_rest(skirt.wrapped.clone()), &mesh, Some(&sdf), &cfg).unwrap();
    assert!(matches!(d.termination, Termination::Converged { steps } if steps <= 2000), "{:?}", d.termination);
    // No vertex ends up inside the body.
    for x in &d.state.x {
        if let Some(sd) = sdf.query(x) {
            assert!(sd.distance > 0.0, "{x:?}: {}", sd.distance);
        }
    }
}
