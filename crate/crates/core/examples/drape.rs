//! Drape a square sheet over a sphere, held at its centre like a tablecloth,
//! and write the final mesh (and optionally every frame) as OBJ.
//!
//! ```bash
//! cargo run --release --example drape [out_dir] [--frames]
//! ```

use std::path::PathBuf;

use patternfit::fixtures::sheet_over_sphere;
use patternfit::obj::write_obj;
use patternfit::sim::{drape_to_equilibrium, SimConfig, Termination};

fn main() -> patternfit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let frames = args.iter().any(|a| a == "--frames");
    let out = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);

    let n = 16;
    let mut scene = sheet_over_sphere(n, 0.8, 0.3, 0.005);
    // Without friction an unheld sheet eventually slides off.
    scene.mesh.pin(&[(n / 2) * (n + 1) + n / 2]);
    let sdf = scene.sdf();
    let cfg = SimConfig::default();
    let t = std::time::Instant::now();
    let drape = drape_to_equilibrium(scene.initial_state(), &scene.mesh, sdf.as_ref(), &cfg)?;
    match drape.termination {
        Termination::Converged { steps } => println!("converged after {steps} steps"),
        Termination::MaxSteps { steps } => println!("not settled after {steps} steps"),
    }
    println!("{:.2} s, max speed {:.2e} m/s", t.elapsed().as_secs_f64(), drape.state.max_speed());

    let lowest = drape.state.x.iter().map(|p| p.y).fold(f64::MAX, f64::min);
    println!("lowest point y = {lowest:.4} m");
    let faces: Vec<[usize; 3]> = scene.mesh.triangles.iter().map(|t| t.verts).collect();
    let path = out.join("drape.obj");
    write_obj(&path, &drape.state.x, &faces)?;
    println!("wrote {}", path.display());
    if frames {
        let dir = out.join("drape_frames");
        drape.trajectory.write_frames(&scene.mesh, &dir)?;
        println!("wrote {} frames to {}", drape.trajectory.states.len(), dir.display());
    }
    Ok(())
}
