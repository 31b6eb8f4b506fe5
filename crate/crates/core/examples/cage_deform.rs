//! Build a Green-coordinate cage around a panel, bend it, and write SVGs
//! of the rest and deformed states.
//!
//! ```bash
//! cargo run --release --example cage_deform [out_dir]
//! ```

use std::path::PathBuf;

use patternfit::cage::{build_cage, cage_svg, compute_green_coords, deform};
use patternfit::fixtures::grid_panel;
use patternfit::geom::Vec2;
use patternfit::pattern::{triangle_quality, Panel};

fn min_quality(points: &[Vec2], panel: &Panel) -> f64 {
    panel
        .triangles
        .iter()
        .map(|t| triangle_quality(&points[t[0]], &points[t[1]], &points[t[2]]))
        .fold(1.0, f64::min)
}

fn main() -> patternfit::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let panel = grid_panel("sleeve", Vec2::zeros(), 0.4, 0.6, 8, 12);
    let cage = build_cage(&panel, 0.02, 16)?;
    let coords = compute_green_coords(&cage, &panel.vertices)?;
    println!("cage with {} vertices", cage.len());

    // Shear the top of the cage sideways and widen it.
    let top = cage.vertices.iter().map(|v| v.y).fold(f64::MIN, f64::max);
    let zeta: Vec<Vec2> = cage
        .vertices
        .iter()
        .map(|v| {
            let t = v.y / top;
            Vec2::new(v.x * (1.0 + 0.3 * t) + 0.1 * t, v.y)
        })
        .collect();
    let moved = deform(&coords, &cage, &zeta)?;
    let back = deform(&coords, &cage, &cage.vertices)?;
    let rest_err = back
        .iter()
        .zip(&panel.vertices)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("rest reproduction error {rest_err:.2e} m");
    println!(
        "min triangle quality {:.4} -> {:.4}",
        min_quality(&panel.vertices, &panel),
        min_quality(&moved, &panel)
    );

    for (name, pts, z) in [("rest", &panel.vertices, &cage.vertices), ("bent", &moved, &zeta)] {
        let path = out.join(format!("cage_{name}.svg"));
        std::fs::write(&path, cage_svg(pts, &panel.triangles, z))
            .map_err(|e| patternfit::Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
