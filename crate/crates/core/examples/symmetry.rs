//! Detect mirrored panels and report pattern quality for a garment file
//! (the shipped tube skirt by default).
//!
//! ```bash
//! cargo run --release --example symmetry [garment.json]
//! ```

use std::path::PathBuf;

use patternfit::pattern::{
    detect_flip_symmetry, load_garment_spec, mirror_error, panel_area, pattern_quality_report,
};

fn main() -> patternfit::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tube_skirt/garment.json")
    });
    let spec = load_garment_spec(&path)?;
    for p in &spec.panels {
        println!(
            "{:<10} {:>5} vertices {:>5} triangles  area {:.5} m²",
            p.id,
            p.vertices.len(),
            p.triangles.len(),
            panel_area(p)
        );
    }
    let q = pattern_quality_report(&spec);
    println!("triangle quality: min {:.4}, mean {:.4}", q.min, q.mean);
    let found = detect_flip_symmetry(&spec, 1e-3);
    if found.is_empty() {
        println!("no mirrored panels found");
    }
    for d in found {
        let err = mirror_error(&spec, &d.pair, &d.reflection);
        println!(
            "{} mirrors {} (max deviation {err:.2e} m)",
            d.pair.panel_b, d.pair.panel_a
        );
    }
    Ok(())
}
