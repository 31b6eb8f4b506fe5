//! Regenerate the tube-skirt fixture files shipped under `fixtures/`.
//!
//! ```bash
//! cargo run --release --example write_fixtures [out_dir]
//! ```
//!
//! The design is draped on the 0.15 m body; the target is that drape
//! stretched radially onto the 0.20 m body.

use std::path::PathBuf;

use patternfit::fixtures::{fixture_sim, TubeSkirt, TubeSkirtParams};

fn main() -> patternfit::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tube_skirt"));
    let skirt = TubeSkirt::new(TubeSkirtParams::default());
    let reference = skirt.reference_drape(&fixture_sim())?;
    let target = skirt.target(&reference)?;
    skirt.write_files(&dir, &target)?;
    for (panel, area) in &target.total_area_per_panel {
        println!("{panel}: target area {area:.6} m²");
    }
    println!("wrote {}", dir.display());
    Ok(())
}
