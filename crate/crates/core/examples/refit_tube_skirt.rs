//! Refit the two-panel tube skirt from a 0.15 m body to a 0.20 m body and
//! print the summary table.
//!
//! ```bash
//! PATTERNFIT_LOG=info cargo run --release --example refit_tube_skirt [iterations]
//! ```

use patternfit::fixtures::{fixture_sim, TubeSkirt, TubeSkirtParams};
use patternfit::refit::refit;
use patternfit::report::RunReport;

fn main() -> patternfit::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PATTERNFIT_LOG", "warn")).init();
    let skirt = TubeSkirt::new(TubeSkirtParams::default());
    let reference = skirt.reference_drape(&fixture_sim())?;
    let target = skirt.target(&reference)?;
    let mut cfg = skirt.refit_config();
    if let Some(n) = std::env::args().nth(1) {
        cfg.max_iterations = n.parse().map_err(|_| patternfit::Error::Usage(format!("bad iteration count '{n}'")))?;
    }
    let t = std::time::Instant::now();
    let result = refit(&skirt.spec, Some(&skirt.target_body), &target, &cfg)?;
    println!("refit took {:.1} s\n", t.elapsed().as_secs_f64());
    print!("{}", RunReport::new(&result, &skirt.spec, &target)?.render());
    Ok(())
}
