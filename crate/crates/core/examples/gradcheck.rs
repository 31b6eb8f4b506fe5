//! Run every gradient check and print one line per check.
//!
//! ```bash
//! cargo run --release --example gradcheck [cage|losses|adjoint|end2end]
//! ```

use patternfit::gradcheck::{run_scope, Scope};

fn main() -> patternfit::Result<()> {
    let scopes = match std::env::args().nth(1) {
        Some(s) => vec![s.parse::<Scope>()?],
        None => vec![Scope::Cage, Scope::Losses, Scope::Adjoint, Scope::End2End],
    };
    let mut failed = 0;
    for scope in scopes {
        let t = std::time::Instant::now();
        for r in run_scope(scope)? {
            failed += usize::from(!r.passed());
            println!("{r}");
        }
        println!("-- {scope}: {:.2} s", t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} check(s) failed");
        std::process::exit(1);
    }
    Ok(())
}
