//! Runs the named invariant checks, optionally filtered by substring.
//!
//! ```text
//! cargo run --release --example selftest -- [filter]
//! ```

use g2hf::selftest::{run, SuiteConfig};

fn main() {
    let filter = std::env::args().nth(1);
    let results = run(filter.as_deref(), &SuiteConfig::default(), |r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} failed", results.len());
    std::process::exit((failed > 0) as i32);
}
