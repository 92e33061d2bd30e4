//! Finite-difference gradient checks of every primitive and module, then of
//! the whole toy network.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed] [fault-op]
//! ```

use g2hf::gradcheck::{module_suite, network_check, primitive_suite, CheckConfig};
use g2hf::Fault;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let fault = args.next().map(|op| Fault { op: Box::leak(op.into_boxed_str()), scale: 1.5 });
    let cfg = CheckConfig { seed, fault, ..CheckConfig::default() };

    let mut failed = 0;
    for r in primitive_suite(&cfg)?.into_iter().chain(module_suite(&cfg)?).chain([network_check(&cfg)?]) {
        println!("{r}");
        failed += !r.passed() as usize;
    }
    println!("{failed} failed");
    Ok(())
}
