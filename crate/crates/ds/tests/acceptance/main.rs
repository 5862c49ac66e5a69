//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

mod audit;
mod auction;
mod he;
mod modes;
mod mpc;
mod negotiation;
mod privacy;
mod scenarios;
mod selection;
mod world;

use std::panic;
use std::time::Instant;

/// Detail line on success, reason on failure.
pub type Outcome = Result<String, String>;

/// Fails the criterion with a formatted reason.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", mpc::oracle_equivalence),
        ("exact privacy at p = 31", privacy::exact_privacy),
        ("provisioning-mode equivalence", modes::mode_equivalence),
        ("node selection validity and uniformity", selection::node_selection),
        ("negotiation soundness", negotiation::negotiation_soundness),
        ("auction confidentiality", auction::auction_confidentiality),
        ("audit integrity", audit::audit_integrity),
        ("reconstruction robustness", mpc::reconstruction_robustness),
        ("mock-HE path", he::mock_he),
        ("scenario determinism", scenarios::scenario_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {reason} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
