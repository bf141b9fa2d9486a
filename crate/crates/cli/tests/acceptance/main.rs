//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

/// Bail out of a check with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

mod eval_checks;
mod flow_checks;
mod grad_checks;
mod perf;
mod refine_checks;
mod refine_oracle;

use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "refinement matches the naive transcription", refine_checks::oracle_equivalence),
        (2, "hand-traced refinement examples", refine_checks::hand_traced),
        (3, "analytic gradients match finite differences", grad_checks::all_ops),
        (4, "max-flow, GrabCut energy and separable fixture", flow_checks::flow_and_grabcut),
        (5, "pseudo-mask filtering invariant", corpus::filtering_invariant),
        (6, "average precision and mean IOU", eval_checks::ap_and_miou),
        (7, "TIDE categorization and deletion fixes", eval_checks::tide),
        (8, "deterministic reruns", corpus::determinism),
        (9, "performance budgets", perf::budgets),
        (10, "combined loss", losses_checks::combined),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS - {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL - {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
