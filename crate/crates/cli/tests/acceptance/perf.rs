use crosstask_cli::bench::{run_benchmarks, GRABCUT_BUDGET, REFINE_BUDGET};

use crate::Outcome;

pub fn budgets() -> Outcome {
    let r = run_benchmarks(21, 3, 9);
    let refine_ms = r.refine_median.as_secs_f64() * 1e3;
    let grabcut_s = r.grabcut_median.as_secs_f64();
    ensure!(r.refine_ok(), "refine median {refine_ms:.2} ms >= {} ms", REFINE_BUDGET.as_millis());
    ensure!(r.grabcut_ok(), "grabcut median {grabcut_s:.3} s >= {} s", GRABCUT_BUDGET.as_secs());
    Ok(format!("refine median {refine_ms:.2} ms (< 50 ms), grabcut median {grabcut_s:.3} s (< 5 s)"))
}
