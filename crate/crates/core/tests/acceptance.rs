//! One PASS/FAIL line per acceptance criterion. Tolerances live in
//! `riskdp::suite`; runtime limits are pinned here.

use std::io::Write;
use std::time::{Duration, Instant};

use riskdp::suite::{self, CriterionResult, DEFAULT_SEED};

struct Criterion {
    run: fn(u64) -> CriterionResult,
    limit: Option<Duration>,
}

fn criteria() -> Vec<Criterion> {
    let secs = |s| Some(Duration::from_secs(s));
    vec![
        Criterion {
            run: |_| suite::cvar_saddle_gap(),
            limit: secs(1),
        },
        Criterion {
            run: |_| suite::theta_curves(),
            limit: None,
        },
        Criterion {
            run: suite::cvar_evaluation_exact,
            limit: secs(30),
        },
        Criterion {
            run: |_| suite::evar_counterexample(),
            limit: None,
        },
        Criterion {
            run: suite::corrected_evar,
            limit: None,
        },
        Criterion {
            run: suite::var_exact,
            limit: secs(10),
        },
        Criterion {
            run: |_| suite::m3_suboptimality(),
            limit: None,
        },
        Criterion {
            run: suite::horizon_dp,
            limit: secs(60),
        },
        Criterion {
            run: suite::risk_measure_properties,
            limit: None,
        },
    ]
}

#[test]
fn acceptance_criteria() {
    // the raw handle is not captured by the test harness
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    let mut failed = Vec::new();
    for c in criteria() {
        let start = Instant::now();
        let result = (c.run)(DEFAULT_SEED);
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let passed = result.passed && in_time;
        let limit = c
            .limit
            .map_or(String::new(), |l| format!(" / limit {:.0}s", l.as_secs_f64()));
        writeln!(
            out,
            "[{}] criterion {}: {} ({:.2}s{limit})",
            if passed { "PASS" } else { "FAIL" },
            result.id,
            result.name,
            elapsed.as_secs_f64()
        )
        .unwrap();
        for check in &result.checks {
            writeln!(
                out,
                "       {} {}: {}",
                if check.passed { "ok  " } else { "FAIL" },
                check.label,
                check.observed
            )
            .unwrap();
        }
        if !in_time {
            writeln!(out, "       FAIL runtime over limit").unwrap();
        }
        if !passed {
            failed.push(result.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
