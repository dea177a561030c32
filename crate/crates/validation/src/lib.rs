//! Pass/fail bookkeeping for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {} ({}): {} [{:.2}s, budget {}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

/// Run `check`, turning an `Err` or a panic into a failed outcome.
pub fn evaluate<F>(id: u32, name: &'static str, budget_s: u64, check: F) -> Outcome
where
    F: FnOnce() -> Result<String, String>,
{
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (false, format!("panicked: {msg}"))
        }
    };
    Outcome {
        id,
        name,
        passed,
        detail,
        elapsed,
        budget: Duration::from_secs(budget_s),
    }
}

/// Write the line straight to the process stdout so it shows even when the
/// test harness captures output.
pub fn announce(o: &Outcome) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", o.line());
    let _ = out.flush();
}

/// Summary line plus the ids that failed.
pub fn summary(outcomes: &[Outcome]) -> (String, Vec<u32>) {
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let line = format!(
        "acceptance: {} passed, {} failed{}",
        outcomes.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (criteria {failed:?})")
        }
    );
    (line, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_and_errors_fail() {
        assert!(evaluate(1, "ok", 1, || Ok("fine".into())).passed);
        assert!(!evaluate(2, "err", 1, || Err("bad".into())).passed);
        let o = evaluate(3, "boom", 1, || panic!("kaput"));
        assert!(!o.passed && o.detail.contains("kaput"));
        assert!(o.line().starts_with("FAIL criterion 3 (boom)"));
    }

    #[test]
    fn summary_lists_failures() {
        let a = evaluate(1, "a", 1, || Ok(String::new()));
        let b = evaluate(4, "b", 1, || Err(String::new()));
        let (line, failed) = summary(&[a, b]);
        assert_eq!(failed, vec![4]);
        assert!(line.contains("1 passed, 1 failed"));
    }
}
