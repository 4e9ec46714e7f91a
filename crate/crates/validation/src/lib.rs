//! Reporting helpers for the acceptance suite in `tests/acceptance.rs`.
//!
//! The suite lives in its own package so that it runs after the unit and
//! integration tests of the other crates.

use std::time::{Duration, Instant};

/// Result of one acceptance criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: {} [{:.2} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs `check`, which returns `(passed, detail)`, and times it.
pub fn run(id: u32, title: &'static str, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = check();
    Outcome { id, title, passed, detail, elapsed: start.elapsed() }
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_shape() {
        let o = Outcome { id: 3, title: "t", passed: false, detail: "d".into(), elapsed: Duration::from_millis(1500) };
        assert_eq!(o.line(), "criterion  3 FAIL t: d [1.50 s]");
        assert_eq!(rel(0.0, 0.0), 0.0);
        assert!((rel(1.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
