//! Minimal runner for long acceptance checks: each criterion runs once, in
//! order, and prints a single PASS/FAIL line as soon as it finishes.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Result of one criterion: overall verdict plus the measured numbers.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub pass: bool,
    pub parts: Vec<(String, bool)>,
}

impl Outcome {
    pub fn new() -> Self {
        Outcome {
            pass: true,
            parts: Vec::new(),
        }
    }

    /// Record a sub-check; any failing sub-check fails the criterion.
    pub fn check(&mut self, ok: bool, detail: impl Into<String>) -> &mut Self {
        self.pass &= ok;
        self.parts.push((detail.into(), ok));
        self
    }

    fn summary(&self) -> String {
        self.parts
            .iter()
            .map(|(d, ok)| if *ok { d.clone() } else { format!("{d} [x]") })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Default)]
pub struct Harness {
    results: Vec<(usize, String, bool)>,
    filter: Option<String>,
}

impl Harness {
    /// A positional argument restricts the run to criteria whose number or
    /// name contains it (cargo's own flags are ignored).
    pub fn from_args() -> Self {
        let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
        Harness {
            results: Vec::new(),
            filter,
        }
    }

    pub fn run<F>(&mut self, id: usize, name: &str, f: F)
    where
        F: FnOnce() -> Outcome,
    {
        if let Some(pat) = &self.filter {
            if !(name.contains(pat.as_str()) || id.to_string() == *pat) {
                return;
            }
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => (o.pass, o.summary()),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("aborted: {msg}"))
            }
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name} ({:.1}s): {detail}",
            start.elapsed().as_secs_f64()
        );
        let _ = std::io::stdout().flush();
        self.results.push((id, name.into(), pass));
    }

    /// Print the tally and return the process exit code.
    pub fn finish(&self) -> i32 {
        let failed: Vec<String> = self
            .results
            .iter()
            .filter(|r| !r.2)
            .map(|r| r.0.to_string())
            .collect();
        println!(
            "acceptance: {} of {} criteria passed{}",
            self.results.len() - failed.len(),
            self.results.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        );
        i32::from(!failed.is_empty())
    }
}
