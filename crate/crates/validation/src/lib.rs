//! Acceptance experiments. Each criterion trains or evaluates what it needs
//! and returns a [`Verdict`]; runs shared between criteria are trained once
//! per process through [`runs::run`].

pub mod criteria;
pub mod oracles;
pub mod runs;

use std::fmt;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: &'static str,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(id: &'static str, title: &'static str, pass: bool, detail: String) -> Self {
        Self {
            id,
            title,
            pass,
            detail,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {}: {}\n{}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail
                .lines()
                .map(|l| format!("    {l}"))
                .collect::<Vec<_>>()
                .join("\n")
        )
    }
}
