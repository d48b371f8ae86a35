use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Retry policy for endpoint calls: `retries` extra attempts after the first,
/// sleeping `base_delay_ms * 2^attempt` between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            retries: 0,
            base_delay_ms: 0,
        }
    }

    /// Calls `op` until it succeeds or the retry budget is spent; returns the
    /// last error together with the number of attempts made.
    pub fn run<T, E, F>(&self, mut op: F) -> Result<T, (E, u32)>
    where
        F: FnMut() -> Result<T, E>,
    {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= self.retries => return Err((e, attempt + 1)),
                Err(_) => {
                    let delay = self.base_delay_ms.saturating_mul(1 << attempt.min(16));
                    if delay > 0 {
                        thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retries_then_succeeds() {
        let mut calls = 0;
        let r: Result<u32, (&str, u32)> = RetryPolicy::none().run(|| {
            calls += 1;
            Err("boom")
        });
        assert_eq!(r, Err(("boom", 1)));
        assert_eq!(calls, 1);

        let mut calls = 0;
        let policy = RetryPolicy {
            retries: 3,
            base_delay_ms: 0,
        };
        let r: Result<u32, (&str, u32)> = policy.run(|| {
            calls += 1;
            if calls < 3 {
                Err("flaky")
            } else {
                Ok(7)
            }
        });
        assert_eq!(r, Ok(7));
        assert_eq!(calls, 3);
    }
}
