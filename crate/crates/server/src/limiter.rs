use std::collections::{HashMap, VecDeque};

use chrono::{DateTime, Duration, Utc};

/// Sliding-window counter of accepted actions per session token.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    hits: HashMap<String, VecDeque<DateTime<Utc>>>,
}

impl RateLimiter {
    pub fn new(limit: usize, window: Duration) -> Self {
        RateLimiter {
            limit,
            window,
            hits: HashMap::new(),
        }
    }

    fn prune(&mut self, token: &str, now: DateTime<Utc>) -> usize {
        let window = self.window;
        let q = self.hits.entry(token.to_string()).or_default();
        while q.front().is_some_and(|t| now - *t >= window) {
            q.pop_front();
        }
        q.len()
    }

    /// Whether `token` may act once more at `now`.
    pub fn allows(&mut self, token: &str, now: DateTime<Utc>) -> bool {
        self.prune(token, now) < self.limit
    }

    pub fn record(&mut self, token: &str, now: DateTime<Utc>) {
        self.prune(token, now);
        self.hits.entry(token.to_string()).or_default().push_back(now);
    }
}
