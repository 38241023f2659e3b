//! Retained leverage scores and their upper-tail empirical quantile.
//!
//! The default mode keeps every observed score (exact order statistics). A
//! positive window keeps only the most recent `window` scores, evicting the
//! oldest, which bounds memory on long streams.

use std::collections::VecDeque;

/// Multiset of scores with O(log n) lookup of the upper-tail quantile.
#[derive(Debug, Clone)]
pub struct ScoreTracker {
    window: usize,
    order: VecDeque<f64>,
    sorted: Vec<f64>,
}

impl ScoreTracker {
    /// `window = 0` retains every score.
    pub fn new(window: usize) -> Self {
        Self {
            window,
            order: VecDeque::new(),
            sorted: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn insert(&mut self, score: f64) {
        if self.window > 0 && self.order.len() == self.window {
            let oldest = self.order.pop_front().expect("window non-empty");
            let idx = self
                .sorted
                .binary_search_by(|probe| probe.total_cmp(&oldest))
                .expect("evicted score present");
            self.sorted.remove(idx);
        }
        if self.window > 0 {
            self.order.push_back(score);
        }
        let idx = self
            .sorted
            .partition_point(|probe| probe.total_cmp(&score).is_lt());
        self.sorted.insert(idx, score);
    }

    /// Smallest retained score `r` such that the fraction of retained scores
    /// strictly above `r` is at most `tail`. Ties resolve toward the smaller
    /// value, so the induced rule samples slightly more, never less. Returns
    /// `None` on an empty tracker.
    pub fn upper_quantile(&self, tail: f64) -> Option<f64> {
        let m = self.sorted.len();
        if m == 0 {
            return None;
        }
        if tail <= 0.0 {
            return Some(f64::INFINITY);
        }
        let allowed = (tail * m as f64).floor() as usize;
        if allowed >= m {
            return Some(self.sorted[0]);
        }
        Some(self.sorted[m - 1 - allowed])
    }
}
