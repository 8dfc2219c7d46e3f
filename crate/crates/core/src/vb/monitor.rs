use std::collections::VecDeque;

/// Moving-average stopping rule.
///
/// Each observation is a monitored parameter vector. Once `window` vectors
/// have been seen, the rule compares the average of the latest `window`
/// iterates with the average one step earlier and reports the largest
/// elementwise relative change.
#[derive(Clone, Debug)]
pub struct ConvergenceMonitor {
    tolerance: f64,
    window: usize,
    history: VecDeque<Vec<f64>>,
    previous_average: Option<Vec<f64>>,
    last_delta: Option<f64>,
    observed: usize,
}

/// `max_i |a_i − b_i| / |b_i|`; an exact zero reference counts as no
/// change when the values agree and as an infinite change otherwise.
pub fn relative_change(current: &[f64], previous: &[f64]) -> f64 {
    current
        .iter()
        .zip(previous)
        .map(|(a, b)| {
            let diff = (a - b).abs();
            if diff == 0.0 {
                0.0
            } else if *b == 0.0 {
                f64::INFINITY
            } else {
                diff / b.abs()
            }
        })
        .fold(0.0, f64::max)
}

impl ConvergenceMonitor {
    pub fn new(tolerance: f64, window: usize) -> Self {
        assert!(window >= 1, "window must be positive");
        Self {
            tolerance,
            window,
            history: VecDeque::with_capacity(window + 1),
            previous_average: None,
            last_delta: None,
            observed: 0,
        }
    }

    /// Records one iterate and returns the change statistic once both
    /// averages span a full window.
    pub fn observe(&mut self, theta: &[f64]) -> Option<f64> {
        self.history.push_back(theta.to_vec());
        if self.history.len() > self.window {
            self.history.pop_front();
        }
        self.observed += 1;
        let mut avg = vec![0.0; theta.len()];
        for h in &self.history {
            avg.iter_mut().zip(h).for_each(|(a, v)| *a += v);
        }
        let count = self.history.len() as f64;
        avg.iter_mut().for_each(|a| *a /= count);
        self.last_delta = if self.observed > self.window {
            self.previous_average.as_deref().map(|prev| relative_change(&avg, prev))
        } else {
            None
        };
        self.previous_average = Some(avg);
        self.last_delta
    }

    pub fn converged(&self) -> bool {
        self.last_delta.is_some_and(|d| d < self.tolerance)
    }

    pub fn last_delta(&self) -> Option<f64> {
        self.last_delta
    }

    pub fn observed(&self) -> usize {
        self.observed
    }
}
