//! Progressive validation: every episode is scored by the policy that has
//! not yet trained on it, so running means estimate held-out performance.

use serde::{Deserialize, Serialize};

pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// A recorded metric stream with a sequential running sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub sum: f64,
    pub values: Vec<f64>,
}

impl Series {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.values.push(x);
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.sum / self.values.len() as f64)
    }

    /// Mean of the last `ceil(q n)` values.
    pub fn tail_mean(&self, q: f64) -> Option<f64> {
        let n = self.values.len();
        if n == 0 {
            return None;
        }
        let m = ((q * n as f64).ceil() as usize).clamp(1, n);
        Some(self.values[n - m..].iter().sum::<f64>() / m as f64)
    }

    pub fn head_mean(&self, m: usize) -> Option<f64> {
        let m = m.min(self.values.len());
        (m > 0).then(|| self.values[..m].iter().sum::<f64>() / m as f64)
    }

    /// Standard error of the mean, sample variance.
    pub fn std_error(&self) -> Option<f64> {
        let n = self.values.len();
        if n < 2 {
            return None;
        }
        let mean = self.sum / n as f64;
        let var = self.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some((var / n as f64).sqrt())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PvAccumulator {
    pub answer_f1: Series,
    pub support_f1: Series,
    pub sufficiency_acc: Series,
    pub pairs_per_episode: Series,
    /// One value per minibatch that produced pairs.
    pub dpo_loss: Series,
}

impl PvAccumulator {
    pub fn episodes(&self) -> usize {
        self.answer_f1.count()
    }

    pub fn series(&self) -> [(&'static str, &Series); 5] {
        [
            ("answer_f1", &self.answer_f1),
            ("support_f1", &self.support_f1),
            ("sufficiency_acc", &self.sufficiency_acc),
            ("pairs_per_episode", &self.pairs_per_episode),
            ("dpo_loss", &self.dpo_loss),
        ]
    }
}
