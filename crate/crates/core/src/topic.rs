use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("topic distribution is empty")]
    Empty,
    #[error("topic distribution has a negative or non-finite entry at {0}")]
    InvalidEntry(usize),
    #[error("topic distribution sums to {0}, not 1")]
    NotNormalized(f64),
}

/// Probability vector over the K topics of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TopicDistribution(Vec<f64>);

impl TopicDistribution {
    pub fn new(theta: Vec<f64>) -> Result<Self, TopicError> {
        if theta.is_empty() {
            return Err(TopicError::Empty);
        }
        if let Some(i) = theta.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(TopicError::InvalidEntry(i));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(TopicError::NotNormalized(sum));
        }
        Ok(Self(theta))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, TopicError> {
        if weights.is_empty() {
            return Err(TopicError::Empty);
        }
        if let Some(i) = weights.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(TopicError::InvalidEntry(i));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(TopicError::NotNormalized(sum));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform distribution needs at least one topic");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = k;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .fold(0.0, |h, x| h + x)
    }
}

impl TryFrom<Vec<f64>> for TopicDistribution {
    type Error = TopicError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TopicDistribution> for Vec<f64> {
    fn from(t: TopicDistribution) -> Self {
        t.0
    }
}
