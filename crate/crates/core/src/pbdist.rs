//! Exact Poisson-binomial law of a sum of independent Bernoulli trials.
//!
//! This is the reference the linearized constraints are checked against: the
//! per-frame service of a pair is exactly such a sum.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliVector {
    probs: Vec<f64>,
}

impl BernoulliVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "Bernoulli probability {p} outside [0, 1]"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `pmf[l] = P(sum = l)` for `l = 0..=n`, by adding one trial at a time.
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.probs.len();
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 1.0;
        for (j, &p) in self.probs.iter().enumerate() {
            let q = 1.0 - p;
            // after this trial the support is 0..=j+1
            pmf[j + 1] = pmf[j] * p;
            for l in (1..=j).rev() {
                pmf[l] = pmf[l] * q + pmf[l - 1] * p;
            }
            pmf[0] *= q;
        }
        pmf
    }

    /// P(sum > x), strict as in the QoS constraint.
    pub fn tail_exceeds(&self, x: f64) -> f64 {
        let pmf = self.pmf();
        // smallest integer l with l > x
        let first = if x < 0.0 { 0 } else { x.floor() as usize + 1 };
        if first >= pmf.len() {
            return 0.0;
        }
        pmf[first..].iter().sum::<f64>().min(1.0)
    }

    /// (Σ p, Σ p(1 − p)).
    pub fn mean_var(&self) -> (f64, f64) {
        self.probs
            .iter()
            .fold((0.0, 0.0), |(m, v), &p| (m + p, v + p * (1.0 - p)))
    }
}
