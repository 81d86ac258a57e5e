use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability vector over the integer domain `[0, len)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    probs: Vec<f64>,
}

/// Tolerance used when validating normalization.
pub const NORM_TOL: f64 = 1e-9;

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let d = Dist { probs };
        d.validate(NORM_TOL)?;
        Ok(d)
    }

    /// Wrap a vector without validating it.
    pub fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Dist { probs }
    }

    pub fn point(size: usize, value: usize) -> Self {
        let mut probs = vec![0.0; size];
        probs[value] = 1.0;
        Dist { probs }
    }

    pub fn uniform(size: usize) -> Self {
        Dist {
            probs: vec![1.0 / size as f64; size],
        }
    }

    /// Uniform over the given values.
    pub fn uniform_over(size: usize, values: &[usize]) -> Self {
        let mut probs = vec![0.0; size];
        for &v in values {
            probs[v] += 1.0 / values.len() as f64;
        }
        Dist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn domain_size(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, value: usize) -> f64 {
        self.probs.get(value).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let total = self.total();
        if self.probs.iter().any(|&p| p < -tol || !p.is_finite()) || (total - 1.0).abs() > tol {
            return Err(Error::Unnormalized { total });
        }
        Ok(())
    }

    /// Most likely value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// The value carrying all the mass, if any.
    pub fn as_point(&self) -> Option<usize> {
        let v = self.argmax();
        (self.probs[v] == 1.0).then_some(v)
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.3, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn validation() {
        assert!(Dist::new(vec![0.5, 0.5]).is_ok());
        assert!(Dist::new(vec![0.5, 0.6]).is_err());
        assert!(Dist::new(vec![1.5, -0.5]).is_err());
        assert_eq!(Dist::point(4, 2).as_point(), Some(2));
        assert_eq!(Dist::uniform(4).as_point(), None);
        assert!((Dist::uniform(2).entropy() - 2f64.ln()).abs() < 1e-15);
    }
}
