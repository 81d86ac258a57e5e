use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layout::Layout;
use crate::autodiff::softmax;
use crate::discrete::ConcreteProgram;
use crate::error::{Error, Result};
use crate::machine::Dist;

/// Logit gap used to encode a concrete choice; large enough that the
/// softmax of the other entries underflows to exactly zero.
pub const POINT_MASS_GAP: f64 = 1000.0;

/// Learnable logits, one vector per layout slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub logits: Vec<Vec<f64>>,
}

impl ParamSet {
    /// All-zero logits: uniform distributions everywhere.
    pub fn uniform(layout: &Layout) -> Self {
        ParamSet {
            logits: layout.slots.iter().map(|s| vec![0.0; s.size()]).collect(),
        }
    }

    /// Logits drawn i.i.d. from `Normal(0, scale^2)`.
    pub fn random<R: Rng + ?Sized>(layout: &Layout, scale: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, scale)
            .map_err(|e| Error::Config(format!("invalid init scale {scale}: {e}")))?;
        Ok(ParamSet {
            logits: layout
                .slots
                .iter()
                .map(|s| (0..s.size()).map(|_| normal.sample(rng)).collect())
                .collect(),
        })
    }

    /// Parameters whose distributions are point masses on `program`.
    pub fn point_mass(layout: &Layout, program: &ConcreteProgram) -> Result<Self> {
        program.validate(layout)?;
        Ok(ParamSet {
            logits: layout
                .slots
                .iter()
                .zip(&program.choices)
                .map(|(s, &c)| {
                    (0..s.size())
                        .map(|i| if i == c { 0.0 } else { -POINT_MASS_GAP })
                        .collect()
                })
                .collect(),
        })
    }

    /// Parameters mixing two programs that differ in some slots: in each
    /// differing slot, `a`'s choice gets probability `p` and `b`'s `1 - p`.
    pub fn blend(layout: &Layout, a: &ConcreteProgram, b: &ConcreteProgram, p: f64) -> Result<Self> {
        let mut out = ParamSet::point_mass(layout, a)?;
        b.validate(layout)?;
        for (i, (&x, &y)) in a.choices.iter().zip(&b.choices).enumerate() {
            if x != y {
                let logits = &mut out.logits[i];
                logits.iter_mut().for_each(|l| *l = -POINT_MASS_GAP);
                logits[x] = p.ln();
                logits[y] = (1.0 - p).ln();
            }
        }
        Ok(out)
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.logits.len() != layout.num_slots()
            || self
                .logits
                .iter()
                .zip(&layout.slots)
                .any(|(l, s)| l.len() != s.size())
        {
            return Err(Error::InvalidModel("parameter shapes do not match the layout".into()));
        }
        Ok(())
    }

    pub fn dists(&self) -> Result<Vec<Dist>> {
        self.logits
            .iter()
            .map(|l| Ok(Dist::from_vec_unchecked(softmax(l)?)))
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.logits.iter().flatten().copied().collect()
    }
}
