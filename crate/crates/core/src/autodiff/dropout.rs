use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Supplies inverted-dropout masks: each entry is either 0 or `1 / (1 - rate)`.
pub trait MaskSource {
    fn mask(&mut self, shape: &[usize], rate: f64) -> Tensor;
}

/// Bernoulli masks drawn from a seeded generator.
pub struct BernoulliMasks {
    rng: ChaCha8Rng,
}

impl BernoulliMasks {
    pub fn new(seed: u64) -> Self {
        BernoulliMasks {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl MaskSource for BernoulliMasks {
    fn mask(&mut self, shape: &[usize], rate: f64) -> Tensor {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            if self.rng.gen::<f64>() < keep {
                *v = scale;
            }
        }
        t
    }
}

/// All-ones masks: dropout becomes the identity.
pub struct NoMasks;

impl MaskSource for NoMasks {
    fn mask(&mut self, shape: &[usize], _rate: f64) -> Tensor {
        Tensor::full(shape, 1.0)
    }
}

/// Replays a fixed list of masks in order; used to make dropout deterministic in tests.
pub struct FixedMasks {
    masks: std::collections::VecDeque<Tensor>,
}

impl FixedMasks {
    pub fn new(masks: Vec<Tensor>) -> Self {
        FixedMasks {
            masks: masks.into(),
        }
    }
}

impl MaskSource for FixedMasks {
    fn mask(&mut self, shape: &[usize], _rate: f64) -> Tensor {
        let m = self.masks.pop_front().expect("FixedMasks exhausted");
        assert_eq!(m.shape(), shape, "FixedMasks shape mismatch");
        m
    }
}
