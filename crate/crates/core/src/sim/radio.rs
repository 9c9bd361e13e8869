use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Closed-ball distance gate with optional independent loss per delivery.
#[derive(Clone, Debug)]
pub struct Radio {
    range: f64,
    p_drop: f64,
    rng: ChaCha20Rng,
}

impl Radio {
    pub fn new(range: f64, p_drop: f64, seed: [u8; 32]) -> Self {
        Radio {
            range,
            p_drop,
            rng: ChaCha20Rng::from_seed(seed),
        }
    }

    pub fn in_range(&self, dist: f64) -> bool {
        dist <= self.range
    }

    /// Whether a delivery at `dist` goes through. The loss generator is only
    /// consulted for in-range deliveries with `0 < p_drop < 1`.
    pub fn delivers(&mut self, dist: f64) -> bool {
        if !self.in_range(dist) {
            return false;
        }
        if self.p_drop <= 0.0 {
            true
        } else if self.p_drop >= 1.0 {
            false
        } else {
            self.rng.gen::<f64>() >= self.p_drop
        }
    }
}
