use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// Seeded random stream backed by ChaCha8, a counter-based generator.
///
/// A stream is identified by `(seed, stream id)`; [`RngStream::split`] derives
/// an independent child stream by selecting a different ChaCha stream id, so
/// parents and children never overlap. Output depends only on the seed and
/// call sequence, never on thread scheduling.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream `id` of this stream's seed. Splitting is a pure function
    /// of `(seed, stream, id)` and does not advance `self`.
    pub fn split(&self, id: u64) -> RngStream {
        // Stream ids are 64-bit; mix parent and child ids so nested splits stay distinct.
        let child = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id.wrapping_add(1));
        Self::with_stream(self.seed, child)
    }

    /// Uniform on `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.rng.random::<f64>()
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        mean + std * z
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        Exp::new(1.0 / mean)
            .expect("exponential mean must be positive")
            .sample(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}
