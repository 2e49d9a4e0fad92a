//! Deterministic, platform-independent random sampling.
//!
//! The generator is xoshiro256++ seeded through splitmix64; normal variates
//! come from Box-Muller evaluated with `libm` so the stream is bit-identical
//! across platforms. OS entropy is never consulted.

use super::Matrix;

/// Name of the generator, stored alongside seeds in manifests.
pub const RNG_ALGORITHM_ID: &str = "xoshiro256++/splitmix64";

#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
    cached_normal: Option<f64>,
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for s in state.iter_mut() {
            *s = splitmix64(&mut sm);
        }
        if state.iter().all(|&s| s == 0) {
            state[0] = 1;
        }
        Self {
            state,
            seed,
            cached_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm_id(&self) -> &'static str {
        RNG_ALGORITHM_ID
    }

    /// Independent child generator, for per-member sub-streams.
    pub fn derive(&self, stream: u64) -> Self {
        let mut sm = self.seed ^ stream.wrapping_mul(0xA0761D6478BD642F);
        let _ = splitmix64(&mut sm);
        Self::from_seed(splitmix64(&mut sm))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire-style rejection to avoid modulo bias.
        let n64 = n as u64;
        loop {
            let x = self.next_u64();
            let (hi, lo) = {
                let wide = (x as u128) * (n64 as u128);
                ((wide >> 64) as u64, wide as u64)
            };
            if lo >= n64.wrapping_neg() % n64 {
                return hi as usize;
            }
        }
    }

    /// Standard normal via Box-Muller (libm transcendentals, so the stream is
    /// identical on every platform).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

/// n x d matrix of i.i.d. standard normal draws, advancing the rng state.
pub fn sample_standard_normal(rng: &mut SeededRng, n: usize, d: usize) -> Matrix {
    assert!(n >= 1 && d >= 1, "sample shape must be at least 1x1");
    Matrix::from_fn(n, d, |_, _| rng.normal())
}
