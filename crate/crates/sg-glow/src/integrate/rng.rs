//! Counter-based random number generator.
//!
//! Each Monte Carlo sample owns an independent stream derived purely from
//! `(seed, sample index)`, so estimates are bit-identical for any worker
//! count and any evaluation order. The construction (recorded in output
//! metadata as the algorithm id) is:
//!
//! ```text
//! mix(z):   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^= z >> 31                       (splitmix64 finalizer)
//! key    =  mix(seed ^ mix(index + 0x243F6A8885A308D3))
//! draw_k =  mix(key ^ mix(k + 0x452821E638D01377))    k = 0, 1, 2, ...
//! ```
//!
//! Uniforms take the top 53 bits; normals come from a Box-Muller pair.

/// Identifier written into run metadata.
pub const RNG_ALGORITHM_ID: &str = "splitmix64-ctr-v1";

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-sample deterministic stream.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    slot: u64,
    cached_normal: Option<f64>,
}

impl CounterRng {
    pub fn for_sample(seed: u64, index: u64) -> Self {
        CounterRng {
            key: mix(seed ^ mix(index.wrapping_add(0x243F6A8885A308D3))),
            slot: 0,
            cached_normal: None,
        }
    }

    /// Independent sub-stream, for nested draws that must not perturb the
    /// parent slot sequence.
    pub fn substream(&self, tag: u64) -> CounterRng {
        CounterRng {
            key: mix(self.key ^ mix(tag.wrapping_add(0x13198A2E03707344))),
            slot: 0,
            cached_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key ^ mix(self.slot.wrapping_add(0x452821E638D01377)));
        self.slot += 1;
        v
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`, safe for logarithms.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; pairs are cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.cached_normal = Some(r * s);
        r * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_order_free() {
        let a: Vec<u64> = (0..8)
            .map(|i| CounterRng::for_sample(42, i).next_u64())
            .collect();
        let mut b: Vec<(u64, u64)> = (0..8)
            .rev()
            .map(|i| (i, CounterRng::for_sample(42, i).next_u64()))
            .collect();
        b.sort_by_key(|&(i, _)| i);
        assert_eq!(a, b.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
    }

    #[test]
    fn distinct_streams_and_slots() {
        let mut r = CounterRng::for_sample(1, 0);
        let x = r.next_u64();
        let y = r.next_u64();
        assert_ne!(x, y);
        let mut r2 = CounterRng::for_sample(1, 1);
        assert_ne!(x, r2.next_u64());
        let mut r3 = CounterRng::for_sample(2, 0);
        assert_ne!(x, r3.next_u64());
    }

    #[test]
    fn uniform_moments() {
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let u = CounterRng::for_sample(7, i).uniform();
            sum += u;
            sum2 += u * u;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 3e-3);
        assert!((var - 1.0 / 12.0).abs() < 3e-3);
    }

    #[test]
    fn normal_moments() {
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let z = CounterRng::for_sample(9, i).normal();
            sum += z;
            sum2 += z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 1e-2);
        assert!((var - 1.0).abs() < 2e-2);
    }
}
