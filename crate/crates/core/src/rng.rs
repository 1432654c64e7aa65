//! Small deterministic RNG with counter-based substream derivation.
//!
//! Every random choice in the workspace flows from a caller-supplied `u64`
//! seed through [`Rng`]. Substreams are derived by hashing the parent seed
//! with integer tags ([`substream`]), so independent components (triples,
//! epochs, users) draw from independent streams and output never depends on
//! iteration order. The generator is SplitMix64; output is identical on
//! every platform.

use alloc::vec::Vec;

use crate::num;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of integer tags.
pub fn substream(seed: u64, tags: &[u64]) -> u64 {
    let mut s = mix64(seed ^ GOLDEN);
    for &t in tags {
        s = mix64(s ^ t.wrapping_mul(GOLDEN));
    }
    s
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: mix64(seed ^ GOLDEN),
        }
    }

    /// Stream for `tags` under this generator's seed space.
    pub fn derived(seed: u64, tags: &[u64]) -> Self {
        Rng::new(substream(seed, tags))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        num::sqrt(-2.0 * num::ln(u1)) * num::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Gamma(shape, 1) by Marsaglia–Tsang, with the boost for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let u = loop {
                let u = self.next_f64();
                if u > 0.0 {
                    break u;
                }
            };
            return self.gamma(shape + 1.0) * num::powf(u, 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / num::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_f64();
            if u < 1.0 - 0.0331 * (x * x) * (x * x) {
                return d * v;
            }
            if u > 0.0 && num::ln(u) < 0.5 * x * x + d * (1.0 - v + num::ln(v)) {
                return d * v;
            }
        }
    }

    /// Dirichlet draw; weights are nonnegative and sum to 1.
    pub fn dirichlet(&mut self, alpha: f64, n: usize) -> Vec<f64> {
        let mut w: Vec<f64> = (0..n).map(|_| self.gamma(alpha)).collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            // all-zero draw is possible only at extreme alpha; fall back to uniform
            return alloc::vec![1.0 / n as f64; n];
        }
        for v in &mut w {
            *v /= total;
        }
        // force exact unit sum after rounding
        let drift: f64 = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        w
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// First `k` indices of a shuffled 0..n range.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx.truncate(k);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_tag_sensitive() {
        let a: Vec<u64> = {
            let mut r = Rng::derived(7, &[1, 2]);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::derived(7, &[1, 2]);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = Rng::derived(7, &[2, 1]);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut r = Rng::new(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(num::abs(mean) < 0.03, "mean {mean}");
        assert!(num::abs(var - 1.0) < 0.05, "var {var}");
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut r = Rng::new(3);
        for &alpha in &[0.2, 0.8, 3.0] {
            let w = r.dirichlet(alpha, 6);
            assert_eq!(w.len(), 6);
            assert!(num::abs(w.iter().sum::<f64>() - 1.0) < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut r = Rng::new(5);
        let mut seen = [false; 7];
        for _ in 0..500 {
            seen[r.below(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
