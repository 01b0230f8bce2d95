//! Counter-based pseudo-random numbers.
//!
//! Every random draw in the engine is a pure function of a seed and a tuple
//! of integer coordinates, so results do not depend on evaluation order or
//! thread scheduling. The recurrence is part of the external interface and
//! must be reproduced bit-exactly by any other implementation:
//!
//! ```text
//! mix(z):
//!     z = z + 0x9E3779B97F4A7C15            (wrapping)
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//!     return z ^ (z >> 31)
//!
//! draw(seed, c0, c1, ..., ck) = mix(... mix(mix(mix(seed) ^ c0) ^ c1) ... ^ ck)
//!
//! uniform(u)     = (u >> 11) * 2^-53                      in [0, 1)
//! below(u, n)    = (u * n) >> 64   (128-bit product)      in [0, n)
//! normal(a, b)   = sqrt(-2 ln(1 - uniform(a))) * cos(2 pi uniform(b))
//! ```
//!
//! `normal` takes two independent draws that differ only in their final
//! coordinate (0 and 1).

/// splitmix64 finalizer, applied after the golden-ratio increment.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a coordinate tuple into one 64-bit draw.
#[inline]
pub fn draw(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix(seed), |acc, &c| mix(acc ^ c))
}

#[inline]
pub fn to_unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn to_below(u: u64, n: u64) -> u64 {
    ((u as u128 * n as u128) >> 64) as u64
}

/// Uniform in `[0, 1)` at the given coordinates.
pub fn uniform_at(seed: u64, coords: &[u64]) -> f64 {
    to_unit(draw(seed, coords))
}

/// Standard normal at the given coordinates (Box-Muller, cosine branch).
pub fn normal_at(seed: u64, coords: &[u64]) -> f64 {
    let mut buf = [0u64; 8];
    assert!(coords.len() < buf.len(), "too many coordinates");
    buf[..coords.len()].copy_from_slice(coords);
    let k = coords.len();
    buf[k] = 0;
    let u1 = uniform_at(seed, &buf[..=k]);
    buf[k] = 1;
    let u2 = uniform_at(seed, &buf[..=k]);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A sequential stream over one key: the `i`-th output is `draw(key, [i])`.
///
/// Streams are cheap to create; derive a fresh one per tree, per epoch or
/// per node instead of sharing a mutable generator.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, coords: &[u64]) -> Self {
        Self {
            key: draw(seed, coords),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = draw(self.key, &[self.counter]);
        self.counter += 1;
        out
    }

    pub fn next_f64(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    pub fn below(&mut self, n: usize) -> usize {
        to_below(self.next_u64(), n as u64) as usize
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle, swapping from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_matches_reference_splitmix64() {
        // First outputs of the reference splitmix64 generator seeded with 0:
        // state advances by the golden ratio before each finalization.
        assert_eq!(mix(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn draws_are_pure_functions_of_coordinates() {
        assert_eq!(draw(42, &[1, 2, 3]), draw(42, &[1, 2, 3]));
        assert_ne!(draw(42, &[1, 2, 3]), draw(42, &[1, 3, 2]));
        assert_ne!(draw(42, &[1]), draw(43, &[1]));
    }

    #[test]
    fn uniform_in_unit_interval_and_below_in_range() {
        let mut s = Stream::new(7, &[]);
        for _ in 0..10_000 {
            let u = s.next_f64();
            assert!((0.0..1.0).contains(&u));
            assert!(s.below(13) < 13);
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|i| normal_at(3, &[i])).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..100).collect();
        Stream::new(1, &[9]).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
