//! Deterministic random numbers with a fully documented algorithm, so the
//! exact bit stream can be reproduced in any language.
//!
//! Generator: SplitMix64. State is one u64. Each call to [`Rng::next_u64`]
//! does:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15          (wrapping)
//! z = state
//! z = (z xor (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//! z = (z xor (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//! return z xor (z >> 31)
//! ```
//!
//! Derived quantities:
//!
//! * `next_f64` = `(next_u64() >> 11) as f64 * 2^-53`, uniform in [0, 1).
//! * `normal` uses the Box-Muller transform: draw `u1` with `next_f64`
//!   (redrawing while `u1 == 0`), then `u2`; return
//!   `sqrt(-2 ln u1) * cos(2 pi u2)` and cache
//!   `sqrt(-2 ln u1) * sin(2 pi u2)` for the next call. Reseeding or
//!   deriving a sub-stream clears the cache.
//! * `range(n)` = `next_u64() % n`. The modulo bias is below n / 2^64 and
//!   is accepted for the dataset sizes used here.
//! * `shuffle` is the descending Fisher-Yates walk: for `i` from
//!   `len-1` down to `1`, swap index `i` with index `range(i + 1)`.
//! * Sub-streams: `derive(tag)` hashes the tag with FNV-1a 64 and seeds a
//!   fresh generator with `next_u64`-style mixing of `seed xor hash`, so
//!   data order, weight init, and dropout each consume an independent
//!   stream regardless of how much the others draw.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// FNV-1a 64-bit hash. Also used for checkpoint architecture fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    seed: u64,
    cached_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed,
            seed,
            cached_normal: None,
        }
    }

    /// The seed this stream was created with (sub-streams report their own).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream addressed by a string tag. Equal (seed, tag) pairs
    /// always yield the same stream; distinct tags decorrelate.
    pub fn derive(&self, tag: &str) -> Rng {
        let mixed = splitmix_once(self.seed ^ fnv1a64(tag.as_bytes()));
        Rng::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal (mean 0, sigma 1), Box-Muller pairs.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let mut u1 = self.next_f64();
        while u1 == 0.0 {
            u1 = self.next_f64();
        }
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in [0, n). n must be nonzero.
    pub fn range(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.range(i + 1);
            xs.swap(i, j);
        }
    }
}

fn splitmix_once(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: the SplitMix64 reference sequence for seed 1234567, as
    /// published with the original algorithm description.
    #[test]
    fn splitmix_matches_reference_vector() {
        let mut r = Rng::new(1234567);
        let expect: [u64; 5] = [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expect {
            assert_eq!(r.next_u64(), e);
        }
    }

    /// Oracle: recompute next_f64 from the documented formula on the raw
    /// u64 stream, independently of the method under test.
    #[test]
    fn f64_is_high_53_bits_over_2_pow_53() {
        let mut raw = Rng::new(42);
        let mut f = Rng::new(42);
        for _ in 0..100 {
            let bits = raw.next_u64();
            let expect = (bits >> 11) as f64 / 9007199254740992.0;
            assert_eq!(f.next_f64(), expect);
            assert!((0.0..1.0).contains(&expect));
        }
    }

    /// Oracle: apply the Box-Muller formulas by hand to the first two
    /// uniforms of seed 7 and compare bit for bit, including the cached
    /// second variate.
    #[test]
    fn normal_pairs_follow_box_muller_exactly() {
        let mut u = Rng::new(7);
        let u1 = u.next_f64();
        let u2 = u.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        let mut n = Rng::new(7);
        assert_eq!(n.normal().to_bits(), (r * theta.cos()).to_bits());
        assert_eq!(n.normal().to_bits(), (r * theta.sin()).to_bits());
    }

    #[test]
    fn derive_is_stable_and_decorrelated() {
        let root = Rng::new(99);
        let mut a1 = root.derive("data");
        let mut a2 = root.derive("data");
        let mut b = root.derive("init");
        let va = a1.next_u64();
        assert_eq!(va, a2.next_u64());
        assert_ne!(va, b.next_u64());
        // Deriving must not disturb the parent stream.
        let mut r1 = Rng::new(99);
        let mut r2 = Rng::new(99);
        let _ = r2.derive("anything");
        assert_eq!(r1.next_u64(), r2.next_u64());
    }

    #[test]
    fn shuffle_is_a_permutation_and_deterministic() {
        let mut r = Rng::new(5);
        let mut xs: Vec<usize> = (0..20).collect();
        r.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        let mut r2 = Rng::new(5);
        let mut ys: Vec<usize> = (0..20).collect();
        r2.shuffle(&mut ys);
        assert_eq!(xs, ys);
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut r = Rng::new(11);
        for _ in 0..1000 {
            let x = r.uniform(-3.0, 2.5);
            assert!((-3.0..2.5).contains(&x));
        }
    }

    /// Sanity: sample moments of the normal stream are near (0, 1).
    #[test]
    fn normal_moments_are_plausible() {
        let mut r = Rng::new(2024);
        let n = 20000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = r.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
