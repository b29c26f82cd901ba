//! Fixed, fully specified PRNG for reproducible experiment grids.
//!
//! Grids are generated by xoshiro256++ seeded through SplitMix64, so any
//! implementation of the same two algorithms reproduces identical point
//! sets bit for bit:
//!
//! * SplitMix64: state advances by 0x9E3779B97F4A7C15; output mixes the
//!   state with
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
//!   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`,
//!   `z ^ (z >> 31)`.
//! * xoshiro256++: state is four u64 words initialized from four
//!   successive SplitMix64 outputs; output is
//!   `rotl(s0 + s3, 23) + s0` with the usual xoshiro256 state update
//!   (t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t;
//!   s3 = rotl(s3, 45)).
//! * A uniform in [0, 1) takes the top 53 bits: `(x >> 11) * 2^-53`.
//! * Points are emitted coordinate-major: x1, x2, x3 per point, each
//!   mapped as lo + u * (hi - lo).

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256++ with SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct Xoshiro256PlusPlus {
    s: [u64; 4],
}

impl Xoshiro256PlusPlus {
    pub fn new(seed: u64) -> Self {
        let mut mix = SplitMix64::new(seed);
        let mut s = [0u64; 4];
        for w in &mut s {
            *w = mix.next_u64();
        }
        if s == [0, 0, 0, 0] {
            // the all-zero state is the one fixed point of the generator
            s[0] = 0x9E3779B97F4A7C15;
        }
        Self { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}

/// Axis-aligned box; the default experiment domain is the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoundingBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> crate::Result<Self> {
        for d in 0..3 {
            if lo[d] > hi[d] || !lo[d].is_finite() || !hi[d].is_finite() {
                return Err(crate::Error::InvalidConfig(format!(
                    "invalid bounding box axis {d}: [{}, {}]",
                    lo[d], hi[d]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|d| p[d] >= self.lo[d] && p[d] <= self.hi[d])
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self::unit()
    }
}

/// `n` points uniform in `domain`; identical (n, seed, domain) give
/// identical bits on every platform.
pub fn random_grid(n: usize, seed: u64, domain: BoundingBox) -> Vec<[f64; 3]> {
    let mut rng = Xoshiro256PlusPlus::new(seed);
    let span = [
        domain.hi[0] - domain.lo[0],
        domain.hi[1] - domain.lo[1],
        domain.hi[2] - domain.lo[2],
    ];
    (0..n)
        .map(|_| {
            [
                domain.lo[0] + rng.next_unit() * span[0],
                domain.lo[1] + rng.next_unit() * span[1],
                domain.lo[2] + rng.next_unit() * span[2],
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // published SplitMix64 test vector for seed 1234567
        let mut mix = SplitMix64::new(1234567);
        assert_eq!(mix.next_u64(), 6457827717110365317);
        assert_eq!(mix.next_u64(), 3203168211198807973);
    }

    #[test]
    fn grid_is_reproducible_and_in_domain() {
        let domain = BoundingBox::unit();
        let a = random_grid(257, 42, domain);
        let b = random_grid(257, 42, domain);
        assert_eq!(a, b);
        assert!(a.iter().all(|&p| domain.contains(p)));

        let c = random_grid(257, 43, domain);
        assert_ne!(a, c);
    }

    #[test]
    fn single_point_golden_value() {
        // regression lock for the documented generator chain
        let p = random_grid(1, 42, BoundingBox::unit())[0];
        let golden: [f64; 3] = [0.8143051451229099, 0.3188210400616611, 0.9838941681774888];
        for d in 0..3 {
            assert_eq!(p[d].to_bits(), golden[d].to_bits(), "axis {d}: {:?}", p);
        }
    }

    #[test]
    fn grid_mean_near_box_center() {
        let n = 1_000_000;
        let pts = random_grid(n, 7, BoundingBox::unit());
        for d in 0..3 {
            let mean: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / n as f64;
            // 3 sigma for uniform variance 1/12 over 1e6 samples is ~0.00087
            assert!(
                (mean - 0.5).abs() < 0.002,
                "axis {d} mean {mean} too far from 0.5"
            );
        }
    }

    #[test]
    fn scaled_domain() {
        let domain = BoundingBox::new([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]).unwrap();
        let pts = random_grid(100, 3, domain);
        assert!(pts.iter().all(|&p| domain.contains(p)));
        assert!(BoundingBox::new([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_err());
    }
}
