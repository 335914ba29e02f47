//! Philox4x32-10 counter-based generator.
//!
//! [`philox_block`] is a pure function of `(key, counter)`: no state is
//! advanced, so any draw can be evaluated in any order on any thread.
//! Uniforms take the high 64 bits of a block, and the distribution samplers
//! are inverse-CDF transforms that consume exactly one uniform each.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GENERATOR_ID: &str = "philox4x32-10";
pub const PHILOX_ROUNDS: usize = 10;

const PHILOX_M4X32_0: u32 = 0xD251_1F53;
const PHILOX_M4X32_1: u32 = 0xCD9E_8D57;
const PHILOX_W32_0: u32 = 0x9E37_79B9; // golden ratio
const PHILOX_W32_1: u32 = 0xBB67_AE85; // sqrt(3) - 1

/// 128-bit generator key.
///
/// Philox4x32 takes a 64-bit key; `lo` is that key. `hi` is XORed into
/// counter words 2 and 3 before the rounds, so for a fixed `lo` the map from
/// `(hi, counter)` stays a bijection and no key bits are dropped. Keys with
/// `hi == 0` evaluate plain Philox4x32-10.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Key128 {
    pub hi: u64,
    pub lo: u64,
}

impl Key128 {
    pub const fn new(hi: u64, lo: u64) -> Self {
        Key128 { hi, lo }
    }

    pub const fn from_u128(v: u128) -> Self {
        Key128 { hi: (v >> 64) as u64, lo: v as u64 }
    }

    pub const fn to_u128(self) -> u128 {
        ((self.hi as u128) << 64) | self.lo as u128
    }

    fn philox_key(self) -> [u32; 2] {
        [self.lo as u32, (self.lo >> 32) as u32]
    }
}

/// 128-bit counter as four 32-bit words, word 0 least significant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Counter128(pub [u32; 4]);

impl Counter128 {
    pub const fn from_u128(v: u128) -> Self {
        Counter128([v as u32, (v >> 32) as u32, (v >> 64) as u32, (v >> 96) as u32])
    }

    pub const fn to_u128(self) -> u128 {
        let w = self.0;
        (w[0] as u128) | ((w[1] as u128) << 32) | ((w[2] as u128) << 64) | ((w[3] as u128) << 96)
    }

    pub fn words(self) -> [u32; 4] {
        self.0
    }
}

impl std::ops::BitXor for Counter128 {
    type Output = Counter128;

    fn bitxor(self, rhs: Counter128) -> Counter128 {
        let (a, b) = (self.0, rhs.0);
        Counter128([a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2], a[3] ^ b[3]])
    }
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = u64::from(a) * u64::from(b);
    ((prod >> 32) as u32, prod as u32)
}

#[inline]
fn round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M4X32_0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M4X32_1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

#[inline]
fn bump(key: [u32; 2]) -> [u32; 2] {
    [key[0].wrapping_add(PHILOX_W32_0), key[1].wrapping_add(PHILOX_W32_1)]
}

/// Plain Philox4x32-10 on raw words, in the word order of the published
/// known-answer vectors.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = round(ctr, key);
    let mut key = key;
    for _ in 1..PHILOX_ROUNDS {
        key = bump(key);
        ctr = round(ctr, key);
    }
    ctr
}

/// One generator block for `(key, counter)`.
pub fn philox_block(key: Key128, counter: Counter128) -> [u32; 4] {
    let c = counter.0;
    let whitened = [c[0], c[1], c[2] ^ key.hi as u32, c[3] ^ (key.hi >> 32) as u32];
    philox4x32_10(whitened, key.philox_key())
}

/// A real in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct UnitUniform(f64);

impl UnitUniform {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..1.0).contains(&value) {
            Ok(UnitUniform(value))
        } else {
            Err(Error::InvalidDistribution(format!("uniform {value} outside [0, 1)")))
        }
    }

    /// Maps a 64-bit integer to `w * 2^-64`, truncated onto the 53-bit grid
    /// so the result is always strictly below 1.
    pub fn from_u64(w: u64) -> Self {
        UnitUniform((w >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
    }

    /// Uniform from the high 64 bits (words 3 and 2) of a block.
    pub fn from_block(block: [u32; 4]) -> Self {
        to_unit_uniform(block[3], block[2])
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<UnitUniform> for f64 {
    fn from(u: UnitUniform) -> f64 {
        u.0
    }
}

/// `hi:lo` as a 64-bit integer scaled into `[0, 1)`; monotone in that integer.
pub fn to_unit_uniform(hi: u32, lo: u32) -> UnitUniform {
    UnitUniform::from_u64((u64::from(hi) << 32) | u64::from(lo))
}

/// Distributions sampled by inverse CDF from a single uniform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Bernoulli {
        p: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Integers `0..n`.
    DiscreteUniform {
        n: u64,
    },
    /// Failures before the first success.
    Geometric {
        p: f64,
    },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Distribution::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Distribution::DiscreteUniform { n } => n >= 1,
            // p = 0 never succeeds, so it has no finite inverse CDF.
            Distribution::Geometric { p } => p > 0.0 && p <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!("{self:?}")))
        }
    }

    /// Inverse-CDF transform. Parameters must already be valid.
    pub fn quantile(&self, u: UnitUniform) -> f64 {
        let u = u.value();
        match *self {
            Distribution::Bernoulli { p } => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Exponential { rate } => -(-u).ln_1p() / rate,
            Distribution::DiscreteUniform { n } => ((u * n as f64).floor()).min((n - 1) as f64),
            Distribution::Geometric { p } => {
                if p >= 1.0 {
                    0.0
                } else {
                    ((-u).ln_1p() / (-p).ln_1p()).floor()
                }
            }
        }
    }
}

/// Samples `dist` from exactly one uniform.
pub fn sample_fixed(dist: &Distribution, u: UnitUniform) -> Result<f64> {
    dist.validate()?;
    Ok(dist.quantile(u))
}
