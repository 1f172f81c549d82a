//! Seeded pseudo-random stream backed by xoshiro256++.
//!
//! Seeds are expanded into generator state with SplitMix64 (the reference
//! seeding procedure for the xoshiro family), so a given `u64` seed yields
//! the same stream on every platform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

pub const ALGORITHM: &str = "xoshiro256++";

#[derive(Debug, Clone)]
pub struct Prng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Child stream for independent work: seeded with `seed ^ index`.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi); returns `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::Range { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        let v = lo + (hi - lo) * self.next_f64();
        Ok(if v >= hi { hi.next_down() } else { v })
    }

    /// Uniform index in [0, n) by 128-bit multiply-shift.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
