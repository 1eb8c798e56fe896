//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, stream, index)`, so simulated
//! series are identical on every platform and can be regenerated by any
//! implementation of the same algorithm:
//!
//! * key    = `[seed as u32, (seed >> 32) as u32]`
//! * counter = `[block as u32, (block >> 32) as u32, stream as u32, (stream >> 32) as u32]`
//! * 10 Philox rounds with multipliers `0xD2511F53`, `0xCD9E8D57` and
//!   Weyl key increments `0x9E3779B9`, `0xBB67AE85`.
//!
//! Each block yields four 32-bit words, consumed as two 64-bit words
//! `(w0 << 32) | w1` and `(w2 << 32) | w3`. A uniform in the open interval
//! (0, 1) takes the top 53 bits `k` of a 64-bit word and returns
//! `(k + 0.5) / 2^53`. Normal variates are `gaussian_quantile(uniform)`.

use crate::special::gaussian_quantile;

/// Version tag of the generator layout described above.
pub const GENERATOR: &str = "philox4x32-10/v1";

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The raw Philox4x32 block function with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        if round < 9 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
    }
    c
}

/// A sequential reader over one Philox stream.
#[derive(Debug, Clone)]
pub struct Philox {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buffer: [u32; 4],
    // number of 64-bit words already consumed from `buffer` (0..=2)
    used: u8,
}

impl Philox {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            stream,
            block: 0,
            buffer: [0; 4],
            used: 2,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.used == 2 {
            let ctr = [
                self.block as u32,
                (self.block >> 32) as u32,
                self.stream as u32,
                (self.stream >> 32) as u32,
            ];
            self.buffer = philox4x32_10(ctr, self.key);
            self.block = self.block.wrapping_add(1);
            self.used = 0;
        }
        let i = 2 * self.used as usize;
        self.used += 1;
        (u64::from(self.buffer[i]) << 32) | u64::from(self.buffer[i + 1])
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let k = self.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw by inversion.
    pub fn normal(&mut self) -> f64 {
        gaussian_quantile(self.uniform()).expect("uniform draw lies in (0, 1)")
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift; `n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = u128::from(x) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derives an independent 64-bit seed from a base seed and a path of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut seed = base;
    for &tag in tags {
        let out = philox4x32_10(
            [tag as u32, (tag >> 32) as u32, 0x5EED_0001, 0],
            [seed as u32, (seed >> 32) as u32],
        );
        seed = (u64::from(out[0]) << 32) | u64::from(out[1]);
    }
    seed
}
