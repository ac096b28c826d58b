//! The ETEA block cipher.
//!
//! A 64-bit Feistel cipher keyed by 128 bits. Each of the 32 cycles updates
//! both halves of the block, so a full encryption is 64 rounds. Halves are
//! combined with the round function output by addition modulo 2^32.
//!
//! Keys come in classes of four equivalent keys (see [`Key128::equivalents`]),
//! which leaves 126 effective key bits.

use std::fmt;

/// Number of Feistel cycles. Each cycle is two rounds.
pub const CYCLES: u32 = 32;

/// Key schedule constant, `floor((sqrt(5) - 1) * 2^31)`.
pub const DELTA: u32 = 0x9E37_79B9;

/// Size of one block in bytes.
pub const BLOCK_LEN: usize = 8;

/// A 128-bit cipher key held as four 32-bit words `K[0]..K[3]`.
///
/// Every bit pattern is a valid key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Key128(pub [u32; 4]);

impl Key128 {
    pub const fn new(words: [u32; 4]) -> Self {
        Key128(words)
    }

    /// Builds a key from 16 bytes, each word big-endian.
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        let mut words = [0u32; 4];
        for (word, chunk) in words.iter_mut().zip(bytes.chunks_exact(4)) {
            *word = u32::from_be_bytes(chunk.try_into().unwrap());
        }
        Key128(words)
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        for (chunk, word) in out.chunks_exact_mut(4).zip(self.0.iter()) {
            chunk.copy_from_slice(&word.to_be_bytes());
        }
        out
    }

    pub fn words(&self) -> [u32; 4] {
        self.0
    }

    /// The four keys that define the same permutation as `self`.
    ///
    /// Flipping the top bit of both words feeding one round function leaves
    /// its output unchanged: the two flips land on the same bit position of
    /// two XORed terms and cancel. The order is `[self, odd pair flipped,
    /// even pair flipped, both pairs flipped]`.
    pub fn equivalents(&self) -> [Key128; 4] {
        const MSB: u32 = 0x8000_0000;
        let [a, b, c, d] = self.0;
        [
            Key128([a, b, c, d]),
            Key128([a ^ MSB, b ^ MSB, c, d]),
            Key128([a, b, c ^ MSB, d ^ MSB]),
            Key128([a ^ MSB, b ^ MSB, c ^ MSB, d ^ MSB]),
        ]
    }
}

// Keys should not end up in logs by accident.
impl fmt::Debug for Key128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Key128(..)")
    }
}

/// The Feistel state: two 32-bit halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Block64 {
    pub left: u32,
    pub right: u32,
}

impl Block64 {
    pub const fn new(left: u32, right: u32) -> Self {
        Block64 { left, right }
    }

    /// Reads a block from 8 bytes: left half first, both big-endian.
    pub fn from_bytes(bytes: [u8; BLOCK_LEN]) -> Self {
        Block64 {
            left: u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            right: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        }
    }

    pub fn to_bytes(self) -> [u8; BLOCK_LEN] {
        let mut out = [0u8; BLOCK_LEN];
        out[..4].copy_from_slice(&self.left.to_be_bytes());
        out[4..].copy_from_slice(&self.right.to_be_bytes());
        out
    }

    pub fn from_u64(v: u64) -> Self {
        Block64 {
            left: (v >> 32) as u32,
            right: v as u32,
        }
    }

    pub fn to_u64(self) -> u64 {
        (u64::from(self.left) << 32) | u64::from(self.right)
    }
}

/// Per-cycle delta sum `i * DELTA mod 2^32` for cycle `i` in `1..=32`.
///
/// `delta_sum(0)` is zero, which is where decryption finishes.
pub const fn delta_sum(cycle: u32) -> u32 {
    cycle.wrapping_mul(DELTA)
}

/// Precomputed delta sums for cycles `1..=32`; index 0 holds cycle 1.
pub const fn delta_schedule() -> [u32; CYCLES as usize] {
    let mut out = [0u32; CYCLES as usize];
    let mut i = 0;
    while i < CYCLES as usize {
        out[i] = delta_sum(i as u32 + 1);
        i += 1;
    }
    out
}

/// The round function `((m << 4) + ka) ^ (m + delta) ^ ((m >> 5) + kb)`.
#[inline]
pub fn round_f(m: u32, ka: u32, kb: u32, delta: u32) -> u32 {
    (m << 4).wrapping_add(ka) ^ m.wrapping_add(delta) ^ (m >> 5).wrapping_add(kb)
}

/// Encrypts with an explicit cycle count.
///
/// Only the analysis code should need anything other than [`CYCLES`];
/// `cycles = 0` is the identity map.
pub fn encrypt_block_cycles(block: Block64, key: &Key128, cycles: u32) -> Block64 {
    let [k0, k1, k2, k3] = key.0;
    let Block64 {
        mut left,
        mut right,
    } = block;
    for cycle in 1..=cycles {
        let delta = delta_sum(cycle);
        left = left.wrapping_add(round_f(right, k0, k1, delta));
        right = right.wrapping_add(round_f(left, k2, k3, delta));
    }
    Block64 { left, right }
}

/// Inverse of [`encrypt_block_cycles`] for the same cycle count.
pub fn decrypt_block_cycles(block: Block64, key: &Key128, cycles: u32) -> Block64 {
    let [k0, k1, k2, k3] = key.0;
    let Block64 {
        mut left,
        mut right,
    } = block;
    for cycle in (1..=cycles).rev() {
        let delta = delta_sum(cycle);
        right = right.wrapping_sub(round_f(left, k2, k3, delta));
        left = left.wrapping_sub(round_f(right, k0, k1, delta));
    }
    Block64 { left, right }
}

/// Encrypts one block with the full 32 cycles.
#[inline]
pub fn encrypt_block(block: Block64, key: &Key128) -> Block64 {
    encrypt_block_cycles(block, key, CYCLES)
}

/// Decrypts one block with the full 32 cycles.
#[inline]
pub fn decrypt_block(block: Block64, key: &Key128) -> Block64 {
    decrypt_block_cycles(block, key, CYCLES)
}
