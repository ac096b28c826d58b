//! Empirical checks of the cipher's keyspace and diffusion.
//!
//! Every trial draws from its own ChaCha stream (seed, stream = trial index),
//! so results do not depend on how the trials are scheduled across threads.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cipher::{encrypt_block, encrypt_block_cycles, Block64, Key128, CYCLES};

const MSB: u32 = 0x8000_0000;

/// The four keys equivalent to `key`, `key` itself first.
pub fn equivalent_keys(key: &Key128) -> [Key128; 4] {
    key.equivalents()
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvalancheReport {
    pub trials: u64,
    pub cycles: u32,
    pub mean_flipped_bits: f64,
    pub stddev: f64,
    /// `histogram[n]` counts trials where exactly `n` ciphertext bits changed.
    pub histogram: [u64; 65],
}

impl AvalancheReport {
    fn from_counts(counts: &[u8], cycles: u32) -> Self {
        let mut histogram = [0u64; 65];
        for &c in counts {
            histogram[c as usize] += 1;
        }
        let n = counts.len() as f64;
        let (sum, sum_sq) =
            histogram
                .iter()
                .enumerate()
                .fold((0u64, 0u64), |(s, sq), (bits, &cnt)| {
                    let b = bits as u64;
                    (s + b * cnt, sq + b * b * cnt)
                });
        let mean = sum as f64 / n;
        let var = (sum_sq as f64 / n - mean * mean).max(0.0);
        AvalancheReport {
            trials: counts.len() as u64,
            cycles,
            mean_flipped_bits: mean,
            stddev: var.sqrt(),
            histogram,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "avalanche trials: {}", self.trials).unwrap();
        writeln!(s, "cycles: {}", self.cycles).unwrap();
        writeln!(s, "mean flipped bits: {:.4}", self.mean_flipped_bits).unwrap();
        writeln!(s, "stddev: {:.4}", self.stddev).unwrap();
        for (bits, &count) in self.histogram.iter().enumerate().filter(|(_, &c)| c > 0) {
            writeln!(s, "flipped {bits:2}: {count}").unwrap();
        }
        s
    }

    /// `section,name,value` rows: summary statistics then all 65 bins.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,name,value\n");
        writeln!(s, "stat,trials,{}", self.trials).unwrap();
        writeln!(s, "stat,cycles,{}", self.cycles).unwrap();
        writeln!(s, "stat,mean_flipped_bits,{}", self.mean_flipped_bits).unwrap();
        writeln!(s, "stat,stddev,{}", self.stddev).unwrap();
        for (bits, count) in self.histogram.iter().enumerate() {
            writeln!(s, "histogram,{bits},{count}").unwrap();
        }
        s
    }
}

/// Avalanche over the full cipher. See [`avalanche_cycles`].
pub fn avalanche(trials: u64, seed: u64) -> AvalancheReport {
    avalanche_cycles(trials, seed, CYCLES)
}

/// For each trial: random key and block, flip one random plaintext bit, and
/// count how many ciphertext bits change.
///
/// # Panics
/// If `trials` is zero.
pub fn avalanche_cycles(trials: u64, seed: u64, cycles: u32) -> AvalancheReport {
    assert!(trials >= 1, "avalanche needs at least one trial");
    let counts: Vec<u8> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let key = Key128(rng.gen());
            let pt: u64 = rng.gen();
            let bit = rng.gen_range(0..64);
            let a = encrypt_block_cycles(Block64::from_u64(pt), &key, cycles);
            let b = encrypt_block_cycles(Block64::from_u64(pt ^ (1 << bit)), &key, cycles);
            (a.to_u64() ^ b.to_u64()).count_ones() as u8
        })
        .collect();
    AvalancheReport::from_counts(&counts, cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub keys: u64,
    pub blocks_per_key: u64,
    /// (key, block) pairs where some member of the class disagreed.
    pub class_mismatches: u64,
    /// (key, block) pairs where flipping only MSB(K[0]) changed the ciphertext.
    pub single_flip_differs: u64,
}

impl EquivalenceReport {
    pub fn pairs(&self) -> u64 {
        self.keys * self.blocks_per_key
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "equivalent-key pairs tested: {}", self.pairs()).unwrap();
        writeln!(s, "class mismatches: {}", self.class_mismatches).unwrap();
        writeln!(
            s,
            "single MSB(K[0]) flip changed ciphertext: {}/{}",
            self.single_flip_differs,
            self.pairs()
        )
        .unwrap();
        s
    }
}

/// Encrypts `blocks_per_key` random blocks under each of `keys` random keys
/// and all of their equivalents, plus the single-bit control key.
pub fn check_equivalent_keys(keys: u64, blocks_per_key: u64, seed: u64) -> EquivalenceReport {
    let (class_mismatches, single_flip_differs) = (0..keys)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let key = Key128(rng.gen());
            let class = equivalent_keys(&key);
            let mut control = key;
            control.0[0] ^= MSB;
            let mut mismatches = 0u64;
            let mut differs = 0u64;
            for _ in 0..blocks_per_key {
                let b = Block64::from_u64(rng.gen());
                let ct = encrypt_block(b, &key);
                if class.iter().any(|eq| encrypt_block(b, eq) != ct) {
                    mismatches += 1;
                }
                if encrypt_block(b, &control) != ct {
                    differs += 1;
                }
            }
            (mismatches, differs)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    EquivalenceReport {
        keys,
        blocks_per_key,
        class_mismatches,
        single_flip_differs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_key_class() {
        let class = equivalent_keys(&Key128::default());
        assert_eq!(class[0], Key128::default());
        assert!(class.contains(&Key128([MSB, MSB, 0, 0])));
        assert!(class.contains(&Key128([0, 0, MSB, MSB])));
        assert!(class.contains(&Key128([MSB; 4])));
    }

    #[test]
    fn zero_cycles_flip_one_bit() {
        let r = avalanche_cycles(1, 5, 0);
        assert_eq!(r.trials, 1);
        assert_eq!(r.histogram[1], 1);
        assert_eq!(r.mean_flipped_bits, 1.0);
        assert_eq!(r.stddev, 0.0);
    }

    #[test]
    fn histogram_sums_to_trials() {
        let r = avalanche(500, 11);
        assert_eq!(r.histogram.iter().sum::<u64>(), 500);
        assert!((0.0..=64.0).contains(&r.mean_flipped_bits));
    }

    #[test]
    fn seeded_runs_repeat() {
        assert_eq!(avalanche(300, 42), avalanche(300, 42));
        assert_ne!(avalanche(300, 42).histogram, avalanche(300, 43).histogram);
    }

    #[test]
    fn parallel_matches_sequential() {
        let seq: Vec<u8> = (0..200)
            .map(|t| {
                let mut rng = trial_rng(9, t);
                let key = Key128(rng.gen());
                let pt: u64 = rng.gen();
                let bit: u32 = rng.gen_range(0..64);
                let a = encrypt_block(Block64::from_u64(pt), &key);
                let b = encrypt_block(Block64::from_u64(pt ^ (1 << bit)), &key);
                (a.to_u64() ^ b.to_u64()).count_ones() as u8
            })
            .collect();
        assert_eq!(
            AvalancheReport::from_counts(&seq, CYCLES),
            avalanche(200, 9)
        );
    }

    #[test]
    fn equivalence_small_run() {
        let r = check_equivalent_keys(20, 20, 3);
        assert_eq!(r.class_mismatches, 0);
        assert!(r.single_flip_differs >= 396);
    }

    #[test]
    fn csv_has_all_bins() {
        let csv = avalanche(10, 1).to_csv();
        assert_eq!(
            csv.lines().filter(|l| l.starts_with("histogram,")).count(),
            65
        );
    }
}
