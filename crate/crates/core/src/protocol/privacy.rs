//! Key discretization, oracle reconciliation and Toeplitz privacy
//! amplification.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Bits emitted per retained measurement.
pub const KEY_BITS_PER_SAMPLE: usize = 5;
/// Half-width of the binning range, in standard deviations.
pub const BIN_RANGE_SIGMA: f64 = 8.0;

/// Uniform `2^5`-level binning of each value over `±8σ`, most significant
/// bit first. Values outside the range fall into the edge bins.
pub fn discretize(values: &[f64], sigma: f64) -> Vec<bool> {
    let levels = 1usize << KEY_BITS_PER_SAMPLE;
    let span = 2.0 * BIN_RANGE_SIGMA * sigma;
    let mut out = Vec::with_capacity(values.len() * KEY_BITS_PER_SAMPLE);
    for &v in values {
        let pos = ((v + BIN_RANGE_SIGMA * sigma) / span * levels as f64).floor();
        let bin = if pos.is_nan() { 0 } else { pos.clamp(0.0, (levels - 1) as f64) as usize };
        for b in (0..KEY_BITS_PER_SAMPLE).rev() {
            out.push((bin >> b) & 1 == 1);
        }
    }
    out
}

/// The `n + m − 1` bits defining an `m × n` Toeplitz matrix, drawn from
/// ChaCha20 keyed by `seed`, least significant bit of each word first.
pub fn toeplitz_diagonals(seed: &[u8; 32], len: usize) -> Vec<bool> {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    let mut bits = Vec::with_capacity(len);
    while bits.len() < len {
        let w = rng.next_u64();
        for b in 0..64 {
            if bits.len() == len {
                break;
            }
            bits.push((w >> b) & 1 == 1);
        }
    }
    bits
}

/// `out = T·x mod 2` with `T[i][j] = s[i − j + n − 1]`, where `s` comes from
/// [`toeplitz_diagonals`] and `n = input.len()`.
pub fn toeplitz_hash(input: &[bool], seed: &[u8; 32], out_len: usize) -> Vec<bool> {
    let n = input.len();
    if out_len == 0 || n == 0 {
        return Vec::new();
    }
    let s = toeplitz_diagonals(seed, n + out_len - 1);
    if n.saturating_mul(out_len) <= 1 << 20 {
        toeplitz_direct(&s, input, out_len)
    } else {
        toeplitz_fft(&s, input, out_len)
    }
}

fn toeplitz_direct(s: &[bool], x: &[bool], m: usize) -> Vec<bool> {
    let n = x.len();
    (0..m)
        .map(|i| {
            x.iter()
                .enumerate()
                .fold(false, |acc, (j, &xj)| acc ^ (xj & s[i + n - 1 - j]))
        })
        .collect()
}

/// Same product as [`toeplitz_direct`], split into input chunks whose
/// contributions are linear convolutions evaluated by FFT.
fn toeplitz_fft(s: &[bool], x: &[bool], m: usize) -> Vec<bool> {
    let n = x.len();
    let chunk = m.max(1 << 14).min(n);
    let size = (m + chunk - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    let mut prod = vec![Complex64::new(0.0, 0.0); size];
    let mut out = vec![false; m];
    let mut start = 0;
    while start < n {
        let b = chunk.min(n - start);
        // s[i − (start + j) + n − 1] = sb[i − j + b − 1] with sb = s[base..].
        let base = n - start - b;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (j, c) in buf.iter_mut().enumerate().take(b) {
            c.re = f64::from(u8::from(x[start + j]));
        }
        for (t, c) in buf.iter_mut().enumerate().take(m + b - 1) {
            c.im = f64::from(u8::from(s[base + t]));
        }
        fwd.process(&mut buf);
        for k in 0..size {
            let a = buf[k];
            let r = buf[(size - k) % size].conj();
            let xk = (a + r) * 0.5;
            let sk = (a - r) * Complex64::new(0.0, -0.5);
            prod[k] = xk * sk;
        }
        inv.process(&mut prod);
        for (i, bit) in out.iter_mut().enumerate() {
            let v = (prod[i + b - 1].re / size as f64).round() as u64;
            *bit ^= v & 1 == 1;
        }
        start += b;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalKeys {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
    pub seed: [u8; 32],
}

/// Reverse reconciliation by oracle: Alice adopts Bob's discretized string,
/// with the leakage charged through β. Both strings are then hashed to
/// `target_len` bits (capped at the input length) with a fresh seed.
pub fn reconcile_and_amplify<R: Rng + ?Sized>(
    alice_raw: &[bool],
    bob_raw: &[bool],
    target_len: usize,
    rng: &mut R,
) -> FinalKeys {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let alice_corrected = oracle_reconcile(alice_raw, bob_raw);
    let len = target_len.min(bob_raw.len());
    FinalKeys {
        alice: toeplitz_hash(&alice_corrected, &seed, len),
        bob: toeplitz_hash(bob_raw, &seed, len),
        seed,
    }
}

/// Alice's string after error correction towards Bob.
pub fn oracle_reconcile(alice_raw: &[bool], bob_raw: &[bool]) -> Vec<bool> {
    debug_assert_eq!(alice_raw.len(), bob_raw.len());
    bob_raw.to_vec()
}

/// Packs bits MSB-first into bytes, zero-padding the last byte.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
        (0..n).map(|_| rng.random()).collect()
    }

    /// Builds the matrix explicitly and multiplies row by row.
    fn matrix_oracle(x: &[bool], seed: &[u8; 32], m: usize) -> Vec<bool> {
        let n = x.len();
        let s = toeplitz_diagonals(seed, n + m - 1);
        let mut t = vec![vec![false; n]; m];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = s[(i as isize - j as isize + n as isize - 1) as usize];
            }
        }
        t.iter()
            .map(|row| row.iter().zip(x).filter(|(a, b)| **a && **b).count() % 2 == 1)
            .collect()
    }

    #[test]
    fn toeplitz_structure() {
        let seed = [9u8; 32];
        let s = toeplitz_diagonals(&seed, 7);
        // unit vectors pick out matrix columns: column j is s[n−1−j .. n−1−j+m]
        for j in 0..4 {
            let mut x = vec![false; 4];
            x[j] = true;
            assert_eq!(toeplitz_hash(&x, &seed, 4), s[3 - j..7 - j].to_vec());
        }
    }

    #[test]
    fn small_hash_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed: [u8; 32] = rng.random();
        let x = random_bits(64, &mut rng);
        assert_eq!(toeplitz_hash(&x, &seed, 32), matrix_oracle(&x, &seed, 32));
    }

    #[test]
    fn fft_path_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m) in [(3000, 700), (40_000, 50), (20_000, 20_000)] {
            let seed: [u8; 32] = rng.random();
            let x = random_bits(n, &mut rng);
            let s = toeplitz_diagonals(&seed, n + m - 1);
            let fast = toeplitz_fft(&s, &x, m);
            assert_eq!(fast, toeplitz_direct(&s, &x, m), "n={n} m={m}");
            if n * m <= 4_000_000 {
                assert_eq!(fast, matrix_oracle(&x, &seed, m));
            }
        }
    }

    #[test]
    fn amplification_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bob = random_bits(4096, &mut rng);
        let alice = random_bits(4096, &mut rng);
        let a = reconcile_and_amplify(&alice, &bob, 128, &mut ChaCha8Rng::seed_from_u64(10));
        let b = reconcile_and_amplify(&alice, &bob, 128, &mut ChaCha8Rng::seed_from_u64(10));
        assert_eq!(a, b);
        assert_eq!(a.alice.len(), 128);
        assert_eq!(a.alice, a.bob);
        let empty = reconcile_and_amplify(&alice, &bob, 0, &mut rng);
        assert!(empty.alice.is_empty() && empty.bob.is_empty());
    }

    #[test]
    fn binning_layout() {
        let bits = discretize(&[-100.0, -8.0, 0.0, 7.99, 100.0], 1.0);
        let bins: Vec<u8> = bits
            .chunks(KEY_BITS_PER_SAMPLE)
            .map(|c| c.iter().fold(0u8, |a, &b| (a << 1) | u8::from(b)))
            .collect();
        assert_eq!(bins, vec![0, 0, 16, 31, 31]);
    }

    #[test]
    fn packing() {
        assert_eq!(pack_bits(&[true, false, false, false, false, false, false, true, true]), vec![0x81, 0x80]);
    }
}
