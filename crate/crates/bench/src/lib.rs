//! Shared helpers for the benchmark targets.

use tcd_npe_core::bitmac::FixedWord;

/// Deterministic operand stream for MAC benchmarks.
pub fn stream(len: usize, seed: u64) -> Vec<(FixedWord, FixedWord)> {
    // Cheap xorshift keeps the generator out of the measured loop's way.
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state as i16
    };
    (0..len)
        .map(|_| (FixedWord::new(next()), FixedWord::new(next())))
        .collect()
}
