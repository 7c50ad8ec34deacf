//! Byte-oriented run-length coding for main-memory transfers.
//!
//! Only the transfer size matters to the energy accounting, so the format
//! is the simplest lossless one: (value, run) byte pairs with runs capped
//! at 255.

use super::NpeError;

/// Encode `data` as (value, run) pairs.
pub fn rlc_encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut iter = data.iter();
    let Some(&first) = iter.next() else {
        return out;
    };
    let mut value = first;
    let mut run: u8 = 1;
    for &byte in iter {
        if byte == value && run < u8::MAX {
            run += 1;
        } else {
            out.push(value);
            out.push(run);
            value = byte;
            run = 1;
        }
    }
    out.push(value);
    out.push(run);
    out
}

/// Decode an encoded stream; rejects odd lengths and zero runs.
pub fn rlc_decode(data: &[u8]) -> Result<Vec<u8>, NpeError> {
    if !data.len().is_multiple_of(2) {
        return Err(NpeError::Rlc(format!("odd length {}", data.len())));
    }
    let mut out = Vec::new();
    for pair in data.chunks_exact(2) {
        let (value, run) = (pair[0], pair[1]);
        if run == 0 {
            return Err(NpeError::Rlc("zero run length".into()));
        }
        out.extend(std::iter::repeat_n(value, run as usize));
    }
    Ok(out)
}

/// Encoded size of `data`, for transfer accounting.
pub fn rlc_encoded_len(data: &[u8]) -> u64 {
    rlc_encode(data).len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        assert_eq!(rlc_encode(&[]), Vec::<u8>::new());
        assert_eq!(rlc_decode(&[]).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn zero_runs_compress() {
        let data = [0u8; 64];
        let enc = rlc_encode(&data);
        assert_eq!(enc, vec![0, 64]);
        assert!(enc.len() < data.len());
        assert_eq!(rlc_decode(&enc).unwrap(), data);
    }

    #[test]
    fn long_runs_split_at_255() {
        let data = vec![7u8; 300];
        let enc = rlc_encode(&data);
        assert_eq!(enc, vec![7, 255, 7, 45]);
        assert_eq!(rlc_decode(&enc).unwrap(), data);
    }

    #[test]
    fn malformed_streams_rejected() {
        assert!(rlc_decode(&[1]).is_err());
        assert!(rlc_decode(&[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(data in proptest::collection::vec(any::<u8>(), 0..2048)) {
            prop_assert_eq!(rlc_decode(&rlc_encode(&data)).unwrap(), data);
        }
    }
}
