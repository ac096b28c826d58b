//! Append-style embedding of a payload after a carrier file.
//!
//! ```text
//! carrier | payload | payload_len u64 BE | "ETEASTEG"
//! ```
//!
//! The carrier bytes are never touched. Most video containers (MP4, AVI,
//! MKV) stop parsing at the end of their own structures, so players ignore
//! the appended bytes. The fixed trailer magic is trivially detectable; this
//! hides a payload from a casual look at the file, not from analysis.

use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"ETEASTEG";
pub const TRAILER_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StegoError {
    #[error("carrier is empty")]
    EmptyCarrier,
    #[error("carrier already carries an embedded payload (use force to embed again)")]
    AlreadyEmbedded,
    #[error("no embedded payload found")]
    NoMagic,
    #[error("trailer claims {claimed} payload bytes but only {available} precede it")]
    CorruptTrailer { claimed: u64, available: u64 },
}

/// Returns true if `data` ends with a stego trailer magic.
pub fn has_trailer(data: &[u8]) -> bool {
    data.len() >= TRAILER_LEN && data.ends_with(&MAGIC)
}

/// Appends `payload` and a trailer to `carrier`.
///
/// Embedding into a file that already ends with a trailer is refused unless
/// `force` is set, in which case the new payload becomes the outermost one.
pub fn embed(carrier: &[u8], payload: &[u8], force: bool) -> Result<Vec<u8>, StegoError> {
    if carrier.is_empty() {
        return Err(StegoError::EmptyCarrier);
    }
    if !force && has_trailer(carrier) {
        return Err(StegoError::AlreadyEmbedded);
    }
    let mut out = Vec::with_capacity(carrier.len() + payload.len() + TRAILER_LEN);
    out.extend_from_slice(carrier);
    out.extend_from_slice(payload);
    out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    out.extend_from_slice(&MAGIC);
    Ok(out)
}

/// Splits a stego file into `(carrier, payload)` without copying.
pub fn extract(stego: &[u8]) -> Result<(&[u8], &[u8]), StegoError> {
    if !has_trailer(stego) {
        return Err(StegoError::NoMagic);
    }
    let body_end = stego.len() - TRAILER_LEN;
    let claimed = u64::from_be_bytes(stego[body_end..body_end + 8].try_into().unwrap());
    if claimed > body_end as u64 {
        return Err(StegoError::CorruptTrailer {
            claimed,
            available: body_end as u64,
        });
    }
    let split = body_end - claimed as usize;
    Ok((&stego[..split], &stego[split..body_end]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_payload() {
        let carrier = vec![7u8; 100];
        let out = embed(&carrier, &[], false).unwrap();
        assert_eq!(out.len(), 116);
        let (c, p) = extract(&out).unwrap();
        assert_eq!(c, &carrier[..]);
        assert!(p.is_empty());
    }

    #[test]
    fn errors() {
        assert_eq!(embed(&[], b"x", false), Err(StegoError::EmptyCarrier));
        assert_eq!(
            extract(b"\x00\x00\x00\x18ftypisom plain video"),
            Err(StegoError::NoMagic)
        );
        assert_eq!(extract(b"ETEASTEG"), Err(StegoError::NoMagic));

        let mut forged = vec![1u8; 4];
        forged.extend_from_slice(&100u64.to_be_bytes());
        forged.extend_from_slice(&MAGIC);
        assert_eq!(
            extract(&forged),
            Err(StegoError::CorruptTrailer {
                claimed: 100,
                available: 4
            })
        );
    }

    #[test]
    fn truncation_never_yields_payload() {
        let out = embed(b"carrier bytes", b"payload", false).unwrap();
        for cut in 1..out.len() {
            assert!(extract(&out[..out.len() - cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn double_embed_guard() {
        let once = embed(b"video", b"inner", false).unwrap();
        assert_eq!(
            embed(&once, b"outer", false),
            Err(StegoError::AlreadyEmbedded)
        );
        let twice = embed(&once, b"outer", true).unwrap();
        let (c, p) = extract(&twice).unwrap();
        assert_eq!(p, b"outer");
        assert_eq!(c, &once[..]);
        assert_eq!(extract(c).unwrap().1, b"inner");
    }

    proptest! {
        #[test]
        fn roundtrip(carrier in proptest::collection::vec(any::<u8>(), 1..512),
                     payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            prop_assume!(!has_trailer(&carrier));
            let out = embed(&carrier, &payload, false).unwrap();
            prop_assert_eq!(out.len(), carrier.len() + payload.len() + TRAILER_LEN);
            prop_assert_eq!(&out[..carrier.len()], &carrier[..]);
            let (c, p) = extract(&out).unwrap();
            prop_assert_eq!(c, &carrier[..]);
            prop_assert_eq!(p, &payload[..]);
        }
    }
}
