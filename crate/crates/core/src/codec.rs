//! Sealed payload container.
//!
//! Byte layout (all integers big-endian):
//!
//! ```text
//! "ETEA" | version u8 | original_length u64 | ciphertext (8n bytes, n >= 1) | crc32
//! ```
//!
//! The CRC-32 covers every byte before it. It detects corruption and wrong
//! inputs; it is not a MAC and gives no protection against deliberate
//! tampering. Blocks are encrypted independently (ECB), so equal plaintext
//! blocks produce equal ciphertext blocks and the length of the message
//! is visible.

use rayon::prelude::*;
use thiserror::Error;

use crate::cipher::{decrypt_block, encrypt_block, Block64, Key128, BLOCK_LEN};

pub const MAGIC: [u8; 4] = *b"ETEA";
pub const VERSION: u8 = 1;
/// magic + version + original_length
pub const HEADER_LEN: usize = 4 + 1 + 8;
pub const CHECKSUM_LEN: usize = 4;
/// Smallest valid container: header, one block, checksum.
pub const MIN_LEN: usize = HEADER_LEN + BLOCK_LEN + CHECKSUM_LEN;

// Payloads at least this large are encrypted on the rayon pool.
const PARALLEL_THRESHOLD: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("not a sealed payload (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("sealed payload is truncated or malformed ({0} bytes)")]
    Truncated(usize),
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    BadChecksum { stored: u32, computed: u32 },
    #[error("bad padding after decryption (wrong key or tampered data)")]
    BadPadding,
    #[error("original length {original} is inconsistent with {ciphertext} ciphertext bytes")]
    LengthMismatch { original: u64, ciphertext: usize },
}

/// Appends 1..=8 bytes, each equal to the number of bytes added.
pub fn pad(data: &[u8]) -> Vec<u8> {
    let n = BLOCK_LEN - data.len() % BLOCK_LEN;
    let mut out = Vec::with_capacity(data.len() + n);
    out.extend_from_slice(data);
    out.resize(data.len() + n, n as u8);
    out
}

/// Strips padding added by [`pad`], checking every pad byte.
pub fn unpad(data: &[u8]) -> Result<&[u8], CodecError> {
    if data.is_empty() || !data.len().is_multiple_of(BLOCK_LEN) {
        return Err(CodecError::BadPadding);
    }
    let n = *data.last().unwrap() as usize;
    if n == 0 || n > BLOCK_LEN || data[data.len() - n..].iter().any(|&b| b as usize != n) {
        return Err(CodecError::BadPadding);
    }
    Ok(&data[..data.len() - n])
}

fn ecb_apply(buf: &mut [u8], f: impl Fn(Block64) -> Block64 + Sync) {
    debug_assert!(buf.len().is_multiple_of(BLOCK_LEN));
    let one = |chunk: &mut [u8]| {
        let b = Block64::from_bytes(chunk.try_into().unwrap());
        chunk.copy_from_slice(&f(b).to_bytes());
    };
    if buf.len() >= PARALLEL_THRESHOLD {
        buf.par_chunks_exact_mut(BLOCK_LEN).for_each(one);
    } else {
        buf.chunks_exact_mut(BLOCK_LEN).for_each(one);
    }
}

/// Encrypts whole 8-byte blocks in place.
pub fn ecb_encrypt(buf: &mut [u8], key: &Key128) {
    ecb_apply(buf, |b| encrypt_block(b, key));
}

/// Decrypts whole 8-byte blocks in place.
pub fn ecb_decrypt(buf: &mut [u8], key: &Key128) {
    ecb_apply(buf, |b| decrypt_block(b, key));
}

/// A parsed container. The checksum is kept as read; [`open`] verifies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedPayload {
    pub version: u8,
    pub original_length: u64,
    pub ciphertext: Vec<u8>,
    pub checksum: u32,
}

impl SealedPayload {
    fn crc_of(version: u8, original_length: u64, ciphertext: &[u8]) -> u32 {
        let mut h = crc32fast::Hasher::new();
        h.update(&MAGIC);
        h.update(&[version]);
        h.update(&original_length.to_be_bytes());
        h.update(ciphertext);
        h.finalize()
    }

    /// CRC-32 over the container as it currently stands.
    pub fn computed_checksum(&self) -> u32 {
        Self::crc_of(self.version, self.original_length, &self.ciphertext)
    }

    pub fn verify_checksum(&self) -> Result<(), CodecError> {
        let computed = self.computed_checksum();
        if computed != self.checksum {
            return Err(CodecError::BadChecksum {
                stored: self.checksum,
                computed,
            });
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.ciphertext.len() + CHECKSUM_LEN
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.original_length.to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out
    }

    /// Structural parse only; neither the CRC nor the version is checked.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
            return Err(CodecError::BadMagic);
        }
        if bytes.len() < MIN_LEN {
            return Err(CodecError::Truncated(bytes.len()));
        }
        let version = bytes[4];
        let original_length = u64::from_be_bytes(bytes[5..13].try_into().unwrap());
        let ct_end = bytes.len() - CHECKSUM_LEN;
        let ciphertext = &bytes[HEADER_LEN..ct_end];
        if !ciphertext.len().is_multiple_of(BLOCK_LEN) {
            return Err(CodecError::Truncated(bytes.len()));
        }
        let checksum = u32::from_be_bytes(bytes[ct_end..].try_into().unwrap());
        Ok(SealedPayload {
            version,
            original_length,
            ciphertext: ciphertext.to_vec(),
            checksum,
        })
    }
}

/// Pads, encrypts block by block and frames `plaintext`.
pub fn seal(plaintext: &[u8], key: &Key128) -> SealedPayload {
    let mut ciphertext = pad(plaintext);
    ecb_encrypt(&mut ciphertext, key);
    let original_length = plaintext.len() as u64;
    let checksum = SealedPayload::crc_of(VERSION, original_length, &ciphertext);
    SealedPayload {
        version: VERSION,
        original_length,
        ciphertext,
        checksum,
    }
}

/// Verifies, decrypts and unpads a container.
pub fn open(sealed: &SealedPayload, key: &Key128) -> Result<Vec<u8>, CodecError> {
    sealed.verify_checksum()?;
    if sealed.version != VERSION {
        return Err(CodecError::UnsupportedVersion(sealed.version));
    }
    let ct_len = sealed.ciphertext.len();
    if ct_len == 0 || !ct_len.is_multiple_of(BLOCK_LEN) {
        return Err(CodecError::Truncated(sealed.encoded_len()));
    }
    let mismatch = CodecError::LengthMismatch {
        original: sealed.original_length,
        ciphertext: ct_len,
    };
    // The header alone must already agree with the padded length.
    let ol = sealed.original_length;
    if ol >= ct_len as u64 || ol + (BLOCK_LEN as u64) < ct_len as u64 {
        return Err(mismatch);
    }
    let mut buf = sealed.ciphertext.clone();
    ecb_decrypt(&mut buf, key);
    let plain_len = unpad(&buf)?.len();
    if plain_len as u64 != ol {
        return Err(mismatch);
    }
    buf.truncate(plain_len);
    Ok(buf)
}

/// Parses and opens a serialized container.
pub fn open_bytes(bytes: &[u8], key: &Key128) -> Result<Vec<u8>, CodecError> {
    open(&SealedPayload::from_bytes(bytes)?, key)
}
