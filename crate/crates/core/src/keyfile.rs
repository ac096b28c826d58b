//! Text key files: 32 hex digits encoding `K[0]..K[3]` big-endian.
//! Whitespace anywhere in the file is ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cipher::Key128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyFileError {
    #[error("key file must hold 32 hex digits, found {0}")]
    WrongLength(usize),
    #[error("invalid hex digit {0:?} in key file")]
    BadDigit(char),
}

pub fn parse_key(text: &str) -> Result<Key128, KeyFileError> {
    let digits: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(&bad) = digits.iter().find(|c| !c.is_ascii_hexdigit()) {
        return Err(KeyFileError::BadDigit(bad));
    }
    if digits.len() != 32 {
        return Err(KeyFileError::WrongLength(digits.len()));
    }
    let mut words = [0u32; 4];
    for (word, chunk) in words.iter_mut().zip(digits.chunks(8)) {
        let s: String = chunk.iter().collect();
        *word = u32::from_str_radix(&s, 16).expect("validated hex");
    }
    Ok(Key128(words))
}

/// Renders a key as 32 lowercase hex digits and a trailing newline.
pub fn render_key(key: &Key128) -> String {
    let mut s = String::with_capacity(33);
    for w in key.words() {
        write!(s, "{w:08x}").unwrap();
    }
    s.push('\n');
    s
}

/// A fresh key from the operating system RNG.
pub fn generate_key() -> Key128 {
    let mut bytes = [0u8; 16];
    rand::RngCore::fill_bytes(&mut rand::rngs::OsRng, &mut bytes);
    Key128::from_bytes(bytes)
}
