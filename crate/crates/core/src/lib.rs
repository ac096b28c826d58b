//! ETEA: a TEA-family block cipher, a sealed payload container, append-style
//! carrier embedding, and a threaded TCP file transfer.
//!
//! The sending side runs [`codec::seal`] then [`stego::embed`] and ships the
//! result with [`transfer::send_file`]. The receiving side runs
//! [`transfer::serve`], then [`stego::extract`] and [`codec::open`]. The key
//! is shared out of band.

pub mod analysis;
pub mod cipher;
pub mod codec;
pub mod keyfile;
pub mod stego;
pub mod transfer;

pub use cipher::{decrypt_block, encrypt_block, Block64, Key128};
pub use codec::{open, seal, CodecError, SealedPayload};
pub use stego::{embed, extract, StegoError};
pub use transfer::TransferError;
