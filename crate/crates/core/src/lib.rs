//! Symbol-distribution toolkit for learned joint source-channel codecs.
//!
//! - [`dist`]: variance-normalized Student's t with Gaussian/Cauchy limits
//! - [`estimate`]: KDE, tail-index MLE, NLL scoring, QQ data
//! - [`maxent`]: payload surrogate and the maximum-entropy solver
//! - [`channel`]: power normalization, AWGN, CBR, mutual information
//! - [`toyjscc`]: a small trainable encoder/channel/decoder
//! - [`cli`]: command implementations behind the `symtail` binary

pub mod batch;
pub mod channel;
pub mod cli;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod maxent;
mod par;
pub mod quad;
pub mod special;
pub mod toyjscc;

pub use batch::SymbolBatch;
pub use dist::{ScaledTailLaw, TailModel};
pub use error::{Error, Result};
