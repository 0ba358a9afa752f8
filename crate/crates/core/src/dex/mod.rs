//! Dalvik bytecode decoding: raw `.dex` containers and smali text both
//! reduce to a 256-bin opcode histogram.

mod decode;
mod file;
mod opcodes;
mod smali;

pub use decode::{decode_instruction, Decoded, PayloadKind};
pub use file::{parse_dex, parse_dex_with_id};
pub use opcodes::{mnemonics, opcode_table, Format, OpcodeInfo, OpcodeTable};
pub use smali::{parse_smali, render_smali, SmaliParse};

use std::fmt;
use std::ops::AddAssign;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors from decoding DEX containers and instruction streams.
///
/// Offsets are byte offsets into the file, except for
/// [`DexError::TruncatedStream`] which reports code-unit indices.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DexError {
    #[error("bad magic at offset 0: {0}")]
    BadMagic(String),
    #[error("file truncated: need {needed} bytes at offset {offset}, file has {len}")]
    TruncatedFile { offset: usize, needed: usize, len: usize },
    #[error("{what} offset {offset:#x} outside file of {len} bytes")]
    MalformedOffset {
        what: &'static str,
        offset: usize,
        len: usize,
    },
    #[error("instruction at unit {at} needs {width} units, {remaining} remain")]
    TruncatedStream { at: usize, width: usize, remaining: usize },
}

impl DexError {
    /// Byte offset (or code-unit index for stream errors) the error refers to.
    pub fn offset(&self) -> usize {
        match self {
            DexError::BadMagic(_) => 0,
            DexError::TruncatedFile { offset, .. } => *offset,
            DexError::MalformedOffset { offset, .. } => *offset,
            DexError::TruncatedStream { at, .. } => *at,
        }
    }
}

/// A structured parse diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Byte offset for DEX input, 1-based line number for smali input.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.offset, self.message)
    }
}

/// Per-application opcode counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeHistogram {
    pub app_id: String,
    counts: [u64; 256],
    total: u64,
}

impl Default for OpcodeHistogram {
    fn default() -> Self {
        Self::new("")
    }
}

impl OpcodeHistogram {
    pub fn new(app_id: impl Into<String>) -> Self {
        OpcodeHistogram {
            app_id: app_id.into(),
            counts: [0; 256],
            total: 0,
        }
    }

    pub fn from_counts(app_id: impl Into<String>, counts: [u64; 256]) -> Self {
        let total = counts.iter().sum();
        OpcodeHistogram {
            app_id: app_id.into(),
            counts,
            total,
        }
    }

    pub fn add(&mut self, opcode: u8) {
        self.add_n(opcode, 1);
    }

    pub fn add_n(&mut self, opcode: u8, n: u64) {
        self.counts[opcode as usize] += n;
        self.total += n;
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn count(&self, opcode: u8) -> u64 {
        self.counts[opcode as usize]
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

impl AddAssign<&OpcodeHistogram> for OpcodeHistogram {
    fn add_assign(&mut self, rhs: &OpcodeHistogram) {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts.iter()) {
            *a += *b;
        }
        self.total += rhs.total;
    }
}

pub(crate) fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
