//! Bytecode skeletons, code families and tool-agreement analytics for EVM
//! contracts.
//!
//! The pipeline runs bottom-up: [`disasm`] decodes instructions, [`metadata`]
//! finds compiler metadata, [`skeleton`] canonicalizes codes, [`corpus`]
//! groups deployments into families and bins them by block height, and
//! [`findings`] plus [`overlap`] turn normalized tool runs into SWC-level
//! agreement statistics.

pub mod bins;
pub mod cbor;
pub mod corpus;
pub mod disasm;
pub mod error;
pub mod findings;
pub mod hexcode;
pub mod metadata;
pub mod opcodes;
pub mod overlap;
pub mod skeleton;

pub use error::{AnalyticsError, CorpusError, TableError};
