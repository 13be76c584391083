//! Deterministic simulator for permissionless longest-chain total-order
//! broadcast.
//!
//! Block production is mediated by a resource allocator: proof of work
//! (external, burnable), proof of stake (virtual, reusable) or proof of
//! space (external, reusable). Correct processes run the longest-chain
//! protocol over a gossip network with bounded delay; an adversary module
//! drives Byzantine processes through private, long-range,
//! nothing-at-stake and resource-bleeding attacks; the analysis module
//! checks the resulting traces for common-prefix, liveness and
//! total-order violations.

pub mod adversary;
pub mod allocator;
pub mod analysis;
pub mod block;
pub mod chain;
mod codec;
pub mod config;
pub mod engine;
pub mod hash;
pub mod network;
pub mod protocol;
pub mod report;
pub mod scenario;
pub mod sig;
pub mod tx;

pub use block::{Block, Commitment};
pub use chain::{validate_chain, validate_txs, Chain, ChainIndex, ValidationCtx};
pub use codec::DecodeError;
pub use hash::{Digest, Oracle};
pub use sig::{SigRegistry, Signature, SigningKey};
pub use tx::{Ledger, ProcessId, Transaction, TxError, TxKind};
pub use config::{ConfigError, ScenarioConfig};
pub use engine::{AllocatorKind, Sim, SimConfig};
pub use report::{to_csv, write_report, CSV_HEADER};
pub use scenario::{run_scenario, RunReport};
