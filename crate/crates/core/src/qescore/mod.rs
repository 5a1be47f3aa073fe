//! Quality estimation: the oracle scorer, a cache, the remote client and a
//! mock service speaking the same JSON protocol.

mod remote;
mod score;
mod server;
pub mod wire;

pub use remote::{RemoteConfig, RemoteScorer};
pub use score::{
    levenshtein, oracle_qe, prefer, prefers, CachedScorer, OracleScorer, QeItem, QeScore, QeScorer,
};
pub use server::{FaultPlan, MockQeServer, ServerHandle, ServerStats};
