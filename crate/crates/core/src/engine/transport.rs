//! In-process transport ledger.
//!
//! Every simulated transmission is recorded so that bandwidth can be
//! accounted and the data-access discipline checked after the fact.

use std::collections::BTreeMap;
use std::fmt;

/// What a transmission carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadKind {
    /// `Q` compressed signal channels (`Σ X_kᵀ y_k`).
    CompressedSignal,
    /// Uncompressed sensor channels forwarded under leaf fallback.
    RawSignal,
    /// Compressed or raw deterministic terms `XᵀB`.
    Deterministic,
    /// `Σ X_kᵀ Γ_k X_k` (or raw `Γ_k` blocks under fallback).
    Gamma,
    /// `Q × Q` update matrix sent from the updating node into a branch.
    GMatrix,
    /// New filter rows sent back to fallback nodes.
    FilterBlock,
}

impl PayloadKind {
    pub fn is_signal(self) -> bool {
        matches!(self, PayloadKind::CompressedSignal | PayloadKind::RawSignal)
    }
}

/// Signal stream a transmission belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    Y,
    V,
    /// Non-signal traffic.
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub sender: usize,
    pub receiver: usize,
    pub kind: PayloadKind,
    pub stream: Stream,
    /// Number of rows (channels) sent.
    pub channels: usize,
    /// Number of columns (time samples, or matrix columns for non-signal
    /// payloads).
    pub samples: usize,
}

impl Transmission {
    /// Scalar entries carried.
    pub fn entries(&self) -> u64 {
        (self.channels * self.samples) as u64
    }
}

/// All transmissions of one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationTransport {
    pub iteration: usize,
    pub updating_node: usize,
    /// Nodes that forwarded raw channels this iteration.
    pub fallback: Vec<usize>,
    /// `Q`.
    pub q: usize,
    /// Channel count of every node.
    pub channels: Vec<usize>,
    /// Neighbours of the updating node in the pruned tree.
    pub neighbors: Vec<usize>,
    pub entries: Vec<Transmission>,
}

impl IterationTransport {
    /// Signal samples (channels × time samples) moved this iteration.
    pub fn signal_samples(&self) -> u64 {
        self.entries.iter().filter(|t| t.kind.is_signal()).map(Transmission::entries).sum()
    }

    /// Every scalar entry moved this iteration.
    pub fn total_entries(&self) -> u64 {
        self.entries.iter().map(Transmission::entries).sum()
    }

    /// Checks the data-access discipline for this iteration.
    pub fn audit(&self) -> Result<(), AuditViolation> {
        let violation = |reason: String| AuditViolation { iteration: self.iteration, reason };
        let mut per_stream: BTreeMap<(usize, Stream), usize> = BTreeMap::new();
        let mut received = 0usize;
        for t in self.entries.iter().filter(|t| t.kind.is_signal()) {
            if t.kind == PayloadKind::RawSignal && !self.fallback.contains(&t.sender) {
                return Err(violation(format!("node {} sent raw channels without fallback", t.sender)));
            }
            *per_stream.entry((t.sender, t.stream)).or_default() += t.channels;
            if t.receiver == self.updating_node && t.stream == Stream::Y {
                received += t.channels;
            }
        }
        for ((sender, stream), channels) in per_stream {
            if channels > self.q {
                return Err(violation(format!("node {sender} sent {channels} channels on {stream:?}, Q = {}", self.q)));
            }
        }
        let budget = self.q * self.neighbors.len();
        if received > budget {
            return Err(violation(format!(
                "updating node {} received {received} channels, budget {budget}",
                self.updating_node
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditViolation {
    pub iteration: usize,
    pub reason: String,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iteration {}: {}", self.iteration, self.reason)
    }
}

impl std::error::Error for AuditViolation {}

/// Transport ledger of a whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransportLog {
    pub iterations: Vec<IterationTransport>,
}

impl TransportLog {
    pub fn push(&mut self, it: IterationTransport) {
        self.iterations.push(it);
    }

    pub fn audit(&self) -> Result<(), AuditViolation> {
        self.iterations.iter().try_for_each(IterationTransport::audit)
    }

    pub fn total_signal_samples(&self) -> u64 {
        self.iterations.iter().map(IterationTransport::signal_samples).sum()
    }
}
