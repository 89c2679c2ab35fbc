use pipeward_core::env::OutcomeFlags;
use pipeward_core::{AgentRole, MitigationAction, ObservationSignal};
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::merkle::{merkle_root, sha256, Hash};

/// One audited agent decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub agent_id: String,
    pub role: AgentRole,
    #[serde(with = "hex::serde")]
    pub signals_digest: Hash,
    pub reasoning_summary: String,
    pub action: MitigationAction,
    pub outcome: OutcomeFlags,
    /// Simulated minutes.
    pub timestamp: u64,
}

/// SHA-256 over the canonical encoding of the signals, in order.
pub fn signals_digest(signals: &[ObservationSignal]) -> Hash {
    let mut w = Writer::new();
    w.u32(signals.len() as u32);
    for s in signals {
        w.u8(s.stage.index() as u8)
            .u8(s.kind as u8)
            .str(&s.content);
    }
    sha256(&[&w.finish()])
}

fn role_from(tag: u8, at: usize) -> Result<AgentRole, DecodeError> {
    AgentRole::ALL.get(tag as usize).copied().ok_or(DecodeError::Tag {
        what: "role",
        tag,
        at,
    })
}

fn action_from(tag: u8, at: usize) -> Result<MitigationAction, DecodeError> {
    MitigationAction::from_index(tag as usize).ok_or(DecodeError::Tag {
        what: "action",
        tag,
        at,
    })
}

impl LedgerEntry {
    pub fn encode_into(&self, w: &mut Writer) {
        w.str(&self.agent_id)
            .u8(self.role.index() as u8)
            .fixed(&self.signals_digest)
            .str(&self.reasoning_summary)
            .u8(self.action.index() as u8)
            .bool(self.outcome.attack_mitigated)
            .bool(self.outcome.false_positive)
            .bool(self.outcome.developer_accepted)
            .f64(self.outcome.build_delay)
            .u64(self.timestamp);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader) -> Result<LedgerEntry, DecodeError> {
        let agent_id = r.string()?;
        let at = r.position();
        let role = role_from(r.u8()?, at)?;
        let signals_digest = r.array()?;
        let reasoning_summary = r.string()?;
        let at = r.position();
        let action = action_from(r.u8()?, at)?;
        let outcome = OutcomeFlags {
            attack_mitigated: r.bool()?,
            false_positive: r.bool()?,
            developer_accepted: r.bool()?,
            build_delay: r.f64()?,
        };
        Ok(LedgerEntry {
            agent_id,
            role,
            signals_digest,
            reasoning_summary,
            action,
            outcome,
            timestamp: r.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSignature {
    pub validator: String,
    #[serde(with = "hex::serde")]
    pub signature: [u8; 64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    #[serde(with = "hex::serde")]
    pub prev_hash: Hash,
    #[serde(with = "hex::serde")]
    pub merkle_root: Hash,
    pub entries: Vec<LedgerEntry>,
    pub proposer: String,
    pub signatures: Vec<BlockSignature>,
    pub timestamp: u64,
}

impl Block {
    /// An unsigned block over `entries` with its root computed.
    pub fn unsigned(
        index: u64,
        prev_hash: Hash,
        entries: Vec<LedgerEntry>,
        proposer: impl Into<String>,
        timestamp: u64,
    ) -> Block {
        let merkle_root = entries_root(&entries);
        Block {
            index,
            prev_hash,
            merkle_root,
            entries,
            proposer: proposer.into(),
            signatures: Vec::new(),
            timestamp,
        }
    }

    /// The signed and hash-linked part: everything except entries (covered
    /// by the root) and signatures.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.index)
            .fixed(&self.prev_hash)
            .fixed(&self.merkle_root)
            .str(&self.proposer)
            .u64(self.timestamp)
            .u32(self.entries.len() as u32);
        w.finish()
    }

    pub fn header_hash(&self) -> Hash {
        sha256(&[&self.header_bytes()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.index)
            .fixed(&self.prev_hash)
            .fixed(&self.merkle_root)
            .str(&self.proposer)
            .u64(self.timestamp)
            .u32(self.entries.len() as u32);
        for e in &self.entries {
            e.encode_into(&mut w);
        }
        w.u32(self.signatures.len() as u32);
        for s in &self.signatures {
            w.str(&s.validator).fixed(&s.signature);
        }
        w.finish()
    }

    /// Strict decode: the bytes must be exactly the canonical encoding of
    /// the decoded block.
    pub fn from_bytes(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut r = Reader::new(bytes);
        let index = r.u64()?;
        let prev_hash = r.array()?;
        let merkle_root = r.array()?;
        let proposer = r.string()?;
        let timestamp = r.u64()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            entries.push(LedgerEntry::decode_from(&mut r)?);
        }
        let sig_count = r.u32()? as usize;
        let mut signatures = Vec::with_capacity(sig_count.min(1024));
        for _ in 0..sig_count {
            signatures.push(BlockSignature {
                validator: r.string()?,
                signature: r.array()?,
            });
        }
        r.finish()?;
        let block = Block {
            index,
            prev_hash,
            merkle_root,
            entries,
            proposer,
            signatures,
            timestamp,
        };
        if block.to_bytes() != bytes {
            return Err(DecodeError::NonCanonical);
        }
        Ok(block)
    }
}

pub fn entries_root(entries: &[LedgerEntry]) -> Hash {
    let leaves: Vec<Vec<u8>> = entries.iter().map(LedgerEntry::to_bytes).collect();
    merkle_root(&leaves)
}

/// Ledger file framing: each block preceded by its 4-byte big-endian length.
pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in blocks {
        let bytes = b.to_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

/// Splits a ledger file into blocks. On the first undecodable frame returns
/// the blocks decoded so far and the failing block's position.
pub fn decode_chain(bytes: &[u8]) -> Result<Vec<Block>, (Vec<Block>, DecodeError)> {
    let mut blocks = Vec::new();
    let mut r = Reader::new(bytes);
    while r.position() < bytes.len() {
        let frame = r.u32().and_then(|len| r.take(len as usize));
        match frame.and_then(Block::from_bytes) {
            Ok(b) => blocks.push(b),
            Err(e) => return Err((blocks, e)),
        }
    }
    Ok(blocks)
}
