//! Snapshot file holding a store and its similarity index.
//!
//! ```text
//! "LTCS"  u16 version  u8 policy  u64 capacity  u64 next group  u64 next seq
//! index section
//!   u32 dim, u32 prompts
//!   per prompt, ascending id: u64 id, whole, object, background (dim × f32 each)
//!   u32 CRC32 of the section
//! u32 groups
//! per group, ascending id
//!   u64 group id, u32 entry length, entry bytes
//!   u8 steps; per step ascending: u8 step, u64 f, u64 last access,
//!   u64 inserted at, u64 seq
//!   u32 CRC32 of the group record
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::codec::{CodecError, CompressedEntry};
use crate::latent::{Embedding, EmbeddingKind, PromptId, StepId};
use crate::vindex::VectorIndex;
use crate::wire::{DecodeError, Reader, Writer};

use super::{CacheStore, Policy, Slot, StepEntry};

pub const SNAPSHOT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"LTCS";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

impl From<CodecError> for SnapshotError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Decode(d) => SnapshotError::Decode(d),
            other => SnapshotError::Decode(DecodeError::Invalid {
                pos: 0,
                msg: other.to_string(),
            }),
        }
    }
}

/// A store together with the index that points into it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub store: CacheStore,
    pub index: VectorIndex,
}

impl Snapshot {
    pub fn to_bytes(store: &CacheStore, index: &VectorIndex) -> Vec<u8> {
        let mut w = Writer::with_capacity(store.used as usize + 1024);
        w.bytes(MAGIC);
        w.u16(SNAPSHOT_VERSION);
        w.u8(store.policy.code());
        w.u64(store.limit);
        w.u64(store.next_group);
        w.u64(store.next_seq);

        let start = w.len();
        let prompts = index.prompts(EmbeddingKind::Whole);
        w.u32(index.dim() as u32);
        w.u32(prompts.len() as u32);
        for p in &prompts {
            w.u64(p.0);
            for kind in EmbeddingKind::ALL {
                let e = index.embedding(kind, *p).expect("listed prompt is indexed");
                w.f32s(e.values());
            }
        }
        let crc = w.crc_since(start);
        w.u32(crc);

        let mut by_group: BTreeMap<u64, Vec<&StepEntry>> = BTreeMap::new();
        for slot in store.slots.values() {
            by_group.entry(slot.group).or_default().push(&slot.meta);
        }
        w.u32(store.groups.len() as u32);
        for (id, entry) in &store.groups {
            let start = w.len();
            w.u64(*id);
            w.u32(entry.encoded_len() as u32);
            entry.write_to(&mut w);
            let mut metas = by_group.remove(id).unwrap_or_default();
            metas.sort_by_key(|m| m.step);
            w.u8(metas.len() as u8);
            for m in metas {
                w.u8(m.step.get() as u8);
                w.u64(m.f);
                w.u64(m.last_access);
                w.u64(m.inserted_at);
                w.u64(m.seq);
            }
            let crc = w.crc_since(start);
            w.u32(crc);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader::new(bytes);
        let pos = r.pos();
        if r.take(4)? != MAGIC {
            return Err(DecodeError::BadMagic { pos }.into());
        }
        let pos = r.pos();
        let version = r.u16()?;
        if version != SNAPSHOT_VERSION {
            return Err(DecodeError::Version { pos, version }.into());
        }
        let pos = r.pos();
        let policy = Policy::from_code(r.u8()?).ok_or(DecodeError::Invalid {
            pos,
            msg: "unknown policy".into(),
        })?;
        let limit = r.u64()?;
        let next_group = r.u64()?;
        let next_seq = r.u64()?;

        let start = r.pos();
        let dim = r.u32()? as usize;
        let n_prompts = r.u32()? as usize;
        let mut index = VectorIndex::new(dim);
        let mut prev: Option<PromptId> = None;
        for _ in 0..n_prompts {
            let pos = r.pos();
            let prompt = PromptId(r.u64()?);
            if prev.is_some_and(|p| p >= prompt) {
                return Err(r.invalid("index prompts must be ascending").into());
            }
            prev = Some(prompt);
            let mut embs = Vec::with_capacity(3);
            for kind in EmbeddingKind::ALL {
                let epos = r.pos();
                let values = r.f32s(dim)?;
                embs.push(Embedding::from_normalized(kind, values).map_err(|e| {
                    DecodeError::Invalid {
                        pos: epos,
                        msg: e.to_string(),
                    }
                })?);
            }
            index
                .insert(&embs[0], &embs[1], &embs[2], prompt)
                .map_err(|e| DecodeError::Invalid {
                    pos,
                    msg: e.to_string(),
                })?;
        }
        r.expect_crc(start)?;

        let mut store = CacheStore::new(limit, policy);
        store.next_group = next_group;
        store.next_seq = next_seq;
        let n_groups = r.u32()? as usize;
        let mut prev_group: Option<u64> = None;
        for _ in 0..n_groups {
            let start = r.pos();
            let id = r.u64()?;
            if prev_group.is_some_and(|g| g >= id) || id >= next_group {
                return Err(r.invalid(format!("group id {id} out of order")).into());
            }
            prev_group = Some(id);
            let len = r.u32()? as usize;
            let entry_start = r.pos();
            let entry = CompressedEntry::read_from(&mut r)?;
            if r.pos() - entry_start != len {
                return Err(r.invalid("entry length mismatch").into());
            }
            let n = r.u8()? as usize;
            let stored: Vec<StepId> = entry.steps().collect();
            if n != stored.len() || n == 0 {
                return Err(r
                    .invalid("step bookkeeping does not match the entry")
                    .into());
            }
            let prompt = entry.prompt();
            for &expected in &stored {
                let pos = r.pos();
                let step = r.u8()?;
                if u32::from(step) != expected.get() {
                    return Err(r
                        .invalid(format!("bookkeeping for step {step}, expected {expected}"))
                        .into());
                }
                let meta = StepEntry {
                    prompt,
                    step: expected,
                    f: r.u64()?,
                    last_access: r.u64()?,
                    inserted_at: r.u64()?,
                    capacity: 0,
                    seq: r.u64()?,
                };
                if meta.last_access < meta.inserted_at || meta.seq >= next_seq {
                    return Err(DecodeError::Invalid {
                        pos,
                        msg: "inconsistent step bookkeeping".into(),
                    }
                    .into());
                }
                if store
                    .slots
                    .insert((prompt, expected), Slot { meta, group: id })
                    .is_some()
                {
                    return Err(DecodeError::Invalid {
                        pos,
                        msg: format!("step {expected} of prompt {prompt} stored twice"),
                    }
                    .into());
                }
            }
            r.expect_crc(start)?;
            store.used += entry.encoded_len() as u64;
            store.groups.insert(id, entry);
        }
        if r.remaining() != 0 {
            return Err(r.invalid("trailing bytes after snapshot").into());
        }
        if store.used > store.limit {
            return Err(r.invalid("stored entries exceed the capacity").into());
        }
        Ok(Snapshot { store, index })
    }
}

pub fn save_snapshot(
    path: impl AsRef<Path>,
    store: &CacheStore,
    index: &VectorIndex,
) -> Result<(), SnapshotError> {
    std::fs::write(path, Snapshot::to_bytes(store, index))?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Snapshot, SnapshotError> {
    Snapshot::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{inter_compress, intra_compress};
    use crate::latent::{Frame, FrameShape, LatentState, MaskSet};

    fn entry(prompt: u64) -> CompressedEntry {
        let fs = FrameShape::new(2, 3, 1).unwrap();
        let intra: Vec<_> = StepId::cached()
            .iter()
            .map(|&st| {
                let frames = (0..3)
                    .map(|j| {
                        let data = (0..6)
                            .map(|i| ((i * 7 + j * 3 + prompt as usize) % 5) as f32 - 2.0)
                            .collect();
                        Frame::new(fs, data).unwrap()
                    })
                    .collect();
                intra_compress(&LatentState::new(st, frames).unwrap(), 0.99).unwrap()
            })
            .collect();
        let shape = intra[0].shape();
        inter_compress(PromptId(prompt), &intra, &MaskSet::all_background(shape)).unwrap()
    }

    fn populated() -> (CacheStore, VectorIndex) {
        let mut store = CacheStore::new(1 << 20, Policy::Lrbu);
        let mut index = VectorIndex::new(3);
        for p in 0..4u64 {
            store.insert_steps(entry(p), &StepId::cached(), p).unwrap();
            let v = vec![1.0, p as f32, 0.5];
            let [w, o, b] = EmbeddingKind::ALL.map(|k| Embedding::new(k, v.clone()).unwrap());
            index.insert(&w, &o, &b, PromptId(p)).unwrap();
        }
        store
            .get_step(PromptId(2), StepId::new(15).unwrap(), 9)
            .unwrap();
        store.evict_step(PromptId(1), StepId::new(10).unwrap());
        (store, index)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (store, index) = populated();
        let a = Snapshot::to_bytes(&store, &index);
        let snap = Snapshot::from_bytes(&a).unwrap();
        assert_eq!(snap.store, store);
        let b = Snapshot::to_bytes(&snap.store, &snap.index);
        assert_eq!(a, b);
        assert_eq!(
            snap.index.prompts(EmbeddingKind::Object),
            index.prompts(EmbeddingKind::Object)
        );
    }

    #[test]
    fn file_round_trip() {
        let (store, index) = populated();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.ltcs");
        save_snapshot(&path, &store, &index).unwrap();
        let snap = load_snapshot(&path).unwrap();
        assert_eq!(snap.store.used(), store.used());
        assert_eq!(
            snap.store.entries().collect::<Vec<_>>(),
            store.entries().collect::<Vec<_>>()
        );
    }

    #[test]
    fn corruption_is_reported_with_position() {
        let (store, index) = populated();
        let bytes = Snapshot::to_bytes(&store, &index);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Snapshot::from_bytes(&bad),
            Err(SnapshotError::Decode(DecodeError::BadMagic { pos: 0 }))
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Snapshot::from_bytes(&bad),
            Err(SnapshotError::Decode(DecodeError::Version { pos: 4, .. }))
        ));

        let cut = bytes.len() - 10;
        assert!(matches!(
            Snapshot::from_bytes(&bytes[..cut]),
            Err(SnapshotError::Decode(DecodeError::Truncated { .. }))
        ));

        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0xff;
        match Snapshot::from_bytes(&bad) {
            Err(SnapshotError::Decode(DecodeError::Checksum { pos, .. })) => {
                assert_eq!(pos, bytes.len() - 4)
            }
            other => panic!("expected a checksum error, got {other:?}"),
        }
    }
}
