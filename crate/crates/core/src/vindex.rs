//! Exact top-1 cosine index with one table per embedding kind.
//!
//! Every prompt lives in all three tables or in none: [`VectorIndex::insert`]
//! and [`VectorIndex::remove`] touch the three tables under one `&mut`
//! borrow, and [`SharedIndex`] extends that to threads with a reader–writer
//! lock.

use std::collections::HashMap;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use thiserror::Error;

use crate::latent::{Embedding, EmbeddingKind, PromptId};
use crate::similarity::dot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("prompt {0} is already indexed")]
    Duplicate(PromptId),
    #[error("prompt {0} is not indexed")]
    Unknown(PromptId),
    #[error("embedding dimension {actual}, index expects {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("embedding kind {actual:?} given for the {expected:?} table")]
    Kind {
        expected: EmbeddingKind,
        actual: EmbeddingKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub prompt: PromptId,
    pub score: f64,
}

/// Row-major embedding matrix with swap-remove deletion.
#[derive(Debug, Clone, Default)]
struct IndexTable {
    values: Vec<f32>,
    prompts: Vec<PromptId>,
}

impl IndexTable {
    fn push(&mut self, e: &Embedding, p: PromptId) {
        self.values.extend_from_slice(e.values());
        self.prompts.push(p);
    }

    fn swap_remove(&mut self, row: usize, dim: usize) {
        let last = self.prompts.len() - 1;
        if row != last {
            let (head, tail) = self.values.split_at_mut(last * dim);
            head[row * dim..(row + 1) * dim].copy_from_slice(&tail[..dim]);
        }
        self.values.truncate(last * dim);
        self.prompts.swap_remove(row);
    }

    fn row(&self, row: usize, dim: usize) -> &[f32] {
        &self.values[row * dim..(row + 1) * dim]
    }
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    tables: [IndexTable; 3],
    rows: HashMap<PromptId, usize>,
}

fn slot(kind: EmbeddingKind) -> usize {
    match kind {
        EmbeddingKind::Whole => 0,
        EmbeddingKind::Object => 1,
        EmbeddingKind::Background => 2,
    }
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tables: Default::default(),
            rows: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, prompt: PromptId) -> bool {
        self.rows.contains_key(&prompt)
    }

    fn check(&self, e: &Embedding, kind: EmbeddingKind) -> Result<(), IndexError> {
        if e.dim() != self.dim {
            return Err(IndexError::Dimension {
                expected: self.dim,
                actual: e.dim(),
            });
        }
        if e.kind() != kind {
            return Err(IndexError::Kind {
                expected: kind,
                actual: e.kind(),
            });
        }
        Ok(())
    }

    pub fn insert(
        &mut self,
        whole: &Embedding,
        object: &Embedding,
        background: &Embedding,
        prompt: PromptId,
    ) -> Result<(), IndexError> {
        if self.rows.contains_key(&prompt) {
            return Err(IndexError::Duplicate(prompt));
        }
        self.check(whole, EmbeddingKind::Whole)?;
        self.check(object, EmbeddingKind::Object)?;
        self.check(background, EmbeddingKind::Background)?;
        let row = self.tables[0].prompts.len();
        self.tables[0].push(whole, prompt);
        self.tables[1].push(object, prompt);
        self.tables[2].push(background, prompt);
        self.rows.insert(prompt, row);
        Ok(())
    }

    pub fn remove(&mut self, prompt: PromptId) -> Result<(), IndexError> {
        let row = self
            .rows
            .remove(&prompt)
            .ok_or(IndexError::Unknown(prompt))?;
        let dim = self.dim;
        for t in &mut self.tables {
            t.swap_remove(row, dim);
        }
        if let Some(&moved) = self.tables[0].prompts.get(row) {
            self.rows.insert(moved, row);
        }
        Ok(())
    }

    /// Most similar entry of one table; ties go to the smaller prompt id.
    pub fn query_top1(&self, kind: EmbeddingKind, q: &Embedding) -> Option<QueryResult> {
        if q.dim() != self.dim {
            return None;
        }
        let table = &self.tables[slot(kind)];
        let mut best: Option<QueryResult> = None;
        for (row, &prompt) in table.prompts.iter().enumerate() {
            let score = dot(q.values(), table.row(row, self.dim)).clamp(-1.0, 1.0);
            let better = match best {
                None => true,
                Some(b) => score > b.score || (score == b.score && prompt < b.prompt),
            };
            if better {
                best = Some(QueryResult { prompt, score });
            }
        }
        best
    }

    /// Stored embedding of `prompt` in one table.
    pub fn embedding(&self, kind: EmbeddingKind, prompt: PromptId) -> Option<Embedding> {
        let row = *self.rows.get(&prompt)?;
        let values = self.tables[slot(kind)].row(row, self.dim).to_vec();
        Embedding::from_normalized(kind, values).ok()
    }

    /// Prompt ids of one table, ascending.
    pub fn prompts(&self, kind: EmbeddingKind) -> Vec<PromptId> {
        let mut ids = self.tables[slot(kind)].prompts.clone();
        ids.sort();
        ids
    }
}

/// [`VectorIndex`] behind a reader–writer lock: many concurrent queries or
/// one insert/remove at a time.
#[derive(Debug)]
pub struct SharedIndex(RwLock<VectorIndex>);

impl SharedIndex {
    pub fn new(index: VectorIndex) -> Self {
        Self(RwLock::new(index))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, VectorIndex> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, VectorIndex> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn into_inner(self) -> VectorIndex {
        self.0.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}
