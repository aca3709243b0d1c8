use std::cell::RefCell;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::latent::{Embedding, EmbeddingKind};

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ seed.rotate_left(17));
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Normalized sum of one pseudorandom unit vector per distinct token.
pub fn synth_embedding<S: AsRef<str>>(
    kind: EmbeddingKind,
    tokens: &[S],
    dim: usize,
    seed: u64,
) -> Embedding {
    EmbeddingModel::new(dim, seed).embed(kind, tokens)
}

/// [`synth_embedding`] with per-token vectors memoized.
#[derive(Debug)]
pub struct EmbeddingModel {
    dim: usize,
    seed: u64,
    tokens: RefCell<HashMap<String, Vec<f64>>>,
}

impl EmbeddingModel {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            tokens: RefCell::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Panics if `tokens` is empty.
    pub fn embed<S: AsRef<str>>(&self, kind: EmbeddingKind, tokens: &[S]) -> Embedding {
        assert!(!tokens.is_empty(), "token set must be nonempty");
        let mut distinct: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut sum = vec![0.0f64; self.dim];
        let mut cache = self.tokens.borrow_mut();
        for t in distinct {
            let v = cache
                .entry(t.to_owned())
                .or_insert_with(|| token_vector(t, self.dim, self.seed));
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
        let values = sum.into_iter().map(|x| x as f32).collect();
        Embedding::new(kind, values).expect("sum of random unit vectors is nonzero")
    }
}
