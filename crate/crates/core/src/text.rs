//! Deterministic stand-in for a frozen text encoder.
//!
//! Lowercased alphanumeric words are hashed (FNV-1a) into a seeded embedding
//! table, truncated or zero-padded to a fixed token count, and offset by
//! sinusoidal positions. The empty string maps to the all-zero null
//! embedding used for classifier-free guidance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::sinusoidal;

pub const TABLE_SIZE: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub tokens: usize,
    pub dim: usize,
    /// `tokens × dim`, row-major; rows past `len` are zero.
    pub data: Vec<f64>,
    /// Number of non-padding tokens.
    pub len: usize,
}

impl TextEmbedding {
    /// Mean over the non-padding tokens; zero for the null embedding.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.len == 0 {
            return out;
        }
        for row in self.data.chunks_exact(self.dim).take(self.len) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.len as f64);
        out
    }

    pub fn is_null(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextEncoder {
    pub tokens: usize,
    pub dim: usize,
    pub seed: u64,
}

impl TextEncoder {
    pub fn new(tokens: usize, dim: usize, seed: u64) -> Self {
        Self { tokens, dim, seed }
    }

    pub fn encode(&self, text: &str) -> TextEmbedding {
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
            .filter(|w| !w.is_empty())
            .take(self.tokens)
            .collect();
        let mut data = vec![0.0; self.tokens * self.dim];
        for (pos, w) in words.iter().enumerate() {
            let row = &mut data[pos * self.dim..(pos + 1) * self.dim];
            let bucket = fnv1a(w.as_bytes()) % TABLE_SIZE;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ bucket.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let pe = sinusoidal(pos as f64, self.dim);
            for (o, p) in row.iter_mut().zip(pe) {
                *o = rng.random_range(-1.0..1.0) + 0.1 * p;
            }
        }
        TextEmbedding { tokens: self.tokens, dim: self.dim, data, len: words.len() }
    }

    pub fn null(&self) -> TextEmbedding {
        TextEmbedding { tokens: self.tokens, dim: self.dim, data: vec![0.0; self.tokens * self.dim], len: 0 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
