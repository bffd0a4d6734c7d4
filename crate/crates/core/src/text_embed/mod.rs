//! Name/address normalization, skip-gram embeddings with optional subword
//! enrichment, and averaged text embeddings.

mod normalize;
mod skipgram;
mod subword;
mod table;
mod vocab;

pub use normalize::{normalize, tokenize, NormalizerConfig};
pub use skipgram::{ns_loss_grad, train_skipgram, SgdConfig, SkipgramConfig, TrainingLog};
pub use subword::{char_ngrams, fnv1a, ngram_buckets, SubwordSpec};
pub use table::{bucket_path, load_table, load_table_with, save_table, EmbeddingTable, KeyedVectors};
pub use vocab::{build_vocab, Vocabulary};

/// Ordered `(center, context)` position pairs of a text.
///
/// Every ordered pair of distinct positions is emitted once (repeated tokens
/// are kept); `window` bounds the position distance when set.
pub fn sample_pairs(tokens: &[usize], window: Option<usize>) -> Vec<(usize, usize)> {
    let n = tokens.len();
    let w = window.unwrap_or(n);
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in i.saturating_sub(w)..n.min(i + w + 1) {
            if i != j {
                out.push((tokens[i], tokens[j]));
            }
        }
    }
    out
}

/// Averaged embedding of a token list.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    /// Set when no token contributed and `vector` is zero.
    pub empty: bool,
}

/// Mean of per-token vectors (see [`EmbeddingTable::token_vector`]).
pub fn embed_text(tokens: &[String], table: &EmbeddingTable) -> TextEmbedding {
    let d = table.dim();
    let mut sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut n = 0usize;
    for t in tokens {
        if table.token_vector(t, &mut buf) {
            crate::math::axpy(1.0, &buf, &mut sum);
            n += 1;
        }
    }
    if n == 0 {
        return TextEmbedding {
            vector: sum,
            empty: true,
        };
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|x| *x *= inv);
    TextEmbedding {
        vector: sum,
        empty: false,
    }
}
