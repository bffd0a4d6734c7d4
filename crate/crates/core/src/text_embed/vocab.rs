use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;

use crate::error::{Error, Result};

/// Token index with corpus frequencies.
///
/// Tokens are ordered by descending frequency, then lexicographically, so
/// indices are stable for a given corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    /// Vocabulary with unknown frequencies, e.g. from a loaded table.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary {
            counts: vec![0; tokens.len()],
            tokens,
            index,
            min_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// In-vocabulary indices of `tokens`; OOV tokens are dropped.
    pub fn lookup(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index(t)).collect()
    }

    /// Negative-sampling noise distribution: frequency raised to `exponent`.
    pub fn noise_distribution(&self, exponent: f64) -> Option<WeightedIndex<f64>> {
        WeightedIndex::new(self.counts.iter().map(|&c| (c as f64).powf(exponent))).ok()
    }
}

/// Counts tokens over `corpus` and keeps those seen at least `min_count` times.
pub fn build_vocab<I, S>(corpus: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    let mut freq: HashMap<String, u64> = HashMap::new();
    for sentence in corpus {
        for tok in sentence.as_ref() {
            *freq.entry(tok.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let index = kept
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.clone(), i))
        .collect();
    let (tokens, counts) = kept.into_iter().unzip();
    Ok(Vocabulary {
        tokens,
        counts,
        index,
        min_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string()],
        ]
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocab(corpus(), 2).unwrap();
        assert_eq!(v.tokens(), &["a".to_string()]);
        assert_eq!(v.count(0), 2);
        let v = build_vocab(corpus(), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.index("b"), Some(1));
    }

    #[test]
    fn everything_filtered_is_an_error() {
        assert!(matches!(
            build_vocab(corpus(), 3),
            Err(Error::EmptyVocabulary { min_count: 3 })
        ));
        assert!(matches!(
            build_vocab(Vec::<Vec<String>>::new(), 1),
            Err(Error::EmptyVocabulary { .. })
        ));
    }
}
