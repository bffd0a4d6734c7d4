/// Character n-gram hashing for subword enrichment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordSpec {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
}

impl Default for SubwordSpec {
    fn default() -> Self {
        SubwordSpec {
            min_n: 3,
            max_n: 5,
            buckets: 1 << 18,
        }
    }
}

/// 32-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2166136261;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(16777619);
    }
    h
}

/// Character n-grams of `<word>` with lengths in `[min_n, max_n]`.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let framed: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for n in min_n..=max_n {
        if n == 0 || n > framed.len() {
            continue;
        }
        out.extend(framed.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// Bucket indices of a word's n-grams.
pub fn ngram_buckets(word: &str, spec: &SubwordSpec) -> Vec<usize> {
    char_ngrams(word, spec.min_n, spec.max_n)
        .iter()
        .map(|g| fnv1a(g.as_bytes()) as usize % spec.buckets)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngrams_include_boundaries() {
        let grams = char_ngrams("st", 3, 4);
        assert_eq!(grams, vec!["<st", "st>", "<st>"]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0x811c9dc5);
        assert_eq!(fnv1a(b"a"), 0xe40c292c);
        assert_eq!(fnv1a(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn misspellings_share_buckets() {
        let spec = SubwordSpec::default();
        let a = ngram_buckets("corner", &spec);
        let b = ngram_buckets("conner", &spec);
        assert!(a.iter().filter(|x| b.contains(x)).count() >= 3);
    }
}
