use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::subword::{ngram_buckets, SubwordSpec};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Keyed dense vectors in the plain-text embedding format: a `"N D"` header
/// followed by one `key x1 .. xD` line per row.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedVectors {
    pub keys: Vec<String>,
    pub dim: usize,
    /// Row-major `keys.len() x dim`.
    pub data: Vec<f64>,
}

impl KeyedVectors {
    pub fn new(keys: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != keys.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: keys.len() * dim,
                actual: data.len(),
            });
        }
        Ok(KeyedVectors { keys, dim, data })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w, self.len())
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes with an explicit row count in the header (used by the sparse
    /// bucket file, whose header carries the total bucket count).
    fn write_to(&self, w: &mut impl Write, declared_rows: usize) -> std::io::Result<()> {
        writeln!(w, "{} {}", declared_rows, self.dim)?;
        for (i, key) in self.keys.iter().enumerate() {
            w.write_all(key.as_bytes())?;
            for x in self.row(i) {
                write!(w, " {x:?}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let (declared, kv) = Self::read_from(BufReader::new(file))?;
        if declared != kv.len() {
            return Err(Error::Format(format!(
                "{}: header declares {declared} rows, found {}",
                path.display(),
                kv.len()
            )));
        }
        Ok(kv)
    }

    fn read_from(reader: impl BufRead) -> Result<(usize, Self)> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::Format(e.to_string()))?,
            None => return Err(Error::Format("missing header line".into())),
        };
        let parts: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad header {header:?}")))
        };
        if parts.len() != 2 {
            return Err(Error::Format(format!("bad header {header:?}")));
        }
        let (declared, dim) = (parse(parts[0])?, parse(parts[1])?);
        if dim == 0 {
            return Err(Error::Format("dimension must be at least 1".into()));
        }
        let mut keys = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let key = fields.next().unwrap_or_default();
            let start = data.len();
            for f in fields {
                let x: f64 = f.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad number {f:?}"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "non-finite value".into(),
                    });
                }
                data.push(x);
            }
            if data.len() - start != dim {
                return Err(Error::Format(format!(
                    "line {}: expected {dim} values, found {}",
                    i + 1,
                    data.len() - start
                )));
            }
            keys.push(key.to_string());
        }
        Ok((declared, KeyedVectors { keys, dim, data }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SubwordTable {
    pub spec: SubwordSpec,
    /// `buckets x dim`
    pub vectors: Vec<f64>,
    /// Bucket indices per vocabulary word.
    pub word_ngrams: Vec<Vec<usize>>,
}

/// Word vectors, optional subword bucket vectors and (during training) the
/// context matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub(crate) dim: usize,
    pub(crate) vocab: Vocabulary,
    pub(crate) words: Vec<f64>,
    pub(crate) context: Option<Vec<f64>>,
    pub(crate) subword: Option<SubwordTable>,
}

impl EmbeddingTable {
    pub(crate) fn new(
        vocab: Vocabulary,
        dim: usize,
        words: Vec<f64>,
        context: Option<Vec<f64>>,
        subword: Option<(SubwordSpec, Vec<f64>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if words.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                actual: words.len(),
            });
        }
        let subword = subword.map(|(spec, vectors)| {
            let word_ngrams = vocab
                .tokens()
                .iter()
                .map(|w| ngram_buckets(w, &spec))
                .collect();
            SubwordTable {
                spec,
                vectors,
                word_ngrams,
            }
        });
        Ok(EmbeddingTable {
            dim,
            vocab,
            words,
            context,
            subword,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn word_vector(&self, i: usize) -> &[f64] {
        &self.words[i * self.dim..(i + 1) * self.dim]
    }

    pub fn has_context(&self) -> bool {
        self.context.is_some()
    }

    pub fn subword_spec(&self) -> Option<SubwordSpec> {
        self.subword.as_ref().map(|s| s.spec)
    }

    pub fn bucket_vector(&self, b: usize) -> Option<&[f64]> {
        self.subword
            .as_ref()
            .map(|s| &s.vectors[b * self.dim..(b + 1) * self.dim])
    }

    /// Drops the training-only context matrix.
    pub fn into_inference(mut self) -> Self {
        self.context = None;
        self
    }

    /// Multiplies every stored vector by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.words.iter_mut().for_each(|x| *x *= factor);
        if let Some(s) = &mut self.subword {
            s.vectors.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Input representation of token `token`: the word vector, averaged with
    /// its n-gram buckets when subword enrichment is on. OOV tokens use their
    /// n-gram mean, or `None` without subwords.
    pub fn token_vector(&self, token: &str, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|x| *x = 0.0);
        let d = self.dim;
        match (self.vocab.index(token), &self.subword) {
            (Some(i), None) => {
                out.copy_from_slice(self.word_vector(i));
                true
            }
            (Some(i), Some(sub)) => {
                self.compose(i, sub, out);
                true
            }
            (None, Some(sub)) => {
                let grams = ngram_buckets(token, &sub.spec);
                if grams.is_empty() {
                    return false;
                }
                for &b in &grams {
                    crate::math::axpy(1.0, &sub.vectors[b * d..(b + 1) * d], out);
                }
                let inv = 1.0 / grams.len() as f64;
                out.iter_mut().for_each(|x| *x *= inv);
                true
            }
            (None, None) => false,
        }
    }

    pub(crate) fn compose(&self, i: usize, sub: &SubwordTable, out: &mut [f64]) {
        let d = self.dim;
        out.copy_from_slice(self.word_vector(i));
        let grams = &sub.word_ngrams[i];
        for &b in grams {
            crate::math::axpy(1.0, &sub.vectors[b * d..(b + 1) * d], out);
        }
        let inv = 1.0 / (1 + grams.len()) as f64;
        out.iter_mut().for_each(|x| *x *= inv);
    }
}

/// Path of the bucket companion file for a table saved at `path`.
pub fn bucket_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".buckets");
    PathBuf::from(s)
}

/// Saves the word vectors to `path` and, with subwords on, the non-zero
/// bucket rows to `<path>.buckets` (header `"B D"`, rows keyed by bucket id).
pub fn save_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for t in table.vocab.tokens() {
        if t.is_empty() || t.contains(char::is_whitespace) {
            return Err(Error::Format(format!("token {t:?} cannot be written")));
        }
    }
    KeyedVectors {
        keys: table.vocab.tokens().to_vec(),
        dim: table.dim,
        data: table.words.clone(),
    }
    .write(path)?;
    if let Some(sub) = &table.subword {
        let d = table.dim;
        let mut keys = Vec::new();
        let mut data = Vec::new();
        for b in 0..sub.spec.buckets {
            let row = &sub.vectors[b * d..(b + 1) * d];
            if row.iter().any(|&x| x != 0.0) {
                keys.push(b.to_string());
                data.extend_from_slice(row);
            }
        }
        let sparse = KeyedVectors { keys, dim: d, data };
        let bpath = bucket_path(path);
        let file = File::create(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let mut w = BufWriter::new(file);
        sparse
            .write_to(&mut w, sub.spec.buckets)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&bpath, e))?;
    }
    Ok(())
}

/// Loads a table for inference. A `<path>.buckets` companion, when present,
/// enables subword lookups with n-gram lengths `ngram_range`.
pub fn load_table_with(path: impl AsRef<Path>, ngram_range: (usize, usize)) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let kv = KeyedVectors::read(path)?;
    let vocab = Vocabulary::from_tokens(kv.keys)?;
    let bpath = bucket_path(path);
    let subword = if bpath.exists() {
        let file = File::open(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let (buckets, sparse) = KeyedVectors::read_from(BufReader::new(file))?;
        if sparse.dim != kv.dim {
            return Err(Error::Format(format!(
                "bucket dimension {} does not match word dimension {}",
                sparse.dim, kv.dim
            )));
        }
        let d = kv.dim;
        let mut vectors = vec![0.0; buckets * d];
        for (i, key) in sparse.keys.iter().enumerate() {
            let b: usize = key
                .parse()
                .ok()
                .filter(|&b| b < buckets)
                .ok_or_else(|| Error::Format(format!("bad bucket id {key:?}")))?;
            vectors[b * d..(b + 1) * d].copy_from_slice(sparse.row(i));
        }
        let spec = SubwordSpec {
            min_n: ngram_range.0,
            max_n: ngram_range.1,
            buckets,
        };
        Some((spec, vectors))
    } else {
        None
    };
    EmbeddingTable::new(vocab, kv.dim, kv.data, None, subword)
}

/// [`load_table_with`] using 3..=5 character n-grams.
pub fn load_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let spec = SubwordSpec::default();
    load_table_with(path, (spec.min_n, spec.max_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let vocab = Vocabulary::from_tokens(vec!["plaza".into(), "square".into()]).unwrap();
        EmbeddingTable::new(vocab, 3, vec![0.1, -2.5, 1e-300, 3.0, 0.0, -0.125], None, None)
            .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vec");
        let t = table();
        save_table(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("2 3\n"));
        assert_eq!(load_table(&path).unwrap(), t);
    }

    #[test]
    fn short_row_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vec");
        std::fs::write(&path, "2 3\na 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(load_table(&path), Err(Error::Format(_))));
        std::fs::write(&path, "3 3\na 1 2 3\nb 1 2 3\n").unwrap();
        assert!(matches!(load_table(&path), Err(Error::Format(_))));
    }

    #[test]
    fn external_file_loads_without_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.vec");
        std::fs::write(&path, "2 2\nhello 0.5 -1\nworld 1e-3 2\n").unwrap();
        let t = load_table(&path).unwrap();
        assert!(!t.has_context());
        assert_eq!(t.word_vector(1), &[1e-3, 2.0]);
        assert!(t.subword_spec().is_none());
    }

    #[test]
    fn bucket_companion_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub.vec");
        let vocab = Vocabulary::from_tokens(vec!["cafe".into()]).unwrap();
        let spec = SubwordSpec {
            min_n: 3,
            max_n: 5,
            buckets: 16,
        };
        let mut buckets = vec![0.0; 16 * 2];
        buckets[6] = 0.25;
        buckets[31] = -1.5;
        let t = EmbeddingTable::new(vocab, 2, vec![1.0, 2.0], None, Some((spec, buckets))).unwrap();
        save_table(&t, &path).unwrap();
        let text = std::fs::read_to_string(bucket_path(&path)).unwrap();
        assert!(text.starts_with("16 2\n"));
        assert_eq!(load_table(&path).unwrap(), t);
    }
}
