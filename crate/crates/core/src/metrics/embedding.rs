use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use super::{f1, MetricId, MetricScore};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("provider `{provider}` has no vector for `{token}`")]
    Unknown { provider: String, token: String },
    #[error("provider `{provider}` failed on `{token}`: {message}")]
    Failed {
        provider: String,
        token: String,
        message: String,
    },
    #[error("embedding table line {line}: {message}")]
    Table { line: usize, message: String },
}

/// Maps a token or entity string to a unit-norm vector of fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = dot(&v, &v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Vectors for the distinct strings of `items`, and cosine between two of them.
pub(crate) struct VectorCache<'a> {
    vectors: HashMap<&'a str, Vec<f64>>,
}

impl<'a> VectorCache<'a> {
    pub(crate) fn build(
        provider: &dyn EmbeddingProvider,
        items: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, EmbeddingError> {
        let mut vectors = HashMap::new();
        for item in items {
            if !vectors.contains_key(item) {
                vectors.insert(item, provider.embed(item)?);
            }
        }
        Ok(VectorCache { vectors })
    }

    /// Exactly 1 for equal strings so self-comparisons are not subject to rounding.
    pub(crate) fn cosine(&self, a: &str, b: &str) -> f64 {
        if a == b {
            1.0
        } else {
            dot(&self.vectors[a], &self.vectors[b])
        }
    }
}

/// Greedy max-cosine token matching, reported as an F1.
pub fn embed_f1<S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    provider: &dyn EmbeddingProvider,
) -> Result<MetricScore, EmbeddingError> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(MetricScore::new(
            MetricId::EmbedF1,
            0.0,
            vec![("precision", 0.0), ("recall", 0.0)],
        ));
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refs: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let cache = VectorCache::build(provider, cand.iter().chain(&refs).copied())?;
    let best = |from: &[&str], to: &[&str]| -> f64 {
        let total: f64 = from
            .iter()
            .map(|a| {
                to.iter()
                    .map(|b| cache.cosine(a, b))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        total / from.len() as f64
    };
    let recall = best(&refs, &cand);
    let precision = best(&cand, &refs);
    let value = if precision <= 0.0 || recall <= 0.0 {
        0.0
    } else {
        f1(precision, recall)
    };
    Ok(MetricScore::new(
        MetricId::EmbedF1,
        value,
        vec![("precision", precision), ("recall", recall)],
    ))
}

/// Each vocabulary entry is its own basis vector; unknown strings are an error.
#[derive(Debug, Clone)]
pub struct OneHotProvider {
    index: HashMap<String, usize>,
}

impl OneHotProvider {
    pub fn new<I, S>(vocabulary: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        for word in vocabulary {
            let n = index.len();
            index.entry(word.into()).or_insert(n);
        }
        OneHotProvider { index }
    }
}

impl EmbeddingProvider for OneHotProvider {
    fn id(&self) -> &str {
        "onehot"
    }

    fn dimension(&self) -> usize {
        self.index.len().max(1)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let &slot = self.index.get(text).ok_or_else(|| EmbeddingError::Unknown {
            provider: self.id().to_string(),
            token: text.to_string(),
        })?;
        let mut v = vec![0.0; self.dimension()];
        v[slot] = 1.0;
        Ok(v)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of character trigrams plus the whole word.
///
/// Strings sharing subwords ("opacity"/"opacities") land close together,
/// unrelated strings are near-orthogonal. Stable across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashedProvider {
    dimension: usize,
}

impl HashedProvider {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashedProvider { dimension }
    }
}

impl Default for HashedProvider {
    fn default() -> Self {
        HashedProvider::new(256)
    }
}

impl EmbeddingProvider for HashedProvider {
    fn id(&self) -> &str {
        "hashed-trigram"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dimension];
        let mut add = |feature: &[u8], weight: f64| {
            let h = fnv1a(feature);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dimension as u64) as usize] += sign * weight;
        };
        for word in text.to_lowercase().split_whitespace() {
            let padded: Vec<char> = format!("<{word}>").chars().collect();
            for gram in padded.windows(3) {
                add(gram.iter().collect::<String>().as_bytes(), 1.0);
            }
            add(format!("w:{word}").as_bytes(), 2.0);
        }
        normalize(v).ok_or_else(|| EmbeddingError::Failed {
            provider: self.id().to_string(),
            token: text.to_string(),
            message: "empty input".to_string(),
        })
    }
}

/// Vectors read from a whitespace-separated text table (`token v1 v2 ...`).
///
/// Multi-word strings not present in the table are embedded as the
/// normalized mean of their word vectors.
#[derive(Debug, Clone)]
pub struct TableProvider {
    name: String,
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn from_reader(name: &str, reader: impl BufRead) -> Result<Self, EmbeddingError> {
        let mut table = HashMap::new();
        let mut dimension = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EmbeddingError::Table {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Table {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if dimension == 0 {
                dimension = values.len();
            }
            if values.len() != dimension || dimension == 0 {
                return Err(EmbeddingError::Table {
                    line: i + 1,
                    message: format!("expected {dimension} values, found {}", values.len()),
                });
            }
            let unit = normalize(values).ok_or_else(|| EmbeddingError::Table {
                line: i + 1,
                message: "zero vector".to_string(),
            })?;
            table.insert(token.to_lowercase(), unit);
        }
        Ok(TableProvider {
            name: name.to_string(),
            dimension,
            table,
        })
    }

    pub fn from_entries(name: &str, entries: &[(&str, &[f64])]) -> Result<Self, EmbeddingError> {
        let text: String = entries
            .iter()
            .map(|(t, v)| {
                let nums: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("{t} {}\n", nums.join(" "))
            })
            .collect();
        Self::from_reader(name, text.as_bytes())
    }
}

impl EmbeddingProvider for TableProvider {
    fn id(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let key = text.to_lowercase();
        if let Some(v) = self.table.get(&key) {
            return Ok(v.clone());
        }
        let unknown = || EmbeddingError::Unknown {
            provider: self.name.clone(),
            token: text.to_string(),
        };
        let mut sum = vec![0.0; self.dimension];
        let mut any = false;
        for word in key.split_whitespace() {
            let v = self.table.get(word).ok_or_else(unknown)?;
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            any = true;
        }
        if !any {
            return Err(unknown());
        }
        normalize(sum).ok_or_else(unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Unigram-overlap F1 on token sets: a token counts as matched when the
    /// other side contains it.
    fn overlap_f1(c: &[&str], r: &[&str]) -> f64 {
        if c.is_empty() || r.is_empty() {
            return 0.0;
        }
        let p = c.iter().filter(|t| r.contains(t)).count() as f64 / c.len() as f64;
        let rc = r.iter().filter(|t| c.contains(t)).count() as f64 / r.len() as f64;
        if p + rc == 0.0 {
            0.0
        } else {
            2.0 * p * rc / (p + rc)
        }
    }

    #[test]
    fn identical_sequences_score_one() {
        let t = ["no", "pleural", "effusion", "no"];
        let hashed = HashedProvider::default();
        assert_eq!(embed_f1(&t, &t, &hashed).unwrap().value, 1.0);
        let onehot = OneHotProvider::new(t);
        assert_eq!(embed_f1(&t, &t, &onehot).unwrap().value, 1.0);
    }

    #[test]
    fn empty_candidate_is_zero() {
        let empty: [&str; 0] = [];
        let s = embed_f1(&empty, &["a"], &HashedProvider::default()).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn unknown_token_names_token() {
        let p = OneHotProvider::new(["a"]);
        let err = embed_f1(&["a", "zz"], &["a"], &p).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn hashed_vectors_unit_norm_and_stable() {
        let p = HashedProvider::default();
        for w in ["effusion", "pleural effusion", "5.5", "x"] {
            let v = p.embed(w).unwrap();
            assert_eq!(v.len(), 256);
            assert!((dot(&v, &v) - 1.0).abs() < 1e-6);
            assert_eq!(v, p.embed(w).unwrap());
        }
        let near = dot(&p.embed("opacity").unwrap(), &p.embed("opacities").unwrap());
        let far = dot(&p.embed("opacity").unwrap(), &p.embed("pneumothorax").unwrap());
        assert!(near > far, "{near} vs {far}");
        assert!(p.embed("  ").is_err());
    }

    #[test]
    fn table_provider_reads_and_averages() {
        let p = TableProvider::from_entries("t", &[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0])]).unwrap();
        assert_eq!(p.dimension(), 2);
        assert_eq!(p.embed("b").unwrap(), vec![0.0, 1.0]);
        let ab = p.embed("a b").unwrap();
        assert!((ab[0] - ab[1]).abs() < 1e-12);
        assert!(p.embed("c").is_err());
        let bad = TableProvider::from_reader("t", "a 1 0\nb 1\n".as_bytes());
        assert!(matches!(bad, Err(EmbeddingError::Table { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn onehot_equals_unigram_overlap_f1(
            c in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 0..10),
            r in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 0..10),
        ) {
            let p = OneHotProvider::new(c.iter().chain(&r).copied());
            let got = embed_f1(&c, &r, &p).unwrap().value;
            prop_assert!((got - overlap_f1(&c, &r)).abs() <= 1e-12);
        }

        #[test]
        fn hashed_embed_f1_bounded(
            c in prop::collection::vec("[a-z]{1,6}", 0..8),
            r in prop::collection::vec("[a-z]{1,6}", 0..8),
        ) {
            let v = embed_f1(&c, &r, &HashedProvider::default()).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
