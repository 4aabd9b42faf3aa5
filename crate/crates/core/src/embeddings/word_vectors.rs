//! Loader for static word vectors in the textual format
//! `<count> <dimension>` header followed by `<token> v1 v2 ... vd` rows.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{
    tokenize_whitespace_lowercase, EmbedError, EmbeddingProvider, EmbeddingVector,
    TokenEmbeddingSet,
};

/// In-memory token-to-vector map loaded from a word-vector file.
///
/// The map is immutable after load, so the provider is freely shareable
/// across threads.
#[derive(Debug)]
pub struct WordVectorProvider {
    id: String,
    dimension: usize,
    vectors: HashMap<String, EmbeddingVector>,
    warnings: Vec<String>,
}

impl WordVectorProvider {
    /// Parses a word-vector file from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let id = format!("word-vectors:{}", path.display());
        Self::from_reader(BufReader::new(file), id)
    }

    /// Parses the word-vector format from any reader.
    pub fn from_reader(reader: impl Read, id: String) -> Result<Self, EmbedError> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| EmbedError::MalformedHeader("empty file".into()))??;
        let (count, dimension) = parse_header(&header)?;

        let mut vectors = HashMap::with_capacity(count);
        let mut warnings = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line_no = idx + 2; // 1-based, after the header
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let token = fields
                .next()
                .ok_or_else(|| EmbedError::MalformedVector {
                    line: line_no,
                    detail: "missing token".into(),
                })?
                .to_string();
            let mut values = Vec::with_capacity(dimension);
            for field in fields {
                let v: f64 = field.parse().map_err(|_| EmbedError::MalformedVector {
                    line: line_no,
                    detail: format!("cannot parse {field:?} as a float"),
                })?;
                if !v.is_finite() {
                    return Err(EmbedError::MalformedVector {
                        line: line_no,
                        detail: format!("non-finite entry {v}"),
                    });
                }
                values.push(v);
            }
            if values.len() != dimension {
                return Err(EmbedError::DimensionMismatch {
                    line: line_no,
                    expected: dimension,
                    got: values.len(),
                });
            }
            // First occurrence wins on duplicates.
            if vectors.contains_key(&token) {
                let w = format!("duplicate token {token:?} at line {line_no}; keeping first");
                log::warn!("{w}");
                warnings.push(w);
                continue;
            }
            vectors.insert(token, EmbeddingVector::new(values).unwrap());
        }

        if vectors.len() != count {
            let w = format!(
                "header declared {count} vectors but {} were loaded",
                vectors.len()
            );
            log::warn!("{w}");
            warnings.push(w);
        }

        Ok(Self {
            id,
            dimension,
            vectors,
            warnings,
        })
    }

    /// Number of distinct tokens loaded.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Direct lookup without tokenization.
    pub fn lookup(&self, token: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(token)
    }

    /// Warnings recorded during the load (duplicates, count mismatch).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

fn parse_header(header: &str) -> Result<(usize, usize), EmbedError> {
    let mut fields = header.split_whitespace();
    let count: usize = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| EmbedError::MalformedHeader(header.to_string()))?;
    let dimension: usize = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| EmbedError::MalformedHeader(header.to_string()))?;
    if fields.next().is_some() || dimension == 0 {
        return Err(EmbedError::MalformedHeader(header.to_string()));
    }
    Ok((count, dimension))
}

impl EmbeddingProvider for WordVectorProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_tokens(&self, sentence: &str) -> Result<TokenEmbeddingSet, EmbedError> {
        if sentence.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut out = Vec::new();
        for token in tokenize_whitespace_lowercase(sentence) {
            match self.vectors.get(&token) {
                Some(v) => out.push((token, v.clone())),
                None => log::debug!("word vectors: dropping OOV token {token:?}"),
            }
        }
        if out.is_empty() {
            return Err(EmbedError::AllTokensUnknown(sentence.to_string()));
        }
        TokenEmbeddingSet::new(out)
    }
}
