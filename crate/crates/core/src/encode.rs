//! Utterance encoders and the bidirectional contextualizer.
//!
//! An encoder maps utterance text to a fixed-width vector. Two encoders
//! ship with the crate: a deterministic hash-bag stub that needs no model
//! files, and a table lookup over vectors precomputed offline by a
//! sentence encoder. Both are frozen at scoring time; training never
//! touches them. The contextualizer is a [`BiLstm`] whose forward and
//! backward halves each have width `dim / 2`, so context vectors keep the
//! encoder width.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dialogue;
use crate::lstm::BiLstm;
use crate::util::fnv1a;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder failed at position {position}: {message}")]
    AtPosition { position: usize, message: String },

    #[error("no precomputed vector for text {text:?}")]
    UnknownText { text: String },

    #[error("vector has {found} components, encoder dim is {expected}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite value in contextualized output (training divergence?)")]
    NonFinite,

    #[error("failed to read encoder artifact {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad encoder artifact {path} at line {line}: {message}")]
    Artifact {
        path: String,
        line: usize,
        message: String,
    },
}

/// Maps utterance text to a fixed-width vector. Implementations are
/// deterministic (same text, same vector) and safe to share across
/// threads.
pub trait UtteranceEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Array1<f64>, EncodeError>;
}

/// Deterministic hash-bag embedding: each lowercase whitespace token maps
/// to a fixed pseudo-random unit-variance vector, the token vectors are
/// summed, and the sum is L2-normalized. Texts sharing tokens land closer
/// in cosine than unrelated texts, which is all the tests and toy corpora
/// need. No model files involved.
#[derive(Debug, Clone)]
pub struct HashBagEncoder {
    dim: usize,
    seed: u64,
}

impl HashBagEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "encoder dim must be at least 1");
        HashBagEncoder { dim, seed }
    }
}

impl UtteranceEncoder for HashBagEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Array1<f64>, EncodeError> {
        let mut acc = Array1::<f64>::zeros(self.dim);
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            let mut rng =
                ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed.rotate_left(17));
            for v in acc.iter_mut() {
                *v += rng.sample::<f64, _>(StandardNormal);
            }
        }
        let norm = acc.dot(&acc).sqrt();
        if norm > 0.0 {
            acc /= norm;
        }
        Ok(acc)
    }
}

/// Lookup over vectors produced offline (for example by a fine-tuned
/// sentence encoder). The artifact is JSONL with one
/// `{"text": ..., "vector": [...]}` record per line; texts are matched
/// after trimming.
pub struct PrecomputedEncoder {
    dim: usize,
    table: HashMap<String, Array1<f64>>,
}

#[derive(Deserialize)]
struct VectorRecord {
    text: String,
    vector: Vec<f64>,
}

impl PrecomputedEncoder {
    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let content = fs::read_to_string(path).map_err(|source| EncodeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut table = HashMap::new();
        let mut dim = None;
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: VectorRecord =
                serde_json::from_str(line).map_err(|e| EncodeError::Artifact {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            let d = *dim.get_or_insert(record.vector.len());
            if record.vector.len() != d {
                return Err(EncodeError::Artifact {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("vector width {} != {}", record.vector.len(), d),
                });
            }
            table.insert(record.text.trim().to_string(), Array1::from(record.vector));
        }
        let dim = dim.ok_or_else(|| EncodeError::Artifact {
            path: path.display().to_string(),
            line: 0,
            message: "artifact contains no vectors".into(),
        })?;
        Ok(PrecomputedEncoder { dim, table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl UtteranceEncoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Array1<f64>, EncodeError> {
        self.table
            .get(text.trim())
            .cloned()
            .ok_or_else(|| EncodeError::UnknownText {
                text: text.to_string(),
            })
    }
}

/// Encoder selection carried in run configs and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderSpec {
    Stub { dim: usize, seed: u64 },
    Precomputed { path: String },
}

impl EncoderSpec {
    pub fn build(&self) -> Result<Box<dyn UtteranceEncoder>, EncodeError> {
        match self {
            EncoderSpec::Stub { dim, seed } => Ok(Box::new(HashBagEncoder::new(*dim, *seed))),
            EncoderSpec::Precomputed { path } => {
                Ok(Box::new(PrecomputedEncoder::load(Path::new(path))?))
            }
        }
    }
}

/// Raw and context-aware vectors for one dialogue; one row per utterance.
#[derive(Debug, Clone)]
pub struct EncodedDialogue {
    pub dialogue_id: String,
    /// Encoder outputs, (n x d).
    pub raw: Array2<f64>,
    /// Contextualizer outputs, (n x d).
    pub context: Array2<f64>,
}

/// Encodes every utterance; row i holds the vector of the utterance at
/// position i+1. An encoder failure is reported with its 1-based position.
pub fn encode_utterances(
    d: &Dialogue,
    enc: &dyn UtteranceEncoder,
) -> Result<Array2<f64>, EncodeError> {
    let n = d.len();
    let mut out = Array2::zeros((n, enc.dim()));
    for (i, utt) in d.utterances.iter().enumerate() {
        let v = enc.encode(&utt.text).map_err(|e| EncodeError::AtPosition {
            position: i + 1,
            message: e.to_string(),
        })?;
        if v.len() != enc.dim() {
            return Err(EncodeError::DimMismatch {
                expected: enc.dim(),
                found: v.len(),
            });
        }
        out.row_mut(i).assign(&v);
    }
    Ok(out)
}

/// Bidirectional recurrent pass over the utterance sequence. Output keeps
/// the (n x d) shape: each half of a row is one direction's hidden state.
pub fn contextualize(raw: &Array2<f64>, ctx: &BiLstm) -> Result<Array2<f64>, EncodeError> {
    let out = ctx.forward(raw);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(EncodeError::NonFinite);
    }
    Ok(out)
}

/// Full encode-then-contextualize path for one dialogue.
pub fn encode_dialogue(
    d: &Dialogue,
    enc: &dyn UtteranceEncoder,
    ctx: &BiLstm,
) -> Result<EncodedDialogue, EncodeError> {
    let raw = encode_utterances(d, enc)?;
    let context = contextualize(&raw, ctx)?;
    Ok(EncodedDialogue {
        dialogue_id: d.id.clone(),
        raw,
        context,
    })
}
