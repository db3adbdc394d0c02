//! Path tokenization and per-token feature vectors.
//!
//! A path `X -> Z1 -> Y` becomes the token sequence `X, X->Z1, Z1, Z1->Y, Y`.
//! Each token gets a 6-dimensional vector: a 5-dimensional trainable
//! embedding followed by a normalized BLEU feature.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lang::{check_bleu, Direction, LangId, QualityMatrix};
use crate::path::Path;

pub const EMBED_DIM: usize = 5;
pub const FEATURE_DIM: usize = EMBED_DIM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Lang(LangId),
    Hop(LangId, LangId),
}

/// `L0, H0, L1, H1, .., Lh`: `2h + 1` tokens for an `h`-hop path.
pub fn tokenize_path(path: &Path) -> Vec<Token> {
    let langs = path.langs();
    let mut tokens = Vec::with_capacity(2 * path.hops() + 1);
    tokens.push(Token::Lang(langs[0]));
    for w in langs.windows(2) {
        tokens.push(Token::Hop(w[0], w[1]));
        tokens.push(Token::Lang(w[1]));
    }
    tokens
}

pub fn normalize_bleu(score: f64) -> Result<f64> {
    Ok(check_bleu(score)? / 100.0)
}

/// Read-only view of a row-major `languages x EMBED_DIM` table.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings<'a> {
    data: &'a [f64],
}

impl<'a> Embeddings<'a> {
    pub fn new(data: &'a [f64]) -> Result<Self> {
        if !data.len().is_multiple_of(EMBED_DIM) {
            return Err(Error::DimensionMismatch {
                expected: EMBED_DIM * (data.len() / EMBED_DIM + 1),
                got: data.len(),
            });
        }
        Ok(Embeddings { data })
    }

    pub fn num_languages(&self) -> usize {
        self.data.len() / EMBED_DIM
    }

    pub fn row(&self, lang: LangId) -> Result<&'a [f64]> {
        let start = lang.0 * EMBED_DIM;
        self.data
            .get(start..start + EMBED_DIM)
            .ok_or(Error::UnknownLanguageId(lang.0))
    }
}

/// Language tokens use their row; hop tokens average the two endpoint rows.
pub fn token_embedding(token: Token, table: Embeddings<'_>) -> Result<[f64; EMBED_DIM]> {
    let mut out = [0.0; EMBED_DIM];
    match token {
        Token::Lang(l) => out.copy_from_slice(table.row(l)?),
        Token::Hop(s, t) => {
            let (rs, rt) = (table.row(s)?, table.row(t)?);
            for (o, (a, b)) in out.iter_mut().zip(rs.iter().zip(rt)) {
                *o = 0.5 * (a + b);
            }
        }
    }
    Ok(out)
}

/// Normalized BLEU feature of the token at `position` in `path`'s token sequence.
///
/// Hops use their one-hop score (honoring the supervised middle-hop rule).
/// The source language uses its outgoing average, the target its incoming
/// average, and an interior pivot the mean of both.
pub fn token_bleu_feature(
    token: Token,
    position: usize,
    path: &Path,
    matrix: &QualityMatrix,
) -> Result<f64> {
    let check = |l: LangId| {
        if l.0 < matrix.size() {
            Ok(l)
        } else {
            Err(Error::UnknownLanguageId(l.0))
        }
    };
    let last = 2 * path.hops();
    match token {
        Token::Hop(s, t) => {
            check(s)?;
            check(t)?;
            normalize_bleu(matrix.hop_score(s, t, position / 2, path.hops()))
        }
        Token::Lang(l) => {
            let l = check(l)?;
            let score = if position == 0 {
                matrix.lang_avg_bleu(l, Direction::Outgoing)?
            } else if position == last {
                matrix.lang_avg_bleu(l, Direction::Incoming)?
            } else {
                0.5 * (matrix.lang_avg_bleu(l, Direction::Incoming)?
                    + matrix.lang_avg_bleu(l, Direction::Outgoing)?)
            };
            normalize_bleu(score)
        }
    }
}

/// A path's tokens and their BLEU features; the embedding half of each
/// feature vector is looked up from the model at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPath {
    pub tokens: Vec<Token>,
    pub bleu: Vec<f64>,
}

impl EncodedPath {
    pub fn new(path: &Path, matrix: &QualityMatrix) -> Result<Self> {
        let tokens = tokenize_path(path);
        let bleu = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| token_bleu_feature(t, i, path, matrix))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedPath { tokens, bleu })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn features(&self, table: Embeddings<'_>) -> Result<FeatureSequence> {
        let vectors = self
            .tokens
            .iter()
            .zip(&self.bleu)
            .map(|(&t, &b)| {
                let emb = token_embedding(t, table)?;
                let mut v = [0.0; FEATURE_DIM];
                v[..EMBED_DIM].copy_from_slice(&emb);
                v[EMBED_DIM] = b;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSequence { vectors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub vectors: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn featurize(
    path: &Path,
    matrix: &QualityMatrix,
    table: Embeddings<'_>,
) -> Result<FeatureSequence> {
    EncodedPath::new(path, matrix)?.features(table)
}
