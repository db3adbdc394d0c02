//! Language registry, branch taxonomy, and the one-hop quality matrix.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Index of a language inside its [`LanguageRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangId(pub usize);

impl LangId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LangId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Language {
    pub code: String,
    pub name: String,
    /// Opaque branch label; two languages are distant iff their labels differ.
    pub branch: String,
    /// Abstract monolingual data size, only used to pick branch pivots.
    pub mono_size: u64,
}

impl Language {
    pub fn new(code: &str, name: &str, branch: &str, mono_size: u64) -> Self {
        Language {
            code: code.to_string(),
            name: name.to_string(),
            branch: branch.to_string(),
            mono_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageRegistry {
    languages: Vec<Language>,
    branches: BTreeSet<String>,
}

impl LanguageRegistry {
    /// Builds a registry, preserving the given order. Codes must be unique.
    pub fn new(languages: Vec<Language>) -> Result<Self> {
        if languages.is_empty() {
            return Err(Error::NoLanguages);
        }
        if languages.len() < 2 {
            return Err(Error::TooFewLanguages {
                needed: 2,
                got: languages.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for lang in &languages {
            if !seen.insert(lang.code.as_str()) {
                return Err(Error::DuplicateCode(lang.code.clone()));
            }
        }
        let branches = languages.iter().map(|l| l.branch.clone()).collect();
        Ok(LanguageRegistry {
            languages,
            branches,
        })
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }

    pub fn ids(&self) -> impl Iterator<Item = LangId> + '_ {
        (0..self.languages.len()).map(LangId)
    }

    /// Branch labels in sorted order.
    pub fn branches(&self) -> impl Iterator<Item = &str> + '_ {
        self.branches.iter().map(String::as_str)
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn id(&self, code: &str) -> Result<LangId> {
        self.languages
            .iter()
            .position(|l| l.code == code)
            .map(LangId)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn get(&self, id: LangId) -> Result<&Language> {
        self.languages
            .get(id.0)
            .ok_or(Error::UnknownLanguageId(id.0))
    }

    /// Panics on an id from another registry.
    pub fn code(&self, id: LangId) -> &str {
        &self.languages[id.0].code
    }

    pub fn branch(&self, id: LangId) -> &str {
        &self.languages[id.0].branch
    }

    /// Members of `branch`, in registry order.
    pub fn branch_members(&self, branch: &str) -> Vec<LangId> {
        self.ids().filter(|&id| self.branch(id) == branch).collect()
    }

    /// Two languages are distant when they sit in different branches.
    pub fn is_distant(&self, x: LangId, y: LangId) -> Result<bool> {
        let (lx, ly) = (self.get(x)?, self.get(y)?);
        if x == y {
            return Err(Error::SelfPair(lx.code.clone()));
        }
        Ok(lx.branch != ly.branch)
    }

    pub fn is_distant_code(&self, x: &str, y: &str) -> Result<bool> {
        self.is_distant(self.id(x)?, self.id(y)?)
    }

    /// All ordered distant pairs, row-major in registry order.
    pub fn distant_pairs(&self) -> Result<Vec<(LangId, LangId)>> {
        if self.num_branches() < 2 {
            return Err(Error::TooFewBranches(self.num_branches()));
        }
        let mut pairs = Vec::new();
        for x in self.ids() {
            for y in self.ids() {
                if x != y && self.branch(x) != self.branch(y) {
                    pairs.push((x, y));
                }
            }
        }
        Ok(pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// Directed one-hop BLEU scores between every ordered pair of languages.
///
/// Each edge carries its unsupervised score and, optionally, a stronger
/// supervised score. The supervised score only applies when the edge is the
/// middle hop of a three-hop path; see [`QualityMatrix::hop_score`].
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMatrix {
    size: usize,
    /// Row-major; diagonal slots hold an unused 0.0.
    scores: Vec<f64>,
    supervised: Vec<Option<f64>>,
}

/// One row of matrix input: source, target, unsupervised score, optional supervised score.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEntry {
    pub src: LangId,
    pub tgt: LangId,
    pub bleu: f64,
    pub supervised: Option<f64>,
}

pub(crate) fn check_bleu(score: f64) -> Result<f64> {
    if (0.0..=100.0).contains(&score) {
        Ok(score)
    } else {
        Err(Error::ScoreOutOfRange(score))
    }
}

impl QualityMatrix {
    /// Fills every off-diagonal entry from `score(src, tgt)`.
    pub fn from_fn(size: usize, mut score: impl FnMut(LangId, LangId) -> f64) -> Result<Self> {
        let mut scores = alloc::vec![0.0; size * size];
        for s in 0..size {
            for t in 0..size {
                if s != t {
                    scores[s * size + t] = check_bleu(score(LangId(s), LangId(t)))?;
                }
            }
        }
        Ok(QualityMatrix {
            size,
            scores,
            supervised: alloc::vec![None; size * size],
        })
    }

    /// Builds a matrix that must contain every ordered pair exactly once.
    pub fn from_entries(
        registry: &LanguageRegistry,
        entries: impl IntoIterator<Item = MatrixEntry>,
    ) -> Result<Self> {
        let n = registry.len();
        let mut scores = alloc::vec![0.0; n * n];
        let mut supervised = alloc::vec![None; n * n];
        let mut filled = alloc::vec![false; n * n];
        for e in entries {
            registry.get(e.src)?;
            registry.get(e.tgt)?;
            if e.src == e.tgt {
                return Err(Error::SelfPair(registry.code(e.src).to_string()));
            }
            let idx = e.src.0 * n + e.tgt.0;
            if filled[idx] {
                return Err(Error::DuplicatePair {
                    src: registry.code(e.src).to_string(),
                    tgt: registry.code(e.tgt).to_string(),
                });
            }
            filled[idx] = true;
            scores[idx] = check_bleu(e.bleu)?;
            supervised[idx] = e.supervised.map(check_bleu).transpose()?;
        }
        for s in registry.ids() {
            for t in registry.ids() {
                if s != t && !filled[s.0 * n + t.0] {
                    return Err(Error::MissingPair {
                        src: registry.code(s).to_string(),
                        tgt: registry.code(t).to_string(),
                    });
                }
            }
        }
        Ok(QualityMatrix {
            size: n,
            scores,
            supervised,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn idx(&self, src: LangId, tgt: LangId) -> usize {
        assert!(
            src.0 < self.size && tgt.0 < self.size,
            "language id out of range"
        );
        assert!(src != tgt, "diagonal entries are undefined");
        src.0 * self.size + tgt.0
    }

    /// Unsupervised one-hop score.
    pub fn score(&self, src: LangId, tgt: LangId) -> f64 {
        self.scores[self.idx(src, tgt)]
    }

    pub fn supervised_score(&self, src: LangId, tgt: LangId) -> Option<f64> {
        self.supervised[self.idx(src, tgt)]
    }

    pub fn is_supervised(&self, src: LangId, tgt: LangId) -> bool {
        self.supervised_score(src, tgt).is_some()
    }

    /// Score of hop `hop` (0-based) inside a path of `hops` hops.
    ///
    /// A supervised edge contributes its supervised score only as the middle
    /// hop of a three-hop path; anywhere else it falls back to the
    /// unsupervised score.
    pub fn hop_score(&self, src: LangId, tgt: LangId, hop: usize, hops: usize) -> f64 {
        let idx = self.idx(src, tgt);
        match self.supervised[idx] {
            Some(sup) if hops == 3 && hop == 1 => sup,
            _ => self.scores[idx],
        }
    }

    /// Returns a copy with the supervised score of one edge set.
    pub fn with_supervised(&self, src: LangId, tgt: LangId, score: f64) -> Result<Self> {
        let mut out = self.clone();
        let idx = out.idx(src, tgt);
        out.supervised[idx] = Some(check_bleu(score)?);
        Ok(out)
    }

    /// Mean of a language's outgoing or incoming unsupervised scores.
    pub fn lang_avg_bleu(&self, lang: LangId, direction: Direction) -> Result<f64> {
        if lang.0 >= self.size {
            return Err(Error::UnknownLanguageId(lang.0));
        }
        let others = (0..self.size).filter(|&o| o != lang.0).map(LangId);
        let sum: f64 = match direction {
            Direction::Outgoing => others.map(|o| self.score(lang, o)).sum(),
            Direction::Incoming => others.map(|o| self.score(o, lang)).sum(),
        };
        Ok(sum / (self.size - 1) as f64)
    }

    /// Every defined entry in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = MatrixEntry> + '_ {
        (0..self.size).flat_map(move |s| {
            (0..self.size).filter(move |&t| t != s).map(move |t| {
                let idx = s * self.size + t;
                MatrixEntry {
                    src: LangId(s),
                    tgt: LangId(t),
                    bleu: self.scores[idx],
                    supervised: self.supervised[idx],
                }
            })
        })
    }
}
