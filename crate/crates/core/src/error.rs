use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no languages")]
    NoLanguages,
    #[error("registry needs at least {needed} languages, got {got}")]
    TooFewLanguages { needed: usize, got: usize },
    #[error("registry needs at least 2 branches for distant pairs, got {0}")]
    TooFewBranches(usize),
    #[error("duplicate language code `{0}`")]
    DuplicateCode(String),
    #[error("unknown language code `{0}`")]
    UnknownLanguage(String),
    #[error("language id {0} out of range")]
    UnknownLanguageId(usize),
    #[error("self pair `{0}`: source and target must differ")]
    SelfPair(String),
    #[error("missing score for pair {src}->{tgt}")]
    MissingPair { src: String, tgt: String },
    #[error("duplicate score for pair {src}->{tgt}")]
    DuplicatePair { src: String, tgt: String },
    #[error("BLEU score {0} outside [0, 100]")]
    ScoreOutOfRange(f64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("pivot pool contains an endpoint `{0}`")]
    PivotIsEndpoint(String),
    #[error("max hops must be 1, 2 or 3, got {0}")]
    InvalidHops(usize),
    #[error("branch `{0}` has no languages")]
    EmptyBranch(String),
    #[error("no pivot for branch `{0}`")]
    MissingBranchPivot(String),
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("missing label for path {0}")]
    MissingLabel(String),
    #[error("empty input")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite training loss at epoch {0}")]
    Diverged(usize),
    #[error(
        "supervised boost for {src}->{tgt} ({boost}) is below the existing score ({existing})"
    )]
    BoostBelowScore {
        src: String,
        tgt: String,
        boost: f64,
        existing: f64,
    },
    #[error("supervised boost edge {src}->{tgt} is outside the pivot set")]
    BoostOutsidePivots { src: String, tgt: String },
    #[error("too few distant pairs ({0}) to build disjoint splits")]
    TooFewPairs(usize),
}
