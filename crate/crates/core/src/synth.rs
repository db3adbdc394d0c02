//! Deterministic synthetic language worlds and routing datasets.
//!
//! A world is a registry plus a one-hop quality matrix. Multi-hop ground
//! truth comes from [`PathOracle`]: the product of normalized hop scores with
//! a small per-path multiplicative noise. This is a stand-in for measured
//! path BLEU, not a model of real translation systems.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lang::{LangId, Language, LanguageRegistry, QualityMatrix};
use crate::path::{candidate_paths, Path};
use crate::routers::{pivot_counts, PathLabels};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub num_languages: usize,
    pub num_branches: usize,
    pub seed: u64,
    /// Range of the random part of every one-hop score.
    pub base_quality: (f64, f64),
    /// Added to pairs inside one branch.
    pub branch_affinity: f64,
    /// Scaled by the product of both languages' resource levels and added to
    /// every pair, so well-resourced languages make good pivots.
    pub resource_bonus: f64,
    /// Monolingual sizes span `10^6 .. 10^(6 + size_spread)`.
    pub size_spread: f64,
    /// Standard deviation of the multiplicative path noise.
    pub noise_sigma: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_languages: 20,
            num_branches: 4,
            seed: 0,
            base_quality: (1.0, 8.0),
            branch_affinity: 60.0,
            resource_bonus: 40.0,
            size_spread: 2.0,
            noise_sigma: 0.05,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.num_branches < 2 {
            return invalid(format!(
                "need at least 2 branches for distant pairs, got {}",
                self.num_branches
            ));
        }
        if self.num_languages < self.num_branches {
            return invalid(format!(
                "{} languages cannot fill {} branches",
                self.num_languages, self.num_branches
            ));
        }
        let (lo, hi) = self.base_quality;
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        if !(in_range(lo) && in_range(hi) && lo <= hi) {
            return invalid(format!(
                "base quality range ({lo}, {hi}) must lie in [0, 100]"
            ));
        }
        if !in_range(self.branch_affinity) || !in_range(self.resource_bonus) {
            return invalid("branch affinity and resource bonus must lie in [0, 100]".into());
        }
        if !(self.size_spread >= 0.0 && self.size_spread <= 12.0) {
            return invalid(format!(
                "size spread {} must lie in [0, 12]",
                self.size_spread
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!(
                "noise sigma {} must be nonnegative",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a sub-stream keyed by a sequence of integers.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Ground-truth BLEU of any path in a world.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOracle {
    matrix: QualityMatrix,
    seed: u64,
    noise_sigma: f64,
}

impl PathOracle {
    pub fn new(matrix: QualityMatrix, seed: u64, noise_sigma: f64) -> Self {
        PathOracle {
            matrix,
            seed,
            noise_sigma,
        }
    }

    pub fn matrix(&self) -> &QualityMatrix {
        &self.matrix
    }

    /// Same noise stream over a different matrix.
    pub fn with_matrix(&self, matrix: QualityMatrix) -> Self {
        PathOracle {
            matrix,
            ..self.clone()
        }
    }

    /// Multiplicative noise of a multi-hop path, fixed per (seed, path).
    pub fn path_noise(&self, path: &Path) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        let keys: Vec<u64> = path.langs().iter().map(|l| l.0 as u64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &keys));
        Normal::new(0.0, self.noise_sigma)
            .expect("validated sigma")
            .sample(&mut rng)
    }

    /// One-hop paths return the matrix entry; longer paths compose
    /// `100 * prod(q_i / 100) * (1 + noise)`, clamped to `[0, 100]`.
    pub fn label(&self, path: &Path) -> f64 {
        let hops = path.hops();
        if hops == 1 {
            return self.matrix.score(path.source(), path.target());
        }
        let q: f64 = path
            .hop_pairs()
            .enumerate()
            .map(|(i, (s, t))| self.matrix.hop_score(s, t, i, hops) / 100.0)
            .product();
        (100.0 * q * (1.0 + self.path_noise(path))).clamp(0.0, 100.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub registry: LanguageRegistry,
    pub matrix: QualityMatrix,
    pub oracle: PathOracle,
}

/// Generates a world. Languages go round-robin over branches.
pub fn gen_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_languages;
    let resources: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let languages: Vec<Language> = (0..n)
        .map(|i| {
            let size = libm::pow(10.0, 6.0 + config.size_spread * resources[i]);
            Language {
                code: format!("l{i:02}"),
                name: format!("Language {i}"),
                branch: format!("b{}", i % config.num_branches),
                mono_size: libm::round(size) as u64,
            }
        })
        .collect();
    let registry = LanguageRegistry::new(languages)?;

    let (lo, hi) = config.base_quality;
    let matrix = QualityMatrix::from_fn(n, |s, t| {
        let mut q = lo + (hi - lo) * rng.random::<f64>();
        if registry.branch(s) == registry.branch(t) {
            q += config.branch_affinity;
        }
        q += config.resource_bonus * resources[s.0] * resources[t.0];
        q.clamp(0.0, 100.0)
    })?;
    let oracle = PathOracle::new(
        matrix.clone(),
        derive_seed(config.seed, &[0x6f72_6163]),
        config.noise_sigma,
    );
    Ok(World {
        registry,
        matrix,
        oracle,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub source: LangId,
    pub target: LangId,
    pub labels: PathLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDataset {
    pub train: Vec<LabeledPair>,
    pub dev: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub pivot_counts: BTreeMap<LangId, usize>,
}

impl RoutingDataset {
    /// Recomputes every label with `oracle`, keeping the sampled paths.
    pub fn relabel(&self, oracle: &PathOracle) -> Self {
        let relabel = |pairs: &[LabeledPair]| -> Vec<LabeledPair> {
            pairs
                .iter()
                .map(|p| LabeledPair {
                    labels: p
                        .labels
                        .keys()
                        .map(|k| (k.clone(), oracle.label(k)))
                        .collect(),
                    ..p.clone()
                })
                .collect()
        };
        RoutingDataset {
            train: relabel(&self.train),
            dev: relabel(&self.dev),
            test: relabel(&self.test),
            pivot_counts: self.pivot_counts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub dev_frac: f64,
    pub test_frac: f64,
    pub train_path_frac: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            dev_frac: 0.05,
            test_frac: 0.10,
            train_path_frac: 0.10,
            seed: 1,
        }
    }
}

/// Number of direction pairs in a split: `frac * total` rounded to the
/// nearest even count (halves round up).
pub fn split_pairs(total: usize, frac: f64) -> usize {
    2 * libm::round(frac * total as f64 / 2.0) as usize
}

/// Splits distant pairs into train/dev/test keeping `X->Y` and `Y->X`
/// together, labels every candidate path of dev and test pairs, and a
/// sampled fraction (always with the direct path) of every train pair.
pub fn build_dataset(
    registry: &LanguageRegistry,
    oracle: &PathOracle,
    config: &DatasetConfig,
) -> Result<RoutingDataset> {
    build_dataset_with(registry, config, |p| Ok(oracle.label(p)))
}

/// [`build_dataset`] with labels from an arbitrary source, e.g. measured
/// scores loaded from disk.
pub fn build_dataset_with(
    registry: &LanguageRegistry,
    config: &DatasetConfig,
    mut label: impl FnMut(&Path) -> Result<f64>,
) -> Result<RoutingDataset> {
    for (name, f) in [
        ("dev_frac", config.dev_frac),
        ("test_frac", config.test_frac),
        ("train_path_frac", config.train_path_frac),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "{name} must be in (0, 1), got {f}"
            )));
        }
    }
    let pairs = registry.distant_pairs()?;
    let total = pairs.len();
    let mut groups: Vec<(LangId, LangId)> = pairs.into_iter().filter(|(x, y)| x < y).collect();
    let n_test = split_pairs(total, config.test_frac) / 2;
    let n_dev = split_pairs(total, config.dev_frac) / 2;
    if n_test == 0 || n_dev == 0 || n_test + n_dev >= groups.len() {
        return Err(Error::TooFewPairs(total));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    groups.shuffle(&mut rng);
    let expand = |gs: &[(LangId, LangId)]| -> Vec<(LangId, LangId)> {
        let mut v: Vec<_> = gs.iter().flat_map(|&(x, y)| [(x, y), (y, x)]).collect();
        v.sort();
        v
    };
    let test_pairs = expand(&groups[..n_test]);
    let dev_pairs = expand(&groups[n_test..n_test + n_dev]);
    let train_pairs = expand(&groups[n_test + n_dev..]);

    let mut full = |pairs: &[(LangId, LangId)]| -> Result<Vec<LabeledPair>> {
        let mut out = Vec::with_capacity(pairs.len());
        for &(x, y) in pairs {
            let mut labels = PathLabels::new();
            for p in candidate_paths(registry, x, y)?.paths {
                let l = label(&p)?;
                labels.insert(p, l);
            }
            out.push(LabeledPair {
                source: x,
                target: y,
                labels,
            });
        }
        Ok(out)
    };
    let test = full(&test_pairs)?;
    let dev = full(&dev_pairs)?;

    let mut train = Vec::with_capacity(train_pairs.len());
    for &(x, y) in &train_pairs {
        let set = candidate_paths(registry, x, y)?;
        let n = set.len();
        let k = (libm::round(config.train_path_frac * n as f64) as usize).clamp(1, n);
        // Direct path is index 0; sample the rest without replacement.
        let mut picked: Vec<usize> = index::sample(&mut rng, n - 1, k - 1)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        picked.push(0);
        picked.sort_unstable();
        let mut labels = PathLabels::new();
        for i in picked {
            let p = set.paths[i].clone();
            let l = label(&p)?;
            labels.insert(p, l);
        }
        train.push(LabeledPair {
            source: x,
            target: y,
            labels,
        });
    }
    let counts = pivot_counts(train.iter().flat_map(|p| p.labels.keys()));
    Ok(RoutingDataset {
        train,
        dev,
        test,
        pivot_counts: counts,
    })
}

/// Marks `boost` edges as supervised with the given scores. Every boosted
/// edge must join two pivots and must not lower the existing score.
pub fn apply_supervised_overlay(
    registry: &LanguageRegistry,
    matrix: &QualityMatrix,
    pivot_set: &[LangId],
    boost: &BTreeMap<(LangId, LangId), f64>,
) -> Result<QualityMatrix> {
    let mut out = matrix.clone();
    for (&(s, t), &score) in boost {
        let name = |l: LangId| registry.code(l).into();
        if !pivot_set.contains(&s) || !pivot_set.contains(&t) {
            return Err(Error::BoostOutsidePivots {
                src: name(s),
                tgt: name(t),
            });
        }
        let existing = matrix.score(s, t);
        if score < existing {
            return Err(Error::BoostBelowScore {
                src: name(s),
                tgt: name(t),
                boost: score,
                existing,
            });
        }
        out = out.with_supervised(s, t, score)?;
    }
    Ok(out)
}

/// `score + delta` (capped at 100) on every ordered edge among `pivots`.
pub fn uniform_boost(
    matrix: &QualityMatrix,
    pivots: &[LangId],
    delta: f64,
) -> BTreeMap<(LangId, LangId), f64> {
    let mut boost = BTreeMap::new();
    for &s in pivots {
        for &t in pivots {
            if s != t {
                boost.insert((s, t), (matrix.score(s, t) + delta).min(100.0));
            }
        }
    }
    boost
}
