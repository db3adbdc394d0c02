//! On-disk formats: registry and matrix TSVs, path labels, the dataset
//! manifest, model checkpoints and evaluation reports.
//!
//! Every float is written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces the exact values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use pivotroute_core::lang::MatrixEntry;
use pivotroute_core::metrics::{CdfCurve, MethodReport};
use pivotroute_core::nn::{LtrModel, TrainReport};
use pivotroute_core::routers::{PathLabels, RoutingResult};
use pivotroute_core::synth::{DatasetConfig, LabeledPair, RoutingDataset, WorldConfig};
use pivotroute_core::{LangId, Language, LanguageRegistry, Path, QualityMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: expected {expected} columns, got {got}")]
    Columns {
        line: usize,
        expected: &'static str,
        got: usize,
    },
    #[error("line {line}: {field} `{value}` is not a nonnegative integer")]
    NotInteger {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: {field} `{value}` is not a number")]
    NotNumber {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: supervised flag must be 0 or 1, got `{value}`")]
    BadFlag { line: usize, value: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        source: pivotroute_core::Error,
    },
    #[error(transparent)]
    Core(#[from] pivotroute_core::Error),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

/// Non-blank lines with their 1-based line numbers.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn number(line: usize, field: &'static str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| FormatError::NotNumber {
            line,
            field,
            value: value.into(),
        })
}

fn at_line<T>(line: usize, r: pivotroute_core::Result<T>) -> Result<T> {
    r.map_err(|source| FormatError::Line { line, source })
}

pub fn parse_registry(text: &str) -> Result<LanguageRegistry> {
    let mut langs = Vec::new();
    for (line, cols) in rows(text) {
        if cols.len() != 4 {
            return Err(FormatError::Columns {
                line,
                expected: "4",
                got: cols.len(),
            });
        }
        let mono_size = cols[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| FormatError::NotInteger {
                line,
                field: "mono_size",
                value: cols[3].into(),
            })?;
        langs.push(Language::new(cols[0], cols[1], cols[2], mono_size));
    }
    Ok(LanguageRegistry::new(langs)?)
}

pub fn format_registry(registry: &LanguageRegistry) -> String {
    let mut out = String::new();
    for l in registry.languages() {
        writeln!(out, "{}\t{}\t{}\t{}", l.code, l.name, l.branch, l.mono_size).unwrap();
    }
    out
}

/// Rows are `src tgt bleu`, optionally followed by a supervised flag. A
/// flag of 1 must be followed by the supervised score in a fifth column.
pub fn parse_matrix(text: &str, registry: &LanguageRegistry) -> Result<QualityMatrix> {
    let mut entries = Vec::new();
    for (line, cols) in rows(text) {
        if !(3..=5).contains(&cols.len()) {
            return Err(FormatError::Columns {
                line,
                expected: "3 to 5",
                got: cols.len(),
            });
        }
        let src = at_line(line, registry.id(cols[0].trim()))?;
        let tgt = at_line(line, registry.id(cols[1].trim()))?;
        let bleu = number(line, "bleu", cols[2])?;
        let supervised = match (cols.get(3).map(|s| s.trim()), cols.get(4)) {
            (None, _) | (Some("0"), None) => None,
            (Some("1"), Some(v)) => Some(number(line, "supervised bleu", v)?),
            (Some("1"), None) => {
                return Err(FormatError::Columns {
                    line,
                    expected: "5 for a supervised row",
                    got: 4,
                })
            }
            (Some("0"), Some(_)) => {
                return Err(FormatError::Columns {
                    line,
                    expected: "4 for an unsupervised row",
                    got: 5,
                })
            }
            (Some(flag), _) => {
                return Err(FormatError::BadFlag {
                    line,
                    value: flag.into(),
                })
            }
        };
        if src == tgt {
            return Err(FormatError::Line {
                line,
                source: pivotroute_core::Error::SelfPair(cols[0].into()),
            });
        }
        for v in [Some(bleu), supervised].into_iter().flatten() {
            if !(0.0..=100.0).contains(&v) {
                return Err(FormatError::Line {
                    line,
                    source: pivotroute_core::Error::ScoreOutOfRange(v),
                });
            }
        }
        entries.push(MatrixEntry {
            src,
            tgt,
            bleu,
            supervised,
        });
    }
    Ok(QualityMatrix::from_entries(registry, entries)?)
}

pub fn format_matrix(registry: &LanguageRegistry, matrix: &QualityMatrix) -> String {
    let mut out = String::new();
    for e in matrix.entries() {
        let (s, t) = (registry.code(e.src), registry.code(e.tgt));
        match e.supervised {
            None => writeln!(out, "{s}\t{t}\t{}", e.bleu),
            Some(sup) => writeln!(out, "{s}\t{t}\t{}\t1\t{sup}", e.bleu),
        }
        .unwrap();
    }
    out
}

/// `path<TAB>bleu` rows; a path may appear only once.
pub fn parse_labels(text: &str, registry: &LanguageRegistry) -> Result<PathLabels> {
    let mut labels = PathLabels::new();
    for (line, cols) in rows(text) {
        if cols.len() != 2 {
            return Err(FormatError::Columns {
                line,
                expected: "2",
                got: cols.len(),
            });
        }
        let path = at_line(line, Path::parse(cols[0].trim(), registry))?;
        let bleu = number(line, "bleu", cols[1])?;
        if !(0.0..=100.0).contains(&bleu) {
            return Err(FormatError::Line {
                line,
                source: pivotroute_core::Error::ScoreOutOfRange(bleu),
            });
        }
        if labels.insert(path, bleu).is_some() {
            return Err(FormatError::Line {
                line,
                source: pivotroute_core::Error::InvalidPath(format!(
                    "duplicate label for {}",
                    cols[0]
                )),
            });
        }
    }
    Ok(labels)
}

/// Labels of every split, pair by pair, in split order.
pub fn format_labels(registry: &LanguageRegistry, dataset: &RoutingDataset) -> String {
    let mut out = String::new();
    for pair in dataset
        .train
        .iter()
        .chain(&dataset.dev)
        .chain(&dataset.test)
    {
        for (p, bleu) in &pair.labels {
            writeln!(out, "{}\t{bleu}", p.display(registry)).unwrap();
        }
    }
    out
}

/// World generator settings recorded for synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub num_languages: usize,
    pub num_branches: usize,
    pub seed: u64,
    pub base_quality: (f64, f64),
    pub branch_affinity: f64,
    pub resource_bonus: f64,
    pub size_spread: f64,
    pub noise_sigma: f64,
}

impl From<&WorldConfig> for WorldSpec {
    fn from(c: &WorldConfig) -> Self {
        WorldSpec {
            num_languages: c.num_languages,
            num_branches: c.num_branches,
            seed: c.seed,
            base_quality: c.base_quality,
            branch_affinity: c.branch_affinity,
            resource_bonus: c.resource_bonus,
            size_spread: c.size_spread,
            noise_sigma: c.noise_sigma,
        }
    }
}

impl From<&WorldSpec> for WorldConfig {
    fn from(s: &WorldSpec) -> Self {
        WorldConfig {
            num_languages: s.num_languages,
            num_branches: s.num_branches,
            seed: s.seed,
            base_quality: s.base_quality,
            branch_affinity: s.branch_affinity,
            resource_bonus: s.resource_bonus,
            size_spread: s.size_spread,
            noise_sigma: s.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dev_frac: f64,
    pub test_frac: f64,
    pub train_path_frac: f64,
    pub seed: u64,
}

/// Split membership and the sampled training paths of a dataset. Label
/// values live in labels.tsv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// The base `--seed` the dataset was generated from.
    pub seed: u64,
    /// Present for synthetic worlds only.
    pub world: Option<WorldSpec>,
    pub split: SplitSpec,
    /// `src->tgt` pairs per split.
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    /// Sampled paths of each train pair.
    pub train_paths: BTreeMap<String, Vec<String>>,
    pub pivot_counts: BTreeMap<String, usize>,
}

fn pair_key(registry: &LanguageRegistry, x: LangId, y: LangId) -> String {
    format!("{}->{}", registry.code(x), registry.code(y))
}

impl Manifest {
    pub fn new(
        registry: &LanguageRegistry,
        dataset: &RoutingDataset,
        seed: u64,
        world: Option<&WorldConfig>,
        split: &DatasetConfig,
    ) -> Self {
        let keys = |pairs: &[LabeledPair]| -> Vec<String> {
            pairs
                .iter()
                .map(|p| pair_key(registry, p.source, p.target))
                .collect()
        };
        Manifest {
            seed,
            world: world.map(WorldSpec::from),
            split: SplitSpec {
                dev_frac: split.dev_frac,
                test_frac: split.test_frac,
                train_path_frac: split.train_path_frac,
                seed: split.seed,
            },
            train: keys(&dataset.train),
            dev: keys(&dataset.dev),
            test: keys(&dataset.test),
            train_paths: dataset
                .train
                .iter()
                .map(|p| {
                    (
                        pair_key(registry, p.source, p.target),
                        p.labels
                            .keys()
                            .map(|k| k.to_string_with(registry))
                            .collect(),
                    )
                })
                .collect(),
            pivot_counts: dataset
                .pivot_counts
                .iter()
                .map(|(&l, &c)| (registry.code(l).to_string(), c))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuilds the dataset, taking label values from `labels`. Dev and test
    /// pairs need a label for every candidate path.
    pub fn dataset(
        &self,
        registry: &LanguageRegistry,
        labels: &PathLabels,
    ) -> Result<RoutingDataset> {
        let parse_pair = |key: &str| -> Result<(LangId, LangId)> {
            let p = Path::parse(key, registry)?;
            if p.hops() != 1 {
                return Err(FormatError::Manifest(format!(
                    "`{key}` is not a language pair"
                )));
            }
            Ok((p.source(), p.target()))
        };
        let lookup = |p: &Path| -> Result<f64> {
            labels.get(p).copied().ok_or_else(|| {
                FormatError::Core(pivotroute_core::Error::MissingLabel(
                    p.to_string_with(registry),
                ))
            })
        };
        let full = |keys: &[String]| -> Result<Vec<LabeledPair>> {
            keys.iter()
                .map(|k| {
                    let (x, y) = parse_pair(k)?;
                    let set = pivotroute_core::path::candidate_paths(registry, x, y)?;
                    let labels = set
                        .paths
                        .into_iter()
                        .map(|p| lookup(&p).map(|b| (p, b)))
                        .collect::<Result<PathLabels>>()?;
                    Ok(LabeledPair {
                        source: x,
                        target: y,
                        labels,
                    })
                })
                .collect()
        };
        let mut train = Vec::with_capacity(self.train.len());
        for key in &self.train {
            let (x, y) = parse_pair(key)?;
            let paths = self
                .train_paths
                .get(key)
                .ok_or_else(|| FormatError::Manifest(format!("no sampled paths for `{key}`")))?;
            let mut pair_labels = PathLabels::new();
            for text in paths {
                let p = Path::parse(text, registry)?;
                if p.source() != x || p.target() != y {
                    return Err(FormatError::Manifest(format!(
                        "path `{text}` does not join `{key}`"
                    )));
                }
                pair_labels.insert(p.clone(), lookup(&p)?);
            }
            train.push(LabeledPair {
                source: x,
                target: y,
                labels: pair_labels,
            });
        }
        let pivot_counts = self
            .pivot_counts
            .iter()
            .map(|(code, &c)| Ok((registry.id(code)?, c)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(RoutingDataset {
            train,
            dev: full(&self.dev)?,
            test: full(&self.test)?,
            pivot_counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// A model with the language codes its embedding rows belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub languages: Vec<String>,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub tensors: BTreeMap<String, TensorData>,
}

impl Checkpoint {
    pub fn new(model: &LtrModel, registry: &LanguageRegistry) -> Self {
        let params = model.params();
        let tensors = model
            .tensors()
            .into_iter()
            .map(|t| {
                let data = params[t.offset..t.offset + t.len()].to_vec();
                (
                    t.name,
                    TensorData {
                        shape: t.shape,
                        data,
                    },
                )
            })
            .collect();
        Checkpoint {
            languages: registry
                .languages()
                .iter()
                .map(|l| l.code.clone())
                .collect(),
            hidden_dim: model.hidden_dim(),
            num_layers: model.num_layers(),
            tensors,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuilds the model; the registry must list the same codes in the same order.
    pub fn model(&self, registry: &LanguageRegistry) -> Result<LtrModel> {
        let codes: Vec<&str> = registry
            .languages()
            .iter()
            .map(|l| l.code.as_str())
            .collect();
        if codes
            != self
                .languages
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>()
        {
            return Err(FormatError::Checkpoint(
                "language list differs from the registry".into(),
            ));
        }
        let mut model = LtrModel::zeros(self.languages.len(), self.hidden_dim, self.num_layers)?;
        let specs = model.tensors();
        if specs.len() != self.tensors.len() {
            return Err(FormatError::Checkpoint(format!(
                "expected {} tensors, got {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for spec in specs {
            let t = self.tensors.get(&spec.name).ok_or_else(|| {
                FormatError::Checkpoint(format!("missing tensor `{}`", spec.name))
            })?;
            if t.shape != spec.shape || t.data.len() != spec.len() {
                return Err(FormatError::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    spec.name, t.shape, spec.shape
                )));
            }
            model.params_mut()[spec.offset..spec.offset + spec.len()].copy_from_slice(&t.data);
        }
        Ok(model)
    }
}

/// One row per epoch, preceded by the pre-training MSE as epoch `init`.
pub fn format_train_report(report: &TrainReport) -> String {
    let mut out = String::from("epoch\ttrain_mse\tdev_top1\tselected\n");
    writeln!(out, "init\t{}\t\t0", report.initial_mse).unwrap();
    for (i, (mse, top1)) in report.train_mse.iter().zip(&report.dev_top1).enumerate() {
        let sel = u8::from(i == report.selected_epoch);
        writeln!(out, "{i}\t{mse}\t{top1}\t{sel}").unwrap();
    }
    out
}

pub fn format_report(reports: &[MethodReport]) -> String {
    let mut out = String::from("method\tavg_bleu\ttop1\ttop5\n");
    for r in reports {
        writeln!(out, "{}\t{}\t{}\t{}", r.method, r.avg_bleu, r.top1, r.top5).unwrap();
    }
    out
}

pub fn format_cdf(curve: &CdfCurve) -> String {
    let mut out = String::from("bleu,fraction\n");
    for (b, f) in &curve.points {
        writeln!(out, "{b},{f}").unwrap();
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn format_route_row(registry: &LanguageRegistry, r: &RoutingResult) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        registry.code(r.source),
        registry.code(r.target),
        r.method,
        r.chosen.display(registry),
        opt(r.predicted),
        opt(r.actual)
    )
}

pub fn format_routes(registry: &LanguageRegistry, reports: &[MethodReport]) -> String {
    let mut out = String::from("src\ttgt\tmethod\tpath\tpredicted\tactual\n");
    for r in reports {
        for row in &r.rows {
            out.push_str(&format_route_row(registry, row));
            out.push('\n');
        }
    }
    out
}

/// Per-pair listing: one line per test pair with every method's chosen
/// path and its BLEU side by side.
pub fn format_pairs(registry: &LanguageRegistry, reports: &[MethodReport]) -> String {
    let mut out = String::from("src\ttgt");
    for r in reports {
        write!(out, "\t{m}_path\t{m}_bleu", m = r.method).unwrap();
    }
    out.push('\n');
    let n = reports.first().map_or(0, |r| r.rows.len());
    for i in 0..n {
        let first = &reports[0].rows[i];
        write!(
            out,
            "{}\t{}",
            registry.code(first.source),
            registry.code(first.target)
        )
        .unwrap();
        for r in reports {
            let row = &r.rows[i];
            write!(
                out,
                "\t{}\t{}",
                row.chosen.display(registry),
                opt(row.actual)
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_text(path: &FsPath) -> anyhow::Result<String> {
    use anyhow::Context;
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_text(path: &FsPath, text: &str) -> anyhow::Result<()> {
    use anyhow::Context;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
