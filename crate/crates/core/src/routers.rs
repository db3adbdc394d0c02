//! Path selection strategies.
//!
//! Every router picks one path out of a pair's candidate set. Scored routers
//! rank with [`rank_scored`]: higher score first, then fewer hops, then the
//! textual form of the path.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::EncodedPath;
use crate::lang::{LangId, LanguageRegistry, QualityMatrix};
use crate::nn::{predict, LtrModel};
use crate::path::{rank_scored, Path, PathSet};

/// Known BLEU labels for some paths of one pair.
pub type PathLabels = BTreeMap<Path, f64>;

pub const DEFAULT_PIVOT_MIN_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Direct translation.
    Dt,
    /// Random routing.
    Rr,
    /// Hop average.
    Ha,
    /// Prior pivoting.
    Pp,
    /// Learning to route.
    Ltr,
    /// Ground truth.
    Gt,
}

impl Method {
    /// Report column order.
    pub const ALL: [Method; 6] = [
        Method::Dt,
        Method::Rr,
        Method::Ha,
        Method::Pp,
        Method::Ltr,
        Method::Gt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dt => "DT",
            Method::Rr => "RR",
            Method::Ha => "HA",
            Method::Pp => "PP",
            Method::Ltr => "LTR",
            Method::Gt => "GT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingResult {
    pub source: LangId,
    pub target: LangId,
    pub method: Method,
    pub chosen: Path,
    /// Predicted BLEU points, for methods that score paths.
    pub predicted: Option<f64>,
    /// Labeled BLEU points of the chosen path, when known.
    pub actual: Option<f64>,
}

pub fn route_direct(x: LangId, y: LangId) -> Result<Path> {
    Path::direct(x, y)
}

pub fn route_random(candidates: &PathSet, seed: u64) -> Result<Path> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rng.random_range(0..candidates.len());
    Ok(candidates.paths[idx].clone())
}

/// Branch label to that branch's pivot language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotMap(BTreeMap<String, LangId>);

impl PivotMap {
    pub fn get(&self, branch: &str) -> Option<LangId> {
        self.0.get(branch).copied()
    }

    pub fn pivots(&self) -> impl Iterator<Item = (&str, LangId)> + '_ {
        self.0.iter().map(|(b, &l)| (b.as_str(), l))
    }
}

/// Picks the language with the most monolingual data in each branch; ties go
/// to the smaller code.
pub fn build_pivot_map(registry: &LanguageRegistry) -> Result<PivotMap> {
    let mut map = BTreeMap::new();
    for branch in registry.branches() {
        let pivot = registry
            .branch_members(branch)
            .into_iter()
            .max_by(|&a, &b| {
                let (la, lb) = (&registry.languages()[a.0], &registry.languages()[b.0]);
                la.mono_size
                    .cmp(&lb.mono_size)
                    .then_with(|| lb.code.cmp(&la.code))
            })
            .ok_or_else(|| Error::EmptyBranch(branch.to_string()))?;
        map.insert(branch.to_string(), pivot);
    }
    Ok(PivotMap(map))
}

/// `X -> P_X -> P_Y -> Y`, with repeated consecutive languages collapsed.
pub fn route_prior_pivot(
    registry: &LanguageRegistry,
    x: LangId,
    y: LangId,
    pivots: &PivotMap,
) -> Result<Path> {
    if x == y {
        return Err(Error::SelfPair(registry.code(x).to_string()));
    }
    let pivot_of = |l: LangId| -> Result<LangId> {
        let branch = registry.get(l)?.branch.as_str();
        pivots
            .get(branch)
            .ok_or_else(|| Error::MissingBranchPivot(branch.to_string()))
    };
    let (px, py) = (pivot_of(x)?, pivot_of(y)?);
    Path::collapsed(&[x, px, py, y])
}

/// Mean one-hop score along the path.
pub fn hop_average(path: &Path, matrix: &QualityMatrix) -> f64 {
    let hops = path.hops();
    let sum: f64 = path
        .hop_pairs()
        .enumerate()
        .map(|(i, (s, t))| matrix.hop_score(s, t, i, hops))
        .sum();
    sum / hops as f64
}

pub fn rank_hop_average(
    candidates: &PathSet,
    matrix: &QualityMatrix,
    registry: &LanguageRegistry,
) -> Result<Vec<(Path, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scored: Vec<(Path, f64)> = candidates
        .paths
        .iter()
        .map(|p| (p.clone(), hop_average(p, matrix)))
        .collect();
    rank_scored(&mut scored, registry);
    Ok(scored)
}

pub fn route_hop_average(
    candidates: &PathSet,
    matrix: &QualityMatrix,
    registry: &LanguageRegistry,
) -> Result<(Path, f64)> {
    Ok(rank_hop_average(candidates, matrix, registry)?.swap_remove(0))
}

/// Occurrences of each language as a pivot among labeled training paths.
pub fn pivot_counts<'a>(paths: impl IntoIterator<Item = &'a Path>) -> BTreeMap<LangId, usize> {
    let mut counts = BTreeMap::new();
    for p in paths {
        for &z in p.pivots() {
            *counts.entry(z).or_insert(0) += 1;
        }
    }
    counts
}

/// Drops paths through any pivot seen fewer than `min_count` times. The
/// direct path has no pivots and always survives.
pub fn filter_rare_pivots(
    candidates: &PathSet,
    min_count: usize,
    counts: &BTreeMap<LangId, usize>,
) -> PathSet {
    let keep = |p: &&Path| {
        p.pivots()
            .iter()
            .all(|z| counts.get(z).copied().unwrap_or(0) >= min_count)
    };
    PathSet {
        source: candidates.source,
        target: candidates.target,
        paths: candidates.paths.iter().filter(keep).cloned().collect(),
    }
}

/// LTR ranking of the filtered candidates; scores are predicted BLEU points.
pub fn rank_ltr(
    candidates: &PathSet,
    matrix: &QualityMatrix,
    registry: &LanguageRegistry,
    model: &LtrModel,
    pivot_min_count: usize,
    counts: &BTreeMap<LangId, usize>,
) -> Result<Vec<(Path, f64)>> {
    let kept = filter_rare_pivots(candidates, pivot_min_count, counts);
    if kept.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scored = kept
        .paths
        .into_iter()
        .map(|p| {
            let pred = predict(model, &EncodedPath::new(&p, matrix)?)?;
            Ok((p, 100.0 * pred))
        })
        .collect::<Result<Vec<_>>>()?;
    rank_scored(&mut scored, registry);
    Ok(scored)
}

pub fn route_ltr(
    candidates: &PathSet,
    matrix: &QualityMatrix,
    registry: &LanguageRegistry,
    model: &LtrModel,
    pivot_min_count: usize,
    counts: &BTreeMap<LangId, usize>,
) -> Result<(Path, f64)> {
    Ok(rank_ltr(candidates, matrix, registry, model, pivot_min_count, counts)?.swap_remove(0))
}

pub fn rank_ground_truth(
    candidates: &PathSet,
    labels: &PathLabels,
    registry: &LanguageRegistry,
) -> Result<Vec<(Path, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scored = candidates
        .paths
        .iter()
        .map(|p| {
            labels
                .get(p)
                .map(|&s| (p.clone(), s))
                .ok_or_else(|| Error::MissingLabel(p.to_string_with(registry)))
        })
        .collect::<Result<Vec<_>>>()?;
    rank_scored(&mut scored, registry);
    Ok(scored)
}

pub fn route_ground_truth(
    candidates: &PathSet,
    labels: &PathLabels,
    registry: &LanguageRegistry,
) -> Result<(Path, f64)> {
    Ok(rank_ground_truth(candidates, labels, registry)?.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Language;
    use crate::path::candidate_paths;
    use alloc::vec;

    fn registry() -> LanguageRegistry {
        LanguageRegistry::new(vec![
            Language::new("da", "Danish", "Germanic", 10),
            Language::new("en", "English", "Germanic", 100),
            Language::new("es", "Spanish", "Italic", 50),
            Language::new("gl", "Galician", "Italic", 5),
        ])
        .unwrap()
    }

    fn p(reg: &LanguageRegistry, s: &str) -> Path {
        Path::parse(s, reg).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("ltr".parse::<Method>().unwrap(), Method::Ltr);
        assert!("XX".parse::<Method>().is_err());
    }

    #[test]
    fn direct() {
        let reg = registry();
        let (da, gl) = (reg.id("da").unwrap(), reg.id("gl").unwrap());
        assert_eq!(route_direct(da, gl).unwrap().to_string_with(&reg), "da->gl");
        assert!(route_direct(da, da).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let reg = registry();
        let set = candidate_paths(&reg, LangId(0), LangId(3)).unwrap();
        assert_eq!(
            route_random(&set, 5).unwrap(),
            route_random(&set, 5).unwrap()
        );
        let single = PathSet {
            source: LangId(0),
            target: LangId(3),
            paths: vec![p(&reg, "da->gl")],
        };
        assert_eq!(route_random(&single, 99).unwrap(), p(&reg, "da->gl"));
        let empty = PathSet {
            paths: vec![],
            ..single
        };
        assert_eq!(route_random(&empty, 0), Err(Error::EmptyCandidates));
    }

    #[test]
    fn pivot_map_and_prior_pivoting() {
        let reg = registry();
        let map = build_pivot_map(&reg).unwrap();
        assert_eq!(map.get("Germanic"), Some(reg.id("en").unwrap()));
        assert_eq!(map.get("Italic"), Some(reg.id("es").unwrap()));
        let (da, gl, en, es) = (LangId(0), LangId(3), LangId(1), LangId(2));
        let pp = route_prior_pivot(&reg, da, gl, &map).unwrap();
        assert_eq!(pp.to_string_with(&reg), "da->en->es->gl");
        assert_eq!(
            route_prior_pivot(&reg, en, es, &map)
                .unwrap()
                .to_string_with(&reg),
            "en->es"
        );
        assert_eq!(
            route_prior_pivot(&reg, en, gl, &map)
                .unwrap()
                .to_string_with(&reg),
            "en->es->gl"
        );
    }

    #[test]
    fn pivot_ties_prefer_smaller_code() {
        let reg = LanguageRegistry::new(vec![
            Language::new("zz", "Z", "B", 7),
            Language::new("aa", "A", "B", 7),
            Language::new("mm", "M", "C", 1),
        ])
        .unwrap();
        let map = build_pivot_map(&reg).unwrap();
        assert_eq!(map.get("B"), Some(LangId(1)));
        assert_eq!(map.get("C"), Some(LangId(2)));
    }

    #[test]
    fn hop_average_picks_best_mean() {
        let reg = registry();
        // da->gl = 5; everything else 10.
        let m = QualityMatrix::from_fn(4, |s, t| if (s.0, t.0) == (0, 3) { 5.0 } else { 10.0 })
            .unwrap();
        let set = PathSet {
            source: LangId(0),
            target: LangId(3),
            paths: vec![p(&reg, "da->gl"), p(&reg, "da->en->gl")],
        };
        let (path, score) = route_hop_average(&set, &m, &reg).unwrap();
        assert_eq!(path, p(&reg, "da->en->gl"));
        assert_eq!(score, 10.0);

        let three = QualityMatrix::from_fn(4, |s, t| match (s.0, t.0) {
            (0, 1) => 10.0,
            (1, 2) => 20.0,
            (2, 3) => 30.0,
            _ => 1.0,
        })
        .unwrap();
        assert_eq!(hop_average(&p(&reg, "da->en->es->gl"), &three), 20.0);
        let direct = QualityMatrix::from_fn(4, |_, _| 6.56).unwrap();
        assert_eq!(hop_average(&p(&reg, "da->gl"), &direct), 6.56);
    }

    #[test]
    fn ground_truth_ties_and_missing_labels() {
        let reg = registry();
        let set = candidate_paths(&reg, LangId(0), LangId(3)).unwrap();
        let equal: PathLabels = set.paths.iter().map(|p| (p.clone(), 3.0)).collect();
        assert_eq!(
            route_ground_truth(&set, &equal, &reg).unwrap().0,
            p(&reg, "da->gl")
        );

        let mut labels = equal.clone();
        labels.insert(p(&reg, "da->en->es->gl"), 12.14);
        let (best, score) = route_ground_truth(&set, &labels, &reg).unwrap();
        assert_eq!(best.to_string_with(&reg), "da->en->es->gl");
        assert_eq!(score, 12.14);

        labels.remove(&p(&reg, "da->gl"));
        assert!(matches!(
            route_ground_truth(&set, &labels, &reg),
            Err(Error::MissingLabel(_))
        ));
    }

    #[test]
    fn rare_pivots_leave_direct() {
        let reg = registry();
        let set = candidate_paths(&reg, LangId(0), LangId(3)).unwrap();
        let m = QualityMatrix::from_fn(4, |_, _| 10.0).unwrap();
        let model = crate::nn::init_model(4, 6, 2, 0).unwrap();
        let counts = BTreeMap::from([(LangId(1), 3usize), (LangId(2), 9)]);
        let (chosen, _) = route_ltr(&set, &m, &reg, &model, 10, &counts).unwrap();
        assert_eq!(chosen, p(&reg, "da->gl"));
        let counts = BTreeMap::from([(LangId(1), 10usize), (LangId(2), 9)]);
        let kept = filter_rare_pivots(&set, 10, &counts);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn counts_pivots() {
        let reg = registry();
        let paths = [
            p(&reg, "da->en->es->gl"),
            p(&reg, "da->en->gl"),
            p(&reg, "da->gl"),
        ];
        let counts = pivot_counts(paths.iter());
        assert_eq!(counts.get(&LangId(1)), Some(&2));
        assert_eq!(counts.get(&LangId(2)), Some(&1));
        assert_eq!(counts.get(&LangId(0)), None);
    }
}
