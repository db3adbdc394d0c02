//! Candidate translation paths `X -> Z1 -> .. -> Zn -> Y` with at most two pivots.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::lang::{LangId, LanguageRegistry};

pub const MAX_HOPS: usize = 3;

/// An ordered language sequence of one to three hops. All languages are distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Vec<LangId>);

impl Path {
    pub fn new(langs: Vec<LangId>) -> Result<Self> {
        if langs.len() < 2 || langs.len() > MAX_HOPS + 1 {
            return Err(Error::InvalidPath(alloc::format!(
                "{} languages, expected 2 to {}",
                langs.len(),
                MAX_HOPS + 1
            )));
        }
        for (i, a) in langs.iter().enumerate() {
            if langs[i + 1..].contains(a) {
                return Err(Error::InvalidPath(alloc::format!("language {a} repeats")));
            }
        }
        Ok(Path(langs))
    }

    pub fn direct(x: LangId, y: LangId) -> Result<Self> {
        Path::new(alloc::vec![x, y])
    }

    /// Builds a path after dropping repeated consecutive languages.
    pub fn collapsed(langs: &[LangId]) -> Result<Self> {
        let mut out: Vec<LangId> = Vec::with_capacity(langs.len());
        for &l in langs {
            if out.last() != Some(&l) {
                out.push(l);
            }
        }
        Path::new(out)
    }

    pub fn langs(&self) -> &[LangId] {
        &self.0
    }

    pub fn source(&self) -> LangId {
        self.0[0]
    }

    pub fn target(&self) -> LangId {
        self.0[self.0.len() - 1]
    }

    pub fn hops(&self) -> usize {
        self.0.len() - 1
    }

    pub fn pivots(&self) -> &[LangId] {
        &self.0[1..self.0.len() - 1]
    }

    /// `(src, tgt)` for every hop, in order.
    pub fn hop_pairs(&self) -> impl Iterator<Item = (LangId, LangId)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn display<'a>(&'a self, registry: &'a LanguageRegistry) -> PathDisplay<'a> {
        PathDisplay {
            path: self,
            registry,
        }
    }

    pub fn to_string_with(&self, registry: &LanguageRegistry) -> String {
        self.display(registry).to_string()
    }

    /// Parses the `da->en->es->gl` textual form.
    pub fn parse(text: &str, registry: &LanguageRegistry) -> Result<Self> {
        let langs = text
            .split("->")
            .map(|code| registry.id(code.trim()))
            .collect::<Result<Vec<_>>>()?;
        Path::new(langs)
    }
}

pub struct PathDisplay<'a> {
    path: &'a Path,
    registry: &'a LanguageRegistry,
}

impl fmt::Display for PathDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &l) in self.path.0.iter().enumerate() {
            if i > 0 {
                f.write_str("->")?;
            }
            f.write_str(self.registry.code(l))?;
        }
        Ok(())
    }
}

/// Deterministic tie order: fewer hops first, then the textual form.
pub fn tie_order(a: &Path, b: &Path, registry: &LanguageRegistry) -> Ordering {
    a.hops().cmp(&b.hops()).then_with(|| {
        let sa = a.to_string_with(registry);
        let sb = b.to_string_with(registry);
        sa.cmp(&sb)
    })
}

/// Orders scored paths best first: higher score, then [`tie_order`].
pub fn rank_scored(scored: &mut [(Path, f64)], registry: &LanguageRegistry) {
    scored.sort_by(|(pa, sa), (pb, sb)| {
        sb.partial_cmp(sa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| tie_order(pa, pb, registry))
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub source: LangId,
    pub target: LangId,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn contains(&self, path: &Path) -> bool {
        self.paths.contains(path)
    }
}

/// Enumerates every path from `x` to `y` with up to `max_pivots` distinct
/// pivots drawn from `pivot_pool`.
///
/// Paths come out ordered lexicographically by their pivot codes, so the
/// direct path is always first.
pub fn enumerate_paths(
    registry: &LanguageRegistry,
    x: LangId,
    y: LangId,
    pivot_pool: &[LangId],
    max_pivots: usize,
) -> Result<PathSet> {
    registry.get(x)?;
    registry.get(y)?;
    if x == y {
        return Err(Error::SelfPair(registry.code(x).to_string()));
    }
    if max_pivots > MAX_HOPS - 1 {
        return Err(Error::InvalidHops(max_pivots + 1));
    }
    let mut pool: Vec<LangId> = Vec::with_capacity(pivot_pool.len());
    for &p in pivot_pool {
        registry.get(p)?;
        if p == x || p == y {
            return Err(Error::PivotIsEndpoint(registry.code(p).to_string()));
        }
        if !pool.contains(&p) {
            pool.push(p);
        }
    }
    pool.sort_by(|a, b| registry.code(*a).cmp(registry.code(*b)));

    let mut paths = alloc::vec![Path(alloc::vec![x, y])];
    if max_pivots >= 1 {
        for &p1 in &pool {
            paths.push(Path(alloc::vec![x, p1, y]));
            if max_pivots >= 2 {
                for &p2 in pool.iter().filter(|&&p2| p2 != p1) {
                    paths.push(Path(alloc::vec![x, p1, p2, y]));
                }
            }
        }
    }
    Ok(PathSet {
        source: x,
        target: y,
        paths,
    })
}

/// All paths of up to three hops, pivoting through every other language.
pub fn candidate_paths(registry: &LanguageRegistry, x: LangId, y: LangId) -> Result<PathSet> {
    let pool: Vec<LangId> = registry.ids().filter(|&l| l != x && l != y).collect();
    enumerate_paths(registry, x, y, &pool, MAX_HOPS - 1)
}

/// Number of paths with at most `max_hops` hops through a pool of `pool_size` pivots.
pub fn count_paths(pool_size: u64, max_hops: usize) -> Result<u64> {
    let p = pool_size;
    match max_hops {
        1 => Ok(1),
        2 => Ok(1 + p),
        3 => Ok(1 + p + p * p.saturating_sub(1)),
        n => Err(Error::InvalidHops(n)),
    }
}

/// `M! / (M - N + 1)!`: ordered selections of `N - 1` pivots out of `M`
/// intermediates, the dominant term of the path count.
pub fn ordered_pivot_selections(intermediates: u64, max_hops: usize) -> Result<u128> {
    if !(1..=MAX_HOPS).contains(&max_hops) {
        return Err(Error::InvalidHops(max_hops));
    }
    let picks = (max_hops - 1) as u64;
    if picks > intermediates {
        return Ok(0);
    }
    Ok((intermediates - picks + 1..=intermediates)
        .map(u128::from)
        .product())
}

/// GPU-days to label every path between every ordered pair of `num_languages`
/// languages, assuming `M(M-1)` paths per pair.
pub fn estimate_eval_cost(num_languages: u64, minutes_per_path: f64) -> Result<f64> {
    if num_languages < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "need at least 2 languages, got {num_languages}"
        )));
    }
    let m = num_languages as f64;
    let pairs = m * (m - 1.0);
    Ok(pairs * pairs * minutes_per_path / 1440.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Language;
    use alloc::vec;

    fn world() -> LanguageRegistry {
        LanguageRegistry::new(vec![
            Language::new("da", "Danish", "Germanic", 10),
            Language::new("en", "English", "Germanic", 100),
            Language::new("es", "Spanish", "Italic", 50),
            Language::new("gl", "Galician", "Italic", 5),
        ])
        .unwrap()
    }

    #[test]
    fn path_invariants() {
        assert!(Path::new(vec![LangId(0)]).is_err());
        assert!(Path::new(vec![LangId(0), LangId(0)]).is_err());
        assert!(Path::new(vec![LangId(0), LangId(1), LangId(0)]).is_err());
        assert!(Path::new(vec![LangId(0), LangId(1), LangId(2), LangId(3), LangId(4)]).is_err());
        let p = Path::new(vec![LangId(0), LangId(1), LangId(2), LangId(3)]).unwrap();
        assert_eq!(p.hops(), 3);
        assert_eq!(p.pivots(), &[LangId(1), LangId(2)]);
    }

    #[test]
    fn collapse_and_text() {
        let reg = world();
        let p = Path::collapsed(&[LangId(0), LangId(0), LangId(2), LangId(3)]).unwrap();
        assert_eq!(p.to_string_with(&reg), "da->es->gl");
        assert_eq!(Path::parse("da->es->gl", &reg).unwrap(), p);
        assert!(Path::parse("da->xx", &reg).is_err());
    }

    #[test]
    fn enumerate_small_pool() {
        let reg = world();
        let (da, en, es, gl) = (LangId(0), LangId(1), LangId(2), LangId(3));
        let empty = enumerate_paths(&reg, da, gl, &[], 2).unwrap();
        assert_eq!(empty.len(), 1);

        // Exhaustive listing: direct, da->en->gl, da->es->gl, da->en->es->gl, da->es->en->gl.
        let set = enumerate_paths(&reg, da, gl, &[es, en], 2).unwrap();
        let text: Vec<String> = set.paths.iter().map(|p| p.to_string_with(&reg)).collect();
        assert_eq!(
            text,
            [
                "da->gl",
                "da->en->gl",
                "da->en->es->gl",
                "da->es->gl",
                "da->es->en->gl"
            ]
        );
        assert_eq!(set.len() as u64, count_paths(2, 3).unwrap());
        assert!(set.contains(&Path::parse("da->en->es->gl", &reg).unwrap()));

        assert_eq!(
            enumerate_paths(&reg, da, gl, &[es, en], 1).unwrap().len(),
            3
        );
        assert!(matches!(
            enumerate_paths(&reg, da, gl, &[da], 2),
            Err(Error::PivotIsEndpoint(_))
        ));
        assert!(matches!(
            enumerate_paths(&reg, da, da, &[], 2),
            Err(Error::SelfPair(_))
        ));
    }

    #[test]
    fn counts() {
        assert_eq!(count_paths(0, 3).unwrap(), 1);
        assert_eq!(count_paths(18, 3).unwrap(), 325);
        assert_eq!(count_paths(5, 2).unwrap(), 6);
        assert_eq!(count_paths(5, 1).unwrap(), 1);
        assert_eq!(count_paths(5, 4), Err(Error::InvalidHops(4)));
        assert_eq!(ordered_pivot_selections(100, 3).unwrap(), 9900);
        assert_eq!(ordered_pivot_selections(1, 3).unwrap(), 0);
    }

    #[test]
    fn cost_model() {
        assert_eq!(estimate_eval_cost(100, 20.0).unwrap(), 1_361_250.0);
        let m20 = estimate_eval_cost(20, 20.0).unwrap();
        assert!((m20 - 2_005.555_555_555_555_6).abs() < 1e-9);
        let m2 = estimate_eval_cost(2, 20.0).unwrap();
        assert!((m2 - 80.0 / 1440.0).abs() < 1e-15);
        assert!(estimate_eval_cost(1, 20.0).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_hops_then_text() {
        let reg = world();
        let p = |s: &str| Path::parse(s, &reg).unwrap();
        let mut scored = vec![
            (p("da->es->en->gl"), 1.0),
            (p("da->en->gl"), 1.0),
            (p("da->gl"), 1.0),
            (p("da->es->gl"), 2.0),
            (p("da->en->es->gl"), 1.0),
        ];
        rank_scored(&mut scored, &reg);
        let order: Vec<String> = scored.iter().map(|(p, _)| p.to_string_with(&reg)).collect();
        assert_eq!(
            order,
            [
                "da->es->gl",
                "da->gl",
                "da->en->gl",
                "da->en->es->gl",
                "da->es->en->gl"
            ]
        );
    }
}
