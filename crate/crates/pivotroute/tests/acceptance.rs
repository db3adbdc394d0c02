//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use pivotroute::cli::{self, load_model, load_world};
use pivotroute_core::experiment::{evaluate, RoutingContext};
use pivotroute_core::features::featurize;
use pivotroute_core::nn::{grad_check, init_model};
use pivotroute_core::path::{count_paths, enumerate_paths, estimate_eval_cost};
use pivotroute_core::routers::{build_pivot_map, route_hop_average, Method};
use pivotroute_core::synth::{derive_seed, gen_world, WorldConfig};
use pivotroute_core::{EncodedPath, LangId, Language, LanguageRegistry, Path, FEATURE_DIM};
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Deterministic stream of integers for picking random inputs.
struct Draws {
    seed: u64,
    n: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Draws { seed, n: 0 }
    }

    fn below(&mut self, bound: usize) -> usize {
        self.n += 1;
        (derive_seed(self.seed, &[self.n]) % bound as u64) as usize
    }

    fn path(&mut self, languages: usize) -> Path {
        let len = 2 + self.below(3);
        let mut langs: Vec<LangId> = Vec::with_capacity(len);
        while langs.len() < len {
            let l = LangId(self.below(languages));
            if !langs.contains(&l) {
                langs.push(l);
            }
        }
        Path::new(langs).unwrap()
    }
}

fn c1_combinatorics() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for p in 0..=30usize {
        let langs = (0..p + 2)
            .map(|i| Language::new(&format!("c{i:02}"), "", if i == 0 { "a" } else { "b" }, 1))
            .collect();
        let reg = LanguageRegistry::new(langs).unwrap();
        let pool: Vec<LangId> = (2..p + 2).map(LangId).collect();
        let listed = enumerate_paths(&reg, LangId(0), LangId(1), &pool, 2)
            .unwrap()
            .len() as u64;
        // Independent count: the direct path, p one-pivot paths, p(p-1) ordered two-pivot paths.
        let mut brute = 1u64;
        for a in 0..p {
            brute += 1;
            brute += (0..p).filter(|&b| b != a).count() as u64;
        }
        let formula = count_paths(p as u64, 3).unwrap();
        if formula != listed || formula != brute {
            mismatches.push(p);
        }
    }
    let at18 = count_paths(18, 3).unwrap();
    let elapsed = start.elapsed();
    outcome(
        mismatches.is_empty() && at18 == 325 && elapsed < Duration::from_secs(1),
        format!("mismatches {mismatches:?}, count(18) = {at18}, {elapsed:.2?}"),
    )
}

fn c2_cost_model() -> Outcome {
    let m100 = estimate_eval_cost(100, 20.0).unwrap();
    let m20 = estimate_eval_cost(20, 20.0).unwrap();
    outcome(
        (1.30e6..=1.45e6).contains(&m100) && (1800.0..=2300.0).contains(&m20),
        format!("M=100: {m100} GPU-days, M=20: {m20:.2} GPU-days"),
    )
}

fn c3_feature_shape() -> Outcome {
    let w = gen_world(&WorldConfig::default()).unwrap();
    let n = w.registry.len();
    let model = init_model(n, 6, 2, 0).unwrap();
    let mut draws = Draws::new(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let p = draws.path(n);
        let seq = featurize(&p, &w.matrix, model.embeddings()).unwrap();
        if seq.len() != 2 * p.hops() + 1 || seq.vectors.iter().any(|v| v.len() != 6) {
            bad += 1;
        }
    }
    outcome(
        bad == 0 && FEATURE_DIM == 6,
        format!("{bad} of 1000 paths with the wrong shape"),
    )
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut draws = Draws::new(4);
    for i in 0..20u64 {
        let w = gen_world(&WorldConfig {
            seed: 100 + i,
            ..WorldConfig::default()
        })
        .unwrap();
        let model = init_model(w.registry.len(), 6, 2, i).unwrap();
        let path = draws.path(w.registry.len());
        let enc = EncodedPath::new(&path, &w.matrix).unwrap();
        let label = draws.below(1000) as f64 / 1000.0;
        worst = worst.max(grad_check(&model, &enc, label, 1e-5).unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.3e} over 20 draws, {elapsed:.2?}"),
    )
}

fn c5_hop_average() -> Outcome {
    let w = gen_world(&WorldConfig::default()).unwrap();
    let mut draws = Draws::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = draws.path(w.registry.len());
        let langs = p.langs();
        let mut sum = 0.0;
        for i in 0..langs.len() - 1 {
            sum += w.matrix.score(langs[i], langs[i + 1]);
        }
        let mean = sum / (langs.len() - 1) as f64;
        let single = pivotroute_core::PathSet {
            source: p.source(),
            target: p.target(),
            paths: vec![p.clone()],
        };
        let (_, got) = route_hop_average(&single, &w.matrix, &w.registry).unwrap();
        worst = worst.max((got - mean).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max deviation {worst:.3e} over 1000 paths"),
    )
}

fn report(path: &FsPath) -> BTreeMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (c[0].to_string(), c[1].parse().unwrap())
        })
        .collect()
}

struct SeedRun {
    base: BTreeMap<String, f64>,
    overlay: BTreeMap<String, f64>,
    dir: PathBuf,
}

fn pipeline(root: &FsPath, seed: u64) -> SeedRun {
    let dir = root.join(format!("seed{seed}"));
    let s = |p: &FsPath| p.to_str().unwrap().to_string();
    let (w, m, e) = (dir.join("world"), dir.join("model"), dir.join("eval"));
    let seed = seed.to_string();
    let steps: [Vec<String>; 3] = [
        vec![
            "gen".into(),
            "--out".into(),
            s(&w),
            "--seed".into(),
            seed.clone(),
        ],
        vec![
            "train".into(),
            "--world".into(),
            s(&w),
            "--out".into(),
            s(&m),
        ],
        vec![
            "eval".into(),
            "--world".into(),
            s(&w),
            "--model".into(),
            s(&m.join("model.json")),
            "--out".into(),
            s(&e),
            "--supervised-overlay".into(),
            "--boost".into(),
            "20".into(),
        ],
    ];
    for args in steps {
        let full = std::iter::once("pivotroute".to_string()).chain(args.iter().cloned());
        cli::run(full).unwrap_or_else(|err| panic!("{args:?}: {err:#}"));
    }
    SeedRun {
        base: report(&e.join("report.tsv")),
        overlay: report(&e.join("overlay/report.tsv")),
        dir,
    }
}

fn c6_gt_dominance(run: &SeedRun) -> Outcome {
    let w = load_world(&run.dir.join("world")).unwrap();
    let model = load_model(&run.dir.join("model/model.json"), &w.registry).unwrap();
    let ctx = RoutingContext {
        registry: &w.registry,
        matrix: &w.matrix,
        model: Some(&model),
        pivot_map: build_pivot_map(&w.registry).unwrap(),
        pivot_counts: &w.dataset.pivot_counts,
        pivot_min_count: 10,
        random_seed: 3,
    };
    let reports = evaluate(&ctx, &w.dataset.test, &Method::ALL).unwrap();
    let gt = reports.iter().find(|r| r.method == Method::Gt).unwrap();
    let mut total = 0;
    let mut ok = 0;
    for r in reports.iter().filter(|r| r.method != Method::Gt) {
        for (g, o) in gt.rows.iter().zip(&r.rows) {
            total += 1;
            if g.actual.unwrap() >= o.actual.unwrap() {
                ok += 1;
            }
        }
    }
    outcome(
        ok == total,
        format!("GT at least as good in {ok} of {total} comparisons"),
    )
}

fn c7_ordering(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let mut all_hold = true;
    let mut gap_wins = 0;
    let mut detail = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let v = |m: &str| r.base[m];
        let (dt, rr, ha, ltr, gt) = (v("DT"), v("RR"), v("HA"), v("LTR"), v("GT"));
        let holds = rr < dt.min(ha) && dt <= ha && ha <= ltr + 0.2 && ltr <= gt;
        all_hold &= holds;
        let (ltr_gap, ha_gap) = (gt - ltr, gt - ha);
        if ltr_gap <= 0.6 * ha_gap {
            gap_wins += 1;
        }
        detail.push(format!(
            "seed {seed}: RR {rr:.2} DT {dt:.2} HA {ha:.2} PP {:.2} LTR {ltr:.2} GT {gt:.2} (gaps {ltr_gap:.2}/{ha_gap:.2})",
            v("PP")
        ));
    }
    detail.push(format!("{elapsed:.1?} for gen+train+eval x3"));
    outcome(
        all_hold && gap_wins >= 2 && elapsed < Duration::from_secs(300),
        detail.join("; "),
    )
}

fn c8_overlay(runs: &[SeedRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let (b, o) = (&r.base, &r.overlay);
        let ok = o["GT"] > b["GT"] && o["LTR"] > b["LTR"] && o["DT"] == b["DT"];
        pass &= ok;
        detail.push(format!(
            "seed {seed}: GT {:.2}->{:.2} LTR {:.2}->{:.2} DT {:.2}->{:.2}",
            b["GT"], o["GT"], b["LTR"], o["LTR"], b["DT"], o["DT"]
        ));
    }
    outcome(pass, detail.join("; "))
}

fn c9_determinism(root: &FsPath, first: &SeedRun) -> Outcome {
    let again = pipeline(&root.join("rerun"), 0);
    let mut files = vec![
        PathBuf::from("model/model.json"),
        PathBuf::from("model/train_report.tsv"),
        PathBuf::from("eval/report.tsv"),
        PathBuf::from("eval/overlay/report.tsv"),
    ];
    for m in Method::ALL {
        let name = format!("cdf_{}.csv", m.as_str().to_lowercase());
        files.push(PathBuf::from("eval").join(&name));
        files.push(PathBuf::from("eval/overlay").join(&name));
    }
    let differing: Vec<String> = files
        .iter()
        .filter(|f| fs::read(first.dir.join(f)).unwrap() != fs::read(again.dir.join(f)).unwrap())
        .map(|f| f.display().to_string())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", files.len()),
    )
}

fn c10_training(run: &SeedRun) -> Outcome {
    let text = fs::read_to_string(run.dir.join("model/train_report.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    let initial: f64 = rows[0][1].parse().unwrap();
    let last: f64 = rows.last().unwrap()[1].parse().unwrap();
    outcome(
        last < 0.5 * initial,
        format!(
            "initial MSE {initial:.3e}, final {last:.3e} after {} epochs",
            rows.len() - 1
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 combinatorics", c1_combinatorics()),
        ("2 cost model", c2_cost_model()),
        ("3 feature shape", c3_feature_shape()),
        ("4 gradient check", c4_gradients()),
        ("5 hop-average equivalence", c5_hop_average()),
    ];
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let runs: Vec<SeedRun> = (0..3).map(|s| pipeline(tmp.path(), s)).collect();
    let elapsed = start.elapsed();
    results.push(("6 ground-truth dominance", c6_gt_dominance(&runs[0])));
    results.push(("7 method ordering", c7_ordering(&runs, elapsed)));
    results.push(("8 supervised overlay", c8_overlay(&runs)));
    results.push(("9 determinism", c9_determinism(tmp.path(), &runs[0])));
    results.push(("10 training sanity", c10_training(&runs[0])));

    let mut failed = 0;
    for (name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
