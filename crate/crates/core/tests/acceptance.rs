//! One PASS/FAIL line per acceptance criterion.
//!
//! Run with `cargo test -p wfbench-core --test acceptance -- --nocapture` to
//! see the table. The end-to-end criteria train ten models on a 500-label
//! corpus and take several minutes in release mode.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use wfbench::classifiers::{train_attack, train_logreg, AttackKind, LogRegConfig, LogRegProblem};
use wfbench::defenses::{
    burst_pad, burst_thresholds, measure_overhead, DefensePlan, DefenseSpec, OverheadReport,
};
use wfbench::features::{burst_pairs_signed, BogSpace, DomainGaussians, Gaussian, Normalizer, SparseVec, FEATURE_SPACE_VERSION};
use wfbench::harness::{
    self, defend, load_dataset, report_for, score, synth_corpus, train_on, Dataset, ExperimentConfig, MetricsReport,
};
use wfbench::hmm::{build_hmm, path_log_score, viterbi, SequenceModel};
use wfbench::sitegraph::{
    build_canonicalizer, build_preliminary_graph, crawl_pairs, edge_pairs, plan_sessions, refine, session_violations,
    CanonConfig, PlanConfig, RedirectLog, SiteGraph,
};
use wfbench::synth::{generate_site, generate_traffic, write_corpus, ModeConfig, SiteParams};
use wfbench::trace::Sample;
use wfbench::util::rng_for;
use wfbench::Label;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    took: Duration,
}

#[derive(Default)]
struct Table {
    rows: Vec<Outcome>,
}

impl Table {
    fn run(&mut self, id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) {
        let t = Instant::now();
        let (pass, detail) = f();
        let took = t.elapsed();
        println!("{} [{id:>2}] {name}: {detail} ({took:.2?})", if pass { "PASS" } else { "FAIL" });
        self.rows.push(Outcome { id, name, pass, detail, took });
    }
}

// 1 ---------------------------------------------------------------------

fn burst_oracle() -> (bool, String) {
    let t = Instant::now();
    let pairs = burst_pairs_signed(&[1420, 310, -1420, -810, 530, -1080]);
    let took = t.elapsed();
    let ok = pairs == [(1730, 2230), (530, 1080)] && took < Duration::from_millis(1);
    (ok, format!("{pairs:?} in {took:?}"))
}

// 2 ---------------------------------------------------------------------

fn burst_algorithms() -> (bool, String) {
    let t = Instant::now();
    let th = burst_thresholds(&[100, 110, 400], 1.10).unwrap();
    let (a, b) = (burst_pad(100, &th), burst_pad(500, &th));
    let took = t.elapsed();
    let hand = th == [110, 400] && a == 110 && b == 500 && took < Duration::from_millis(1);

    let mut worst = 0.0f64;
    let mut violations = 0;
    let mut rng = rng_for(2, "burst multisets");
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let bursts: Vec<u64> = (0..n).map(|_| rng.random_range(1..200_000)).collect();
        let c = rng.random_range(1.01..2.0);
        let t = burst_thresholds(&bursts, c).unwrap();
        let before: u64 = bursts.iter().sum();
        let after: u64 = bursts.iter().map(|&x| burst_pad(x, &t)).sum();
        let ratio = after as f64 / before as f64;
        if ratio >= c {
            violations += 1;
        }
        worst = worst.max(ratio / c);
    }
    (
        hand && violations == 0,
        format!("thresholds {th:?}, pad(100)={a}, pad(500)={b}; 1000 multisets, {violations} over budget, max overhead/c {worst:.4}"),
    )
}

// 3 ---------------------------------------------------------------------

fn exhaustive_best(m: &SequenceModel, e: &[Vec<f64>]) -> f64 {
    fn go(m: &SequenceModel, e: &[Vec<f64>], path: &mut Vec<usize>, best: &mut f64) {
        if path.len() == e.len() {
            *best = best.max(path_log_score(m, e, path));
            return;
        }
        for s in 0..m.len() {
            path.push(s);
            go(m, e, path, best);
            path.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(m, e, &mut Vec::new(), &mut best);
    best
}

fn viterbi_oracle() -> (bool, String) {
    let t = Instant::now();
    let mut rng = rng_for(3, "viterbi instances");
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let len = rng.random_range(1..=6);
        let l = |i: usize| Label::new(format!("p{i}"));
        let edges: Vec<(Label, Label)> =
            (0..rng.random_range(0..3 * n)).map(|_| (l(rng.random_range(0..n)), l(rng.random_range(0..n)))).collect();
        let g = SiteGraph::new((0..n).map(l), edges, None);
        let m = build_hmm(&g).unwrap();
        let e: Vec<Vec<f64>> = (0..len).map(|_| (0..n).map(|_| rng.random_range(0.001..1.0)).collect()).collect();
        let got = viterbi(&m, &e).unwrap().log_score;
        let want = exhaustive_best(&m, &e);
        let err = (got - want).abs();
        worst = worst.max(err);
        if err > 1e-9 {
            mismatches += 1;
        }
    }
    let took = t.elapsed();
    (
        mismatches == 0 && took < Duration::from_secs(5),
        format!("200 instances, {mismatches} mismatches, max |error| {worst:.1e}"),
    )
}

// 4 ---------------------------------------------------------------------

fn gradient_and_blobs() -> (bool, String) {
    let t = Instant::now();
    let mut rng = rng_for(4, "gradient check");
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let classes = rng.random_range(2..5);
        let dim = rng.random_range(2..8);
        let rows = rng.random_range(3..12);
        let x: Vec<SparseVec> = (0..rows)
            .map(|_| SparseVec::from_dense(&(0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
            .collect();
        let mut y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        y[0] = 0;
        y[1] = 1;
        let p = LogRegProblem::new(&x, &y, classes, rng.random_range(0.1..10.0)).unwrap();
        let w: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; w.len()];
        p.objective_and_gradient(&w, &mut g);
        let mut scratch = vec![0.0; w.len()];
        let h = 1e-5;
        for j in 0..w.len() {
            let mut wp = w.clone();
            wp[j] += h;
            let fp = p.objective_and_gradient(&wp, &mut scratch);
            wp[j] -= 2.0 * h;
            let fm = p.objective_and_gradient(&wp, &mut scratch);
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (numeric - g[j]).abs() / numeric.abs().max(g[j].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }

    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..60 {
            let p: Vec<f64> = center.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
            x.push(SparseVec::from_dense(&p));
            y.push(c);
        }
    }
    let model = train_logreg(&x, &y, 3, &LogRegConfig::default()).unwrap();
    let hits = x
        .iter()
        .zip(&y)
        .filter(|(r, &c)| {
            let p = model.predict(r).unwrap();
            (0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])) == Some(c)
        })
        .count();
    let acc = hits as f64 / y.len() as f64;
    let took = t.elapsed();
    (
        worst <= 1e-4 && acc >= 0.99 && took < Duration::from_secs(10),
        format!("max relative gradient error {worst:.1e}; blob train accuracy {acc:.3}"),
    )
}

// 5 ---------------------------------------------------------------------

fn bog_density_values() -> (bool, String) {
    let space = BogSpace {
        version: FEATURE_SPACE_VERSION,
        mtu: 1500,
        domains: vec![DomainGaussians {
            domain: "site.com".into(),
            clusters: vec![Gaussian { mean: [100.0, 200.0], var: [1.0, 1.0] }],
            inertia: 0.0,
        }],
        density_cutoff: None,
        normalizer: Normalizer { min: vec![0.0; 3001], max: vec![1.0; 3001] },
    };
    let absent = Sample::from_signed_flows(None, "s", 0, [("other.net", vec![100, -200])]);
    let one = Sample::from_signed_flows(None, "s", 0, [("site.com", vec![100, -200])]);
    let three = Sample::from_signed_flows(None, "s", 0, [("site.com", vec![100, -200, 100, -200, 100, -200])]);
    let empty = space.gaussian_features(&absent).get(0);
    let f1 = space.gaussian_features(&one).get(0);
    let f3 = space.gaussian_features(&three).get(0);
    let ok = empty == 0.0 && (f1 - 1.0 / (2.0 * PI)).abs() <= 1e-9 && f3 == f1 + f1 + f1;
    (ok, format!("empty {empty}, at mean {f1:.12} (1/2pi = {:.12}), three copies {f3:.12}", 1.0 / (2.0 * PI)))
}

// 6 ---------------------------------------------------------------------

fn edge_set(g: &SiteGraph) -> BTreeSet<(Label, Label)> {
    g.edges().map(|(a, b)| (a.clone(), b.clone())).collect()
}

fn sitegraph_pipeline() -> (bool, String) {
    let canon = CanonConfig { seed: 6, ..CanonConfig::default() };
    let mut notes = Vec::new();
    let mut ok = true;
    for rate in [0.0, 0.3] {
        let t = Instant::now();
        let site = generate_site(&SiteParams { redirect_rate: rate, ..SiteParams::default() }, 6).unwrap();
        let c = build_canonicalizer(&crawl_pairs(&site.crawl), &canon).unwrap();
        let prelim = build_preliminary_graph(&edge_pairs(&site.edges), &c);
        let plan = plan_sessions(
            &prelim,
            &PlanConfig { session_len: 75, dup_threshold: 0.6, min_samples_per_label: 2, seed: 6 },
        );
        let traffic = generate_traffic(&site.spec, &plan, &ModeConfig::mode(2).unwrap(), 6, "train-").unwrap();
        let log: RedirectLog = traffic.redirects.iter().cloned().collect();
        let (c2, refined) = refine(&prelim, &c, &log, &crawl_pairs(&traffic.final_crawl), &canon).unwrap();
        let mut finals = traffic.redirects.iter().map(|r| c2.canonicalize(&r.final_url));
        let mut violations = 0;
        for session in &plan {
            let seen: Vec<Label> = finals.by_ref().take(session.len()).collect();
            violations += session_violations(&refined, session, &seen).len();
        }
        let took = t.elapsed();
        let within = took < Duration::from_secs(5);
        if rate == 0.0 {
            let iso = prelim.labels() == refined.labels()
                && edge_set(&prelim.with_sink_loops()) == edge_set(&refined.with_sink_loops());
            ok &= iso && violations == 0 && within;
            notes.push(format!("no redirects: {} labels, isomorphic {iso}, {took:.2?}", refined.len()));
        } else {
            ok &= violations == 0 && within;
            notes.push(format!(
                "redirects {rate}: {} -> {} labels, {violations} path violations, {took:.2?}",
                prelim.len(),
                refined.len()
            ));
        }
    }
    (ok, notes.join("; "))
}

// 7, 8 ------------------------------------------------------------------

struct Corpus {
    cfg: ExperimentConfig,
    data: Dataset,
}

impl Corpus {
    fn run(&self, defense: &DefenseSpec, kinds: &[AttackKind]) -> Vec<MetricsReport> {
        let cfg = ExperimentConfig { defense: defense.clone(), ..self.cfg.clone() };
        let d = defend(&self.data, defense, cfg.model.mtu, cfg.fragment_depth).unwrap();
        let k = cfg.train_samples_per_label;
        kinds
            .iter()
            .map(|&kind| {
                let scored = score(train_on(&cfg, &d, kind, k).unwrap(), &d.eval).unwrap();
                let r = report_for(&cfg, &d, &scored, k).unwrap();
                println!(
                    "      {defense} {kind}: accuracy {:.4}, session accuracy {:.4}",
                    r.accuracy,
                    r.hmm_accuracy.unwrap_or(f64::NAN)
                );
                r
            })
            .collect()
    }
}

fn ordering(corpus: &Corpus, undefended: &mut Vec<MetricsReport>) -> (bool, String) {
    use AttackKind::*;
    let t = Instant::now();
    *undefended = corpus.run(&DefenseSpec::None, &[Bog, Ll, PanLr, WangFll]);
    let took = t.elapsed();
    let bog = &undefended[0];
    let hmm = bog.hmm_accuracy.unwrap_or(0.0);
    let l1 = bog.session_curve.first().copied().unwrap_or(f64::NAN);
    let rivals: Vec<f64> = undefended[1..].iter().map(|r| r.accuracy).collect();
    let ok = hmm >= bog.accuracy
        && rivals.iter().all(|&a| bog.accuracy >= a)
        && hmm >= 0.85
        && l1 == bog.accuracy
        && took < Duration::from_secs(15 * 60);
    (
        ok,
        format!(
            "BoG+HMM {hmm:.4} >= BoG {:.4} (L=1 point {l1:.4}) >= LL {:.4}, Pan-LR {:.4}, Wang-FLL {:.4}; {} labels",
            bog.accuracy,
            rivals[0],
            rivals[1],
            rivals[2],
            bog.classes
        ),
    )
}

fn defense_direction(corpus: &Corpus, undefended: &[MetricsReport]) -> (bool, String) {
    use AttackKind::*;
    let acc = |rs: &[MetricsReport], kind: AttackKind| rs.iter().find(|r| r.attack == kind).map_or(f64::NAN, |r| r.accuracy);
    let exp = corpus.run(&DefenseSpec::Exponential, &[Bog, PanLr]);
    let b11 = corpus.run(&DefenseSpec::Burst { cost_threshold: 1.10 }, &[Bog]);
    let b14 = corpus.run(&DefenseSpec::Burst { cost_threshold: 1.40 }, &[Bog]);
    let frag = corpus.run(&DefenseSpec::Fragmentation { seed: 8 }, &[Ll, WangFll]);
    let (bog0, pan0, ll0, wang0) = (acc(undefended, Bog), acc(undefended, PanLr), acc(undefended, Ll), acc(undefended, WangFll));
    let (bog11, bog14) = (acc(&b11, Bog), acc(&b14, Bog));
    let frag_bytes = frag[0].overhead.map_or(f64::NAN, |o| o.byte_overhead);
    let ok = acc(&exp, Bog) < bog0
        && acc(&exp, PanLr) < pan0
        && bog14 + 0.05 < bog11
        && bog11 + 0.05 < bog0
        && acc(&frag, Ll) < 0.2 * ll0
        && acc(&frag, WangFll) < 0.2 * wang0
        && frag_bytes == 1.0;
    (
        ok,
        format!(
            "exp: BoG {bog0:.3}->{:.3}, Pan-LR {pan0:.3}->{:.3}; BoG burst 1.40 {bog14:.3} < 1.10 {bog11:.3} < none {bog0:.3}; \
             frag: LL {ll0:.3}->{:.3}, Wang-FLL {wang0:.3}->{:.3}, byte overhead {frag_bytes}",
            acc(&exp, Bog),
            acc(&exp, PanLr),
            acc(&frag, Ll),
            acc(&frag, WangFll)
        ),
    )
}

// 9 ---------------------------------------------------------------------

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    let sd = cfg.synth.as_mut().unwrap();
    sd.site.labels = 40;
    sd.eval_sessions = 4;
    sd.eval_session_len = 20;
    cfg
}

fn overhead_identities() -> (bool, String) {
    let data = load_dataset(&small_config()).unwrap();
    let refs: Vec<&Sample> = data.train.iter().collect();
    let measure = |spec: DefenseSpec| -> OverheadReport {
        let plan = DefensePlan::new(spec, 1500, &refs).unwrap();
        measure_overhead(&data.eval, &plan.apply_all(&data.eval)).unwrap()
    };
    let none = measure(DefenseSpec::None);
    let frag = measure(DefenseSpec::Fragmentation { seed: 9 });
    let pads = [DefenseSpec::Linear, DefenseSpec::Exponential, DefenseSpec::Burst { cost_threshold: 1.1 }]
        .map(|s| measure(s).byte_overhead);
    let ok = none.byte_overhead == 1.0
        && none.packet_overhead == 1.0
        && frag.byte_overhead == 1.0
        && pads.iter().all(|&b| b >= 1.0);
    (
        ok,
        format!(
            "none ({}, {}); frag bytes {}; linear/exp/burst1.1 bytes {:.4}/{:.4}/{:.4}",
            none.byte_overhead, none.packet_overhead, frag.byte_overhead, pads[0], pads[1], pads[2]
        ),
    )
}

// 10 --------------------------------------------------------------------

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let cfg = small_config();
    let sd = cfg.synth.clone().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut corpora = Vec::new();
    for run in ["a", "b"] {
        let c = synth_corpus(&cfg, &sd).unwrap();
        let dir = tmp.path().join(run);
        write_corpus(&dir, &c.site, &[("train", &c.train), ("eval", &c.eval)], serde_json::json!({})).unwrap();
        corpora.push(read_dir_bytes(&dir));
    }
    let same_corpus = corpora[0] == corpora[1];

    let data = load_dataset(&cfg).unwrap();
    let refs: Vec<&Sample> = data.train.iter().collect();
    let mut same_models = true;
    for kind in AttackKind::ALL {
        let a = train_attack(kind, &refs, &cfg.attack_config()).unwrap().to_json();
        let b = train_attack(kind, &refs, &cfg.attack_config()).unwrap().to_json();
        same_models &= a == b;
    }

    let report = |defense: DefenseSpec| {
        let c = ExperimentConfig { defense, ..cfg.clone() };
        harness::run_experiment(&c).unwrap().to_jsonl()
    };
    let mut same_reports = true;
    for d in [DefenseSpec::None, DefenseSpec::Fragmentation { seed: 1 }, DefenseSpec::Burst { cost_threshold: 1.2 }] {
        same_reports &= report(d.clone()) == report(d);
    }
    (
        same_corpus && same_models && same_reports,
        format!(
            "corpus files identical {same_corpus} ({} files), models {same_models}, reports {same_reports}",
            corpora[0].len()
        ),
    )
}

#[test]
fn acceptance() {
    let mut table = Table::default();
    table.run(1, "burst extraction oracle", burst_oracle);
    table.run(2, "burst threshold hand trace and overhead bound", burst_algorithms);
    table.run(3, "Viterbi equals exhaustive search", viterbi_oracle);
    table.run(4, "logistic regression gradient and separable blobs", gradient_and_blobs);
    table.run(5, "Gaussian feature values", bog_density_values);
    table.run(6, "site graph refinement", sitegraph_pipeline);

    let cfg = ExperimentConfig::from_toml(include_str!("../../../configs/calibrated.toml")).unwrap();
    let t = Instant::now();
    let corpus = Corpus { data: load_dataset(&cfg).unwrap(), cfg };
    println!("      corpus: {} training and {} evaluation samples in {:.2?}", corpus.data.train.len(), corpus.data.eval.len(), t.elapsed());
    let mut undefended = Vec::new();
    table.run(7, "end-to-end attack ordering", || ordering(&corpus, &mut undefended));
    table.run(8, "defense direction", || defense_direction(&corpus, &undefended));
    table.run(9, "overhead identities", overhead_identities);
    table.run(10, "determinism", determinism);

    let failed: Vec<String> = table.rows.iter().filter(|r| !r.pass).map(|r| format!("{} {}: {}", r.id, r.name, r.detail)).collect();
    let total: Duration = table.rows.iter().map(|r| r.took).sum();
    println!("{} of {} criteria pass ({total:.1?})", table.rows.len() - failed.len(), table.rows.len());
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
