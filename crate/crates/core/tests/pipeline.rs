//! Generated site → crawl logs → labels and graphs → browsing → refinement.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use wfbench::sitegraph::{
    build_canonicalizer, build_preliminary_graph, crawl_pairs, edge_pairs, plan_sessions, refine, session_violations,
    BrowsingSession, CanonConfig, PlanConfig, RedirectLog, SiteGraph, Url,
};
use wfbench::synth::{generate_site, generate_traffic, GeneratedSite, ModeConfig, SiteParams, TrafficOutput};
use wfbench::trace::Sample;
use wfbench::Label;

struct Run {
    site: GeneratedSite,
    prelim: SiteGraph,
    plan: Vec<BrowsingSession>,
    traffic: TrafficOutput,
    refined: SiteGraph,
    observed: Vec<Vec<Label>>,
}

fn run(params: SiteParams, min_samples: usize) -> Run {
    let site = generate_site(&params, 11).unwrap();
    let canon = CanonConfig { seed: 5, ..CanonConfig::default() };
    let c = build_canonicalizer(&crawl_pairs(&site.crawl), &canon).unwrap();
    let prelim = build_preliminary_graph(&edge_pairs(&site.edges), &c);
    let plan = plan_sessions(
        &prelim,
        &PlanConfig { session_len: 75, dup_threshold: 0.6, min_samples_per_label: min_samples, seed: 3 },
    );
    let traffic = generate_traffic(&site.spec, &plan, &ModeConfig::mode(2).unwrap(), 9, "train-").unwrap();
    let log: RedirectLog = traffic.redirects.iter().cloned().collect();
    let (c2, refined) = refine(&prelim, &c, &log, &crawl_pairs(&traffic.final_crawl), &canon).unwrap();
    let mut finals = traffic.redirects.iter().map(|r| c2.canonicalize(&r.final_url));
    let observed = plan.iter().map(|s| finals.by_ref().take(s.len()).collect()).collect();
    Run { site, prelim, plan, traffic, refined, observed }
}

fn edge_set(g: &SiteGraph) -> BTreeSet<(Label, Label)> {
    g.edges().map(|(a, b)| (a.clone(), b.clone())).collect()
}

#[test]
fn without_redirects_refinement_keeps_the_graph() {
    let t = Instant::now();
    let r = run(SiteParams { redirect_rate: 0.0, ..SiteParams::default() }, 2);
    assert_eq!(r.site.graph.len(), 500);
    assert_eq!(r.prelim.labels(), r.refined.labels());
    assert_eq!(edge_set(&r.prelim.with_sink_loops()), edge_set(&r.refined.with_sink_loops()));
    assert!(r.traffic.redirects.iter().all(|x| x.requested == x.final_url));
    assert!(t.elapsed().as_secs_f64() < 5.0, "took {:?}", t.elapsed());
}

#[test]
fn training_paths_stay_valid_under_redirects() {
    let t = Instant::now();
    let r = run(SiteParams { redirect_rate: 0.3, ..SiteParams::default() }, 2);
    let redirected = r.traffic.redirects.iter().filter(|x| x.requested != x.final_url).count();
    assert!(redirected > 0);
    assert!(r.refined.len() > r.prelim.len(), "variants add labels");
    for (plan, seen) in r.plan.iter().zip(&r.observed) {
        assert_eq!(session_violations(&r.refined, plan, seen), Vec::<usize>::new());
    }
    assert!(t.elapsed().as_secs_f64() < 5.0, "took {:?}", t.elapsed());
}

#[test]
fn generated_graph_density_tracks_the_requested_degree() {
    let p = SiteParams::default();
    let site = generate_site(&p, 4).unwrap();
    let e = site.graph.edge_count() as f64;
    let target = p.labels as f64 * p.mean_out_degree;
    assert!((0.5 * target..=2.0 * target).contains(&e), "{e} edges for target {target}");
}

fn mean_unique_sizes(samples: &[Sample]) -> BTreeMap<Label, f64> {
    let mut acc: BTreeMap<Label, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let n = s.signed_sizes().into_iter().collect::<BTreeSet<_>>().len();
        let e = acc.entry(s.label.clone().unwrap()).or_default();
        e.0 += n;
        e.1 += 1;
    }
    acc.into_iter().map(|(l, (n, c))| (l, n as f64 / c as f64)).collect()
}

#[test]
fn caching_reduces_unique_packet_sizes() {
    let p = SiteParams { labels: 80, ..SiteParams::default() };
    let site = generate_site(&p, 21).unwrap();
    let c = build_canonicalizer(&crawl_pairs(&site.crawl), &CanonConfig::default()).unwrap();
    let g = build_preliminary_graph(&edge_pairs(&site.edges), &c);
    let plan = plan_sessions(&g, &PlanConfig { session_len: 40, dup_threshold: 0.6, min_samples_per_label: 4, seed: 1 });
    let off = generate_traffic(&site.spec, &plan, &ModeConfig::mode(1).unwrap(), 2, "s").unwrap();
    let on = generate_traffic(&site.spec, &plan, &ModeConfig::mode(2).unwrap(), 2, "s").unwrap();
    let (off, on) = (mean_unique_sizes(&off.samples), mean_unique_sizes(&on.samples));
    let total = |m: &BTreeMap<Label, f64>| m.values().sum::<f64>();
    assert!(total(&on) < total(&off), "{} vs {}", total(&on), total(&off));
    let lower = on.iter().filter(|(l, v)| **v <= off[*l]).count();
    assert!(lower * 10 >= on.len() * 9, "{lower} of {} labels", on.len());
}

#[test]
fn corpus_urls_resolve_to_known_labels() {
    let r = run(SiteParams { labels: 60, redirect_rate: 0.2, ..SiteParams::default() }, 2);
    let index = r.site.spec.label_index();
    for rec in &r.traffic.redirects {
        let req = Url::parse(rec.requested.to_string().as_str()).unwrap();
        assert_eq!(req, rec.requested);
        assert!(index.contains_key(&wfbench::sitegraph::full_label(&rec.final_url)));
    }
}

#[test]
fn shipped_configs_parse() {
    use wfbench::harness::ExperimentConfig;
    let default = ExperimentConfig::from_toml(include_str!("../../../configs/default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    let calibrated = ExperimentConfig::from_toml(include_str!("../../../configs/calibrated.toml")).unwrap();
    assert_eq!(calibrated.synth.unwrap().site.labels, 500);
}
