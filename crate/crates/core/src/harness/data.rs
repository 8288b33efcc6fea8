use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FileData, SynthData};
use crate::defenses::{measure_overhead, DefensePlan, DefenseSpec, OverheadReport};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::sitegraph::{
    build_canonicalizer, build_preliminary_graph, crawl_pairs, edge_pairs, plan_sessions, random_walk_sessions,
    refine, CanonConfig, Canonicalizer, PlanConfig, RedirectLog, SiteGraph, Url,
};
use crate::synth::{generate_site, generate_traffic, GeneratedSite, TrafficOutput};
use crate::trace::{read_traces, Sample, SampleId};
use crate::util::derive_seed;

/// Site-graph statistics of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub site_labels: usize,
    pub preliminary_labels: usize,
    pub preliminary_edges: usize,
    pub final_labels: usize,
    pub final_edges: usize,
    pub redirected_loads: usize,
}

/// Labelled training and evaluation traffic plus the graph used for
/// sequence decoding.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
    pub graph: Option<SiteGraph>,
    /// Samples per label the training plan guarantees, if known.
    pub planned_per_label: Option<usize>,
    pub stats: Option<GraphStats>,
    pub overhead: Option<OverheadReport>,
}

fn relabel(samples: &mut [Sample], finals: &[Url], c: &Canonicalizer) {
    for (s, u) in samples.iter_mut().zip(finals) {
        s.label = Some(c.canonicalize(u));
    }
}

/// Raw synthetic collection: the site, training traffic browsed along
/// sessions planned over the crawled graph, and evaluation traffic from
/// random walks over the true link graph.
pub struct SynthCorpus {
    pub site: GeneratedSite,
    pub canon: CanonConfig,
    pub train: TrafficOutput,
    pub eval: TrafficOutput,
}

pub fn synth_corpus(cfg: &ExperimentConfig, sd: &SynthData) -> Result<SynthCorpus> {
    let seeds = &cfg.seeds;
    let site = generate_site(&sd.site, seeds.site)?;
    let canon = CanonConfig {
        seed: derive_seed(seeds.site, "canon"),
        ..sd.canon.clone()
    };
    let c = build_canonicalizer(&crawl_pairs(&site.crawl), &canon)?;
    let g_prelim = build_preliminary_graph(&edge_pairs(&site.edges), &c);
    let plan = plan_sessions(
        &g_prelim,
        &PlanConfig {
            session_len: sd.train_session_len,
            dup_threshold: sd.dup_threshold,
            min_samples_per_label: cfg.train_samples_per_label,
            seed: seeds.plan,
        },
    );
    let train = generate_traffic(&site.spec, &plan, &sd.mode(&sd.train_mode)?, seeds.train_user, "train-")?;
    let walks = random_walk_sessions(&site.graph, sd.eval_sessions, sd.eval_session_len, seeds.eval_walk);
    let eval = generate_traffic(&site.spec, &walks, &sd.mode(&sd.eval_mode)?, seeds.eval_user, "eval-")?;
    Ok(SynthCorpus {
        site,
        canon,
        train,
        eval,
    })
}

/// Runs the full collection pipeline on a generated site: crawl, label and
/// graph construction, training sessions under the training mode, graph
/// refinement from the training redirects, then evaluation browsing.
/// Samples of both splits are labelled by the refined canonicalizer.
pub fn synth_dataset(cfg: &ExperimentConfig, sd: &SynthData) -> Result<Dataset> {
    let corpus = synth_corpus(cfg, sd)?;
    let SynthCorpus {
        site,
        canon,
        train: train_out,
        eval: eval_out,
    } = corpus;
    let c = build_canonicalizer(&crawl_pairs(&site.crawl), &canon)?;
    let g_prelim = build_preliminary_graph(&edge_pairs(&site.edges), &c);
    let log: RedirectLog = train_out.redirects.iter().cloned().collect();
    let redirected = train_out.redirects.iter().filter(|r| r.requested != r.final_url).count();
    let (c2, g_final) = refine(&g_prelim, &c, &log, &crawl_pairs(&train_out.final_crawl), &canon)?;

    let mut train = train_out.samples;
    let finals: Vec<Url> = train_out.redirects.into_iter().map(|r| r.final_url).collect();
    relabel(&mut train, &finals, &c2);
    let mut eval = eval_out.samples;
    let finals: Vec<Url> = eval_out.redirects.into_iter().map(|r| r.final_url).collect();
    relabel(&mut eval, &finals, &c2);

    let stats = GraphStats {
        site_labels: site.graph.len(),
        preliminary_labels: g_prelim.len(),
        preliminary_edges: g_prelim.edge_count(),
        final_labels: g_final.len(),
        final_edges: g_final.edge_count(),
        redirected_loads: redirected,
    };
    Ok(Dataset {
        train,
        eval,
        graph: Some(g_final),
        planned_per_label: Some(cfg.train_samples_per_label),
        stats: Some(stats),
        overhead: None,
    })
}

pub fn file_dataset(fd: &FileData) -> Result<Dataset> {
    let train = read_traces(&fd.train)?;
    let eval = read_traces(&fd.eval)?;
    let graph = fd.graph.as_deref().map(SiteGraph::load).transpose()?;
    Ok(Dataset {
        train,
        eval,
        graph,
        planned_per_label: None,
        stats: None,
        overhead: None,
    })
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let d = match (&cfg.synth, &cfg.files) {
        (Some(sd), _) => synth_dataset(cfg, sd)?,
        (None, Some(fd)) => file_dataset(fd)?,
        (None, None) => unreachable!("validated"),
    };
    check_disjoint(&d.train, &d.eval)?;
    Ok(d)
}

/// Errors when a sample id occurs in both splits.
pub fn check_disjoint(train: &[Sample], eval: &[Sample]) -> Result<()> {
    let ids: BTreeSet<SampleId> = train.iter().map(Sample::id).collect();
    if let Some(s) = eval.iter().find(|s| ids.contains(&s.id())) {
        return Err(Error::InvalidInput(format!("sample {} is in both training and evaluation data", s.id())));
    }
    Ok(())
}

/// Applies `spec` to both splits. Burst thresholds are learned from the
/// training split; overhead is measured on the evaluation split.
pub fn defend(d: &Dataset, spec: &DefenseSpec, mtu: u32, fragment_depth: u32) -> Result<Dataset> {
    if *spec == DefenseSpec::None {
        return Ok(d.clone());
    }
    let refs: Vec<&Sample> = d.train.iter().collect();
    let mut plan = DefensePlan::new(spec.clone(), mtu, &refs)?;
    plan.fragment_depth = fragment_depth;
    let train = plan.apply_all(&d.train);
    let eval = plan.apply_all(&d.eval);
    let overhead = measure_overhead(&d.eval, &eval)?;
    Ok(Dataset {
        train,
        eval,
        overhead: Some(overhead),
        ..d.clone()
    })
}

/// Evaluation samples grouped into sessions, each in position order.
pub fn sessions(samples: &[Sample]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].id().cmp(&samples[b].id()));
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<&str> = None;
    for i in order {
        let sid = samples[i].session_id.as_str();
        if last != Some(sid) {
            out.push(Vec::new());
            last = Some(sid);
        }
        out.last_mut().expect("pushed").push(i);
    }
    out
}

/// Labels a training subsample: up to `k` samples per label, seeded.
pub fn subsample(train: &[Sample], k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut by_label: std::collections::BTreeMap<&Label, Vec<usize>> = Default::default();
    for (i, s) in train.iter().enumerate() {
        if let Some(l) = &s.label {
            by_label.entry(l).or_default().push(i);
        }
    }
    let mut keep = Vec::new();
    for (l, mut idx) in by_label {
        if idx.len() > k {
            idx.shuffle(&mut crate::util::rng_for(seed, l.as_str()));
            idx.truncate(k);
        }
        keep.extend(idx);
    }
    keep.sort_unstable();
    keep
}
