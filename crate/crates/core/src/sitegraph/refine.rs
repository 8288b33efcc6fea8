use std::collections::BTreeSet;

use super::canon::{build_canonicalizer, CanonConfig, Canonicalizer, Fingerprint};
use super::graph::SiteGraph;
use super::logs::RedirectLog;
use super::plan::BrowsingSession;
use super::url::Url;
use crate::error::{Error, Result};
use crate::label::Label;

/// Rebuilds labels and edges from what was actually loaded.
///
/// Each preliminary label is translated to the set of final URLs observed
/// for any of its URLs, and those are canonicalized with a canonicalizer
/// built over the final crawl. Every preliminary edge `(l, m)` becomes all
/// pairs between the final labels of `l` and of `m`. Sink labels of the
/// preliminary graph keep their self-loop, since planning walks it.
pub fn refine(
    g_prelim: &SiteGraph,
    c: &Canonicalizer,
    log: &RedirectLog,
    final_crawl: &[(Url, Fingerprint)],
    cfg: &CanonConfig,
) -> Result<(Canonicalizer, SiteGraph)> {
    let c2 = build_canonicalizer(final_crawl, cfg)?;
    let mut images: Vec<BTreeSet<Label>> = Vec::with_capacity(g_prelim.len());
    for l in g_prelim.labels() {
        let urls = c.reverse(l).ok_or_else(|| Error::UnknownLabel(l.to_string()))?;
        let img: BTreeSet<Label> = urls
            .iter()
            .filter_map(|u| log.translations(u))
            .flatten()
            .map(|f| c2.canonicalize(f))
            .collect();
        if img.is_empty() {
            return Err(Error::InvalidInput(format!("no redirect observation covers label {l}")));
        }
        images.push(img);
    }
    let mut edges = BTreeSet::new();
    for (a, b) in g_prelim.with_sink_loops().edge_indices() {
        for x in &images[a] {
            for y in &images[b] {
                edges.insert((x.clone(), y.clone()));
            }
        }
    }
    let labels: Vec<Label> = images.iter().flatten().cloned().collect();
    let home = g_prelim.home_index().and_then(|h| images[h].first().cloned());
    Ok((c2, SiteGraph::new(labels, edges, home)))
}

/// Positions in a labelled session where the step from the previous label
/// is neither an edge nor a sink self-loop. Forced steps are skipped.
pub fn path_violations(g: &SiteGraph, labels: &[Label], forced: &[bool]) -> Vec<usize> {
    (1..labels.len())
        .filter(|&i| !forced.get(i).copied().unwrap_or(false))
        .filter(|&i| !g.allows_step(&labels[i - 1], &labels[i]))
        .collect()
}

/// Violations for a planned session relabelled through the final labels.
pub fn session_violations(g: &SiteGraph, plan: &BrowsingSession, observed: &[Label]) -> Vec<usize> {
    path_violations(g, observed, &plan.forced)
}
