use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::SiteGraph;
use crate::label::Label;
use crate::util::{rng_for, Rng};

/// A planned sequence of page visits. `forced[i]` marks a step that jumps
/// to an unvisited label regardless of links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowsingSession {
    pub labels: Vec<Label>,
    pub forced: Vec<bool>,
}

impl BrowsingSession {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub session_len: usize,
    pub dup_threshold: f64,
    pub min_samples_per_label: usize,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            session_len: 75,
            dup_threshold: 0.6,
            min_samples_per_label: 1,
            seed: 0,
        }
    }
}

fn step(g: &SiteGraph, cur: usize, rng: &mut Rng, prefer: impl Fn(usize) -> bool) -> usize {
    let out = g.out_neighbors(cur);
    if out.is_empty() {
        return cur;
    }
    let fresh: Vec<usize> = out.iter().copied().filter(|&j| prefer(j)).collect();
    let pool = if fresh.is_empty() { out } else { &fresh[..] };
    pool[rng.random_range(0..pool.len())]
}

/// Plans training sessions by a coverage-seeking random walk.
///
/// The walk prefers out-neighbors not yet seen in the current coverage pass.
/// Once the share of repeat visits in the pass reaches `dup_threshold`, the
/// labels still missing from the pass are visited directly, in random order.
/// A pass ends when every label has been seen. The first session starts at
/// the homepage; later sessions pick up where the previous one stopped.
pub fn plan_sessions(g: &SiteGraph, cfg: &PlanConfig) -> Vec<BrowsingSession> {
    let n = g.len();
    if n == 0 || cfg.session_len == 0 {
        return Vec::new();
    }
    // A dup_threshold above 1 can never trip; this cap keeps the walk from
    // wandering forever on graphs that are not strongly connected.
    let pass_cap = n.saturating_mul(64).max(1024);
    let mut rng = rng_for(cfg.seed, "plan_sessions");
    let mut counts = vec![0usize; n];
    let mut seen = vec![false; n];
    let mut seen_count = 0usize;
    let (mut visits, mut dups) = (0usize, 0usize);
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut sessions = Vec::new();
    let mut cur_labels = Vec::with_capacity(cfg.session_len);
    let mut cur_forced = Vec::with_capacity(cfg.session_len);
    let mut cur: Option<usize> = None;

    loop {
        let (next, forced) = match cur {
            None => (g.home_index().unwrap_or(0), false),
            Some(c) => {
                while queue.front().is_some_and(|&q| seen[q]) {
                    queue.pop_front();
                }
                match queue.pop_front() {
                    Some(q) => (q, true),
                    None => (step(g, c, &mut rng, |j| !seen[j]), false),
                }
            }
        };
        cur = Some(next);
        counts[next] += 1;
        visits += 1;
        if seen[next] {
            dups += 1;
        } else {
            seen[next] = true;
            seen_count += 1;
        }
        cur_labels.push(g.label(next).clone());
        cur_forced.push(forced);

        if seen_count == n {
            seen.iter_mut().for_each(|s| *s = false);
            seen_count = 0;
            visits = 0;
            dups = 0;
            queue.clear();
        } else if queue.is_empty() && (dups as f64 >= cfg.dup_threshold * visits as f64 || visits >= pass_cap) {
            let mut rest: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
            rest.shuffle(&mut rng);
            queue.extend(rest);
        }

        if cur_labels.len() == cfg.session_len {
            sessions.push(BrowsingSession {
                labels: std::mem::take(&mut cur_labels),
                forced: std::mem::take(&mut cur_forced),
            });
            if counts.iter().all(|&c| c >= cfg.min_samples_per_label) {
                return sessions;
            }
        }
    }
}

/// Victim-style browsing: uniform random start, then uniform random links.
pub fn random_walk_sessions(g: &SiteGraph, count: usize, session_len: usize, seed: u64) -> Vec<BrowsingSession> {
    if g.is_empty() {
        return Vec::new();
    }
    let mut rng = rng_for(seed, "random_walk_sessions");
    (0..count)
        .map(|_| {
            let mut cur = rng.random_range(0..g.len());
            let mut labels = Vec::with_capacity(session_len);
            for i in 0..session_len {
                if i > 0 {
                    cur = step(g, cur, &mut rng, |_| false);
                }
                labels.push(g.label(cur).clone());
            }
            BrowsingSession {
                forced: vec![false; labels.len()],
                labels,
            }
        })
        .collect()
}
