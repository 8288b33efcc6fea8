//! URL → label canonicalization.
//!
//! Any two URLs with different host, port or path get different labels.
//! Query arguments are kept unless the crawl log shows they do not change
//! page content; arguments never seen during the build are kept.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::url::{encode_query, Url};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::util::rng_for;

/// Opaque content-equality token for a crawled page.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub String);

impl Fingerprint {
    pub fn new(s: impl Into<String>) -> Self {
        Fingerprint(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanonConfig {
    /// Paths sampled per argument.
    pub max_paths: usize,
    /// Distinct values sampled per path.
    pub max_values: usize,
    pub seed: u64,
}

impl Default for CanonConfig {
    fn default() -> Self {
        CanonConfig {
            max_paths: 6,
            max_values: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canonicalizer {
    /// Arguments shown not to influence content; stripped from labels.
    insignificant: BTreeSet<String>,
    /// Every argument seen while building.
    observed: BTreeSet<String>,
    /// Reverse map over the URLs the canonicalizer was built from.
    reverse: BTreeMap<Label, BTreeSet<Url>>,
}

#[derive(Default)]
struct Evidence {
    influences: bool,
    no_influence: bool,
}

fn judge_argument(
    arg: &str,
    by_base: &BTreeMap<String, Vec<(&Url, &Fingerprint)>>,
    cfg: &CanonConfig,
    rng: &mut crate::util::Rng,
) -> Evidence {
    let mut bases: Vec<&String> = by_base
        .iter()
        .filter(|(_, es)| es.iter().any(|(u, _)| u.has_arg(arg)))
        .map(|(b, _)| b)
        .collect();
    bases.shuffle(rng);
    bases.truncate(cfg.max_paths);
    bases.sort();

    let mut ev = Evidence::default();
    for base in bases {
        let entries = &by_base[base];
        let mut values: Vec<&str> = entries
            .iter()
            .filter_map(|(u, _)| u.arg(arg))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        values.shuffle(rng);
        values.truncate(cfg.max_values);
        let chosen: BTreeSet<&str> = values.into_iter().collect();
        let with: Vec<&(&Url, &Fingerprint)> = entries
            .iter()
            .filter(|(u, _)| u.arg(arg).is_some_and(|v| chosen.contains(v)))
            .collect();
        let without: Vec<&(&Url, &Fingerprint)> = entries.iter().filter(|(u, _)| !u.has_arg(arg)).collect();

        if chosen.len() >= 2 {
            let fps: BTreeSet<&Fingerprint> = with.iter().chain(&without).map(|(_, f)| *f).collect();
            if fps.len() == 1 {
                ev.no_influence = true;
                continue;
            }
        }
        // Pairs that differ only in this argument's value.
        for (i, (u1, f1)) in with.iter().enumerate() {
            let others = u1.other_args(arg);
            for (u2, f2) in &with[i + 1..] {
                if u1.arg(arg) == u2.arg(arg) || u2.other_args(arg) != others {
                    continue;
                }
                if f1 == f2 {
                    if chosen.len() >= 2 {
                        ev.no_influence = true;
                    }
                } else {
                    ev.influences = true;
                }
            }
            // Removal of the argument.
            for (w, fw) in &without {
                if w.other_args(arg) == others && fw != f1 {
                    ev.influences = true;
                }
            }
        }
    }
    ev
}

/// Builds a canonicalizer from crawled `(url, fingerprint)` pairs.
///
/// The first fingerprint recorded for a URL is used. An argument is dropped
/// from labels only when sampled pages show it leaving content unchanged and
/// no sampled pair shows it changing content; anything unresolved is kept.
pub fn build_canonicalizer(crawl_log: &[(Url, Fingerprint)], cfg: &CanonConfig) -> Result<Canonicalizer> {
    if crawl_log.is_empty() {
        return Err(Error::InvalidInput("empty crawl log".into()));
    }
    let mut first: BTreeMap<&Url, &Fingerprint> = BTreeMap::new();
    for (u, f) in crawl_log {
        first.entry(u).or_insert(f);
    }
    let mut by_base: BTreeMap<String, Vec<(&Url, &Fingerprint)>> = BTreeMap::new();
    let mut observed = BTreeSet::new();
    for (u, f) in &first {
        by_base.entry(u.base()).or_default().push((u, f));
        observed.extend(u.query.iter().map(|(k, _)| k.clone()));
    }
    let mut rng = rng_for(cfg.seed, "canonicalizer");
    let mut insignificant = BTreeSet::new();
    for arg in &observed {
        let ev = judge_argument(arg, &by_base, cfg, &mut rng);
        if ev.no_influence && !ev.influences {
            insignificant.insert(arg.clone());
        }
    }
    let mut c = Canonicalizer {
        insignificant,
        observed,
        reverse: BTreeMap::new(),
    };
    for u in first.keys() {
        let l = c.canonicalize(u);
        c.reverse.entry(l).or_default().insert((*u).clone());
    }
    Ok(c)
}

impl Canonicalizer {
    pub fn canonicalize(&self, u: &Url) -> Label {
        label_with_args(u, |k| !self.insignificant.contains(k))
    }

    /// URLs from the build log that canonicalize to `label`.
    pub fn reverse(&self, label: &Label) -> Option<&BTreeSet<Url>> {
        self.reverse.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.reverse.keys()
    }

    pub fn is_significant(&self, arg: &str) -> bool {
        !self.insignificant.contains(arg)
    }

    pub fn insignificant_args(&self) -> &BTreeSet<String> {
        &self.insignificant
    }

    pub fn observed_args(&self) -> &BTreeSet<String> {
        &self.observed
    }
}

/// Label of `u` keeping every query argument.
pub fn full_label(u: &Url) -> Label {
    label_with_args(u, |_| true)
}

fn label_with_args(u: &Url, keep: impl Fn(&str) -> bool) -> Label {
    let mut kept: Vec<(&str, &str)> = u
        .query
        .iter()
        .filter(|(k, _)| keep(k))
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() {
        Label::new(u.base())
    } else {
        Label::new(format!("{}?{}", u.base(), encode_query(kept)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(entries: &[(&str, &str)]) -> Vec<(Url, Fingerprint)> {
        entries
            .iter()
            .map(|(u, f)| (Url::parse(u).unwrap(), Fingerprint::new(*f)))
            .collect()
    }

    fn label(c: &Canonicalizer, u: &str) -> String {
        c.canonicalize(&Url::parse(u).unwrap()).to_string()
    }

    #[test]
    fn session_ids_are_stripped() {
        let c = build_canonicalizer(
            &log(&[
                ("host/a?sessionid=1", "A"),
                ("host/a?sessionid=2", "A"),
                ("host/a?sessionid=3", "A"),
                ("host/b?sessionid=4", "B"),
                ("host/b?sessionid=5", "B"),
            ]),
            &CanonConfig::default(),
        )
        .unwrap();
        assert!(!c.is_significant("sessionid"));
        assert_eq!(label(&c, "host/a?sessionid=1"), "host/a");
        assert_eq!(label(&c, "host/a?sessionid=2"), "host/a");
        assert_eq!(c.reverse(&Label::new("host/a")).unwrap().len(), 3);
    }

    #[test]
    fn content_arguments_are_kept() {
        let c = build_canonicalizer(
            &log(&[("host/p?id=1", "P1"), ("host/p?id=2", "P2"), ("host/p?id=3", "P3")]),
            &CanonConfig::default(),
        )
        .unwrap();
        assert_ne!(label(&c, "host/p?id=1"), label(&c, "host/p?id=2"));
    }

    #[test]
    fn different_paths_never_merge() {
        let c = build_canonicalizer(&log(&[("host/a", "same"), ("host/b", "same")]), &CanonConfig::default()).unwrap();
        assert_ne!(label(&c, "host/a"), label(&c, "host/b"));
    }

    #[test]
    fn single_valued_arguments_are_kept() {
        let c = build_canonicalizer(&log(&[("host/a?x=1", "A"), ("host/a", "A")]), &CanonConfig::default()).unwrap();
        assert!(c.is_significant("x"));
    }

    #[test]
    fn removal_that_changes_content_is_significant() {
        let c = build_canonicalizer(
            &log(&[("host/a?v=1", "A1"), ("host/a?v=1&s=9", "A1"), ("host/a", "A0")]),
            &CanonConfig::default(),
        )
        .unwrap();
        assert!(c.is_significant("v"));
    }

    #[test]
    fn mixed_args_resolve_by_clean_pairs() {
        let c = build_canonicalizer(
            &log(&[
                ("host/p?id=1&sid=1", "P1"),
                ("host/p?id=1&sid=2", "P1"),
                ("host/p?id=2&sid=3", "P2"),
                ("host/p?id=2&sid=4", "P2"),
            ]),
            &CanonConfig::default(),
        )
        .unwrap();
        assert!(!c.is_significant("sid"));
        assert!(c.is_significant("id"));
        assert_eq!(label(&c, "host/p?sid=7&id=2"), "host/p?id=2");
    }

    #[test]
    fn lowercases_and_sorts_retained_args() {
        let c = build_canonicalizer(&log(&[("x.com/", "H")]), &CanonConfig::default()).unwrap();
        assert_eq!(label(&c, "WWW.Example.com/Path/"), "example.com/path");
        assert_eq!(label(&c, "e.com/p?b=2&a=1"), label(&c, "e.com/p?a=1&b=2"));
        assert_eq!(label(&c, "e.com/p?b=2&a=1"), "e.com/p?a=1&b=2");
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(build_canonicalizer(&[], &CanonConfig::default()).is_err());
    }
}
