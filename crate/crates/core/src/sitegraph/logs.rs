//! Line-delimited crawl, link and redirect logs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::canon::Fingerprint;
use super::url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlRecord {
    pub url: Url,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from_url: Url,
    pub to_url: Url,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedirectRecord {
    pub requested: Url,
    #[serde(rename = "final")]
    pub final_url: Url,
}

pub fn crawl_pairs(records: &[CrawlRecord]) -> Vec<(Url, Fingerprint)> {
    records.iter().map(|r| (r.url.clone(), r.fingerprint.clone())).collect()
}

pub fn edge_pairs(records: &[EdgeRecord]) -> Vec<(Url, Url)> {
    records.iter().map(|r| (r.from_url.clone(), r.to_url.clone())).collect()
}

/// Observed `(requested, final)` URL pairs, aggregated into the translation
/// map from each requested URL to the set of final URLs seen for it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RedirectLog {
    translations: BTreeMap<Url, BTreeSet<Url>>,
}

impl RedirectLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, requested: Url, final_url: Url) {
        self.translations.entry(requested).or_default().insert(final_url);
    }

    pub fn translations(&self, u: &Url) -> Option<&BTreeSet<Url>> {
        self.translations.get(u)
    }

    /// Every final URL observed.
    pub fn final_urls(&self) -> BTreeSet<&Url> {
        self.translations.values().flatten().collect()
    }

    pub fn len(&self) -> usize {
        self.translations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.translations.is_empty()
    }
}

impl FromIterator<RedirectRecord> for RedirectLog {
    fn from_iter<I: IntoIterator<Item = RedirectRecord>>(iter: I) -> Self {
        let mut log = RedirectLog::new();
        for r in iter {
            log.observe(r.requested, r.final_url);
        }
        log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_use_documented_keys() {
        let r = RedirectRecord {
            requested: Url::parse("a.com/x").unwrap(),
            final_url: Url::parse("a.com/y").unwrap(),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"requested":"http://a.com/x","final":"http://a.com/y"}"#);
        let e: EdgeRecord = serde_json::from_str(r#"{"from_url":"a.com","to_url":"a.com/b"}"#).unwrap();
        assert_eq!(e.to_url.path, "/b");
    }

    #[test]
    fn redirect_log_aggregates() {
        let u = Url::parse("a.com/x").unwrap();
        let log: RedirectLog = ["a.com/y", "a.com/z", "a.com/y"]
            .iter()
            .map(|f| RedirectRecord {
                requested: u.clone(),
                final_url: Url::parse(f).unwrap(),
            })
            .collect();
        assert_eq!(log.translations(&u).unwrap().len(), 2);
        assert_eq!(log.len(), 2);
    }
}
