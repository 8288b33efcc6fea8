use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::site::GeneratedSite;
use super::traffic::TrafficOutput;
use crate::error::{Error, Result};
use crate::trace::write_traces;
use crate::util::{sha256_hex, write_json, write_jsonl};

pub const CORPUS_VERSION: u32 = 1;

/// Index of a corpus directory: the generating configuration and a hash of
/// every file written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub config: serde_json::Value,
    pub files: BTreeMap<String, String>,
}

/// Writes a site and its traffic sets under `dir`.
///
/// Layout: `site.json`, `graph.json`, `crawl.jsonl`, `edges.jsonl`, then
/// per traffic set `NAME.traces.jsonl`, `NAME.redirects.jsonl` and
/// `NAME.final_crawl.jsonl`, and finally `manifest.json`.
pub fn write_corpus(
    dir: &Path,
    site: &GeneratedSite,
    sets: &[(&str, &TrafficOutput)],
    config: serde_json::Value,
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = vec!["site.json".to_string(), "graph.json".into(), "crawl.jsonl".into(), "edges.jsonl".into()];
    write_json(&dir.join("site.json"), &site.spec)?;
    site.graph.save(&dir.join("graph.json"))?;
    write_jsonl(&dir.join("crawl.jsonl"), &site.crawl)?;
    write_jsonl(&dir.join("edges.jsonl"), &site.edges)?;
    for (name, t) in sets {
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Config(format!("bad traffic set name {name:?}")));
        }
        let traces = format!("{name}.traces.jsonl");
        let redirects = format!("{name}.redirects.jsonl");
        let finals = format!("{name}.final_crawl.jsonl");
        write_traces(&dir.join(&traces), &t.samples)?;
        write_jsonl(&dir.join(&redirects), &t.redirects)?;
        write_jsonl(&dir.join(&finals), &t.final_crawl)?;
        names.extend([traces, redirects, finals]);
    }
    let mut files = BTreeMap::new();
    for n in names {
        let p = dir.join(&n);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        files.insert(n, sha256_hex(&bytes));
    }
    let manifest = CorpusManifest {
        version: CORPUS_VERSION,
        config,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
