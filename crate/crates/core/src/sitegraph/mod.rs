//! URL canonicalization, site graphs and browsing-session planning.

mod canon;
mod graph;
mod logs;
mod plan;
mod refine;
mod url;

pub use canon::{build_canonicalizer, full_label, CanonConfig, Canonicalizer, Fingerprint};
pub use graph::{build_preliminary_graph, select_subset, SiteGraph, GRAPH_VERSION};
pub use logs::{crawl_pairs, edge_pairs, CrawlRecord, EdgeRecord, RedirectLog, RedirectRecord};
pub use plan::{plan_sessions, random_walk_sessions, BrowsingSession, PlanConfig};
pub use refine::{path_violations, refine, session_violations};
pub use url::Url;
