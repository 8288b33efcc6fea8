//! Seeded synthetic websites and browsing traffic.

mod corpus;
mod site;
mod traffic;

pub use corpus::{write_corpus, CorpusManifest, CORPUS_VERSION};
pub use site::{
    generate_site, GeneratedSite, ObjectKind, ObjectSpec, PageSpec, SiteParams, SiteSpec, Variant, ADS, ANALYTICS,
    FIRST_PARTY, FONTS, IMAGE_HOST, STATIC_CDN,
};
pub use traffic::{cookie_offset, generate_traffic, CookieMode, Diversity, ModeConfig, TrafficOutput};
