use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::sitegraph::{full_label, CrawlRecord, EdgeRecord, Fingerprint, SiteGraph, Url};
use crate::util::{rng_for, Rng};

pub const FIRST_PARTY: &str = "site.com";
pub const STATIC_CDN: &str = "static.sitecdn.net";
pub const IMAGE_HOST: &str = "img.siteimg.net";
pub const ANALYTICS: &str = "www.analytics.com";
pub const ADS: &str = "cdn.ads.net";
pub const FONTS: &str = "api.fonts.net";
pub const WIDGET_HOSTS: [&str; 6] = [
    "embed.comments.io",
    "player.videohost.tv",
    "widgets.social.net",
    "tiles.maps.org",
    "api.reviews.com",
    "cdn.chat.io",
];

/// Knobs for a generated website.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteParams {
    pub labels: usize,
    pub mean_out_degree: f64,
    pub sections: usize,
    /// Share of pages addressed as `/item?id=N`.
    pub item_fraction: f64,
    /// Share of links that carry a session id argument.
    pub alias_rate: f64,
    /// Share of pages that sometimes redirect to an A/B variant.
    pub redirect_rate: f64,
    /// Probability that a load of such a page ends on the variant.
    pub redirect_prob: f64,
    /// Median and log-spread of section template sizes.
    pub html_median: f64,
    pub html_sigma: f64,
    /// Log-spread of a page's HTML size around its section template; small
    /// values make pages of one section hard to tell apart.
    pub page_sigma: f64,
    pub object_median: f64,
    pub object_sigma: f64,
    pub request_min: u32,
    pub request_max: u32,
    /// Page-specific images per page, inclusive range.
    pub unique_objects: (usize, usize),
    /// Small template assets (icons, sprites) per page, drawn from a pool
    /// owned by the page's section. Inclusive range.
    pub small_objects: (usize, usize),
    pub small_median: f64,
    pub section_pool: usize,
    /// First-party API calls per page, inclusive range.
    pub api_calls: (usize, usize),
    pub api_median: f64,
    /// Third-party widget providers. Each section embeds a seeded subset;
    /// an embed is a shared script plus a page-specific dynamic call.
    pub widgets: usize,
    pub shared_pool: usize,
    /// Shared static objects per page, inclusive range.
    pub shared_per_page: (usize, usize),
    pub third_parties: bool,
    pub crawl_depth: usize,
}

impl Default for SiteParams {
    fn default() -> Self {
        SiteParams {
            labels: 500,
            mean_out_degree: 12.0,
            sections: 8,
            item_fraction: 0.3,
            alias_rate: 0.3,
            redirect_rate: 0.0,
            redirect_prob: 0.5,
            html_median: 8000.0,
            html_sigma: 0.8,
            page_sigma: 0.3,
            object_median: 8000.0,
            object_sigma: 1.0,
            request_min: 300,
            request_max: 700,
            unique_objects: (0, 2),
            small_objects: (2, 6),
            small_median: 500.0,
            section_pool: 12,
            api_calls: (1, 3),
            api_median: 900.0,
            widgets: 4,
            shared_pool: 40,
            shared_per_page: (2, 8),
            third_parties: true,
            crawl_depth: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    /// Page HTML or API response; size varies per load.
    Dynamic,
    /// Cacheable static resource.
    Static,
    /// Ad creative, drawn per load and never cached.
    Ad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub host: String,
    pub request: u32,
    pub response: u32,
    pub kind: ObjectKind,
}

impl ObjectSpec {
    pub fn first_party(&self) -> bool {
        self.host == FIRST_PARTY || self.host.ends_with(".site.com")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub url: Url,
    pub fingerprint: Fingerprint,
    pub html: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    pub url: Url,
    pub fingerprint: Fingerprint,
    pub html: usize,
    /// Objects fetched after the HTML, in load order.
    pub objects: Vec<usize>,
    pub links: Vec<usize>,
    pub variant: Option<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub params: SiteParams,
    pub seed: u64,
    pub pages: Vec<PageSpec>,
    pub objects: Vec<ObjectSpec>,
    /// Ad creatives, one of which is drawn per ad slot and load.
    pub ads: Vec<usize>,
    /// Share of page object references pointing at shared objects.
    pub sharing_ratio: f64,
}

impl SiteSpec {
    pub fn page_label(&self, i: usize) -> Label {
        full_label(&self.pages[i].url)
    }

    /// Page index for every label a page or its variant can carry.
    pub fn label_index(&self) -> BTreeMap<Label, usize> {
        let mut m = BTreeMap::new();
        for (i, p) in self.pages.iter().enumerate() {
            m.insert(full_label(&p.url), i);
            if let Some(v) = &p.variant {
                m.insert(full_label(&v.url), i);
            }
        }
        m
    }
}

/// A generated site with its ground-truth link graph and crawl logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSite {
    pub spec: SiteSpec,
    /// Link graph over page labels.
    pub graph: SiteGraph,
    pub crawl: Vec<CrawlRecord>,
    pub edges: Vec<EdgeRecord>,
}

fn lognormal(rng: &mut Rng, median: f64, sigma: f64, lo: f64, hi: f64) -> u32 {
    let d = LogNormal::new(median.ln(), sigma).expect("valid lognormal");
    d.sample(rng).clamp(lo, hi).round() as u32
}

fn range(rng: &mut Rng, r: (usize, usize)) -> usize {
    rng.random_range(r.0..=r.1.max(r.0))
}

struct Builder<'a> {
    p: &'a SiteParams,
    rng: Rng,
    objects: Vec<ObjectSpec>,
}

impl Builder<'_> {
    fn object(&mut self, host: &str, response: u32, kind: ObjectKind) -> usize {
        let request = self.rng.random_range(self.p.request_min..=self.p.request_max.max(self.p.request_min));
        self.objects.push(ObjectSpec {
            host: host.to_string(),
            request,
            response: response.max(1),
            kind,
        });
        self.objects.len() - 1
    }

    fn html(&mut self, template: f64) -> usize {
        let r = lognormal(&mut self.rng, template, self.p.page_sigma, 400.0, 400_000.0);
        self.object(FIRST_PARTY, r, ObjectKind::Dynamic)
    }
}

fn validate(p: &SiteParams) -> Result<()> {
    if p.labels < 2 {
        return Err(Error::Config("a site needs at least 2 labels".into()));
    }
    if !(p.mean_out_degree >= 1.0) || p.mean_out_degree > (p.labels - 1) as f64 {
        return Err(Error::Config(format!(
            "mean out-degree {} is infeasible for {} labels",
            p.mean_out_degree, p.labels
        )));
    }
    for (name, v) in [
        ("item_fraction", p.item_fraction),
        ("alias_rate", p.alias_rate),
        ("redirect_rate", p.redirect_rate),
        ("redirect_prob", p.redirect_prob),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if p.request_min == 0 || p.request_min > p.request_max {
        return Err(Error::Config("request size range is empty".into()));
    }
    Ok(())
}

pub fn generate_site(p: &SiteParams, seed: u64) -> Result<GeneratedSite> {
    validate(p)?;
    let n = p.labels;
    let mut b = Builder {
        p,
        rng: rng_for(seed, "site"),
        objects: Vec::new(),
    };
    let sections = p.sections.clamp(1, n - 1);

    // Shared pools.
    let pool: Vec<usize> = (0..p.shared_pool)
        .map(|_| {
            let r = lognormal(&mut b.rng, p.object_median / 2.0, p.object_sigma, 200.0, 300_000.0);
            b.object(STATIC_CDN, r, ObjectKind::Static)
        })
        .collect();
    let mut third: Vec<usize> = Vec::new();
    let mut ads = Vec::new();
    if p.third_parties {
        third.push(b.object(FONTS, 24_000, ObjectKind::Static));
        third.push(b.object(FONTS, 1_800, ObjectKind::Static));
        for _ in 0..12 {
            let r = lognormal(&mut b.rng, 12_000.0, 0.7, 1_000.0, 120_000.0);
            ads.push(b.object(ADS, r, ObjectKind::Ad));
        }
    }

    // Widget providers: one shared script each, embedded per section.
    let widget_scripts: Vec<(usize, &str)> = WIDGET_HOSTS
        .iter()
        .take(p.widgets)
        .map(|&h| {
            let r = lognormal(&mut b.rng, 20_000.0, 0.6, 2_000.0, 200_000.0);
            (b.object(h, r, ObjectKind::Static), h)
        })
        .collect();
    let templates: Vec<f64> = (0..sections)
        .map(|_| f64::from(lognormal(&mut b.rng, p.html_median, p.html_sigma, 1_000.0, 200_000.0)))
        .collect();
    let section_assets: Vec<Vec<usize>> = (0..sections)
        .map(|_| {
            (0..p.section_pool)
                .map(|_| {
                    let r = lognormal(&mut b.rng, p.small_median, 0.6, 40.0, 1_400.0);
                    b.object(STATIC_CDN, r, ObjectKind::Static)
                })
                .collect()
        })
        .collect();
    let section_widgets: Vec<Vec<usize>> = (0..sections)
        .map(|_| (0..widget_scripts.len()).filter(|_| b.rng.random_bool(0.5)).collect())
        .collect();

    // Page URLs: home, section indexes, then articles and items.
    let n_items = ((n - 1 - sections) as f64 * p.item_fraction).round() as usize;
    let mut urls = Vec::with_capacity(n);
    urls.push(Url::parse("http://site.com/")?);
    for s in 0..sections {
        urls.push(Url::parse(&format!("http://site.com/section{s}"))?);
    }
    let n_articles = n - 1 - sections - n_items;
    let mut section_of = vec![0usize; n];
    for i in 0..n_articles {
        let s = b.rng.random_range(0..sections);
        section_of[urls.len()] = s;
        urls.push(Url::parse(&format!("http://site.com/section{s}/page{i}"))?);
    }
    for i in 0..n_items {
        section_of[urls.len()] = b.rng.random_range(0..sections);
        urls.push(Url::parse(&format!("http://site.com/item?id={i}"))?);
    }
    for s in 0..sections {
        section_of[1 + s] = s;
    }

    // Links: a random recursive tree rooted at home, navigation links back
    // to home and the page's section, then random extra links.
    let mut links: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for s in 0..sections {
        links[0].insert(1 + s);
    }
    for i in 1 + sections..n {
        let parent = b.rng.random_range(0..i);
        links[parent].insert(i);
    }
    for i in 1..n {
        links[i].insert(0);
        let sec = 1 + section_of[i];
        if sec != i {
            links[i].insert(sec);
        }
    }
    let target = (n as f64 * p.mean_out_degree).round() as usize;
    let mut have: usize = links.iter().map(BTreeSet::len).sum();
    let mut guard = 0usize;
    while have < target && guard < target * 20 {
        guard += 1;
        let a = b.rng.random_range(0..n);
        let c = b.rng.random_range(0..n);
        if a != c && links[a].insert(c) {
            have += 1;
        }
    }

    let mut pages = Vec::with_capacity(n);
    let mut shared_refs = 0usize;
    let mut total_refs = 0usize;
    for (i, url) in urls.into_iter().enumerate() {
        let html = b.html(templates[section_of[i]]);
        let mut objects = Vec::new();
        for _ in 0..range(&mut b.rng, p.api_calls) {
            let r = lognormal(&mut b.rng, p.api_median, 0.8, 60.0, 60_000.0);
            objects.push(b.object(FIRST_PARTY, r, ObjectKind::Dynamic));
        }
        let k = range(&mut b.rng, p.shared_per_page).min(pool.len());
        let mut shared: Vec<usize> = pool.choose_multiple(&mut b.rng, k).copied().collect();
        shared.sort_unstable();
        shared_refs += shared.len();
        objects.extend(shared);
        for _ in 0..range(&mut b.rng, p.unique_objects) {
            let r = lognormal(&mut b.rng, p.object_median, p.object_sigma, 200.0, 500_000.0);
            objects.push(b.object(IMAGE_HOST, r, ObjectKind::Static));
        }
        let pool = &section_assets[section_of[i]];
        let k = range(&mut b.rng, p.small_objects).min(pool.len());
        let mut small: Vec<usize> = pool.choose_multiple(&mut b.rng, k).copied().collect();
        small.sort_unstable();
        shared_refs += small.len();
        objects.extend(small);
        for &w in &section_widgets[section_of[i]] {
            let (script, host) = widget_scripts[w];
            shared_refs += 1;
            objects.push(script);
            let r = lognormal(&mut b.rng, p.api_median * 2.0, 0.9, 60.0, 60_000.0);
            objects.push(b.object(host, r, ObjectKind::Dynamic));
        }
        if p.third_parties {
            // Analytics beacon: request grows with the page URL.
            let beacon = b.object(ANALYTICS, 43, ObjectKind::Dynamic);
            b.objects[beacon].request = 380 + url.to_string().len() as u32 * 2;
            objects.push(beacon);
            shared_refs += third.len();
            objects.extend(&third);
            // One ad slot on most pages, marked by any ad creative index.
            if b.rng.random_bool(0.6) && !ads.is_empty() {
                objects.push(ads[0]);
            }
        }
        total_refs += objects.len();
        let fingerprint = Fingerprint::new(format!("fp-{i}"));
        let variant = if i > 0 && b.rng.random_bool(p.redirect_rate) {
            let vhtml = b.html(templates[section_of[i]]);
            Some(Variant {
                url: url.with_arg("variant", "b"),
                fingerprint: Fingerprint::new(format!("fp-{i}-b")),
                html: vhtml,
                prob: p.redirect_prob,
            })
        } else {
            None
        };
        pages.push(PageSpec {
            url,
            fingerprint,
            html,
            objects,
            links: links[i].iter().copied().collect(),
            variant,
        });
    }

    let spec = SiteSpec {
        params: p.clone(),
        seed,
        pages,
        objects: b.objects,
        ads,
        sharing_ratio: shared_refs as f64 / total_refs.max(1) as f64,
    };
    let graph = SiteGraph::new(
        (0..n).map(|i| spec.page_label(i)),
        (0..n).flat_map(|i| spec.pages[i].links.iter().map(move |&j| (i, j))).map(|(i, j)| (spec.page_label(i), spec.page_label(j))).collect::<Vec<_>>(),
        Some(spec.page_label(0)),
    );
    let (crawl, edges) = crawl_site(&spec, p.crawl_depth, &mut rng_for(seed, "crawl"));
    Ok(GeneratedSite {
        spec,
        graph,
        crawl,
        edges,
    })
}

/// Link URL for `to`, sometimes decorated with arguments that do not change
/// the page.
fn link_url(spec: &SiteSpec, to: usize, rng: &mut Rng) -> Url {
    let mut u = spec.pages[to].url.clone();
    if rng.random_bool(spec.params.alias_rate) {
        u = u.with_arg("sessionid", &format!("{:08x}", rng.random::<u32>()));
    }
    if to == 0 && rng.random_bool(0.5) {
        u = u.with_arg("utm_source", ["nav", "footer", "logo"].choose(rng).expect("nonempty"));
    }
    u
}

/// Breadth-first crawl from the homepage to `depth` link hops, recording
/// each fetched URL once and every link followed.
fn crawl_site(spec: &SiteSpec, depth: usize, rng: &mut Rng) -> (Vec<CrawlRecord>, Vec<EdgeRecord>) {
    let mut crawl = Vec::new();
    let mut edges = Vec::new();
    let mut fetched: BTreeSet<Url> = BTreeSet::new();
    let mut expanded = vec![false; spec.pages.len()];
    let home = spec.pages[0].url.clone();
    let mut queue = VecDeque::from([(0usize, home.clone(), 0usize)]);
    fetched.insert(home.clone());
    crawl.push(CrawlRecord {
        url: home,
        fingerprint: spec.pages[0].fingerprint.clone(),
    });
    while let Some((page, url, d)) = queue.pop_front() {
        if expanded[page] || d >= depth {
            continue;
        }
        expanded[page] = true;
        let mut links = spec.pages[page].links.clone();
        links.shuffle(rng);
        links.sort_unstable();
        for to in links {
            // The first link found to a page is taken verbatim, so every page
            // is crawled at its plain URL at least once.
            let plain = &spec.pages[to].url;
            let lu = if fetched.contains(plain) {
                link_url(spec, to, rng)
            } else {
                plain.clone()
            };
            edges.push(EdgeRecord {
                from_url: url.clone(),
                to_url: lu.clone(),
            });
            if fetched.insert(lu.clone()) {
                crawl.push(CrawlRecord {
                    url: lu.clone(),
                    fingerprint: spec.pages[to].fingerprint.clone(),
                });
                queue.push_back((to, lu, d + 1));
            }
        }
    }
    (crawl, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SiteParams {
        SiteParams {
            labels: 60,
            mean_out_degree: 6.0,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_site(&small(), 11).unwrap();
        let b = generate_site(&small(), 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.spec, generate_site(&small(), 12).unwrap().spec);
    }

    #[test]
    fn reachable_and_sized() {
        let s = generate_site(&small(), 3).unwrap();
        assert_eq!(s.graph.len(), 60);
        assert!((0.0..=1.0).contains(&s.spec.sharing_ratio));
        let mut seen = BTreeSet::from([0usize]);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            for &j in s.graph.out_neighbors(i) {
                if seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        assert_eq!(seen.len(), 60);
    }

    #[test]
    fn infeasible_degree_errors() {
        let p = SiteParams {
            labels: 5,
            mean_out_degree: 9.0,
            ..Default::default()
        };
        assert!(generate_site(&p, 0).is_err());
        let p = SiteParams { labels: 1, ..Default::default() };
        assert!(generate_site(&p, 0).is_err());
    }
}
