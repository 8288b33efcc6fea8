use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::site::{ObjectKind, SiteSpec, FIRST_PARTY};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::sitegraph::{full_label, BrowsingSession, CrawlRecord, RedirectRecord, Url};
use crate::trace::{Direction, FlowId, Sample, SampleBuilder, DEFAULT_MTU};
use crate::util::{derive_seed, rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CookieMode {
    /// No site cookie; requests carry no per-user bytes.
    Null,
    /// A cookie whose length depends on the user seed.
    PerUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diversity {
    SingleSite,
    /// Visits to other websites are interleaved with the monitored site.
    MultiSite,
}

/// Browser and user conditions under which traffic is collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub cache: bool,
    /// Keep browser state (cache) across sessions instead of starting each
    /// session from a fresh machine.
    pub persistent: bool,
    pub cookie: CookieMode,
    /// Inclusive range of per-user cookie lengths in bytes.
    pub cookie_bytes: (u32, u32),
    pub diversity: Diversity,
    /// Size jitter fraction. Dynamic responses are scaled by a factor drawn
    /// uniformly from `[1 - noise, 1 + noise]`; requests and static objects
    /// keep their exact size.
    pub noise: f64,
    /// Probability that a full-size segment of a multi-packet transfer is
    /// cut short at a random point, as TLS record and send-buffer timing do
    /// on real stacks. Burst totals are unchanged.
    pub split_rate: f64,
    /// Response header bytes that vary per load (dates, cache status, age):
    /// each response grows by a uniform draw from `0..=header_jitter`.
    pub header_jitter: u32,
    /// Probability that a subresource is not fetched on a given load (lazy
    /// loading, rotating content). The main document is always fetched.
    pub skip_rate: f64,
    /// Cache capacity in objects (least recently used eviction).
    pub cache_capacity: usize,
    /// Objects fetched per interleaved foreign page in multi-site mode.
    pub foreign_objects: usize,
    pub mtu: u32,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig::mode(2).expect("mode 2 exists")
    }
}

impl ModeConfig {
    /// The four standard collection modes.
    pub fn mode(n: u8) -> Result<ModeConfig> {
        let base = ModeConfig {
            cache: true,
            persistent: false,
            cookie: CookieMode::Null,
            cookie_bytes: (300, 900),
            diversity: Diversity::SingleSite,
            noise: 0.05,
            split_rate: 0.0,
            header_jitter: 0,
            skip_rate: 0.0,
            cache_capacity: 256,
            foreign_objects: 12,
            mtu: DEFAULT_MTU,
        };
        Ok(match n {
            1 => ModeConfig { cache: false, ..base },
            2 => base,
            3 => ModeConfig {
                persistent: true,
                cookie: CookieMode::PerUser,
                ..base
            },
            4 => ModeConfig {
                persistent: true,
                cookie: CookieMode::PerUser,
                diversity: Diversity::MultiSite,
                ..base
            },
            _ => return Err(Error::Config(format!("unknown collection mode {n} (expected 1-4)"))),
        })
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise must be in [0, 0.5], got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.split_rate) {
            return Err(Error::Config(format!("split_rate must be in [0, 1], got {}", self.split_rate)));
        }
        if !(0.0..1.0).contains(&self.skip_rate) {
            return Err(Error::Config(format!("skip_rate must be in [0, 1), got {}", self.skip_rate)));
        }
        if self.mtu == 0 {
            return Err(Error::Config("mtu must be positive".into()));
        }
        if self.cookie_bytes.0 > self.cookie_bytes.1 {
            return Err(Error::Config(format!("empty cookie_bytes range {:?}", self.cookie_bytes)));
        }
        Ok(())
    }
}

/// Request bytes the per-user cookie adds to every first-party request.
pub fn cookie_offset(mode: &ModeConfig, user_seed: u64) -> u32 {
    match mode.cookie {
        CookieMode::Null => 0,
        CookieMode::PerUser => rng_for(user_seed, "cookie").random_range(mode.cookie_bytes.0..=mode.cookie_bytes.1),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrafficOutput {
    pub samples: Vec<Sample>,
    /// One record per load: requested URL and the URL finally displayed.
    pub redirects: Vec<RedirectRecord>,
    /// Content fingerprints of every final URL observed, sorted by URL.
    pub final_crawl: Vec<CrawlRecord>,
}

/// Least-recently-used object cache.
#[derive(Debug, Default)]
struct Cache {
    capacity: usize,
    clock: u64,
    stamp: HashMap<u64, u64>,
    order: BTreeMap<u64, u64>,
}

impl Cache {
    fn new(capacity: usize) -> Self {
        Cache {
            capacity,
            ..Default::default()
        }
    }

    /// Marks `key` used; returns whether it was already cached.
    fn touch(&mut self, key: u64) -> bool {
        self.clock += 1;
        let hit = match self.stamp.insert(key, self.clock) {
            Some(old) => {
                self.order.remove(&old);
                true
            }
            None => false,
        };
        self.order.insert(self.clock, key);
        while self.stamp.len() > self.capacity {
            let (_, k) = self.order.pop_first().expect("nonempty");
            self.stamp.remove(&k);
        }
        hit
    }

    fn clear(&mut self) {
        self.stamp.clear();
        self.order.clear();
    }
}

struct Loader<'a> {
    site: &'a SiteSpec,
    mode: &'a ModeConfig,
    cookie: u32,
    rng: Rng,
    cache: Cache,
    foreign: u64,
}

impl Loader<'_> {
    fn jitter(&mut self, bytes: u32) -> u64 {
        if self.mode.noise == 0.0 {
            return u64::from(bytes);
        }
        let f = self.rng.random_range(1.0 - self.mode.noise..=1.0 + self.mode.noise);
        (f64::from(bytes) * f).round().max(1.0) as u64
    }

    fn fresh_state(&mut self) {
        self.cache.clear();
        if self.mode.cache && self.mode.diversity == Diversity::MultiSite {
            // Other sites already pulled in the shared third-party resources.
            for (i, o) in self.site.objects.iter().enumerate() {
                if o.kind == ObjectKind::Static && !o.first_party() && !o.host.ends_with("sitecdn.net")
                    && !o.host.ends_with("siteimg.net")
                {
                    self.cache.touch(i as u64);
                }
            }
        }
    }

    fn browse_elsewhere(&mut self) {
        for _ in 0..self.mode.foreign_objects {
            self.foreign += 1;
            self.cache.touch(u64::MAX - self.foreign);
        }
    }

    fn transfer(&mut self, b: &mut SampleBuilder, flows: &mut BTreeMap<String, FlowId>, obj: usize) {
        let o = &self.site.objects[obj];
        let flow = *flows.entry(o.host.clone()).or_insert_with(|| b.open_flow(o.host.clone()));
        let extra = if o.first_party() { self.cookie } else { 0 };
        let (req, resp) = (o.request + extra, o.response);
        let req = u64::from(req);
        let resp = match o.kind {
            ObjectKind::Static => u64::from(resp),
            _ => self.jitter(resp),
        };
        self.exchange(b, flow, req, resp);
    }

    fn exchange(&mut self, b: &mut SampleBuilder, flow: FlowId, req: u64, resp: u64) {
        let hj = self.mode.header_jitter;
        let extra = if hj == 0 { 0 } else { self.rng.random_range(0..=hj) };
        self.send(b, flow, Direction::Outgoing, req);
        self.send(b, flow, Direction::Incoming, resp + u64::from(extra));
    }

    fn send(&mut self, b: &mut SampleBuilder, flow: FlowId, dir: Direction, bytes: u64) {
        let mtu = u64::from(self.mode.mtu);
        let mut left = bytes;
        while left > 0 {
            let mut chunk = left.min(mtu);
            if left > mtu && mtu > 1 && self.mode.split_rate > 0.0 && self.rng.random_bool(self.mode.split_rate) {
                chunk = self.rng.random_range(1..mtu);
            }
            b.push(flow, dir, chunk as u32);
            left -= chunk;
        }
    }

    fn load(&mut self, page: usize, variant: bool, id: (&str, u32)) -> (Sample, Url) {
        let site = self.site;
        let p = &site.pages[page];
        let mut redirected = false;
        let (final_url, html) = match &p.variant {
            Some(v) if variant => (v.url.clone(), v.html),
            Some(v) if self.rng.random_bool(v.prob) => {
                redirected = true;
                (v.url.clone(), v.html)
            }
            _ => (p.url.clone(), p.html),
        };
        let mut b = SampleBuilder::new(Some(full_label(&final_url)), id.0, id.1);
        let mut flows = BTreeMap::new();
        if redirected {
            // The redirect response itself: headers only.
            let flow = b.open_flow(FIRST_PARTY);
            flows.insert(FIRST_PARTY.to_string(), flow);
            let req = u64::from(site.objects[html].request + self.cookie);
            self.exchange(&mut b, flow, req, 420);
        }
        self.transfer(&mut b, &mut flows, html);
        for &obj in &p.objects {
            if self.mode.skip_rate > 0.0 && self.rng.random_bool(self.mode.skip_rate) {
                continue;
            }
            let kind = site.objects[obj].kind;
            let obj = match kind {
                ObjectKind::Ad => *site.ads.choose(&mut self.rng).unwrap_or(&obj),
                _ => obj,
            };
            if kind == ObjectKind::Static && self.mode.cache && self.cache.touch(obj as u64) {
                continue;
            }
            self.transfer(&mut b, &mut flows, obj);
        }
        (b.build(), final_url)
    }
}

/// Simulates a user browsing `sessions` on `site` under `mode`.
///
/// Session `k` gets id `{prefix}{k:04}` and its samples positions `0..len`.
pub fn generate_traffic(
    site: &SiteSpec,
    sessions: &[BrowsingSession],
    mode: &ModeConfig,
    user_seed: u64,
    prefix: &str,
) -> Result<TrafficOutput> {
    mode.validate()?;
    let index = site.label_index();
    let mut steps = Vec::with_capacity(sessions.len());
    for s in sessions {
        let mut v = Vec::with_capacity(s.len());
        for l in &s.labels {
            let &page = index.get(l).ok_or_else(|| Error::UnknownLabel(l.to_string()))?;
            let is_variant = site.pages[page].variant.as_ref().is_some_and(|v| full_label(&v.url) == *l);
            v.push((page, is_variant));
        }
        steps.push(v);
    }

    let seed = derive_seed(derive_seed(site.seed, "traffic"), &user_seed.to_string());
    let mut loader = Loader {
        site,
        mode,
        cookie: cookie_offset(mode, user_seed),
        rng: rng_for(seed, prefix),
        cache: Cache::new(mode.cache_capacity),
        foreign: 0,
    };
    loader.fresh_state();
    let mut out = TrafficOutput::default();
    let mut finals: BTreeMap<Url, crate::sitegraph::Fingerprint> = BTreeMap::new();
    for (k, (session, plan)) in sessions.iter().zip(&steps).enumerate() {
        if k > 0 && !mode.persistent {
            loader.fresh_state();
        }
        let sid = format!("{prefix}{k:04}");
        for (pos, (&(page, variant), requested)) in plan.iter().zip(&session.labels).enumerate() {
            if mode.diversity == Diversity::MultiSite && loader.rng.random_bool(0.5) {
                loader.browse_elsewhere();
            }
            let (sample, final_url) = loader.load(page, variant, (&sid, pos as u32));
            let p = &site.pages[page];
            let fp = match &p.variant {
                Some(v) if v.url == final_url => v.fingerprint.clone(),
                _ => p.fingerprint.clone(),
            };
            finals.entry(final_url.clone()).or_insert(fp);
            out.redirects.push(RedirectRecord {
                requested: label_url(requested)?,
                final_url,
            });
            out.samples.push(sample);
        }
    }
    out.final_crawl = finals
        .into_iter()
        .map(|(url, fingerprint)| CrawlRecord { url, fingerprint })
        .collect();
    Ok(out)
}

fn label_url(l: &Label) -> Result<Url> {
    Url::parse(&format!("http://{}", l.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::site::{generate_site, SiteParams};

    fn site() -> SiteSpec {
        let p = SiteParams {
            labels: 40,
            mean_out_degree: 5.0,
            ..Default::default()
        };
        generate_site(&p, 5).unwrap().spec
    }

    fn session(s: &SiteSpec, pages: &[usize]) -> BrowsingSession {
        BrowsingSession {
            labels: pages.iter().map(|&i| s.page_label(i)).collect(),
            forced: vec![false; pages.len()],
        }
    }

    #[test]
    fn cache_reduces_revisit() {
        let s = site();
        let mode = ModeConfig::mode(2).unwrap().with_noise(0.0);
        let out = generate_traffic(&s, &[session(&s, &[3, 3])], &mode, 1, "t").unwrap();
        assert!(out.samples[1].packet_count() < out.samples[0].packet_count());
    }

    #[test]
    fn no_noise_no_cache_is_repeatable() {
        let s = site();
        let mode = ModeConfig::mode(1).unwrap().with_noise(0.0);
        let mut s2 = s.clone();
        s2.ads.truncate(1);
        let out = generate_traffic(&s2, &[session(&s2, &[4, 7, 4])], &mode, 1, "t").unwrap();
        assert_eq!(out.samples[0].flows, out.samples[2].flows);
    }

    #[test]
    fn cookie_offsets_requests() {
        let s = site();
        let mode = ModeConfig::mode(3).unwrap().with_noise(0.0);
        let mut s2 = s.clone();
        s2.ads.truncate(1);
        let sess = [session(&s2, &[6])];
        let a = generate_traffic(&s2, &sess, &mode, 1, "t").unwrap();
        let b = generate_traffic(&s2, &sess, &mode, 2, "t").unwrap();
        let first_party_out = |x: &Sample| -> u64 {
            x.flows
                .iter()
                .filter(|f| f.remote_domain == FIRST_PARTY)
                .flat_map(|f| &f.packets)
                .filter(|p| p.direction == Direction::Outgoing)
                .map(|p| u64::from(p.payload_size))
                .sum()
        };
        let requests = 1 + s2.pages[6]
            .objects
            .iter()
            .filter(|&&o| s2.objects[o].first_party())
            .count() as i64;
        let diff = first_party_out(&a.samples[0]) as i64 - first_party_out(&b.samples[0]) as i64;
        let expect = i64::from(cookie_offset(&mode, 1)) - i64::from(cookie_offset(&mode, 2));
        assert_eq!(diff, expect * requests);
    }

    #[test]
    fn unknown_label_errors() {
        let s = site();
        let bad = BrowsingSession {
            labels: vec![Label::new("site.com/nope")],
            forced: vec![false],
        };
        let err = generate_traffic(&s, &[bad], &ModeConfig::default(), 0, "t").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }

    #[test]
    fn noise_bounds_checked() {
        let s = site();
        let m = ModeConfig::default().with_noise(0.7);
        assert!(generate_traffic(&s, &[], &m, 0, "t").is_err());
    }
}
