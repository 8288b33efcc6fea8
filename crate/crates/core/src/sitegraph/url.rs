use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized URL.
///
/// Host and path are lowercase, a leading `www.` is removed from the host,
/// and trailing `/` characters are removed from the path (the root path is
/// empty). Query values are lowercased and kept in their original order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Url {
    pub scheme: String,
    pub host: String,
    pub port: Option<u16>,
    pub path: String,
    pub query: Vec<(String, String)>,
}

impl Url {
    /// Parses an absolute URL; a missing scheme is taken to be `http`.
    pub fn parse(s: &str) -> Result<Url> {
        let s = s.trim();
        let owned;
        let full = if s.contains("://") {
            s
        } else {
            owned = format!("http://{s}");
            &owned
        };
        let parsed = url::Url::parse(full).map_err(|e| Error::InvalidInput(format!("url {s:?}: {e}")))?;
        let host = parsed
            .host_str()
            .ok_or_else(|| Error::InvalidInput(format!("url {s:?} has no host")))?
            .to_lowercase();
        let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
        let path = parsed.path().to_lowercase();
        let path = path.trim_end_matches('/').to_string();
        let query = parsed
            .query_pairs()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();
        Ok(Url {
            scheme: parsed.scheme().to_lowercase(),
            host,
            port: parsed.port(),
            path,
            query,
        })
    }

    /// Host, optional port and path: the part that always separates labels.
    pub fn base(&self) -> String {
        match self.port {
            Some(p) => format!("{}:{}{}", self.host, p, self.path),
            None => format!("{}{}", self.host, self.path),
        }
    }

    pub fn arg(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn has_arg(&self, name: &str) -> bool {
        self.query.iter().any(|(k, _)| k == name)
    }

    /// Query pairs other than `name`, sorted.
    pub(crate) fn other_args(&self, name: &str) -> Vec<(&str, &str)> {
        let mut v: Vec<(&str, &str)> = self
            .query
            .iter()
            .filter(|(k, _)| k != name)
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn with_arg(&self, name: &str, value: &str) -> Url {
        let mut u = self.clone();
        u.query.retain(|(k, _)| k != name);
        u.query.push((name.to_lowercase(), value.to_lowercase()));
        u
    }
}

pub(crate) fn encode_query<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut ser = url::form_urlencoded::Serializer::new(String::new());
    for (k, v) in pairs {
        ser.append_pair(k, v);
    }
    ser.finish()
}

impl fmt::Display for Url {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.base())?;
        if !self.query.is_empty() {
            let q = encode_query(self.query.iter().map(|(k, v)| (k.as_str(), v.as_str())));
            write!(f, "?{q}")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for Url {
    type Error = Error;
    fn try_from(s: String) -> Result<Url> {
        Url::parse(&s)
    }
}

impl From<Url> for String {
    fn from(u: Url) -> String {
        u.to_string()
    }
}
