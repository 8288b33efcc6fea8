//! `--set key.path=value` overrides applied to a TOML table.

use wfbench::{Error, Result};

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

pub fn apply(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("nonempty");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_typed() {
        let mut t = toml::Table::new();
        apply(&mut t, "synth.site.labels=40").unwrap();
        apply(&mut t, "attack=bog").unwrap();
        apply(&mut t, "synth.noise = 0.1").unwrap();
        assert_eq!(t["synth"]["site"]["labels"].as_integer(), Some(40));
        assert_eq!(t["attack"].as_str(), Some("bog"));
        assert_eq!(t["synth"]["noise"].as_float(), Some(0.1));
        assert!(apply(&mut t, "novalue").is_err());
        assert!(apply(&mut t, "attack.x=1").is_err());
    }
}
