//! Line-delimited native trace format, one sample per line:
//!
//! ```text
//! {"version":1,"label":"example.com/a","session_id":"s0","position":3,
//!  "flows":[{"domain":"a.com","packets":[{"dir":1,"size":1420,"seq":0}]}]}
//! ```
//!
//! `seq` is optional on read; when every packet omits it, indices are
//! assigned in file order. Writers always emit it.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Direction, Flow, FlowId, Packet, Sample};
use crate::error::{Error, Result};
use crate::label::Label;

pub const TRACE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    version: u32,
    label: Option<String>,
    session_id: String,
    position: u32,
    flows: Vec<FlowRecord>,
}

#[derive(Serialize, Deserialize)]
struct FlowRecord {
    domain: String,
    packets: Vec<PacketRecord>,
}

#[derive(Serialize, Deserialize)]
struct PacketRecord {
    dir: i8,
    size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seq: Option<u32>,
}

fn to_record(s: &Sample) -> SampleRecord {
    SampleRecord {
        version: TRACE_VERSION,
        label: s.label.as_ref().map(|l| l.as_str().to_string()),
        session_id: s.session_id.clone(),
        position: s.position,
        flows: s
            .flows
            .iter()
            .map(|f| FlowRecord {
                domain: f.remote_domain.clone(),
                packets: f
                    .packets
                    .iter()
                    .map(|p| PacketRecord {
                        dir: p.direction.sign() as i8,
                        size: p.payload_size,
                        seq: Some(p.seq_index),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn version_of(value: &serde_json::Value) -> Option<String> {
    match value.get("version")? {
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn from_record(rec: SampleRecord, context: &str, line: usize) -> Result<Sample> {
    let bad = |msg: String| Error::format(context, line, msg);
    let with_seq = rec.flows.iter().flat_map(|f| &f.packets).filter(|p| p.seq.is_some()).count();
    let total: usize = rec.flows.iter().map(|f| f.packets.len()).sum();
    if with_seq != 0 && with_seq != total {
        return Err(bad("either every packet or no packet may carry seq".into()));
    }
    let mut next = 0u32;
    let mut seen = BTreeSet::new();
    let mut flows = Vec::with_capacity(rec.flows.len());
    for (fi, fr) in rec.flows.into_iter().enumerate() {
        let flow_id = FlowId(fi as u32);
        let domain = fr.domain.to_lowercase();
        if domain.is_empty() {
            return Err(bad(format!("flow {fi} has an empty domain")));
        }
        let mut packets = Vec::with_capacity(fr.packets.len());
        let mut last: Option<u32> = None;
        for pr in fr.packets {
            let direction = Direction::from_sign(i64::from(pr.dir))
                .ok_or_else(|| bad(format!("dir must be +1 or -1, got {}", pr.dir)))?;
            let seq_index = pr.seq.unwrap_or_else(|| {
                next += 1;
                next - 1
            });
            if last.is_some_and(|l| seq_index <= l) || !seen.insert(seq_index) {
                return Err(bad(format!("non-monotone seq_index {seq_index} in flow {fi}")));
            }
            last = Some(seq_index);
            packets.push(Packet {
                direction,
                payload_size: pr.size,
                flow_id,
                seq_index,
            });
        }
        flows.push(Flow {
            flow_id,
            remote_domain: domain,
            packets,
        });
    }
    Ok(Sample {
        label: rec.label.map(Label::new),
        session_id: rec.session_id,
        position: rec.position,
        flows,
    })
}

pub fn read_traces_from<R: BufRead>(reader: R, context: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::format(context, line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::format(context, line_no, e))?;
        match version_of(&value) {
            Some(v) if v == TRACE_VERSION.to_string() => {}
            Some(v) => {
                return Err(Error::Version {
                    what: "trace format",
                    found: v,
                    expected: TRACE_VERSION,
                })
            }
            None => return Err(Error::format(context, line_no, "missing version field")),
        }
        let rec: SampleRecord =
            serde_json::from_value(value).map_err(|e| Error::format(context, line_no, e))?;
        out.push(from_record(rec, context, line_no)?);
    }
    Ok(out)
}

pub fn read_traces(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces_from(BufReader::new(file), &path.display().to_string())
}

pub fn write_traces_to<W: Write>(w: &mut W, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *w, &to_record(s))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_traces(path: &Path, samples: &[Sample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_traces_to(&mut w, samples).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_flow_sample() -> Sample {
        Sample::from_signed_flows(
            Some(Label::new("example.com/a")),
            "s0",
            0,
            [("a.com", vec![1420, -900]), ("b.com", vec![310])],
        )
    }

    fn roundtrip(samples: &[Sample]) -> Vec<Sample> {
        let mut buf = Vec::new();
        write_traces_to(&mut buf, samples).unwrap();
        read_traces_from(buf.as_slice(), "mem").unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let s = vec![two_flow_sample()];
        assert_eq!(roundtrip(&s), s);
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(read_traces_from(&b""[..], "mem").unwrap().is_empty());
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        for line in [
            r#"{"version":99,"label":null,"session_id":"s","position":0,"flows":[]}"#,
            r#"{"version":"99","label":null,"session_id":"s","position":0,"flows":[]}"#,
        ] {
            let err = read_traces_from(line.as_bytes(), "mem").unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("99") && msg.contains('1'), "{msg}");
            assert!(matches!(err, Error::Version { .. }));
        }
    }

    #[test]
    fn non_monotone_seq_is_rejected() {
        let line = r#"{"version":1,"label":null,"session_id":"s","position":0,"flows":[{"domain":"a.com","packets":[{"dir":1,"size":5,"seq":3},{"dir":-1,"size":5,"seq":2}]}]}"#;
        assert!(read_traces_from(line.as_bytes(), "mem").is_err());
    }

    #[test]
    fn missing_seq_is_assigned_in_file_order() {
        let line = r#"{"version":1,"label":"x","session_id":"s","position":0,"flows":[{"domain":"a.com","packets":[{"dir":1,"size":5},{"dir":-1,"size":7}]},{"domain":"b.com","packets":[{"dir":1,"size":9}]}]}"#;
        let s = &read_traces_from(line.as_bytes(), "mem").unwrap()[0];
        assert_eq!(s.signed_sizes(), vec![5, -7, 9]);
    }

    #[test]
    fn bad_direction_is_rejected() {
        let line = r#"{"version":1,"label":null,"session_id":"s","position":0,"flows":[{"domain":"a.com","packets":[{"dir":2,"size":5}]}]}"#;
        assert!(read_traces_from(line.as_bytes(), "mem").is_err());
    }
}
