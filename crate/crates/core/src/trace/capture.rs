//! Packet-capture ingestion (classic pcap, Ethernet / IPv4 / TCP).
//!
//! Sample boundaries come from a sidecar index with lines
//! `file,start_pkt,end_pkt,label,session_id,position`, where packet numbers
//! are zero-based record indices into the capture, `start_pkt` inclusive and
//! `end_pkt` exclusive (empty `end_pkt` means end of file).
//!
//! Within a flow, each direction's segments are reordered by TCP sequence
//! number and retransmitted byte ranges are counted once. Segments larger
//! than the MTU (offloaded captures) are split into MTU-sized packets.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;

use super::{Direction, DomainMap, SampleBuilder};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::trace::Sample;

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;

const TCP_FIN: u8 = 0x01;
const TCP_SYN: u8 = 0x02;
const TCP_RST: u8 = 0x04;
const TCP_ACK: u8 = 0x10;

/// The fields of an Ethernet/IPv4/TCP frame the workbench cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpFrame {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub flags: u8,
    pub payload_len: u32,
}

impl TcpFrame {
    pub fn syn(&self) -> bool {
        self.flags & TCP_SYN != 0
    }
    pub fn ack(&self) -> bool {
        self.flags & TCP_ACK != 0
    }
    pub fn fin_or_rst(&self) -> bool {
        self.flags & (TCP_FIN | TCP_RST) != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub file: String,
    pub start_pkt: usize,
    pub end_pkt: Option<usize>,
    pub label: Option<Label>,
    pub session_id: String,
    pub position: u32,
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(Error::format("capture index", i + 1, "expected 6 columns"));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|e| Error::format("capture index", i + 1, format!("{s:?}: {e}")))
        };
        let end_pkt = if cols[2].is_empty() { None } else { Some(num(cols[2])?) };
        out.push(IndexEntry {
            file: cols[0].to_string(),
            start_pkt: num(cols[1])?,
            end_pkt,
            label: (!cols[3].is_empty()).then(|| Label::new(cols[3])),
            session_id: cols[4].to_string(),
            position: num(cols[5])? as u32,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub samples: Vec<Sample>,
    /// Frames that could not be parsed.
    pub malformed: usize,
    /// Well-formed frames that are not IPv4/TCP.
    pub non_tcp: usize,
    /// TCP frames not involving the client address.
    pub foreign: usize,
}

struct Endian {
    big: bool,
}

impl Endian {
    fn u32(&self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.big {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }
}

/// Splits a pcap file into raw frame payloads.
fn pcap_records(bytes: &[u8]) -> Result<Vec<&[u8]>> {
    if bytes.len() < 24 {
        return Err(Error::Capture("file shorter than the pcap global header".into()));
    }
    let le = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let endian = match le {
        MAGIC_USEC | MAGIC_NSEC => Endian { big: false },
        m if m.swap_bytes() == MAGIC_USEC || m.swap_bytes() == MAGIC_NSEC => Endian { big: true },
        m => return Err(Error::Capture(format!("bad pcap magic {m:#010x}"))),
    };
    let link = endian.u32(&bytes[20..24]);
    if link != LINKTYPE_ETHERNET {
        return Err(Error::Capture(format!("unsupported link layer type {link}")));
    }
    let mut out = Vec::new();
    let mut off = 24;
    while off < bytes.len() {
        if off + 16 > bytes.len() {
            return Err(Error::Capture(format!("truncated record header at byte {off}")));
        }
        let incl = endian.u32(&bytes[off + 8..off + 12]) as usize;
        let start = off + 16;
        if start + incl > bytes.len() {
            return Err(Error::Capture(format!("truncated record at byte {off}")));
        }
        out.push(&bytes[start..start + incl]);
        off = start + incl;
    }
    Ok(out)
}

enum Parsed {
    Tcp(TcpFrame),
    NotTcp,
    Malformed,
}

fn parse_frame(frame: &[u8]) -> Parsed {
    if frame.len() < 14 {
        return Parsed::Malformed;
    }
    let mut off = 12;
    let mut ethertype = u16::from_be_bytes([frame[off], frame[off + 1]]);
    off += 2;
    while ethertype == 0x8100 || ethertype == 0x88a8 {
        if frame.len() < off + 4 {
            return Parsed::Malformed;
        }
        ethertype = u16::from_be_bytes([frame[off + 2], frame[off + 3]]);
        off += 4;
    }
    if ethertype != 0x0800 {
        return Parsed::NotTcp;
    }
    let ip = &frame[off..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Parsed::Malformed;
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    let total_len = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let frag = u16::from_be_bytes([ip[6], ip[7]]);
    if ihl < 20 || total_len < ihl || ip.len() < ihl {
        return Parsed::Malformed;
    }
    if ip[9] != 6 || frag & 0x3fff != 0 {
        return Parsed::NotTcp;
    }
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let tcp = &ip[ihl..];
    if tcp.len() < 20 {
        return Parsed::Malformed;
    }
    let doff = usize::from(tcp[12] >> 4) * 4;
    if doff < 20 || tcp.len() < doff || total_len < ihl + doff {
        return Parsed::Malformed;
    }
    Parsed::Tcp(TcpFrame {
        src,
        dst,
        src_port: u16::from_be_bytes([tcp[0], tcp[1]]),
        dst_port: u16::from_be_bytes([tcp[2], tcp[3]]),
        seq: u32::from_be_bytes([tcp[4], tcp[5], tcp[6], tcp[7]]),
        flags: tcp[13],
        payload_len: (total_len - ihl - doff) as u32,
    })
}

/// (client ip, client port, remote ip, remote port)
type ConnKey = (Ipv4Addr, u16, Ipv4Addr, u16);

#[derive(Default)]
struct ConnState {
    epoch: u32,
    has_data: bool,
    closed: bool,
}

struct Segment {
    dir: Direction,
    seq: u32,
    len: u32,
    capture_idx: usize,
}

struct PendingFlow {
    remote: Ipv4Addr,
    segments: Vec<Segment>,
}

/// Reorders each direction by sequence number and drops retransmitted byte
/// ranges. Returns `(slot, direction, bytes)` where slots are capture
/// indices reassigned so the reordered segments of a direction occupy the
/// capture positions of the segments that were kept.
fn reassemble(segments: &[Segment]) -> Vec<(usize, Direction, u32)> {
    let mut out = Vec::new();
    for dir in [Direction::Outgoing, Direction::Incoming] {
        let segs: Vec<&Segment> = segments.iter().filter(|s| s.dir == dir).collect();
        let Some(first) = segs.first() else { continue };
        let base = first.seq;
        let mut ordered: Vec<(i64, usize, u32)> = segs
            .iter()
            .map(|s| (i64::from(s.seq.wrapping_sub(base) as i32), s.capture_idx, s.len))
            .collect();
        ordered.sort_unstable();
        let mut covered = i64::MIN;
        let mut kept: Vec<(usize, u32)> = Vec::new();
        for (rel, idx, len) in ordered {
            let end = rel + i64::from(len);
            if end <= covered {
                continue;
            }
            let start = rel.max(covered);
            kept.push((idx, (end - start) as u32));
            covered = end;
        }
        let mut slots: Vec<usize> = kept.iter().map(|k| k.0).collect();
        slots.sort_unstable();
        out.extend(slots.into_iter().zip(kept).map(|(slot, (_, len))| (slot, dir, len)));
    }
    out.sort_unstable_by_key(|x| x.0);
    out
}

/// Ingests an in-memory capture. `file_name` selects the matching index
/// entries (compared by file name without directories).
pub fn ingest_capture_bytes(
    file_name: &str,
    bytes: &[u8],
    index: &[IndexEntry],
    client: Ipv4Addr,
    domains: &DomainMap,
    mtu: u32,
) -> Result<IngestReport> {
    let records = pcap_records(bytes)?;
    let base_name = |s: &str| {
        Path::new(s)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let wanted = base_name(file_name);
    let entries: Vec<&IndexEntry> = index.iter().filter(|e| base_name(&e.file) == wanted).collect();
    if entries.is_empty() {
        return Err(Error::Capture(format!("index has no entries for {wanted}")));
    }
    let mut report = IngestReport::default();
    for entry in entries {
        let end = entry.end_pkt.unwrap_or(records.len()).min(records.len());
        let mut conns: HashMap<ConnKey, ConnState> = HashMap::new();
        let mut flows: BTreeMap<(ConnKey, u32), PendingFlow> = BTreeMap::new();
        for (idx, frame) in records.iter().enumerate().take(end).skip(entry.start_pkt) {
            let tcp = match parse_frame(frame) {
                Parsed::Tcp(t) => t,
                Parsed::NotTcp => {
                    report.non_tcp += 1;
                    continue;
                }
                Parsed::Malformed => {
                    report.malformed += 1;
                    continue;
                }
            };
            let (dir, key) = if tcp.src == client {
                (Direction::Outgoing, (tcp.src, tcp.src_port, tcp.dst, tcp.dst_port))
            } else if tcp.dst == client {
                (Direction::Incoming, (tcp.dst, tcp.dst_port, tcp.src, tcp.src_port))
            } else {
                report.foreign += 1;
                continue;
            };
            let state = conns.entry(key).or_default();
            if dir == Direction::Outgoing && tcp.syn() && !tcp.ack() && (state.has_data || state.closed) {
                *state = ConnState {
                    epoch: state.epoch + 1,
                    ..ConnState::default()
                };
            }
            if tcp.payload_len > 0 {
                state.has_data = true;
                flows
                    .entry((key, state.epoch))
                    .or_insert_with(|| PendingFlow {
                        remote: key.2,
                        segments: Vec::new(),
                    })
                    .segments
                    .push(Segment {
                        dir,
                        seq: tcp.seq,
                        len: tcp.payload_len,
                        capture_idx: idx,
                    });
            }
            if tcp.fin_or_rst() {
                state.closed = true;
            }
        }
        let mut assembled: Vec<(usize, &PendingFlow, Vec<(usize, Direction, u32)>)> = flows
            .values()
            .map(|f| {
                let segs = reassemble(&f.segments);
                (segs.first().map_or(usize::MAX, |s| s.0), f, segs)
            })
            .collect();
        assembled.sort_by_key(|a| a.0);
        let mut events = Vec::new();
        let mut builder = SampleBuilder::new(entry.label.clone(), entry.session_id.clone(), entry.position);
        for (_, flow, segs) in &assembled {
            let id = builder.open_flow(domains.resolve(flow.remote));
            for &(slot, dir, len) in segs {
                events.push((slot, id, dir, len));
            }
        }
        events.sort_by_key(|e| e.0);
        for (_, id, dir, len) in events {
            builder.push_segmented(id, dir, u64::from(len), mtu);
        }
        report.samples.push(builder.build());
    }
    if report.malformed > 0 {
        log::warn!("{wanted}: skipped {} malformed frames", report.malformed);
    }
    Ok(report)
}

/// Ingests `capture`, reading sample boundaries from `index` (default:
/// the capture path with `.idx` appended).
pub fn ingest_capture(
    capture: &Path,
    index: Option<&Path>,
    client: Ipv4Addr,
    domains: &DomainMap,
    mtu: u32,
) -> Result<IngestReport> {
    let default_index = {
        let mut p = capture.as_os_str().to_owned();
        p.push(".idx");
        std::path::PathBuf::from(p)
    };
    let index_path = index.unwrap_or(&default_index);
    let index_text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let entries = parse_index(&index_text)?;
    let bytes = std::fs::read(capture).map_err(|e| Error::io(capture, e))?;
    ingest_capture_bytes(&capture.to_string_lossy(), &bytes, &entries, client, domains, mtu)
}

/// Writes classic little-endian microsecond pcap files with synthesized
/// Ethernet/IPv4/TCP headers and zero-filled payloads.
pub struct PcapWriter<W: Write> {
    out: W,
    count: u32,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        out.write_all(&MAGIC_USEC.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&65535u32.to_le_bytes())?;
        out.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
        Ok(PcapWriter { out, count: 0 })
    }

    pub fn write_frame(&mut self, f: &TcpFrame) -> std::io::Result<()> {
        let mut frame = Vec::with_capacity(54 + f.payload_len as usize);
        frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 0, 0x02, 0x08, 0x00]);
        let total = 40 + f.payload_len as usize;
        frame.extend_from_slice(&[0x45, 0]);
        frame.extend_from_slice(&(total as u16).to_be_bytes());
        frame.extend_from_slice(&[0, 0, 0x40, 0, 64, 6, 0, 0]);
        frame.extend_from_slice(&f.src.octets());
        frame.extend_from_slice(&f.dst.octets());
        frame.extend_from_slice(&f.src_port.to_be_bytes());
        frame.extend_from_slice(&f.dst_port.to_be_bytes());
        frame.extend_from_slice(&f.seq.to_be_bytes());
        frame.extend_from_slice(&0u32.to_be_bytes());
        frame.extend_from_slice(&[0x50, f.flags, 0xff, 0xff, 0, 0, 0, 0]);
        frame.resize(frame.len() + f.payload_len as usize, 0);
        let ts = self.count;
        self.count += 1;
        self.out.write_all(&ts.to_le_bytes())?;
        self.out.write_all(&0u32.to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&frame)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLIENT: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
    const S1: Ipv4Addr = Ipv4Addr::new(93, 184, 216, 34);
    const S2: Ipv4Addr = Ipv4Addr::new(151, 101, 1, 69);

    fn frame(src: Ipv4Addr, dst: Ipv4Addr, sp: u16, dp: u16, seq: u32, flags: u8, len: u32) -> TcpFrame {
        TcpFrame {
            src,
            dst,
            src_port: sp,
            dst_port: dp,
            seq,
            flags,
            payload_len: len,
        }
    }

    fn capture(frames: &[TcpFrame]) -> Vec<u8> {
        let mut w = PcapWriter::new(Vec::new()).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.into_inner()
    }

    fn whole_file() -> Vec<IndexEntry> {
        parse_index("cap.pcap,0,,example.com/a,s0,0").unwrap()
    }

    fn domains() -> DomainMap {
        [(S1, "a.com".to_string()), (S2, "b.com".to_string())].into_iter().collect()
    }

    #[test]
    fn three_segments_two_flows() {
        let bytes = capture(&[
            frame(CLIENT, S1, 40000, 443, 1000, TCP_ACK, 1420),
            frame(S1, CLIENT, 443, 40000, 5000, TCP_ACK, 900),
            frame(CLIENT, S2, 40001, 443, 7000, TCP_ACK, 310),
        ]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.samples.len(), 1);
        let s = &r.samples[0];
        assert_eq!(s.flows.len(), 2);
        assert_eq!(s.flows[0].remote_domain, "a.com");
        assert_eq!(s.flows[0].packets.iter().map(|p| p.signed_size()).collect::<Vec<_>>(), vec![1420, -900]);
        assert_eq!(s.flows[1].remote_domain, "b.com");
        assert_eq!(s.flows[1].packets.iter().map(|p| p.signed_size()).collect::<Vec<_>>(), vec![310]);
        assert_eq!(s.label, Some(Label::new("example.com/a")));
        s.validate(1500).unwrap();
    }

    #[test]
    fn pure_acks_yield_no_flows() {
        let bytes = capture(&[
            frame(CLIENT, S1, 40000, 443, 1, TCP_SYN, 0),
            frame(S1, CLIENT, 443, 40000, 9, TCP_SYN | TCP_ACK, 0),
            frame(CLIENT, S1, 40000, 443, 2, TCP_ACK, 0),
        ]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert!(r.samples[0].flows.is_empty());
    }

    #[test]
    fn reused_four_tuple_after_fin_is_a_new_flow() {
        let bytes = capture(&[
            frame(CLIENT, S1, 40000, 443, 1, TCP_SYN, 0),
            frame(CLIENT, S1, 40000, 443, 2, TCP_ACK, 100),
            frame(S1, CLIENT, 443, 40000, 50, TCP_ACK, 200),
            frame(CLIENT, S1, 40000, 443, 102, TCP_FIN | TCP_ACK, 0),
            frame(CLIENT, S1, 40000, 443, 9000, TCP_SYN, 0),
            frame(CLIENT, S1, 40000, 443, 9001, TCP_ACK, 300),
        ]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        let s = &r.samples[0];
        assert_eq!(s.flows.len(), 2);
        assert_eq!(s.flows[0].total_bytes(), 300);
        assert_eq!(s.flows[1].total_bytes(), 300);
    }

    #[test]
    fn out_of_order_and_retransmitted_segments() {
        let bytes = capture(&[
            frame(CLIENT, S1, 40000, 443, 1000, TCP_ACK, 100),
            frame(S1, CLIENT, 443, 40000, 600, TCP_ACK, 300),
            frame(S1, CLIENT, 443, 40000, 300, TCP_ACK, 300),
            frame(S1, CLIENT, 443, 40000, 300, TCP_ACK, 300),
            frame(CLIENT, S1, 40000, 443, 1100, TCP_ACK, 50),
        ]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        let s = &r.samples[0];
        assert_eq!(s.signed_sizes(), vec![100, -300, -300, 50]);
    }

    #[test]
    fn oversized_segments_are_split_at_mtu() {
        let bytes = capture(&[frame(S1, CLIENT, 443, 40000, 0, TCP_ACK, 4000)]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.samples[0].signed_sizes(), vec![-1500, -1500, -1000]);
    }

    #[test]
    fn index_ranges_split_samples_and_foreign_traffic_is_counted() {
        let bytes = capture(&[
            frame(CLIENT, S1, 40000, 443, 0, TCP_ACK, 10),
            frame(S2, S1, 1, 2, 0, TCP_ACK, 10),
            frame(CLIENT, S2, 40001, 443, 0, TCP_ACK, 20),
        ]);
        let idx = parse_index("dir/cap.pcap,0,2,x,s,0\ncap.pcap,2,3,y,s,1\nother.pcap,0,1,z,s,0").unwrap();
        let r = ingest_capture_bytes("/tmp/cap.pcap", &bytes, &idx, CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.samples.len(), 2);
        assert_eq!(r.samples[0].total_bytes(), 10);
        assert_eq!(r.samples[1].total_bytes(), 20);
        assert_eq!(r.foreign, 1);
    }

    #[test]
    fn malformed_frames_are_skipped_and_counted() {
        let mut bytes = capture(&[frame(CLIENT, S1, 40000, 443, 0, TCP_ACK, 10)]);
        // Append a 10-byte record: too short for an Ethernet header.
        bytes.extend_from_slice(&[0; 8]);
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 10]);
        let r = ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.malformed, 1);
        assert_eq!(r.samples[0].total_bytes(), 10);
    }

    #[test]
    fn unknown_link_layer_and_missing_index_are_errors() {
        let mut bytes = capture(&[]);
        bytes[20] = 101;
        assert!(ingest_capture_bytes("cap.pcap", &bytes, &whole_file(), CLIENT, &domains(), 1500).is_err());
        let bytes = capture(&[]);
        assert!(ingest_capture_bytes("cap.pcap", &bytes, &[], CLIENT, &domains(), 1500).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pcap");
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(ingest_capture(&p, None, CLIENT, &domains(), 1500), Err(Error::Io { .. })));
    }

    #[test]
    fn big_endian_captures_are_read() {
        let le = capture(&[frame(CLIENT, S1, 40000, 443, 0, TCP_ACK, 10)]);
        let mut be = Vec::new();
        for chunk in [&le[0..4], &le[8..12], &le[12..16], &le[16..20], &le[20..24]] {
            be.extend(chunk.iter().rev());
        }
        be.splice(4..4, [0, 2, 0, 4]);
        let rec = &le[24..];
        for chunk in rec[..16].chunks(4) {
            be.extend(chunk.iter().rev());
        }
        be.extend_from_slice(&rec[16..]);
        let r = ingest_capture_bytes("cap.pcap", &be, &whole_file(), CLIENT, &domains(), 1500).unwrap();
        assert_eq!(r.samples[0].total_bytes(), 10);
    }
}
