//! Sampled flow record ingestion.
//!
//! Canonical CSV schema, header required:
//!
//! ```text
//! timestamp,member,src,dst,proto,src_port,dst_port,tcp_flags,icmp_type,icmp_code,bytes,packets,sample_rate,payload_hex
//! ```
//!
//! `tcp_flags` uses letters from SAFRPU and must be empty for non-TCP
//! rows; `payload_hex` holds up to 64 payload bytes and may be empty.

use std::fs;
use std::net::IpAddr;
use std::path::Path;

use bitflags::bitflags;

use crate::error::{at_line, field_err, Error, Result};
use crate::net::{parse_addr, Asn};

pub const FLOW_HEADER: &str = "timestamp,member,src,dst,proto,src_port,dst_port,tcp_flags,icmp_type,icmp_code,bytes,packets,sample_rate,payload_hex";

pub const MAX_PAYLOAD_HEAD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
    Other(u8),
}

impl Proto {
    fn parse(s: &str) -> std::result::Result<Proto, String> {
        match s {
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            "icmp" => Ok(Proto::Icmp),
            other => other
                .parse::<u8>()
                .map(Proto::Other)
                .map_err(|_| format!("unknown protocol {other:?}")),
        }
    }
}

impl std::fmt::Display for Proto {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Proto::Tcp => write!(f, "tcp"),
            Proto::Udp => write!(f, "udp"),
            Proto::Icmp => write!(f, "icmp"),
            Proto::Other(n) => write!(f, "{n}"),
        }
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct TcpFlags: u8 {
        const SYN = 1 << 0;
        const ACK = 1 << 1;
        const FIN = 1 << 2;
        const RST = 1 << 3;
        const PSH = 1 << 4;
        const URG = 1 << 5;
    }
}

impl TcpFlags {
    fn parse(s: &str) -> std::result::Result<TcpFlags, String> {
        let mut flags = TcpFlags::empty();
        for c in s.chars() {
            flags |= match c {
                'S' => TcpFlags::SYN,
                'A' => TcpFlags::ACK,
                'F' => TcpFlags::FIN,
                'R' => TcpFlags::RST,
                'P' => TcpFlags::PSH,
                'U' => TcpFlags::URG,
                other => return Err(format!("unknown flag letter {other:?}")),
            };
        }
        Ok(flags)
    }

    /// Canonical letter form, SAFRPU order.
    pub fn letters(&self) -> String {
        let mut s = String::new();
        for (bit, c) in [
            (TcpFlags::SYN, 'S'),
            (TcpFlags::ACK, 'A'),
            (TcpFlags::FIN, 'F'),
            (TcpFlags::RST, 'R'),
            (TcpFlags::PSH, 'P'),
            (TcpFlags::URG, 'U'),
        ] {
            if self.contains(bit) {
                s.push(c);
            }
        }
        s
    }
}

/// One sampled flow observation at the IXP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub timestamp: i64,
    /// Ingress IXP member AS.
    pub member: Asn,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub proto: Proto,
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_flags: TcpFlags,
    pub icmp_type: u8,
    pub icmp_code: u8,
    pub bytes: u64,
    pub packets: u64,
    pub sample_rate: u64,
    pub payload_head: Option<Vec<u8>>,
}

impl FlowRecord {
    /// Per-packet size: bytes/packets rounded to nearest (half up),
    /// clamped to the 16-bit packet size range.
    pub fn packet_size(&self) -> u32 {
        let size = (2 * self.bytes + self.packets) / (2 * self.packets);
        size.clamp(1, 65535) as u32
    }
}

fn decode_hex(s: &str) -> std::result::Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err("odd-length hex payload".to_string());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("bad hex at offset {i}"))
        })
        .collect()
}

fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses one data row. `line_no` is used in error messages only.
pub fn parse_flow_line(line: &str, line_no: usize) -> Result<FlowRecord> {
    let inner = |line: &str| -> Result<FlowRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(field_err(
                "line",
                format!("expected 14 comma-separated fields, got {}", fields.len()),
            ));
        }
        let timestamp: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| field_err("timestamp", format!("unparsable timestamp {:?}", fields[0])))?;
        let member = Asn::parse(fields[1]).map_err(|e| field_err("member", e))?;
        let src = parse_addr("src", fields[2])?;
        let dst = parse_addr("dst", fields[3])?;
        let proto = Proto::parse(fields[4].trim()).map_err(|e| field_err("proto", e))?;
        let port = |field: &'static str, s: &str| -> Result<u16> {
            s.trim()
                .parse()
                .map_err(|_| field_err(field, format!("unparsable port {s:?}")))
        };
        let src_port = port("src_port", fields[5])?;
        let dst_port = port("dst_port", fields[6])?;
        let tcp_flags = TcpFlags::parse(fields[7].trim()).map_err(|e| field_err("tcp_flags", e))?;
        if proto != Proto::Tcp && !tcp_flags.is_empty() {
            return Err(field_err("tcp_flags", "flags on a non-tcp flow"));
        }
        let octet = |field: &'static str, s: &str| -> Result<u8> {
            s.trim()
                .parse()
                .map_err(|_| field_err(field, format!("unparsable value {s:?}")))
        };
        let icmp_type = octet("icmp_type", fields[8])?;
        let icmp_code = octet("icmp_code", fields[9])?;
        if proto != Proto::Icmp && (icmp_type != 0 || icmp_code != 0) {
            return Err(field_err("icmp_type", "icmp fields on a non-icmp flow"));
        }
        if proto == Proto::Icmp && (src_port != 0 || dst_port != 0) {
            return Err(field_err("src_port", "ports must be 0 for icmp"));
        }
        let count = |field: &'static str, s: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|_| field_err(field, format!("unparsable count {s:?}")))
        };
        let bytes = count("bytes", fields[10])?;
        let packets = count("packets", fields[11])?;
        if packets == 0 {
            return Err(field_err("packets", "packet count must be >= 1"));
        }
        if bytes < packets {
            return Err(field_err("bytes", "fewer bytes than packets"));
        }
        let sample_rate = count("sample_rate", fields[12])?;
        if sample_rate == 0 {
            return Err(field_err("sample_rate", "sample rate must be >= 1"));
        }
        let payload_field = fields[13].trim();
        let payload_head = if payload_field.is_empty() {
            None
        } else {
            let bytes = decode_hex(payload_field).map_err(|e| field_err("payload_hex", e))?;
            if bytes.len() > MAX_PAYLOAD_HEAD {
                return Err(field_err(
                    "payload_hex",
                    format!("payload head exceeds {MAX_PAYLOAD_HEAD} bytes"),
                ));
            }
            Some(bytes)
        };
        Ok(FlowRecord {
            timestamp,
            member,
            src,
            dst,
            proto,
            src_port,
            dst_port,
            tcp_flags,
            icmp_type,
            icmp_code,
            bytes,
            packets,
            sample_rate,
            payload_head,
        })
    };
    inner(line).map_err(|e| at_line(e, line_no))
}

/// Canonical CSV form of a record; `parse_flow_line` inverts it.
pub fn serialize_flow_line(flow: &FlowRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        flow.timestamp,
        flow.member,
        flow.src,
        flow.dst,
        flow.proto,
        flow.src_port,
        flow.dst_port,
        flow.tcp_flags.letters(),
        flow.icmp_type,
        flow.icmp_code,
        flow.bytes,
        flow.packets,
        flow.sample_rate,
        flow.payload_head.as_deref().map(encode_hex).unwrap_or_default(),
    )
}

/// Reads flow CSV files in order. Each file must start with the exact
/// canonical header.
pub fn read_flow_files<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<FlowRecord>> {
    let mut flows = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == FLOW_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    file: Some(path.to_path_buf()),
                    line: 1,
                    field: "header",
                    msg: format!("missing or invalid header; expected {FLOW_HEADER:?}"),
                })
            }
        }
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            flows.push(parse_flow_line(line, idx + 1).map_err(|e| e.with_file(path))?);
        }
    }
    Ok(flows)
}

/// Sampling compensation: scales byte and packet counts by the sample
/// rate. Used for aggregate shares only, never for indicator logic.
pub fn upscale(flow: &FlowRecord) -> (u64, u64) {
    (flow.bytes * flow.sample_rate, flow.packets * flow.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(line: &str) -> FlowRecord {
        parse_flow_line(line, 1).unwrap()
    }

    #[test]
    fn parses_tcp_flags() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,tcp,1234,443,SA,0,0,1500,3,1000,");
        assert_eq!(f.tcp_flags, TcpFlags::SYN | TcpFlags::ACK);
        assert!(f.payload_head.is_none());
    }

    #[test]
    fn parses_icmp_echo_reply() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,icmp,0,0,,0,0,84,1,1000,");
        assert_eq!(f.proto, Proto::Icmp);
        assert_eq!(f.icmp_type, 0);
    }

    #[test]
    fn decodes_payload_hex() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,tcp,443,1234,PA,0,0,1500,3,1,160303002a");
        assert_eq!(f.payload_head.unwrap(), vec![0x16, 0x03, 0x03, 0x00, 0x2a]);
    }

    #[test]
    fn rejects_malformed_rows() {
        let cases = [
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,SA,0,0,10,1,1", "line"),
            ("100,64500,nope,11.0.0.2,tcp,1,2,,0,0,10,1,1,", "src"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,SAX,0,0,10,1,1,", "tcp_flags"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,10,1,1,abc", "payload_hex"),
            ("100,64500,11.0.0.1,11.0.0.2,udp,1,2,SA,0,0,10,1,1,", "tcp_flags"),
            ("100,64500,11.0.0.1,11.0.0.2,icmp,5,0,,0,0,10,1,1,", "src_port"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,10,0,1,", "packets"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,2,10,1,", "bytes"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,10,1,0,", "sample_rate"),
            ("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,3,0,10,1,1,", "icmp_type"),
        ];
        for (line, field) in cases {
            let err = parse_flow_line(line, 5).unwrap_err().to_string();
            assert!(err.contains("line 5"), "{err}");
            assert!(err.contains(field), "expected {field} in: {err}");
        }
    }

    #[test]
    fn payload_longer_than_64_bytes_rejected() {
        let payload = "ab".repeat(65);
        let line = format!("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,200,1,1,{payload}");
        assert!(parse_flow_line(&line, 1).is_err());
        let payload = "ab".repeat(64);
        let line = format!("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,200,1,1,{payload}");
        assert!(parse_flow_line(&line, 1).is_ok());
    }

    #[test]
    fn other_protocols_carry_numbers() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,47,0,0,,0,0,100,1,1,");
        assert_eq!(f.proto, Proto::Other(47));
        assert_eq!(serialize_flow_line(&f).split(',').nth(4), Some("47"));
    }

    #[test]
    fn upscale_multiplies() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,100,2,1000,");
        assert_eq!(upscale(&f), (100_000, 2000));
    }

    #[test]
    fn upscale_rate_one_is_identity() {
        let f = parse("100,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,100,2,1,");
        assert_eq!(upscale(&f), (100, 2));
    }

    #[test]
    fn upscale_is_linear_over_streams() {
        let flows = [
            parse("1,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,100,2,10,"),
            parse("2,64500,11.0.0.1,11.0.0.2,udp,1,2,,0,0,70,7,100,"),
            parse("3,64500,11.0.0.1,11.0.0.2,icmp,0,0,,8,0,84,1,1,"),
        ];
        let (mut b, mut p) = (0u64, 0u64);
        for f in &flows {
            let (fb, fp) = upscale(f);
            b += fb;
            p += fp;
        }
        assert_eq!((b, p), (100 * 10 + 70 * 100 + 84, 2 * 10 + 7 * 100 + 1));
    }

    #[test]
    fn packet_size_rounds_to_nearest() {
        let f = parse("1,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,100,3,1,");
        assert_eq!(f.packet_size(), 33); // 33.33 rounds down
        let f = parse("1,64500,11.0.0.1,11.0.0.2,tcp,1,2,,0,0,11,2,1,");
        assert_eq!(f.packet_size(), 6); // 5.5 rounds half up
    }

    #[test]
    fn header_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(read_flow_files(&[&path]).is_err());
        std::fs::write(
            &path,
            format!("{FLOW_HEADER}\n1,64500,11.0.0.1,11.0.0.2,tcp,1,2,A,0,0,10,1,1,\n"),
        )
        .unwrap();
        assert_eq!(read_flow_files(&[&path]).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn roundtrip_canonicalizes(
            ts in 0i64..2_000_000_000,
            member in 1u32..1_000_000,
            src in any::<u32>(),
            dst in any::<u32>(),
            proto_pick in 0usize..4,
            proto_num in 0u8..=255,
            sport in any::<u16>(),
            dport in any::<u16>(),
            flag_bits in 0u8..64,
            icmp_type in any::<u8>(),
            icmp_code in any::<u8>(),
            packets in 1u64..10_000,
            extra_bytes in 0u64..1_000_000,
            rate in 1u64..100_000,
            payload in proptest::collection::vec(any::<u8>(), 0..=64),
        ) {
            let proto = [Proto::Tcp, Proto::Udp, Proto::Icmp, Proto::Other(proto_num)][proto_pick];
            let flow = FlowRecord {
                timestamp: ts,
                member: Asn(member),
                src: IpAddr::from(std::net::Ipv4Addr::from(src)),
                dst: IpAddr::from(std::net::Ipv4Addr::from(dst)),
                proto,
                src_port: if proto == Proto::Icmp { 0 } else { sport },
                dst_port: if proto == Proto::Icmp { 0 } else { dport },
                tcp_flags: if proto == Proto::Tcp {
                    TcpFlags::from_bits_truncate(flag_bits)
                } else {
                    TcpFlags::empty()
                },
                icmp_type: if proto == Proto::Icmp { icmp_type } else { 0 },
                icmp_code: if proto == Proto::Icmp { icmp_code } else { 0 },
                bytes: packets + extra_bytes,
                packets,
                sample_rate: rate,
                payload_head: if payload.is_empty() { None } else { Some(payload) },
            };
            let line = serialize_flow_line(&flow);
            let parsed = parse_flow_line(&line, 1).unwrap();
            prop_assert_eq!(&parsed, &flow);
            // Serializing again reproduces the canonical line exactly.
            prop_assert_eq!(serialize_flow_line(&parsed), line);
        }
    }
}
