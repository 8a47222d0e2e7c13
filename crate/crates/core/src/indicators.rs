//! False-positive indicators on invalid-classified traffic.
//!
//! Five header/payload heuristics mark flows that are unlikely to be
//! spoofed (TLS, HTTP responses, ICMP echo replies, ACK-carrying TCP) or
//! more likely to be spoofed (malformed: transport port 0 or identical
//! endpoints). Fractions are packet-weighted over raw counts.

use serde::Serialize;

use crate::classify::TrafficClass;
use crate::flow::{FlowRecord, Proto, TcpFlags};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IndicatorFlags {
    pub ssl_over_tcp: bool,
    pub http_response: bool,
    pub icmp_echo_reply: bool,
    pub tcp_ack: bool,
    pub malformed: bool,
}

pub const INDICATOR_NAMES: [&str; 5] = [
    "ssl_over_tcp",
    "http_response",
    "icmp_echo_reply",
    "tcp_ack",
    "malformed",
];

impl IndicatorFlags {
    pub fn as_array(&self) -> [bool; 5] {
        [
            self.ssl_over_tcp,
            self.http_response,
            self.icmp_echo_reply,
            self.tcp_ack,
            self.malformed,
        ]
    }
}

/// Header/payload checks on one flow. Flows without a payload head can
/// never set the two payload-based flags.
pub fn detect_indicators(flow: &FlowRecord) -> IndicatorFlags {
    let payload = flow.payload_head.as_deref().unwrap_or(&[]);
    let ssl_over_tcp = flow.proto == Proto::Tcp
        && payload.len() >= 2
        && payload[0] == 0x16
        && payload[1] == 0x03;
    let http_response = flow.proto == Proto::Tcp && payload.starts_with(b"HTTP/");
    let icmp_echo_reply = flow.proto == Proto::Icmp && flow.icmp_type == 0;
    let tcp_ack = flow.proto == Proto::Tcp && flow.tcp_flags.contains(TcpFlags::ACK);
    let port_zero = matches!(flow.proto, Proto::Tcp | Proto::Udp)
        && (flow.src_port == 0 || flow.dst_port == 0);
    let malformed = port_zero || flow.src == flow.dst;
    IndicatorFlags {
        ssl_over_tcp,
        http_response,
        icmp_echo_reply,
        tcp_ack,
        malformed,
    }
}

/// Packet-weighted indicator fractions over one variant's invalid flows.
/// `fractions` is `None` when no packets were classified invalid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorSummary {
    pub variant: String,
    pub invalid_packets: u64,
    pub fractions: Option<[f64; 5]>,
}

pub fn summarize(
    variant: &str,
    flows: &[FlowRecord],
    verdicts: &[TrafficClass],
) -> IndicatorSummary {
    assert_eq!(flows.len(), verdicts.len());
    let mut denominator: u64 = 0;
    let mut hits = [0u64; 5];
    for (flow, &class) in flows.iter().zip(verdicts) {
        if class != TrafficClass::Invalid {
            continue;
        }
        denominator += flow.packets;
        let flags = detect_indicators(flow).as_array();
        for (count, hit) in hits.iter_mut().zip(flags) {
            if hit {
                *count += flow.packets;
            }
        }
    }
    let fractions = if denominator == 0 {
        None
    } else {
        let mut f = [0f64; 5];
        for (slot, count) in f.iter_mut().zip(hits) {
            *slot = count as f64 / denominator as f64;
        }
        Some(f)
    };
    IndicatorSummary {
        variant: variant.to_string(),
        invalid_packets: denominator,
        fractions,
    }
}

/// CSV rows matching the indicator table: one row per variant, `NA` for
/// an empty denominator.
pub fn summaries_to_csv(summaries: &[IndicatorSummary]) -> String {
    let mut out = String::from("variant,");
    out.push_str(&INDICATOR_NAMES.join(","));
    out.push('\n');
    for s in summaries {
        out.push_str(&s.variant);
        match &s.fractions {
            Some(f) => {
                for v in f {
                    out.push_str(&format!(",{v}"));
                }
            }
            None => {
                for _ in 0..5 {
                    out.push_str(",NA");
                }
            }
        }
        out.push('\n');
    }
    out
}
