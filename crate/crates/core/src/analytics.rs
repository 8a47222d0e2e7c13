//! Report aggregations: time series, per-member fractions with a CCDF,
//! packet-size CDFs, and the invalid-traffic mix by protocol and
//! destination port. All outputs are canonically ordered so identical
//! inputs give byte-identical files.

use std::collections::{BTreeMap, BTreeSet};

use crate::classify::TrafficClass;
use crate::flow::{FlowRecord, Proto};
use crate::net::Asn;

/// IANA dynamic/private port floor.
pub const DEFAULT_EPHEMERAL_MIN: u16 = 49152;

/// Destination ports broken out individually in the traffic mix.
pub const DEFAULT_UDP_PORTS: [u16; 5] = [53, 123, 161, 443, 19302];
pub const DEFAULT_TCP_PORTS: [u16; 4] = [80, 443, 27015, 10100];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Packets,
    Bytes,
}

impl std::str::FromStr for Weight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "packets" => Ok(Weight::Packets),
            "bytes" => Ok(Weight::Bytes),
            other => Err(format!("unknown weight {other:?}")),
        }
    }
}

fn weight_of(flow: &FlowRecord, weight: Weight) -> u64 {
    match weight {
        Weight::Packets => flow.packets,
        Weight::Bytes => flow.bytes,
    }
}

/// Per-class packet/byte counts in contiguous time bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeries {
    pub bin_width: i64,
    pub start: i64,
    /// Per class: one (packets, bytes) pair per bin.
    pub bins: BTreeMap<TrafficClass, Vec<(u64, u64)>>,
    pub bin_count: usize,
}

impl TimeSeries {
    pub fn bin_start(&self, idx: usize) -> i64 {
        self.start + idx as i64 * self.bin_width
    }
}

/// Bins flows by timestamp. `window` defaults to the flow extent; flows
/// outside an explicit window are clamped into the edge bins so bin sums
/// always reproduce the class totals.
pub fn time_series(
    flows: &[FlowRecord],
    verdicts: &[TrafficClass],
    window: Option<(i64, i64)>,
    bin_width: i64,
) -> TimeSeries {
    assert!(bin_width > 0, "bin width must be positive");
    assert_eq!(flows.len(), verdicts.len());
    let (start, end) = window.unwrap_or_else(|| {
        let min = flows.iter().map(|f| f.timestamp).min().unwrap_or(0);
        let max = flows.iter().map(|f| f.timestamp).max().unwrap_or(0);
        (min, max)
    });
    let span = (end - start).max(0);
    let bin_count = (span / bin_width) as usize + 1;
    let mut bins: BTreeMap<TrafficClass, Vec<(u64, u64)>> = TrafficClass::ALL
        .iter()
        .map(|&c| (c, vec![(0, 0); bin_count]))
        .collect();
    for (flow, &class) in flows.iter().zip(verdicts) {
        let idx = ((flow.timestamp - start) / bin_width).clamp(0, bin_count as i64 - 1) as usize;
        let slot = &mut bins.get_mut(&class).unwrap()[idx];
        slot.0 += flow.packets;
        slot.1 += flow.bytes;
    }
    TimeSeries {
        bin_width,
        start,
        bins,
        bin_count,
    }
}

/// Per-member class fractions plus the CCDF of anomalous fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberFractions {
    /// member -> fraction per class, in TrafficClass::ALL order.
    pub fractions: BTreeMap<Asn, [f64; 4]>,
    /// Sorted (anomalous fraction, share of members at or above it).
    pub ccdf: Vec<(f64, f64)>,
}

/// Computes each member's class fractions under the chosen weight.
/// Anomalous = everything but regular.
pub fn member_fractions(
    flows: &[FlowRecord],
    verdicts: &[TrafficClass],
    weight: Weight,
) -> MemberFractions {
    assert_eq!(flows.len(), verdicts.len());
    let mut per_member: BTreeMap<Asn, [u64; 4]> = BTreeMap::new();
    for (flow, &class) in flows.iter().zip(verdicts) {
        let counts = per_member.entry(flow.member).or_insert([0; 4]);
        let idx = TrafficClass::ALL.iter().position(|&c| c == class).unwrap();
        counts[idx] += weight_of(flow, weight);
    }
    let mut fractions = BTreeMap::new();
    let mut anomalous: Vec<f64> = Vec::new();
    for (&member, counts) in &per_member {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        let f = [
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
            counts[3] as f64 / total as f64,
        ];
        anomalous.push(f[0] + f[1] + f[2]);
        fractions.insert(member, f);
    }
    let n = anomalous.len();
    anomalous.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ccdf = Vec::new();
    let mut i = 0;
    while i < n {
        let v = anomalous[i];
        // Share of members with fraction >= v.
        ccdf.push((v, (n - i) as f64 / n as f64));
        while i < n && anomalous[i] == v {
            i += 1;
        }
    }
    MemberFractions { fractions, ccdf }
}

/// Empirical packet-size CDF per class: exact step points, no binning.
/// Each flow contributes `packets` samples of its per-packet size.
pub fn size_cdf(
    flows: &[FlowRecord],
    verdicts: &[TrafficClass],
) -> BTreeMap<TrafficClass, Vec<(u32, f64)>> {
    assert_eq!(flows.len(), verdicts.len());
    let mut per_class: BTreeMap<TrafficClass, BTreeMap<u32, u64>> = BTreeMap::new();
    for (flow, &class) in flows.iter().zip(verdicts) {
        *per_class
            .entry(class)
            .or_default()
            .entry(flow.packet_size())
            .or_insert(0) += flow.packets;
    }
    per_class
        .into_iter()
        .map(|(class, sizes)| {
            let total: u64 = sizes.values().sum();
            let mut cum = 0u64;
            let points = sizes
                .into_iter()
                .map(|(size, count)| {
                    cum += count;
                    (size, cum as f64 / total as f64)
                })
                .collect();
            (class, points)
        })
        .collect()
}

/// Destination-port bucket within one protocol row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PortBucket {
    Named(u16),
    Ephemeral,
    Other,
}

impl std::fmt::Display for PortBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PortBucket::Named(p) => write!(f, "{p}"),
            PortBucket::Ephemeral => write!(f, "ephemeral"),
            PortBucket::Other => write!(f, "other"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrafficMixConfig {
    pub udp_ports: Vec<u16>,
    pub tcp_ports: Vec<u16>,
    pub ephemeral_min: u16,
}

impl Default for TrafficMixConfig {
    fn default() -> Self {
        TrafficMixConfig {
            udp_ports: DEFAULT_UDP_PORTS.to_vec(),
            tcp_ports: DEFAULT_TCP_PORTS.to_vec(),
            ephemeral_min: DEFAULT_EPHEMERAL_MIN,
        }
    }
}

/// Shares of invalid packets per protocol and destination-port bucket.
/// Shares are fractions of all invalid packets, so the per-proto totals
/// plus `other_protocols` sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMix {
    pub udp: BTreeMap<PortBucket, f64>,
    pub tcp: BTreeMap<PortBucket, f64>,
    pub icmp_total: f64,
    pub udp_total: f64,
    pub tcp_total: f64,
    pub other_protocols: f64,
    pub invalid_packets: u64,
}

fn bucket(port: u16, named: &[u16], ephemeral_min: u16) -> PortBucket {
    if named.contains(&port) {
        PortBucket::Named(port)
    } else if port >= ephemeral_min {
        PortBucket::Ephemeral
    } else {
        PortBucket::Other
    }
}

pub fn traffic_mix(
    flows: &[FlowRecord],
    verdicts: &[TrafficClass],
    config: &TrafficMixConfig,
) -> TrafficMix {
    assert_eq!(flows.len(), verdicts.len());
    let mut udp: BTreeMap<PortBucket, u64> = BTreeMap::new();
    let mut tcp: BTreeMap<PortBucket, u64> = BTreeMap::new();
    let (mut icmp, mut other, mut total) = (0u64, 0u64, 0u64);
    for (flow, &class) in flows.iter().zip(verdicts) {
        if class != TrafficClass::Invalid {
            continue;
        }
        total += flow.packets;
        match flow.proto {
            Proto::Udp => {
                *udp.entry(bucket(flow.dst_port, &config.udp_ports, config.ephemeral_min))
                    .or_insert(0) += flow.packets
            }
            Proto::Tcp => {
                *tcp.entry(bucket(flow.dst_port, &config.tcp_ports, config.ephemeral_min))
                    .or_insert(0) += flow.packets
            }
            Proto::Icmp => icmp += flow.packets,
            Proto::Other(_) => other += flow.packets,
        }
    }
    let share = |count: u64| {
        if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        }
    };
    let to_shares = |counts: BTreeMap<PortBucket, u64>, named: &[u16]| {
        let mut shares: BTreeMap<PortBucket, f64> = named
            .iter()
            .map(|&p| (PortBucket::Named(p), 0.0))
            .collect();
        shares.insert(PortBucket::Ephemeral, 0.0);
        shares.insert(PortBucket::Other, 0.0);
        for (b, c) in counts {
            shares.insert(b, share(c));
        }
        shares
    };
    let udp_total = share(udp.values().sum());
    let tcp_total = share(tcp.values().sum());
    TrafficMix {
        udp: to_shares(udp, &config.udp_ports),
        tcp: to_shares(tcp, &config.tcp_ports),
        icmp_total: share(icmp),
        udp_total,
        tcp_total,
        other_protocols: share(other),
        invalid_packets: total,
    }
}

// ---- CSV writers -----------------------------------------------------

/// `variant,class,bin_start,packets,bytes`; an optional presentation
/// scale factor multiplies the emitted values.
pub fn timeseries_csv(rows: &[(String, TimeSeries)], scale: Option<f64>) -> String {
    let mut out = String::from("variant,class,bin_start,packets,bytes\n");
    for (variant, series) in rows {
        for class in TrafficClass::ALL {
            let bins = &series.bins[&class];
            for (idx, (packets, bytes)) in bins.iter().enumerate() {
                match scale {
                    None => out.push_str(&format!(
                        "{variant},{},{},{packets},{bytes}\n",
                        class.as_str(),
                        series.bin_start(idx)
                    )),
                    Some(s) => out.push_str(&format!(
                        "{variant},{},{},{},{}\n",
                        class.as_str(),
                        series.bin_start(idx),
                        *packets as f64 * s,
                        *bytes as f64 * s
                    )),
                }
            }
        }
    }
    out
}

/// `variant,anomalous_fraction,member_share`
pub fn member_ccdf_csv(rows: &[(String, MemberFractions)]) -> String {
    let mut out = String::from("variant,anomalous_fraction,member_share\n");
    for (variant, mf) in rows {
        for (fraction, share) in &mf.ccdf {
            out.push_str(&format!("{variant},{fraction},{share}\n"));
        }
    }
    out
}

/// `variant,member,bogon,unrouted,invalid,regular`
pub fn member_fractions_csv(rows: &[(String, MemberFractions)]) -> String {
    let mut out = String::from("variant,member,bogon,unrouted,invalid,regular\n");
    for (variant, mf) in rows {
        for (member, f) in &mf.fractions {
            out.push_str(&format!(
                "{variant},{member},{},{},{},{}\n",
                f[0], f[1], f[2], f[3]
            ));
        }
    }
    out
}

/// `variant,size,cum_fraction` for one class.
pub fn size_cdf_csv(rows: &[(String, Vec<(u32, f64)>)]) -> String {
    let mut out = String::from("variant,size,cum_fraction\n");
    for (variant, points) in rows {
        for (size, fraction) in points {
            out.push_str(&format!("{variant},{size},{fraction}\n"));
        }
    }
    out
}

/// `variant,proto,bucket,share`; per-proto rows end with a total, plus
/// one row for the remaining protocols and the overall total.
pub fn traffic_mix_csv(rows: &[(String, TrafficMix)]) -> String {
    let mut out = String::from("variant,proto,bucket,share\n");
    for (variant, mix) in rows {
        out.push_str(&format!("{variant},icmp,total,{}\n", mix.icmp_total));
        for (b, share) in &mix.udp {
            out.push_str(&format!("{variant},udp,{b},{share}\n"));
        }
        out.push_str(&format!("{variant},udp,total,{}\n", mix.udp_total));
        for (b, share) in &mix.tcp {
            out.push_str(&format!("{variant},tcp,{b},{share}\n"));
        }
        out.push_str(&format!("{variant},tcp,total,{}\n", mix.tcp_total));
        out.push_str(&format!("{variant},other,total,{}\n", mix.other_protocols));
        let grand = mix.icmp_total + mix.udp_total + mix.tcp_total + mix.other_protocols;
        out.push_str(&format!("{variant},all,total,{grand}\n"));
    }
    out
}

/// Named ports that slipped past the bucketer would break the CSV shape;
/// keep the check close to the config.
pub fn validate_mix_config(config: &TrafficMixConfig) -> Result<(), String> {
    let check = |ports: &[u16], proto: &str| {
        let mut seen = BTreeSet::new();
        for &p in ports {
            if !seen.insert(p) {
                return Err(format!("duplicate named {proto} port {p}"));
            }
        }
        Ok(())
    };
    check(&config.udp_ports, "udp")?;
    check(&config.tcp_ports, "tcp")
}
