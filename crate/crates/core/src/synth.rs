//! Synthetic AS topologies with ground truth.
//!
//! Generates acyclic customer hierarchies, propagates routes under
//! valley-free export with the customer > peer > provider preference,
//! synthesizes labeled traffic crossing the member peering fabric, and
//! measures how classification degrades when vantage feeds disappear.
//! Everything is a pure function of its parameters and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bgp::{load_routes, AsPath, RouteKind, RouteMessage, RouteTable};
use crate::classify::TrafficClass;
use crate::cone::{OrgMap, Relationship, RelationshipEdge};
use crate::error::{Error, Result};
use crate::flow::{FlowRecord, Proto, TcpFlags};
use crate::net::{Asn, IpPrefix};

/// Timestamp carried by synthetic route announcements.
pub const SYNTH_ROUTE_TIME: i64 = 1_000_000_000;
/// Analysis window bracketing the synthetic announcements.
pub const SYNTH_WINDOW: (i64, i64) = (SYNTH_ROUTE_TIME - 86_400, SYNTH_ROUTE_TIME + 86_400);
/// First synthetic flow timestamp; flows step one second apart.
pub const SYNTH_FLOW_BASE: i64 = SYNTH_ROUTE_TIME + 3_600;

const ASN_BASE: u32 = 64512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthTopology {
    /// Each AS owns exactly one /24.
    pub ases: BTreeMap<Asn, IpPrefix>,
    pub edges: Vec<RelationshipEdge>,
    pub ixp_members: BTreeSet<Asn>,
    pub orgs: OrgMap,
    pub seed: u64,
}

impl SynthTopology {
    pub fn asn_list(&self) -> Vec<Asn> {
        self.ases.keys().copied().collect()
    }

    /// The declared relationship of an unordered pair, if any.
    pub fn relationship(&self, a: Asn, b: Asn) -> Option<Relationship> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.rel)
    }

    /// The AS owning the prefix that covers `addr`.
    pub fn owner_of(&self, addr: IpAddr) -> Option<Asn> {
        self.ases
            .iter()
            .find(|(_, p)| p.contains(addr))
            .map(|(&a, _)| a)
    }
}

fn synth_asn(i: usize) -> Asn {
    Asn(ASN_BASE + i as u32)
}

fn synth_prefix(i: usize) -> IpPrefix {
    let addr = Ipv4Addr::new(1, (i >> 8) as u8, (i & 0xff) as u8, 0);
    IpPrefix::new(IpAddr::V4(addr), 24).expect("static shape")
}

/// Generates a topology. The provider hierarchy is acyclic by
/// construction: provider-to-customer edges only run from a lower tier
/// index to a higher one, and every AS beyond the member tier gets one
/// guaranteed provider, keeping each AS inside some member's cone.
pub fn gen_topology(
    n_ases: usize,
    n_members: usize,
    p2c_density: f64,
    p2p_density: f64,
    org_fraction: f64,
    seed: u64,
) -> Result<SynthTopology> {
    if n_ases == 0 || n_members == 0 || n_members > n_ases {
        return Err(Error::SynthParams(format!(
            "need 1 <= n_members <= n_ases, got {n_members}/{n_ases}"
        )));
    }
    if n_ases > 65_536 {
        return Err(Error::SynthParams("at most 65536 ASes".to_string()));
    }
    for (name, d) in [
        ("p2c_density", p2c_density),
        ("p2p_density", p2p_density),
        ("org_fraction", org_fraction),
    ] {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::SynthParams(format!("{name} must be in [0,1], got {d}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ases: BTreeMap<Asn, IpPrefix> = (0..n_ases)
        .map(|i| (synth_asn(i), synth_prefix(i)))
        .collect();
    let ixp_members: BTreeSet<Asn> = (0..n_members).map(synth_asn).collect();

    let mut edges = Vec::new();
    let mut related: BTreeSet<(usize, usize)> = BTreeSet::new();
    // Backbone: one guaranteed provider with a lower tier index.
    for i in n_members..n_ases {
        let provider = rng.gen_range(0..i);
        edges.push(RelationshipEdge::p2c(synth_asn(provider), synth_asn(i)));
        related.insert((provider, i));
    }
    // Extra transit edges, still lower index -> higher index.
    for i in 0..n_ases {
        for j in (i + 1)..n_ases {
            if !related.contains(&(i, j)) && rng.gen_bool(p2c_density) {
                edges.push(RelationshipEdge::p2c(synth_asn(i), synth_asn(j)));
                related.insert((i, j));
            }
        }
    }
    // Peerings between any still-unrelated pair.
    for i in 0..n_ases {
        for j in (i + 1)..n_ases {
            if !related.contains(&(i, j)) && rng.gen_bool(p2p_density) {
                edges.push(RelationshipEdge::p2p(synth_asn(i), synth_asn(j)));
                related.insert((i, j));
            }
        }
    }

    // Multi-AS organizations: group a fraction of ASes into pairs.
    let mut orgs = OrgMap::new();
    let mut shuffled: Vec<usize> = (0..n_ases).collect();
    shuffled.shuffle(&mut rng);
    let grouped = ((n_ases as f64 * org_fraction) as usize / 2) * 2;
    for (org_idx, pair) in shuffled[..grouped].chunks(2).enumerate() {
        let org = format!("org{org_idx}");
        for &i in pair {
            orgs.insert(synth_asn(i), &org).expect("fresh ASNs");
        }
    }

    Ok(SynthTopology {
        ases,
        edges,
        ixp_members,
        orgs,
        seed,
    })
}

/// Route propagation output: the vantage table plus per-AS best paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    /// One feed per AS: collector "synth", peer = the vantage AS.
    pub table: RouteTable,
    /// (vantage, origin) -> AS-level path from vantage to origin.
    pub best_paths: BTreeMap<(Asn, Asn), Vec<Asn>>,
}

#[derive(Clone, PartialEq, Eq)]
struct Candidate {
    len: usize,
    next_hop: Asn,
    path: Vec<Asn>,
}

impl Candidate {
    fn better_than(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => (self.len, self.next_hop) < (o.len, o.next_hop),
        }
    }
}

fn pick(best: &mut Option<Candidate>, cand: Candidate) {
    if cand.better_than(best) {
        *best = Some(cand);
    }
}

/// Valley-free propagation with deterministic selection: prefer routes
/// learned from customers, then peers, then providers; break ties by
/// path length, then lowest next-hop ASN. Routes learned from peers or
/// providers are exported to customers only.
pub fn propagate_routes(topo: &SynthTopology) -> Propagation {
    let ids = topo.asn_list();
    let n = ids.len();
    let index: BTreeMap<Asn, usize> = ids.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut customers_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut providers_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut peers_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &topo.edges {
        let (a, b) = (index[&e.a], index[&e.b]);
        match e.rel {
            Relationship::ProviderToCustomer => {
                customers_of[a].push(b);
                providers_of[b].push(a);
            }
            Relationship::PeerToPeer => {
                peers_of[a].push(b);
                peers_of[b].push(a);
            }
        }
    }

    let mut best_paths = BTreeMap::new();
    for (&origin, &origin_prefix) in &topo.ases {
        let o = index[&origin];
        // Phase 1, up: best customer-learned route per AS. Offers flow
        // from customers to providers, i.e. from higher to lower tier
        // index, so one descending sweep finalizes them.
        let mut customer_route: Vec<Option<Candidate>> = vec![None; n];
        customer_route[o] = Some(Candidate {
            len: 1,
            next_hop: ids[o],
            path: vec![ids[o]],
        });
        for i in (0..n).rev() {
            if customer_route[i].is_some() && i != o {
                continue; // finalized by an earlier customer offer
            }
            let mut best: Option<Candidate> = customer_route[i].take();
            for &c in &customers_of[i] {
                if let Some(r) = &customer_route[c] {
                    let mut path = Vec::with_capacity(r.len + 1);
                    path.push(ids[i]);
                    path.extend_from_slice(&r.path);
                    pick(
                        &mut best,
                        Candidate {
                            len: r.len + 1,
                            next_hop: ids[c],
                            path,
                        },
                    );
                }
            }
            customer_route[i] = best;
        }
        // An AS holding a customer route always selects it, so exactly
        // those routes cross the single allowed peer hop.
        let mut peer_route: Vec<Option<Candidate>> = vec![None; n];
        for i in 0..n {
            let mut best: Option<Candidate> = None;
            for &p in &peers_of[i] {
                if let Some(r) = &customer_route[p] {
                    let mut path = Vec::with_capacity(r.len + 1);
                    path.push(ids[i]);
                    path.extend_from_slice(&r.path);
                    pick(
                        &mut best,
                        Candidate {
                            len: r.len + 1,
                            next_hop: ids[p],
                            path,
                        },
                    );
                }
            }
            peer_route[i] = best;
        }
        // Phase 3, down: providers export their overall best to
        // customers; ascending sweep chains the descent.
        let mut overall: Vec<Option<Candidate>> = vec![None; n];
        for i in 0..n {
            let mut best: Option<Candidate> = customer_route[i].clone();
            if best.is_none() {
                best = peer_route[i].clone();
            }
            let mut provider_best: Option<Candidate> = None;
            for &p in &providers_of[i] {
                if let Some(r) = &overall[p] {
                    let mut path = Vec::with_capacity(r.len + 1);
                    path.push(ids[i]);
                    path.extend_from_slice(&r.path);
                    pick(
                        &mut provider_best,
                        Candidate {
                            len: r.len + 1,
                            next_hop: ids[p],
                            path,
                        },
                    );
                }
            }
            if best.is_none() {
                best = provider_best;
            }
            overall[i] = best;
        }
        let _ = origin_prefix;
        for i in 0..n {
            if let Some(r) = &overall[i] {
                best_paths.insert((ids[i], origin), r.path.clone());
            }
        }
    }

    let messages: Vec<RouteMessage> = best_paths
        .iter()
        .map(|((vantage, origin), path)| RouteMessage {
            timestamp: SYNTH_ROUTE_TIME,
            collector: "synth".to_string(),
            peer: *vantage,
            kind: RouteKind::Announce,
            prefix: topo.ases[origin],
            path: Some(AsPath::new(path.clone()).expect("nonempty path")),
        })
        .collect();
    let table = load_routes(messages, SYNTH_WINDOW);
    Propagation { table, best_paths }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Legit,
    Spoofed,
}

impl std::fmt::Display for Truth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Truth::Legit => write!(f, "legit"),
            Truth::Spoofed => write!(f, "spoofed"),
        }
    }
}

impl std::str::FromStr for Truth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "legit" => Ok(Truth::Legit),
            "spoofed" => Ok(Truth::Spoofed),
            other => Err(format!("unknown truth label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledFlow {
    pub flow: FlowRecord,
    pub truth: Truth,
}

/// Where spoofed flows may draw their forged source from. Routed space
/// belonging to another AS is always eligible; bogon and unrouted space
/// are opt-in so evaluation isolates the cone logic by default.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpoofPool {
    pub include_bogon: bool,
    pub include_unrouted: bool,
}

/// An (src AS, dst AS) pair whose forward path crosses the IXP fabric:
/// a peer hop between two members. The source-side member is the
/// ingress the flow is recorded under.
fn crossing_pairs(topo: &SynthTopology, prop: &Propagation) -> Vec<(Asn, Asn, Asn)> {
    let mut pairs = Vec::new();
    for &a in topo.ases.keys() {
        for &b in topo.ases.keys() {
            if a == b {
                continue;
            }
            if let Some(path) = prop.best_paths.get(&(a, b)) {
                for w in path.windows(2) {
                    let (x, y) = (w[0], w[1]);
                    if topo.ixp_members.contains(&x)
                        && topo.ixp_members.contains(&y)
                        && topo.relationship(x, y) == Some(Relationship::PeerToPeer)
                    {
                        pairs.push((a, b, x));
                        break;
                    }
                }
            }
        }
    }
    pairs
}

fn addr_in(rng: &mut ChaCha8Rng, prefix: &IpPrefix) -> IpAddr {
    match prefix.first_addr() {
        IpAddr::V4(base) => {
            let octets = base.octets();
            IpAddr::V4(Ipv4Addr::new(
                octets[0],
                octets[1],
                octets[2],
                rng.gen_range(1..255),
            ))
        }
        IpAddr::V6(_) => unreachable!("synthetic prefixes are v4"),
    }
}

/// Generates labeled flows over the IXP crossings. Legit flows carry a
/// source from the sender's own prefix; spoofed flows forge one from the
/// configured pool. Deterministic given the seed.
pub fn gen_flows(
    topo: &SynthTopology,
    prop: &Propagation,
    n_flows: usize,
    spoof_rate: f64,
    pool: SpoofPool,
    seed: u64,
) -> Result<Vec<LabeledFlow>> {
    if !(0.0..=1.0).contains(&spoof_rate) {
        return Err(Error::SynthParams(format!(
            "spoof_rate must be in [0,1], got {spoof_rate}"
        )));
    }
    let pairs = crossing_pairs(topo, prop);
    if pairs.is_empty() {
        return Err(Error::SynthParams(
            "no best path crosses a member peering; raise p2p_density or members".to_string(),
        ));
    }
    let ids = topo.asn_list();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flows = Vec::with_capacity(n_flows);
    for k in 0..n_flows {
        let &(sender, dst_as, ingress) = pairs.choose(&mut rng).expect("nonempty");
        let spoofed = rng.gen_bool(spoof_rate);
        let src = if !spoofed {
            addr_in(&mut rng, &topo.ases[&sender])
        } else {
            let roll: f64 = rng.gen();
            if pool.include_bogon && roll < 1.0 / 3.0 {
                // RFC 1918 space, never announced here.
                IpAddr::V4(Ipv4Addr::new(
                    10,
                    rng.gen_range(0..=255),
                    rng.gen_range(0..=255),
                    rng.gen_range(1..255),
                ))
            } else if pool.include_unrouted && roll < 2.0 / 3.0 {
                // 2.0.0.0/8 is outside every owned prefix.
                IpAddr::V4(Ipv4Addr::new(
                    2,
                    rng.gen_range(0..=255),
                    rng.gen_range(0..=255),
                    rng.gen_range(1..255),
                ))
            } else {
                let other = loop {
                    let &c = ids.choose(&mut rng).expect("nonempty");
                    if c != sender {
                        break c;
                    }
                };
                addr_in(&mut rng, &topo.ases[&other])
            }
        };
        let dst = addr_in(&mut rng, &topo.ases[&dst_as]);

        let proto_roll: f64 = rng.gen();
        let (proto, src_port, dst_port, tcp_flags, icmp_type, payload_head, packets, size);
        if proto_roll < 0.70 {
            proto = Proto::Tcp;
            let flag_roll: f64 = rng.gen();
            tcp_flags = if flag_roll < 0.65 {
                TcpFlags::PSH | TcpFlags::ACK
            } else if flag_roll < 0.80 {
                TcpFlags::ACK
            } else {
                TcpFlags::SYN
            };
            let port_roll: f64 = rng.gen();
            dst_port = if port_roll < 0.5 {
                443
            } else if port_roll < 0.7 {
                80
            } else {
                rng.gen_range(49152..=65535)
            };
            src_port = rng.gen_range(49152..=65535);
            icmp_type = 0;
            payload_head = if dst_port == 443
                && tcp_flags.contains(TcpFlags::ACK)
                && rng.gen_bool(0.5)
            {
                Some(vec![0x16, 0x03, 0x03, 0x00, 0x2a])
            } else {
                None
            };
            packets = rng.gen_range(1..=20);
            size = rng.gen_range(64..=1500);
        } else if proto_roll < 0.95 {
            proto = Proto::Udp;
            let port_roll: f64 = rng.gen();
            dst_port = if port_roll < 0.3 {
                53
            } else if port_roll < 0.45 {
                123
            } else if port_roll < 0.7 {
                443
            } else {
                rng.gen_range(49152..=65535)
            };
            src_port = rng.gen_range(49152..=65535);
            tcp_flags = TcpFlags::empty();
            icmp_type = 0;
            payload_head = None;
            packets = rng.gen_range(1..=10);
            size = rng.gen_range(64..=1400);
        } else {
            proto = Proto::Icmp;
            src_port = 0;
            dst_port = 0;
            tcp_flags = TcpFlags::empty();
            icmp_type = if rng.gen_bool(0.5) { 0 } else { 8 };
            payload_head = None;
            packets = rng.gen_range(1..=4);
            size = rng.gen_range(64..=128);
        }

        flows.push(LabeledFlow {
            flow: FlowRecord {
                timestamp: SYNTH_FLOW_BASE + k as i64,
                member: ingress,
                src,
                dst,
                proto,
                src_port,
                dst_port,
                tcp_flags,
                icmp_type,
                icmp_code: 0,
                bytes: size * packets,
                packets,
                sample_rate: 1,
                payload_head,
            },
            truth: if spoofed { Truth::Spoofed } else { Truth::Legit },
        });
    }
    Ok(flows)
}

/// Removes a pseudo-random `loss_fraction` of the (collector, peer)
/// vantage feeds. For a fixed seed the dropped sets nest as the fraction
/// grows, so visibility only ever shrinks.
pub fn drop_visibility(table: &RouteTable, loss_fraction: f64, seed: u64) -> Result<RouteTable> {
    if !(0.0..1.0).contains(&loss_fraction) {
        return Err(Error::SynthParams(format!(
            "loss_fraction must be in [0,1), got {loss_fraction}"
        )));
    }
    let mut feeds = table.feeds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    feeds.shuffle(&mut rng);
    let drop = (feeds.len() as f64 * loss_fraction).floor() as usize;
    let keep: BTreeSet<_> = feeds[drop..].iter().cloned().collect();
    Ok(table.retain_feeds(&keep))
}

/// Restricts declared relationships to pairs visible as adjacencies.
/// Mirrors reality: a link no surviving vantage observes contributes no
/// relationship knowledge either.
pub fn visible_relationships(
    edges: &[RelationshipEdge],
    adjacencies: &BTreeSet<(Asn, Asn)>,
) -> Vec<RelationshipEdge> {
    edges
        .iter()
        .filter(|e| adjacencies.contains(&(e.a.min(e.b), e.a.max(e.b))))
        .copied()
        .collect()
}

/// Confusion counts over sanitized flows: positive means classified
/// invalid, truth positive means spoofed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl Confusion {
    pub fn sanitized(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn precision(&self) -> Option<f64> {
        let denom = self.true_positives + self.false_positives;
        (denom > 0).then(|| self.true_positives as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.true_positives + self.false_negatives;
        (denom > 0).then(|| self.true_positives as f64 / denom as f64)
    }
}

/// Scores one variant's verdicts against ground truth. Bogon and
/// unrouted flows are sanitization hits, not cone decisions, and stay
/// out of the confusion matrix.
pub fn evaluate(truths: &[Truth], verdicts: &[TrafficClass]) -> Confusion {
    assert_eq!(truths.len(), verdicts.len());
    let mut c = Confusion::default();
    for (&truth, &verdict) in truths.iter().zip(verdicts) {
        match verdict {
            TrafficClass::Bogon | TrafficClass::Unrouted => continue,
            TrafficClass::Invalid => match truth {
                Truth::Spoofed => c.true_positives += 1,
                Truth::Legit => c.false_positives += 1,
            },
            TrafficClass::Regular => match truth {
                Truth::Spoofed => c.false_negatives += 1,
                Truth::Legit => c.true_negatives += 1,
            },
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::{observed_adjacencies, origins_for};
    use crate::classify::classify_stream;
    use crate::cone::{build_caida, build_full};
    use crate::prefix_index::{build_index, default_bogons};

    fn topo(seed: u64) -> SynthTopology {
        gen_topology(20, 4, 0.08, 0.3, 0.3, seed).unwrap()
    }

    #[test]
    fn deterministic_across_runs() {
        assert_eq!(topo(5), topo(5));
        assert_ne!(topo(5), topo(6));
    }

    #[test]
    fn rejects_infeasible_parameters() {
        assert!(gen_topology(5, 6, 0.1, 0.1, 0.1, 0).is_err());
        assert!(gen_topology(5, 0, 0.1, 0.1, 0.1, 0).is_err());
        assert!(gen_topology(5, 2, 1.5, 0.1, 0.1, 0).is_err());
        assert!(gen_topology(5, 2, 0.1, -0.1, 0.1, 0).is_err());
    }

    #[test]
    fn customer_hierarchy_is_acyclic_and_rooted() {
        for seed in 0..10 {
            let t = topo(seed);
            // Acyclic: provider edges only run from lower to higher ASN
            // by construction.
            for e in &t.edges {
                if e.rel == Relationship::ProviderToCustomer {
                    assert!(e.a < e.b);
                }
            }
            // Every AS reachable from some member by customer descent.
            let members: BTreeSet<Asn> = t.ixp_members.clone();
            let mut reach = members.clone();
            loop {
                let before = reach.len();
                for e in &t.edges {
                    if e.rel == Relationship::ProviderToCustomer && reach.contains(&e.a) {
                        reach.insert(e.b);
                    }
                }
                if reach.len() == before {
                    break;
                }
            }
            assert_eq!(reach.len(), t.ases.len());
        }
    }

    #[test]
    fn each_as_owns_a_distinct_prefix() {
        let t = topo(1);
        let prefixes: BTreeSet<IpPrefix> = t.ases.values().copied().collect();
        assert_eq!(prefixes.len(), t.ases.len());
        for p in prefixes {
            assert_eq!(p.len(), 24);
        }
    }

    #[test]
    fn chain_exports_customer_prefix_upward() {
        // P (member) -> M -> C: C's prefix visible at P via [P, M, C].
        let mut topo = gen_topology(3, 1, 0.0, 0.0, 0.0, 0).unwrap();
        topo.edges.clear();
        let (p, m, c) = (synth_asn(0), synth_asn(1), synth_asn(2));
        topo.edges.push(RelationshipEdge::p2c(p, m));
        topo.edges.push(RelationshipEdge::p2c(m, c));
        let prop = propagate_routes(&topo);
        assert_eq!(prop.best_paths[&(p, c)], vec![p, m, c]);
    }

    #[test]
    fn peer_routes_do_not_transit() {
        // Peers x and y of m never see each other through m.
        let mut topo = gen_topology(3, 3, 0.0, 0.0, 0.0, 0).unwrap();
        topo.edges.clear();
        let (x, m, y) = (synth_asn(0), synth_asn(1), synth_asn(2));
        topo.edges.push(RelationshipEdge::p2p(x, m));
        topo.edges.push(RelationshipEdge::p2p(m, y));
        let prop = propagate_routes(&topo);
        assert!(prop.best_paths.get(&(x, y)).is_none());
        assert!(prop.best_paths.get(&(y, x)).is_none());
        assert_eq!(prop.best_paths[&(x, m)], vec![x, m]);
    }

    /// Valley-free shape check: up hops, at most one peer hop, then down.
    fn is_valley_free(topo: &SynthTopology, path: &[Asn]) -> bool {
        #[derive(PartialEq, PartialOrd)]
        enum Phase {
            Up,
            AfterPeer,
            Down,
        }
        let mut phase = Phase::Up;
        for w in path.windows(2) {
            let rel = topo.relationship(w[0], w[1]);
            let up = topo
                .edges
                .iter()
                .any(|e| e.rel == Relationship::ProviderToCustomer && e.a == w[1] && e.b == w[0]);
            let down = topo
                .edges
                .iter()
                .any(|e| e.rel == Relationship::ProviderToCustomer && e.a == w[0] && e.b == w[1]);
            let peer = rel == Some(Relationship::PeerToPeer);
            if up {
                if phase != Phase::Up {
                    return false;
                }
            } else if peer {
                if phase != Phase::Up {
                    return false;
                }
                phase = Phase::AfterPeer;
            } else if down {
                phase = Phase::Down;
            } else {
                return false; // hop without a relationship
            }
        }
        true
    }

    /// Independent fixpoint oracle: synchronous rounds where every AS
    /// reselects from its neighbors' current exports, so superseded
    /// routes dissolve instead of lingering. No sweep ordering.
    fn fixpoint_oracle(topo: &SynthTopology) -> BTreeMap<(Asn, Asn), Vec<Asn>> {
        #[derive(Clone, PartialEq, Debug)]
        struct Route {
            class: u8, // 0 customer, 1 peer, 2 provider
            path: Vec<Asn>,
        }
        let ids = topo.asn_list();
        let mut out = BTreeMap::new();
        for &origin in &ids {
            let own = Route {
                class: 0,
                path: vec![origin],
            };
            let mut best: BTreeMap<Asn, Route> = BTreeMap::new();
            best.insert(origin, own.clone());
            for round in 0.. {
                assert!(round < 4 * ids.len(), "oracle failed to converge");
                let snapshot = best.clone();
                let mut next: BTreeMap<Asn, Route> = BTreeMap::new();
                next.insert(origin, own.clone());
                let mut offer = |from: Asn, to: Asn, class: u8, next: &mut BTreeMap<Asn, Route>| {
                    if to == origin {
                        return;
                    }
                    if let Some(r) = snapshot.get(&from) {
                        // Peer/provider-learned routes export to
                        // customers only (class 2 receiving side).
                        if r.class > 0 && class != 2 {
                            return;
                        }
                        if r.path.contains(&to) {
                            return;
                        }
                        let mut path = vec![to];
                        path.extend_from_slice(&r.path);
                        let cand = Route { class, path };
                        let better = match next.get(&to) {
                            None => true,
                            Some(cur) => {
                                (cand.class, cand.path.len(), cand.path[1])
                                    < (cur.class, cur.path.len(), cur.path[1])
                            }
                        };
                        if better {
                            next.insert(to, cand);
                        }
                    }
                };
                for e in &topo.edges {
                    match e.rel {
                        Relationship::ProviderToCustomer => {
                            // Customer announces to provider: provider
                            // gains a customer route.
                            offer(e.b, e.a, 0, &mut next);
                            // Provider announces to customer.
                            offer(e.a, e.b, 2, &mut next);
                        }
                        Relationship::PeerToPeer => {
                            offer(e.a, e.b, 1, &mut next);
                            offer(e.b, e.a, 1, &mut next);
                        }
                    }
                }
                if next == best {
                    break;
                }
                best = next;
            }
            for (asn, r) in best {
                out.insert((asn, origin), r.path);
            }
        }
        out
    }

    #[test]
    fn propagation_matches_fixpoint_oracle_and_is_valley_free() {
        for seed in 0..8 {
            let t = gen_topology(15, 3, 0.1, 0.25, 0.0, seed).unwrap();
            let prop = propagate_routes(&t);
            let oracle = fixpoint_oracle(&t);
            assert_eq!(prop.best_paths, oracle, "seed {seed}");
            for path in prop.best_paths.values() {
                assert!(is_valley_free(&t, path), "path {path:?} seed {seed}");
            }
        }
    }

    #[test]
    fn spoof_rate_extremes() {
        let t = topo(3);
        let prop = propagate_routes(&t);
        let all_legit = gen_flows(&t, &prop, 50, 0.0, SpoofPool::default(), 9).unwrap();
        assert!(all_legit.iter().all(|f| f.truth == Truth::Legit));
        let all_spoofed = gen_flows(&t, &prop, 50, 1.0, SpoofPool::default(), 9).unwrap();
        assert!(all_spoofed.iter().all(|f| f.truth == Truth::Spoofed));
    }

    #[test]
    fn spoof_counts_inside_binomial_ci() {
        let t = topo(4);
        let prop = propagate_routes(&t);
        for (rate, seed) in [(0.25, 1u64), (0.5, 2), (0.75, 3)] {
            let n = 2000usize;
            let flows = gen_flows(&t, &prop, n, rate, SpoofPool::default(), seed).unwrap();
            let k = flows.iter().filter(|f| f.truth == Truth::Spoofed).count() as f64;
            // 99% normal-approximation interval.
            let mean = n as f64 * rate;
            let sd = (n as f64 * rate * (1.0 - rate)).sqrt();
            assert!(
                (k - mean).abs() <= 2.576 * sd,
                "rate {rate}: {k} outside CI around {mean}"
            );
        }
    }

    #[test]
    fn legit_flows_source_their_own_prefix_via_a_crossing() {
        let t = topo(5);
        let prop = propagate_routes(&t);
        let flows = gen_flows(&t, &prop, 100, 0.0, SpoofPool::default(), 11).unwrap();
        for lf in &flows {
            let sender = t.owner_of(lf.flow.src).expect("legit source owned");
            let dst_as = t.owner_of(lf.flow.dst).expect("dst owned");
            let path = &prop.best_paths[&(sender, dst_as)];
            assert!(path.contains(&lf.flow.member));
            assert!(t.ixp_members.contains(&lf.flow.member));
        }
    }

    #[test]
    fn spoofed_sources_stay_in_routed_space_by_default() {
        let t = topo(6);
        let prop = propagate_routes(&t);
        let flows = gen_flows(&t, &prop, 200, 1.0, SpoofPool::default(), 13).unwrap();
        for lf in &flows {
            assert!(t.owner_of(lf.flow.src).is_some());
        }
        // Pure function of the seed.
        let again = gen_flows(&t, &prop, 200, 1.0, SpoofPool::default(), 13).unwrap();
        assert_eq!(flows, again);
        assert_ne!(
            flows,
            gen_flows(&t, &prop, 200, 1.0, SpoofPool::default(), 14).unwrap()
        );
    }

    #[test]
    fn spoof_pool_flags_extend_the_pool() {
        let t = topo(7);
        let prop = propagate_routes(&t);
        let pool = SpoofPool {
            include_bogon: true,
            include_unrouted: true,
        };
        let flows = gen_flows(&t, &prop, 300, 1.0, pool, 17).unwrap();
        let bogon = flows.iter().any(|f| match f.flow.src {
            IpAddr::V4(a) => a.octets()[0] == 10,
            _ => false,
        });
        let unrouted = flows.iter().any(|f| match f.flow.src {
            IpAddr::V4(a) => a.octets()[0] == 2,
            _ => false,
        });
        assert!(bogon && unrouted);
    }

    #[test]
    fn drop_visibility_zero_is_identity() {
        let t = topo(8);
        let prop = propagate_routes(&t);
        let dropped = drop_visibility(&prop.table, 0.0, 3).unwrap();
        assert_eq!(dropped, prop.table);
    }

    #[test]
    fn drop_visibility_monotone_in_loss() {
        let t = topo(9);
        let prop = propagate_routes(&t);
        let mut prev_adj = observed_adjacencies(&prop.table);
        for loss in [0.2, 0.4, 0.6, 0.8] {
            let dropped = drop_visibility(&prop.table, loss, 5).unwrap();
            let adj = observed_adjacencies(&dropped);
            assert!(adj.is_subset(&prev_adj), "loss {loss}");
            prev_adj = adj;
        }
    }

    #[test]
    fn dropping_feeds_shrinks_the_table_and_adjacencies() {
        let t = topo(10);
        let prop = propagate_routes(&t);
        let full_origins = origins_for(&prop.table);
        let dropped = drop_visibility(&prop.table, 0.9, 1).unwrap();
        assert!(dropped.len() < prop.table.len());
        assert!(origins_for(&dropped).len() <= full_origins.len());
        let full_adj = observed_adjacencies(&prop.table);
        let dropped_adj = observed_adjacencies(&dropped);
        assert!(dropped_adj.is_subset(&full_adj));
    }

    #[test]
    fn evaluate_counts_confusion_exactly() {
        use TrafficClass::*;
        let truths = [
            Truth::Spoofed,
            Truth::Spoofed,
            Truth::Legit,
            Truth::Legit,
            Truth::Spoofed,
            Truth::Legit,
        ];
        let verdicts = [Invalid, Regular, Invalid, Regular, Bogon, Unrouted];
        let c = evaluate(&truths, &verdicts);
        assert_eq!(c.true_positives, 1);
        assert_eq!(c.false_negatives, 1);
        assert_eq!(c.false_positives, 1);
        assert_eq!(c.true_negatives, 1);
        assert_eq!(c.sanitized(), 4);
    }

    #[test]
    fn degenerate_classifier_bounds() {
        // Everything marked invalid: recall 1, precision = spoof share.
        let truths = [Truth::Spoofed, Truth::Legit, Truth::Legit, Truth::Spoofed];
        let verdicts = [TrafficClass::Invalid; 4];
        let c = evaluate(&truths, &verdicts);
        assert_eq!(c.recall(), Some(1.0));
        assert_eq!(c.precision(), Some(0.5));
        // No invalids at all: precision undefined.
        let verdicts = [TrafficClass::Regular; 4];
        let c = evaluate(&truths, &verdicts);
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), Some(0.0));
    }

    #[test]
    fn full_visibility_zero_spoof_has_no_false_positives() {
        for seed in 0..5 {
            let t = gen_topology(30, 5, 0.08, 0.25, 0.0, seed).unwrap();
            let prop = propagate_routes(&t);
            let flows = gen_flows(&t, &prop, 300, 0.0, SpoofPool::default(), seed).unwrap();
            let adj = observed_adjacencies(&prop.table);
            let edges = visible_relationships(&t.edges, &adj);
            let caida = build_caida(&edges, &t.ixp_members);
            let full = build_full(&edges, &adj, &t.ixp_members);
            let index = build_index(&origins_for(&prop.table), &default_bogons());
            let records: Vec<FlowRecord> = flows.iter().map(|f| f.flow.clone()).collect();
            let truths: Vec<Truth> = flows.iter().map(|f| f.truth).collect();
            let report = classify_stream(&records, &index, &[caida, full]);
            let c = evaluate(&truths, &report.variants[1].verdicts);
            assert_eq!(c.false_positives, 0, "seed {seed}");
            // With complete visibility even the caida cone is clean here.
            let c = evaluate(&truths, &report.variants[0].verdicts);
            assert_eq!(c.false_positives, 0, "seed {seed}");
        }
    }

    #[test]
    fn no_peering_density_makes_full_equal_caida() {
        let t = gen_topology(20, 1, 0.1, 0.0, 0.0, 3).unwrap();
        let prop = propagate_routes(&t);
        let adj = observed_adjacencies(&prop.table);
        let caida = build_caida(&t.edges, &t.ixp_members);
        let full = build_full(&t.edges, &adj, &t.ixp_members);
        for &m in &t.ixp_members {
            assert_eq!(caida.as_cone(m).unwrap(), full.as_cone(m).unwrap());
        }
    }
}
