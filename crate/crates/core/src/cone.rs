//! Per-member cone construction: the three cone variants plus the
//! multi-AS organization extension.
//!
//! A cone answers one question for an ingress member: may traffic with
//! this source origin legitimately enter here? The naive variant keeps a
//! prefix set per member; caida and full keep AS sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bgp::RouteTable;
use crate::error::{Error, Result};
use crate::net::{Asn, IpPrefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    /// `a` is a provider of `b`.
    ProviderToCustomer,
    PeerToPeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationshipEdge {
    pub a: Asn,
    pub b: Asn,
    pub rel: Relationship,
}

impl RelationshipEdge {
    pub fn p2c(provider: Asn, customer: Asn) -> RelationshipEdge {
        RelationshipEdge {
            a: provider,
            b: customer,
            rel: Relationship::ProviderToCustomer,
        }
    }

    pub fn p2p(a: Asn, b: Asn) -> RelationshipEdge {
        RelationshipEdge {
            a,
            b,
            rel: Relationship::PeerToPeer,
        }
    }
}

/// Parses a CAIDA serial-1 style relationship file: `as1|as2|rel` with
/// rel -1 (a provider of b) or 0 (peers); `#` comments ignored.
pub fn read_relationship_file(path: &Path) -> Result<Vec<RelationshipEdge>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |field, msg: String| Error::Parse {
            file: Some(path.to_path_buf()),
            line: idx + 1,
            field,
            msg,
        };
        let fields: Vec<&str> = trimmed.split('|').collect();
        if fields.len() != 3 {
            return Err(err(
                "line",
                format!("expected as1|as2|rel, got {} fields", fields.len()),
            ));
        }
        let a = Asn::parse(fields[0]).map_err(|e| err("as1", e))?;
        let b = Asn::parse(fields[1]).map_err(|e| err("as2", e))?;
        if a == b {
            return Err(err("as2", "self relationship".to_string()));
        }
        let rel = match fields[2].trim() {
            "-1" => Relationship::ProviderToCustomer,
            "0" => Relationship::PeerToPeer,
            other => return Err(err("rel", format!("expected -1 or 0, got {other:?}"))),
        };
        edges.push(RelationshipEdge { a, b, rel });
    }
    Ok(edges)
}

/// ASN to organization mapping. Sibling ASes share an organization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgMap {
    asn_to_org: BTreeMap<Asn, String>,
    org_members: BTreeMap<String, BTreeSet<Asn>>,
}

impl OrgMap {
    pub fn new() -> OrgMap {
        OrgMap::default()
    }

    /// Errors if `asn` was already mapped to a different organization.
    pub fn insert(&mut self, asn: Asn, org: &str) -> std::result::Result<(), String> {
        match self.asn_to_org.get(&asn) {
            Some(existing) if existing != org => {
                return Err(format!("AS{asn} mapped to both {existing:?} and {org:?}"))
            }
            _ => {}
        }
        self.asn_to_org.insert(asn, org.to_string());
        self.org_members
            .entry(org.to_string())
            .or_default()
            .insert(asn);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.asn_to_org.is_empty()
    }

    pub fn org_of(&self, asn: Asn) -> Option<&str> {
        self.asn_to_org.get(&asn).map(String::as_str)
    }

    /// All ASes of `asn`'s organization, `asn` included. Unmapped ASes
    /// are their own singleton.
    pub fn siblings(&self, asn: Asn) -> BTreeSet<Asn> {
        match self.asn_to_org.get(&asn) {
            Some(org) => self.org_members[org].clone(),
            None => [asn].into_iter().collect(),
        }
    }
}

/// Parses an org file: `asn|org_id` lines, `#` comments ignored.
pub fn read_org_file(path: &Path) -> Result<OrgMap> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut orgs = OrgMap::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |field, msg: String| Error::Parse {
            file: Some(path.to_path_buf()),
            line: idx + 1,
            field,
            msg,
        };
        let (asn, org) = trimmed
            .split_once('|')
            .ok_or_else(|| err("line", "expected asn|org_id".to_string()))?;
        let asn = Asn::parse(asn).map_err(|e| err("asn", e))?;
        let org = org.trim();
        if org.is_empty() {
            return Err(err("org_id", "empty organization id".to_string()));
        }
        orgs.insert(asn, org).map_err(|e| err("org_id", e))?;
    }
    Ok(orgs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeVariant {
    Naive,
    Caida,
    Full,
}

impl ConeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ConeVariant::Naive => "naive",
            ConeVariant::Caida => "caida",
            ConeVariant::Full => "full",
        }
    }
}

impl std::str::FromStr for ConeVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "naive" => Ok(ConeVariant::Naive),
            "caida" => Ok(ConeVariant::Caida),
            "full" => Ok(ConeVariant::Full),
            other => Err(format!("unknown cone variant {other:?}")),
        }
    }
}

/// Cones for a set of IXP members. Naive cones hold prefixes; caida and
/// full cones hold ASes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSet {
    pub variant: ConeVariant,
    pub org_extended: bool,
    members: BTreeSet<Asn>,
    as_cones: BTreeMap<Asn, BTreeSet<Asn>>,
    prefix_cones: BTreeMap<Asn, BTreeSet<IpPrefix>>,
}

impl ConeSet {
    pub fn members(&self) -> &BTreeSet<Asn> {
        &self.members
    }

    pub fn as_cone(&self, member: Asn) -> Option<&BTreeSet<Asn>> {
        self.as_cones.get(&member)
    }

    pub fn prefix_cone(&self, member: Asn) -> Option<&BTreeSet<IpPrefix>> {
        self.prefix_cones.get(&member)
    }

    /// Label used in report rows: the variant name, with `_org` appended
    /// for extended cones.
    pub fn label(&self) -> String {
        if self.org_extended {
            format!("{}_org", self.variant.as_str())
        } else {
            self.variant.as_str().to_string()
        }
    }

    /// Whether traffic with this matched prefix / origin set may enter
    /// via `member`. Naive cones test the prefix; AS cones accept any
    /// origin inside the cone.
    pub fn contains(
        &self,
        member: Asn,
        matched_prefix: &IpPrefix,
        origins: &BTreeSet<Asn>,
    ) -> Result<bool> {
        if !self.members.contains(&member) {
            return Err(Error::UnknownMember(member));
        }
        Ok(match self.variant {
            ConeVariant::Naive => self.prefix_cones[&member].contains(matched_prefix),
            ConeVariant::Caida | ConeVariant::Full => {
                let cone = &self.as_cones[&member];
                origins.iter().any(|o| cone.contains(o))
            }
        })
    }
}

/// Naive cone: every prefix whose surviving path contains the member.
pub fn build_naive(table: &RouteTable, members: &BTreeSet<Asn>) -> ConeSet {
    let mut prefix_cones: BTreeMap<Asn, BTreeSet<IpPrefix>> =
        members.iter().map(|&m| (m, BTreeSet::new())).collect();
    for ((_, _, prefix), entry) in table.entries() {
        for hop in entry.path.hops() {
            if let Some(cone) = prefix_cones.get_mut(hop) {
                cone.insert(*prefix);
            }
        }
    }
    ConeSet {
        variant: ConeVariant::Naive,
        org_extended: false,
        members: members.clone(),
        as_cones: BTreeMap::new(),
        prefix_cones,
    }
}

/// Customer adjacency in the provider-to-customer direction.
fn customer_adjacency(edges: &[RelationshipEdge]) -> BTreeMap<Asn, Vec<Asn>> {
    let mut down: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
    for e in edges {
        if e.rel == Relationship::ProviderToCustomer {
            down.entry(e.a).or_default().push(e.b);
        }
    }
    down
}

/// All ASes reachable from `seeds` by descending provider→customer edges,
/// seeds included.
fn customer_closure(down: &BTreeMap<Asn, Vec<Asn>>, seeds: &BTreeSet<Asn>) -> BTreeSet<Asn> {
    let mut seen: BTreeSet<Asn> = seeds.clone();
    let mut queue: VecDeque<Asn> = seeds.iter().copied().collect();
    while let Some(asn) = queue.pop_front() {
        if let Some(customers) = down.get(&asn) {
            for &c in customers {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
    }
    seen
}

/// One provider→customer cycle, if any, as a witness path.
fn find_p2c_cycle(down: &BTreeMap<Asn, Vec<Asn>>) -> Option<Vec<Asn>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<Asn, Mark> = BTreeMap::new();
    let mut stack_path: Vec<Asn> = Vec::new();

    fn visit(
        asn: Asn,
        down: &BTreeMap<Asn, Vec<Asn>>,
        marks: &mut BTreeMap<Asn, Mark>,
        path: &mut Vec<Asn>,
    ) -> Option<Vec<Asn>> {
        marks.insert(asn, Mark::Open);
        path.push(asn);
        if let Some(customers) = down.get(&asn) {
            for &c in customers {
                match marks.get(&c) {
                    Some(Mark::Open) => {
                        let start = path.iter().position(|&x| x == c).unwrap();
                        let mut cycle = path[start..].to_vec();
                        cycle.push(c);
                        return Some(cycle);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        if let Some(cycle) = visit(c, down, marks, path) {
                            return Some(cycle);
                        }
                    }
                }
            }
        }
        path.pop();
        marks.insert(asn, Mark::Done);
        None
    }

    for &start in down.keys() {
        if !marks.contains_key(&start) {
            if let Some(cycle) = visit(start, down, &mut marks, &mut stack_path) {
                return Some(cycle);
            }
        }
    }
    None
}

/// CAIDA customer cone: the member plus its transitive customers.
/// Peer edges are not traversed. Cycles are tolerated (reachability stays
/// well-defined) and warned about once.
pub fn build_caida(edges: &[RelationshipEdge], members: &BTreeSet<Asn>) -> ConeSet {
    let down = customer_adjacency(edges);
    if let Some(cycle) = find_p2c_cycle(&down) {
        let witness: Vec<String> = cycle.iter().map(|a| a.to_string()).collect();
        log::warn!(
            "provider-to-customer cycle detected: {}",
            witness.join(" -> ")
        );
    }
    let as_cones = members
        .iter()
        .map(|&m| (m, customer_closure(&down, &[m].into_iter().collect())))
        .collect();
    ConeSet {
        variant: ConeVariant::Caida,
        org_extended: false,
        members: members.clone(),
        as_cones,
        prefix_cones: BTreeMap::new(),
    }
}

/// Full cone: transitive peering over the peer graph, then the union of
/// the reached ASes' customer cones. The peer graph is the declared
/// peer-to-peer edges plus every observed adjacency not already
/// classified as provider-to-customer.
pub fn build_full(
    edges: &[RelationshipEdge],
    adjacencies: &BTreeSet<(Asn, Asn)>,
    members: &BTreeSet<Asn>,
) -> ConeSet {
    let down = customer_adjacency(edges);
    let p2c_pairs: BTreeSet<(Asn, Asn)> = edges
        .iter()
        .filter(|e| e.rel == Relationship::ProviderToCustomer)
        .map(|e| (e.a.min(e.b), e.a.max(e.b)))
        .collect();

    let mut peer_graph: BTreeMap<Asn, BTreeSet<Asn>> = BTreeMap::new();
    let mut add_peer = |a: Asn, b: Asn| {
        peer_graph.entry(a).or_default().insert(b);
        peer_graph.entry(b).or_default().insert(a);
    };
    for e in edges {
        if e.rel == Relationship::PeerToPeer {
            add_peer(e.a, e.b);
        }
    }
    for &(a, b) in adjacencies {
        if !p2c_pairs.contains(&(a.min(b), a.max(b))) {
            add_peer(a, b);
        }
    }

    let as_cones = members
        .iter()
        .map(|&m| {
            // Transitive peering reach, member included.
            let mut reach: BTreeSet<Asn> = [m].into_iter().collect();
            let mut queue: VecDeque<Asn> = [m].into_iter().collect();
            while let Some(asn) = queue.pop_front() {
                if let Some(peers) = peer_graph.get(&asn) {
                    for &p in peers {
                        if reach.insert(p) {
                            queue.push_back(p);
                        }
                    }
                }
            }
            (m, customer_closure(&down, &reach))
        })
        .collect();
    ConeSet {
        variant: ConeVariant::Full,
        org_extended: false,
        members: members.clone(),
        as_cones,
        prefix_cones: BTreeMap::new(),
    }
}

/// Sibling extension: each member's cone becomes the union of its
/// siblings' cones, and every AS in the original cone pulls in its own
/// siblings. Applies to caida/full cones only.
pub fn apply_org_extension(cone: &ConeSet, orgs: &OrgMap) -> Result<ConeSet> {
    if cone.variant == ConeVariant::Naive {
        return Err(Error::OrgExtOnNaive);
    }
    let as_cones = cone
        .as_cones
        .iter()
        .map(|(&m, own)| {
            let mut extended = BTreeSet::new();
            for sibling in orgs.siblings(m) {
                if let Some(c) = cone.as_cones.get(&sibling) {
                    extended.extend(c.iter().copied());
                }
            }
            extended.extend(own.iter().copied());
            for &asn in own {
                extended.extend(orgs.siblings(asn));
            }
            (m, extended)
        })
        .collect();
    Ok(ConeSet {
        variant: cone.variant,
        org_extended: true,
        members: cone.members.clone(),
        as_cones,
        prefix_cones: BTreeMap::new(),
    })
}
