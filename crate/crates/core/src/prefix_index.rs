//! Longest-prefix-match index over routed prefixes plus the bogon list.
//!
//! Source addresses are judged in a fixed order: bogon first (a bogon
//! prefix wins even when a routed announcement covers the address), then
//! longest routed match, then unrouted.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::IpAddr;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{addr_bits, Asn, Family, IpPrefix};

/// Binary trie keyed by prefix bits. One tree per family.
#[derive(Debug, Clone, Default)]
pub struct PrefixTrie<T> {
    v4: Node<T>,
    v6: Node<T>,
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Option<T>,
    children: [Option<Box<Node<T>>>; 2],
}

impl<T> Default for Node<T> {
    fn default() -> Self {
        Node {
            value: None,
            children: [None, None],
        }
    }
}

impl<T> PrefixTrie<T> {
    pub fn new() -> Self {
        PrefixTrie {
            v4: Node::default(),
            v6: Node::default(),
        }
    }

    fn root_mut(&mut self, family: Family) -> &mut Node<T> {
        match family {
            Family::V4 => &mut self.v4,
            Family::V6 => &mut self.v6,
        }
    }

    fn root(&self, family: Family) -> &Node<T> {
        match family {
            Family::V4 => &self.v4,
            Family::V6 => &self.v6,
        }
    }

    /// The value slot for `prefix`, created on demand.
    pub fn entry(&mut self, prefix: &IpPrefix) -> &mut Option<T> {
        let mut node = self.root_mut(prefix.family());
        for i in 0..prefix.len() {
            let branch = prefix.bit(i) as usize;
            node = node.children[branch].get_or_insert_with(Box::default);
        }
        &mut node.value
    }

    /// The longest stored prefix covering `addr`, with its value.
    pub fn longest_match(&self, addr: IpAddr) -> Option<(IpPrefix, &T)> {
        let (family, bits) = addr_bits(addr);
        let mut node = self.root(family);
        let mut best: Option<(u8, &T)> = node.value.as_ref().map(|v| (0, v));
        for depth in 0..family.max_len() {
            let branch = (bits >> (127 - depth) & 1) as usize;
            match &node.children[branch] {
                Some(child) => {
                    node = child;
                    if let Some(v) = &node.value {
                        best = Some((depth + 1, v));
                    }
                }
                None => break,
            }
        }
        best.map(|(len, v)| (IpPrefix::from_raw(family, bits, len), v))
    }
}

/// The built-in v4 bogon list: RFC 1918, RFC 5735 and RFC 6598 space.
pub fn default_bogons_v4() -> Vec<IpPrefix> {
    [
        // RFC 1918
        "10.0.0.0/8",
        "172.16.0.0/12",
        "192.168.0.0/16",
        // RFC 5735
        "0.0.0.0/8",
        "127.0.0.0/8",
        "169.254.0.0/16",
        "192.0.0.0/24",
        "192.0.2.0/24",
        "198.18.0.0/15",
        "198.51.100.0/24",
        "203.0.113.0/24",
        "224.0.0.0/4",
        "240.0.0.0/4",
        "255.255.255.255/32",
        // RFC 6598
        "100.64.0.0/10",
    ]
    .iter()
    .map(|s| s.parse().expect("static list parses"))
    .collect()
}

/// v6 bogons: everything outside global unicast 2000::/3.
pub fn default_bogons_v6() -> Vec<IpPrefix> {
    ["::/3", "4000::/2", "8000::/1"]
        .iter()
        .map(|s| s.parse().expect("static list parses"))
        .collect()
}

pub fn default_bogons() -> Vec<IpPrefix> {
    let mut v = default_bogons_v4();
    v.extend(default_bogons_v6());
    v
}

/// Reads a bogon override file: one prefix per line, `#` comments ignored.
pub fn read_bogon_file(path: &Path) -> Result<Vec<IpPrefix>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let prefix: IpPrefix = line.parse().map_err(|e| Error::Parse {
            file: Some(path.to_path_buf()),
            line: idx + 1,
            field: "prefix",
            msg: e,
        })?;
        out.push(prefix);
    }
    Ok(out)
}

/// Immutable lookup structure answering bogon/unrouted/routed queries.
#[derive(Debug, Clone)]
pub struct PrefixIndex {
    routed: PrefixTrie<BTreeSet<Asn>>,
    bogons: PrefixTrie<()>,
    bogon_list: Vec<IpPrefix>,
}

/// Verdict on a source address. Origins borrow from the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceVerdict<'a> {
    Bogon,
    Unrouted,
    Routed {
        matched_prefix: IpPrefix,
        origins: &'a BTreeSet<Asn>,
    },
}

/// Builds the index. Default routes (length 0) are dropped: keeping them
/// would make every address routed and erase the unrouted category.
/// Duplicate prefixes union their origin sets.
pub fn build_index(
    origins: &BTreeMap<IpPrefix, BTreeSet<Asn>>,
    bogons: &[IpPrefix],
) -> PrefixIndex {
    let mut routed = PrefixTrie::new();
    for (prefix, asns) in origins {
        if prefix.is_default() {
            log::debug!("ignoring default route {prefix}");
            continue;
        }
        routed
            .entry(prefix)
            .get_or_insert_with(BTreeSet::new)
            .extend(asns.iter().copied());
    }
    let mut bogon_trie = PrefixTrie::new();
    for prefix in bogons {
        *bogon_trie.entry(prefix) = Some(());
    }
    PrefixIndex {
        routed,
        bogons: bogon_trie,
        bogon_list: bogons.to_vec(),
    }
}

/// Classifies one source address: bogon, then longest routed match, then
/// unrouted.
pub fn judge_source(index: &PrefixIndex, addr: IpAddr) -> SourceVerdict<'_> {
    if index.bogons.longest_match(addr).is_some() {
        return SourceVerdict::Bogon;
    }
    match index.routed.longest_match(addr) {
        Some((matched_prefix, origins)) => SourceVerdict::Routed {
            matched_prefix,
            origins,
        },
        None => SourceVerdict::Unrouted,
    }
}

impl PrefixIndex {
    pub fn bogon_list(&self) -> &[IpPrefix] {
        &self.bogon_list
    }

    pub fn is_bogon(&self, addr: IpAddr) -> bool {
        self.bogons.longest_match(addr).is_some()
    }
}
