//! BGP dump ingestion: parse announce/withdraw lines from collector dumps
//! and fold them into the surviving route table for an analysis window.
//!
//! The interchange format is one pipe-separated message per line:
//!
//! ```text
//! timestamp|collector|peer_asn|kind|prefix|as_path
//! ```
//!
//! `kind` is `A` or `W`; `as_path` is space-separated and empty for
//! withdraws. `#` starts a comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{at_line, field_err, Error, Result};
use crate::net::{Asn, IpPrefix};

/// An AS path with prepending collapsed. Nonempty; the last hop originates
/// the prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AsPath(Vec<Asn>);

impl AsPath {
    /// Collapses consecutive duplicates (AS prepending). Errors on an
    /// empty hop list.
    pub fn new(hops: Vec<Asn>) -> std::result::Result<AsPath, String> {
        if hops.is_empty() {
            return Err("empty AS path".to_string());
        }
        let mut collapsed: Vec<Asn> = Vec::with_capacity(hops.len());
        for hop in hops {
            if collapsed.last() != Some(&hop) {
                collapsed.push(hop);
            }
        }
        Ok(AsPath(collapsed))
    }

    pub fn hops(&self) -> &[Asn] {
        &self.0
    }

    /// The AS that originated the announcement.
    pub fn origin(&self) -> Asn {
        *self.0.last().expect("paths are nonempty")
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.0.contains(&asn)
    }
}

impl std::fmt::Display for AsPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for hop in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{hop}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteKind {
    Announce,
    Withdraw,
}

/// One parsed message from a collector dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteMessage {
    pub timestamp: i64,
    pub collector: String,
    pub peer: Asn,
    pub kind: RouteKind,
    pub prefix: IpPrefix,
    /// Present iff kind is Announce.
    pub path: Option<AsPath>,
}

/// Parses one dump line. `line_no` is used in error messages only.
pub fn parse_route_line(line: &str, line_no: usize) -> Result<RouteMessage> {
    let inner = |line: &str| -> Result<RouteMessage> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 6 {
            return Err(field_err(
                "line",
                format!("expected 6 pipe-separated fields, got {}", fields.len()),
            ));
        }
        let timestamp: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| field_err("timestamp", format!("unparsable timestamp {:?}", fields[0])))?;
        let collector = fields[1].trim();
        if collector.is_empty() {
            return Err(field_err("collector", "empty collector id"));
        }
        let peer = Asn::parse(fields[2]).map_err(|e| field_err("peer_asn", e))?;
        let kind = match fields[3].trim() {
            "A" => RouteKind::Announce,
            "W" => RouteKind::Withdraw,
            other => {
                return Err(field_err(
                    "kind",
                    format!("expected A or W, got {other:?}"),
                ))
            }
        };
        let prefix: IpPrefix = fields[4]
            .parse()
            .map_err(|e| field_err("prefix", e))?;
        let path_field = fields[5].trim();
        let path = match kind {
            RouteKind::Withdraw => {
                if !path_field.is_empty() {
                    return Err(field_err("as_path", "withdraw carries an AS path"));
                }
                None
            }
            RouteKind::Announce => {
                if path_field.is_empty() {
                    return Err(field_err("as_path", "announce with empty AS path"));
                }
                let mut hops = Vec::new();
                for tok in path_field.split_whitespace() {
                    if tok.starts_with('{') {
                        return Err(Error::AsSetPath {
                            file: None,
                            line: 0,
                        });
                    }
                    hops.push(Asn::parse(tok).map_err(|e| field_err("as_path", e))?);
                }
                Some(AsPath::new(hops).map_err(|e| field_err("as_path", e))?)
            }
        };
        Ok(RouteMessage {
            timestamp,
            collector: collector.to_string(),
            peer,
            kind,
            prefix,
            path,
        })
    };
    inner(line).map_err(|e| at_line(e, line_no))
}

/// Parse counters that do not abort the run.
#[derive(Debug, Default, Clone, Copy)]
pub struct ParseStats {
    /// Messages dropped because the path contained an AS set.
    pub as_set_skipped: usize,
}

/// Reads dump files in order. Lines within a file parse in parallel;
/// message order is preserved. AS-set messages are counted and dropped.
pub fn read_route_files<P: AsRef<Path>>(paths: &[P]) -> Result<(Vec<RouteMessage>, ParseStats)> {
    let mut messages = Vec::new();
    let mut stats = ParseStats::default();
    for path in paths {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed: Vec<Option<Result<RouteMessage>>> = text
            .lines()
            .enumerate()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(idx, line)| {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    return None;
                }
                Some(parse_route_line(line, idx + 1))
            })
            .collect();
        for item in parsed {
            match item {
                None => {}
                Some(Ok(msg)) => messages.push(msg),
                Some(Err(e)) if e.is_as_set() => stats.as_set_skipped += 1,
                Some(Err(e)) => return Err(e.with_file(path)),
            }
        }
    }
    if stats.as_set_skipped > 0 {
        log::warn!(
            "skipped {} message(s) with AS-set path segments",
            stats.as_set_skipped
        );
    }
    Ok((messages, stats))
}

/// Key identifying one peer's view of one prefix.
pub type FeedKey = (String, Asn);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub timestamp: i64,
    pub path: AsPath,
}

/// The surviving announcements for a window, keyed by
/// (collector, peer, prefix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTable {
    entries: BTreeMap<(String, Asn, IpPrefix), RouteEntry>,
    pub window: (i64, i64),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Survivor {
    Announced,
    Withdrawn,
}

/// Folds messages into the surviving table. Per key, the latest in-window
/// message decides; an announce wins a timestamp tie against a withdraw.
/// Deterministic for any message order that preserves per-key order.
pub fn load_routes<I>(messages: I, window: (i64, i64)) -> RouteTable
where
    I: IntoIterator<Item = RouteMessage>,
{
    let mut state: BTreeMap<(String, Asn, IpPrefix), (i64, Survivor, Option<AsPath>)> =
        BTreeMap::new();
    for msg in messages {
        if msg.timestamp < window.0 || msg.timestamp > window.1 {
            continue;
        }
        let rank = |s: Survivor| match s {
            Survivor::Withdrawn => 0u8,
            Survivor::Announced => 1u8,
        };
        let incoming = match msg.kind {
            RouteKind::Announce => Survivor::Announced,
            RouteKind::Withdraw => Survivor::Withdrawn,
        };
        let key = (msg.collector, msg.peer, msg.prefix);
        let replace = match state.get(&key) {
            None => true,
            Some((ts, cur, _)) => (msg.timestamp, rank(incoming)) >= (*ts, rank(*cur)),
        };
        if replace {
            state.insert(key, (msg.timestamp, incoming, msg.path));
        }
    }
    let entries = state
        .into_iter()
        .filter_map(|(key, (timestamp, survivor, path))| match survivor {
            Survivor::Announced => Some((
                key,
                RouteEntry {
                    timestamp,
                    path: path.expect("announce carries a path"),
                },
            )),
            Survivor::Withdrawn => None,
        })
        .collect();
    RouteTable { entries, window }
}

impl RouteTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(String, Asn, IpPrefix), &RouteEntry)> {
        self.entries.iter()
    }

    /// Distinct (collector, peer) vantage feeds, sorted.
    pub fn feeds(&self) -> Vec<FeedKey> {
        let mut feeds: Vec<FeedKey> = self
            .entries
            .keys()
            .map(|(c, p, _)| (c.clone(), *p))
            .collect();
        feeds.dedup();
        feeds
    }

    /// Drops every entry whose feed is not in `keep`.
    pub fn retain_feeds(&self, keep: &std::collections::BTreeSet<FeedKey>) -> RouteTable {
        let entries = self
            .entries
            .iter()
            .filter(|((c, p, _), _)| keep.contains(&(c.clone(), *p)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        RouteTable {
            entries,
            window: self.window,
        }
    }

    /// Re-emits the table in the dump line format, sorted by key.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for ((collector, peer, prefix), entry) in &self.entries {
            out.push_str(&format!(
                "{}|{}|{}|A|{}|{}\n",
                entry.timestamp, collector, peer, prefix, entry.path
            ));
        }
        out
    }
}

/// Every unordered pair of ASNs adjacent on a surviving path.
pub fn observed_adjacencies(table: &RouteTable) -> std::collections::BTreeSet<(Asn, Asn)> {
    let mut pairs = std::collections::BTreeSet::new();
    for (_, entry) in table.entries() {
        for win in entry.path.hops().windows(2) {
            let (a, b) = (win[0], win[1]);
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    pairs
}

/// Origin AS sets per announced prefix.
pub fn origins_for(table: &RouteTable) -> BTreeMap<IpPrefix, std::collections::BTreeSet<Asn>> {
    let mut origins: BTreeMap<IpPrefix, std::collections::BTreeSet<Asn>> = BTreeMap::new();
    for ((_, _, prefix), entry) in table.entries() {
        origins.entry(*prefix).or_default().insert(entry.path.origin());
    }
    origins
}
