//! Addressing primitives: AS numbers and CIDR prefixes.
//!
//! Prefixes are kept in canonical form (host bits zeroed) and stored
//! left-aligned in a `u128` so that v4 and v6 share one bit-walking
//! representation. The two families never compare equal and sort v4-first.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::field_err;

/// An autonomous system number. Always nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl Asn {
    pub fn parse(s: &str) -> Result<Asn, String> {
        let n: u32 = s
            .trim()
            .parse()
            .map_err(|_| format!("unparsable ASN {s:?}"))?;
        if n == 0 {
            return Err("ASN must be nonzero".to_string());
        }
        Ok(Asn(n))
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub fn max_len(self) -> u8 {
        match self {
            Family::V4 => 32,
            Family::V6 => 128,
        }
    }
}

/// A canonical CIDR prefix. Bits beyond `len` are zero.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IpPrefix {
    family: Family,
    /// Network bits, left-aligned (v4 occupies the top 32 bits).
    bits: u128,
    len: u8,
}

/// Left-align an address into the shared 128-bit space.
pub(crate) fn addr_bits(addr: IpAddr) -> (Family, u128) {
    match addr {
        IpAddr::V4(a) => (Family::V4, (u32::from(a) as u128) << 96),
        IpAddr::V6(a) => (Family::V6, u128::from(a)),
    }
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - len)
    }
}

impl IpPrefix {
    /// Builds a prefix from any address in it; host bits are zeroed.
    pub fn new(addr: IpAddr, len: u8) -> Result<IpPrefix, String> {
        let (family, bits) = addr_bits(addr);
        if len > family.max_len() {
            return Err(format!(
                "prefix length {len} exceeds {} for this family",
                family.max_len()
            ));
        }
        Ok(IpPrefix {
            family,
            bits: bits & mask(len),
            len,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_default(&self) -> bool {
        self.len == 0
    }

    /// The network address.
    pub fn addr(&self) -> IpAddr {
        match self.family {
            Family::V4 => IpAddr::V4(Ipv4Addr::from((self.bits >> 96) as u32)),
            Family::V6 => IpAddr::V6(Ipv6Addr::from(self.bits)),
        }
    }

    pub fn contains(&self, addr: IpAddr) -> bool {
        let (family, bits) = addr_bits(addr);
        family == self.family && bits & mask(self.len) == self.bits
    }

    /// True iff every address of `other` is inside `self`.
    pub fn covers(&self, other: &IpPrefix) -> bool {
        self.family == other.family
            && self.len <= other.len
            && other.bits & mask(self.len) == self.bits
    }

    /// Bit `i` of the network part, 0-indexed from the most significant bit.
    pub(crate) fn bit(&self, i: u8) -> bool {
        self.bits >> (127 - i) & 1 == 1
    }

    pub(crate) fn from_raw(family: Family, bits: u128, len: u8) -> IpPrefix {
        IpPrefix {
            family,
            bits: bits & mask(len),
            len,
        }
    }

    /// First address covered by the prefix.
    pub fn first_addr(&self) -> IpAddr {
        self.addr()
    }

    /// Last address covered by the prefix.
    pub fn last_addr(&self) -> IpAddr {
        let last = self.bits | !mask(self.len);
        match self.family {
            Family::V4 => IpAddr::V4(Ipv4Addr::from((last >> 96) as u32)),
            Family::V6 => IpAddr::V6(Ipv6Addr::from(last)),
        }
    }
}

impl FromStr for IpPrefix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| format!("prefix {s:?} missing '/'"))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| format!("unparsable address {addr:?}"))?;
        let len: u8 = len
            .parse()
            .map_err(|_| format!("unparsable prefix length {len:?}"))?;
        IpPrefix::new(addr, len)
    }
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr(), self.len)
    }
}

impl fmt::Debug for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for IpPrefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IpPrefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Parses one address, reporting the offending field on failure.
pub fn parse_addr(field: &'static str, s: &str) -> Result<IpAddr, crate::error::Error> {
    s.trim()
        .parse()
        .map_err(|_| field_err(field, format!("unparsable address {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_host_bits() {
        let p: IpPrefix = "203.0.113.77/24".parse().unwrap();
        assert_eq!(p.to_string(), "203.0.113.0/24");
        assert!(p.contains("203.0.113.200".parse().unwrap()));
        assert!(!p.contains("203.0.114.1".parse().unwrap()));
    }

    #[test]
    fn rejects_overlong_lengths() {
        assert!("10.0.0.0/33".parse::<IpPrefix>().is_err());
        assert!("::/129".parse::<IpPrefix>().is_err());
        assert!("2001:db8::/128".parse::<IpPrefix>().is_ok());
    }

    #[test]
    fn families_never_match() {
        let v4: IpPrefix = "0.0.0.0/0".parse().unwrap();
        assert!(!v4.contains("::1".parse().unwrap()));
    }

    #[test]
    fn boundary_addresses() {
        let p: IpPrefix = "198.18.0.0/15".parse().unwrap();
        assert_eq!(p.first_addr().to_string(), "198.18.0.0");
        assert_eq!(p.last_addr().to_string(), "198.19.255.255");
        assert!(p.contains(p.first_addr()));
        assert!(p.contains(p.last_addr()));
    }

    #[test]
    fn covers_is_reflexive_and_nesting() {
        let wide: IpPrefix = "11.2.0.0/16".parse().unwrap();
        let narrow: IpPrefix = "11.2.3.0/24".parse().unwrap();
        assert!(wide.covers(&wide));
        assert!(wide.covers(&narrow));
        assert!(!narrow.covers(&wide));
    }

    #[test]
    fn asn_zero_rejected() {
        assert!(Asn::parse("0").is_err());
        assert!(Asn::parse("64500").is_ok());
        assert!(Asn::parse("4200000000").is_ok());
    }
}
