//! Flow classification: bogon, unrouted, invalid or regular.
//!
//! The test order is fixed. Sanitization (bogon, then unrouted) runs
//! before any cone logic, so those two categories are identical across
//! cone variants; the cone check then splits the remainder into regular
//! and invalid.

use rayon::prelude::*;
use serde::Serialize;

use crate::cone::{ConeSet, ConeVariant};
use crate::flow::{upscale, FlowRecord};
use crate::prefix_index::{judge_source, PrefixIndex, SourceVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    Bogon,
    Unrouted,
    Invalid,
    Regular,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 4] = [
        TrafficClass::Bogon,
        TrafficClass::Unrouted,
        TrafficClass::Invalid,
        TrafficClass::Regular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Bogon => "bogon",
            TrafficClass::Unrouted => "unrouted",
            TrafficClass::Invalid => "invalid",
            TrafficClass::Regular => "regular",
        }
    }

    fn index(self) -> usize {
        match self {
            TrafficClass::Bogon => 0,
            TrafficClass::Unrouted => 1,
            TrafficClass::Invalid => 2,
            TrafficClass::Regular => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub bytes: u64,
    pub packets: u64,
    pub flows: u64,
}

impl Counts {
    fn add(&mut self, bytes: u64, packets: u64) {
        self.bytes += bytes;
        self.packets += packets;
        self.flows += 1;
    }
}

/// Raw and sampling-upscaled counters for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub raw: Counts,
    pub upscaled: Counts,
}

/// Aggregates per class; the four classes partition the stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTotals {
    classes: [ClassCounts; 4],
}

impl ClassTotals {
    pub fn get(&self, class: TrafficClass) -> &ClassCounts {
        &self.classes[class.index()]
    }

    fn record(&mut self, class: TrafficClass, flow: &FlowRecord) {
        let slot = &mut self.classes[class.index()];
        slot.raw.add(flow.bytes, flow.packets);
        let (bytes, packets) = upscale(flow);
        slot.upscaled.bytes += bytes;
        slot.upscaled.packets += packets;
        slot.upscaled.flows += flow.sample_rate;
    }

    /// Sum over the four classes.
    pub fn stream_total(&self) -> ClassCounts {
        let mut total = ClassCounts::default();
        for c in &self.classes {
            total.raw.bytes += c.raw.bytes;
            total.raw.packets += c.raw.packets;
            total.raw.flows += c.raw.flows;
            total.upscaled.bytes += c.upscaled.bytes;
            total.upscaled.packets += c.upscaled.packets;
            total.upscaled.flows += c.upscaled.flows;
        }
        total
    }
}

/// Classifies one flow against one cone. An ingress member the cone was
/// not built for falls back to the degenerate cone: `{member}` for AS
/// cones, the empty set for naive.
pub fn classify_flow(flow: &FlowRecord, index: &PrefixIndex, cone: &ConeSet) -> TrafficClass {
    match judge_source(index, flow.src) {
        SourceVerdict::Bogon => TrafficClass::Bogon,
        SourceVerdict::Unrouted => TrafficClass::Unrouted,
        SourceVerdict::Routed {
            matched_prefix,
            origins,
        } => {
            let inside = match cone.contains(flow.member, &matched_prefix, origins) {
                Ok(inside) => inside,
                Err(_) => match cone.variant {
                    ConeVariant::Naive => false,
                    ConeVariant::Caida | ConeVariant::Full => origins.contains(&flow.member),
                },
            };
            if inside {
                TrafficClass::Regular
            } else {
                TrafficClass::Invalid
            }
        }
    }
}

/// One cone variant's verdicts, aligned with the input flow order.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub label: String,
    pub variant: ConeVariant,
    pub org_extended: bool,
    pub verdicts: Vec<TrafficClass>,
    pub totals: ClassTotals,
}

/// Full classification output for a stream.
#[derive(Debug, Clone)]
pub struct ClassifiedReport {
    pub variants: Vec<VariantReport>,
}

/// Classifies every flow under every cone. Flows are processed in
/// parallel; verdict order follows input order, so results do not depend
/// on the worker count.
pub fn classify_stream(
    flows: &[FlowRecord],
    index: &PrefixIndex,
    cones: &[ConeSet],
) -> ClassifiedReport {
    let variants = cones
        .iter()
        .map(|cone| {
            let verdicts: Vec<TrafficClass> = flows
                .par_iter()
                .map(|flow| classify_flow(flow, index, cone))
                .collect();
            let mut totals = ClassTotals::default();
            for (flow, &class) in flows.iter().zip(&verdicts) {
                totals.record(class, flow);
            }
            VariantReport {
                label: cone.label(),
                variant: cone.variant,
                org_extended: cone.org_extended,
                verdicts,
                totals,
            }
        })
        .collect();
    ClassifiedReport { variants }
}
