//! Cone-based spoofing classification for IXP flow data.
//!
//! The pipeline ingests BGP collector dumps and sampled flow records,
//! builds per-member cones (naive prefix cones, CAIDA-style customer
//! cones, and the full cone with transitive peering, each optionally
//! extended across multi-AS organizations), classifies every flow as
//! bogon, unrouted, invalid or regular, and derives the report
//! aggregates. A synthetic-topology harness generates ground-truth
//! traffic under valley-free routing to measure how limited BGP
//! visibility turns legitimate flows into false positives.

pub mod analytics;
pub mod bgp;
pub mod classify;
pub mod cone;
pub mod error;
pub mod flow;
pub mod indicators;
pub mod net;
pub mod pipeline;
pub mod prefix_index;
pub mod synth;

pub use bgp::{
    load_routes, observed_adjacencies, origins_for, parse_route_line, read_route_files, AsPath,
    RouteKind, RouteMessage, RouteTable,
};
pub use classify::{classify_flow, classify_stream, ClassTotals, ClassifiedReport, TrafficClass};
pub use cone::{
    apply_org_extension, build_caida, build_full, build_naive, ConeSet, ConeVariant, OrgMap,
    Relationship, RelationshipEdge,
};
pub use error::{Error, Result};
pub use flow::{parse_flow_line, read_flow_files, serialize_flow_line, upscale, FlowRecord, Proto, TcpFlags};
pub use indicators::{detect_indicators, summarize, IndicatorFlags, IndicatorSummary};
pub use net::{Asn, Family, IpPrefix};
pub use pipeline::{run, Denominator, OutputScope, PipelineConfig, RunSummary};
pub use prefix_index::{
    build_index, default_bogons, judge_source, PrefixIndex, PrefixTrie, SourceVerdict,
};
pub use synth::{
    drop_visibility, evaluate, gen_flows, gen_topology, propagate_routes, visible_relationships,
    Confusion, LabeledFlow, Propagation, SpoofPool, SynthTopology, Truth,
};
