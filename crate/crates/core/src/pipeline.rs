//! End-to-end pipeline: read inputs, build cones, classify, and write
//! the report files. Output is byte-identical for identical inputs and
//! independent of the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analytics::{
    member_ccdf_csv, member_fractions, member_fractions_csv, size_cdf, size_cdf_csv, time_series,
    timeseries_csv, traffic_mix, traffic_mix_csv, validate_mix_config, TrafficMixConfig, Weight,
};
use crate::bgp::{load_routes, observed_adjacencies, origins_for, read_route_files, RouteTable};
use crate::classify::{classify_stream, ClassTotals, ClassifiedReport, TrafficClass};
use crate::cone::{
    apply_org_extension, build_caida, build_full, build_naive, read_org_file,
    read_relationship_file, ConeSet, ConeVariant, OrgMap, RelationshipEdge,
};
use crate::error::{Error, Result};
use crate::flow::{read_flow_files, FlowRecord};
use crate::indicators::{summaries_to_csv, summarize};
use crate::net::Asn;
use crate::prefix_index::{build_index, default_bogons, read_bogon_file};

/// Denominator for the invalid/regular share rows: the whole stream, or
/// only traffic that survived sanitization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    Total,
    Sanitized,
}

impl std::str::FromStr for Denominator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "total" => Ok(Denominator::Total),
            "sanitized" => Ok(Denominator::Sanitized),
            other => Err(format!("unknown denominator {other:?}")),
        }
    }
}

/// Which files a run emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputScope {
    /// Totals and verdicts only.
    Classify,
    /// Everything: totals, verdicts, indicators, analytics.
    Report,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub route_files: Vec<PathBuf>,
    pub relationship_file: Option<PathBuf>,
    pub org_file: Option<PathBuf>,
    pub flow_files: Vec<PathBuf>,
    pub members_file: Option<PathBuf>,
    pub window: (i64, i64),
    pub variants: Vec<ConeVariant>,
    pub org_ext: bool,
    pub out_dir: PathBuf,
    pub bogon_file: Option<PathBuf>,
    pub denominator: Denominator,
    pub weight: Weight,
    pub ephemeral_min: u16,
    pub udp_ports: Vec<u16>,
    pub tcp_ports: Vec<u16>,
    pub bin_width: i64,
    pub scale: Option<f64>,
    pub workers: Option<usize>,
    pub scope: OutputScope,
}

impl PipelineConfig {
    /// A report-scope config with the documented defaults.
    pub fn new(
        route_files: Vec<PathBuf>,
        flow_files: Vec<PathBuf>,
        window: (i64, i64),
        variants: Vec<ConeVariant>,
        out_dir: PathBuf,
    ) -> PipelineConfig {
        PipelineConfig {
            route_files,
            relationship_file: None,
            org_file: None,
            flow_files,
            members_file: None,
            window,
            variants,
            org_ext: false,
            out_dir,
            bogon_file: None,
            denominator: Denominator::Total,
            weight: Weight::Packets,
            ephemeral_min: crate::analytics::DEFAULT_EPHEMERAL_MIN,
            udp_ports: crate::analytics::DEFAULT_UDP_PORTS.to_vec(),
            tcp_ports: crate::analytics::DEFAULT_TCP_PORTS.to_vec(),
            bin_width: 3600,
            scale: None,
            workers: None,
            scope: OutputScope::Report,
        }
    }
}

/// Validates the configuration before touching any input data.
pub fn validate(config: &PipelineConfig) -> Result<()> {
    let fail = |msg: String| Err(Error::Config(msg));
    if config.variants.is_empty() {
        return fail("select at least one cone variant".to_string());
    }
    if config.route_files.is_empty() {
        return fail("no route files given".to_string());
    }
    if config.flow_files.is_empty() {
        return fail("no flow files given".to_string());
    }
    if config.window.0 > config.window.1 {
        return fail(format!(
            "window start {} after end {}",
            config.window.0, config.window.1
        ));
    }
    let needs_relationships = config
        .variants
        .iter()
        .any(|v| matches!(v, ConeVariant::Caida | ConeVariant::Full));
    if needs_relationships && config.relationship_file.is_none() {
        return fail("caida/full cones need --relationships".to_string());
    }
    if config.org_ext {
        if config.org_file.is_none() {
            return fail("--org-ext needs --orgs".to_string());
        }
        if !needs_relationships {
            return fail("org extension requires a caida or full cone".to_string());
        }
    }
    if config.bin_width <= 0 {
        return fail(format!("bin width must be positive, got {}", config.bin_width));
    }
    validate_mix_config(&TrafficMixConfig {
        udp_ports: config.udp_ports.clone(),
        tcp_ports: config.tcp_ports.clone(),
        ephemeral_min: config.ephemeral_min,
    })
    .map_err(Error::Config)?;
    let mut inputs: Vec<&PathBuf> = Vec::new();
    inputs.extend(&config.route_files);
    inputs.extend(&config.flow_files);
    inputs.extend(&config.relationship_file);
    inputs.extend(&config.org_file);
    inputs.extend(&config.members_file);
    inputs.extend(&config.bogon_file);
    for path in inputs {
        if !path.is_file() {
            return fail(format!("input file not found: {}", path.display()));
        }
    }
    Ok(())
}

/// Reads a members file: one ASN per line, `#` comments ignored.
pub fn read_members_file(path: &Path) -> Result<BTreeSet<Asn>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut members = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        members.insert(Asn::parse(line).map_err(|e| Error::Parse {
            file: Some(path.to_path_buf()),
            line: idx + 1,
            field: "member",
            msg: e,
        })?);
    }
    Ok(members)
}

/// Builds the selected cones in variant order; with `org_ext` each
/// caida/full cone is followed by its org-extended version.
pub fn build_cones(
    table: &RouteTable,
    edges: &[RelationshipEdge],
    orgs: &OrgMap,
    members: &BTreeSet<Asn>,
    variants: &[ConeVariant],
    org_ext: bool,
) -> Result<Vec<ConeSet>> {
    let adjacencies = observed_adjacencies(table);
    let mut cones = Vec::new();
    let mut seen = BTreeSet::new();
    for &variant in variants {
        if !seen.insert(variant) {
            continue;
        }
        let cone = match variant {
            ConeVariant::Naive => build_naive(table, members),
            ConeVariant::Caida => build_caida(edges, members),
            ConeVariant::Full => build_full(edges, &adjacencies, members),
        };
        let extended = (org_ext && variant != ConeVariant::Naive)
            .then(|| apply_org_extension(&cone, orgs))
            .transpose()?;
        cones.push(cone);
        cones.extend(extended);
    }
    Ok(cones)
}

pub fn cones_to_json(cones: &[ConeSet]) -> String {
    serde_json::to_string_pretty(cones).expect("cone sets serialize")
}

#[derive(Serialize)]
struct SharePair {
    raw_bytes_pct: f64,
    raw_packets_pct: f64,
    upscaled_bytes_pct: f64,
    upscaled_packets_pct: f64,
}

#[derive(Serialize)]
struct ClassRow {
    raw: crate::classify::Counts,
    upscaled: crate::classify::Counts,
    #[serde(flatten)]
    shares: SharePair,
}

#[derive(Serialize)]
struct TotalsDoc {
    window: WindowDoc,
    denominator: Denominator,
    stream: StreamDoc,
    variants: BTreeMap<String, BTreeMap<&'static str, ClassRow>>,
}

#[derive(Serialize)]
struct WindowDoc {
    start: i64,
    end: i64,
}

#[derive(Serialize)]
struct StreamDoc {
    raw: crate::classify::Counts,
    upscaled: crate::classify::Counts,
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64 * 100.0
    }
}

/// Renders the totals document. Under the sanitized denominator the
/// invalid/regular rows are shares of post-sanitization traffic while
/// bogon/unrouted stay relative to the whole stream.
pub fn totals_json(
    window: (i64, i64),
    denominator: Denominator,
    report: &ClassifiedReport,
) -> String {
    let empty = ClassTotals::default();
    let stream = report
        .variants
        .first()
        .map(|v| &v.totals)
        .unwrap_or(&empty)
        .stream_total();
    let mut variants = BTreeMap::new();
    for v in &report.variants {
        let sanitized_raw_bytes = stream.raw.bytes
            - v.totals.get(TrafficClass::Bogon).raw.bytes
            - v.totals.get(TrafficClass::Unrouted).raw.bytes;
        let sanitized_raw_packets = stream.raw.packets
            - v.totals.get(TrafficClass::Bogon).raw.packets
            - v.totals.get(TrafficClass::Unrouted).raw.packets;
        let sanitized_up_bytes = stream.upscaled.bytes
            - v.totals.get(TrafficClass::Bogon).upscaled.bytes
            - v.totals.get(TrafficClass::Unrouted).upscaled.bytes;
        let sanitized_up_packets = stream.upscaled.packets
            - v.totals.get(TrafficClass::Bogon).upscaled.packets
            - v.totals.get(TrafficClass::Unrouted).upscaled.packets;
        let mut rows = BTreeMap::new();
        for class in TrafficClass::ALL {
            let counts = v.totals.get(class);
            let cone_row = matches!(class, TrafficClass::Invalid | TrafficClass::Regular);
            let (db, dp, dub, dup) = match denominator {
                Denominator::Sanitized if cone_row => (
                    sanitized_raw_bytes,
                    sanitized_raw_packets,
                    sanitized_up_bytes,
                    sanitized_up_packets,
                ),
                _ => (
                    stream.raw.bytes,
                    stream.raw.packets,
                    stream.upscaled.bytes,
                    stream.upscaled.packets,
                ),
            };
            rows.insert(
                class.as_str(),
                ClassRow {
                    raw: counts.raw,
                    upscaled: counts.upscaled,
                    shares: SharePair {
                        raw_bytes_pct: pct(counts.raw.bytes, db),
                        raw_packets_pct: pct(counts.raw.packets, dp),
                        upscaled_bytes_pct: pct(counts.upscaled.bytes, dub),
                        upscaled_packets_pct: pct(counts.upscaled.packets, dup),
                    },
                },
            );
        }
        variants.insert(v.label.clone(), rows);
    }
    let doc = TotalsDoc {
        window: WindowDoc {
            start: window.0,
            end: window.1,
        },
        denominator,
        stream: StreamDoc {
            raw: stream.raw,
            upscaled: stream.upscaled,
        },
        variants,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("totals serialize");
    s.push('\n');
    s
}

/// `flow_line_no,variant,class`; the flow number is the 1-based record
/// ordinal across the concatenated input stream.
pub fn verdicts_csv(report: &ClassifiedReport, n_flows: usize) -> String {
    let mut out = String::from("flow_line_no,variant,class\n");
    for i in 0..n_flows {
        for v in &report.variants {
            out.push_str(&format!("{},{},{}\n", i + 1, v.label, v.verdicts[i].as_str()));
        }
    }
    out
}

/// What a finished run produced, for callers that want the numbers
/// without re-reading the files.
#[derive(Debug)]
pub struct RunSummary {
    pub labels: Vec<String>,
    pub totals: Vec<ClassTotals>,
    pub flows: usize,
    pub members: BTreeSet<Asn>,
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| Error::Io { path, source })
}

/// Runs the pipeline and writes the output files.
pub fn run(config: &PipelineConfig) -> Result<RunSummary> {
    validate(config)?;
    match config.workers {
        None => run_inner(config),
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(|| run_inner(config)),
    }
}

fn run_inner(config: &PipelineConfig) -> Result<RunSummary> {
    let (messages, _stats) = read_route_files(&config.route_files)?;
    let table = load_routes(messages, config.window);
    let bogons = match &config.bogon_file {
        Some(path) => read_bogon_file(path)?,
        None => default_bogons(),
    };
    let index = build_index(&origins_for(&table), &bogons);
    let edges = match &config.relationship_file {
        Some(path) => read_relationship_file(path)?,
        None => Vec::new(),
    };
    let orgs = match &config.org_file {
        Some(path) => read_org_file(path)?,
        None => OrgMap::new(),
    };
    let flows = read_flow_files(&config.flow_files)?;
    let members = match &config.members_file {
        Some(path) => read_members_file(path)?,
        None => flows.iter().map(|f| f.member).collect(),
    };
    let cones = build_cones(&table, &edges, &orgs, &members, &config.variants, config.org_ext)?;
    let report = classify_stream(&flows, &index, &cones);

    fs::create_dir_all(&config.out_dir).map_err(|source| Error::Io {
        path: config.out_dir.clone(),
        source,
    })?;
    write_out(
        &config.out_dir,
        "totals.json",
        &totals_json(config.window, config.denominator, &report),
    )?;
    write_out(&config.out_dir, "verdicts.csv", &verdicts_csv(&report, flows.len()))?;

    if config.scope == OutputScope::Report {
        write_report_files(config, &flows, &report)?;
    }

    Ok(RunSummary {
        labels: report.variants.iter().map(|v| v.label.clone()).collect(),
        totals: report.variants.iter().map(|v| v.totals.clone()).collect(),
        flows: flows.len(),
        members,
    })
}

fn write_report_files(
    config: &PipelineConfig,
    flows: &[FlowRecord],
    report: &ClassifiedReport,
) -> Result<()> {
    let summaries: Vec<_> = report
        .variants
        .iter()
        .map(|v| summarize(&v.label, flows, &v.verdicts))
        .collect();
    write_out(&config.out_dir, "indicators.csv", &summaries_to_csv(&summaries))?;

    let series: Vec<_> = report
        .variants
        .iter()
        .map(|v| {
            (
                v.label.clone(),
                time_series(flows, &v.verdicts, None, config.bin_width),
            )
        })
        .collect();
    write_out(
        &config.out_dir,
        "timeseries.csv",
        &timeseries_csv(&series, config.scale),
    )?;

    let fractions: Vec<_> = report
        .variants
        .iter()
        .map(|v| {
            (
                v.label.clone(),
                member_fractions(flows, &v.verdicts, config.weight),
            )
        })
        .collect();
    write_out(&config.out_dir, "member_ccdf.csv", &member_ccdf_csv(&fractions))?;
    write_out(
        &config.out_dir,
        "member_fractions.csv",
        &member_fractions_csv(&fractions),
    )?;

    for class in TrafficClass::ALL {
        let rows: Vec<_> = report
            .variants
            .iter()
            .map(|v| {
                let cdf = size_cdf(flows, &v.verdicts);
                (v.label.clone(), cdf.get(&class).cloned().unwrap_or_default())
            })
            .collect();
        write_out(
            &config.out_dir,
            &format!("size_cdf_{}.csv", class.as_str()),
            &size_cdf_csv(&rows),
        )?;
    }

    let mix_config = TrafficMixConfig {
        udp_ports: config.udp_ports.clone(),
        tcp_ports: config.tcp_ports.clone(),
        ephemeral_min: config.ephemeral_min,
    };
    let mixes: Vec<_> = report
        .variants
        .iter()
        .map(|v| (v.label.clone(), traffic_mix(flows, &v.verdicts, &mix_config)))
        .collect();
    write_out(&config.out_dir, "traffic_mix.csv", &traffic_mix_csv(&mixes))?;
    Ok(())
}
