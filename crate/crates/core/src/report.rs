//! Calibration and summary reports, written as CSV with SVG charts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::domain::{CommodityId, TradeType};
use crate::error::Result;
use crate::instance::Instance;
use crate::international::InternationalShipment;
use crate::models::{AssignmentSet, FlowGap};
use crate::pairing::CandidatePair;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinRow {
    pub lower_miles: f64,
    pub upper_miles: f64,
    /// Share of met tonnage shipped over this distance range.
    pub modeled_share: f64,
    pub target_share: f64,
    /// Gap as modeled: bin tonnage over total demand against the target.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceDistribution {
    pub rows: Vec<BinRow>,
    pub met_tons: f64,
    pub note: Option<String>,
}

pub fn distance_distribution(instance: &Instance, pairs: &[CandidatePair], a: &AssignmentSet) -> DistanceDistribution {
    let b = &instance.binning;
    let mut tons = vec![0.0; b.len()];
    for (i, p) in pairs.iter().enumerate() {
        tons[p.bin] += a.tons(instance, pairs, i);
    }
    let met: f64 = tons.iter().sum();
    if met <= 0.0 {
        return DistanceDistribution {
            rows: Vec::new(),
            met_tons: 0.0,
            note: Some("no demand was met".into()),
        };
    }
    let rows = (0..b.len())
        .map(|k| BinRow {
            lower_miles: b.edges[k],
            upper_miles: b.edges[k + 1],
            modeled_share: tons[k] / met,
            target_share: b.targets[k],
            gap: a.bin_gaps[k],
        })
        .collect();
    DistanceDistribution { rows, met_tons: met, note: None }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowGapReport {
    pub rows: Vec<FlowGap>,
    pub modeled_total: f64,
    pub target_total: f64,
    pub gap_total: f64,
}

pub fn flow_gap_report(a: &AssignmentSet) -> FlowGapReport {
    let rows = a.flow_gaps.clone();
    FlowGapReport {
        modeled_total: rows.iter().map(|r| r.modeled).sum(),
        target_total: rows.iter().map(|r| r.target).sum(),
        gap_total: rows.iter().map(|r| r.gap).sum(),
        rows,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommodityRow {
    pub commodity: CommodityId,
    pub name: &'static str,
    pub assignments: usize,
    pub tons: f64,
    pub demand_tons: f64,
}

impl CommodityRow {
    fn new(commodity: CommodityId) -> Self {
        Self {
            commodity,
            name: commodity.name().unwrap_or(""),
            assignments: 0,
            tons: 0.0,
            demand_tons: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub establishments: usize,
    pub internal_establishments: usize,
    pub demand_tons: f64,
    pub met_tons: f64,
    pub unmet_tons: f64,
    pub international_tons: f64,
    /// Domestic met tons plus international tons.
    pub annual_tons: f64,
    pub international_share: f64,
    pub trade_assignments: usize,
    pub mean_suppliers_per_receiver: f64,
    pub mean_importers_per_port: f64,
    pub mean_exporters_per_port: f64,
    pub by_commodity: Vec<CommodityRow>,
}

/// Region summary. A pair counts as one trade assignment per commodity
/// carrying more than `1e-9` of the receiver's demand.
pub fn summary_stats(
    instance: &Instance,
    pairs: &[CandidatePair],
    a: &AssignmentSet,
    international: &[InternationalShipment],
) -> Summary {
    let est = &instance.establishments;
    let mut by_commodity: BTreeMap<CommodityId, CommodityRow> = BTreeMap::new();
    let mut suppliers: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut met = 0.0;
    let mut assignments = 0;
    for (i, p) in pairs.iter().enumerate() {
        let d = est[p.receiver].demand();
        let tons = a.tons(instance, pairs, i);
        met += tons;
        if a.x[i] > 1e-9 {
            suppliers.entry(p.receiver).or_default().insert(p.supplier);
        }
        for (k, &c) in p.commodities.iter().enumerate() {
            let t = tons * a.split[i][k];
            if t > 1e-9 * d {
                let row = by_commodity.entry(c).or_insert_with(|| CommodityRow::new(c));
                row.assignments += 1;
                row.tons += t;
                assignments += 1;
            }
        }
    }
    for &r in &a.receivers {
        for (&c, &t) in &est[r].consumption {
            by_commodity.entry(c).or_insert_with(|| CommodityRow::new(c)).demand_tons += t;
        }
    }
    let demand: f64 = a.receivers.iter().map(|&r| est[r].demand()).sum();
    let unmet: f64 = a.receivers.iter().zip(&a.unmet).map(|(&r, u)| est[r].demand() * u).sum();
    let intl: f64 = international.iter().map(|s| s.tons()).sum();
    let per_port = |trade: TradeType| {
        let mut m: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for s in international.iter().filter(|s| s.trade_type == trade) {
            m.entry(&s.port).or_default().insert(s.establishment());
        }
        mean(m.values().map(|v| v.len() as f64))
    };
    Summary {
        establishments: est.len(),
        internal_establishments: est.iter().filter(|e| e.is_internal).count(),
        demand_tons: demand,
        met_tons: met,
        unmet_tons: unmet,
        international_tons: intl,
        annual_tons: met + intl,
        international_share: if met + intl > 0.0 { intl / (met + intl) } else { 0.0 },
        trade_assignments: assignments,
        mean_suppliers_per_receiver: mean(suppliers.values().map(|s| s.len() as f64)),
        mean_importers_per_port: per_port(TradeType::Import),
        mean_exporters_per_port: per_port(TradeType::Export),
        by_commodity: by_commodity.into_values().collect(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn miles_label(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Grouped vertical bar chart.
pub fn bar_chart_svg(title: &str, labels: &[String], series: &[(&str, &str, Vec<f64>)]) -> String {
    let (w, h) = (720.0, 360.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 70.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max = series
        .iter()
        .flat_map(|s| s.2.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let group = plot_w / labels.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="#333"/>"##,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    for t in 0..=4 {
        let v = max * t as f64 / 4.0;
        let y = top + plot_h - plot_h * t as f64 / 4.0;
        let _ = writeln!(s, r##"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"##, left - 6.0, y + 4.0, tick(v));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, left + plot_w);
    }
    for (g, label) in labels.iter().enumerate() {
        let gx = left + group * g as f64 + group * 0.1;
        for (k, (_, color, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0).max(0.0);
            let bh = plot_h * v / max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
                gx + bar * k as f64,
                top + plot_h - bh,
                bar,
                bh
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + group * 0.4,
            top + plot_h + 16.0,
            escape(label)
        );
    }
    for (k, (name, color, _)) in series.iter().enumerate() {
        let x = left + 10.0 + 150.0 * k as f64;
        let y = h - 20.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 16.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes every report into `dir`.
pub fn write_reports(
    dir: &Path,
    instance: &Instance,
    pairs: &[CandidatePair],
    a: &AssignmentSet,
    international: &[InternationalShipment],
) -> Result<()> {
    fs::create_dir_all(dir)?;

    let dist = distance_distribution(instance, pairs, a);
    let mut w = csv::Writer::from_path(dir.join("distance_distribution.csv"))?;
    w.write_record(["lower_miles", "upper_miles", "modeled_share", "target_share", "gap"])?;
    for r in &dist.rows {
        w.write_record([
            miles_label(r.lower_miles),
            miles_label(r.upper_miles),
            format!("{:.9}", r.modeled_share),
            format!("{:.9}", r.target_share),
            format!("{:.9}", r.gap),
        ])?;
    }
    w.flush()?;
    let labels: Vec<String> = dist
        .rows
        .iter()
        .map(|r| format!("{}-{}", miles_label(r.lower_miles), miles_label(r.upper_miles)))
        .collect();
    fs::write(
        dir.join("distance_distribution.svg"),
        bar_chart_svg(
            "Shipping distance distribution (share of met tons)",
            &labels,
            &[
                ("target", "#9aa5b1", dist.rows.iter().map(|r| r.target_share).collect()),
                ("modeled", "#2f6fad", dist.rows.iter().map(|r| r.modeled_share).collect()),
            ],
        ),
    )?;

    let flows = flow_gap_report(a);
    let mut w = csv::Writer::from_path(dir.join("flow_gaps.csv"))?;
    w.write_record(["origin_zone", "dest_zone", "commodity", "modeled_tons", "target_tons", "gap_tons"])?;
    for r in &flows.rows {
        w.write_record([
            r.origin_zone.clone(),
            r.dest_zone.clone(),
            r.commodity.0.to_string(),
            format!("{:.6}", r.modeled),
            format!("{:.6}", r.target),
            format!("{:.6}", r.gap),
        ])?;
    }
    w.write_record([
        "total".into(),
        String::new(),
        String::new(),
        format!("{:.6}", flows.modeled_total),
        format!("{:.6}", flows.target_total),
        format!("{:.6}", flows.gap_total),
    ])?;
    w.flush()?;

    let sum = summary_stats(instance, pairs, a, international);
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["metric", "value"])?;
    let rows: [(&str, String); 12] = [
        ("establishments", sum.establishments.to_string()),
        ("internal_establishments", sum.internal_establishments.to_string()),
        ("demand_tons", format!("{:.6}", sum.demand_tons)),
        ("met_tons", format!("{:.6}", sum.met_tons)),
        ("unmet_tons", format!("{:.6}", sum.unmet_tons)),
        ("international_tons", format!("{:.6}", sum.international_tons)),
        ("annual_tons", format!("{:.6}", sum.annual_tons)),
        ("international_share", format!("{:.6}", sum.international_share)),
        ("trade_assignments", sum.trade_assignments.to_string()),
        ("mean_suppliers_per_receiver", format!("{:.6}", sum.mean_suppliers_per_receiver)),
        ("mean_importers_per_port", format!("{:.6}", sum.mean_importers_per_port)),
        ("mean_exporters_per_port", format!("{:.6}", sum.mean_exporters_per_port)),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("commodity_breakdown.csv"))?;
    w.write_record(["commodity", "name", "assignments", "assigned_tons", "demand_tons"])?;
    for r in &sum.by_commodity {
        w.write_record([
            r.commodity.0.to_string(),
            r.name.to_string(),
            r.assignments.to_string(),
            format!("{:.6}", r.tons),
            format!("{:.6}", r.demand_tons),
        ])?;
    }
    w.flush()?;
    let labels: Vec<String> = sum.by_commodity.iter().map(|r| r.commodity.0.to_string()).collect();
    fs::write(
        dir.join("commodity_breakdown.svg"),
        bar_chart_svg(
            "Assigned and demanded tons by commodity group",
            &labels,
            &[
                ("demand", "#9aa5b1", sum.by_commodity.iter().map(|r| r.demand_tons).collect()),
                ("assigned", "#2f6fad", sum.by_commodity.iter().map(|r| r.tons).collect()),
            ],
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::{establishment, two_establishments};
    use crate::models::{assemble, Problem};
    use crate::domain::SolverWeights;

    fn pair(s: usize, r: usize, bin: usize) -> CandidatePair {
        CandidatePair {
            supplier: s,
            receiver: r,
            cost: 5.0,
            rating: 0.5,
            bin,
            commodities: vec![CommodityId(1)],
            supplied_tons: 0.0,
        }
    }

    fn split_instance() -> (Instance, Vec<CandidatePair>, AssignmentSet) {
        let mut inst = two_establishments();
        inst.establishments = vec![
            establishment("S1", "311", "A", &[(1, 10.0)], &[]),
            establishment("S2", "311", "A", &[(1, 10.0)], &[]),
            establishment("R1", "445", "B", &[], &[(1, 10.0)]),
        ];
        inst.binning = crate::domain::DistanceBinning::new(vec![0.0, 50.0, f64::INFINITY], vec![0.5, 0.5]);
        let pairs = vec![pair(0, 2, 0), pair(1, 2, 1)];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let a = assemble(&p, vec![0.5, 0.5], vec![vec![1.0], vec![1.0]], vec![0.0], None);
        (inst, pairs, a)
    }

    #[test]
    fn all_in_first_bin() {
        let mut inst = two_establishments();
        inst.binning = crate::domain::DistanceBinning::new(vec![0.0, 50.0, f64::INFINITY], vec![1.0, 0.0]);
        let pairs = vec![pair(0, 1, 0)];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let a = assemble(&p, vec![1.0], vec![vec![1.0]], vec![0.0], None);
        let d = distance_distribution(&inst, &pairs, &a);
        let shares: Vec<f64> = d.rows.iter().map(|r| r.modeled_share).collect();
        assert_eq!(shares, vec![1.0, 0.0]);
    }

    #[test]
    fn even_split_and_supplier_count() {
        let (inst, pairs, a) = split_instance();
        let d = distance_distribution(&inst, &pairs, &a);
        assert_eq!(d.rows.iter().map(|r| r.modeled_share).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert!(d.rows.iter().all(|r| r.gap.abs() < 1e-12));

        let s = summary_stats(&inst, &pairs, &a, &[]);
        assert_eq!(s.mean_suppliers_per_receiver, 2.0);
        assert_eq!(s.international_share, 0.0);
        assert_eq!(s.trade_assignments, 2);
        assert!((s.met_tons + s.unmet_tons - s.demand_tons).abs() < 1e-9);
    }

    #[test]
    fn nothing_met_gives_note() {
        let inst = two_establishments();
        let pairs = vec![pair(0, 1, 0)];
        let p = Problem::new(&inst, &pairs, SolverWeights::default());
        let a = assemble(&p, vec![0.0], vec![vec![1.0]], vec![1.0], None);
        let d = distance_distribution(&inst, &pairs, &a);
        assert!(d.rows.is_empty() && d.note.is_some());
    }

    #[test]
    fn files_are_written_and_stable() {
        let (inst, pairs, a) = split_instance();
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &inst, &pairs, &a, &[]).unwrap();
        let first: Vec<Vec<u8>> = ["distance_distribution.csv", "distance_distribution.svg", "flow_gaps.csv", "summary.csv", "commodity_breakdown.csv", "commodity_breakdown.svg"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        write_reports(dir.path(), &inst, &pairs, &a, &[]).unwrap();
        let second: Vec<Vec<u8>> = ["distance_distribution.csv", "distance_distribution.svg", "flow_gaps.csv", "summary.csv", "commodity_breakdown.csv", "commodity_breakdown.svg"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        assert_eq!(first, second);
        let flows = fs::read_to_string(dir.path().join("flow_gaps.csv")).unwrap();
        assert!(flows.lines().last().unwrap().starts_with("total,"));
    }
}
