use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer};

use super::{Instance, Manifest};
use crate::domain::{
    validate_instance, CommodityId, DistanceBinning, Establishment, FlowTarget, MakeUseEntry,
    MakeUseTable, PortFlow, TradeType, Zone,
};
use crate::error::{Error, Result};
use crate::pairing::DistanceMatrix;

/// Files every instance directory must contain.
pub const INPUT_FILES: [&str; 9] = [
    "manifest.json",
    "zones.csv",
    "establishments.csv",
    "production.csv",
    "consumption.csv",
    "make_use.csv",
    "flows.csv",
    "bin_targets.csv",
    "port_flows.csv",
];

const DISTANCE_FILE: &str = "distance_matrix.csv";

fn flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected a boolean flag, got `{other}`"))),
    }
}

#[derive(Deserialize)]
struct ZoneRow {
    id: String,
    x: f64,
    y: f64,
    #[serde(deserialize_with = "flag")]
    internal: bool,
    #[serde(default)]
    intra_miles: Option<f64>,
}

#[derive(Deserialize)]
struct EstablishmentRow {
    id: String,
    sector: String,
    zone: String,
    employment: f64,
    revenue: f64,
    #[serde(deserialize_with = "flag")]
    internal: bool,
}

#[derive(Deserialize)]
struct TonnageRow {
    establishment: String,
    commodity: u8,
    tons: f64,
}

#[derive(Deserialize)]
struct MakeUseRow {
    supplier_sector: String,
    receiver_sector: String,
    commodity: u8,
    share: f64,
}

#[derive(Deserialize)]
struct FlowRow {
    origin_zone: String,
    dest_zone: String,
    commodity: u8,
    tons: f64,
}

#[derive(Deserialize)]
struct BinRow {
    bin_upper_miles: f64,
    share: f64,
}

#[derive(Deserialize)]
struct PortRow {
    port: String,
    trade_type: String,
    commodity: u8,
    zone: String,
    tons: f64,
}

#[derive(Deserialize)]
struct DistanceRow {
    zone_from: String,
    zone_to: String,
    miles: f64,
}

fn malformed(file: &str, row: usize, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        file: file.to_string(),
        row,
        message: message.into(),
    }
}

/// Reads every record of `file`, returning `(line, record)` pairs.
fn read_rows<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<(usize, T)>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)?;
    let headers = reader.headers()?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(file, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(file, line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

/// Loads and validates an instance directory.
pub fn load_instance(dir: impl AsRef<Path>) -> Result<Instance> {
    let dir = dir.as_ref();
    for f in INPUT_FILES {
        if !dir.join(f).is_file() {
            return Err(Error::MissingFile(dir.join(f)));
        }
    }
    let manifest: Manifest = serde_json::from_reader(File::open(dir.join("manifest.json"))?)?;

    let zones: Vec<Zone> = read_rows::<ZoneRow>(dir, "zones.csv")?
        .into_iter()
        .map(|(_, r)| Zone {
            id: r.id,
            x: r.x,
            y: r.y,
            is_internal: r.internal,
            intra_miles: r.intra_miles,
        })
        .collect();

    let mut establishments: Vec<Establishment> = read_rows::<EstablishmentRow>(dir, "establishments.csv")?
        .into_iter()
        .map(|(_, r)| Establishment {
            is_micro: r.employment < manifest.micro_threshold,
            id: r.id,
            sector: r.sector,
            zone: r.zone,
            employment: r.employment,
            revenue: r.revenue,
            production: BTreeMap::new(),
            consumption: BTreeMap::new(),
            is_internal: r.internal,
        })
        .collect();
    let index: BTreeMap<String, usize> = establishments
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i))
        .collect();

    for (file, producing) in [("production.csv", true), ("consumption.csv", false)] {
        for (line, r) in read_rows::<TonnageRow>(dir, file)? {
            let &i = index
                .get(&r.establishment)
                .ok_or_else(|| malformed(file, line, format!("unknown establishment {}", r.establishment)))?;
            let e = &mut establishments[i];
            let map = if producing { &mut e.production } else { &mut e.consumption };
            *map.entry(CommodityId(r.commodity)).or_insert(0.0) += r.tons;
        }
    }

    let make_use = MakeUseTable {
        entries: read_rows::<MakeUseRow>(dir, "make_use.csv")?
            .into_iter()
            .map(|(_, r)| MakeUseEntry {
                supplier_sector: r.supplier_sector,
                receiver_sector: r.receiver_sector,
                commodity: CommodityId(r.commodity),
                share: r.share,
            })
            .collect(),
    };

    let flow_targets = read_rows::<FlowRow>(dir, "flows.csv")?
        .into_iter()
        .map(|(_, r)| FlowTarget {
            origin_zone: r.origin_zone,
            dest_zone: r.dest_zone,
            commodity: CommodityId(r.commodity),
            tons: r.tons,
        })
        .collect();

    let bins = read_rows::<BinRow>(dir, "bin_targets.csv")?;
    let mut edges = vec![0.0];
    edges.extend(bins.iter().map(|(_, b)| b.bin_upper_miles));
    let targets: Vec<f64> = bins.iter().map(|(_, b)| b.share).collect();
    if let Some(lower) = &manifest.bin_edges {
        if lower.as_slice() != &edges[..edges.len() - 1] {
            return Err(Error::Config(format!(
                "manifest bin_edges {lower:?} disagree with bin_targets.csv"
            )));
        }
    }
    let binning = DistanceBinning::new(edges, targets);

    let mut port_flows = Vec::new();
    for (line, r) in read_rows::<PortRow>(dir, "port_flows.csv")? {
        let trade_type: TradeType = r
            .trade_type
            .parse()
            .map_err(|e: String| malformed("port_flows.csv", line, e))?;
        port_flows.push(PortFlow {
            port: r.port,
            trade_type,
            commodity: CommodityId(r.commodity),
            zone: r.zone,
            tons: r.tons,
        });
    }

    let distance_matrix = if dir.join(DISTANCE_FILE).is_file() {
        let mut m = DistanceMatrix::default();
        for (line, r) in read_rows::<DistanceRow>(dir, DISTANCE_FILE)? {
            if !(r.miles.is_finite() && r.miles >= 0.0) {
                return Err(malformed(DISTANCE_FILE, line, "miles must be finite and >= 0"));
            }
            m.insert(&r.zone_from, &r.zone_to, r.miles);
        }
        Some(m)
    } else {
        None
    };

    let instance = Instance {
        zones,
        establishments,
        make_use,
        flow_targets,
        binning,
        weights: manifest.weights,
        port_flows,
        rng_seed: manifest.seed,
        micro_threshold: manifest.micro_threshold,
        intra_zonal_miles: manifest.intra_zonal_miles,
        rating: manifest.rating,
        trade_bounds: manifest.trade_bounds,
        max_suppliers: manifest.max_suppliers,
        distance_matrix,
    };
    let violations = validate_instance(&instance);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(instance)
}

fn writer(dir: &Path, file: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(file))?));
    w.write_record(header)?;
    Ok(w)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `instance` in the directory layout read by [`load_instance`].
/// Output is a pure function of the instance.
pub fn save_instance(instance: &Instance, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let manifest = Manifest {
        weights: instance.weights,
        seed: instance.rng_seed,
        bin_edges: Some(instance.binning.edges[..instance.binning.len()].to_vec()),
        micro_threshold: instance.micro_threshold,
        intra_zonal_miles: instance.intra_zonal_miles,
        trade_bounds: instance.trade_bounds,
        rating: instance.rating,
        max_suppliers: instance.max_suppliers,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;

    let with_intra = instance.zones.iter().any(|z| z.intra_miles.is_some());
    let mut header = vec!["id", "x", "y", "internal"];
    if with_intra {
        header.push("intra_miles");
    }
    let mut w = writer(dir, "zones.csv", &header)?;
    for z in &instance.zones {
        let mut rec = vec![z.id.clone(), num(z.x), num(z.y), bit(z.is_internal).into()];
        if with_intra {
            rec.push(z.intra_miles.map(num).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = writer(
        dir,
        "establishments.csv",
        &["id", "sector", "zone", "employment", "revenue", "internal"],
    )?;
    for e in &instance.establishments {
        w.write_record([
            e.id.as_str(),
            &e.sector,
            &e.zone,
            &num(e.employment),
            &num(e.revenue),
            bit(e.is_internal),
        ])?;
    }
    w.flush()?;

    for (file, producing) in [("production.csv", true), ("consumption.csv", false)] {
        let mut w = writer(dir, file, &["establishment", "commodity", "tons"])?;
        for e in &instance.establishments {
            let map = if producing { &e.production } else { &e.consumption };
            for (c, t) in map {
                w.write_record([e.id.as_str(), &c.to_string(), &num(*t)])?;
            }
        }
        w.flush()?;
    }

    let mut w = writer(
        dir,
        "make_use.csv",
        &["supplier_sector", "receiver_sector", "commodity", "share"],
    )?;
    for m in &instance.make_use.entries {
        w.write_record([
            m.supplier_sector.as_str(),
            &m.receiver_sector,
            &m.commodity.to_string(),
            &num(m.share),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "flows.csv", &["origin_zone", "dest_zone", "commodity", "tons"])?;
    for f in &instance.flow_targets {
        w.write_record([
            f.origin_zone.as_str(),
            &f.dest_zone,
            &f.commodity.to_string(),
            &num(f.tons),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "bin_targets.csv", &["bin_upper_miles", "share"])?;
    for (upper, share) in instance.binning.edges[1..].iter().zip(&instance.binning.targets) {
        w.write_record([num(*upper), num(*share)])?;
    }
    w.flush()?;

    let mut w = writer(dir, "port_flows.csv", &["port", "trade_type", "commodity", "zone", "tons"])?;
    for p in &instance.port_flows {
        w.write_record([
            p.port.as_str(),
            p.trade_type.as_str(),
            &p.commodity.to_string(),
            &p.zone,
            &num(p.tons),
        ])?;
    }
    w.flush()?;

    if let Some(matrix) = &instance.distance_matrix {
        let mut w = writer(dir, DISTANCE_FILE, &["zone_from", "zone_to", "miles"])?;
        for ((from, to), miles) in matrix.entries() {
            w.write_record([from.as_str(), to, &num(*miles)])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::two_establishments;

    #[test]
    fn round_trip_preserves_instance() {
        let dir = tempfile::tempdir().unwrap();
        let mut inst = two_establishments();
        inst.zones[1].intra_miles = Some(2.5);
        save_instance(&inst, dir.path()).unwrap();
        let back = load_instance(dir.path()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_instance(&two_establishments(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("flows.csv")).unwrap();
        match load_instance(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("flows.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        save_instance(&two_establishments(), dir.path()).unwrap();
        fs::write(
            dir.path().join("production.csv"),
            "establishment,commodity,tons\nS1,1,10\nS1,one,5\n",
        )
        .unwrap();
        match load_instance(dir.path()) {
            Err(Error::MalformedRow { file, row, .. }) => {
                assert_eq!(file, "production.csv");
                assert_eq!(row, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_commodity_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        save_instance(&two_establishments(), dir.path()).unwrap();
        fs::write(
            dir.path().join("production.csv"),
            "establishment,commodity,tons\nS1,16,10\n",
        )
        .unwrap();
        match load_instance(dir.path()) {
            Err(Error::Invalid(v)) => assert!(v.iter().any(|v| v.rule.contains("commodity 16"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distance_matrix_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let mut inst = two_establishments();
        let mut m = DistanceMatrix::default();
        m.insert("A", "B", 123.4);
        inst.distance_matrix = Some(m);
        save_instance(&inst, dir.path()).unwrap();
        let back = load_instance(dir.path()).unwrap();
        assert_eq!(back.distance_matrix.unwrap().get("A", "B"), Some(123.4));
    }
}
