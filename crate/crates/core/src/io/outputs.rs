use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::io::{feature_id, feature_list};
use crate::mcmc::{summarize, ChainSet, SummaryRow, SummaryTable};

pub const CHOROPLETH_HEADER: [&str; 5] = ["area_id", "age_group", "rr_median", "rr_q2.5", "rr_q97.5"];

/// Index of Concentration at Extremes, `(w - b) / n`.
pub fn ice_index(affluent_white: u64, poor_black: u64, households: u64) -> Result<f64> {
    if households == 0 {
        return Err(Error::invalid("households", "must be positive"));
    }
    if affluent_white + poor_black > households {
        return Err(Error::invalid(
            "households",
            format!("{affluent_white} + {poor_black} exceeds {households} households"),
        ));
    }
    Ok((affluent_white as f64 - poor_black as f64) / households as f64)
}

/// Element-wise `sd / population`.
pub fn relative_error_table(population: &[f64], sd: &[f64]) -> Result<Vec<f64>> {
    if population.len() != sd.len() {
        return Err(Error::Dimension {
            context: "relative error table",
            expected: population.len(),
            actual: sd.len(),
        });
    }
    population
        .iter()
        .zip(sd)
        .map(|(&n, &s)| {
            if !(n > 0.0) {
                Err(Error::invalid("population", format!("{n} is not positive")))
            } else if !(s >= 0.0) {
                Err(Error::invalid("sd", format!("{s} is negative")))
            } else {
                Ok(s / n)
            }
        })
        .collect()
}

/// Summaries of `rr[a:g] = exp(log_rr[a:g])`, computed on the exponentiated
/// draws.
pub fn relative_risk_summary(chains: &ChainSet) -> Result<SummaryTable> {
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (p, name) in chains.names().iter().enumerate() {
        if let Some(cell) = name.strip_prefix("log_rr[") {
            names.push(format!("rr[{cell}"));
            columns.push(p);
        }
    }
    if names.is_empty() {
        return Err(Error::InsufficientDraws("chain set records no log_rr parameters".into()));
    }
    let draws = (0..chains.n_chains())
        .map(|c| {
            columns
                .iter()
                .map(|&p| chains.chain_draws(c, p).iter().map(|x| x.exp()).collect())
                .collect()
        })
        .collect();
    summarize(&ChainSet::from_draws(names, draws, chains.settings().clone())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoroplethRow {
    pub area_id: String,
    pub age_group: String,
    pub rr_median: f64,
    pub rr_q2_5: f64,
    pub rr_q97_5: f64,
}

/// One row per area and group, areas outermost, from `rr[a:g]` summaries.
pub fn choropleth_rows(rr: &SummaryTable, area_ids: &[String], group_labels: &[String]) -> Result<Vec<ChoroplethRow>> {
    let by_name: HashMap<&str, &SummaryRow> = rr.rows.iter().map(|r| (r.name.as_str(), r)).collect();
    let mut rows = Vec::with_capacity(area_ids.len() * group_labels.len());
    for a in area_ids {
        for g in group_labels {
            let name = format!("rr[{a}:{g}]");
            let s = by_name.get(name.as_str()).ok_or_else(|| Error::UnknownId(format!("{a}:{g}")))?;
            rows.push(ChoroplethRow {
                area_id: a.clone(),
                age_group: g.clone(),
                rr_median: s.median,
                rr_q2_5: s.q2_5,
                rr_q97_5: s.q97_5,
            });
        }
    }
    if rows.len() != rr.rows.len() {
        let known: std::collections::HashSet<String> =
            rows.iter().map(|r| format!("rr[{}:{}]", r.area_id, r.age_group)).collect();
        let extra = rr.rows.iter().find(|r| !known.contains(&r.name)).expect("count differs");
        return Err(Error::UnknownId(extra.name.clone()));
    }
    Ok(rows)
}

fn csv_fail(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::data(path, e.to_string())
}

pub fn write_choropleth(rows: &[ChoroplethRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_fail(path))?;
    w.write_record(CHOROPLETH_HEADER).map_err(csv_fail(path))?;
    for r in rows {
        w.write_record([
            r.area_id.clone(),
            r.age_group.clone(),
            r.rr_median.to_string(),
            r.rr_q2_5.to_string(),
            r.rr_q97_5.to_string(),
        ])
        .map_err(csv_fail(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_field(path: &Path, record: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let raw = record.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::data(path, format!("cannot parse `{name}` value `{raw}`")))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_fail(path))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::data(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

pub fn read_choropleth(path: &Path) -> Result<Vec<ChoroplethRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_fail(path))?;
    check_header(path, &mut r, &CHOROPLETH_HEADER)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_fail(path))?;
        rows.push(ChoroplethRow {
            area_id: record[0].to_string(),
            age_group: record[1].to_string(),
            rr_median: parse_field(path, &record, 2, "rr_median")?,
            rr_q2_5: parse_field(path, &record, 3, "rr_q2.5")?,
            rr_q97_5: parse_field(path, &record, 4, "rr_q97.5")?,
        });
    }
    Ok(rows)
}

/// Adds `rr_median_<group>`, `rr_q2.5_<group>` and `rr_q97.5_<group>`
/// properties to every feature with rows. Features without rows are dropped,
/// so a subset fit maps onto full geometry; every row's area must have a
/// feature.
pub fn join_geojson(geometry: &Path, id_key: &str, rows: &[ChoroplethRow], out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(geometry).map_err(|e| Error::io(geometry, e))?;
    let mut root: Value = serde_json::from_str(&text).map_err(|e| Error::data(geometry, e.to_string()))?;
    let mut by_area: HashMap<&str, Vec<&ChoroplethRow>> = HashMap::new();
    for r in rows {
        by_area.entry(r.area_id.as_str()).or_default().push(r);
    }
    let ids = feature_list(geometry, &root)?
        .iter()
        .enumerate()
        .map(|(i, f)| feature_id(geometry, f, id_key, i))
        .collect::<Result<Vec<_>>>()?;
    if let Some(r) = rows.iter().find(|r| !ids.contains(&r.area_id)) {
        return Err(Error::data(geometry, format!("no feature for area id `{}`", r.area_id)));
    }
    let features = root
        .get_mut("features")
        .and_then(Value::as_array_mut)
        .expect("checked by feature_list");
    let mut kept = Vec::with_capacity(rows.len());
    for (mut feature, id) in std::mem::take(features).into_iter().zip(&ids) {
        let Some(cells) = by_area.get(id.as_str()) else {
            continue;
        };
        let props = feature
            .get_mut("properties")
            .and_then(Value::as_object_mut)
            .expect("checked by feature_id");
        for r in cells {
            props.insert(format!("rr_median_{}", r.age_group), r.rr_median.into());
            props.insert(format!("rr_q2.5_{}", r.age_group), r.rr_q2_5.into());
            props.insert(format!("rr_q97.5_{}", r.age_group), r.rr_q97_5.into());
        }
        kept.push(feature);
    }
    *features = kept;
    let body = serde_json::to_string(&root).map_err(|e| Error::data(out, e.to_string()))?;
    std::fs::write(out, body).map_err(|e| Error::io(out, e))
}

pub fn write_summary_csv(table: &SummaryTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_fail(path))?;
    w.write_record(SummaryTable::HEADER).map_err(csv_fail(path))?;
    for r in &table.rows {
        let mut record = vec![r.name.clone()];
        record.extend([r.mean, r.sd, r.q2_5, r.median, r.q97_5, r.rhat, r.ess].map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_fail(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<SummaryTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_fail(path))?;
    check_header(path, &mut r, &SummaryTable::HEADER)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_fail(path))?;
        let v = |i: usize| parse_field(path, &record, i, SummaryTable::HEADER[i]);
        rows.push(SummaryRow {
            name: record[0].to_string(),
            mean: v(1)?,
            sd: v(2)?,
            q2_5: v(3)?,
            median: v(4)?,
            q97_5: v(5)?,
            rhat: v(6)?,
            ess: v(7)?,
        });
    }
    Ok(SummaryTable { rows })
}

/// `chain,block,phase,proposed,accepted,rate` for burn-in and sampling.
pub fn write_acceptance_csv(chains: &ChainSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_fail(path))?;
    w.write_record(["chain", "block", "phase", "proposed", "accepted", "rate"])
        .map_err(csv_fail(path))?;
    for (phase, per_chain) in [("burn_in", chains.burn_in_acceptance()), ("sampling", chains.acceptance())] {
        for (c, counts) in per_chain.iter().enumerate() {
            for (name, n) in chains.block_names().iter().zip(counts) {
                w.write_record([
                    c.to_string(),
                    name.clone(),
                    phase.to_string(),
                    n.proposed.to_string(),
                    n.accepted.to_string(),
                    n.rate().to_string(),
                ])
                .map_err(csv_fail(path))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
