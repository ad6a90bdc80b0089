//! Cell-keyed CSV ingestion.
//!
//! Every table is keyed by `area_id,age_group`. The counts file fixes the
//! area and group order (first appearance) and must cover the full grid;
//! the other files must contain exactly the same keys.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::DataConfig;
use crate::error::{Error, Result};
use crate::model::{DatasetParts, Source, StratifiedDataset};
use crate::offsets::{acs_log_scale_sd, acs_moe_to_sd};

pub const COUNTS_HEADER: [&str; 3] = ["area_id", "age_group", "deaths"];
pub const POPULATION_HEADER: [&str; 3] = ["area_id", "age_group", "population"];
pub const MOE_HEADER: [&str; 3] = ["area_id", "age_group", "moe"];

struct CellTable {
    path: PathBuf,
    columns: Vec<String>,
    /// `(area, group, line, values)` in file order.
    rows: Vec<(String, String, usize, Vec<String>)>,
}

impl CellTable {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::data(path, e.to_string()))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::data(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        for (i, key) in ["area_id", "age_group"].iter().enumerate() {
            if header.get(i).map(String::as_str) != Some(*key) {
                return Err(Error::data(path, format!("missing column `{key}` (expected as column {})", i + 1)));
            }
        }
        let columns = header[2..].to_vec();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::data(path, format!("line {line}: {e}")))?;
            let values: Vec<String> = record.iter().skip(2).map(str::to_string).collect();
            rows.push((record[0].to_string(), record[1].to_string(), line, values));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::data(&self.path, format!("missing column `{name}`")))
    }

    /// Row index of every cell in the grid order, checking that the key set
    /// matches the grid exactly.
    fn align(&self, areas: &[String], groups: &[String]) -> Result<Vec<usize>> {
        let mut index: HashMap<(&str, &str), usize> = HashMap::with_capacity(self.rows.len());
        for (r, (area, group, line, _)) in self.rows.iter().enumerate() {
            if index.insert((area, group), r).is_some() {
                return Err(Error::data(
                    &self.path,
                    format!("line {line}: duplicate row for area `{area}`, age group `{group}`"),
                ));
            }
        }
        let area_set: HashMap<&str, ()> = areas.iter().map(|a| (a.as_str(), ())).collect();
        let group_set: HashMap<&str, ()> = groups.iter().map(|g| (g.as_str(), ())).collect();
        for (area, group, line, _) in &self.rows {
            if !area_set.contains_key(area.as_str()) {
                return Err(Error::data(
                    &self.path,
                    format!("line {line}: area id `{area}` does not appear in the counts file"),
                ));
            }
            if !group_set.contains_key(group.as_str()) {
                return Err(Error::data(
                    &self.path,
                    format!("line {line}: age group `{group}` does not appear in the counts file"),
                ));
            }
        }
        let mut out = Vec::with_capacity(areas.len() * groups.len());
        for area in areas {
            for group in groups {
                match index.get(&(area.as_str(), group.as_str())) {
                    Some(&r) => out.push(r),
                    None => {
                        return Err(Error::data(
                            &self.path,
                            format!("missing row for area id `{area}`, age group `{group}`"),
                        ))
                    }
                }
            }
        }
        Ok(out)
    }

    fn value(&self, row: usize, column: usize) -> (&str, &str, usize, &str) {
        let (area, _, line, values) = &self.rows[row];
        let name = &self.columns[column];
        (area, name, *line, values.get(column).map_or("", String::as_str))
    }

    fn parse_f64(&self, row: usize, column: usize) -> Result<f64> {
        let (_, name, line, raw) = self.value(row, column);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::data(&self.path, format!("line {line}: cannot parse `{name}` value `{raw}`")))
    }
}

fn parse_count(table: &CellTable, row: usize, column: usize) -> Result<u64> {
    let (area, name, line, raw) = table.value(row, column);
    let value: f64 = raw
        .parse::<i64>()
        .map(|v| v as f64)
        .or_else(|_| raw.parse::<f64>())
        .ok()
        .filter(|v| v.is_finite() && v.fract() == 0.0)
        .ok_or_else(|| Error::data(&table.path, format!("line {line}: cannot parse `{name}` value `{raw}`")))?;
    if value < 0.0 {
        return Err(Error::data(
            &table.path,
            format!("line {line}: negative count {raw} for area `{area}`"),
        ));
    }
    Ok(value as u64)
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for item in items {
        if seen.insert(item.clone(), ()).is_none() {
            out.push(item.clone());
        }
    }
    out
}

/// Builds and validates the dataset described by a `[data]` section.
pub fn ingest_dataset(config: &DataConfig) -> Result<StratifiedDataset> {
    let counts = CellTable::read(&config.counts)?;
    let deaths = counts.column(COUNTS_HEADER[2])?;
    let areas = first_appearance(counts.rows.iter().map(|r| &r.0));
    let groups = first_appearance(counts.rows.iter().map(|r| &r.1));
    if areas.is_empty() {
        return Err(Error::data(&config.counts, "no data rows"));
    }
    let order = counts.align(&areas, &groups)?;
    let y = order
        .iter()
        .map(|&r| parse_count(&counts, r, deaths))
        .collect::<Result<Vec<u64>>>()?;

    let population = CellTable::read(&config.population)?;
    let pop_col = population.column(POPULATION_HEADER[2])?;
    let pop_order = population.align(&areas, &groups)?;
    let mut offsets = Vec::with_capacity(y.len());
    for &r in &pop_order {
        let n = population.parse_f64(r, pop_col)?;
        if n <= 0.0 {
            let (area, _, line, raw) = population.value(r, pop_col);
            return Err(Error::data(
                &population.path,
                format!("line {line}: nonpositive population {raw} for area `{area}`"),
            ));
        }
        offsets.push(n);
    }

    let offset_log_sd = match (&config.moe, config.source) {
        (Some(path), Source::Acs) => {
            let moe = CellTable::read(path)?;
            let col = moe.column(MOE_HEADER[2])?;
            let moe_order = moe.align(&areas, &groups)?;
            let mut sd = Vec::with_capacity(y.len());
            for (cell, &r) in moe_order.iter().enumerate() {
                let value = moe.parse_f64(r, col)?;
                let (_, _, line, raw) = moe.value(r, col);
                let s = acs_moe_to_sd(value)
                    .and_then(|s| acs_log_scale_sd(offsets[cell], s))
                    .map_err(|_| Error::data(&moe.path, format!("line {line}: invalid margin of error `{raw}`")))?;
                sd.push(s);
            }
            Some(sd)
        }
        (None, Source::Acs) => {
            return Err(Error::Config("[data] moe: an ACS population needs a margin-of-error file".into()))
        }
        _ => None,
    };

    let mut covariate_names = Vec::new();
    if config.intercept {
        covariate_names.push("intercept".to_string());
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if let Some(path) = &config.covariates {
        let table = CellTable::read(path)?;
        let wanted = match &config.covariate_columns {
            Some(list) => list.clone(),
            None => table.columns.clone(),
        };
        let cov_order = table.align(&areas, &groups)?;
        for name in wanted {
            let col = table.column(&name)?;
            columns.push(cov_order.iter().map(|&r| table.parse_f64(r, col)).collect::<Result<_>>()?);
            covariate_names.push(name);
        }
    } else if config.covariate_columns.as_ref().is_some_and(|c| !c.is_empty()) {
        return Err(Error::Config("[data] covariate_columns given without a covariates file".into()));
    }
    let k = covariate_names.len();
    let mut covariates = Vec::with_capacity(y.len() * k);
    for cell in 0..y.len() {
        if config.intercept {
            covariates.push(1.0);
        }
        covariates.extend(columns.iter().map(|c| c[cell]));
    }

    StratifiedDataset::new(DatasetParts {
        area_ids: areas,
        group_labels: groups,
        counts: y,
        covariate_names,
        covariates,
        offsets,
        offset_log_sd,
        source: config.source,
        reference_rate: config.reference_rate,
    })
}

/// Reads a single-value cell table (`area_id,age_group,<column>`) in file order.
pub fn read_cell_values(path: &Path, column: &str) -> Result<Vec<(String, String, f64)>> {
    let table = CellTable::read(path)?;
    let col = table.column(column)?;
    (0..table.rows.len())
        .map(|r| {
            let value = table.parse_f64(r, col)?;
            Ok((table.rows[r].0.clone(), table.rows[r].1.clone(), value))
        })
        .collect()
}

/// Values of `column` aligned to a given grid of areas and groups.
pub fn read_cell_grid(path: &Path, column: &str, areas: &[String], groups: &[String]) -> Result<Vec<f64>> {
    let table = CellTable::read(path)?;
    let col = table.column(column)?;
    table
        .align(areas, groups)?
        .into_iter()
        .map(|r| table.parse_f64(r, col))
        .collect()
}
