use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;

use super::AreaGraph;
use crate::error::{Error, Result};

/// Reads a `from_id,to_id` edge list.
///
/// With `ids` the area order is taken from it and every id in the file must be
/// known. Without, areas are numbered in order of first appearance.
pub fn read_edge_list(path: &Path, ids: Option<&[String]>) -> Result<AreaGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "from_id" || &headers[1] != "to_id" {
        return Err(Error::data(path, "edge list header must be `from_id,to_id`"));
    }

    let mut order: Vec<String> = ids.map(<[String]>::to_vec).unwrap_or_default();
    let mut index: HashMap<String, usize> =
        order.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let fixed = ids.is_some();
    let mut pairs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip([&record[0], &record[1]]) {
            *slot = match index.get(field) {
                Some(&i) => i,
                None if fixed => {
                    return Err(Error::data(
                        path,
                        format!("row {}: unknown area id `{field}`", line + 2),
                    ))
                }
                None => {
                    order.push(field.to_string());
                    index.insert(field.to_string(), order.len() - 1);
                    order.len() - 1
                }
            };
        }
        if ends[0] == ends[1] {
            return Err(Error::data(
                path,
                format!("row {}: self-loop on area `{}`", line + 2, &record[0]),
            ));
        }
        pairs.push((ends[0], ends[1]));
    }
    AreaGraph::from_edge_list(order.len(), &pairs, order)
}

pub fn write_edge_list(path: &Path, g: &AreaGraph) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let ids = g.area_ids();
    let result = (|| {
        writer.write_record(["from_id", "to_id"])?;
        for &(i, j) in g.edges() {
            writer.write_record([&ids[i], &ids[j]])?;
        }
        writer.flush()?;
        Ok::<_, csv::Error>(())
    })();
    result.map_err(|e| Error::data(path, e.to_string()))
}

/// Queen contiguity from a GeoJSON FeatureCollection of Polygon/MultiPolygon
/// features: two features are neighbors when any of their vertices coincide
/// within `tolerance` in both coordinates.
///
/// Areas are ordered as the features appear; `id_key` names the property
/// holding the area id (string or number).
pub fn queen_contiguity_from_geojson(
    source: &Path,
    text: &str,
    id_key: &str,
    tolerance: f64,
) -> Result<AreaGraph> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::data(source, format!("invalid GeoJSON: {e}")))?;
    let features = feature_list(source, &root)?;

    let mut ids = Vec::with_capacity(features.len());
    let mut vertices: Vec<(f64, f64, usize)> = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        ids.push(feature_id(source, feature, id_key, index)?);
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| Error::data(source, format!("feature {index} has no geometry")))?;
        collect_vertices(source, geometry, index, &mut vertices)?;
    }

    vertices.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pairs = Vec::new();
    for (k, &(x, y, owner)) in vertices.iter().enumerate() {
        for &(x2, y2, other) in &vertices[k + 1..] {
            if x2 - x > tolerance {
                break;
            }
            if other != owner && (y2 - y).abs() <= tolerance {
                pairs.push((owner, other));
            }
        }
    }
    AreaGraph::from_edge_list(ids.len(), &pairs, ids)
}

pub(crate) fn feature_list<'a>(source: &Path, root: &'a Value) -> Result<&'a Vec<Value>> {
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::data(source, "GeoJSON root must be a FeatureCollection"));
    }
    root.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::data(source, "FeatureCollection has no `features` array"))
}

pub(crate) fn feature_id(source: &Path, feature: &Value, id_key: &str, index: usize) -> Result<String> {
    match feature.get("properties").and_then(|p| p.get(id_key)) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(Error::data(
            source,
            format!("feature {index} has no `{id_key}` property"),
        )),
    }
}

fn collect_vertices(
    source: &Path,
    geometry: &Value,
    owner: usize,
    out: &mut Vec<(f64, f64, usize)>,
) -> Result<()> {
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry.get("coordinates");
    let rings: Vec<&Value> = match (kind, coords) {
        ("Polygon", Some(Value::Array(rings))) => rings.iter().collect(),
        ("MultiPolygon", Some(Value::Array(polys))) => polys
            .iter()
            .filter_map(Value::as_array)
            .flat_map(|rings| rings.iter())
            .collect(),
        _ => {
            return Err(Error::data(
                source,
                format!("feature {owner}: unsupported geometry type `{kind}`"),
            ))
        }
    };
    for ring in rings {
        let points = ring
            .as_array()
            .ok_or_else(|| Error::data(source, format!("feature {owner}: malformed ring")))?;
        for point in points {
            let xy = point.as_array().filter(|p| p.len() >= 2);
            let (x, y) = match xy.and_then(|p| Some((p[0].as_f64()?, p[1].as_f64()?))) {
                Some(xy) => xy,
                None => {
                    return Err(Error::data(
                        source,
                        format!("feature {owner}: malformed coordinate"),
                    ))
                }
            };
            out.push((x, y, owner));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, x0: f64, y0: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"GEOID":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#,
            x1 = x0 + 1.0,
            y1 = y0 + 1.0
        )
    }

    #[test]
    fn queen_touching_corners_count() {
        // 2x2 block of unit squares: every pair touches at least at a corner.
        let text = format!(
            r#"{{"type":"FeatureCollection","features":[{},{},{},{}]}}"#,
            square("a", 0.0, 0.0),
            square("b", 1.0, 0.0),
            square("c", 0.0, 1.0),
            square("d", 1.0, 1.0 + 5e-10)
        );
        let g = queen_contiguity_from_geojson(Path::new("mem"), &text, "GEOID", 1e-9).unwrap();
        assert_eq!(g.edges().len(), 6);
        let strict = queen_contiguity_from_geojson(Path::new("mem"), &text, "GEOID", 1e-10).unwrap();
        assert_eq!(strict.edges().len(), 3);
    }

    #[test]
    fn missing_id_property() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[]}}]}"#;
        let err = queen_contiguity_from_geojson(Path::new("mem"), text, "GEOID", 1e-9).unwrap_err();
        assert!(err.to_string().contains("GEOID"));
    }
}
