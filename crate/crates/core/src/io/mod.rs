//! File-backed configuration, ingestion and analysis outputs.
//!
//! A run is described by an INI file:
//!
//! ```ini
//! [data]
//! counts = counts.csv
//! population = population_pep.csv
//! moe = moe_acs.csv                 ; ACS only
//! covariates = covariates.csv       ; optional
//! covariate_columns = prop_black, ice
//! adjacency = adjacency.csv         ; or a .geojson file
//! source = PEP
//!
//! [model]
//! offset_model = BerksonICAR
//!
//! [sampler]
//! profile = desk
//! seed = 7
//!
//! [output]
//! directory = out/pep_icar
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

mod outputs;
mod tables;

pub use outputs::{
    choropleth_rows, ice_index, join_geojson, read_choropleth, read_summary_csv, relative_error_table,
    relative_risk_summary, write_acceptance_csv, write_choropleth, write_summary_csv, ChoroplethRow,
    CHOROPLETH_HEADER,
};
pub use tables::{ingest_dataset, read_cell_grid, read_cell_values, COUNTS_HEADER, MOE_HEADER, POPULATION_HEADER};

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::graph::{queen_contiguity_from_geojson, read_edge_list, AreaGraph};
use crate::mcmc::SamplerSettings;
use crate::model::{ModelConfig, OffsetModel, Source, StratifiedDataset};
use crate::offsets::acs_moe_to_sd;
use crate::sim::SimulationSpec;

/// Vertex-matching tolerance for GeoJSON queen contiguity, in map units.
pub const DEFAULT_QUEEN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub counts: PathBuf,
    pub population: PathBuf,
    pub moe: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    /// `None` takes every column of the covariates file.
    pub covariate_columns: Option<Vec<String>>,
    pub intercept: bool,
    pub adjacency: PathBuf,
    /// Property holding the area id when `adjacency` is GeoJSON.
    pub geojson_id: Option<String>,
    pub source: Source,
    pub reference_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub offset_model: OffsetModel,
    pub beta_prior_sd: Option<f64>,
    pub delta_prior_scale: Option<f64>,
    pub random_effects: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    pub data: DataConfig,
    pub model: ModelSection,
    pub sampler: SamplerSettings,
    pub output_dir: PathBuf,
    /// Optional GeoJSON to join choropleth values onto.
    pub geometry: Option<PathBuf>,
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a ini::Properties>,
    source: &'a Path,
}

impl<'a> Section<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim).filter(|v| !v.is_empty())
    }

    fn required(&self, key: &str) -> Result<&'a str> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("{}: [{}] {key} is required", self.source.display(), self.name)))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    Error::Config(format!("{}: [{}] {key} = `{v}` is not valid", self.source.display(), self.name))
                })
            })
            .transpose()
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        if let Some(props) = self.props {
            for (key, _) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(Error::Config(format!(
                        "{}: unknown key `{key}` in [{}]",
                        self.source.display(),
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

fn parse_flag(s: &Section, key: &str, default: bool, path: &Path) -> Result<bool> {
    match s.raw(key) {
        None => Ok(default),
        Some(v) => parse_bool(v)
            .ok_or_else(|| Error::Config(format!("{}: [{}] {key} = `{v}` is not a boolean", path.display(), s.name))),
    }
}

fn parse_sampler(sampler: &Section, path: &Path) -> Result<SamplerSettings> {
    sampler.check_keys(&[
        "profile",
        "chains",
        "iterations",
        "burn_in",
        "thin",
        "seed",
        "adapt_target",
        "adapt_window",
        "adapt_rate",
        "parallel",
        "record_latent",
    ])?;
    let mut settings = match sampler.raw("profile").unwrap_or("paper") {
        "paper" => SamplerSettings::paper(),
        "desk" => SamplerSettings::desk(),
        other => return Err(Error::Config(format!("{}: unknown sampler profile `{other}`", path.display()))),
    };
    if let Some(v) = sampler.parse("chains")? {
        settings.n_chains = v;
    }
    if let Some(v) = sampler.parse("iterations")? {
        settings.n_iterations = v;
    }
    if let Some(v) = sampler.parse("burn_in")? {
        settings.burn_in = v;
    }
    if let Some(v) = sampler.parse("thin")? {
        settings.thin = v;
    }
    if let Some(v) = sampler.parse("seed")? {
        settings.seed = v;
    }
    if let Some(v) = sampler.parse("adapt_target")? {
        settings.adapt_target = v;
    }
    if let Some(v) = sampler.parse("adapt_window")? {
        settings.adapt_window = v;
    }
    if let Some(v) = sampler.parse("adapt_rate")? {
        settings.adapt_rate = v;
    }
    settings.parallel = parse_flag(sampler, "parallel", true, path)?;
    settings.record_latent = parse_flag(sampler, "record_latent", false, path)?;
    Ok(settings)
}

/// Sampler settings from the `[sampler]` section of a config or settings
/// echo; other sections are ignored.
pub fn read_sampler_settings(path: &Path) -> Result<SamplerSettings> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ini = Ini::load_from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let settings = parse_sampler(
        &Section {
            name: "sampler",
            props: ini.section(Some("sampler")),
            source: path,
        },
        path,
    )?;
    settings.validate()?;
    Ok(settings)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses INI text; `path` anchors relative paths and names errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for name in ini.sections().flatten() {
            if !["data", "model", "sampler", "output"].contains(&name) {
                return Err(Error::Config(format!("{}: unknown section [{name}]", path.display())));
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let section = |name: &'static str| Section {
            name,
            props: ini.section(Some(name)),
            source: path,
        };

        let data = section("data");
        data.check_keys(&[
            "counts",
            "population",
            "moe",
            "covariates",
            "covariate_columns",
            "intercept",
            "adjacency",
            "geojson_id",
            "source",
            "reference_rate",
        ])?;
        let data_config = DataConfig {
            counts: resolve(data.required("counts")?),
            population: resolve(data.required("population")?),
            moe: data.raw("moe").map(resolve),
            covariates: data.raw("covariates").map(resolve),
            covariate_columns: data
                .raw("covariate_columns")
                .map(|v| v.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()),
            intercept: parse_flag(&data, "intercept", true, path)?,
            adjacency: resolve(data.required("adjacency")?),
            geojson_id: data.raw("geojson_id").map(str::to_string),
            source: data.required("source")?.parse()?,
            reference_rate: data.parse("reference_rate")?,
        };

        let model = section("model");
        model.check_keys(&["offset_model", "beta_prior_sd", "delta_prior_scale", "random_effects"])?;
        let model_section = ModelSection {
            offset_model: model.required("offset_model")?.parse()?,
            beta_prior_sd: model.parse("beta_prior_sd")?,
            delta_prior_scale: model.parse("delta_prior_scale")?,
            random_effects: parse_flag(&model, "random_effects", true, path)?,
        };

        let settings = parse_sampler(&section("sampler"), path)?;

        let output = section("output");
        output.check_keys(&["directory", "geometry"])?;
        let config = RunConfig {
            path: path.to_path_buf(),
            data: data_config,
            model: model_section,
            sampler: settings,
            output_dir: resolve(output.raw("directory").unwrap_or("output")),
            geometry: output.raw("geometry").map(resolve),
        };
        config.validate()?;
        Ok(config)
    }

    /// Referenced inputs exist and the model suits the source.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let mut inputs = vec![("counts", &d.counts), ("population", &d.population), ("adjacency", &d.adjacency)];
        if let Some(p) = &d.moe {
            inputs.push(("moe", p));
        }
        if let Some(p) = &d.covariates {
            inputs.push(("covariates", p));
        }
        if let Some(p) = &self.geometry {
            inputs.push(("geometry", p));
        }
        for (key, p) in inputs {
            if !p.is_file() {
                return Err(Error::data(p, format!("input file for `{key}` does not exist")));
            }
        }
        if self.model.offset_model == OffsetModel::BerksonKnown && d.source != Source::Acs {
            return Err(Error::Config(format!(
                "{}: BerksonKnown needs source = ACS, got {}",
                self.path.display(),
                d.source
            )));
        }
        if (self.model.offset_model == OffsetModel::BerksonKnown || d.source == Source::Acs) && d.moe.is_none() {
            return Err(Error::Config(format!(
                "{}: [data] moe is required for {} with source {} (missing margin-of-error file)",
                self.path.display(),
                self.model.offset_model,
                d.source
            )));
        }
        self.sampler.validate()
    }

    pub fn model_config(&self, graph: &AreaGraph) -> Result<ModelConfig> {
        let mut config = ModelConfig::new(self.model.offset_model, graph)?;
        if let Some(v) = self.model.beta_prior_sd {
            config.beta_prior_sd = v;
        }
        if let Some(v) = self.model.delta_prior_scale {
            config.delta_prior_scale = v;
        }
        if !self.model.random_effects {
            config = config.without_random_effects();
        }
        Ok(config)
    }

    /// Effective settings as INI text, with absolute input paths. The output
    /// directory and chain scheduling are left out since they do not affect
    /// results.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let path = |p: &Path| p.display().to_string();
        let d = &self.data;
        {
            let mut s = ini.with_section(Some("data"));
            s.set("counts", path(&d.counts)).set("population", path(&d.population));
            if let Some(p) = &d.moe {
                s.set("moe", path(p));
            }
            if let Some(p) = &d.covariates {
                s.set("covariates", path(p));
            }
            if let Some(c) = &d.covariate_columns {
                s.set("covariate_columns", c.join(", "));
            }
            s.set("intercept", d.intercept.to_string())
                .set("adjacency", path(&d.adjacency))
                .set("source", d.source.to_string());
            if let Some(id) = &d.geojson_id {
                s.set("geojson_id", id.clone());
            }
            if let Some(r) = d.reference_rate {
                s.set("reference_rate", r.to_string());
            }
        }
        {
            let mut s = ini.with_section(Some("model"));
            s.set("offset_model", self.model.offset_model.to_string())
                .set("random_effects", self.model.random_effects.to_string());
            if let Some(v) = self.model.beta_prior_sd {
                s.set("beta_prior_sd", v.to_string());
            }
            if let Some(v) = self.model.delta_prior_scale {
                s.set("delta_prior_scale", v.to_string());
            }
        }
        let st = &self.sampler;
        ini.with_section(Some("sampler"))
            .set("chains", st.n_chains.to_string())
            .set("iterations", st.n_iterations.to_string())
            .set("burn_in", st.burn_in.to_string())
            .set("thin", st.thin.to_string())
            .set("seed", st.seed.to_string())
            .set("adapt_target", st.adapt_target.to_string())
            .set("adapt_window", st.adapt_window.to_string())
            .set("adapt_rate", st.adapt_rate.to_string())
            .set("record_latent", st.record_latent.to_string());
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("INI text is UTF-8")
    }
}

/// Reads the adjacency (edge list or GeoJSON) in the dataset's area order.
pub fn load_graph(config: &DataConfig, data: &StratifiedDataset) -> Result<AreaGraph> {
    let path = &config.adjacency;
    let is_geojson = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("geojson") || e.eq_ignore_ascii_case("json"));
    if !is_geojson {
        return read_edge_list(path, Some(data.area_ids()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id_key = config.geojson_id.as_deref().unwrap_or("GEOID");
    let graph = queen_contiguity_from_geojson(path, &text, id_key, DEFAULT_QUEEN_TOLERANCE)?;
    let mut order = Vec::with_capacity(data.n_areas());
    for id in data.area_ids() {
        order.push(
            graph
                .index_of(id)
                .ok_or_else(|| Error::data(path, format!("area id `{id}` has no feature")))?,
        );
    }
    if order.len() != graph.n_areas() {
        let extra = graph
            .area_ids()
            .iter()
            .find(|id| !data.area_ids().contains(id))
            .cloned()
            .unwrap_or_default();
        return Err(Error::data(path, format!("feature `{extra}` is not in the counts file")));
    }
    graph.subgraph(&order)
}

/// Simulation inputs from a fixture directory holding `population_acs.csv`,
/// `moe_acs.csv`, `population_pep.csv`, `population_wp.csv` and
/// `adjacency.csv`.
pub fn load_simulation_spec(dir: &Path) -> Result<(SimulationSpec, AreaGraph)> {
    let acs = read_cell_values(&dir.join("population_acs.csv"), "population")?;
    let areas = ordered_unique(acs.iter().map(|r| &r.0));
    let groups = ordered_unique(acs.iter().map(|r| &r.1));
    let grid = |name: &str, column: &str| read_cell_grid(&dir.join(name), column, &areas, &groups);
    let base = grid("population_acs.csv", "population")?;
    let sd = grid("moe_acs.csv", "moe")?
        .into_iter()
        .map(acs_moe_to_sd)
        .collect::<Result<Vec<_>>>()?;
    let mut spec = SimulationSpec::new(areas.clone(), groups.clone(), base, sd);
    spec.pep_population = grid("population_pep.csv", "population")?;
    spec.wp_population = grid("population_wp.csv", "population")?;
    spec.validate()?;
    let graph = read_edge_list(&dir.join("adjacency.csv"), Some(&areas))?;
    Ok((spec, graph))
}

fn ordered_unique<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for item in items {
        if seen.insert(item.clone()) {
            out.push(item.clone());
        }
    }
    out
}
