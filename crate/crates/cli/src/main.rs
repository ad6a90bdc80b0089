//! `bsbe` command-line interface.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bsbe_core::io::{
    choropleth_rows, ice_index, ingest_dataset, join_geojson, load_graph, load_simulation_spec, read_cell_grid,
    read_cell_values, read_sampler_settings, relative_error_table, relative_risk_summary, write_acceptance_csv,
    write_choropleth, write_summary_csv, RunConfig,
};
use bsbe_core::mcmc::{read_binary, run_chains, summarize, write_binary, ChainSet, SamplerSettings};
use bsbe_core::offsets::acs_moe_to_sd;
use bsbe_core::sim::{default_combinations, run_study};
use bsbe_core::Error;

const CHAINS_FILE: &str = "chains.bin";
const NAMES_FILE: &str = "parameters.txt";
const SETTINGS_FILE: &str = "settings.ini";

#[derive(Parser)]
#[command(name = "bsbe", version, about = "Disease mapping with error-prone population offsets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study on a fixture directory.
    Simulate {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        /// Seed for data generation; sampler seeds derive from it.
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
    },
    /// Fit the model described by a run config.
    Fit {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `[output] directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run chains one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Posterior and relative-risk summaries from a fit directory.
    Summarize {
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// GeoJSON to join the relative risks onto.
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, default_value = "GEOID")]
        id_key: String,
    },
    /// R-hat, ESS and acceptance report plus trace CSVs.
    Diagnose {
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parameters to trace; defaults to the global ones.
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
    },
    /// ICE index from `area_id,affluent_white,poor_black,households`.
    Ice {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative error `sd / population` from population and MOE tables.
    Relerr {
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        moe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest the inputs of a run config and report problems.
    Validate { config: PathBuf },
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    fn exit_status(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_data_error() => 2,
            Failure::Core(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(failure.exit_status())
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate {
            fixture,
            out,
            replicates,
            seed,
            profile,
        } => simulate(&fixture, &out, replicates, seed, profile),
        Command::Fit {
            config,
            seed,
            out,
            serial,
        } => fit(&config, seed, out, serial),
        Command::Summarize {
            run,
            out,
            geometry,
            id_key,
        } => {
            let out = out.unwrap_or_else(|| run.clone());
            create_dir(&out)?;
            let chains = load_run(&run)?;
            emit_summaries(&chains, &out)?;
            if let Some(geometry) = geometry {
                let rows = bsbe_core::io::read_choropleth(&out.join("choropleth.csv"))?;
                join_geojson(&geometry, &id_key, &rows, &out.join("choropleth.geojson"))?;
            }
            Ok(())
        }
        Command::Diagnose { run, out, params } => diagnose(&run, out, params),
        Command::Ice { input, out } => ice(&input, &out),
        Command::Relerr { population, moe, out } => relerr(&population, &moe, &out),
        Command::Validate { config } => {
            let config = RunConfig::load(&config)?;
            let data = ingest_dataset(&config.data)?;
            let graph = load_graph(&config.data, &data)?;
            config.model_config(&graph)?.check_compatible(&data, &graph)?;
            println!(
                "ok: {} areas, {} groups, {} covariates, {} edges",
                data.n_areas(),
                data.n_groups(),
                data.n_covariates(),
                graph.edges().len()
            );
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn simulate(fixture: &Path, out: &Path, replicates: usize, seed: u64, profile: Profile) -> CliResult {
    if replicates == 0 {
        return Err(Failure::Usage("--replicates must be positive".into()));
    }
    let (mut spec, graph) = load_simulation_spec(fixture)?;
    spec.n_replicates = replicates;
    spec.seed = seed;
    let mut settings = match profile {
        Profile::Desk => SamplerSettings::desk(),
        Profile::Paper => SamplerSettings::paper(),
    };
    settings.seed = seed;
    let report = run_study(&spec, &graph, &default_combinations(), &settings)?;
    create_dir(out)?;
    report.write_csv(&out.join("study.csv"))?;
    let mut log = String::from("source,model,replicate,clamped,status\n");
    for f in &report.fits {
        let status = match &f.outcome {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("\"{}\"", e.replace('"', "'")),
        };
        log.push_str(&format!("{},{},{},{},{status}\n", f.source, f.model, f.replicate, f.clamped));
    }
    write_text(&out.join("fits.csv"), &log)?;
    let failed = report.failures().count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} fits failed; see fits.csv", report.fits.len());
    }
    Ok(())
}

fn fit(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>, serial: bool) -> CliResult {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.sampler.seed = seed;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    if serial {
        config.sampler.parallel = false;
    }
    let data = ingest_dataset(&config.data)?;
    let graph = load_graph(&config.data, &data)?;
    let model = config.model_config(&graph)?;
    let chains = run_chains(&data, &model, &graph, &config.sampler)?;

    let dir = &config.output_dir;
    create_dir(dir)?;
    write_text(&dir.join(SETTINGS_FILE), &config.to_ini_string())?;
    write_binary(&chains, &dir.join(CHAINS_FILE), &dir.join(NAMES_FILE))?;
    write_acceptance_csv(&chains, &dir.join("acceptance.csv"))?;
    emit_summaries(&chains, dir)?;
    if let Some(geometry) = &config.geometry {
        let rows = bsbe_core::io::read_choropleth(&dir.join("choropleth.csv"))?;
        let key = config.data.geojson_id.as_deref().unwrap_or("GEOID");
        join_geojson(geometry, key, &rows, &dir.join("choropleth.geojson"))?;
    }
    Ok(())
}

fn load_run(run: &Path) -> CliResult<ChainSet> {
    let settings_path = run.join(SETTINGS_FILE);
    let settings = if settings_path.is_file() {
        read_sampler_settings(&settings_path)?
    } else {
        SamplerSettings::default()
    };
    Ok(read_binary(&run.join(CHAINS_FILE), &run.join(NAMES_FILE), settings)?)
}

/// Area and group labels in first-appearance order of `log_rr[a:g]` names.
fn cell_labels(chains: &ChainSet) -> (Vec<String>, Vec<String>) {
    let mut areas: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    for name in chains.names() {
        let Some(cell) = name.strip_prefix("log_rr[").and_then(|c| c.strip_suffix(']')) else {
            continue;
        };
        let Some((a, g)) = cell.rsplit_once(':') else {
            continue;
        };
        if !areas.iter().any(|x| x == a) {
            areas.push(a.to_string());
        }
        if !groups.iter().any(|x| x == g) {
            groups.push(g.to_string());
        }
    }
    (areas, groups)
}

fn emit_summaries(chains: &ChainSet, dir: &Path) -> CliResult {
    write_summary_csv(&summarize(chains)?, &dir.join("summary.csv"))?;
    let rr = relative_risk_summary(chains)?;
    let (areas, groups) = cell_labels(chains);
    write_choropleth(&choropleth_rows(&rr, &areas, &groups)?, &dir.join("choropleth.csv"))?;
    Ok(())
}

fn is_global(name: &str) -> bool {
    ["beta[", "rho", "delta", "sigma_wp", "tau_err["].iter().any(|p| name.starts_with(p))
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn diagnose(run: &Path, out: Option<PathBuf>, params: Vec<String>) -> CliResult {
    let chains = load_run(run)?;
    let out = out.unwrap_or_else(|| run.join("diagnostics"));
    let trace_dir = out.join("trace");
    create_dir(&trace_dir)?;
    let table = summarize(&chains)?;
    let mut report = String::from("parameter,rhat,ess\n");
    for r in &table.rows {
        report.push_str(&format!("{},{},{}\n", r.name, r.rhat, r.ess));
    }
    write_text(&out.join("convergence.csv"), &report)?;
    write_acceptance_csv(&chains, &out.join("acceptance.csv"))?;

    let selected: Vec<usize> = if params.is_empty() {
        (0..chains.n_params()).filter(|&p| is_global(&chains.names()[p])).collect()
    } else {
        params
            .iter()
            .map(|name| {
                chains
                    .param_index(name)
                    .ok_or_else(|| Failure::Usage(format!("unknown parameter `{name}`")))
            })
            .collect::<CliResult<_>>()?
    };
    for p in selected {
        let mut text = String::from("draw");
        for c in 0..chains.n_chains() {
            text.push_str(&format!(",chain_{c}"));
        }
        text.push('\n');
        let columns: Vec<&[f64]> = (0..chains.n_chains()).map(|c| chains.chain_draws(c, p)).collect();
        for d in 0..chains.n_draws() {
            text.push_str(&d.to_string());
            for col in &columns {
                text.push_str(&format!(",{}", col[d]));
            }
            text.push('\n');
        }
        write_text(&trace_dir.join(format!("{}.csv", file_safe(&chains.names()[p]))), &text)?;
    }
    let worst = table.rows.iter().filter(|r| is_global(&r.name)).map(|r| r.rhat).fold(f64::NAN, f64::max);
    println!("max split R-hat over global parameters: {worst}");
    for (block, rate) in chains.acceptance_rates() {
        println!("acceptance {block}: {rate:.3}");
    }
    Ok(())
}

fn ice(input: &Path, out: &Path) -> CliResult {
    let bad = |msg: String| Failure::Core(Error::Data {
        path: input.to_path_buf(),
        message: msg,
    });
    let text = fs::read_to_string(input).map_err(|e| Error::Io {
        path: input.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expected = "area_id,affluent_white,poor_black,households";
    if header.trim() != expected {
        return Err(bad(format!("expected header `{expected}`, found `{header}`")));
    }
    let mut result = String::from("area_id,ice\n");
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", i + 2)));
        }
        let count = |j: usize| -> CliResult<u64> {
            fields[j]
                .parse()
                .map_err(|_| bad(format!("line {}: cannot parse `{}` as a count", i + 2, fields[j])))
        };
        let value = ice_index(count(1)?, count(2)?, count(3)?)
            .map_err(|e| bad(format!("area `{}`: {e}", fields[0])))?;
        result.push_str(&format!("{},{value}\n", fields[0]));
    }
    write_text(out, &result)
}

fn relerr(population: &Path, moe: &Path, out: &Path) -> CliResult {
    let cells = read_cell_values(population, "population")?;
    let mut areas: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    for (a, g, _) in &cells {
        if !areas.contains(a) {
            areas.push(a.clone());
        }
        if !groups.contains(g) {
            groups.push(g.clone());
        }
    }
    let pop = read_cell_grid(population, "population", &areas, &groups)?;
    let sd = read_cell_grid(moe, "moe", &areas, &groups)?
        .into_iter()
        .map(acs_moe_to_sd)
        .collect::<Result<Vec<_>, _>>()?;
    let rel = relative_error_table(&pop, &sd)?;
    let mut text = String::from("area_id,age_group,population,sd,relative_error\n");
    for (a, area) in areas.iter().enumerate() {
        for (g, group) in groups.iter().enumerate() {
            let k = a * groups.len() + g;
            text.push_str(&format!("{area},{group},{},{},{}\n", pop[k], sd[k], rel[k]));
        }
    }
    write_text(out, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_status_by_failure_kind() {
        assert_eq!(Failure::Usage("x".into()).exit_status(), 1);
        assert_eq!(Failure::from(Error::UnknownId("13001".into())).exit_status(), 2);
        assert_eq!(Failure::from(Error::Config("moe".into())).exit_status(), 2);
        assert_eq!(Failure::from(Error::InsufficientDraws("none".into())).exit_status(), 3);
        assert_eq!(Failure::from(Error::Initialization(0)).exit_status(), 3);
    }
}
