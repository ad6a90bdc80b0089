//! Writes the synthetic Georgia fixtures under `data/georgia/`.
//!
//! `full/`: 159 counties by ten five-year age bands.
//! `desk/`: 20 counties in breadth-first order from the first county, with
//! the bands collapsed into four groups.
//!
//! Usage: `cargo run -p bsbe-core --example make_georgia_fixture [data/georgia]`

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use bsbe_core::graph::{read_edge_list, write_edge_list, AreaGraph};

const SEED: u64 = 20_240_611;
/// Rescales the 1990 county totals to roughly today's state total.
const GROWTH: f64 = 1.6535;
const BANDS: [&str; 10] = [
    "15-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54", "55-59", "60-64",
];
const BAND_SHARES: [f64; 10] = [0.070, 0.072, 0.071, 0.068, 0.067, 0.068, 0.067, 0.064, 0.058, 0.050];
const DESK_GROUPS: [(&str, &[usize]); 4] = [
    ("15-29", &[0, 1, 2]),
    ("30-44", &[3, 4, 5]),
    ("45-54", &[6, 7]),
    ("55-64", &[8, 9]),
];
const DESK_AREAS: usize = 20;
/// Reference death rate for the synthetic applied counts.
const DEATH_RATE: f64 = 2.0e-4;

struct County {
    id: String,
    total: f64,
    prop_black: f64,
    prop_poverty: f64,
    prop_bachelor: f64,
}

struct Fixture {
    ids: Vec<String>,
    groups: Vec<String>,
    acs: Vec<f64>,
    moe: Vec<f64>,
    pep: Vec<f64>,
    wp: Vec<f64>,
    deaths: Vec<u64>,
    prop_black: Vec<f64>,
    ice: Vec<f64>,
    households: Vec<[u64; 3]>,
}

fn read_counties(path: &Path) -> Vec<County> {
    let mut reader = csv::Reader::from_path(path).expect("county table");
    reader
        .records()
        .map(|r| {
            let r = r.expect("county row");
            let f = |i: usize| r[i].parse::<f64>().expect("numeric field");
            County {
                id: r[0].to_string(),
                total: f(1),
                prop_black: f(2),
                prop_poverty: f(3),
                prop_bachelor: f(4),
            }
        })
        .collect()
}

/// Mean of iid N(0,1) noise over each area and its neighbors, rescaled to `sd`.
fn smooth_field(graph: &AreaGraph, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..graph.n_areas()).map(|_| Normal::new(0.0, 1.0).unwrap().sample(rng)).collect();
    let raw: Vec<f64> = (0..graph.n_areas())
        .map(|a| {
            let nb = graph.neighbors(a);
            (noise[a] + nb.iter().map(|&b| noise[b]).sum::<f64>()) / (1 + nb.len()) as f64
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64;
    raw.iter().map(|v| (v - mean) / var.sqrt() * sd).collect()
}

fn build_full(counties: &[County], graph: &AreaGraph, rng: &mut ChaCha8Rng) -> Fixture {
    let n = counties.len();
    let g = BANDS.len();
    let std_normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let error_field = smooth_field(graph, 0.25, rng);
    let risk_field = smooth_field(graph, 0.3, rng);

    let mut households = Vec::with_capacity(n);
    let mut ice = Vec::with_capacity(n);
    for c in counties {
        let hh = (c.total * GROWTH / 2.6).round();
        let white = ((1.0 - c.prop_black) * (c.prop_bachelor * 1.2).min(0.6) * hh).round();
        let black = (c.prop_black * (c.prop_poverty * 1.5).min(0.6) * hh).round();
        households.push([white as u64, black as u64, hh as u64]);
        ice.push((white - black) / hh);
    }
    let black_mean = counties.iter().map(|c| c.prop_black).sum::<f64>() / n as f64;

    let (mut acs, mut moe, mut pep, mut wp, mut deaths) = (vec![], vec![], vec![], vec![], vec![]);
    for (a, c) in counties.iter().enumerate() {
        for band in 0..g {
            let share = BAND_SHARES[band] * (0.08 * std_normal.sample(rng)).exp();
            let n_acs = (c.total * GROWTH * share).round().max(20.0);
            let sd = 0.9 * n_acs.powf(0.75) * (error_field[a] + 0.15 * std_normal.sample(rng)).exp();
            acs.push(n_acs);
            moe.push((1.645 * sd).round().max(1.0));
            pep.push((n_acs * (0.03 * std_normal.sample(rng) - 0.015).exp()).round().max(1.0));
            wp.push((n_acs * (0.12 * std_normal.sample(rng) - 0.025).exp()).round().max(1.0));
            let log_rr = 0.8 * (c.prop_black - black_mean) - 1.5 * ice[a] + risk_field[a] + 0.1 * band as f64 - 0.45;
            let mean = DEATH_RATE * n_acs * log_rr.exp();
            deaths.push(Poisson::new(mean).unwrap().sample(rng) as u64);
        }
    }
    Fixture {
        ids: counties.iter().map(|c| c.id.clone()).collect(),
        groups: BANDS.iter().map(|s| s.to_string()).collect(),
        acs,
        moe,
        pep,
        wp,
        deaths,
        prop_black: counties.iter().map(|c| c.prop_black).collect(),
        ice,
        households,
    }
}

/// Restricts to `areas` and sums bands into the desk groups. MOEs combine
/// in quadrature.
fn collapse(full: &Fixture, areas: &[usize]) -> Fixture {
    let g = full.groups.len();
    let (mut acs, mut moe, mut pep, mut wp, mut deaths) = (vec![], vec![], vec![], vec![], vec![]);
    for &a in areas {
        for (_, bands) in DESK_GROUPS {
            let sum = |v: &[f64]| bands.iter().map(|&b| v[a * g + b]).sum::<f64>();
            acs.push(sum(&full.acs));
            moe.push(bands.iter().map(|&b| full.moe[a * g + b].powi(2)).sum::<f64>().sqrt().round());
            pep.push(sum(&full.pep));
            wp.push(sum(&full.wp));
            deaths.push(bands.iter().map(|&b| full.deaths[a * g + b]).sum());
        }
    }
    Fixture {
        ids: areas.iter().map(|&a| full.ids[a].clone()).collect(),
        groups: DESK_GROUPS.iter().map(|(l, _)| l.to_string()).collect(),
        acs,
        moe,
        pep,
        wp,
        deaths,
        prop_black: areas.iter().map(|&a| full.prop_black[a]).collect(),
        ice: areas.iter().map(|&a| full.ice[a]).collect(),
        households: areas.iter().map(|&a| full.households[a]).collect(),
    }
}

fn cell_table(f: &Fixture, column: &str, value: impl Fn(usize) -> String) -> String {
    let mut out = format!("area_id,age_group,{column}\n");
    for (a, id) in f.ids.iter().enumerate() {
        for (g, group) in f.groups.iter().enumerate() {
            writeln!(out, "{id},{group},{}", value(a * f.groups.len() + g)).unwrap();
        }
    }
    out
}

const CONFIGS: [(&str, &str, &str, bool); 6] = [
    ("fit_acs_naive", "ACS", "Naive", true),
    ("fit_acs_known", "ACS", "BerksonKnown", true),
    ("fit_pep_naive", "PEP", "Naive", false),
    ("fit_pep_icar", "PEP", "BerksonICAR", false),
    ("fit_wp_naive", "WP", "Naive", false),
    ("fit_wp_berkson", "WP", "BerksonWP", false),
];

fn write_fixture(dir: &Path, f: &Fixture, graph: &AreaGraph, profile: &str) {
    fs::create_dir_all(dir).unwrap();
    let put = |name: &str, text: String| fs::write(dir.join(name), text).unwrap();
    put("counts.csv", cell_table(f, "deaths", |k| f.deaths[k].to_string()));
    put("population_acs.csv", cell_table(f, "population", |k| f.acs[k].to_string()));
    put("moe_acs.csv", cell_table(f, "moe", |k| f.moe[k].to_string()));
    put("population_pep.csv", cell_table(f, "population", |k| f.pep[k].to_string()));
    put("population_wp.csv", cell_table(f, "population", |k| f.wp[k].to_string()));
    let g = f.groups.len();
    let mut cov = String::from("area_id,age_group,prop_black,ice\n");
    for (a, id) in f.ids.iter().enumerate() {
        for group in &f.groups {
            writeln!(cov, "{id},{group},{},{}", f.prop_black[a], f.ice[a]).unwrap();
        }
    }
    put("covariates.csv", cov);
    let mut hh = String::from("area_id,affluent_white,poor_black,households\n");
    for (id, [w, b, n]) in f.ids.iter().zip(&f.households) {
        writeln!(hh, "{id},{w},{b},{n}").unwrap();
    }
    put("households.csv", hh);
    assert_eq!(f.acs.len(), f.ids.len() * g);
    write_edge_list(&dir.join("adjacency.csv"), graph).unwrap();

    for (name, source, model, moe) in CONFIGS {
        let population = format!("population_{}.csv", source.to_ascii_lowercase());
        let moe_line = if moe { "moe = moe_acs.csv\n" } else { "" };
        put(
            &format!("{name}.ini"),
            format!(
                "[data]\ncounts = counts.csv\npopulation = {population}\n{moe_line}covariates = covariates.csv\n\
                 covariate_columns = prop_black, ice\nadjacency = adjacency.csv\nsource = {source}\n\n\
                 [model]\noffset_model = {model}\n\n[sampler]\nprofile = {profile}\nseed = 7\n\n\
                 [output]\ndirectory = out/{name}\n"
            ),
        );
    }
}

fn main() {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/georgia"));
    let counties = read_counties(&root.join("counties.csv"));
    let ids: Vec<String> = counties.iter().map(|c| c.id.clone()).collect();
    let graph = read_edge_list(&root.join("adjacency.csv"), Some(&ids)).expect("adjacency");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let full = build_full(&counties, &graph, &mut rng);
    write_fixture(&root.join("full"), &full, &graph, "paper");

    let areas: Vec<usize> = graph.breadth_first_order(0).into_iter().take(DESK_AREAS).collect();
    let desk_graph = graph.subgraph(&areas).expect("desk subgraph");
    assert_eq!(desk_graph.connected_components().len(), 1, "desk subset must be connected");
    write_fixture(&root.join("desk"), &collapse(&full, &areas), &desk_graph, "desk");
    println!("wrote {} and {}", root.join("full").display(), root.join("desk").display());
}
