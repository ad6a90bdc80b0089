//! The BSBE Gibbs sweep.
//!
//! Each scalar coordinate gets its own adaptive scale. The proposal sd is that
//! scale times a fixed preconditioner built from the data and the current
//! values of *other* blocks, which keeps every move symmetric.
//!
//! Structured-effect moves stay on the sum-to-zero subspace of their
//! component: site `c` moves by `e (1 - 1/m)` and every other site of the
//! component by `-e/m`. A lazy per-component shift keeps each move O(degree).
//!
//! Error fields also get a level move that translates a component of the
//! field and rescales the latent log-offset deviations with it, so the level
//! is not confined to the slow single-site random walk.

use super::adapt::{metropolis_accept, standard_normal, BlockCount, Ledger};
use super::{run_model, ChainModel, ChainRng, ChainSet, SamplerSettings};
use crate::error::{Error, Result};
use crate::graph::{center_in_place, AreaGraph};
use crate::math::{inv_logit, logit, normal_ln_pdf, normal_ln_pdf_var};
use crate::model::density::{effective_log_gamma, fixed_part, random_effect};
use crate::model::{log_posterior, ModelConfig, OffsetModel, ParameterState, StratifiedDataset};
use crate::offsets::{cell_error_variance, sigma_wp_ln_prior};

/// Parameter blocks, in sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Beta,
    Theta,
    Phi,
    Rho,
    Delta,
    LogGamma,
    LogSigma,
    /// Joint move of an error field's component level and the scale of the
    /// matching latent log-offset deviations.
    LogSigmaLevel,
    ErrorPrecision,
    SigmaWp,
}

const N_BLOCKS: usize = 10;

impl Block {
    pub const ALL: [Block; N_BLOCKS] = [
        Block::Beta,
        Block::Theta,
        Block::Phi,
        Block::Rho,
        Block::Delta,
        Block::LogGamma,
        Block::LogSigma,
        Block::LogSigmaLevel,
        Block::ErrorPrecision,
        Block::SigmaWp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Beta => "beta",
            Block::Theta => "theta",
            Block::Phi => "phi",
            Block::Rho => "rho",
            Block::Delta => "delta",
            Block::LogGamma => "log_gamma",
            Block::LogSigma => "log_sigma",
            Block::LogSigmaLevel => "log_sigma_level",
            Block::ErrorPrecision => "tau_err",
            Block::SigmaWp => "sigma_wp",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Proposal counts from a single [`block_update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockOutcome {
    pub proposed: u64,
    pub accepted: u64,
}

/// Data-derived quantities shared by all chains.
struct Layout {
    n_groups: usize,
    k: usize,
    model: OffsetModel,
    active: [bool; N_BLOCKS],
    slot_start: [usize; N_BLOCKS],
    n_slots: usize,
    y: Vec<f64>,
    y_area: Vec<f64>,
    /// Expected counts under the pooled rate, `R n`.
    e0_cell: Vec<f64>,
    e0_area: Vec<f64>,
    sum_yx: Vec<f64>,
    beta_precond: Vec<f64>,
    latent_cells: Vec<usize>,
    /// Non-singleton components and each area's index into them.
    theta_components: Vec<Vec<usize>>,
    theta_component_of: Vec<Option<usize>>,
    rank: usize,
}

impl Layout {
    fn new(data: &StratifiedDataset, config: &ModelConfig, graph: &AreaGraph) -> Self {
        let (n_areas, n_groups, k, cells) =
            (data.n_areas(), data.n_groups(), data.n_covariates(), data.n_cells());
        let model = config.offset_model;
        let re = config.random_effects;
        let active = [
            k > 0,
            re && graph.icar_rank() > 0,
            re,
            re,
            re,
            model.has_latent_offsets(),
            model.has_error_fields(),
            model.has_error_fields(),
            model.has_error_fields(),
            model == OffsetModel::BerksonWp,
        ];
        let n_components = graph.connected_components().len();
        let sizes = [k, n_areas, n_areas, 1, 1, cells, cells, n_groups * n_components, n_groups, 1];
        let mut slot_start = [0; N_BLOCKS];
        let mut n_slots = 0;
        for b in 0..N_BLOCKS {
            slot_start[b] = n_slots;
            n_slots += sizes[b];
        }

        let y: Vec<f64> = data.counts().iter().map(|&c| c as f64).collect();
        let rate = data.reference_rate();
        let e0_cell: Vec<f64> = data.offsets().iter().map(|n| rate * n).collect();
        let y_area = (0..n_areas)
            .map(|a| y[a * n_groups..(a + 1) * n_groups].iter().sum())
            .collect();
        let e0_area = (0..n_areas)
            .map(|a| e0_cell[a * n_groups..(a + 1) * n_groups].iter().sum())
            .collect();
        let mut sum_yx = vec![0.0; k];
        let mut info = vec![1.0 / (config.beta_prior_sd * config.beta_prior_sd); k];
        for cell in 0..cells {
            for (j, x) in data.covariate_row(cell).iter().enumerate() {
                sum_yx[j] += y[cell] * x;
                info[j] += e0_cell[cell] * x * x;
            }
        }
        let beta_precond = info.iter().map(|i| 1.0 / i.sqrt()).collect();

        let latent_cells = match model {
            OffsetModel::Naive => Vec::new(),
            OffsetModel::BerksonKnown => {
                let sd = data.offset_log_sd().unwrap_or(&[]);
                (0..cells).filter(|&c| sd.get(c).is_some_and(|&s| s > 0.0)).collect()
            }
            OffsetModel::BerksonIcar | OffsetModel::BerksonWp => (0..cells).collect(),
        };

        let mut theta_components = Vec::new();
        let mut theta_component_of = vec![None; n_areas];
        for members in graph.connected_components() {
            if members.len() > 1 {
                for &v in members {
                    theta_component_of[v] = Some(theta_components.len());
                }
                theta_components.push(members.clone());
            }
        }

        Self {
            n_groups,
            k,
            model,
            active,
            slot_start,
            n_slots,
            y,
            y_area,
            e0_cell,
            e0_area,
            sum_yx,
            beta_precond,
            latent_cells,
            theta_components,
            theta_component_of,
            rank: graph.icar_rank(),
        }
    }

    fn slot(&self, block: Block, i: usize) -> usize {
        self.slot_start[block.index()] + i
    }

    fn slot_blocks(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_slots];
        for b in 0..N_BLOCKS {
            let end = if b == N_BLOCKS - 1 { self.n_slots } else { self.slot_start[b + 1] };
            out[self.slot_start[b]..end].iter_mut().for_each(|x| *x = b);
        }
        out
    }
}

/// Recorded parameter names, in recording order.
pub fn parameter_names(
    data: &StratifiedDataset,
    config: &ModelConfig,
    settings: &SamplerSettings,
) -> Vec<String> {
    let mut names: Vec<String> = data
        .covariate_names()
        .iter()
        .map(|n| format!("beta[{n}]"))
        .collect();
    if config.random_effects {
        names.push("rho".into());
        names.push("delta".into());
    }
    if config.offset_model == OffsetModel::BerksonWp {
        names.push("sigma_wp".into());
    }
    if config.offset_model.has_error_fields() {
        names.extend(data.group_labels().iter().map(|g| format!("tau_err[{g}]")));
    }
    if config.random_effects {
        names.extend(data.area_ids().iter().map(|a| format!("theta[{a}]")));
        names.extend(data.area_ids().iter().map(|a| format!("phi[{a}]")));
    }
    let cell_names = |prefix: &str| -> Vec<String> {
        data.area_ids()
            .iter()
            .flat_map(|a| data.group_labels().iter().map(move |g| format!("{prefix}[{a}:{g}]")))
            .collect()
    };
    names.extend(cell_names("log_rr"));
    if settings.record_latent && config.offset_model.has_latent_offsets() {
        names.extend(cell_names("log_gamma"));
        if config.offset_model.has_error_fields() {
            names.extend(cell_names("log_sigma"));
        }
    }
    names
}

/// Accept/reject decisions. Tests can force acceptance and accumulate the
/// log ratios to compare against the full density.
#[derive(Default)]
struct Acceptor {
    force: bool,
    log_ratio_sum: f64,
}

impl Acceptor {
    #[inline]
    fn decide(&mut self, log_ratio: f64, rng: &mut ChainRng) -> bool {
        if self.force {
            self.log_ratio_sum += log_ratio;
            return true;
        }
        metropolis_accept(log_ratio, rng)
    }

    /// Like [`Acceptor::decide`] for a deterministic transform with
    /// symmetric noise; only the density part enters the forced-acceptance
    /// sum.
    #[inline]
    fn decide_transform(&mut self, log_density_ratio: f64, log_jacobian: f64, rng: &mut ChainRng) -> bool {
        if self.force {
            self.log_ratio_sum += log_density_ratio;
            return true;
        }
        metropolis_accept(log_density_ratio + log_jacobian, rng)
    }
}

struct BsbeChain<'a> {
    data: &'a StratifiedDataset,
    config: &'a ModelConfig,
    graph: &'a AreaGraph,
    layout: &'a Layout,
    record_latent: bool,
    state: ParameterState,
    log_r: f64,
    xb: Vec<f64>,
    re: Vec<f64>,
    omega: Vec<f64>,
    expw: Vec<f64>,
    scratch: Vec<f64>,
    acceptor: Acceptor,
}

impl<'a> BsbeChain<'a> {
    fn new(
        data: &'a StratifiedDataset,
        config: &'a ModelConfig,
        graph: &'a AreaGraph,
        layout: &'a Layout,
        state: ParameterState,
        record_latent: bool,
    ) -> Self {
        let cells = data.n_cells();
        let mut chain = Self {
            data,
            config,
            graph,
            layout,
            record_latent,
            state,
            log_r: data.reference_rate().ln(),
            xb: vec![0.0; cells],
            re: vec![0.0; data.n_areas()],
            omega: vec![0.0; cells],
            expw: vec![0.0; cells],
            scratch: vec![0.0; cells],
            acceptor: Acceptor::default(),
        };
        chain.refresh();
        chain
    }

    fn refresh(&mut self) {
        for cell in 0..self.data.n_cells() {
            self.xb[cell] = fixed_part(&self.state, self.data, cell);
        }
        for area in 0..self.data.n_areas() {
            self.re[area] = random_effect(&self.state, area);
        }
        self.refresh_predictor();
    }

    fn refresh_predictor(&mut self) {
        let g = self.layout.n_groups;
        for cell in 0..self.data.n_cells() {
            self.omega[cell] = self.xb[cell]
                + self.re[cell / g]
                + self.log_r
                + effective_log_gamma(&self.state, self.data, self.config, cell);
            self.expw[cell] = self.omega[cell].exp();
        }
    }

    fn expected_in_area(&self, area: usize) -> f64 {
        let g = self.layout.n_groups;
        self.expw[area * g..(area + 1) * g].iter().sum()
    }

    fn update(&mut self, block: Block, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        if !self.layout.active[block.index()] {
            return;
        }
        match block {
            Block::Beta => self.update_beta(scales, ledger, rng),
            Block::Theta => self.update_theta(scales, ledger, rng),
            Block::Phi => self.update_phi(scales, ledger, rng),
            Block::Rho | Block::Delta => self.update_mixing(block, scales, ledger, rng),
            Block::LogGamma => self.update_log_gamma(scales, ledger, rng),
            Block::LogSigma => self.update_log_sigma(scales, ledger, rng),
            Block::LogSigmaLevel => self.update_log_sigma_level(scales, ledger, rng),
            Block::ErrorPrecision => self.update_precision(scales, ledger, rng),
            Block::SigmaWp => self.update_sigma_wp(scales, ledger, rng),
        }
    }

    fn update_beta(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let k = layout.k;
        let covariates = self.data.covariates();
        let var = self.config.beta_prior_sd * self.config.beta_prior_sd;
        for j in 0..k {
            let slot = layout.slot(Block::Beta, j);
            let eps = scales[slot] * layout.beta_precond[j] * standard_normal(rng);
            let mut delta_mean = 0.0;
            for cell in 0..self.expw.len() {
                let x = covariates[cell * k + j];
                self.scratch[cell] = (self.omega[cell] + eps * x).exp();
                delta_mean += self.scratch[cell] - self.expw[cell];
            }
            let b = self.state.beta[j];
            let prior = -((b + eps) * (b + eps) - b * b) / (2.0 * var);
            let log_ratio = eps * layout.sum_yx[j] - delta_mean + prior;
            let accepted = self.acceptor.decide(log_ratio, rng);
            ledger.record(slot, accepted);
            if accepted {
                self.state.beta[j] += eps;
                for cell in 0..self.expw.len() {
                    let shift = eps * covariates[cell * k + j];
                    self.xb[cell] += shift;
                    self.omega[cell] += shift;
                }
                std::mem::swap(&mut self.expw, &mut self.scratch);
            }
        }
    }

    fn update_theta(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let graph = self.graph;
        let precision = self.config.scaling_factor;
        let b = self.state.delta * self.state.rho.sqrt();
        let n_comp = layout.theta_components.len();
        let mut y_comp = vec![0.0; n_comp];
        let mut e_comp = vec![0.0; n_comp];
        let mut shift = vec![0.0; n_comp];
        let mut mult = vec![1.0; n_comp];
        let mut e_area: Vec<f64> = (0..self.data.n_areas()).map(|a| self.expected_in_area(a)).collect();
        for (c, members) in layout.theta_components.iter().enumerate() {
            for &v in members {
                y_comp[c] += layout.y_area[v];
                e_comp[c] += e_area[v];
            }
        }
        let theta = &mut self.state.theta_star;
        for area in 0..theta.len() {
            let Some(comp) = layout.theta_component_of[area] else {
                continue;
            };
            let m = layout.theta_components[comp].len() as f64;
            let neighbors = graph.neighbors(area);
            let deg = neighbors.len() as f64;
            let precond = 1.0 / (precision * deg + b * b * layout.e0_area[area]).sqrt();
            let slot = layout.slot(Block::Theta, area);
            let eps = scales[slot] * precond * standard_normal(rng);

            let local: f64 = neighbors.iter().map(|&j| theta[j]).sum();
            let prior = -0.5 * precision * (2.0 * eps * (deg * theta[area] - local) + deg * eps * eps);
            let up = b * eps * (1.0 - 1.0 / m);
            let down = -b * eps / m;
            let e_here = mult[comp] * e_area[area];
            let like = b * eps * layout.y_area[area] - b * eps / m * y_comp[comp]
                - e_here * up.exp_m1()
                - (e_comp[comp] - e_here) * down.exp_m1();
            let accepted = self.acceptor.decide(like + prior, rng);
            ledger.record(slot, accepted);
            if accepted {
                theta[area] += eps;
                shift[comp] += eps / m;
                e_comp[comp] = (e_comp[comp] - e_here) * down.exp() + e_here * up.exp();
                mult[comp] *= down.exp();
                e_area[area] *= (b * eps).exp();
            }
        }
        for (c, members) in layout.theta_components.iter().enumerate() {
            for &v in members {
                theta[v] -= shift[c];
            }
        }
        center_in_place(theta, graph);
        for area in 0..self.re.len() {
            self.re[area] = random_effect(&self.state, area);
        }
        self.refresh_predictor();
    }

    fn apply_area_shift(&mut self, area: usize, du: f64) {
        let g = self.layout.n_groups;
        let factor = du.exp();
        self.re[area] += du;
        for cell in area * g..(area + 1) * g {
            self.omega[cell] += du;
            self.expw[cell] *= factor;
        }
    }

    fn update_phi(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let b = self.state.delta * (1.0 - self.state.rho).sqrt();
        for area in 0..self.re.len() {
            let slot = layout.slot(Block::Phi, area);
            let precond = 1.0 / (1.0 + b * b * layout.e0_area[area]).sqrt();
            let eps = scales[slot] * precond * standard_normal(rng);
            let phi = self.state.phi_star[area];
            let du = b * eps;
            let like = du * layout.y_area[area] - self.expected_in_area(area) * du.exp_m1();
            let prior = -0.5 * ((phi + eps) * (phi + eps) - phi * phi);
            let accepted = self.acceptor.decide(like + prior, rng);
            ledger.record(slot, accepted);
            if accepted {
                self.state.phi_star[area] += eps;
                self.apply_area_shift(area, du);
            }
        }
    }

    /// Logit random walk on `rho` or log random walk on `delta`; both move
    /// every area's random effect at once.
    fn update_mixing(&mut self, block: Block, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let slot = self.layout.slot(block, 0);
        let step = if block == Block::Rho { 1.0 } else { 0.5 };
        let eps = scales[slot] * step * standard_normal(rng);
        let mut proposal = (self.state.rho, self.state.delta);
        let log_extra = match block {
            Block::Rho => {
                let rho = self.state.rho;
                let new = inv_logit(logit(rho) + eps);
                proposal.0 = new;
                (new * (1.0 - new)).ln() - (rho * (1.0 - rho)).ln()
            }
            _ => {
                let delta = self.state.delta;
                let new = delta * eps.exp();
                proposal.1 = new;
                let s2 = self.config.delta_prior_scale * self.config.delta_prior_scale;
                -(new * new - delta * delta) / (2.0 * s2) + eps
            }
        };
        if !log_extra.is_finite() {
            ledger.record(slot, false);
            return;
        }
        let (rho, delta) = proposal;
        let (sr, su) = (rho.sqrt(), (1.0 - rho).sqrt());
        let mut like = 0.0;
        for area in 0..self.re.len() {
            let new_re = delta
                * (if rho == 0.0 { 0.0 } else { sr * self.state.theta_star[area] }
                    + if rho == 1.0 { 0.0 } else { su * self.state.phi_star[area] });
            let du = new_re - self.re[area];
            self.scratch[area] = new_re;
            like += du * self.layout.y_area[area] - self.expected_in_area(area) * du.exp_m1();
        }
        let accepted = self.acceptor.decide(like + log_extra, rng);
        ledger.record(slot, accepted);
        if accepted {
            self.state.rho = rho;
            self.state.delta = delta;
            for area in 0..self.re.len() {
                self.re[area] = self.scratch[area];
            }
            self.refresh_predictor();
        }
    }

    fn update_log_gamma(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let log_n = self.data.log_offsets();
        for &cell in &layout.latent_cells {
            let var = cell_error_variance(&self.state, self.data, layout.model, cell)
                .expect("latent cells carry an error variance");
            let slot = layout.slot(Block::LogGamma, cell);
            let precond = 1.0 / (1.0 / var + layout.e0_cell[cell]).sqrt();
            let eps = scales[slot] * precond * standard_normal(rng);
            let d = self.state.log_gamma[cell] - log_n[cell];
            let log_ratio = layout.y[cell] * eps - self.expw[cell] * eps.exp_m1()
                - ((d + eps) * (d + eps) - d * d) / (2.0 * var);
            let accepted = self.acceptor.decide(log_ratio, rng);
            ledger.record(slot, accepted);
            if accepted {
                self.state.log_gamma[cell] += eps;
                self.omega[cell] += eps;
                self.expw[cell] = self.omega[cell].exp();
            }
        }
    }

    fn update_log_sigma(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let graph = self.graph;
        let g = layout.n_groups;
        let log_n = self.data.log_offsets();
        let wp2 = if layout.model == OffsetModel::BerksonWp {
            self.state.sigma_wp * self.state.sigma_wp
        } else {
            0.0
        };
        let (mu0, level_sd) = (self.config.log_sigma_level_mean, self.config.log_sigma_level_sd);
        let components = graph.connected_components();
        for group in 0..g {
            let tau = self.state.icar_precision_err[group];
            let field = &mut self.state.log_sigma_err;
            let mut means: Vec<f64> = components
                .iter()
                .map(|m| m.iter().map(|&v| field[v * g + group]).sum::<f64>() / m.len() as f64)
                .collect();
            for area in 0..graph.n_areas() {
                let cell = area * g + group;
                let neighbors = graph.neighbors(area);
                let deg = neighbors.len() as f64;
                let slot = layout.slot(Block::LogSigma, cell);
                let precond = 1.0 / (tau * deg + 2.0).sqrt();
                let eps = scales[slot] * precond * standard_normal(rng);
                let x = field[cell];
                let lg = self.state.log_gamma[cell];
                let obs = normal_ln_pdf_var(lg, log_n[cell], (2.0 * (x + eps)).exp() + wp2)
                    - normal_ln_pdf_var(lg, log_n[cell], (2.0 * x).exp() + wp2);
                let local: f64 = neighbors.iter().map(|&j| field[j * g + group]).sum();
                let icar = -0.5 * tau * (2.0 * eps * (deg * x - local) + deg * eps * eps);
                let comp = graph.component_of(area);
                let new_mean = means[comp] + eps / components[comp].len() as f64;
                let level = normal_ln_pdf(new_mean, mu0, level_sd) - normal_ln_pdf(means[comp], mu0, level_sd);
                let accepted = self.acceptor.decide(obs + icar + level, rng);
                ledger.record(slot, accepted);
                if accepted {
                    field[cell] += eps;
                    means[comp] = new_mean;
                }
            }
        }
    }

    /// For each group and component: `log_sigma += e` on the component and
    /// every latent deviation `log_gamma - log n` there scaled by `exp(e)`.
    /// ICAR differences are unchanged; the Jacobian is `exp(m e)`.
    fn update_log_sigma_level(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let g = layout.n_groups;
        let log_n = self.data.log_offsets();
        let wp2 = if layout.model == OffsetModel::BerksonWp {
            self.state.sigma_wp * self.state.sigma_wp
        } else {
            0.0
        };
        let (mu0, level_sd) = (self.config.log_sigma_level_mean, self.config.log_sigma_level_sd);
        let components = self.graph.connected_components();
        for group in 0..g {
            for (comp, members) in components.iter().enumerate() {
                let slot = layout.slot(Block::LogSigmaLevel, group * components.len() + comp);
                let eps = scales[slot] * 0.5 * level_sd * standard_normal(rng);
                let stretch = eps.exp();
                let m = members.len() as f64;
                let field = &self.state.log_sigma_err;
                let mean = members.iter().map(|&v| field[v * g + group]).sum::<f64>() / m;
                let mut log_ratio = normal_ln_pdf(mean + eps, mu0, level_sd) - normal_ln_pdf(mean, mu0, level_sd);
                for &area in members {
                    let cell = area * g + group;
                    let x = field[cell];
                    let d = self.state.log_gamma[cell] - log_n[cell];
                    let shift = d * (stretch - 1.0);
                    log_ratio += normal_ln_pdf_var(d * stretch, 0.0, (2.0 * (x + eps)).exp() + wp2)
                        - normal_ln_pdf_var(d, 0.0, (2.0 * x).exp() + wp2)
                        + layout.y[cell] * shift
                        - self.expw[cell] * shift.exp_m1();
                }
                let accepted = log_ratio.is_finite() && self.acceptor.decide_transform(log_ratio, m * eps, rng);
                ledger.record(slot, accepted);
                if accepted {
                    for &area in members {
                        let cell = area * g + group;
                        let d = self.state.log_gamma[cell] - log_n[cell];
                        let shift = d * (stretch - 1.0);
                        self.state.log_sigma_err[cell] += eps;
                        self.state.log_gamma[cell] = log_n[cell] + d * stretch;
                        self.omega[cell] += shift;
                        self.expw[cell] = self.omega[cell].exp();
                    }
                }
            }
        }
    }

    fn update_precision(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let layout = self.layout;
        let g = layout.n_groups;
        let half_rank = layout.rank as f64 / 2.0;
        let (shape, rate) = (self.config.error_precision_shape, self.config.error_precision_rate);
        let step = (2.0 / (layout.rank as f64 + 2.0)).sqrt();
        for group in 0..g {
            let field = &self.state.log_sigma_err;
            let q: f64 = self
                .graph
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let d = field[i * g + group] - field[j * g + group];
                    d * d
                })
                .sum();
            let slot = layout.slot(Block::ErrorPrecision, group);
            let eps = scales[slot] * step * standard_normal(rng);
            let tau = self.state.icar_precision_err[group];
            let new = tau * eps.exp();
            let log_ratio = (half_rank + shape - 1.0) * eps - (new - tau) * (0.5 * q + rate) + eps;
            let accepted = new.is_finite() && new > 0.0 && self.acceptor.decide(log_ratio, rng);
            ledger.record(slot, accepted);
            if accepted {
                self.state.icar_precision_err[group] = new;
            }
        }
    }

    fn update_sigma_wp(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        let slot = self.layout.slot(Block::SigmaWp, 0);
        let eps = scales[slot] * 0.5 * standard_normal(rng);
        let s = self.state.sigma_wp;
        let new = s * eps.exp();
        let log_n = self.data.log_offsets();
        let mut obs = 0.0;
        for cell in 0..self.data.n_cells() {
            let v_sigma = (2.0 * self.state.log_sigma_err[cell]).exp();
            let lg = self.state.log_gamma[cell];
            obs += normal_ln_pdf_var(lg, log_n[cell], v_sigma + new * new)
                - normal_ln_pdf_var(lg, log_n[cell], v_sigma + s * s);
        }
        let sd = self.config.sigma_wp_prior_sd;
        let prior = sigma_wp_ln_prior(new, sd) - sigma_wp_ln_prior(s, sd);
        let accepted = new > 0.0 && self.acceptor.decide(obs + prior + eps, rng);
        ledger.record(slot, accepted);
        if accepted {
            self.state.sigma_wp = new;
        }
    }
}

impl ChainModel for BsbeChain<'_> {
    fn slot_blocks(&self) -> Vec<usize> {
        self.layout.slot_blocks()
    }

    fn sweep(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng) {
        for block in Block::ALL {
            self.update(block, scales, ledger, rng);
        }
    }

    fn record(&self, out: &mut Vec<f64>) {
        let s = &self.state;
        let model = self.config.offset_model;
        out.extend_from_slice(&s.beta);
        if self.config.random_effects {
            out.push(s.rho);
            out.push(s.delta);
        }
        if model == OffsetModel::BerksonWp {
            out.push(s.sigma_wp);
        }
        if model.has_error_fields() {
            out.extend_from_slice(&s.icar_precision_err);
        }
        if self.config.random_effects {
            out.extend_from_slice(&s.theta_star);
            out.extend_from_slice(&s.phi_star);
        }
        let g = self.layout.n_groups;
        out.extend((0..self.xb.len()).map(|cell| self.xb[cell] + self.re[cell / g]));
        if self.record_latent && model.has_latent_offsets() {
            out.extend((0..self.xb.len()).map(|cell| effective_log_gamma(s, self.data, self.config, cell)));
            if model.has_error_fields() {
                out.extend_from_slice(&s.log_sigma_err);
            }
        }
    }
}

const INIT_ATTEMPTS: usize = 100;
const INIT_JITTER_SD: f64 = 0.1;

/// Default start jittered by N(0, 0.01) on each unconstrained coordinate.
fn initial_state(
    data: &StratifiedDataset,
    config: &ModelConfig,
    graph: &AreaGraph,
    layout: &Layout,
    rng: &mut ChainRng,
) -> Result<ParameterState> {
    let base = ParameterState::initial(data, config);
    let jitter = |rng: &mut ChainRng| INIT_JITTER_SD * standard_normal(rng);
    for _ in 0..INIT_ATTEMPTS {
        let mut s = base.clone();
        s.beta.iter_mut().for_each(|b| *b += jitter(rng));
        if config.random_effects {
            for area in 0..data.n_areas() {
                if !graph.is_singleton(area) {
                    s.theta_star[area] += jitter(rng);
                }
                s.phi_star[area] += jitter(rng);
            }
            center_in_place(&mut s.theta_star, graph);
            s.rho = inv_logit(logit(s.rho) + jitter(rng));
            s.delta *= jitter(rng).exp();
        }
        for &cell in &layout.latent_cells {
            s.log_gamma[cell] += jitter(rng);
        }
        if config.offset_model.has_error_fields() {
            s.log_sigma_err.iter_mut().for_each(|x| *x += jitter(rng));
            s.icar_precision_err.iter_mut().for_each(|t| *t *= jitter(rng).exp());
        }
        if config.offset_model == OffsetModel::BerksonWp {
            s.sigma_wp *= jitter(rng).exp();
        }
        if log_posterior(&s, data, config, graph)?.is_finite() {
            return Ok(s);
        }
    }
    Err(Error::Initialization(INIT_ATTEMPTS))
}

/// Samples the BSBE posterior.
pub fn run_chains(
    data: &StratifiedDataset,
    config: &ModelConfig,
    graph: &AreaGraph,
    settings: &SamplerSettings,
) -> Result<ChainSet> {
    config.check_compatible(data, graph)?;
    let layout = Layout::new(data, config, graph);
    let names = parameter_names(data, config, settings);
    let blocks = Block::ALL.iter().map(|b| b.name().to_string()).collect();
    run_model(names, blocks, settings, |_, rng| {
        let state = initial_state(data, config, graph, &layout, rng)?;
        Ok(BsbeChain::new(data, config, graph, &layout, state, settings.record_latent))
    })
}

/// One Metropolis pass over every coordinate of `block`, all at proposal
/// scale `scale` relative to the preconditioner.
#[allow(clippy::too_many_arguments)]
pub fn block_update(
    state: &ParameterState,
    block: Block,
    data: &StratifiedDataset,
    config: &ModelConfig,
    graph: &AreaGraph,
    rng: &mut ChainRng,
    scale: f64,
) -> Result<(ParameterState, BlockOutcome)> {
    config.check_compatible(data, graph)?;
    state.check_dims(data)?;
    let layout = Layout::new(data, config, graph);
    let mut chain = BsbeChain::new(data, config, graph, &layout, state.clone(), false);
    let mut ledger = Ledger::new(layout.slot_blocks(), Block::ALL.len());
    let scales = vec![scale; layout.n_slots];
    chain.update(block, &scales, &mut ledger, rng);
    let BlockCount { proposed, accepted } = ledger.burn_in_counts()[block.index()];
    Ok((chain.state, BlockOutcome { proposed, accepted }))
}

impl SamplerSettings {
    /// Short serial run, for tests.
    #[cfg(test)]
    pub(crate) fn tiny(n_iterations: usize) -> Self {
        Self {
            n_chains: 2,
            n_iterations,
            burn_in: n_iterations / 2,
            thin: 1,
            parallel: false,
            ..Self::desk()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DatasetParts, Source};
    use rand::SeedableRng;

    fn fixture(source: Source) -> (StratifiedDataset, AreaGraph) {
        // Path 0-1-2-3 plus an isolated area 4.
        let ids: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
        let graph = AreaGraph::from_edge_list(5, &[(0, 1), (1, 2), (2, 3)], ids.clone()).unwrap();
        let groups = 2;
        let cells = 5 * groups;
        let mut rng = ChainRng::seed_from_u64(3);
        let offsets: Vec<f64> = (0..cells).map(|c| 800.0 + 150.0 * c as f64).collect();
        let x: Vec<f64> = (0..cells).map(|_| standard_normal(&mut rng)).collect();
        let covariates = x.iter().flat_map(|&v| [1.0, v]).collect();
        let counts = (0..cells).map(|c| 1 + (c as u64 * 7) % 5).collect();
        let data = StratifiedDataset::new(DatasetParts {
            area_ids: ids,
            group_labels: vec!["young".into(), "old".into()],
            counts,
            covariate_names: vec!["intercept".into(), "x".into()],
            covariates,
            offsets,
            offset_log_sd: (source == Source::Acs).then(|| (0..cells).map(|c| if c == 3 { 0.0 } else { 0.05 }).collect()),
            source,
            reference_rate: None,
        })
        .unwrap();
        (data, graph)
    }

    fn all_models() -> Vec<(Source, OffsetModel)> {
        vec![
            (Source::Pep, OffsetModel::Naive),
            (Source::Acs, OffsetModel::BerksonKnown),
            (Source::Pep, OffsetModel::BerksonIcar),
            (Source::Wp, OffsetModel::BerksonWp),
        ]
    }

    /// After many sweeps the incrementally maintained predictor matches a
    /// fresh computation.
    #[test]
    fn cached_predictor_tracks_state() {
        for (source, model) in all_models() {
            let (data, graph) = fixture(source);
            let config = ModelConfig::new(model, &graph).unwrap();
            let layout = Layout::new(&data, &config, &graph);
            let mut rng = ChainRng::seed_from_u64(9);
            let state = initial_state(&data, &config, &graph, &layout, &mut rng).unwrap();
            let mut chain = BsbeChain::new(&data, &config, &graph, &layout, state, true);
            let mut ledger = Ledger::new(layout.slot_blocks(), N_BLOCKS);
            let scales = vec![1.0; layout.n_slots];
            for _ in 0..200 {
                chain.sweep(&scales, &mut ledger, &mut rng);
            }
            let cached = chain.omega.clone();
            chain.refresh();
            for (a, b) in cached.iter().zip(&chain.omega) {
                assert!((a - b).abs() < 1e-9, "{model}: {a} vs {b}");
            }
            let lp = log_posterior(&chain.state, &data, &config, &graph).unwrap();
            assert!(lp.is_finite());
        }
    }

    /// Log density on the sampler's unconstrained scale.
    fn transformed_log_posterior(
        s: &ParameterState,
        data: &StratifiedDataset,
        config: &ModelConfig,
        graph: &AreaGraph,
    ) -> f64 {
        let mut lp = log_posterior(s, data, config, graph).unwrap();
        if config.random_effects {
            lp += (s.rho * (1.0 - s.rho)).ln() + s.delta.ln();
        }
        if config.offset_model.has_error_fields() {
            lp += s.icar_precision_err.iter().map(|t| t.ln()).sum::<f64>();
        }
        if config.offset_model == OffsetModel::BerksonWp {
            lp += s.sigma_wp.ln();
        }
        lp
    }

    /// With every proposal accepted, the summed incremental log ratios of a
    /// block pass must equal the change in the full transformed density.
    #[test]
    fn incremental_ratios_match_full_density() {
        for (source, model) in all_models() {
            let (data, graph) = fixture(source);
            let config = ModelConfig::new(model, &graph).unwrap();
            let layout = Layout::new(&data, &config, &graph);
            let mut rng = ChainRng::seed_from_u64(21);
            let start = initial_state(&data, &config, &graph, &layout, &mut rng).unwrap();
            let mut chain = BsbeChain::new(&data, &config, &graph, &layout, start, false);
            chain.acceptor.force = true;
            let mut ledger = Ledger::new(layout.slot_blocks(), N_BLOCKS);
            let scales = vec![0.3; layout.n_slots];
            for _ in 0..3 {
                for block in Block::ALL {
                    if !layout.active[block.index()] {
                        continue;
                    }
                    let before = transformed_log_posterior(&chain.state, &data, &config, &graph);
                    chain.acceptor.log_ratio_sum = 0.0;
                    chain.update(block, &scales, &mut ledger, &mut rng);
                    let after = transformed_log_posterior(&chain.state, &data, &config, &graph);
                    let sum = chain.acceptor.log_ratio_sum;
                    assert!(
                        (after - before - sum).abs() < 1e-8 * (1.0 + sum.abs()),
                        "{model} {block:?}: full {} vs incremental {sum}",
                        after - before
                    );
                }
            }
        }
    }

    #[test]
    fn vanishing_scale_accepts() {
        let (data, graph) = fixture(Source::Wp);
        let config = ModelConfig::new(OffsetModel::BerksonWp, &graph).unwrap();
        let layout = Layout::new(&data, &config, &graph);
        let mut rng = ChainRng::seed_from_u64(2);
        let mut state = initial_state(&data, &config, &graph, &layout, &mut rng).unwrap();
        for block in Block::ALL {
            let mut total = BlockOutcome { proposed: 0, accepted: 0 };
            while total.proposed < 1000 {
                let (next, outcome) =
                    block_update(&state, block, &data, &config, &graph, &mut rng, 1e-12).unwrap();
                state = next;
                total.proposed += outcome.proposed;
                total.accepted += outcome.accepted;
            }
            assert!(total.accepted as f64 >= 0.99 * total.proposed as f64, "{block:?}");
        }
    }

    #[test]
    fn theta_stays_centered() {
        let (data, graph) = fixture(Source::Pep);
        let config = ModelConfig::new(OffsetModel::Naive, &graph).unwrap();
        let set = run_chains(&data, &config, &graph, &SamplerSettings::tiny(400)).unwrap();
        for chain in 0..set.n_chains() {
            for d in 0..set.n_draws() {
                let sum: f64 = (0..4)
                    .map(|a| set.chain_draws(chain, set.param_index(&format!("theta[a{a}]")).unwrap())[d])
                    .sum();
                assert!(sum.abs() < 1e-9);
                let isolated = set.chain_draws(chain, set.param_index("theta[a4]").unwrap())[d];
                assert_eq!(isolated, 0.0);
            }
        }
    }

    #[test]
    fn support_and_determinism() {
        let (data, graph) = fixture(Source::Wp);
        let config = ModelConfig::new(OffsetModel::BerksonWp, &graph).unwrap();
        let mut settings = SamplerSettings::tiny(300);
        settings.record_latent = true;
        let a = run_chains(&data, &config, &graph, &settings).unwrap();
        settings.parallel = true;
        let b = run_chains(&data, &config, &graph, &settings).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.acceptance, b.acceptance);
        settings.parallel = false;
        assert_eq!(run_chains(&data, &config, &graph, &settings).unwrap(), a);
        for name in ["rho", "delta", "sigma_wp"] {
            let draws = a.pooled_by_name(name).unwrap();
            assert!(draws.iter().all(|&x| x > 0.0));
        }
        assert!(a.pooled_by_name("rho").unwrap().iter().all(|&x| x < 1.0));
        assert_eq!(a.n_draws(), 150);
    }

    #[test]
    fn recorded_names_match_values() {
        for (source, model) in all_models() {
            let (data, graph) = fixture(source);
            let config = ModelConfig::new(model, &graph).unwrap();
            let mut settings = SamplerSettings::tiny(10);
            settings.record_latent = true;
            let set = run_chains(&data, &config, &graph, &settings).unwrap();
            assert_eq!(set.n_params(), parameter_names(&data, &config, &settings).len());
        }
    }

    #[test]
    fn zero_sd_cells_are_pinned() {
        let (data, graph) = fixture(Source::Acs);
        let config = ModelConfig::new(OffsetModel::BerksonKnown, &graph).unwrap();
        let mut settings = SamplerSettings::tiny(50);
        settings.record_latent = true;
        let set = run_chains(&data, &config, &graph, &settings).unwrap();
        let pinned = set.pooled_by_name("log_gamma[a1:old]").unwrap();
        assert!(pinned.iter().all(|&x| x == data.log_offsets()[3]));
    }

    /// With no counts and a negligible rate the likelihood is flat, so each
    /// component mean of an error field follows its level prior exactly.
    #[test]
    fn flat_likelihood_recovers_level_prior() {
        let (base, graph) = fixture(Source::Wp);
        let mut parts = DatasetParts {
            area_ids: base.area_ids().to_vec(),
            group_labels: base.group_labels().to_vec(),
            counts: vec![0; base.n_cells()],
            covariate_names: base.covariate_names().to_vec(),
            covariates: base.covariates().to_vec(),
            offsets: base.offsets().to_vec(),
            offset_log_sd: None,
            source: Source::Wp,
            reference_rate: Some(1e-12),
        };
        for model in [OffsetModel::BerksonIcar, OffsetModel::BerksonWp] {
            parts.source = if model == OffsetModel::BerksonWp { Source::Wp } else { Source::Pep };
            let data = StratifiedDataset::new(parts.clone()).unwrap();
            let config = ModelConfig::new(model, &graph).unwrap();
            let settings = SamplerSettings {
                n_chains: 4,
                n_iterations: 20_000,
                burn_in: 4_000,
                thin: 4,
                record_latent: true,
                ..SamplerSettings::tiny(10)
            };
            let set = run_chains(&data, &config, &graph, &settings).unwrap();
            let column = |name: &str| set.pooled_by_name(name).unwrap();
            let path: Vec<Vec<f64>> = (0..4).map(|a| column(&format!("log_sigma[a{a}:old]"))).collect();
            let level: Vec<f64> = (0..path[0].len()).map(|d| path.iter().map(|p| p[d]).sum::<f64>() / 4.0).collect();
            for draws in [level, column("log_sigma[a4:young]")] {
                let n = draws.len() as f64;
                let mean = draws.iter().sum::<f64>() / n;
                let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                assert!((mean - config.log_sigma_level_mean).abs() < 0.12, "{model}: mean {mean}");
                assert!((sd - config.log_sigma_level_sd).abs() < 0.12, "{model}: sd {sd}");
            }
        }
    }
}
