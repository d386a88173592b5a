//! End-to-end fit of one dataset: mesh, basis, rank screen, GLM start,
//! MCMC, and held-out prediction.

use std::borrow::Cow;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{
    bisquare_basis, knot_grid, leading_eigenpairs, matern_eigenbasis, moran_operator, precision_kernel,
    thin_plate_basis, EigenMethod, MoranBasis, PrecisionKernel, PrecisionKind,
};
use crate::error::{PicarError, Result};
use crate::eval::{predict, PredictionSummary};
use crate::glm::{augmented_design, default_rank_grid, full_rank_grid, glm_fit, select_rank, RankSelection};
use crate::mcmc::{run_chain, Chain, ChainConfig, ChainState, DeltaProposal, GammaPrior, ModelSpec, Priors, Proposals};
use crate::mesh::{build_mesh, Adjacency, BoundingBox, Mesh};
use crate::randfield::{Dataset, MaternParams};

/// Derives an independent seed for one stage and replicate from the base
/// seed: the first eight bytes of SHA-256 over `base`, `tag` and `replicate`.
pub fn stream_seed(base: u64, tag: &str, replicate: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(replicate.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

/// Mesh resolution, either absolute or relative to the number of sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSize {
    Nodes(usize),
    PerSite(f64),
}

impl MeshSize {
    pub fn target(&self, sites: usize) -> usize {
        match *self {
            MeshSize::Nodes(m) => m,
            MeshSize::PerSite(r) => (r * sites as f64).round() as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankGrid {
    /// Every rank to 50, then steps of 5.
    Default,
    Full,
    Explicit(Vec<usize>),
}

impl RankGrid {
    pub fn ranks(&self, max_rank: usize) -> Vec<usize> {
        match self {
            RankGrid::Default => default_rank_grid(max_rank),
            RankGrid::Full => full_rank_grid(max_rank),
            RankGrid::Explicit(g) => g.clone(),
        }
    }
}

/// Basis family for the spatial effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisChoice {
    Moran,
    /// Eigenvectors of a fixed Matérn covariance over the mesh nodes; the
    /// generating parameters are used when absent.
    MaternEig { matern: Option<MaternParams> },
    Bisquare { side: usize, radius: f64 },
    ThinPlate { side: usize },
}

impl BasisChoice {
    pub fn label(&self) -> &'static str {
        match self {
            BasisChoice::Moran => "PICAR",
            BasisChoice::MaternEig { .. } => "matern_eig",
            BasisChoice::Bisquare { .. } => "bisquare",
            BasisChoice::ThinPlate { .. } => "thin_plate",
        }
    }

    fn uses_mesh(&self) -> bool {
        matches!(self, BasisChoice::Moran | BasisChoice::MaternEig { .. })
    }
}

/// Settings of one end-to-end fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub mesh: MeshSize,
    /// Bounding-box expansion per side, as a fraction of its extent.
    pub mesh_buffer: f64,
    /// Largest candidate rank P.
    pub max_rank: usize,
    pub rank_grid: RankGrid,
    /// Skips the rank screen.
    pub rank: Option<usize>,
    pub precision: PrecisionKind,
    pub basis: BasisChoice,
    /// Appends a constant column to the covariates.
    pub intercept: bool,
    pub delta_proposal: DeltaProposal,
    pub beta_prior_variance: f64,
    pub tau_prior: GammaPrior,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt: bool,
    /// Threshold for binary misclassification.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mesh: MeshSize::PerSite(1.65),
            mesh_buffer: 0.1,
            max_rank: 100,
            rank_grid: RankGrid::Default,
            rank: None,
            precision: PrecisionKind::Icar,
            basis: BasisChoice::Moran,
            intercept: true,
            delta_proposal: DeltaProposal::GlmCovariance,
            beta_prior_variance: 100.0,
            tau_prior: GammaPrior::DIFFUSE,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            adapt: true,
            threshold: 0.5,
            seed: 1,
        }
    }
}

impl FitConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let MeshSize::Nodes(m) = self.mesh {
            if m < 4 {
                out.push(format!("mesh: need at least 4 nodes, got {m}"));
            }
        }
        if let MeshSize::PerSite(r) = self.mesh {
            if !(r > 0.0 && r.is_finite()) {
                out.push(format!("mesh: nodes per site must be positive, got {r}"));
            }
        }
        if !(self.mesh_buffer >= 0.0 && self.mesh_buffer.is_finite()) {
            out.push(format!("mesh_buffer: must be nonnegative, got {}", self.mesh_buffer));
        }
        if self.max_rank < 1 {
            out.push("max_rank: must be positive".into());
        }
        if let RankGrid::Explicit(g) = &self.rank_grid {
            if g.is_empty() {
                out.push("rank_grid: explicit grid is empty".into());
            }
            if let Some(r) = g.iter().find(|&&r| r == 0 || r > self.max_rank) {
                out.push(format!("rank_grid: rank {r} outside 1..={}", self.max_rank));
            }
        }
        if let Some(r) = self.rank {
            if r == 0 || r > self.max_rank {
                out.push(format!("rank: {r} outside 1..={}", self.max_rank));
            }
        }
        if let Err(e) = self.precision.validate() {
            out.push(format!("precision: {e}"));
        }
        match &self.basis {
            BasisChoice::MaternEig { matern: Some(m) } => {
                if let Err(e) = m.validate() {
                    out.push(format!("basis: {e}"));
                }
            }
            BasisChoice::Bisquare { side, radius } => {
                if *side < 1 {
                    out.push("basis: knot grid side must be positive".into());
                }
                if !(*radius > 0.0) {
                    out.push(format!("basis: bisquare radius must be positive, got {radius}"));
                }
            }
            BasisChoice::ThinPlate { side } if *side < 1 => {
                out.push("basis: knot grid side must be positive".into());
            }
            _ => {}
        }
        if !(self.beta_prior_variance > 0.0) {
            out.push(format!("beta_prior_variance: must be positive, got {}", self.beta_prior_variance));
        }
        if !(self.tau_prior.shape > 0.0 && self.tau_prior.rate > 0.0) {
            out.push("tau_prior: shape and rate must be positive".into());
        }
        if let Err(e) = self.chain_config(0).validate() {
            out.push(format!("mcmc: {e}"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            out.push(format!("threshold: must lie in [0, 1], got {}", self.threshold));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(PicarError::InvalidArgument(p.join("; ")))
        }
    }

    /// Chain settings with the seed derived for `replicate`.
    pub fn chain_config(&self, replicate: u64) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: stream_seed(self.seed, "chain", replicate),
            adapt: self.adapt,
        }
    }
}

/// Basis matrices projected onto the fit and held-out sites.
#[derive(Clone, Debug)]
pub struct BasisSystem {
    pub label: &'static str,
    pub mesh: Option<Mesh>,
    pub adjacency: Option<Adjacency>,
    pub moran: Option<MoranBasis>,
    pub eigen_method: Option<EigenMethod>,
    /// `n x P`.
    pub am_fit: DMatrix<f64>,
    /// `n_cv x P`.
    pub am_cv: DMatrix<f64>,
    /// Whether the columns are ordered so that leading subsets are
    /// meaningful ranks.
    pub ordered: bool,
}

impl BasisSystem {
    pub fn max_rank(&self) -> usize {
        self.am_fit.ncols()
    }

    /// Prior kernel for the leading `p` columns.
    pub fn kernel(&self, kind: PrecisionKind, p: usize) -> Result<PrecisionKernel> {
        match (&self.moran, &self.adjacency) {
            (Some(basis), Some(adj)) => precision_kernel(kind, adj, &basis.leading(p)?),
            _ => Ok(PrecisionKernel::identity(p)),
        }
    }
}

/// Wall time of each stage, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub mesh: f64,
    pub basis: f64,
    pub rank_selection: f64,
    pub glm: f64,
    pub mcmc: f64,
    pub predict: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.mesh + self.basis + self.rank_selection + self.glm + self.mcmc + self.predict
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// Builds the basis projected onto both splits.
pub fn prepare_basis(dataset: &Dataset, config: &FitConfig, timings: &mut StageTimings) -> Result<BasisSystem> {
    let locations = dataset.all_locations();
    let label = config.basis.label();
    if !config.basis.uses_mesh() {
        let bbox = BoundingBox::of(&locations).ok_or_else(|| PicarError::EmptyInput("no locations".into()))?;
        return timed(&mut timings.basis, || {
            let build = |locs: &[_]| match &config.basis {
                BasisChoice::Bisquare { side, radius } => bisquare_basis(locs, &knot_grid(&bbox, *side), *radius),
                BasisChoice::ThinPlate { side } => thin_plate_basis(locs, &knot_grid(&bbox, *side)),
                _ => unreachable!("mesh bases handled below"),
            };
            Ok(BasisSystem {
                label,
                mesh: None,
                adjacency: None,
                moran: None,
                eigen_method: None,
                am_fit: build(&dataset.fit.locations)?.matrix,
                am_cv: build(&dataset.cv.locations)?.matrix,
                ordered: false,
            })
        })
        .map_err(|e| e.in_stage("basis"));
    }

    let mesh = timed(&mut timings.mesh, || {
        build_mesh(
            &locations,
            config.mesh.target(dataset.fit.len()),
            config.mesh_buffer,
            stream_seed(config.seed, "mesh", 0),
        )
    })
    .map_err(|e| e.in_stage("mesh"))?;
    let (a_fit, a_cv) = timed(&mut timings.mesh, || {
        Ok((mesh.projector(&dataset.fit.locations)?, mesh.projector(&dataset.cv.locations)?))
    })
    .map_err(|e| e.in_stage("projector"))?;

    timed(&mut timings.basis, || {
        let m = mesh.num_vertices();
        let p_max = config.max_rank.min(m - 1);
        let adjacency = mesh.adjacency();
        let (nodes, moran, method) = match &config.basis {
            BasisChoice::Moran => {
                let op = moran_operator(&adjacency);
                let (basis, method) = leading_eigenpairs(&op, p_max, stream_seed(config.seed, "eigen", 0))?;
                (basis.vectors().clone(), Some(basis), Some(method))
            }
            BasisChoice::MaternEig { matern } => {
                let params = matern
                    .or_else(|| dataset.truth.as_ref().map(|t| t.matern))
                    .unwrap_or_else(MaternParams::reference);
                (matern_eigenbasis(mesh.vertices(), &params, p_max)?.matrix, None, None)
            }
            _ => unreachable!("knot bases handled above"),
        };
        Ok(BasisSystem {
            label,
            am_fit: a_fit.mul_dense(&nodes),
            am_cv: a_cv.mul_dense(&nodes),
            adjacency: moran.as_ref().map(|_| adjacency),
            moran,
            eigen_method: method,
            mesh: Some(mesh),
            ordered: true,
        })
    })
    .map_err(|e| e.in_stage("basis"))
}

/// Name of the constant column's coefficient.
pub const INTERCEPT: &str = "intercept";

/// The dataset as modelled: covariates plus, if configured, a trailing
/// column of ones. The first covariate stays in column 0.
pub fn model_dataset<'a>(dataset: &'a Dataset, config: &FitConfig) -> Cow<'a, Dataset> {
    if !config.intercept {
        return Cow::Borrowed(dataset);
    }
    let mut ds = dataset.clone();
    for split in [&mut ds.fit, &mut ds.cv] {
        let k = split.x.ncols();
        split.x = std::mem::replace(&mut split.x, DMatrix::zeros(0, 0)).insert_column(k, 1.0);
    }
    Cow::Owned(ds)
}

fn coefficient_names(dataset: &Dataset, config: &FitConfig) -> Vec<String> {
    let k = dataset.num_covariates();
    let mut names: Vec<String> = (1..=k).map(|j| format!("beta{j}")).collect();
    if config.intercept {
        names.push(INTERCEPT.to_string());
    }
    names
}

/// Chosen rank and, unless fixed, the screen that chose it.
pub fn choose_rank(
    dataset: &Dataset,
    basis: &BasisSystem,
    config: &FitConfig,
    timings: &mut StageTimings,
) -> Result<(usize, Option<RankSelection>)> {
    let p_max = basis.max_rank();
    if let Some(r) = config.rank {
        if r > p_max {
            return Err(PicarError::InvalidArgument(format!("rank {r} exceeds the {p_max} basis columns"))
                .in_stage("rank selection"));
        }
        return Ok((r, None));
    }
    if !basis.ordered {
        return Ok((p_max, None));
    }
    let grid: Vec<usize> = config.rank_grid.ranks(p_max).into_iter().filter(|&r| r <= p_max).collect();
    let modelled = model_dataset(dataset, config);
    let sel = timed(&mut timings.rank_selection, || select_rank(&modelled, &basis.am_fit, &basis.am_cv, &grid))
        .map_err(|e| e.in_stage("rank selection"))?;
    Ok((sel.chosen, Some(sel)))
}

/// Model specification, GLM-based start and proposals at rank `p`.
pub fn initialize(
    dataset: &Dataset,
    basis: &BasisSystem,
    p: usize,
    config: &FitConfig,
    timings: &mut StageTimings,
) -> Result<(ModelSpec, ChainState, Proposals)> {
    let names = coefficient_names(dataset, config);
    initialize_model(&model_dataset(dataset, config), names, basis, p, config, timings)
}

fn initialize_model(
    dataset: &Dataset,
    names: Vec<String>,
    basis: &BasisSystem,
    p: usize,
    config: &FitConfig,
    timings: &mut StageTimings,
) -> Result<(ModelSpec, ChainState, Proposals)> {
    let am = basis.am_fit.columns(0, p).into_owned();
    let kernel = basis.kernel(config.precision, p).map_err(|e| e.in_stage("precision"))?;
    let k = dataset.num_covariates();
    let mut priors = Priors::isotropic(k, config.beta_prior_variance);
    priors.tau = config.tau_prior;
    priors.tau_beta = config.tau_prior;
    let spec = ModelSpec::new(dataset.family, dataset.fit.x.clone(), am, kernel, priors)
        .and_then(|s| s.with_beta_names(names))
        .map_err(|e| e.in_stage("model"))?;
    timed(&mut timings.glm, || {
        let design = augmented_design(dataset.family, &dataset.fit.x, &spec.am, p);
        let fit = glm_fit(dataset.family, &design, &dataset.fit.z)?;
        let proposals = Proposals::from_glm(&spec, &fit, config.delta_proposal)?;
        let init = ChainState::from_glm(&spec, &fit);
        Ok((init, proposals))
    })
    .map(|(init, proposals)| (spec, init, proposals))
    .map_err(|e| e.in_stage("glm"))
}

/// Result of [`fit_dataset`].
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub basis_label: &'static str,
    pub mesh_nodes: Option<usize>,
    pub eigen_method: Option<EigenMethod>,
    pub selection: Option<RankSelection>,
    pub rank: usize,
    pub chain: Chain,
    pub prediction: PredictionSummary,
    /// CVMSPE, or MPR for ordinal data.
    pub score: f64,
    /// Thresholded error rate (binary only).
    pub misclassification: Option<f64>,
    pub timings: StageTimings,
}

impl FitOutput {
    /// Mean per-sweep chain time in seconds.
    pub fn seconds_per_iteration(&self) -> f64 {
        self.chain.wall_time / self.chain.config.iterations as f64
    }

    pub fn mean_prediction_sd(&self) -> f64 {
        let sd = &self.prediction.sd;
        sd.iter().sum::<f64>() / sd.len() as f64
    }
}

/// Runs every stage on one dataset; `replicate` selects the chain's seed
/// stream.
pub fn fit_dataset(dataset: &Dataset, config: &FitConfig, replicate: u64) -> Result<FitOutput> {
    fit_precisions(dataset, config, &[config.precision], replicate)?
        .pop()
        .expect("one precision kind")
}

/// Fits one model per precision kind, sharing the mesh, basis and chosen
/// rank. Failures of individual kinds are returned in place.
pub fn fit_precisions(
    dataset: &Dataset,
    config: &FitConfig,
    kinds: &[PrecisionKind],
    replicate: u64,
) -> Result<Vec<Result<FitOutput>>> {
    config.validate()?;
    dataset.validate().map_err(|e| e.in_stage("data"))?;
    let mut shared = StageTimings::default();
    let basis = prepare_basis(dataset, config, &mut shared)?;
    let (rank, selection) = choose_rank(dataset, &basis, config, &mut shared)?;
    Ok(kinds
        .iter()
        .map(|&kind| {
            let cfg = FitConfig {
                precision: kind,
                ..config.clone()
            };
            fit_at_rank(dataset, &basis, rank, selection.clone(), &cfg, replicate, shared)
        })
        .collect())
}

/// Sampling and prediction at a given rank of a prepared basis.
pub fn fit_at_rank(
    dataset: &Dataset,
    basis: &BasisSystem,
    rank: usize,
    selection: Option<RankSelection>,
    config: &FitConfig,
    replicate: u64,
    mut timings: StageTimings,
) -> Result<FitOutput> {
    let names = coefficient_names(dataset, config);
    let dataset = &*model_dataset(dataset, config);
    let (spec, init, proposals) = initialize_model(dataset, names, basis, rank, config, &mut timings)?;
    let chain = timed(&mut timings.mcmc, || {
        run_chain(&spec, &dataset.fit.z, init, proposals, &config.chain_config(replicate))
    })
    .map_err(|e| e.in_stage("mcmc"))?;
    let am_cv = basis.am_cv.columns(0, rank).into_owned();
    let prediction = timed(&mut timings.predict, || predict(&chain, &am_cv, &dataset.cv.x))
        .map_err(|e| e.in_stage("predict"))?;
    let score = prediction.score(&dataset.cv.z).map_err(|e| e.in_stage("predict"))?;
    let misclassification = prediction.misclassification(&dataset.cv.z, config.threshold).ok();
    Ok(FitOutput {
        basis_label: basis.label,
        mesh_nodes: basis.mesh.as_ref().map(|m| m.num_vertices()),
        eigen_method: basis.eigen_method,
        selection,
        rank,
        chain,
        prediction,
        score,
        misclassification,
        timings,
    })
}
