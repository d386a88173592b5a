//! Replication studies: configuration, presets, data generation and the
//! tables and line plots each study emits.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::PrecisionKind;
use crate::error::{PicarError, Result};
use crate::eval::{coverage_study, CoverageTable};
use crate::pipeline::{
    choose_rank, fit_at_rank, fit_dataset, prepare_basis, stream_seed, BasisChoice, FitConfig, FitOutput,
    MeshSize, StageTimings,
};
use crate::randfield::{
    gen_binary, gen_count, gen_ordinal, gen_svc, Dataset, Design, Family, MaternParams, REFERENCE_CROSS_COVARIANCE,
};

mod family_str {
    use super::Family;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &Family, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&f.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Family, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod nu_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|nu| if nu.is_infinite() { None } else { Some(*nu) }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect())
    }
}

/// Canned study layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Binary,
    Poisson,
    Ordinal,
    Svc,
    MeshSweep,
    BasisCompare,
    Coverage,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Binary,
        Preset::Poisson,
        Preset::Ordinal,
        Preset::Svc,
        Preset::MeshSweep,
        Preset::BasisCompare,
        Preset::Coverage,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Binary => "binary",
            Preset::Poisson => "poisson",
            Preset::Ordinal => "ordinal",
            Preset::Svc => "svc",
            Preset::MeshSweep => "mesh_sweep",
            Preset::BasisCompare => "basis_compare",
            Preset::Coverage => "coverage",
        }
    }
}

impl FromStr for Preset {
    type Err = PicarError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| PicarError::Parse(format!("unknown study preset {s:?}")))
    }
}

/// Everything needed to regenerate the data and rerun a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(with = "family_str")]
    pub family: Family,
    pub n: usize,
    pub n_cv: usize,
    pub beta: Vec<f64>,
    pub matern: MaternParams,
    pub nugget: Option<f64>,
    /// Ordinal cutoffs, starting at 0.
    pub cutoffs: Vec<f64>,
    /// Cross-covariance of the intercept and slope fields (svc).
    pub cross_covariance: [[f64; 2]; 2],
    pub fit: FitConfig,
    /// Fixed ranks reported next to the selected one.
    pub ranks: Vec<usize>,
    pub precisions: Vec<PrecisionKind>,
    pub mesh_sizes: Vec<usize>,
    /// Smoothness values for the mesh sweep (`null` is the Gaussian limit).
    #[serde(with = "nu_list")]
    pub smoothness: Vec<f64>,
    pub bases: Vec<BasisChoice>,
    pub replicates: usize,
    pub output_dir: String,
    pub seed: u64,
}

/// Covariance fixed in advance for the Matérn eigenvector basis of the
/// basis comparison.
pub const COMPARISON_MATERN: MaternParams = MaternParams {
    sigma2: 1.0,
    phi: 0.2,
    nu: 0.5,
};

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            family: Family::Binary,
            n: 1000,
            n_cv: 400,
            beta: vec![1.0, 1.0],
            matern: MaternParams::reference(),
            nugget: None,
            cutoffs: vec![0.0, 1.0, 2.0],
            cross_covariance: REFERENCE_CROSS_COVARIANCE,
            fit: FitConfig {
                mesh: MeshSize::Nodes(1649),
                max_rank: 200,
                iterations: 50_000,
                burn_in: 10_000,
                thin: 10,
                ..FitConfig::default()
            },
            ranks: vec![10, 50, 75, 100, 200],
            precisions: vec![PrecisionKind::Identity, PrecisionKind::Icar, PrecisionKind::Car(0.5)],
            mesh_sizes: vec![100, 500, 750, 1000, 1500, 2000],
            smoothness: vec![0.5, 2.5, f64::INFINITY],
            bases: vec![
                BasisChoice::Moran,
                BasisChoice::MaternEig { matern: None },
                BasisChoice::Bisquare { side: 8, radius: 0.3 },
                BasisChoice::ThinPlate { side: 8 },
            ],
            replicates: 100,
            output_dir: "picar-out".into(),
            seed: 1,
        }
    }
}

impl StudyConfig {
    /// Shipped configuration of a preset.
    pub fn preset(preset: Preset) -> Self {
        let base = StudyConfig::default();
        match preset {
            Preset::Binary | Preset::MeshSweep => base,
            Preset::Poisson => StudyConfig {
                family: Family::Count,
                ..base
            },
            Preset::Ordinal => StudyConfig {
                family: Family::Ordinal { categories: 4 },
                ..base
            },
            Preset::Svc => StudyConfig {
                family: Family::Svc,
                ..base
            },
            Preset::BasisCompare => StudyConfig {
                family: Family::Svc,
                n: 2000,
                n_cv: 800,
                fit: FitConfig {
                    mesh: MeshSize::Nodes(1137),
                    ..base.fit.clone()
                },
                bases: base
                    .bases
                    .iter()
                    .map(|b| match b {
                        BasisChoice::MaternEig { .. } => BasisChoice::MaternEig {
                            matern: Some(COMPARISON_MATERN),
                        },
                        other => other.clone(),
                    })
                    .collect(),
                ..base
            },
            Preset::Coverage => StudyConfig {
                n: 500,
                n_cv: 200,
                fit: FitConfig {
                    mesh: MeshSize::PerSite(1.65),
                    max_rank: 60,
                    iterations: 12_000,
                    burn_in: 2_000,
                    thin: 5,
                    ..base.fit.clone()
                },
                ranks: Vec::new(),
                precisions: vec![PrecisionKind::Icar],
                ..base
            },
        }
    }

    /// Every violated constraint, reported together.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 10 {
            out.push(format!("n: need at least 10 fit sites, got {}", self.n));
        }
        if self.n_cv == 0 {
            out.push("n_cv: need at least one validation site".into());
        }
        if self.beta.is_empty() {
            out.push("beta: need at least one coefficient".into());
        }
        if let Err(e) = self.matern.validate() {
            out.push(format!("matern: {e}"));
        }
        if let Some(v) = self.nugget {
            if !(v >= 0.0) {
                out.push(format!("nugget: variance must be nonnegative, got {v}"));
            }
        }
        if let Family::Ordinal { categories } = self.family {
            let ok = self.cutoffs.first() == Some(&0.0) && self.cutoffs.windows(2).all(|w| w[1] > w[0]);
            if !ok {
                out.push(format!("cutoffs: must start at 0 and increase strictly, got {:?}", self.cutoffs));
            }
            if self.cutoffs.len() + 1 != categories {
                out.push(format!(
                    "cutoffs: {} cutoffs do not match {categories} categories",
                    self.cutoffs.len()
                ));
            }
        }
        if self.family == Family::Svc {
            let c = self.cross_covariance;
            let m = nalgebra::Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
            if c[0][1] != c[1][0] || Cholesky::new(m).is_none() {
                out.push("cross_covariance: must be symmetric positive definite".into());
            }
        }
        out.extend(self.fit.problems().into_iter().map(|p| format!("fit.{p}")));
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > self.fit.max_rank) {
            out.push(format!("ranks: rank {r} outside 1..={}", self.fit.max_rank));
        }
        if self.precisions.is_empty() {
            out.push("precisions: need at least one precision kind".into());
        }
        for k in &self.precisions {
            if let Err(e) = k.validate() {
                out.push(format!("precisions: {e}"));
            }
        }
        if let Some(&m) = self.mesh_sizes.iter().find(|&&m| m < 4) {
            out.push(format!("mesh_sizes: need at least 4 nodes, got {m}"));
        }
        for &nu in &self.smoothness {
            if let Err(e) = (MaternParams { nu, ..self.matern }).validate() {
                out.push(format!("smoothness: {e}"));
            }
        }
        if self.replicates == 0 {
            out.push("replicates: must be positive".into());
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

    pub fn design(&self) -> Design {
        Design {
            n: self.n,
            n_cv: self.n_cv,
            beta: self.beta.clone(),
            matern: self.matern,
            nugget: self.nugget,
        }
    }

    /// Fit settings sharing the study's base seed.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            ..self.fit.clone()
        }
    }

    /// Dataset of replicate `r`, seeded from the "data" stream.
    pub fn simulate(&self, replicate: u64) -> Result<Dataset> {
        self.simulate_with(&self.design(), replicate)
    }

    fn simulate_with(&self, design: &Design, replicate: u64) -> Result<Dataset> {
        let seed = stream_seed(self.seed, "data", replicate);
        match self.family {
            Family::Binary => gen_binary(design, seed),
            Family::Count => gen_count(design, seed),
            Family::Ordinal { .. } => gen_ordinal(design, &self.cutoffs, seed),
            Family::Svc => gen_svc(design, &self.cross_covariance, seed),
        }
    }

    /// True values of the parameters summarized by the sampler.
    pub fn truth(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        if let Family::Ordinal { .. } = self.family {
            for (j, w) in self.cutoffs.windows(2).enumerate() {
                out.push((format!("alpha{}", j + 2), (w[1] - w[0]).ln()));
            }
        }
        for (j, b) in self.beta.iter().enumerate() {
            out.push((format!("beta{}", j + 1), *b));
        }
        out
    }
}

/// A CSV-ready table with fixed column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Table {
            name: name.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| PicarError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| PicarError::Io(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinePlot {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

/// Timing of one successful cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub cell: String,
    #[serde(flatten)]
    pub stages: StageTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub preset: Preset,
    pub tables: Vec<Table>,
    pub plots: Vec<LinePlot>,
    pub failures: Vec<CellFailure>,
    pub cell_timings: Vec<CellTiming>,
    pub wall_time_seconds: f64,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn score_name(family: Family) -> &'static str {
    match family {
        Family::Ordinal { .. } => "mpr",
        _ => "cvmspe",
    }
}

fn parameter_names(config: &StudyConfig) -> Vec<String> {
    config.truth().into_iter().map(|(n, _)| n).collect()
}

fn estimate_header(params: &[String]) -> Vec<String> {
    params
        .iter()
        .flat_map(|p| [format!("{p}_mean"), format!("{p}_lower"), format!("{p}_upper")])
        .collect()
}

fn estimate_cells(out: &FitOutput, params: &[String]) -> Vec<String> {
    params
        .iter()
        .flat_map(|p| match out.prediction.parameter(p) {
            Some(s) => [fmt(s.mean), fmt(s.lower), fmt(s.upper)],
            None => [String::new(), String::new(), String::new()],
        })
        .collect()
}

fn minutes(out: &FitOutput) -> String {
    fmt(out.timings.total() / 60.0)
}

/// Runs a preset end to end. Cells are independent jobs on the current
/// rayon pool; failed cells are listed in the report.
pub fn run_study(preset: Preset, config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let start = Instant::now();
    let mut report = match preset {
        Preset::Binary | Preset::Poisson | Preset::Ordinal | Preset::Svc => rank_study(preset, config)?,
        Preset::MeshSweep => mesh_sweep(config)?,
        Preset::BasisCompare => basis_compare(config)?,
        Preset::Coverage => {
            let table = coverage_study(config, config.replicates)?;
            StudyReport {
                preset,
                tables: vec![table.to_table()],
                plots: Vec::new(),
                failures: table
                    .failures
                    .iter()
                    .map(|f| CellFailure {
                        cell: format!("replicate {} {}", f.replicate, f.precision),
                        error: f.error.clone(),
                    })
                    .collect(),
                cell_timings: Vec::new(),
                wall_time_seconds: 0.0,
            }
        }
    };
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Rank table (ICAR at every listed rank plus the selected one) and
/// precision table (every kind at the selected rank) on replicate 0.
fn rank_study(preset: Preset, config: &StudyConfig) -> Result<StudyReport> {
    let dataset = config.simulate(0)?;
    let fit = config.fit_config();
    let mut shared = StageTimings::default();
    let basis = prepare_basis(&dataset, &fit, &mut shared)?;
    let (chosen, selection) = choose_rank(&dataset, &basis, &fit, &mut shared)?;

    let mut ranks: Vec<usize> = config.ranks.iter().copied().filter(|&r| r <= basis.max_rank()).collect();
    ranks.push(chosen);
    ranks.sort_unstable();
    ranks.dedup();
    let mut cells: Vec<(usize, PrecisionKind)> = ranks.iter().map(|&r| (r, PrecisionKind::Icar)).collect();
    cells.extend(config.precisions.iter().map(|&k| (chosen, k)));

    let results: Vec<Result<FitOutput>> = cells
        .par_iter()
        .map(|&(rank, kind)| {
            let cfg = FitConfig {
                precision: kind,
                ..fit.clone()
            };
            fit_at_rank(&dataset, &basis, rank, selection.clone(), &cfg, 0, shared)
        })
        .collect();

    let params = parameter_names(config);
    let score = score_name(config.family);
    let mut header = vec!["rank".to_string(), "selected".to_string()];
    header.extend(estimate_header(&params));
    header.extend([score.to_string(), "time_min".to_string()]);
    let mut rank_table = Table::new(&format!("{}_rank", preset.name()), header);
    let mut header = vec!["precision".to_string(), "rank".to_string()];
    header.extend(estimate_header(&params));
    header.extend([score.to_string(), "time_min".to_string()]);
    let mut prec_table = Table::new(&format!("{}_precision", preset.name()), header);

    let mut failures = Vec::new();
    let mut cell_timings = Vec::new();
    let mut curve = Vec::new();
    for (i, (&(rank, kind), res)) in cells.iter().zip(&results).enumerate() {
        let cell = if i < ranks.len() {
            format!("rank {rank}")
        } else {
            format!("precision {} rank {rank}", kind.label())
        };
        match res {
            Ok(out) => {
                cell_timings.push(CellTiming {
                    cell,
                    stages: out.timings,
                });
                if i < ranks.len() {
                    let mut row = vec![rank.to_string(), (rank == chosen).to_string()];
                    row.extend(estimate_cells(out, &params));
                    row.extend([fmt(out.score), minutes(out)]);
                    rank_table.rows.push(row);
                    curve.push((rank as f64, out.score));
                } else {
                    let mut row = vec![kind.label().to_string(), rank.to_string()];
                    row.extend(estimate_cells(out, &params));
                    row.extend([fmt(out.score), minutes(out)]);
                    prec_table.rows.push(row);
                }
            }
            Err(e) => failures.push(CellFailure {
                cell,
                error: e.to_string(),
            }),
        }
    }

    let mut tables = vec![rank_table, prec_table];
    if let Some(sel) = &selection {
        let mut t = Table::new(
            &format!("{}_heuristic", preset.name()),
            vec!["rank".into(), "glm_score".into()],
        );
        t.rows = sel.grid.iter().zip(&sel.scores).map(|(r, s)| vec![r.to_string(), fmt(*s)]).collect();
        tables.push(t);
    }
    Ok(StudyReport {
        preset,
        tables,
        plots: vec![LinePlot {
            name: format!("{}_rank_score", preset.name()),
            x_label: "rank".into(),
            y_label: score.to_uppercase(),
            series: vec![Series {
                label: "ICAR".into(),
                points: curve,
            }],
        }],
        failures,
        cell_timings,
        wall_time_seconds: 0.0,
    })
}

fn nu_label(nu: f64) -> String {
    if nu.is_infinite() {
        "inf".into()
    } else {
        format!("{nu}")
    }
}

/// Mesh density by smoothness grid; one dataset per smoothness value.
fn mesh_sweep(config: &StudyConfig) -> Result<StudyReport> {
    let datasets: Vec<Result<Dataset>> = config
        .smoothness
        .iter()
        .map(|&nu| {
            let design = Design {
                matern: MaternParams { nu, ..config.matern },
                ..config.design()
            };
            config.simulate_with(&design, 0)
        })
        .collect();
    let cells: Vec<(usize, usize)> = (0..config.smoothness.len())
        .flat_map(|i| config.mesh_sizes.iter().map(move |&m| (i, m)))
        .collect();
    let results: Vec<Result<FitOutput>> = cells
        .par_iter()
        .map(|&(i, m)| {
            let ds = datasets[i].as_ref().map_err(Clone::clone)?;
            let cfg = FitConfig {
                mesh: MeshSize::Nodes(m),
                ..config.fit_config()
            };
            fit_dataset(ds, &cfg, 0)
        })
        .collect();

    let mut header = vec!["nu".to_string()];
    header.extend(config.mesh_sizes.iter().map(|m| m.to_string()));
    let error_name = if config.family == Family::Binary { "misclassification" } else { score_name(config.family) };
    let mut score_t = Table::new(&format!("mesh_{error_name}"), header.clone());
    let mut sd_t = Table::new("mesh_prediction_sd", header.clone());
    let mut rank_t = Table::new("mesh_rank", header);
    let mut failures = Vec::new();
    let mut cell_timings = Vec::new();
    let mut sd_series = Vec::new();
    for (i, &nu) in config.smoothness.iter().enumerate() {
        let mut srow = vec![nu_label(nu)];
        let mut drow = srow.clone();
        let mut rrow = srow.clone();
        let mut pts = Vec::new();
        for (j, &m) in config.mesh_sizes.iter().enumerate() {
            let cell = format!("nu {} mesh {m}", nu_label(nu));
            match &results[i * config.mesh_sizes.len() + j] {
                Ok(out) => {
                    let err = out.misclassification.unwrap_or(out.score);
                    srow.push(fmt(err));
                    drow.push(fmt(out.mean_prediction_sd()));
                    rrow.push(out.rank.to_string());
                    pts.push((m as f64, out.mean_prediction_sd()));
                    cell_timings.push(CellTiming {
                        cell,
                        stages: out.timings,
                    });
                }
                Err(e) => {
                    for r in [&mut srow, &mut drow, &mut rrow] {
                        r.push(String::new());
                    }
                    failures.push(CellFailure {
                        cell,
                        error: e.to_string(),
                    });
                }
            }
        }
        score_t.rows.push(srow);
        sd_t.rows.push(drow);
        rank_t.rows.push(rrow);
        sd_series.push(Series {
            label: format!("nu = {}", nu_label(nu)),
            points: pts,
        });
    }
    Ok(StudyReport {
        preset: Preset::MeshSweep,
        tables: vec![score_t, sd_t, rank_t],
        plots: vec![LinePlot {
            name: "mesh_prediction_sd".into(),
            x_label: "mesh nodes".into(),
            y_label: "mean prediction sd".into(),
            series: sd_series,
        }],
        failures,
        cell_timings,
        wall_time_seconds: 0.0,
    })
}

/// One row per basis family on a shared dataset.
fn basis_compare(config: &StudyConfig) -> Result<StudyReport> {
    let dataset = config.simulate(0)?;
    let results: Vec<Result<FitOutput>> = config
        .bases
        .par_iter()
        .map(|b| {
            let cfg = FitConfig {
                basis: b.clone(),
                ..config.fit_config()
            };
            fit_dataset(&dataset, &cfg, 0)
        })
        .collect();
    let params = parameter_names(config);
    let mut header = vec!["basis".to_string()];
    header.extend(estimate_header(&params));
    header.extend([score_name(config.family).to_string(), "rank".into(), "time_min".into()]);
    let mut table = Table::new("basis_compare", header);
    let mut failures = Vec::new();
    let mut cell_timings = Vec::new();
    for (b, res) in config.bases.iter().zip(results) {
        match res {
            Ok(out) => {
                let mut row = vec![b.label().to_string()];
                row.extend(estimate_cells(&out, &params));
                row.extend([fmt(out.score), out.rank.to_string(), minutes(&out)]);
                table.rows.push(row);
                cell_timings.push(CellTiming {
                    cell: b.label().into(),
                    stages: out.timings,
                });
            }
            Err(e) => failures.push(CellFailure {
                cell: b.label().into(),
                error: e.to_string(),
            }),
        }
    }
    Ok(StudyReport {
        preset: Preset::BasisCompare,
        tables: vec![table],
        plots: Vec::new(),
        failures,
        cell_timings,
        wall_time_seconds: 0.0,
    })
}

impl CoverageTable {
    /// Wide layout: one row per precision kind, one column per parameter.
    pub fn to_table(&self) -> Table {
        let mut params: Vec<String> = Vec::new();
        for r in &self.rows {
            if !params.contains(&r.parameter) {
                params.push(r.parameter.clone());
            }
        }
        let mut header = vec!["precision".to_string()];
        header.extend(params.iter().cloned());
        header.push("replicates".into());
        let mut t = Table::new("coverage", header);
        let mut kinds: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !kinds.contains(&r.precision.as_str()) {
                kinds.push(&r.precision);
            }
        }
        for k in kinds {
            let mut row = vec![k.to_string()];
            let mut reps = 0;
            for p in &params {
                match self.rows.iter().find(|r| r.precision == k && &r.parameter == p) {
                    Some(r) => {
                        row.push(fmt(r.coverage));
                        reps = r.replicates;
                    }
                    None => row.push(String::new()),
                }
            }
            row.push(reps.to_string());
            t.rows.push(row);
        }
        t
    }
}

/// Text summary of a report, one line per table row.
pub fn describe(report: &StudyReport) -> String {
    let mut s = String::new();
    for t in &report.tables {
        let _ = writeln!(s, "{}: {}", t.name, t.header.join(","));
        for r in &t.rows {
            let _ = writeln!(s, "  {}", r.join(","));
        }
    }
    for f in &report.failures {
        let _ = writeln!(s, "failed {}: {}", f.cell, f.error);
    }
    s
}
