use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use picar::basis::{leading_eigenpairs, moran_operator};
use picar::eval::{predict as predict_chain, PredictionSummary};
use picar::mcmc::{read_block_csv, Chain};
use picar::mesh::{build_mesh, Mesh};
use picar::pipeline::{
    choose_rank, fit_dataset, model_dataset, prepare_basis, stream_seed, FitConfig, MeshSize, StageTimings,
};
use picar::randfield::{Dataset, Family};
use picar::study::{describe, run_study, Preset, StudyConfig};
use rayon::prelude::*;

use crate::files::{
    read_json, sha256_hex, study_hash, write_file, write_json, FileDigest, FitManifest, Outputs, SimulateManifest,
    StudyManifest, Versions,
};
use crate::svg::line_plot;
use crate::FitArgs;

pub const MANIFEST: &str = "manifest.json";

pub fn load_config(preset: Preset, path: Option<&Path>, seed: Option<u64>) -> Result<StudyConfig> {
    let mut cfg = match path {
        Some(p) => read_json::<StudyConfig>(p)?,
        None => StudyConfig::preset(preset),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let problems = cfg.problems();
    if !problems.is_empty() {
        bail!("invalid configuration:\n  {}", problems.join("\n  "));
    }
    Ok(cfg)
}

fn fit_config(cfg: &StudyConfig, args: &FitArgs) -> Result<FitConfig> {
    let mut fit = cfg.fit_config();
    if args.rank.is_some() {
        fit.rank = args.rank;
    }
    if let Some(p) = args.max_rank {
        fit.max_rank = p;
    }
    if let Some(m) = args.nodes {
        fit.mesh = MeshSize::Nodes(m);
    }
    if let Some(k) = args.precision {
        fit.precision = k;
    }
    if let Some(n) = args.iterations {
        fit.iterations = n;
    }
    if let Some(n) = args.burn_in {
        fit.burn_in = n;
    }
    if let Some(n) = args.thin {
        fit.thin = n;
    }
    if args.no_intercept {
        fit.intercept = false;
    }
    let problems = fit.problems();
    if !problems.is_empty() {
        bail!("invalid fit settings:\n  {}", problems.join("\n  "));
    }
    Ok(fit)
}

fn read_dataset(path: &Path, family: Family) -> Result<(Dataset, FileDigest)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ds = Dataset::read_csv(bytes.as_slice(), family).with_context(|| format!("in {}", path.display()))?;
    let digest = FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
    };
    Ok((ds, digest))
}

fn dataset_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn replicate_file(r: usize) -> String {
    format!("data/replicate_{r:03}.csv")
}

pub fn simulate(cfg: &StudyConfig, replicates: Option<usize>, out: &Path) -> Result<()> {
    let count = replicates.unwrap_or(cfg.replicates);
    anyhow::ensure!(count > 0, "need at least one replicate");
    let generated: Vec<Result<(Vec<u8>, Vec<u8>)>> = (0..count)
        .into_par_iter()
        .map(|r| {
            let ds = cfg.simulate(r as u64).with_context(|| format!("replicate {r}"))?;
            let truth = serde_json::to_vec_pretty(&ds.truth)?;
            Ok((dataset_csv(&ds)?, truth))
        })
        .collect();
    let mut outputs = Outputs::new(out);
    for (r, res) in generated.into_iter().enumerate() {
        let (csv, truth) = res?;
        outputs.write(&replicate_file(r), &csv)?;
        outputs.write(&format!("data/replicate_{r:03}.truth.json"), &truth)?;
    }
    let manifest = SimulateManifest {
        versions: Versions::current(),
        seed: cfg.seed,
        config_hash: study_hash(cfg),
        config: cfg.clone(),
        replicates: count,
        files: outputs.finish(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    println!("wrote {count} {} datasets of {} rows to {}", cfg.family, cfg.n + cfg.n_cv, out.display());
    Ok(())
}

pub fn mesh(cfg: &StudyConfig, data: &Path, args: &FitArgs, out: &Path) -> Result<()> {
    let fit = fit_config(cfg, args)?;
    let (ds, _) = read_dataset(data, cfg.family)?;
    let mesh = build_mesh(
        &ds.all_locations(),
        fit.mesh.target(ds.fit.len()),
        fit.mesh_buffer,
        stream_seed(fit.seed, "mesh", 0),
    )?;
    write_file(out, mesh.to_text().as_bytes())?;
    println!("mesh: {} vertices, {} triangles", mesh.num_vertices(), mesh.num_triangles());
    Ok(())
}

pub fn basis(mesh_path: &Path, rank: usize, seed: u64, out: &Path) -> Result<()> {
    let text = fs::read_to_string(mesh_path).with_context(|| format!("cannot read {}", mesh_path.display()))?;
    let mesh = Mesh::from_text(&text).with_context(|| format!("in {}", mesh_path.display()))?;
    let op = moran_operator(&mesh.adjacency());
    let (basis, method) = leading_eigenpairs(&op, rank, stream_seed(seed, "eigen", 0))?;
    write_file(out, basis.to_text().as_bytes())?;
    println!(
        "basis: {} columns over {} vertices ({method:?}; {} non-positive eigenvalues dropped)",
        basis.rank(),
        basis.num_nodes(),
        basis.dropped_nonpositive()
    );
    Ok(())
}

fn score_name(family: Family) -> &'static str {
    match family {
        Family::Ordinal { .. } => "mpr",
        _ => "cvmspe",
    }
}

pub fn select_rank(cfg: &StudyConfig, data: &Path, args: &FitArgs, out: &Path) -> Result<()> {
    let fit = FitConfig { rank: None, ..fit_config(cfg, args)? };
    let (ds, _) = read_dataset(data, cfg.family)?;
    let mut timings = StageTimings::default();
    let basis = prepare_basis(&ds, &fit, &mut timings)?;
    let (chosen, selection) = choose_rank(&ds, &basis, &fit, &mut timings)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", score_name(cfg.family), "chosen"])?;
    if let Some(sel) = &selection {
        for (p, s) in sel.grid.iter().zip(&sel.scores) {
            w.write_record([p.to_string(), format!("{s:.6}"), (*p == chosen).to_string()])?;
        }
    }
    write_file(out, &w.into_inner()?)?;
    println!("chosen rank {chosen}");
    Ok(())
}

fn predictions_csv(ds: &Dataset, pred: &PredictionSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["site", "x", "y", "observed", "mean", "sd", "point"])?;
    for i in 0..ds.cv.len() {
        let loc = ds.cv.locations[i];
        w.write_record([
            i.to_string(),
            format!("{:?}", loc.x),
            format!("{:?}", loc.y),
            ds.cv.z[i].to_string(),
            format!("{:?}", pred.mean[i]),
            format!("{:?}", pred.sd[i]),
            format!("{:?}", pred.point[i]),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn parameters_csv(pred: &PredictionSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "mean", "sd", "lower", "upper"])?;
    for p in &pred.parameters {
        let s = p.summary;
        w.write_record([p.name.clone(), format!("{:?}", s.mean), format!("{:?}", s.sd), format!("{:?}", s.lower), format!("{:?}", s.upper)])?;
    }
    Ok(w.into_inner()?)
}

/// One row in the layout of the rank tables: rank, held-out error, minutes.
pub fn metrics_csv(family: Family, rank: usize, score: f64, seconds: f64) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", score_name(family), "time_min"])?;
    w.write_record([rank.to_string(), format!("{score:.6}"), format!("{:.4}", seconds / 60.0)])?;
    Ok(w.into_inner()?)
}

pub fn fit(cfg: &StudyConfig, data: &Path, args: &FitArgs, replicate: u64, out: &Path) -> Result<()> {
    let fit = fit_config(cfg, args)?;
    let (ds, digest) = read_dataset(data, cfg.family)?;
    let result = fit_dataset(&ds, &fit, replicate)?;
    let mut outputs = Outputs::new(out);
    for block in result.chain.blocks() {
        let mut buf = Vec::new();
        result.chain.write_block_csv(block, &mut buf)?;
        outputs.write(&format!("chain_{block}.csv"), &buf)?;
    }
    outputs.write("predictions.csv", &predictions_csv(&ds, &result.prediction)?)?;
    outputs.write("parameters.csv", &parameters_csv(&result.prediction)?)?;
    outputs.write(
        "metrics.csv",
        &metrics_csv(cfg.family, result.rank, result.score, result.timings.total())?,
    )?;
    let manifest = FitManifest {
        versions: Versions::current(),
        family: cfg.family.to_string(),
        seed: fit.seed,
        replicate,
        config_hash: picar::mcmc::config_hash(&fit),
        fit: fit.clone(),
        data: digest,
        basis: result.basis_label.into(),
        mesh_nodes: result.mesh_nodes,
        rank: result.rank,
        score_name: score_name(cfg.family).into(),
        score: result.score,
        misclassification: result.misclassification,
        chain: result.chain.manifest(&fit),
        stage_timings: result.timings,
        outputs: outputs.finish(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    let mut msg = format!("rank {}  {} {:.4}", result.rank, score_name(cfg.family), result.score);
    if let Some(m) = result.misclassification {
        let _ = write!(msg, "  misclassification {m:.4}");
    }
    let _ = write!(msg, "  {:.2} min", result.timings.total() / 60.0);
    println!("{msg}");
    for p in &result.prediction.parameters {
        if !p.name.starts_with("delta") {
            println!("  {:<10} {:>8.4} ({:.4}, {:.4})", p.name, p.summary.mean, p.summary.lower, p.summary.upper);
        }
    }
    Ok(())
}

pub fn predict(fit_dir: &Path, data: &Path, out: &Path) -> Result<()> {
    let manifest: FitManifest = read_json(&fit_dir.join(MANIFEST))?;
    let family: Family = manifest.family.parse()?;
    let (ds, digest) = read_dataset(data, family)?;
    if digest.sha256 != manifest.data.sha256 {
        eprintln!("warning: {} differs from the fitted dataset", data.display());
    }
    let mut blocks = BTreeMap::new();
    for entry in &manifest.outputs {
        if let Some(block) = entry.path.strip_prefix("chain_").and_then(|p| p.strip_suffix(".csv")) {
            let path = fit_dir.join(&entry.path);
            let file = fs::File::open(&path).with_context(|| format!("cannot read {}", path.display()))?;
            blocks.insert(block.to_string(), read_block_csv(file)?);
        }
    }
    let chain = Chain::from_blocks(family, manifest.fit.chain_config(manifest.replicate), &blocks)?;
    let basis = prepare_basis(&ds, &manifest.fit, &mut StageTimings::default())?;
    anyhow::ensure!(manifest.rank <= basis.max_rank(), "fit rank exceeds the rebuilt basis");
    let am_cv = basis.am_cv.columns(0, manifest.rank).into_owned();
    let modelled = model_dataset(&ds, &manifest.fit);
    let pred = predict_chain(&chain, &am_cv, &modelled.cv.x)?;
    write_file(out, &predictions_csv(&ds, &pred)?)?;
    println!("{} {:.4}", manifest.score_name, pred.score(&ds.cv.z)?);
    Ok(())
}

pub fn study(preset: Preset, mut cfg: StudyConfig, replicates: Option<usize>, out: Option<&Path>) -> Result<()> {
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone().into());
    let report = run_study(preset, &cfg)?;
    let mut outputs = Outputs::new(&out);
    for t in &report.tables {
        outputs.write(&format!("tables/{}.csv", t.name), t.to_csv()?.as_bytes())?;
    }
    for p in &report.plots {
        outputs.write(&format!("plots/{}.svg", p.name), line_plot(p).as_bytes())?;
    }
    let manifest = StudyManifest {
        versions: Versions::current(),
        preset: preset.name().into(),
        seed: cfg.seed,
        config_hash: study_hash(&cfg),
        config: cfg.clone(),
        wall_time_seconds: report.wall_time_seconds,
        cell_timings: report.cell_timings.clone(),
        failures: report.failures.clone(),
        outputs: outputs.finish(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    print!("{}", describe(&report));
    if !report.failures.is_empty() {
        eprintln!("{} cells failed; see {}", report.failures.len(), out.join(MANIFEST).display());
    }
    Ok(())
}
