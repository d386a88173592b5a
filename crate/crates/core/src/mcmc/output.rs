use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BlockAcceptance, Chain, ChainConfig, Proposals};
use crate::randfield::Family;
use crate::error::{PicarError, Result};

/// Hex SHA-256 of the JSON serialization of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Summary written next to the chain CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub family: String,
    pub seed: u64,
    pub config_hash: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    pub acceptance: BlockAcceptance,
    /// Effective sample size per series (absent for too-short chains).
    pub ess: BTreeMap<String, Option<f64>>,
    pub wall_time_seconds: f64,
}

impl Chain {
    /// Names of the blocks that have at least one column.
    pub fn blocks(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.alpha.ncols() > 0 {
            out.push("alpha");
        }
        out.extend(["beta", "delta"]);
        if self.delta_beta.ncols() > 0 {
            out.push("delta_beta");
        }
        out.push("tau");
        if !self.tau_beta.is_empty() {
            out.push("tau_beta");
        }
        out
    }

    fn block_matrix(&self, block: &str) -> Result<DMatrix<f64>> {
        let n = self.num_draws();
        Ok(match block {
            "alpha" => self.alpha.clone(),
            "beta" => self.beta.clone(),
            "delta" => self.delta.clone(),
            "delta_beta" => self.delta_beta.clone(),
            "tau" => DMatrix::from_column_slice(n, 1, &self.tau),
            "tau_beta" => DMatrix::from_column_slice(self.tau_beta.len(), 1, &self.tau_beta),
            other => return Err(PicarError::InvalidArgument(format!("unknown block {other:?}"))),
        })
    }

    /// Iteration index (1-based) at which stored draw `d` was taken.
    pub fn iteration_of(&self, d: usize) -> usize {
        self.config.burn_in + (d + 1) * self.config.thin
    }

    /// CSV with an `iteration` column and one column per block entry.
    pub fn write_block_csv<W: Write>(&self, block: &str, writer: W) -> Result<()> {
        let m = self.block_matrix(block)?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string()];
        let offset = if block == "alpha" { 2 } else { 1 };
        if block == "beta" {
            header.extend(self.beta_names.iter().cloned());
        } else if m.ncols() == 1 && block.starts_with("tau") {
            header.push(block.to_string());
        } else {
            header.extend((0..m.ncols()).map(|j| format!("{block}{}", j + offset)));
        }
        w.write_record(&header)?;
        for d in 0..m.nrows() {
            let mut rec = vec![self.iteration_of(d).to_string()];
            rec.extend(m.row(d).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn manifest<T: Serialize>(&self, config: &T) -> ChainManifest {
        ChainManifest {
            family: self.family.to_string(),
            seed: self.config.seed,
            config_hash: config_hash(config),
            iterations: self.config.iterations,
            burn_in: self.config.burn_in,
            thin: self.config.thin,
            draws: self.num_draws(),
            acceptance: self.acceptance.clone(),
            ess: self
                .ess_table()
                .into_iter()
                .map(|(k, v)| (k, v.map(|e| e.value)))
                .collect(),
            wall_time_seconds: self.wall_time,
        }
    }
}

/// One block CSV read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTable {
    /// Column names after `iteration`.
    pub names: Vec<String>,
    pub iterations: Vec<usize>,
    /// One row per stored draw.
    pub values: DMatrix<f64>,
}

/// Reads the layout written by [`Chain::write_block_csv`].
pub fn read_block_csv<R: std::io::Read>(reader: R) -> Result<BlockTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.get(0) != Some("iteration") {
        return Err(PicarError::Parse("chain CSV must start with an iteration column".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let ncols = names.len();
    let mut iterations = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_err = |s: &str| PicarError::Parse(format!("bad chain value {s:?}"));
        iterations.push(rec[0].parse::<usize>().map_err(|_| parse_err(&rec[0]))?);
        for j in 1..=ncols {
            values.push(rec[j].parse::<f64>().map_err(|_| parse_err(&rec[j]))?);
        }
    }
    let values = DMatrix::from_row_slice(iterations.len(), ncols, &values);
    Ok(BlockTable { names, iterations, values })
}

impl Chain {
    /// Rebuilds a chain from block tables keyed by block name. Acceptance
    /// rates and wall time are not part of the files and come back zeroed.
    pub fn from_blocks(family: Family, config: ChainConfig, blocks: &BTreeMap<String, BlockTable>) -> Result<Chain> {
        let get = |name: &str| blocks.get(name);
        let beta = get("beta").ok_or_else(|| PicarError::EmptyInput("chain has no beta block".into()))?;
        let delta = get("delta").ok_or_else(|| PicarError::EmptyInput("chain has no delta block".into()))?;
        let tau = get("tau").ok_or_else(|| PicarError::EmptyInput("chain has no tau block".into()))?;
        let draws = beta.values.nrows();
        let empty = DMatrix::zeros(draws, 0);
        let matrix = |name: &str| get(name).map_or_else(|| empty.clone(), |b| b.values.clone());
        let series = |name: &str| get(name).map_or_else(Vec::new, |b| b.values.column(0).iter().copied().collect());
        let chain = Chain {
            family,
            config,
            beta: beta.values.clone(),
            beta_names: beta.names.clone(),
            delta: delta.values.clone(),
            tau: tau.values.column(0).iter().copied().collect(),
            delta_beta: matrix("delta_beta"),
            tau_beta: series("tau_beta"),
            alpha: matrix("alpha"),
            acceptance: BlockAcceptance {
                beta: 0.0,
                delta: 0.0,
                delta_beta: None,
                alpha: Vec::new(),
            },
            final_proposals: Proposals::empty(),
            wall_time: 0.0,
        };
        let consistent = [&chain.delta, &chain.delta_beta, &chain.alpha].iter().all(|m| m.nrows() == draws)
            && chain.tau.len() == draws
            && (chain.tau_beta.is_empty() || chain.tau_beta.len() == draws)
            && chain.delta_beta.ncols() == if family == Family::Svc { chain.delta.ncols() } else { 0 };
        if !consistent {
            return Err(PicarError::DimensionMismatch("chain blocks disagree in length or width".into()));
        }
        if chain.config.num_draws() != draws {
            return Err(PicarError::DimensionMismatch(format!(
                "chain settings imply {} draws, files hold {draws}",
                chain.config.num_draws()
            )));
        }
        Ok(chain)
    }
}
