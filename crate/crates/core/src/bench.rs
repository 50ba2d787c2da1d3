//! Timing harness for single-observation densities on synthetic trees.

use crate::bell::{log_density_gens, EvalOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::generators::Family;
use crate::grad::log_likelihood;
use crate::stats::{median, ols_slope};
use crate::tree::{CopulaTree, NodeSpec, ThetaSpec};
use serde::Serialize;
use std::str::FromStr;
use std::time::Instant;

pub const WARMUP: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Sectors of five leaves under one root.
    FixedK,
    /// About √d sectors of about √d leaves.
    SqrtD,
    /// Two sectors of d/2 leaves.
    TwoSector,
    /// One leaf per level down a chain of nested nodes.
    Chain,
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_k" => Ok(Topology::FixedK),
            "sqrt_d" => Ok(Topology::SqrtD),
            "two_sector" => Ok(Topology::TwoSector),
            "chain" => Ok(Topology::Chain),
            _ => Err(Error::Input(format!("unknown topology '{s}' (fixed_k, sqrt_d, two_sector, chain)"))),
        }
    }
}

/// Split `d` leaves into `k` sectors as evenly as possible.
fn even_sectors(d: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| d / k + (i < d % k) as usize).collect()
}

/// Synthetic model of the given shape; θ rises with depth (1.0 at the
/// root, 2.0 in sectors) so every same-family edge is admissible.
pub fn topology_spec(top: Topology, family: Family, d: usize) -> Result<NodeSpec> {
    if d < 4 {
        return Err(Error::Input("benchmark trees need d ≥ 4".into()));
    }
    let (outer, inner) = match family {
        Family::Gumbel | Family::Joe => (1.5, 3.0),
        Family::Amh => (0.3, 0.6),
        _ => (1.0, 2.0),
    };
    let sectors = match top {
        Topology::FixedK => even_sectors(d, d.div_ceil(5).max(2)),
        Topology::SqrtD => even_sectors(d, ((d as f64).sqrt().round() as usize).max(2)),
        Topology::TwoSector => even_sectors(d, 2),
        Topology::Chain => {
            let levels = d - 1;
            let mut node = NodeSpec::node(family, ThetaSpec::Value(inner), vec![NodeSpec::leaf(d - 2), NodeSpec::leaf(d - 1)]);
            for lvl in (0..levels - 1).rev() {
                let th = outer + (inner - outer) * lvl as f64 / (levels - 1) as f64;
                node = NodeSpec::node(family, ThetaSpec::Value(th), vec![NodeSpec::leaf(lvl), node]);
            }
            return Ok(node);
        }
    };
    Ok(NodeSpec::two_level(family, outer, inner, &sectors))
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub topology: Topology,
    pub d: usize,
    pub median_ms: f64,
}

/// Median milliseconds of `f` over `reps` calls after warm-up.
pub fn time_median<F: FnMut() -> Result<()>>(mut f: F, reps: usize) -> Result<f64> {
    for _ in 0..WARMUP {
        f()?;
    }
    let mut t = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let s = Instant::now();
        f()?;
        t.push(s.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(&t))
}

/// Single fully observed observation at `u = 0.5`, timed per `d`.
pub fn bench_topology(top: Topology, family: Family, ds: &[usize], reps: usize) -> Result<Vec<BenchRow>> {
    ds.iter()
        .map(|&d| {
            let tree = CopulaTree::from_spec(&topology_spec(top, family, d)?)?;
            let gens = tree.generators(tree.params())?;
            let u = vec![0.5; d];
            let mask = vec![true; d];
            let opts = EvalOptions::default();
            let ms = time_median(|| log_density_gens(&tree, &gens, &u, &mask, &opts).map(|_: f64| ()), reps)?;
            Ok(BenchRow { topology: top, d, median_ms: ms })
        })
        .collect()
}

/// OLS slope of log time on log d.
pub fn log_log_slope(rows: &[BenchRow]) -> f64 {
    let x: Vec<f64> = rows.iter().map(|r| (r.d as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.median_ms.ln()).collect();
    ols_slope(&x, &y)
}

/// Likelihood time on `rows` fully observed and with a fixed pattern
/// censoring the fraction `rate` of entries, as `(median_ms, median_ms)`.
pub fn censoring_speedup(tree: &CopulaTree, rows: &[Vec<f64>], rate: f64, reps: usize) -> Result<(f64, f64)> {
    let d = tree.dim();
    let full = Dataset::from_rows(rows)?;
    let masks: Vec<Vec<bool>> = rows
        .iter()
        .enumerate()
        .map(|(i, _)| (0..d).map(|j| (((i * 7 + j * 13) % 100) as f64) >= rate * 100.0).collect())
        .collect();
    let cens = Dataset::with_masks(rows, &masks)?;
    let p = tree.params();
    let t0 = time_median(|| log_likelihood(tree, &full, p).map(|_| ()), reps)?;
    let t1 = time_median(|| log_likelihood(tree, &cens, p).map(|_| ()), reps)?;
    Ok((t0, t1))
}
