//! Discretized lognormal processes for exact backward induction.
//!
//! Each stage `t >= 2` carries a geometric grid spanning `+-4 sd` of
//! `ln x_t` around the drifted median `ln x_1 + (t-1) mu`; stage 1 is the
//! known initial value. Transition rows give the probability mass of the
//! lognormal kernel falling into each destination cell, where cells are
//! bounded by the log-midpoints between nodes and the outer cells extend to
//! infinity.

use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::oracle::closed_form::normal_cdf;

pub const COVERAGE_SDS: f64 = 4.0;

/// One discretized process over all stages.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessLattice {
    /// Node values per stage, ascending; index 0 is stage 1.
    nodes: Vec<Vec<f64>>,
    /// Row-major `n_t x n_{t+1}` matrices for `t = 1..T-1`.
    transitions: Vec<Vec<f64>>,
}

impl ProcessLattice {
    pub fn build(initial: f64, drift: f64, vol: f64, horizon: usize, nodes_per_stage: usize) -> Result<Self> {
        if nodes_per_stage < 3 {
            return Err(Error::config("nodes", "need at least 3 nodes per stage"));
        }
        let ln0 = initial.ln();
        let mut nodes = vec![vec![initial]];
        for t in 2..=horizon {
            let steps = (t - 1) as f64;
            let centre = ln0 + steps * drift;
            let half = COVERAGE_SDS * vol * steps.sqrt();
            let n = nodes_per_stage;
            nodes.push(
                (0..n)
                    .map(|k| (centre - half + 2.0 * half * k as f64 / (n - 1) as f64).exp())
                    .collect(),
            );
        }
        let transitions = (0..horizon.saturating_sub(1))
            .map(|t| kernel_matrix(&nodes[t], &nodes[t + 1], drift, vol))
            .collect();
        Ok(ProcessLattice { nodes, transitions })
    }

    /// Single-node placeholder for an absent process.
    pub fn point(horizon: usize) -> Self {
        ProcessLattice {
            nodes: vec![vec![f64::INFINITY]; horizon],
            transitions: vec![vec![1.0]; horizon.saturating_sub(1)],
        }
    }

    /// Nodes at 1-based stage `t`.
    pub fn nodes(&self, t: usize) -> &[f64] {
        &self.nodes[t - 1]
    }

    /// Transition row from node `i` at stage `t` to stage `t + 1`.
    pub fn row(&self, t: usize, i: usize) -> &[f64] {
        let next = self.nodes[t].len();
        &self.transitions[t - 1][i * next..(i + 1) * next]
    }

    pub fn matrix(&self, t: usize) -> &[f64] {
        &self.transitions[t - 1]
    }

    pub fn horizon(&self) -> usize {
        self.nodes.len()
    }

    /// Locates `x` on the stage-`t` grid for log-linear interpolation:
    /// returns `(i, w)` meaning `(1-w) * node[i] + w * node[i+1]`, clamped
    /// to the grid ends.
    pub fn locate(&self, t: usize, x: f64) -> (usize, f64) {
        let nodes = self.nodes(t);
        if nodes.len() == 1 || x.is_nan() || x <= nodes[0] {
            return (0, 0.0);
        }
        let last = nodes.len() - 1;
        if x >= nodes[last] {
            return (last - 1, 1.0);
        }
        let j = nodes.partition_point(|&v| v <= x).clamp(1, last);
        let (a, b) = (nodes[j - 1].ln(), nodes[j].ln());
        (j - 1, (x.ln() - a) / (b - a))
    }
}

fn kernel_matrix(from: &[f64], to: &[f64], drift: f64, vol: f64) -> Vec<f64> {
    let log_to: Vec<f64> = to.iter().map(|v| v.ln()).collect();
    let bounds: Vec<f64> = log_to.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut out = Vec::with_capacity(from.len() * to.len());
    for &x in from {
        let mean = x.ln() + drift;
        let mut row = Vec::with_capacity(to.len());
        if vol > 0.0 {
            let mut lower = 0.0;
            for &b in &bounds {
                let upper = normal_cdf((b - mean) / vol);
                row.push((upper - lower).max(0.0));
                lower = upper;
            }
            row.push((1.0 - lower).max(0.0));
        } else {
            row.resize(to.len(), 0.0);
            row[bounds.partition_point(|&b| b <= mean)] = 1.0;
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
        } else {
            // all mass beyond double precision in one tail
            let idx = if mean > log_to[log_to.len() - 1] { to.len() - 1 } else { 0 };
            row[idx] = 1.0;
        }
        out.extend(row);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeSize {
    pub price_nodes: usize,
    pub demand_nodes: usize,
}

impl Default for LatticeSize {
    fn default() -> Self {
        LatticeSize { price_nodes: 400, demand_nodes: 200 }
    }
}

/// Price lattice plus (for the demand variant) an independent demand lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub price: ProcessLattice,
    pub demand: ProcessLattice,
    pub has_demand: bool,
}

pub fn build_lattice(params: &EnvParams, size: LatticeSize) -> Result<LatticeSpec> {
    params.validate()?;
    let price = ProcessLattice::build(
        params.initial_price,
        params.price_drift,
        params.price_vol,
        params.horizon,
        size.price_nodes,
    )?;
    let demand = match &params.demand {
        Some(d) => ProcessLattice::build(d.initial, d.drift, d.vol, params.horizon, size.demand_nodes)?,
        None => ProcessLattice::point(params.horizon),
    };
    Ok(LatticeSpec { price, demand, has_demand: params.has_demand() })
}
