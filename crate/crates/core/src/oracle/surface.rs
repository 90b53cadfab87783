//! Decision surfaces and price thresholds extracted from a policy.

use std::io::Write;

use crate::env::{EnvParams, EnvState};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

/// Evenly spaced price (and optionally demand) points.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub price: (f64, f64, usize),
    pub demand: Option<(f64, f64, usize)>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

impl GridSpec {
    /// Parses `lo:hi:n` or `lo:hi:n,dlo:dhi:m`.
    pub fn parse(text: &str) -> Result<Self> {
        fn axis(part: &str) -> Result<(f64, f64, usize)> {
            let bad = || Error::config("grid", format!("expected lo:hi:n, got `{part}`"));
            let fields: Vec<&str> = part.trim().split(':').collect();
            if fields.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = fields[0].parse().map_err(|_| bad())?;
            let hi: f64 = fields[1].parse().map_err(|_| bad())?;
            let n: usize = fields[2].parse().map_err(|_| bad())?;
            if n == 0 || !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi < lo {
                return Err(bad());
            }
            Ok((lo, hi, n))
        }
        let mut parts = text.split(',');
        let price = axis(parts.next().unwrap_or_default())?;
        let demand = parts.next().map(axis).transpose()?;
        if parts.next().is_some() {
            return Err(Error::config("grid", "at most two axes"));
        }
        Ok(GridSpec { price, demand })
    }

    /// Central `+-3 sd` band of the stage-`t` marginals.
    pub fn default_for(params: &EnvParams, stage: usize) -> Self {
        let band = |x0: f64, mu: f64, sigma: f64, n: usize| {
            let steps = stage.saturating_sub(1) as f64;
            let half = 3.0 * sigma * steps.sqrt().max(1.0);
            let c = x0.ln() + mu * steps;
            ((c - half).exp(), (c + half).exp(), n)
        };
        GridSpec {
            price: band(params.initial_price, params.price_drift, params.price_vol, 121),
            demand: params.demand.as_ref().map(|d| band(d.initial, d.drift, d.vol, 41)),
        }
    }

    pub fn prices(&self) -> Vec<f64> {
        linspace(self.price.0, self.price.1, self.price.2)
    }

    pub fn demands(&self) -> Option<Vec<f64>> {
        self.demand.map(|(lo, hi, n)| linspace(lo, hi, n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMap {
    pub stage: usize,
    pub installed: usize,
    pub prices: Vec<f64>,
    /// `None` for the price-only variant.
    pub demands: Option<Vec<f64>>,
    /// Row-major `prices x demands` decisions.
    pub decisions: Vec<usize>,
}

impl PolicyMap {
    pub fn columns(&self) -> usize {
        self.demands.as_ref().map_or(1, Vec::len)
    }

    pub fn at(&self, price_idx: usize, demand_idx: usize) -> usize {
        self.decisions[price_idx * self.columns() + demand_idx]
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "stage,installed,price,demand,decision")?;
        for (pi, price) in self.prices.iter().enumerate() {
            for di in 0..self.columns() {
                let demand = self.demands.as_ref().map_or(f64::INFINITY, |d| d[di]);
                writeln!(out, "{},{},{},{},{}", self.stage, self.installed, price, demand, self.at(pi, di))?;
            }
        }
        Ok(())
    }

    /// Cells whose decision differs from `other` (same grid required).
    pub fn disagreements(&self, other: &PolicyMap) -> Vec<(usize, usize)> {
        assert_eq!(self.decisions.len(), other.decisions.len(), "maps on different grids");
        let cols = self.columns();
        (0..self.decisions.len())
            .filter(|&i| self.decisions[i] != other.decisions[i])
            .map(|i| (i / cols, i % cols))
            .collect()
    }

    /// Cells adjacent (8-neighbourhood) to a cell with a different decision.
    pub fn frontier(&self) -> Vec<(usize, usize)> {
        let (rows, cols) = (self.prices.len(), self.columns());
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let here = self.at(r, c);
                let mut edge = false;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                            edge |= self.at(rr as usize, cc as usize) != here;
                        }
                    }
                }
                if edge {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Greedy decision of `policy` at every grid point for a fixed stage and
/// installed capacity.
pub fn extract_policy_map<P: Policy + ?Sized>(
    policy: &P,
    params: &EnvParams,
    stage: usize,
    grid: &GridSpec,
    installed: usize,
) -> Result<PolicyMap> {
    if stage == 0 || stage > params.horizon {
        return Err(Error::config("stage", format!("must lie in 1..={}", params.horizon)));
    }
    if installed > params.max_capacity {
        return Err(Error::config("installed", format!("cannot exceed K = {}", params.max_capacity)));
    }
    let prices = grid.prices();
    let demands = if params.has_demand() { grid.demands() } else { None };
    let mut rng = rng::stream(0, rng::TAG_POLICY);
    let mut decisions = Vec::with_capacity(prices.len() * demands.as_ref().map_or(1, Vec::len));
    for &price in &prices {
        let cols: Vec<Option<f64>> = match &demands {
            Some(d) => d.iter().copied().map(Some).collect(),
            None => vec![params.demand.as_ref().map(|d| d.initial)],
        };
        for demand in cols {
            let s = EnvState { t: stage, price, demand, installed };
            decisions.push(policy.decide(&s, params, &mut rng).0);
        }
    }
    Ok(PolicyMap { stage, installed, prices, demands, decisions })
}

/// Lowest price in `[lo, hi]` at which `policy` adds capacity, found by a
/// grid scan followed by bisection between the bracketing points. Returns
/// `lo` if it already invests there and `None` if it never does.
#[allow(clippy::too_many_arguments)]
pub fn price_threshold<P: Policy + ?Sized>(
    policy: &P,
    params: &EnvParams,
    stage: usize,
    installed: usize,
    demand: Option<f64>,
    lo: f64,
    hi: f64,
    points: usize,
) -> Option<f64> {
    let mut rng = rng::stream(0, rng::TAG_POLICY);
    let mut invests = |price: f64| {
        let s = EnvState { t: stage, price, demand, installed };
        policy.decide(&s, params, &mut rng).0 > 0
    };
    let grid = linspace(lo, hi, points.max(2));
    let first = grid.iter().position(|&p| invests(p))?;
    if first == 0 {
        return Some(lo);
    }
    let (mut a, mut b) = (grid[first - 1], grid[first]);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if invests(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}

/// Default threshold search band for stage `t`: `+-3 sd` around the median.
pub fn threshold_band(params: &EnvParams, stage: usize) -> (f64, f64) {
    let g = GridSpec::default_for(params, stage);
    (g.price.0, g.price.1)
}
