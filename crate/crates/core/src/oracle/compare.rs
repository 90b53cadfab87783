//! Side-by-side comparison of a learned policy against the lattice optimum.

use std::io::Write;

use super::dp::DPSolution;
use super::evaluate::{evaluate_policy, EvalReport};
use super::surface::{price_threshold, threshold_band};
use crate::env::EnvParams;
use crate::error::Result;
use crate::policy::Policy;

/// Largest accepted threshold difference in the price-only variant.
pub const THRESHOLD_TOLERANCE: f64 = 0.005;
/// Largest accepted profit gap in percent of the optimum, price-only.
pub const PRICE_ONLY_GAP_PCT: f64 = 2.0;
/// Largest accepted profit gap in percent of the optimum, price and demand.
pub const PRICE_DEMAND_GAP_PCT: f64 = 5.0;

const SCAN_POINTS: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct StageThresholds {
    pub stage: usize,
    /// Demand level the thresholds are taken at (median path); `None` for
    /// the price-only variant.
    pub demand: Option<f64>,
    pub learned: Option<f64>,
    pub optimal: Option<f64>,
}

impl StageThresholds {
    /// `|learned - optimal|`; infinite when only one of them exists.
    pub fn abs_delta(&self) -> f64 {
        match (self.learned, self.optimal) {
            (Some(a), Some(b)) => (a - b).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub stages: Vec<StageThresholds>,
    pub learned: EvalReport,
    pub optimal: EvalReport,
    pub has_demand: bool,
}

impl Comparison {
    /// `E[optimal] - E[learned]`.
    pub fn profit_gap(&self) -> f64 {
        self.optimal.mean - self.learned.mean
    }

    /// Profit gap in percent of `|E[optimal]|`.
    pub fn percent_gap(&self) -> f64 {
        let denom = self.optimal.mean.abs();
        if denom == 0.0 {
            if self.profit_gap() <= 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            100.0 * self.profit_gap() / denom
        }
    }

    pub fn gap_tolerance_pct(&self) -> f64 {
        if self.has_demand { PRICE_DEMAND_GAP_PCT } else { PRICE_ONLY_GAP_PCT }
    }

    pub fn thresholds_pass(&self) -> bool {
        self.has_demand || self.stages.iter().all(|s| s.abs_delta() <= THRESHOLD_TOLERANCE)
    }

    pub fn passes(&self) -> bool {
        self.thresholds_pass() && self.percent_gap() <= self.gap_tolerance_pct()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
        writeln!(out, "stage,demand,learned_threshold,optimal_threshold,abs_delta")?;
        for s in &self.stages {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.stage,
                s.demand.unwrap_or(f64::INFINITY),
                opt(s.learned),
                opt(s.optimal),
                s.abs_delta()
            )?;
        }
        writeln!(out, "policy,replications,mean,std_error")?;
        for r in [&self.learned, &self.optimal] {
            writeln!(out, "{},{},{},{}", r.policy, r.replications, r.mean, r.std_error)?;
        }
        writeln!(out, "profit_gap,percent_gap,gap_tolerance_pct,pass")?;
        writeln!(
            out,
            "{},{},{},{}",
            self.profit_gap(),
            self.percent_gap(),
            self.gap_tolerance_pct(),
            self.passes()
        )
    }
}

/// Median demand at stage `t` along the deterministic drift path.
pub fn median_demand(params: &EnvParams, stage: usize) -> Option<f64> {
    params.demand.as_ref().map(|d| d.initial * (d.drift * (stage - 1) as f64).exp())
}

/// Stage thresholds (stages `2..=T`, nothing installed) of both policies,
/// plus common-random-number profit estimates with `replications` paths.
pub fn compare_policies<P: Policy + ?Sized>(
    learned: &P,
    optimal: &DPSolution,
    replications: usize,
    seed: u64,
) -> Result<Comparison> {
    let params = optimal.params();
    let stages = (2..=params.horizon)
        .map(|stage| {
            let demand = median_demand(params, stage);
            let (lo, hi) = threshold_band(params, stage);
            StageThresholds {
                stage,
                demand,
                learned: price_threshold(learned, params, stage, 0, demand, lo, hi, SCAN_POINTS),
                optimal: price_threshold(optimal, params, stage, 0, demand, lo, hi, SCAN_POINTS),
            }
        })
        .collect();
    Ok(Comparison {
        stages,
        learned: evaluate_policy(learned, params, replications, seed)?,
        optimal: evaluate_policy(optimal, params, replications, seed)?,
        has_demand: params.has_demand(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{backward_induction, build_lattice, LatticeSize};

    #[test]
    fn optimum_against_itself_passes() {
        let p = EnvParams::price_only(3);
        let sol = backward_induction(&build_lattice(&p, LatticeSize { price_nodes: 200, demand_nodes: 3 }).unwrap(), &p);
        let cmp = compare_policies(&sol, &sol, 2000, 4).unwrap();
        assert_eq!(cmp.profit_gap(), 0.0);
        assert!(cmp.passes());
        assert_eq!(cmp.stages.len(), 2);
        assert!(cmp.stages.iter().all(|s| s.abs_delta() == 0.0));
        let mut buf = Vec::new();
        cmp.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("true"));
    }

    #[test]
    fn never_investing_fails() {
        let p = EnvParams::price_only(2);
        let sol = backward_induction(&build_lattice(&p, LatticeSize { price_nodes: 200, demand_nodes: 3 }).unwrap(), &p);
        let cmp = compare_policies(&crate::policy::NeverInvest, &sol, 2000, 4).unwrap();
        assert_eq!(cmp.stages[0].learned, None);
        assert!(cmp.stages[0].abs_delta().is_infinite());
        assert!(!cmp.passes());
    }

    #[test]
    fn median_demand_path() {
        let p = EnvParams::price_demand(3, 2);
        assert_eq!(median_demand(&p, 1), Some(1.0));
        assert!((median_demand(&p, 3).unwrap() - 0.4f64.exp()).abs() < 1e-15);
        assert_eq!(median_demand(&EnvParams::price_only(3), 2), None);
    }
}
