//! Exact finite-horizon backward induction on a price/demand lattice.

use std::io::Write;

use super::lattice::{LatticeSpec, ProcessLattice};
use crate::env::{Decision, EnvParams, EnvState};
use crate::policy::Policy;
use crate::rng::Rng;

/// Value function, optimal decisions and continuation values on the lattice.
///
/// Arrays are indexed `[t - 1][installed]` and hold row-major
/// `price_nodes x demand_nodes` tables for that stage.
#[derive(Clone, Debug)]
pub struct DPSolution {
    params: EnvParams,
    lattice: LatticeSpec,
    values: Vec<Vec<Vec<f64>>>,
    decisions: Vec<Vec<Vec<usize>>>,
    /// Expected value-to-go from stage `t + 1`, indexed by capacity after
    /// the stage-`t` decision. Zero at the last stage.
    continuation: Vec<Vec<Vec<f64>>>,
}

fn expectation(price: &ProcessLattice, demand: &ProcessLattice, t: usize, next: &[f64]) -> Vec<f64> {
    let (np, nd) = (price.nodes(t).len(), demand.nodes(t).len());
    let (np1, nd1) = (price.nodes(t + 1).len(), demand.nodes(t + 1).len());
    let pd = demand.matrix(t);
    // contract demand first: tmp[p', d] = sum_d' V[p', d'] Pd[d, d']
    let mut tmp = vec![0.0; np1 * nd];
    for p1 in 0..np1 {
        let v_row = &next[p1 * nd1..(p1 + 1) * nd1];
        for d in 0..nd {
            let k_row = &pd[d * nd1..(d + 1) * nd1];
            tmp[p1 * nd + d] = v_row.iter().zip(k_row).map(|(v, k)| v * k).sum();
        }
    }
    let pp = price.matrix(t);
    let mut out = vec![0.0; np * nd];
    for p in 0..np {
        let k_row = &pp[p * np1..(p + 1) * np1];
        let o_row = &mut out[p * nd..(p + 1) * nd];
        for (p1, &k) in k_row.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            for (o, &v) in o_row.iter_mut().zip(&tmp[p1 * nd..(p1 + 1) * nd]) {
                *o += k * v;
            }
        }
    }
    out
}

/// `V(t, node, n) = max_x g(t, node, n, x) + E[V(t+1, node', n + x)]`,
/// from `t = T` down to 1. Ties go to the smaller decision.
pub fn backward_induction(lattice: &LatticeSpec, params: &EnvParams) -> DPSolution {
    let horizon = params.horizon;
    let k_max = params.max_capacity;
    let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    let mut decisions = vec![Vec::new(); horizon];
    let mut continuation = vec![Vec::new(); horizon];

    for t in (1..=horizon).rev() {
        let prices = lattice.price.nodes(t);
        let demands = lattice.demand.nodes(t);
        let cells = prices.len() * demands.len();
        continuation[t - 1] = (0..=k_max)
            .map(|after| {
                if t == horizon {
                    vec![0.0; cells]
                } else {
                    expectation(&lattice.price, &lattice.demand, t, &values[t][after])
                }
            })
            .collect();
        let discount = params.discount(t);
        let mut v_t = Vec::with_capacity(k_max + 1);
        let mut x_t = Vec::with_capacity(k_max + 1);
        for installed in 0..=k_max {
            let mut v = vec![0.0; cells];
            let mut x = vec![0; cells];
            for (pi, &price) in prices.iter().enumerate() {
                for (di, &demand) in demands.iter().enumerate() {
                    let cell = pi * demands.len() + di;
                    let demand = lattice.has_demand.then_some(demand);
                    let mut best = (f64::NEG_INFINITY, 0);
                    for add in 0..=(k_max - installed) {
                        let q = params.cashflow(price, demand, installed, add) * discount
                            + continuation[t - 1][installed + add][cell];
                        if q > best.0 {
                            best = (q, add);
                        }
                    }
                    v[cell] = best.0;
                    x[cell] = best.1;
                }
            }
            v_t.push(v);
            x_t.push(x);
        }
        values[t - 1] = v_t;
        decisions[t - 1] = x_t;
    }
    DPSolution { params: params.clone(), lattice: lattice.clone(), values, decisions, continuation }
}

impl DPSolution {
    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn value(&self, t: usize, price_node: usize, demand_node: usize, installed: usize) -> f64 {
        self.values[t - 1][installed][price_node * self.lattice.demand.nodes(t).len() + demand_node]
    }

    pub fn decision(&self, t: usize, price_node: usize, demand_node: usize, installed: usize) -> usize {
        self.decisions[t - 1][installed][price_node * self.lattice.demand.nodes(t).len() + demand_node]
    }

    /// Expected optimal profit from the initial state.
    pub fn initial_value(&self) -> f64 {
        self.value(1, 0, 0, 0)
    }

    /// Continuation value after the stage-`t` decision, interpolated
    /// bilinearly in log price and log demand.
    pub fn continuation_at(&self, t: usize, installed_after: usize, price: f64, demand: Option<f64>) -> f64 {
        let table = &self.continuation[t - 1][installed_after];
        let nd = self.lattice.demand.nodes(t).len();
        let (pi, pw) = self.lattice.price.locate(t, price);
        let (di, dw) = match demand {
            Some(d) if self.lattice.has_demand => self.lattice.demand.locate(t, d),
            _ => (0, 0.0),
        };
        let at = |p: usize, d: usize| table[p * nd + d];
        let p_hi = if pw > 0.0 { pi + 1 } else { pi };
        let d_hi = if dw > 0.0 { di + 1 } else { di };
        (1.0 - pw) * ((1.0 - dw) * at(pi, di) + dw * at(pi, d_hi))
            + pw * ((1.0 - dw) * at(p_hi, di) + dw * at(p_hi, d_hi))
    }

    /// Optimal decision at an arbitrary state: exact immediate reward plus
    /// the interpolated continuation value.
    pub fn decide_state(&self, state: &EnvState) -> Decision {
        if state.t == 0 || state.t > self.params.horizon {
            return Decision(0);
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for add in 0..=state.residual(&self.params) {
            let q = self.params.reward(state, add)
                + self.continuation_at(state.t, state.installed + add, state.price, state.demand);
            if q > best.0 {
                best = (q, add);
            }
        }
        Decision(best.1)
    }

    /// Lowest stage-`t` price node whose optimal decision adds capacity.
    pub fn node_threshold(&self, t: usize, installed: usize, demand_node: usize) -> Option<f64> {
        let prices = self.lattice.price.nodes(t);
        (0..prices.len())
            .find(|&p| self.decision(t, p, demand_node, installed) > 0)
            .map(|p| prices[p])
    }

    /// CSV rows `t,price,demand,installed,decision,value` over the whole lattice.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,price,demand,installed,decision,value")?;
        for t in 1..=self.params.horizon {
            let prices = self.lattice.price.nodes(t);
            let demands = self.lattice.demand.nodes(t);
            for installed in 0..=self.params.max_capacity {
                for (pi, price) in prices.iter().enumerate() {
                    for (di, demand) in demands.iter().enumerate() {
                        writeln!(
                            out,
                            "{t},{price},{demand},{installed},{},{}",
                            self.decision(t, pi, di, installed),
                            self.value(t, pi, di, installed)
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

impl Policy for DPSolution {
    fn decide(&self, state: &EnvState, _: &EnvParams, _: &mut Rng) -> Decision {
        self.decide_state(state)
    }

    fn name(&self) -> String {
        "dp".into()
    }
}
