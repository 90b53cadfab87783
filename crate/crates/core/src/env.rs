//! Finite-horizon capacity-expansion environments.
//!
//! A system starts with no capacity and may add integer units at each stage
//! `t = 1..=T`, up to a cumulative budget `K`. The reward at stage `t` is
//!
//! ```text
//! g_t = [u * p_t * min(d_t, c_p * n_t) - c_om * n_t - c_inv * x_t] / (1 + i)^(t-1)
//! ```
//!
//! where `n_t` is the capacity installed after the stage-`t` decision `x_t`.
//! Price (and optionally demand) evolve by multiplicative lognormal shocks.
//! Without a demand process the revenue is uncapped.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    pub drift: f64,
    pub vol: f64,
    pub initial: f64,
    /// Units of demand served per unit of installed capacity.
    pub capacity_per_unit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub horizon: usize,
    pub unit_output: f64,
    pub op_cost: f64,
    pub inv_cost: f64,
    pub interest: f64,
    pub price_drift: f64,
    pub price_vol: f64,
    pub initial_price: f64,
    pub max_capacity: usize,
    /// `None` selects the price-only variant with unbounded demand.
    pub demand: Option<DemandParams>,
    /// When set, shocks are drawn from a pre-sampled pool of this size per
    /// stage instead of fresh from the generator.
    pub pool_size: Option<usize>,
}

impl EnvParams {
    /// Price-only problem with the standard cost and price parameters.
    pub fn price_only(horizon: usize) -> Self {
        EnvParams {
            horizon,
            unit_output: 2920.0,
            op_cost: 300.0,
            inv_cost: 20.0,
            interest: 0.05,
            price_drift: 0.05,
            price_vol: 0.1,
            initial_price: 0.1,
            max_capacity: 1,
            demand: None,
            pool_size: None,
        }
    }

    /// Price and demand problem with budget `max_capacity`.
    pub fn price_demand(horizon: usize, max_capacity: usize) -> Self {
        EnvParams {
            max_capacity,
            demand: Some(DemandParams {
                drift: 0.2,
                vol: 0.1,
                initial: 1.0,
                capacity_per_unit: 1.0,
            }),
            ..Self::price_only(horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, reason))
            }
        }
        let finite = [
            ("u", self.unit_output),
            ("c_om", self.op_cost),
            ("c_inv", self.inv_cost),
            ("i", self.interest),
            ("mu1", self.price_drift),
            ("sigma1", self.price_vol),
            ("p1", self.initial_price),
        ];
        for (key, value) in finite {
            check(value.is_finite(), key, "must be finite")?;
        }
        check(self.horizon >= 2, "T", "horizon must be at least 2")?;
        check(self.max_capacity >= 1, "K", "capacity budget must be at least 1")?;
        check(self.unit_output >= 0.0, "u", "must be non-negative")?;
        check(self.op_cost >= 0.0, "c_om", "must be non-negative")?;
        check(self.inv_cost >= 0.0, "c_inv", "must be non-negative")?;
        check(self.interest >= 0.0, "i", "must be non-negative")?;
        check(self.price_vol > 0.0, "sigma1", "must be positive")?;
        check(self.initial_price > 0.0, "p1", "must be positive")?;
        if let Some(pool) = self.pool_size {
            check(pool >= 1, "pool_size", "must be at least 1")?;
        }
        if let Some(d) = &self.demand {
            check(d.drift.is_finite(), "mu2", "must be finite")?;
            check(d.vol.is_finite() && d.vol > 0.0, "sigma2", "must be positive")?;
            check(d.initial.is_finite() && d.initial > 0.0, "d1", "must be positive")?;
            check(
                d.capacity_per_unit.is_finite() && d.capacity_per_unit > 0.0,
                "c_p",
                "must be positive",
            )?;
        }
        Ok(())
    }

    /// Financial discount factor `(1+i)^-(t-1)` applied to the stage-`t` cashflow.
    pub fn discount(&self, t: usize) -> f64 {
        (1.0 + self.interest).powi(-(t as i32 - 1))
    }

    pub fn has_demand(&self) -> bool {
        self.demand.is_some()
    }

    /// Undiscounted cashflow of stage `t` when `add` units are added to
    /// `installed` at price `price` and demand `demand`.
    pub fn cashflow(&self, price: f64, demand: Option<f64>, installed: usize, add: usize) -> f64 {
        let after = (installed + add) as f64;
        let served = match (&self.demand, demand) {
            (Some(d), Some(level)) => level.min(d.capacity_per_unit * after),
            _ => after,
        };
        self.unit_output * price * served - self.op_cost * after - self.inv_cost * add as f64
    }

    /// Discounted reward `g_t` for `add` units at `state`.
    pub fn reward(&self, state: &EnvState, add: usize) -> f64 {
        self.cashflow(state.price, state.demand, state.installed, add) * self.discount(state.t)
    }

    pub fn initial_state(&self) -> EnvState {
        EnvState {
            t: 1,
            price: self.initial_price,
            demand: self.demand.as_ref().map(|d| d.initial),
            installed: 0,
        }
    }
}

/// Markov state observed before the stage-`t` decision.
///
/// After the last stage the environment returns a state with `t = T + 1`,
/// which only carries the final installed capacity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub price: f64,
    /// `None` means unbounded demand (price-only variant).
    pub demand: Option<f64>,
    pub installed: usize,
}

impl EnvState {
    pub fn residual(&self, params: &EnvParams) -> usize {
        params.max_capacity.saturating_sub(self.installed)
    }
}

/// Units of capacity to add at the current stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decision(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<S = EnvState> {
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
}

/// Returns `{0, 1, ..., K - installed}`.
pub fn feasible_decisions(state: &EnvState, params: &EnvParams) -> Vec<Decision> {
    (0..=state.residual(params)).map(Decision).collect()
}

/// One draw of a log price (or demand) ratio from `Normal(drift, vol)`.
pub fn sample_log_ratio(drift: f64, vol: f64, rng: &mut Rng) -> f64 {
    match Normal::new(drift, vol) {
        Ok(normal) => normal.sample(rng),
        // vol == 0 (or a rounding artefact of it) is the degenerate normal
        Err(_) => drift,
    }
}

/// Episodic environment with a contiguous decision set `0..n`.
///
/// Both the capacity environments and hand-built test MDPs implement this,
/// so the tabular learner can be checked against exact solutions.
pub trait EpisodicEnv {
    type State: Clone;

    fn reset(&mut self) -> Self::State;

    /// Number of feasible decisions; the feasible set is `0..n`, never empty.
    fn num_feasible(&self, state: &Self::State) -> usize;

    fn step(&mut self, state: &Self::State, decision: usize) -> Result<StepOutcome<Self::State>>;

    fn is_terminal(&self, state: &Self::State) -> bool;
}

/// Pre-drawn shocks, one row per transition `t -> t+1`.
#[derive(Clone, Debug)]
struct ShockPool {
    price: Vec<Vec<f64>>,
    demand: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct CapacityEnv {
    params: EnvParams,
    seed: u64,
    rng: Rng,
    pool: Option<ShockPool>,
}

impl CapacityEnv {
    pub fn new(params: EnvParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let pool = params.pool_size.map(|size| {
            let mut pool_rng = rng::stream(seed, rng::TAG_POOL);
            let stages = params.horizon - 1;
            let mut draw = |drift: f64, vol: f64| -> Vec<Vec<f64>> {
                (0..stages)
                    .map(|_| (0..size).map(|_| sample_log_ratio(drift, vol, &mut pool_rng)).collect())
                    .collect()
            };
            let price = draw(params.price_drift, params.price_vol);
            let demand = match &params.demand {
                Some(d) => draw(d.drift, d.vol),
                None => Vec::new(),
            };
            ShockPool { price, demand }
        });
        Ok(CapacityEnv { rng: rng::stream(seed, rng::TAG_ENV), seed, params, pool })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replaces the internal generator, e.g. for one evaluation replication.
    pub fn set_rng(&mut self, rng: Rng) {
        self.rng = rng;
    }

    pub fn check_feasible(&self, state: &EnvState, decision: Decision) -> Result<()> {
        if decision.0 > state.residual(&self.params) {
            return Err(Error::Infeasible {
                add: decision.0,
                installed: state.installed,
                max: self.params.max_capacity,
            });
        }
        Ok(())
    }

    /// Applies `decision` at `state`: computes the discounted reward and
    /// samples the next price and demand. Infeasible decisions are rejected.
    pub fn step_state(&mut self, state: &EnvState, decision: Decision) -> Result<StepOutcome> {
        let horizon = self.params.horizon;
        if state.t == 0 || state.t > horizon {
            return Err(Error::config("t", format!("stage {} outside 1..={horizon}", state.t)));
        }
        self.check_feasible(state, decision)?;
        let reward = self.params.reward(state, decision.0);
        let installed = state.installed + decision.0;
        if state.t == horizon {
            return Ok(StepOutcome {
                reward,
                next_state: EnvState { t: horizon + 1, installed, ..*state },
                terminal: true,
            });
        }
        let (price_shock, demand_shock) = self.draw_shocks(state.t);
        let next_state = EnvState {
            t: state.t + 1,
            price: state.price * price_shock.exp(),
            demand: state.demand.zip(demand_shock).map(|(d, s)| d * s.exp()),
            installed,
        };
        Ok(StepOutcome { reward, next_state, terminal: false })
    }

    fn draw_shocks(&mut self, t: usize) -> (f64, Option<f64>) {
        match &self.pool {
            Some(pool) => {
                let row = t - 1;
                let size = pool.price[row].len();
                let price = pool.price[row][self.rng.random_range(0..size)];
                let demand = if self.params.demand.is_some() {
                    Some(pool.demand[row][self.rng.random_range(0..size)])
                } else {
                    None
                };
                (price, demand)
            }
            None => {
                let price =
                    sample_log_ratio(self.params.price_drift, self.params.price_vol, &mut self.rng);
                let demand = self
                    .params
                    .demand
                    .as_ref()
                    .map(|d| sample_log_ratio(d.drift, d.vol, &mut self.rng));
                (price, demand)
            }
        }
    }
}

impl EpisodicEnv for CapacityEnv {
    type State = EnvState;

    fn reset(&mut self) -> EnvState {
        self.params.initial_state()
    }

    fn num_feasible(&self, state: &EnvState) -> usize {
        state.residual(&self.params) + 1
    }

    fn step(&mut self, state: &EnvState, decision: usize) -> Result<StepOutcome> {
        self.step_state(state, Decision(decision))
    }

    fn is_terminal(&self, state: &EnvState) -> bool {
        state.t > self.params.horizon
    }
}
