//! Tabular Q-learning over a discretized state space.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use rand::Rng as _;

use crate::dqn::TrainingConfig;
use crate::env::{EnvParams, EnvState, EpisodicEnv};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Maps an environment state onto a table key.
pub trait StateKeyer<S> {
    type Key: Clone + Eq + Hash + Ord;

    fn key(&self, state: &S) -> Self::Key;
}

/// Uses the state itself as the key.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactKey;

impl<S: Clone + Eq + Hash + Ord> StateKeyer<S> for ExactKey {
    type Key = S;

    fn key(&self, state: &S) -> S {
        state.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub t: usize,
    pub price_bin: usize,
    pub demand_bin: usize,
    pub installed: usize,
}

/// Price and demand bins; stage and installed capacity are kept exact.
///
/// Each edge list holds the lower bound of every bin. Bin `j` covers
/// `[edges[j], edges[j+1])` and the last bin is open above; values below the
/// first edge fall in bin 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretizer {
    price_edges: Vec<f64>,
    demand_edges: Vec<f64>,
}

impl Discretizer {
    pub fn new(price_edges: Vec<f64>, demand_edges: Vec<f64>) -> Result<Self> {
        for (name, edges) in [("price_edges", &price_edges), ("demand_edges", &demand_edges)] {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(name, "edges must be finite and strictly increasing"));
            }
        }
        if price_edges.is_empty() {
            return Err(Error::config("price_edges", "at least one bin required"));
        }
        Ok(Discretizer { price_edges, demand_edges })
    }

    /// `bins` uniform bins on `[0, upper)`.
    pub fn uniform_edges(upper: f64, bins: usize) -> Vec<f64> {
        (0..bins).map(|j| upper * j as f64 / bins as f64).collect()
    }

    /// 200 uniform bins on `[0, x1 * exp((mu + 4 sigma) T)]` for each process.
    pub fn for_params(params: &EnvParams) -> Self {
        const BINS: usize = 200;
        let horizon = params.horizon as f64;
        let upper = params.initial_price * ((params.price_drift + 4.0 * params.price_vol) * horizon).exp();
        let demand_edges = match &params.demand {
            Some(d) => Self::uniform_edges(d.initial * ((d.drift + 4.0 * d.vol) * horizon).exp(), BINS),
            None => Vec::new(),
        };
        Discretizer { price_edges: Self::uniform_edges(upper, BINS), demand_edges }
    }

    fn bin(edges: &[f64], x: f64) -> usize {
        edges.partition_point(|&e| e <= x).saturating_sub(1)
    }

    pub fn price_bin(&self, price: f64) -> usize {
        Self::bin(&self.price_edges, price)
    }

    pub fn demand_bin(&self, demand: Option<f64>) -> usize {
        match demand {
            Some(d) if !self.demand_edges.is_empty() => Self::bin(&self.demand_edges, d),
            _ => 0,
        }
    }

    pub fn price_bin_low(&self, bin: usize) -> f64 {
        self.price_edges[bin]
    }

    /// Lower edge of a demand bin, infinite when demand is not modelled.
    pub fn demand_bin_low(&self, bin: usize) -> f64 {
        self.demand_edges.get(bin).copied().unwrap_or(f64::INFINITY)
    }
}

impl StateKeyer<EnvState> for Discretizer {
    type Key = CellKey;

    fn key(&self, s: &EnvState) -> CellKey {
        CellKey {
            t: s.t,
            price_bin: self.price_bin(s.price),
            demand_bin: self.demand_bin(s.demand),
            installed: s.installed,
        }
    }
}

/// Q-values and visit counts keyed by `(state key, decision)`; missing
/// entries read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<K: Eq + Hash> {
    values: HashMap<(K, usize), f64>,
    visits: HashMap<(K, usize), u64>,
}

impl<K: Clone + Eq + Hash + Ord> Default for QTable<K> {
    fn default() -> Self {
        QTable { values: HashMap::new(), visits: HashMap::new() }
    }
}

impl<K: Clone + Eq + Hash + Ord> QTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &K, decision: usize) -> f64 {
        self.values.get(&(key.clone(), decision)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, key: K, decision: usize, value: f64) {
        self.values.insert((key, decision), value);
    }

    pub fn visits(&self, key: &K, decision: usize) -> u64 {
        self.visits.get(&(key.clone(), decision)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Q-values of decisions `0..n` at `key`.
    pub fn row(&self, key: &K, n: usize) -> Vec<f64> {
        (0..n).map(|x| self.get(key, x)).collect()
    }

    pub fn max_value(&self, key: &K, n: usize) -> f64 {
        (0..n).map(|x| self.get(key, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entries sorted by key then decision.
    pub fn entries(&self) -> Vec<(K, usize, f64, u64)> {
        let mut out: Vec<_> = self
            .values
            .iter()
            .map(|((k, x), v)| (k.clone(), *x, *v, self.visits(k, *x)))
            .collect();
        out.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }

    /// One Q-learning step. `next` is `None` for terminal transitions,
    /// otherwise the next key and its feasible decision count. Returns the
    /// temporal-difference error before the update.
    pub fn q_update(
        &mut self,
        key: &K,
        decision: usize,
        reward: f64,
        next: Option<(&K, usize)>,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let bootstrap = match next {
            Some((next_key, n)) => self.max_value(next_key, n),
            None => 0.0,
        };
        let entry = self.values.entry((key.clone(), decision)).or_insert(0.0);
        let td = reward + gamma * bootstrap - *entry;
        *entry += alpha * td;
        *self.visits.entry((key.clone(), decision)).or_insert(0) += 1;
        td
    }
}

impl QTable<CellKey> {
    /// CSV export: `t,price_bin_low,demand_bin_low,installed,decision,q_value,visits`.
    pub fn write_csv<W: Write>(&self, disc: &Discretizer, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,price_bin_low,demand_bin_low,installed,decision,q_value,visits")?;
        for (k, x, v, n) in self.entries() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                k.t,
                disc.price_bin_low(k.price_bin),
                disc.demand_bin_low(k.demand_bin),
                k.installed,
                x,
                v,
                n
            )?;
        }
        Ok(())
    }
}

/// `max(eps_end, eps_start * eps_decay^(episode - 1))` for 1-based episodes.
pub fn epsilon_schedule(episode: usize, eps_start: f64, eps_end: f64, eps_decay: f64) -> f64 {
    let exponent = episode.saturating_sub(1) as f64;
    (eps_start * eps_decay.powf(exponent)).max(eps_end)
}

/// Index of the largest value; ties go to the smallest index.
pub fn greedy_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over the feasible decisions `0..values.len()`.
///
/// Exploits with probability `1 - epsilon`, breaking ties uniformly at
/// random; otherwise draws uniformly over the whole feasible set.
pub fn epsilon_greedy(values: &[f64], epsilon: f64, rng: &mut Rng) -> usize {
    assert!(!values.is_empty(), "feasible set is never empty");
    if rng.random::<f64>() < epsilon {
        return rng.random_range(0..values.len());
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Deterministic greedy decision from a table.
pub fn greedy_policy<K: Clone + Eq + Hash + Ord>(table: &QTable<K>, key: &K, n_feasible: usize) -> usize {
    greedy_index(&table.row(key, n_feasible))
}

#[derive(Clone, Debug)]
pub struct TabularRun<K: Eq + Hash> {
    pub table: QTable<K>,
    /// Undiscounted (gamma-free) sum of rewards per episode.
    pub returns: Vec<f64>,
}

/// Runs `config.episodes` episodes of epsilon-greedy Q-learning.
pub fn train_tabular<E, K>(env: &mut E, config: &TrainingConfig, keyer: &K) -> Result<TabularRun<K::Key>>
where
    E: EpisodicEnv,
    K: StateKeyer<E::State>,
{
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::TAG_EXPLORE);
    let mut table = QTable::new();
    let mut returns = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let eps = epsilon_schedule(episode, config.eps_start, config.eps_end, config.eps_decay);
        let mut state = env.reset();
        let mut total = 0.0;
        loop {
            let key = keyer.key(&state);
            let n = env.num_feasible(&state);
            let x = epsilon_greedy(&table.row(&key, n), eps, &mut rng);
            let out = env.step(&state, x)?;
            total += out.reward;
            if out.terminal {
                table.q_update(&key, x, out.reward, None, config.tabular_alpha, config.gamma);
                break;
            }
            let next_key = keyer.key(&out.next_state);
            let next_n = env.num_feasible(&out.next_state);
            table.q_update(&key, x, out.reward, Some((&next_key, next_n)), config.tabular_alpha, config.gamma);
            state = out.next_state;
        }
        returns.push(total);
    }
    Ok(TabularRun { table, returns })
}
