//! Run configuration files.
//!
//! A configuration is INI-style text with the sections `[env]`, `[demand]`
//! (present only for the price-and-demand variant), `[train]` and
//! `[oracle]`. Keys absent from `[train]` and `[oracle]` take their
//! defaults; `[env]` requires `T`, `u`, `c_om`, `c_inv`, `mu1`, `sigma1` and
//! `p1`, and `[demand]` requires all of `mu2`, `sigma2`, `d1` and `c_p`.
//! Overrides of the form `section.key=value` are applied on top of the file.
//!
//! The digest of a configuration is the SHA-256 of its canonical rendering,
//! so two files differing only in comments, ordering or number formatting
//! share a digest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::dqn::TrainingConfig;
use crate::env::{DemandParams, EnvParams};
use crate::error::{Error, Result};
use crate::neuralnet::{Activation, OptimizerKind};
use crate::oracle::LatticeSize;

/// Settings for the lattice oracle and the policy evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub lattice: LatticeSize,
    pub replications: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { lattice: LatticeSize::default(), replications: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvParams,
    pub train: TrainingConfig,
    pub oracle: OracleConfig,
}

const SECTIONS: [&str; 4] = ["env", "demand", "train", "oracle"];
const ENV_REQUIRED: [&str; 7] = ["T", "u", "c_om", "c_inv", "mu1", "sigma1", "p1"];
const ENV_OPTIONAL: [&str; 3] = ["i", "K", "pool_size"];
const DEMAND_KEYS: [&str; 4] = ["mu2", "sigma2", "d1", "c_p"];
const TRAIN_KEYS: [&str; 15] = [
    "episodes",
    "gamma",
    "learning_rate",
    "alpha",
    "eps_start",
    "eps_end",
    "eps_decay",
    "batch_size",
    "buffer_capacity",
    "sync_period",
    "min_fill",
    "seed",
    "hidden",
    "activation",
    "optimizer",
];
const ORACLE_KEYS: [&str; 3] = ["price_nodes", "demand_nodes", "replications"];

/// Profiles compiled into the binary, addressable by name.
pub const BUILTIN_PROFILES: [(&str, &str); 10] = [
    ("price_only", include_str!("../profiles/price_only.cfg")),
    ("price_demand", include_str!("../profiles/price_demand.cfg")),
    ("price_only_T2", include_str!("../profiles/price_only_T2.cfg")),
    ("price_only_T3", include_str!("../profiles/price_only_T3.cfg")),
    ("price_demand_T3_K2", include_str!("../profiles/price_demand_T3_K2.cfg")),
    ("price_demand_T4_K2", include_str!("../profiles/price_demand_T4_K2.cfg")),
    ("price_demand_T4_K3", include_str!("../profiles/price_demand_T4_K3.cfg")),
    ("price_demand_T5_K2", include_str!("../profiles/price_demand_T5_K2.cfg")),
    ("price_demand_T5_K3", include_str!("../profiles/price_demand_T5_K3.cfg")),
    ("price_demand_T5_K4", include_str!("../profiles/price_demand_T5_K4.cfg")),
];

/// Text of a built-in profile; accepts the bare name or `name.cfg`.
pub fn builtin_profile(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    BUILTIN_PROFILES.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}

type Table = BTreeMap<String, BTreeMap<String, String>>;

fn parse_table(text: &str) -> Result<Table> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    let mut table = Table::new();
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((key, _)) = props.iter().next() {
                return Err(Error::config(key, "key outside of any section"));
            }
            continue;
        };
        if !SECTIONS.contains(&section) {
            return Err(Error::config(section, "unknown section"));
        }
        let entry = table.entry(section.to_string()).or_default();
        for (key, value) in props.iter() {
            entry.insert(key.to_string(), value.trim().to_string());
        }
    }
    Ok(table)
}

fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::config(path, "override must name section.key"))?;
    if !SECTIONS.contains(&section) {
        return Err(Error::config(section, "unknown section"));
    }
    table
        .entry(section.to_string())
        .or_default()
        .insert(key.to_string(), value.trim().to_string());
    Ok(())
}

struct Section<'a> {
    name: &'a str,
    values: BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn take(table: &mut Table, name: &'a str, allowed: &[&str]) -> Result<Self> {
        let values = table.remove(name).unwrap_or_default();
        if let Some(key) = values.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::config(key, format!("unknown key in [{name}]")));
        }
        Ok(Section { name, values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{raw}` in [{}]", self.name))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::config(key, format!("missing required key in [{}]", self.name)))
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

fn parse_hidden(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|w| w.trim())
        .filter(|w| !w.is_empty())
        .map(|w| w.parse().map_err(|_| Error::config("hidden", format!("cannot parse `{raw}`"))))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides::<&str>(text, &[])
    }

    pub fn parse_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for spec in overrides {
            apply_override(&mut table, spec.as_ref())?;
        }
        Self::from_table(table)
    }

    /// Reads `path`, falling back to a built-in profile of that name when no
    /// such file exists.
    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(err) => match path.to_str().and_then(builtin_profile) {
                Some(text) => text.to_string(),
                None => return Err(Error::config("config", format!("{}: {err}", path.display()))),
            },
        };
        Self::parse_with_overrides(&text, overrides)
    }

    fn from_table(mut table: Table) -> Result<Self> {
        let all_env: Vec<&str> = ENV_REQUIRED.iter().chain(&ENV_OPTIONAL).copied().collect();
        let env = Section::take(&mut table, "env", &all_env)?;
        let demand = table
            .contains_key("demand")
            .then(|| Section::take(&mut table, "demand", &DEMAND_KEYS))
            .transpose()?;
        let train = Section::take(&mut table, "train", &TRAIN_KEYS)?;
        let oracle = Section::take(&mut table, "oracle", &ORACLE_KEYS)?;

        let base = EnvParams::price_only(2);
        let demand = demand
            .map(|d| -> Result<DemandParams> {
                Ok(DemandParams {
                    drift: d.require("mu2")?,
                    vol: d.require("sigma2")?,
                    initial: d.require("d1")?,
                    capacity_per_unit: d.require("c_p")?,
                })
            })
            .transpose()?;
        let env = EnvParams {
            horizon: env.require("T")?,
            unit_output: env.require("u")?,
            op_cost: env.require("c_om")?,
            inv_cost: env.require("c_inv")?,
            price_drift: env.require("mu1")?,
            price_vol: env.require("sigma1")?,
            initial_price: env.require("p1")?,
            interest: env.or("i", base.interest)?,
            max_capacity: env.or("K", 1)?,
            pool_size: env.get("pool_size")?,
            demand,
        };
        env.validate()?;

        let d = TrainingConfig::default();
        let activation = match train.get::<String>("activation")? {
            None => d.activation,
            Some(tag) => Activation::from_tag(&tag)
                .ok_or_else(|| Error::config("activation", format!("unknown activation `{tag}`")))?,
        };
        let optimizer = match train.get::<String>("optimizer")? {
            None => d.optimizer,
            Some(tag) => OptimizerKind::from_tag(&tag)
                .ok_or_else(|| Error::config("optimizer", format!("unknown optimizer `{tag}`")))?,
        };
        let hidden = match train.values.get("hidden") {
            None => d.hidden.clone(),
            Some(raw) => parse_hidden(raw)?,
        };
        let train = TrainingConfig {
            episodes: train.or("episodes", d.episodes)?,
            gamma: train.or("gamma", d.gamma)?,
            learning_rate: train.or("learning_rate", d.learning_rate)?,
            tabular_alpha: train.or("alpha", d.tabular_alpha)?,
            eps_start: train.or("eps_start", d.eps_start)?,
            eps_end: train.or("eps_end", d.eps_end)?,
            eps_decay: train.or("eps_decay", d.eps_decay)?,
            batch_size: train.or("batch_size", d.batch_size)?,
            buffer_capacity: train.or("buffer_capacity", d.buffer_capacity)?,
            sync_period: train.or("sync_period", d.sync_period)?,
            min_fill: train.or("min_fill", d.min_fill)?,
            seed: train.or("seed", d.seed)?,
            hidden,
            activation,
            optimizer,
        };
        train.validate()?;

        let od = OracleConfig::default();
        let oracle = OracleConfig {
            lattice: LatticeSize {
                price_nodes: oracle.or("price_nodes", od.lattice.price_nodes)?,
                demand_nodes: oracle.or("demand_nodes", od.lattice.demand_nodes)?,
            },
            replications: oracle.or("replications", od.replications)?,
        };
        if oracle.lattice.price_nodes < 3 {
            return Err(Error::config("price_nodes", "need at least 3 nodes"));
        }
        if oracle.lattice.demand_nodes < 3 {
            return Err(Error::config("demand_nodes", "need at least 3 nodes"));
        }
        if oracle.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok(RunConfig { env, train, oracle })
    }

    /// Normalized rendering with every key spelled out; parsing it yields
    /// the same configuration.
    pub fn canonical_text(&self) -> String {
        let e = &self.env;
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "[env]");
        let _ = writeln!(s, "T = {}", e.horizon);
        let _ = writeln!(s, "K = {}", e.max_capacity);
        let _ = writeln!(s, "u = {}", e.unit_output);
        let _ = writeln!(s, "c_om = {}", e.op_cost);
        let _ = writeln!(s, "c_inv = {}", e.inv_cost);
        let _ = writeln!(s, "i = {}", e.interest);
        let _ = writeln!(s, "mu1 = {}", e.price_drift);
        let _ = writeln!(s, "sigma1 = {}", e.price_vol);
        let _ = writeln!(s, "p1 = {}", e.initial_price);
        if let Some(pool) = e.pool_size {
            let _ = writeln!(s, "pool_size = {pool}");
        }
        if let Some(d) = &e.demand {
            let _ = writeln!(s, "\n[demand]");
            let _ = writeln!(s, "mu2 = {}", d.drift);
            let _ = writeln!(s, "sigma2 = {}", d.vol);
            let _ = writeln!(s, "d1 = {}", d.initial);
            let _ = writeln!(s, "c_p = {}", d.capacity_per_unit);
        }
        let hidden: Vec<String> = t.hidden.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "episodes = {}", t.episodes);
        let _ = writeln!(s, "gamma = {}", t.gamma);
        let _ = writeln!(s, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "alpha = {}", t.tabular_alpha);
        let _ = writeln!(s, "eps_start = {}", t.eps_start);
        let _ = writeln!(s, "eps_end = {}", t.eps_end);
        let _ = writeln!(s, "eps_decay = {}", t.eps_decay);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "buffer_capacity = {}", t.buffer_capacity);
        let _ = writeln!(s, "sync_period = {}", t.sync_period);
        let _ = writeln!(s, "min_fill = {}", t.min_fill);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        let _ = writeln!(s, "activation = {}", t.activation.tag());
        let _ = writeln!(s, "optimizer = {}", t.optimizer.tag());
        let _ = writeln!(s, "\n[oracle]");
        let _ = writeln!(s, "price_nodes = {}", self.oracle.lattice.price_nodes);
        let _ = writeln!(s, "demand_nodes = {}", self.oracle.lattice.demand_nodes);
        let _ = writeln!(s, "replications = {}", self.oracle.replications);
        s
    }

    /// Hex SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn digest(&self) -> String {
        text_digest(&self.canonical_text())
    }
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
