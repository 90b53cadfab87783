//! Monte Carlo policy evaluation.
//!
//! Replication `m` draws its scenario from the evaluation stream `m` of the
//! seed, independent of the policy under test, so two policies evaluated
//! with the same seed see identical price and demand paths.

use std::io::Write;

use rayon::prelude::*;

use crate::env::{CapacityEnv, EnvParams, EpisodicEnv};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub policy: String,
    pub replications: usize,
    pub mean: f64,
    /// Sample standard error; 0 when `replications == 1`.
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `decision_freq[t-1][x]`: share of replications choosing `x` at stage `t`.
    pub decision_freq: Vec<Vec<f64>>,
    /// Total profit of every replication, in replication order.
    pub profits: Vec<f64>,
}

struct Rollout {
    profit: f64,
    decisions: Vec<usize>,
}

pub fn rollout<P: Policy + ?Sized>(env: &mut CapacityEnv, policy: &P, policy_rng: &mut rng::Rng) -> Result<(f64, Vec<usize>)> {
    let mut state = env.reset();
    let mut profit = 0.0;
    let mut decisions = Vec::with_capacity(env.params().horizon);
    loop {
        let x = policy.decide(&state, env.params(), policy_rng);
        let out = env.step_state(&state, x)?;
        profit += out.reward;
        decisions.push(x.0);
        state = out.next_state;
        if out.terminal {
            return Ok((profit, decisions));
        }
    }
}

/// Simulates `policy` for `replications` independent scenarios.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    params: &EnvParams,
    replications: usize,
    seed: u64,
) -> Result<EvalReport> {
    if replications == 0 {
        return Err(Error::config("replications", "must be at least 1"));
    }
    let prototype = CapacityEnv::new(params.clone(), seed)?;
    let runs: Vec<Rollout> = (0..replications)
        .into_par_iter()
        .map_init(
            || prototype.clone(),
            |env, m| {
                env.set_rng(rng::replication_stream(seed, rng::TAG_EVAL, m as u64));
                let mut policy_rng = rng::replication_stream(seed, rng::TAG_POLICY, m as u64);
                rollout(env, policy, &mut policy_rng).map(|(profit, decisions)| Rollout { profit, decisions })
            },
        )
        .collect::<Result<_>>()?;

    let n = replications as f64;
    let profits: Vec<f64> = runs.iter().map(|r| r.profit).collect();
    let mean = profits.iter().sum::<f64>() / n;
    let std_error = if replications > 1 {
        let var = profits.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let mut decision_freq = vec![vec![0.0; params.max_capacity + 1]; params.horizon];
    for run in &runs {
        for (t, &x) in run.decisions.iter().enumerate() {
            decision_freq[t][x] += 1.0;
        }
    }
    decision_freq.iter_mut().flatten().for_each(|f| *f /= n);
    Ok(EvalReport {
        policy: policy.name(),
        replications,
        mean,
        std_error,
        ci_low: mean - 1.96 * std_error,
        ci_high: mean + 1.96 * std_error,
        decision_freq,
        profits,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "policy: {}\nreplications: {}\nmean_profit: {}\nstd_error: {}\nci95: [{}, {}]\n",
            self.policy, self.replications, self.mean, self.std_error, self.ci_low, self.ci_high
        );
        for (t, row) in self.decision_freq.iter().enumerate() {
            let freqs: Vec<String> = row.iter().map(|f| format!("{f:.6}")).collect();
            s.push_str(&format!("stage {} decision shares: {}\n", t + 1, freqs.join(" ")));
        }
        s
    }

    /// `stage,decision,frequency` rows preceded by a summary block.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "policy,replications,mean,std_error,ci_low,ci_high")?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.policy, self.replications, self.mean, self.std_error, self.ci_low, self.ci_high
        )?;
        writeln!(out, "stage,decision,frequency")?;
        for (t, row) in self.decision_freq.iter().enumerate() {
            for (x, f) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", t + 1, x, f)?;
            }
        }
        Ok(())
    }
}
