use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use super::{Encoder, Experience, PolicyArtifact, ReplayBuffer, TrainingConfig, TrainingMetrics};
use crate::env::{CapacityEnv, Decision, EnvParams, EpisodicEnv};
use crate::error::{Error, Result};
use crate::neuralnet::{BackpropScratch, Gradients, QNetwork, TargetNetwork};
use crate::qtable::{epsilon_greedy, epsilon_schedule};
use crate::rng;

const DIVERGENCE_LOSS: f64 = 1e12;
const MOVING_WINDOW: usize = 100;

/// Largest of the first `n_feasible` values.
pub fn masked_max(values: &[f64], n_feasible: usize) -> f64 {
    values[..n_feasible.min(values.len())].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Bootstrap target `g + gamma * max_feasible Q_target(s')`, or `g` when the
/// transition ended the episode.
pub fn td_target(
    exp: &Experience,
    target: &TargetNetwork,
    encoder: &Encoder,
    params: &EnvParams,
    gamma: f64,
) -> Result<f64> {
    if exp.terminal || gamma == 0.0 {
        return Ok(exp.reward);
    }
    let q = target.forward(&encoder.encode(&exp.next_state))?;
    Ok(exp.reward + gamma * masked_max(&q, exp.next_state.residual(params) + 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub epsilon: f64,
    pub ret: f64,
    pub moving_avg: f64,
    /// Mean minibatch loss over the episode; NaN before learning starts.
    pub loss_mean: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub transitions: u64,
    pub gradient_steps: u64,
    pub budget_violations: u64,
}

impl TrainingLog {
    pub const HEADER: &'static str = "episode,epsilon,return,moving_avg_100,loss_mean,wall_ms";

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", r.episode, r.epsilon, r.ret, r.moving_avg, r.loss_mean, r.wall_ms)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Fill the `wall_ms` log column; left at 0 otherwise so logs stay
    /// byte-identical across runs.
    pub record_wall_time: bool,
    /// Stored in the artifact; callers usually pass the run config digest.
    pub config_digest: String,
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub artifact: PolicyArtifact,
    pub log: TrainingLog,
}

pub fn train(params: &EnvParams, config: &TrainingConfig) -> Result<TrainingRun> {
    train_with(params, config, &TrainOptions::default())
}

/// Deep Q-learning with experience replay and a periodically synced target
/// network. Epsilon decays per episode; once the buffer holds `min_fill`
/// transitions every environment step is followed by one gradient step.
pub fn train_with(params: &EnvParams, config: &TrainingConfig, opts: &TrainOptions) -> Result<TrainingRun> {
    config.validate()?;
    let mut env = CapacityEnv::new(params.clone(), config.seed)?;
    let encoder = Encoder::for_params(params);

    let mut dims = vec![Encoder::INPUT_DIM];
    dims.extend(&config.hidden);
    dims.push(params.max_capacity + 1);
    let mut online = QNetwork::new(&dims, config.activation, &mut rng::stream(config.seed, rng::TAG_INIT))?;
    let mut target = TargetNetwork::new(&online);
    let mut optimizer = config.optimizer.build(config.learning_rate, &online);

    let mut explore_rng = rng::stream(config.seed, rng::TAG_EXPLORE);
    let mut replay_rng = rng::stream(config.seed, rng::TAG_REPLAY);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut grads = Gradients::zeros_like(&online);
    let mut scratch = BackpropScratch::default();
    let warm = config.min_fill.max(config.batch_size);

    let started = Instant::now();
    let mut log = TrainingLog::default();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(MOVING_WINDOW);
    let mut window_sum = 0.0;

    let artifact = |net: &QNetwork, metrics: TrainingMetrics| PolicyArtifact {
        network: net.clone(),
        encoder: encoder.clone(),
        env: params.clone(),
        config: config.clone(),
        config_digest: opts.config_digest.clone(),
        metrics,
    };

    for episode in 1..=config.episodes {
        let epsilon = epsilon_schedule(episode, config.eps_start, config.eps_end, config.eps_decay);
        let mut state = env.reset();
        let mut ret = 0.0;
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);
        loop {
            let q = online.forward(&encoder.encode(&state))?;
            let n = state.residual(params) + 1;
            let x = epsilon_greedy(&q[..n], epsilon, &mut explore_rng);
            let out = env.step_state(&state, Decision(x))?;
            log.transitions += 1;
            if out.next_state.installed > params.max_capacity {
                log.budget_violations += 1;
            }
            ret += out.reward;
            buffer.push(Experience {
                state,
                decision: x,
                reward: out.reward,
                next_state: out.next_state,
                terminal: out.terminal,
            });

            if buffer.len() >= warm {
                if let Some(batch) = buffer.sample_minibatch(config.batch_size, &mut replay_rng) {
                    grads.clear();
                    let mut loss = 0.0;
                    for exp in batch {
                        let y = td_target(exp, &target, &encoder, params, config.gamma)?;
                        loss += online.accumulate_gradient(
                            &encoder.encode(&exp.state),
                            exp.decision,
                            y,
                            &mut grads,
                            &mut scratch,
                        )?;
                    }
                    let loss = loss / config.batch_size as f64;
                    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                        let metrics = TrainingMetrics {
                            episodes: episode,
                            transitions: log.transitions,
                            gradient_steps: log.gradient_steps,
                            final_epsilon: epsilon,
                            final_moving_avg: f64::NAN,
                            budget_violations: log.budget_violations,
                        };
                        return Err(Error::Diverged { episode, loss, snapshot: Box::new(artifact(&online, metrics)) });
                    }
                    grads.scale(1.0 / config.batch_size as f64);
                    optimizer.step(&mut online, &grads)?;
                    log.gradient_steps += 1;
                    if log.gradient_steps % config.sync_period as u64 == 0 {
                        target.sync(&online);
                    }
                    loss_sum += loss;
                    loss_count += 1;
                }
            }

            state = out.next_state;
            if out.terminal {
                break;
            }
        }

        if window.len() == MOVING_WINDOW {
            window_sum -= window.pop_front().unwrap_or(0.0);
        }
        window.push_back(ret);
        window_sum += ret;
        log.rows.push(LogRow {
            episode,
            epsilon,
            ret,
            moving_avg: window_sum / window.len() as f64,
            loss_mean: if loss_count == 0 { f64::NAN } else { loss_sum / loss_count as f64 },
            wall_ms: if opts.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
        });
    }

    let last = log.rows.last();
    let metrics = TrainingMetrics {
        episodes: config.episodes,
        transitions: log.transitions,
        gradient_steps: log.gradient_steps,
        final_epsilon: last.map_or(config.eps_start, |r| r.epsilon),
        final_moving_avg: last.map_or(0.0, |r| r.moving_avg),
        budget_violations: log.budget_violations,
    };
    Ok(TrainingRun { artifact: artifact(&online, metrics), log })
}
