//! Closed-form and Monte Carlo thresholds for the price-only problem.

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Minimum sample count accepted by [`stage2_condition_mc`].
pub const MIN_MC_SAMPLES: usize = 1000;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn require_price_only(params: &EnvParams) -> Result<()> {
    if params.has_demand() {
        return Err(Error::config("mode", "closed-form thresholds need the price-only variant"));
    }
    Ok(())
}

/// Price above which adding the single unit pays off in the last stage:
/// `(c_om + c_inv) / u`. For `T = 2` this is the whole optimal policy.
pub fn two_stage_threshold(params: &EnvParams) -> Result<f64> {
    require_price_only(params)?;
    if params.unit_output == 0.0 {
        return Err(Error::Degenerate("unit output u is zero".into()));
    }
    Ok((params.op_cost + params.inv_cost) / params.unit_output)
}

/// `E[X 1{X > k}]` for `X = x0 * exp(N(drift, vol))`.
pub fn lognormal_tail_expectation(x0: f64, drift: f64, vol: f64, k: f64) -> f64 {
    let d = ((x0 / k).ln() + drift + vol * vol) / vol;
    x0 * (drift + 0.5 * vol * vol).exp() * normal_cdf(d)
}

/// `P(X > k)` for `X = x0 * exp(N(drift, vol))`.
pub fn lognormal_tail_probability(x0: f64, drift: f64, vol: f64, k: f64) -> f64 {
    normal_cdf(((x0 / k).ln() + drift) / vol)
}

/// Both sides of the stage-2 investment condition of the three-stage
/// price-only problem, in stage-2 money:
///
/// * invest now: `u p2 - c_om - c_inv + (u E[p3|p2] - c_om) / (1+i)`
/// * wait: `E[(u p3 - c_om - c_inv) 1{p3 > k} | p2] / (1+i)`, `k = (c_om + c_inv)/u`
///
/// `shocks` are standard normal draws shared across calls so the difference
/// is monotone in `p2`.
pub fn stage2_sides_mc(params: &EnvParams, p2: f64, shocks: &[f64]) -> (f64, f64) {
    let (u, com, cinv) = (params.unit_output, params.op_cost, params.inv_cost);
    let k = (com + cinv) / u;
    let growth = 1.0 + params.interest;
    let (mut sum_p3, mut sum_wait) = (0.0, 0.0);
    for z in shocks {
        let p3 = p2 * (params.price_drift + params.price_vol * z).exp();
        sum_p3 += p3;
        if p3 > k {
            sum_wait += u * p3 - com - cinv;
        }
    }
    let n = shocks.len() as f64;
    let invest = u * p2 - com - cinv + (u * sum_p3 / n - com) / growth;
    let wait = sum_wait / n / growth;
    (invest, wait)
}

fn check_three_stage(params: &EnvParams) -> Result<()> {
    require_price_only(params)?;
    if params.horizon != 3 {
        return Err(Error::config("T", "the stage-2 condition is defined for T = 3"));
    }
    Ok(())
}

fn draw_shocks(n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::config("n", format!("need at least {MIN_MC_SAMPLES} samples, got {n}")));
    }
    Ok((0..n).map(|_| StandardNormal.sample(rng)).collect())
}

/// Whether investing at stage 2 beats waiting, by `n`-sample Monte Carlo.
pub fn stage2_condition_mc(params: &EnvParams, p2: f64, n: usize, rng: &mut Rng) -> Result<bool> {
    check_three_stage(params)?;
    let shocks = draw_shocks(n, rng)?;
    let (invest, wait) = stage2_sides_mc(params, p2, &shocks);
    Ok(invest > wait)
}

/// Stage-2 price at which investing starts to dominate, located by
/// bisection on common random numbers.
pub fn stage2_boundary_mc(params: &EnvParams, n: usize, rng: &mut Rng) -> Result<f64> {
    check_three_stage(params)?;
    let shocks = draw_shocks(n, rng)?;
    bisect_boundary(params, |p2| {
        let (invest, wait) = stage2_sides_mc(params, p2, &shocks);
        invest - wait
    })
}

/// The same boundary with the conditional expectations in closed form.
pub fn stage2_boundary_closed_form(params: &EnvParams) -> Result<f64> {
    check_three_stage(params)?;
    let (u, com, cinv) = (params.unit_output, params.op_cost, params.inv_cost);
    let (mu, sigma) = (params.price_drift, params.price_vol);
    let k = (com + cinv) / u;
    let growth = 1.0 + params.interest;
    bisect_boundary(params, |p2| {
        let mean_p3 = p2 * (mu + 0.5 * sigma * sigma).exp();
        let invest = u * p2 - com - cinv + (u * mean_p3 - com) / growth;
        let wait = (u * lognormal_tail_expectation(p2, mu, sigma, k)
            - (com + cinv) * lognormal_tail_probability(p2, mu, sigma, k))
            / growth;
        invest - wait
    })
}

fn bisect_boundary(params: &EnvParams, f: impl Fn(f64) -> f64) -> Result<f64> {
    if params.unit_output == 0.0 {
        return Err(Error::Degenerate("unit output u is zero".into()));
    }
    let k = (params.op_cost + params.inv_cost) / params.unit_output;
    let (mut lo, mut hi) = (k * 1e-6, k.max(1e-12) * 10.0);
    if f(lo) > 0.0 || f(hi) <= 0.0 {
        return Err(Error::Degenerate("no sign change of the stage-2 condition".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
