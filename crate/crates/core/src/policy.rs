//! Decision rules that can be rolled out in an environment.

use rand::Rng as _;

use crate::env::{Decision, EnvParams, EnvState};
use crate::rng::Rng;

/// A non-anticipative decision rule: the decision depends only on the
/// current state (plus, for randomized rules, the supplied generator).
pub trait Policy: Sync {
    fn decide(&self, state: &EnvState, params: &EnvParams, rng: &mut Rng) -> Decision;

    fn name(&self) -> String;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, state: &EnvState, params: &EnvParams, rng: &mut Rng) -> Decision {
        (**self).decide(state, params, rng)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NeverInvest;

impl Policy for NeverInvest {
    fn decide(&self, _: &EnvState, _: &EnvParams, _: &mut Rng) -> Decision {
        Decision(0)
    }

    fn name(&self) -> String {
        "never-invest".into()
    }
}

/// Builds the whole budget at the first stage.
#[derive(Clone, Copy, Debug, Default)]
pub struct InvestAtFirst;

impl Policy for InvestAtFirst {
    fn decide(&self, state: &EnvState, params: &EnvParams, _: &mut Rng) -> Decision {
        if state.t == 1 {
            Decision(state.residual(params))
        } else {
            Decision(0)
        }
    }

    fn name(&self) -> String {
        "invest-at-first".into()
    }
}

/// Uniform draw over the feasible decisions.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomFeasible;

impl Policy for RandomFeasible {
    fn decide(&self, state: &EnvState, params: &EnvParams, rng: &mut Rng) -> Decision {
        Decision(rng.random_range(0..=state.residual(params)))
    }

    fn name(&self) -> String {
        "random-feasible".into()
    }
}

/// Wraps a plain function of the state.
pub struct FnPolicy<F> {
    name: String,
    f: F,
}

impl<F: Fn(&EnvState) -> Decision + Sync> FnPolicy<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnPolicy { name: name.into(), f }
    }
}

impl<F: Fn(&EnvState) -> Decision + Sync> Policy for FnPolicy<F> {
    fn decide(&self, state: &EnvState, _: &EnvParams, _: &mut Rng) -> Decision {
        (self.f)(state)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
