//! Reference solutions and diagnostics for the capacity-expansion problems.

pub mod closed_form;
pub mod compare;
pub mod dp;
pub mod evaluate;
pub mod lattice;
pub mod surface;

pub use closed_form::{
    stage2_boundary_closed_form, stage2_boundary_mc, stage2_condition_mc, two_stage_threshold,
};
pub use compare::{compare_policies, median_demand, Comparison, StageThresholds};
pub use dp::{backward_induction, DPSolution};
pub use evaluate::{evaluate_policy, rollout, EvalReport};
pub use lattice::{build_lattice, LatticeSize, LatticeSpec, ProcessLattice};
pub use surface::{extract_policy_map, price_threshold, threshold_band, GridSpec, PolicyMap};
