//! Master templates (one vector within eps of several enrolled templates),
//! k-near-collisions around a fixed template and disjointness of all balls.

use serde::Serialize;

use crate::combinatorics::{
    ball_volume_capped, binomial, intersection_next_shell, pow_complement, LogProb,
};
use crate::error::{domain, Result};
use crate::metric_bounds::{chain_product, weak_nc_conditions, ProbabilityBounds, SystemParams};

/// Bounds on the probability that one vector is within eps of all N templates:
/// V_eps^{N-1} and V_{2eps}^{N-1}.
pub fn full_master_template_bounds(params: &SystemParams) -> Result<ProbabilityBounds> {
    let m = params.users - 1;
    let v = params.volume().log_prob();
    let v2 = ball_volume_capped(params.n, 2 * params.eps)?.log_prob();
    Ok(ProbabilityBounds {
        lower: v.powu(m),
        upper: v2.powu(m),
        lower_clipped: false,
        upper_clipped: false,
        validity: vec![],
    })
}

/// Bounds on the expected number of k-subsets covered by a common eps-ball
/// that excludes every other template:
/// C(N,k) V_eps^{k-1} (1-V_{2eps})^{N-k} and C(N,k) V_{2eps}^{k-1} (1-V_eps)^{N-k}.
pub fn k_master_template_bounds(params: &SystemParams, k: u64) -> Result<ProbabilityBounds> {
    let users = params.users;
    if k < 2 || k > users {
        return domain(format!("k = {k} must lie in 2..=N (N = {users})"));
    }
    let choose = LogProb::from_biguint(&binomial(users, k)?);
    let v = params.volume().log_prob();
    let v2 = ball_volume_capped(params.n, 2 * params.eps)?.log_prob();
    let rest = (users - k) as f64;
    let lower = choose.mul(v.powu(k - 1)).mul(pow_complement(v2, rest));
    let upper = choose.mul(v2.powu(k - 1)).mul(pow_complement(v, rest));
    let (lower_clipped, upper_clipped) = (lower > LogProb::ONE, upper > LogProb::ONE);
    Ok(ProbabilityBounds {
        lower: lower.min(LogProb::ONE),
        upper: upper.min(LogProb::ONE),
        lower_clipped,
        upper_clipped,
        validity: vec![],
    })
}

/// Probability that exactly k of the other N-1 templates lie within eps of a fixed one.
pub fn k_near_collision_probability(params: &SystemParams, k: u64) -> Result<LogProb> {
    let others = params.users - 1;
    if k > others {
        return domain(format!("k = {k} exceeds N - 1 = {others}"));
    }
    let v = params.volume().log_prob();
    Ok(LogProb::from_biguint(&binomial(others, k)?)
        .mul(v.powu(k))
        .mul(pow_complement(v, (others - k) as f64)))
}

/// Bounds on the probability that the N eps-balls are pairwise disjoint
/// (all pairwise distances exceed 2 eps).
pub fn disjoint_balls_probability_bounds(params: &SystemParams) -> Result<ProbabilityBounds> {
    let r = (2 * params.eps).min(params.n);
    let v2 = ball_volume_capped(params.n, r)?.log_prob();
    let i2 = intersection_next_shell(params.n, r)?.log_prob();
    let lo = chain_product(params.users, v2, LogProb::ZERO)?;
    let up = chain_product(params.users, v2, i2)?;
    Ok(ProbabilityBounds {
        lower: lo.product,
        upper: up.product.min(LogProb::ONE),
        lower_clipped: lo.nonpositive,
        upper_clipped: up.above_one,
        validity: weak_nc_conditions(params, r),
    })
}

/// The four master-template quantities for one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MasterReport {
    pub params: SystemParams,
    pub full_master: ProbabilityBounds,
    pub disjoint_balls: ProbabilityBounds,
}

pub fn master_report(params: &SystemParams) -> Result<MasterReport> {
    Ok(MasterReport {
        params: *params,
        full_master: full_master_template_bounds(params)?,
        disjoint_balls: disjoint_balls_probability_bounds(params)?,
    })
}
