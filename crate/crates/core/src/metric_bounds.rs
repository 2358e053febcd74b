//! Bounds expressed in the metric-space parameters (n, N, eps): outsider and
//! insider median trial counts, weak and strong near-collision probabilities,
//! validity conditions and the S1/S2/S3 scores.

use serde::Serialize;

use crate::accuracy_bounds::{Bound, Rounding};
use crate::combinatorics::{
    ball_volume, binary_entropy, intersection_next_shell, ldexp, one_minus_pow, CompensatedSum,
    Dyadic, LogProb, LOG2_LN2,
};
use crate::error::{domain, precondition, Error, Result};

/// The triple (n, N, eps) plus optional insider knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    pub n: u32,
    #[serde(rename = "N")]
    pub users: u64,
    pub eps: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<u64>,
}

impl SystemParams {
    pub fn new(n: u32, users: u64, eps: u32) -> Result<SystemParams> {
        if n == 0 {
            return domain("dimension n must be at least 1");
        }
        if users == 0 {
            return domain("database size N must be at least 1");
        }
        if eps > n {
            return domain(format!("epsilon {eps} exceeds n = {n}"));
        }
        Ok(SystemParams {
            n,
            users,
            eps,
            alpha: None,
            ell: None,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> SystemParams {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_ell(mut self, ell: u64) -> SystemParams {
        self.ell = Some(ell);
        self
    }

    pub fn ratio(&self) -> f64 {
        self.eps as f64 / self.n as f64
    }

    pub fn volume(&self) -> Dyadic {
        ball_volume(self.n, self.eps).expect("validated parameters")
    }

    /// n (1 - h(eps/n)).
    pub fn entropy_gap(&self) -> f64 {
        self.n as f64 * (1.0 - binary_entropy(self.ratio()))
    }

    fn require_half(&self) -> Result<()> {
        if 2 * self.eps > self.n {
            return precondition(format!("eps/n = {}/{} exceeds 1/2", self.eps, self.n));
        }
        Ok(())
    }
}

/// Which family of formulas produces a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundForm {
    /// Exact ball volume and intersection measure.
    Exact,
    /// Entropy estimates with every constant kept; rigorous and looser than `Exact`.
    Entropy,
    /// The entropy expressions with constants dropped, as printed in asymptotic notation.
    Asymptotic,
}

impl std::str::FromStr for BoundForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<BoundForm> {
        match s {
            "exact" => Ok(BoundForm::Exact),
            "entropy" => Ok(BoundForm::Entropy),
            "asymptotic" => Ok(BoundForm::Asymptotic),
            _ => domain(format!(
                "unknown bound form {s:?} (exact | entropy | asymptotic)"
            )),
        }
    }
}

/// Named hypotheses under which a bound is proven.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// eps/n < 1/2
    EpsilonRatio,
    /// N < 2^{n(1-h(eps/n)) - 1}
    OutsiderDatabaseSize,
    /// N < 2^{n(1-h(eps/n))}, which forces N V_eps < 1
    NvBelowOne,
    /// N < N_max, which keeps the weak-collision lower bound positive
    BelowNmax,
    /// n(1 - 2h(eps/n)) > 2 log2 3 - eps
    LowerBoundBelowOne,
    /// the weak-collision lower bound is increasing in N
    LowerBoundIncreasing,
    /// the insider size condition holds for the alpha used
    InsiderSizeCondition,
    /// alpha < h(eps/n)
    AlphaBelowEntropy,
    /// V_eps - (N-2)/2 I^eps_{eps+1} > 0
    InsiderDenominatorPositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub condition: Condition,
    pub satisfied: bool,
}

fn check(condition: Condition, satisfied: bool) -> Check {
    Check {
        condition,
        satisfied,
    }
}

/// A trial-count bound with the form that produced it and its hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricBound {
    pub params: SystemParams,
    pub form: BoundForm,
    pub bound: Bound,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub validity: Vec<Check>,
}

impl MetricBound {
    pub fn all_valid(&self) -> bool {
        self.validity.iter().all(|c| c.satisfied)
    }
}

/// Probability bounds clipped to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityBounds {
    pub lower: LogProb,
    pub upper: LogProb,
    pub lower_clipped: bool,
    pub upper_clipped: bool,
    pub validity: Vec<Check>,
}

/// `prod_{j=1}^{N} (1 - (j-1) a + C(j-1, 2) b)` and its complement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainProduct {
    pub product: LogProb,
    pub one_minus: LogProb,
    /// some factor is <= 0, so the product is not a probability
    pub nonpositive: bool,
    /// the product exceeds 1
    pub above_one: bool,
}

pub fn chain_product(users: u64, a: LogProb, b: LogProb) -> Result<ChainProduct> {
    let pairs = users as f64 * (users as f64 - 1.0) / 2.0;
    let triples = pairs * (users as f64 - 2.0) / 3.0;
    if users <= 1 || (a.is_zero() && b.is_zero()) {
        return Ok(ChainProduct {
            product: LogProb::ONE,
            one_minus: LogProb::ZERO,
            nonpositive: false,
            above_one: false,
        });
    }
    if a.scale(users as f64).exponent() < -40 {
        // Every factor is within 2^-40 of 1: 1 - prod = sum x_j to relative 2^-40.
        let plus = a.scale(pairs);
        let minus = b.scale(triples.max(0.0));
        if minus >= plus {
            return Ok(ChainProduct {
                product: LogProb::ONE,
                one_minus: LogProb::ZERO,
                nonpositive: false,
                above_one: minus > plus,
            });
        }
        let s = plus.sub(minus);
        return Ok(ChainProduct {
            product: s.complement(),
            one_minus: s,
            nonpositive: false,
            above_one: false,
        });
    }
    let (af, bf) = (a.to_f64(), b.to_f64());
    let nonpositive = ChainProduct {
        product: LogProb::ZERO,
        one_minus: LogProb::ONE,
        nonpositive: true,
        above_one: false,
    };
    let s = if users <= SERIES_MIN_TERMS {
        match chain_log_direct(users, af, bf) {
            Some(s) => s,
            None => return Ok(nonpositive),
        }
    } else if has_nonpositive_factor(users, af, bf) {
        return Ok(nonpositive);
    } else {
        chain_log_blocks(users, af, bf)?
    };
    if s > 0.0 {
        let product = LogProb::from_log2(s / std::f64::consts::LN_2);
        return Ok(ChainProduct {
            product,
            one_minus: LogProb::ZERO,
            nonpositive: false,
            above_one: true,
        });
    }
    Ok(ChainProduct {
        product: LogProb::from_log2(s / std::f64::consts::LN_2),
        one_minus: LogProb::from_f64(-s.exp_m1()),
        nonpositive: false,
        above_one: false,
    })
}

/// Up to this many factors the product is walked term by term.
const SERIES_MIN_TERMS: u64 = 1 << 16;

/// Largest |y| on a block for which the truncated log series is used.
const SERIES_MAX_X: f64 = 1.0 / 256.0;
const SERIES_ORDER: usize = 8;

/// Blocks shorter than this are walked term by term.
const MIN_BLOCK: u64 = 16;

/// B_j with B_1 = +1/2, for sums starting at m = 1.
const BERNOULLI: [f64; 2 * SERIES_ORDER + 1] = [
    1.0,
    0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    5.0 / 66.0,
    0.0,
    -691.0 / 2730.0,
    0.0,
    7.0 / 6.0,
    0.0,
    -3617.0 / 510.0,
];

/// sum_{m=1}^{M} m^p / M^{p+1} by Faulhaber's formula.
fn normalized_power_sum(p: usize, m: f64) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for (j, b) in BERNOULLI.iter().enumerate().take(p + 1) {
        total += binom * b * m.powi(-(j as i32));
        binom = binom * (p + 1 - j) as f64 / (j + 1) as f64;
    }
    total / (p + 1) as f64
}

/// sum_{t=0}^{count-1} ln(1 - c1 t - c2 t^2) from ln(1 - y) = -sum_k y^k / k
/// and closed-form power sums. The caller keeps |y| <= SERIES_MAX_X.
fn log_series_poly(count: u64, c1: f64, c2: f64) -> f64 {
    if count <= 1 {
        return 0.0;
    }
    let m = (count - 1) as f64;
    let sums: Vec<f64> = (0..=2 * SERIES_ORDER)
        .map(|p| normalized_power_sum(p, m))
        .collect();
    let (u, w) = (c1 * m, c2 * m * m);
    let mut total = CompensatedSum::default();
    for k in 1..=SERIES_ORDER {
        let mut binom = 1.0;
        let mut tk = 0.0;
        for j in 0..=k {
            tk += binom * u.powi((k - j) as i32) * w.powi(j as i32) * sums[k + j];
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        total.add(-m * tk / k as f64);
    }
    total.value()
}

/// Whether 1 - m a + C(m, 2) b <= 0 for some integer m in [0, N-1], from the
/// roots of the quadratic.
fn has_nonpositive_factor(users: u64, a: f64, b: f64) -> bool {
    let last = (users - 1) as f64;
    let c1 = a + b / 2.0;
    if b == 0.0 {
        return last * c1 >= 1.0;
    }
    let disc = c1 * c1 - 2.0 * b;
    if disc < 0.0 {
        return false;
    }
    let root = disc.sqrt();
    let (lo, hi) = ((c1 - root) / b, (c1 + root) / b);
    lo.max(0.0).ceil() <= hi.min(last).floor()
}

/// Most blocks `chain_log_blocks` will sum.
const MAX_BLOCKS: u64 = 1 << 24;

/// sum_{m=0}^{N-1} ln q(m), q(m) = 1 - c1 m + h m^2 with c1 = a + b/2, h = b/2.
/// Each block starting at s factors q(s + t) = q(s) (1 - y_t) with y_t
/// quadratic in t and |y_t| small, then sums ln(1 - y_t) in closed form.
/// Requires every factor to be positive.
fn chain_log_blocks(users: u64, a: f64, b: f64) -> Result<f64> {
    let h = b / 2.0;
    let c1 = a + h;
    let mut total = CompensatedSum::default();
    let mut s = 0u64;
    let mut blocks = 0u64;
    while s < users {
        blocks += 1;
        if blocks > MAX_BLOCKS {
            return Err(Error::Budget {
                size: users.to_string(),
                budget: MAX_BLOCKS,
            });
        }
        let sf = s as f64;
        let x0 = c1 * sf - h * sf * sf;
        let q0 = 1.0 - x0;
        if q0 <= 0.0 {
            return Err(Error::Invariant(format!(
                "chain factor {s} is not positive"
            )));
        }
        let (d1, d2) = ((c1 - 2.0 * h * sf) / q0, -h / q0);
        let reach = if d2 == 0.0 {
            SERIES_MAX_X / d1.abs()
        } else {
            (-d1.abs() + (d1 * d1 + 4.0 * d2.abs() * SERIES_MAX_X).sqrt()) / (2.0 * d2.abs())
        };
        let len = if reach >= (users - s) as f64 {
            users - s
        } else {
            reach as u64 + 1
        };
        if len < MIN_BLOCK {
            let end = (s + MIN_BLOCK).min(users);
            for m in s..end {
                let mf = m as f64;
                total.add((-(c1 * mf - h * mf * mf)).ln_1p());
            }
            s = end;
        } else {
            total.add(len as f64 * (-x0).ln_1p());
            total.add(log_series_poly(len, d1, d2));
            s += len;
        }
    }
    Ok(total.value())
}

/// The same sum walked factor by factor; `None` when a factor is nonpositive.
fn chain_log_direct(users: u64, af: f64, bf: f64) -> Option<f64> {
    let mut sum = CompensatedSum::default();
    for j in 1..=users {
        let m = (j - 1) as f64;
        let x = m * af - m * (m - 1.0) / 2.0 * bf;
        if x >= 1.0 {
            return None;
        }
        sum.add((-x).ln_1p());
    }
    Some(sum.value())
}

/// 1 - (1 - V_eps)^{N-1}: some other user lies within eps of a fixed user.
pub fn strong_nc_probability(params: &SystemParams) -> LogProb {
    one_minus_pow(params.volume().log_prob(), (params.users - 1) as f64)
}

/// log2 N_max = log2(1 + 2^-eps / sqrt(8 eps (1 - eps/n)) r^c), r = (1-x)/x, c = ceil((eps+1)/2).
pub fn n_max_log2(n: u32, eps: u32) -> Option<f64> {
    if eps == 0 || 2 * eps >= n {
        return None;
    }
    let x = eps as f64 / n as f64;
    let c = (eps + 1).div_ceil(2) as f64;
    let t =
        -(eps as f64) - 0.5 * (8.0 * eps as f64 * (1.0 - x)).log2() + c * ((1.0 - x) / x).log2();
    Some(if t > 60.0 { t } else { (1.0 + t.exp2()).log2() })
}

pub(crate) fn weak_nc_conditions(params: &SystemParams, shift_eps: u32) -> Vec<Check> {
    let (n, eps) = (params.n, shift_eps);
    let ratio_ok = 2 * eps < n;
    let x = eps as f64 / n as f64;
    let h = binary_entropy(x);
    let log2n = (params.users as f64).log2();
    let nv = ratio_ok && log2n < n as f64 * (1.0 - h);
    let below_max = n_max_log2(n, eps).is_some_and(|m| log2n < m);
    let below_one = ratio_ok && n as f64 * (1.0 - 2.0 * h) > 2.0 * 3f64.log2() - eps as f64;
    vec![
        check(Condition::EpsilonRatio, ratio_ok),
        check(Condition::NvBelowOne, nv),
        check(Condition::BelowNmax, below_max),
        check(Condition::LowerBoundBelowOne, below_one),
        check(
            Condition::LowerBoundIncreasing,
            ratio_ok && below_max && below_one,
        ),
    ]
}

/// Probability that a uniform template hits the union of m eps-balls whose
/// centers are pairwise more than eps apart: [mV - C(m,2) I^eps_{eps+1}, mV].
pub fn union_hit_bounds(params: &SystemParams, m: u64) -> Result<(LogProb, LogProb)> {
    let v = params.volume().log_prob();
    let i = intersection_next_shell(params.n, params.eps)?.log_prob();
    let hi = v.scale(m as f64);
    let pairs = m as f64 * (m as f64 - 1.0) / 2.0;
    Ok((hi.sub(i.scale(pairs.max(0.0))), hi))
}

/// Bounds on the probability that two enrolled templates lie within eps.
pub fn weak_nc_probability_bounds(params: &SystemParams) -> Result<ProbabilityBounds> {
    let v = params.volume().log_prob();
    let i = intersection_next_shell(params.n, params.eps)?.log_prob();
    let up = chain_product(params.users, v, LogProb::ZERO)?;
    let lo = chain_product(params.users, v, i)?;
    Ok(ProbabilityBounds {
        lower: if lo.above_one {
            LogProb::ZERO
        } else {
            lo.one_minus
        },
        upper: up.one_minus,
        lower_clipped: lo.above_one || lo.nonpositive,
        upper_clipped: up.nonpositive,
        validity: weak_nc_conditions(params, params.eps),
    })
}

/// Median outsider trials (rounded down in tables).
pub fn outsider_bounds(params: &SystemParams, form: BoundForm) -> Result<MetricBound> {
    params.require_half()?;
    let log2n = (params.users as f64).log2();
    let gap = params.entropy_gap();
    let (eps, x) = (params.eps as f64, params.ratio());
    let (lower, upper) = match form {
        BoundForm::Exact => {
            let lv = params.volume().log2();
            (LOG2_LN2 - 1.0 - log2n - lv, LOG2_LN2 - log2n - lv)
        }
        BoundForm::Entropy => {
            let slack = if params.eps == 0 {
                0.0
            } else {
                0.5 * (8.0 * eps * (1.0 - x)).log2()
            };
            (LOG2_LN2 - 1.0 - log2n + gap, LOG2_LN2 - log2n + gap + slack)
        }
        BoundForm::Asymptotic => {
            let slack = if params.eps == 0 {
                0.0
            } else {
                0.5 * (eps * (1.0 - x)).log2()
            };
            (gap - log2n, gap + slack - log2n)
        }
    };
    Ok(MetricBound {
        params: *params,
        form,
        bound: Bound::new(lower, upper, Rounding::Floor),
        alpha: None,
        validity: vec![
            check(Condition::EpsilonRatio, 2 * params.eps < params.n),
            check(Condition::OutsiderDatabaseSize, log2n < gap - 1.0),
        ],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistinctBound {
    #[serde(flatten)]
    pub bound: MetricBound,
    /// -log2(1 + 6 (N-1) / 2^{n+1})
    pub lower_correction_log2: f64,
    /// -log2(1 + (N-1) / 2^{n+1})
    pub upper_correction_log2: f64,
}

/// Outsider bounds when the database holds distinct templates.
pub fn outsider_bounds_distinct(params: &SystemParams, form: BoundForm) -> Result<DistinctBound> {
    let mut b = outsider_bounds(params, form)?;
    let x = ldexp((params.users - 1) as f64, -(params.n as i64 + 1));
    let dl = -(6.0 * x).ln_1p() / std::f64::consts::LN_2;
    let du = -x.ln_1p() / std::f64::consts::LN_2;
    b.bound = b.bound.shifted(dl, du);
    Ok(DistinctBound {
        bound: b,
        lower_correction_log2: dl,
        upper_correction_log2: du,
    })
}

/// Smallest alpha satisfying the insider size condition, if any alpha does.
pub fn insider_alpha_min(n: u32, users: u64, eps: u32) -> Option<f64> {
    if eps == 0 || 2 * eps >= n || users < 2 {
        return None;
    }
    let x = eps as f64 / n as f64;
    let c = (eps + 1).div_ceil(2) as f64;
    let head = 1.0 / (8.0 * eps as f64 * (1.0 - x)).sqrt();
    let tail = if users == 2 {
        0.0
    } else {
        ((users - 2) as f64).log2() + eps as f64 + c * (x / (1.0 - x)).log2()
    };
    let tail = if users == 2 { 0.0 } else { tail.exp2() };
    let r = head - tail;
    (r > 0.0).then(|| -r.log2() / n as f64)
}

/// Direct evaluation of the insider size condition for a given alpha.
pub fn insider_size_condition(n: u32, users: u64, eps: u32, alpha: f64) -> bool {
    if eps == 0 || 2 * eps >= n {
        return false;
    }
    let x = eps as f64 / n as f64;
    let c = (eps + 1).div_ceil(2) as f64;
    let inner = 1.0 / (8.0 * eps as f64 * (1.0 - x)).sqrt() - (-(n as f64) * alpha).exp2();
    if inner <= 0.0 {
        return users <= 2 && inner == 0.0;
    }
    let rhs_log2 = -(eps as f64) + c * ((1.0 - x) / x).log2() + inner.log2();
    users <= 2 || ((users - 2) as f64).log2() <= rhs_log2
}

/// Median insider rounds with all N users attacking (rounded to nearest in tables).
pub fn insider_bounds(params: &SystemParams, form: BoundForm) -> Result<MetricBound> {
    insider_bounds_subset(params, params.users, form)
}

/// Median insider rounds with `ell` of the N users attacking.
pub fn insider_bounds_subset(
    params: &SystemParams,
    ell: u64,
    form: BoundForm,
) -> Result<MetricBound> {
    params.require_half()?;
    let users = params.users;
    if users < 2 {
        return precondition("an insider attack needs at least two users");
    }
    if ell == 0 || ell > users {
        return domain(format!("ell = {ell} must lie in 1..=N (N = {users})"));
    }
    let (log2n, log2l, log2n1) = (
        (users as f64).log2(),
        (ell as f64).log2(),
        ((users - 1) as f64).log2(),
    );
    let gap = params.entropy_gap();
    let h = binary_entropy(params.ratio());
    let mut validity = vec![check(Condition::EpsilonRatio, 2 * params.eps < params.n)];
    let (lower, upper, alpha) = match form {
        BoundForm::Exact => {
            let v = params.volume();
            let i = intersection_next_shell(params.n, params.eps)?;
            // 2^{n+1} (V - (N-2)/2 I) = 2 |B| - (N-2) |B ∩ B'|
            let pos = &v.num << 1u32;
            let neg = &i.num * (users - 2);
            let ok = pos > neg;
            validity.push(check(Condition::InsiderDenominatorPositive, ok));
            let upper = if ok {
                let denom = LogProb::from_ratio(&(pos - neg), params.n as u64 + 1).log2();
                LOG2_LN2 - log2l - log2n1 - denom
            } else {
                f64::INFINITY
            };
            (LOG2_LN2 - v.log2() - log2l - log2n - log2n1, upper, None)
        }
        BoundForm::Entropy | BoundForm::Asymptotic => {
            let alpha = match (params.alpha, form) {
                (Some(a), _) => Some(a),
                (None, BoundForm::Asymptotic) => Some(0.0),
                (None, _) => insider_alpha_min(params.n, users, params.eps).filter(|&a| a < h),
            };
            let cond =
                alpha.is_some_and(|a| insider_size_condition(params.n, users, params.eps, a));
            validity.push(check(Condition::InsiderSizeCondition, cond));
            validity.push(check(
                Condition::AlphaBelowEntropy,
                alpha.is_some_and(|a| a < h),
            ));
            let (lower, upper) = if form == BoundForm::Entropy {
                let upper = alpha.map_or(f64::INFINITY, |a| {
                    LOG2_LN2 + gap + params.n as f64 * a - log2l - log2n1
                });
                (LOG2_LN2 + gap - log2l - log2n - log2n1, upper)
            } else {
                let a = alpha.unwrap_or(0.0);
                (
                    gap - 2.0 * log2n - log2l,
                    gap + params.n as f64 * a - log2n - log2l,
                )
            };
            (lower, upper, alpha)
        }
    };
    Ok(MetricBound {
        params: params.with_ell(ell),
        form,
        bound: Bound::new(lower, upper, Rounding::Nearest),
        alpha,
        validity,
    })
}

/// Scores against a 2^128 reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityScores {
    pub params: SystemParams,
    /// 1 - upper bound on the weak-collision probability
    pub s1: f64,
    /// asymptotic outsider lower bound (clipped) minus 128
    pub s2: f64,
    /// asymptotic insider lower bound (clipped) minus 128
    pub s3: Option<f64>,
    /// table convention: floor before subtracting
    pub s2_table: i64,
    /// table convention: round to nearest before subtracting
    pub s3_table: Option<i64>,
    pub validity: Vec<Check>,
}

pub fn s1_score(params: &SystemParams) -> Result<f64> {
    let up = chain_product(params.users, params.volume().log_prob(), LogProb::ZERO)?;
    Ok(if up.nonpositive {
        0.0
    } else {
        1.0 - up.one_minus.to_f64()
    })
}

pub fn security_scores(params: &SystemParams) -> Result<SecurityScores> {
    let s1 = s1_score(params)?;
    let out = outsider_bounds(params, BoundForm::Asymptotic)?;
    let (ol, _) = out.bound.clipped();
    let mut validity = out.validity.clone();
    let (s3, s3_table) = if params.users >= 2 {
        let ins = insider_bounds(params, BoundForm::Asymptotic)?;
        let (il, _) = ins.bound.clipped();
        validity.extend(
            ins.validity
                .iter()
                .copied()
                .filter(|c| c.condition != Condition::EpsilonRatio),
        );
        (Some(il - 128.0), Some(il.round() as i64 - 128))
    } else {
        (None, None)
    };
    validity.extend(
        weak_nc_conditions(params, params.eps)
            .into_iter()
            .filter(|c| c.condition != Condition::EpsilonRatio),
    );
    Ok(SecurityScores {
        params: *params,
        s1,
        s2: ol - 128.0,
        s3,
        s2_table: ol.floor() as i64 - 128,
        s3_table,
        validity,
    })
}

/// Which parameter is free in a robustness search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "free", rename_all = "kebab-case")]
pub enum RobustnessQuery {
    MaxEpsilon { n: u32, users: u64 },
    MinDimension { eps: u32, users: u64 },
    MaxUsers { n: u32, eps: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub query: RobustnessQuery,
    /// `None` when no value in the searched range keeps S1 >= 1/2
    pub value: Option<u64>,
    pub s1_at_value: Option<f64>,
    /// S1 one step past the threshold
    pub s1_beyond: Option<f64>,
}

/// Largest dimension searched by `MinDimension`.
pub const MAX_SEARCH_DIMENSION: u32 = 1 << 14;

/// Upper end of the doubling search over N.
pub const MAX_SEARCH_USERS: u64 = 1 << 62;

/// Binary search for the boundary of S1 >= 1/2 along one parameter.
pub fn robustness_thresholds(query: RobustnessQuery) -> Result<Threshold> {
    let robust = |s: f64| s >= 0.5;
    match query {
        RobustnessQuery::MaxEpsilon { n, users } => {
            let s1 = |e: u64| s1_score(&SystemParams::new(n, users, e as u32)?);
            let v = last_true(0, n as u64, |e| Ok(robust(s1(e)?)))?;
            finish(query, v, s1, |v| (v < n as u64).then_some(v + 1))
        }
        RobustnessQuery::MinDimension { eps, users } => {
            let s1 = |d: u64| s1_score(&SystemParams::new(d as u32, users, eps)?);
            let lo = eps.max(1) as u64;
            let v = last_true(lo, MAX_SEARCH_DIMENSION as u64, |d| Ok(!robust(s1(d)?)))?;
            let v = match v {
                None => Some(lo),
                Some(d) if d == MAX_SEARCH_DIMENSION as u64 => None,
                Some(d) => Some(d + 1),
            };
            finish(query, v, s1, |v| (v > lo).then(|| v - 1))
        }
        RobustnessQuery::MaxUsers { n, eps } => {
            let s1 = |u: u64| s1_score(&SystemParams::new(n, u, eps)?);
            let mut hi = 2u64;
            while robust(s1(hi)?) {
                if hi >= MAX_SEARCH_USERS {
                    return Err(Error::Budget {
                        size: format!(">= {hi}"),
                        budget: MAX_SEARCH_USERS,
                    });
                }
                hi *= 2;
            }
            let v = last_true(1, hi, |u| Ok(robust(s1(u)?)))?;
            finish(query, v, s1, |v| Some(v + 1))
        }
    }
}

fn finish(
    query: RobustnessQuery,
    value: Option<u64>,
    s1: impl Fn(u64) -> Result<f64>,
    beyond: impl Fn(u64) -> Option<u64>,
) -> Result<Threshold> {
    let s1_at_value = value.map(&s1).transpose()?;
    let s1_beyond = value.and_then(beyond).map(&s1).transpose()?;
    Ok(Threshold {
        query,
        value,
        s1_at_value,
        s1_beyond,
    })
}

/// Largest x in [lo, hi] with `pred(x)`, for a predicate that is true then false.
fn last_true(lo: u64, hi: u64, pred: impl Fn(u64) -> Result<bool>) -> Result<Option<u64>> {
    if !pred(lo)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    if pred(b)? {
        return Ok(Some(b));
    }
    while b - a > 1 {
        let m = a + (b - a) / 2;
        if pred(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32, users: u64, eps: u32) -> SystemParams {
        SystemParams::new(n, users, eps).unwrap()
    }

    #[test]
    fn chain_blocks_match_direct_walk() {
        for (users, a, b) in [
            (1u64 << 17, 1e-9, 0.0),
            (1 << 18, 2e-9, 1e-14),
            (300_000, 1e-8, 6e-14),
            (1 << 20, 3.0e-9, 5.9e-15),
            (1 << 19, 1e-12, 0.0),
            (1 << 17, 1e-6, 0.0),
            (1 << 18, 1e-4, 1e-8),
            (1 << 18, 1e-3, 1e-6),
            (100_000, 1e-5, 2e-10),
        ] {
            let blocks = chain_log_blocks(users, a, b).unwrap();
            let direct = chain_log_direct(users, a, b).unwrap();
            assert!(
                ((blocks - direct) / direct).abs() < 1e-11,
                "{users} {a} {b}: {blocks} vs {direct}"
            );
        }
    }

    #[test]
    fn chain_product_past_term_budget() {
        // n = 64, eps = 2, N = 1e9: N V is far above 2^-40 yet every factor is near 1.
        let c = chain_product(
            1_000_000_000,
            ball_volume(64, 2).unwrap().log_prob(),
            LogProb::ZERO,
        )
        .unwrap();
        let pairs = 1e9 * (1e9 - 1.0) / 2.0 * ball_volume(64, 2).unwrap().to_f64();
        assert!((c.one_minus.to_f64() / (-(-pairs).exp_m1()) - 1.0).abs() < 1e-6);
        let c = chain_product(1 << 29, LogProb::from_log2(-13.0), LogProb::ZERO).unwrap();
        assert!(c.nonpositive);
        for (users, a, b) in [
            (5000u64, 1e-3, 1e-7),
            (5000, 1e-3, 3e-7),
            (100, 0.05, 0.004),
            (3000, 1e-3, 2.1e-7),
        ] {
            assert_eq!(
                has_nonpositive_factor(users, a, b),
                chain_log_direct(users, a, b).is_none(),
                "{users} {a} {b}"
            );
        }
    }

    #[test]
    fn strong_nc_examples() {
        assert!(strong_nc_probability(&p(20, 1, 3)).is_zero());
        let v = strong_nc_probability(&p(20, 2, 3)).to_f64();
        assert_eq!(v, 1351.0 / 1048576.0);
    }

    #[test]
    fn outsider_table_cells() {
        let b = outsider_bounds(&p(128, 10_000, 12), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (57.0, 58.0));
        let b = outsider_bounds(&p(256, 100_000_000, 51), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (45.0, 47.0));
        let b = outsider_bounds(&p(128, 10_000, 51), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (0.0, 0.0));
        assert!(b.bound.is_clipped());
        assert!(outsider_bounds(&p(128, 10, 70), BoundForm::Exact).is_err());
    }

    #[test]
    fn insider_table_cells() {
        let b = insider_bounds(&p(128, 10_000, 12), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (31.0, 44.0));
        let b = insider_bounds(&p(256, 1_000_000, 25), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (78.0, 98.0));
        let b = insider_bounds(&p(128, 100_000_000, 25), BoundForm::Asymptotic).unwrap();
        assert_eq!(b.bound.rounded(), (0.0, 0.0));
    }

    #[test]
    fn insider_subset_bookkeeping() {
        let q = p(128, 10_000, 12);
        let full = insider_bounds(&q, BoundForm::Exact).unwrap();
        let same = insider_bounds_subset(&q, 10_000, BoundForm::Exact).unwrap();
        assert_eq!(full.bound, same.bound);
        let one = insider_bounds_subset(&q, 1, BoundForm::Exact).unwrap();
        assert!((one.bound.lower_log2 - full.bound.lower_log2 - 10_000f64.log2()).abs() < 1e-9);
        let full = insider_bounds(&q, BoundForm::Asymptotic).unwrap();
        let ten = insider_bounds_subset(&q, 10, BoundForm::Asymptotic).unwrap();
        assert!((full.bound.lower_log2 - 30.682_208).abs() < 1e-5);
        assert!((ten.bound.lower_log2 - full.bound.lower_log2 - 1000f64.log2()).abs() < 1e-9);
        assert!((ten.bound.lower_log2 - 40.647_993).abs() < 1e-5);
    }

    #[test]
    fn distinct_corrections() {
        let q = p(128, 1, 12);
        let a = outsider_bounds(&q, BoundForm::Exact).unwrap();
        let b = outsider_bounds_distinct(&q, BoundForm::Exact).unwrap();
        assert_eq!(a.bound, b.bound.bound);
        let b = outsider_bounds_distinct(&p(128, 10_000, 12), BoundForm::Exact).unwrap();
        assert!(b.lower_correction_log2.abs() < 1e-30 && b.lower_correction_log2 < 0.0);
        let q = p(20, 1 << 15, 2);
        let a = outsider_bounds(&q, BoundForm::Exact).unwrap();
        let b = outsider_bounds_distinct(&q, BoundForm::Exact).unwrap();
        assert!(b.bound.bound.lower_log2 < a.bound.lower_log2 - 0.1);
    }

    #[test]
    fn weak_nc_small_cases() {
        let b = weak_nc_probability_bounds(&p(20, 1, 3)).unwrap();
        assert!(b.lower.is_zero() && b.upper.is_zero());
        let b = weak_nc_probability_bounds(&p(20, 2, 3)).unwrap();
        let v = 1351.0 / 1048576.0;
        assert!((b.lower.to_f64() - v).abs() < 1e-18 && (b.upper.to_f64() - v).abs() < 1e-18);
    }

    #[test]
    fn scores() {
        let s = security_scores(&p(64, 50, 15)).unwrap();
        assert!((s.s1 - 0.9852).abs() < 5e-4);
        let s = security_scores(&p(64, 50, 19)).unwrap();
        assert!((s.s1 - 0.3792).abs() < 5e-4);
        let s = security_scores(&p(128, 10_000, 12)).unwrap();
        assert_eq!((s.s2_table, s.s3_table), (-71, Some(-97)));
    }

    #[test]
    fn robustness() {
        let t = robustness_thresholds(RobustnessQuery::MaxEpsilon { n: 128, users: 100 }).unwrap();
        assert_eq!(t.value, Some(43));
        let t = robustness_thresholds(RobustnessQuery::MinDimension {
            eps: 12,
            users: 100,
        })
        .unwrap();
        assert_eq!(t.value, Some(51));
        let t = robustness_thresholds(RobustnessQuery::MaxUsers { n: 64, eps: 18 }).unwrap();
        assert_eq!(t.value, Some(67));
        let t = robustness_thresholds(RobustnessQuery::MaxEpsilon { n: 8, users: 1000 }).unwrap();
        assert_eq!(t.value, None);
    }

    #[test]
    fn alpha_closed_form_matches_bisection() {
        for &(n, users, eps) in &[
            (128u32, 3u64, 12u32),
            (256, 10, 20),
            (512, 2, 5),
            (1024, 100, 40),
        ] {
            let h = binary_entropy(eps as f64 / n as f64);
            let Some(a) = insider_alpha_min(n, users, eps) else {
                continue;
            };
            let (mut lo, mut hi) = (0.0f64, h.max(a) + 1.0);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if insider_size_condition(n, users, eps, m) {
                    hi = m;
                } else {
                    lo = m;
                }
            }
            assert!((hi - a).abs() < 1e-9, "{n} {users} {eps}: {hi} vs {a}");
        }
    }
}
