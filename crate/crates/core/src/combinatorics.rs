//! Exact and log-domain primitives over the Hamming space Z_2^n.
//!
//! Ball volumes and intersection measures are exact dyadic rationals
//! (a big-integer count over 2^n). Everything else that would overflow or
//! underflow an `f64` travels as a [`LogProb`].

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{domain, precondition, Result};

/// log2(ln 2).
pub const LOG2_LN2: f64 = -0.528_766_372_944_897_7;

/// `2^e` for `e` in the normal exponent range, built bit-exactly.
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// `m * 2^e` without intermediate overflow or powi rounding.
pub fn ldexp(m: f64, e: i64) -> f64 {
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if e > 2100 {
        return m * f64::INFINITY;
    }
    if e < -2200 {
        return 0.0;
    }
    let mut x = m;
    let mut e = e;
    while e > 1023 {
        x *= pow2(1023);
        e -= 1023;
    }
    while e < -1022 {
        x *= pow2(-1022);
        e += 1022;
    }
    x * pow2(e)
}

/// Splits a positive finite `x` into `(m, e)` with `x = m * 2^e`, `1 <= m < 2`.
fn frexp(x: f64) -> (f64, i64) {
    debug_assert!(x > 0.0 && x.is_finite());
    let (x, bias) = if x < f64::MIN_POSITIVE {
        (x * pow2(64), -64)
    } else {
        (x, 0)
    };
    let bits = x.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (m, e + bias)
}

/// A nonnegative quantity stored as `mant * 2^exp` with `1 <= mant < 2`.
///
/// The integer exponent keeps full `f64` relative precision for values far
/// outside the `f64` range (2^-10^9 is as precise as 0.5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogProb {
    exp: i64,
    mant: f64,
}

#[allow(clippy::should_implement_trait)]
impl LogProb {
    pub const ZERO: LogProb = LogProb { exp: 0, mant: 0.0 };
    pub const ONE: LogProb = LogProb { exp: 0, mant: 1.0 };

    fn normalized(mant: f64, exp: i64) -> LogProb {
        if mant == 0.0 {
            return LogProb::ZERO;
        }
        let (m, e) = frexp(mant);
        LogProb {
            exp: exp + e,
            mant: m,
        }
    }

    /// Panics on negative or non-finite input.
    pub fn from_f64(x: f64) -> LogProb {
        assert!(x >= 0.0 && x.is_finite(), "LogProb::from_f64({x})");
        LogProb::normalized(x, 0)
    }

    /// `2^l`; `-inf` maps to zero.
    pub fn from_log2(l: f64) -> LogProb {
        if l == f64::NEG_INFINITY {
            return LogProb::ZERO;
        }
        assert!(l.is_finite(), "LogProb::from_log2({l})");
        let e = l.floor();
        LogProb::normalized((l - e).exp2(), e as i64)
    }

    /// `num / 2^den_log2`, correctly rounded to 53 bits.
    pub fn from_ratio(num: &BigUint, den_log2: u64) -> LogProb {
        if num.is_zero() {
            return LogProb::ZERO;
        }
        let bits = num.bits();
        let shift = bits.saturating_sub(64);
        let top = (num >> shift).to_u64().expect("64-bit window");
        // Sticky bit so the u64 -> f64 conversion rounds as the full value would.
        let sticky = shift > 0 && (num.trailing_zeros().unwrap_or(0) < shift);
        let top = if sticky { top | 1 } else { top };
        LogProb::normalized(top as f64, shift as i64 - den_log2 as i64)
    }

    pub fn from_biguint(x: &BigUint) -> LogProb {
        LogProb::from_ratio(x, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn mantissa(&self) -> f64 {
        self.mant
    }

    pub fn log2(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.exp as f64 + self.mant.log2()
        }
    }

    pub fn ln(&self) -> f64 {
        self.log2() * std::f64::consts::LN_2
    }

    pub fn to_f64(&self) -> f64 {
        ldexp(self.mant, self.exp)
    }

    pub fn mul(self, o: LogProb) -> LogProb {
        if self.is_zero() || o.is_zero() {
            return LogProb::ZERO;
        }
        LogProb::normalized(self.mant * o.mant, self.exp + o.exp)
    }

    pub fn div(self, o: LogProb) -> LogProb {
        assert!(!o.is_zero(), "LogProb division by zero");
        if self.is_zero() {
            return LogProb::ZERO;
        }
        LogProb::normalized(self.mant / o.mant, self.exp - o.exp)
    }

    pub fn scale(self, k: f64) -> LogProb {
        self.mul(LogProb::from_f64(k))
    }

    pub fn add(self, o: LogProb) -> LogProb {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp {
            (self, o)
        } else {
            (o, self)
        };
        let gap = hi.exp - lo.exp;
        if gap > 64 {
            return hi;
        }
        LogProb::normalized(hi.mant + ldexp(lo.mant, -gap), hi.exp)
    }

    /// `self - o`, saturating at zero.
    pub fn sub(self, o: LogProb) -> LogProb {
        if o.is_zero() {
            return self;
        }
        if self.partial_cmp(&o) != Some(Ordering::Greater) {
            return LogProb::ZERO;
        }
        let gap = self.exp - o.exp;
        if gap > 64 {
            return self;
        }
        LogProb::normalized(self.mant - ldexp(o.mant, -gap), self.exp)
    }

    /// `self^k` for an integer power, exponent tracked exactly.
    pub fn powu(self, k: u64) -> LogProb {
        if k == 0 {
            return LogProb::ONE;
        }
        if self.is_zero() {
            return LogProb::ZERO;
        }
        let frac = self.mant.log2() * k as f64;
        let fe = frac.floor();
        LogProb::normalized((frac - fe).exp2(), self.exp * k as i64 + fe as i64)
    }

    /// `1 - self`, for `self <= 1`.
    pub fn complement(self) -> LogProb {
        if self.exp < -60 || self.is_zero() {
            return LogProb::ONE.sub(self);
        }
        LogProb::from_f64((1.0 - self.to_f64()).max(0.0))
    }

    pub fn max(self, o: LogProb) -> LogProb {
        if self >= o {
            self
        } else {
            o
        }
    }

    pub fn min(self, o: LogProb) -> LogProb {
        if self <= o {
            self
        } else {
            o
        }
    }
}

impl PartialOrd for LogProb {
    fn partial_cmp(&self, o: &LogProb) -> Option<Ordering> {
        match (self.is_zero(), o.is_zero()) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            _ => match self.exp.cmp(&o.exp) {
                Ordering::Equal => self.mant.partial_cmp(&o.mant),
                c => Some(c),
            },
        }
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else {
            write!(f, "2^{:.6}", self.log2())
        }
    }
}

impl Serialize for LogProb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LogProb", 2)?;
        let l = self.log2();
        st.serialize_field("log2", &if l.is_finite() { Some(l) } else { None })?;
        st.serialize_field("value", &self.to_f64())?;
        st.end()
    }
}

/// `1 - (1 - x)^m` for `0 <= x <= 1`, `m >= 0`.
pub fn one_minus_pow(x: LogProb, m: f64) -> LogProb {
    if m == 0.0 || x.is_zero() {
        return LogProb::ZERO;
    }
    if x >= LogProb::ONE {
        return LogProb::ONE;
    }
    let mx = x.scale(m);
    if x.exponent() < -900 || mx.exponent() < -60 {
        // 1 - e^{-t} with t = m * x (1 + O(x)); second-order term is negligible here.
        let t = mx;
        return t.sub(t.mul(t).scale(0.5));
    }
    let t = m * (-x.to_f64()).ln_1p();
    LogProb::from_f64(-t.exp_m1())
}

/// `(1 - x)^m` for `0 <= x <= 1`, `m >= 0`.
pub fn pow_complement(x: LogProb, m: f64) -> LogProb {
    if m == 0.0 || x.is_zero() {
        return LogProb::ONE;
    }
    if x >= LogProb::ONE {
        return LogProb::ZERO;
    }
    let ln = if x.exponent() < -900 {
        -x.scale(m).to_f64()
    } else {
        m * (-x.to_f64()).ln_1p()
    };
    LogProb::from_log2(ln / std::f64::consts::LN_2)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in it {
            s.add(x);
        }
        s
    }
}

/// An exact rational `num / 2^log2_den`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dyadic {
    pub num: BigUint,
    pub log2_den: u64,
}

impl Dyadic {
    pub fn new(num: BigUint, log2_den: u64) -> Dyadic {
        Dyadic { num, log2_den }
    }

    pub fn one() -> Dyadic {
        Dyadic::new(BigUint::one(), 0)
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn log_prob(&self) -> LogProb {
        LogProb::from_ratio(&self.num, self.log2_den)
    }

    pub fn to_f64(&self) -> f64 {
        self.log_prob().to_f64()
    }

    pub fn log2(&self) -> f64 {
        self.log_prob().log2()
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, o: &Dyadic) -> Option<Ordering> {
        let d = self.log2_den.max(o.log2_den);
        let a = &self.num << (d - self.log2_den);
        let b = &o.num << (d - o.log2_den);
        Some(a.cmp(&b))
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Dyadic", 3)?;
        st.serialize_field("numerator", &self.num.to_string())?;
        st.serialize_field("log2_denominator", &self.log2_den)?;
        st.serialize_field("approx", &self.log_prob())?;
        st.end()
    }
}

/// Exact binomial coefficient C(n, k).
pub fn binomial(n: u64, k: u64) -> Result<BigUint> {
    if k > n {
        return domain(format!("binomial({n}, {k}): k exceeds n"));
    }
    Ok(binomial_or_zero(n, k))
}

/// C(n, k), zero when k > n.
pub fn binomial_or_zero(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c *= n - i;
        c /= i + 1;
    }
    c
}

/// Row `[C(n, 0), ..., C(n, n)]`.
pub fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 0..n {
        c *= n - k;
        c /= k + 1;
        row.push(c.clone());
    }
    row
}

/// |B_eps| = sum_{k <= eps} C(n, k).
pub fn ball_count(n: u32, eps: u32) -> Result<BigUint> {
    if n == 0 {
        return domain("dimension n must be at least 1");
    }
    if eps > n {
        return domain(format!("epsilon {eps} exceeds n = {n}"));
    }
    Ok(binomial_row(n as u64)
        .into_iter()
        .take(eps as usize + 1)
        .sum())
}

/// V_eps = |B_eps| / 2^n.
pub fn ball_volume(n: u32, eps: u32) -> Result<Dyadic> {
    Ok(Dyadic::new(ball_count(n, eps)?, n as u64))
}

/// V_r with the radius capped at n.
pub fn ball_volume_capped(n: u32, r: u32) -> Result<Dyadic> {
    ball_volume(n, r.min(n))
}

/// h(x) = -x log2 x - (1-x) log2(1-x), with h(0) = h(1) = 0.
pub fn binary_entropy(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyBounds {
    pub lower_log2: f64,
    pub upper_log2: f64,
}

/// Entropy bracket on log2 sum_{j <= k} C(n, j), valid for k/n < 1/2.
pub fn entropy_volume_bounds(n: u32, k: u32) -> Result<EntropyBounds> {
    if n == 0 || 2 * k >= n {
        return precondition(format!("entropy bounds need k/n < 1/2 (n = {n}, k = {k})"));
    }
    if k == 0 {
        return Ok(EntropyBounds {
            lower_log2: 0.0,
            upper_log2: 0.0,
        });
    }
    let x = k as f64 / n as f64;
    let upper = n as f64 * binary_entropy(x);
    let lower = upper - 0.5 * (8.0 * k as f64 * (1.0 - x)).log2();
    Ok(EntropyBounds {
        lower_log2: lower,
        upper_log2: upper,
    })
}

/// |B_eps(u) ∩ B_eps(v)| for centers at distance d.
pub fn intersection_count(n: u32, eps: u32, d: u32) -> Result<BigUint> {
    if n == 0 {
        return domain("dimension n must be at least 1");
    }
    if d > n {
        return domain(format!("distance {d} exceeds n = {n}"));
    }
    let (n, eps, d) = (n as i64, eps as i64, d as i64);
    let row_d = binomial_row(d as u64);
    let row_rest = binomial_row((n - d) as u64);
    let mut total = BigUint::zero();
    for k in (d - eps).max(0)..=eps.min(d) {
        let top = (eps - k).min(eps - d + k).min(n - d);
        if top < 0 {
            continue;
        }
        let inner: BigUint = row_rest[..=top as usize].iter().sum();
        total += &row_d[k as usize] * inner;
    }
    Ok(total)
}

/// I^eps_d = |B_eps(u) ∩ B_eps(v)| / 2^n for d_H(u, v) = d.
pub fn intersection_measure(n: u32, eps: u32, d: u32) -> Result<Dyadic> {
    Ok(Dyadic::new(intersection_count(n, eps, d)?, n as u64))
}

/// I^eps_{eps+1}, zero when no pair of points is that far apart.
pub fn intersection_next_shell(n: u32, eps: u32) -> Result<Dyadic> {
    if eps >= n {
        return Ok(Dyadic::new(BigUint::zero(), n as u64));
    }
    intersection_measure(n, eps, eps + 1)
}

fn check_intersection_bound_domain(n: u32, eps: u32, d: u32) -> Result<()> {
    if n == 0 || 2 * eps >= n {
        return precondition(format!(
            "intersection bounds need eps/n < 1/2 (n = {n}, eps = {eps})"
        ));
    }
    if d > 2 * eps {
        return precondition(format!(
            "intersection bounds need d <= 2 eps (d = {d}, eps = {eps})"
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntersectionUpper {
    /// n (h((eps - ceil(d/2))/n) - 1) + d
    pub half_distance_log2: f64,
    /// n (h(eps/n) - 1) + d + ceil(d/2) log2((eps/n)/(1 - eps/n))
    pub linearized_log2: f64,
}

/// Entropy upper bounds on I^eps_d (both forms).
pub fn intersection_upper_bound(n: u32, eps: u32, d: u32) -> Result<IntersectionUpper> {
    check_intersection_bound_domain(n, eps, d)?;
    let nf = n as f64;
    let c = d.div_ceil(2);
    let half = nf * (binary_entropy((eps - c) as f64 / nf) - 1.0) + d as f64;
    let x = eps as f64 / nf;
    let tilt = if c == 0 {
        0.0
    } else {
        c as f64 * (x / (1.0 - x)).log2()
    };
    let lin = nf * (binary_entropy(x) - 1.0) + d as f64 + tilt;
    Ok(IntersectionUpper {
        half_distance_log2: half,
        linearized_log2: lin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerRegime {
    /// d < eps
    NearCenters,
    /// eps <= d < 3 eps / 2
    MidRange,
    /// 3 eps / 2 <= d < 2 eps
    FarCenters,
    /// d = 2 eps: only the midpoints are shared
    Diametric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntersectionLower {
    pub regime: LowerRegime,
    pub regime_log2: f64,
    /// 2^-n (2^eps - 1), only at d = eps + 1
    pub next_shell_log2: Option<f64>,
    pub best_log2: f64,
}

const LN_2: f64 = std::f64::consts::LN_2;

fn lower_central_binomial_log2(m: f64, k: f64) -> f64 {
    // C(m, k) >= 2^{m h(k/m)} / sqrt(8 k (1 - k/m)) for 0 < k < m.
    m * binary_entropy(k / m) - 0.5 * (8.0 * k * (1.0 - k / m)).log2()
}

/// Regime-selected lower bound on I^eps_d.
pub fn intersection_lower_bounds(n: u32, eps: u32, d: u32) -> Result<IntersectionLower> {
    check_intersection_bound_domain(n, eps, d)?;
    let nf = n as f64;
    let (e, df) = (eps as f64, d as f64);
    let (regime, regime_log2) = if d == 2 * eps {
        (LowerRegime::Diametric, -nf)
    } else if d < eps {
        let v = df + lower_central_binomial_log2(nf - df, e - df) - nf;
        (LowerRegime::NearCenters, v)
    } else if 2 * d < 3 * eps {
        // log2(2^e - 2^{e h}) = e + log2(1 - 2^{e h - e})
        let gap = e * binary_entropy((df - e) / e) - e;
        (
            LowerRegime::MidRange,
            e + (-(gap * LN_2).exp_m1()).log2() - nf,
        )
    } else {
        let k = 2.0 * e - df;
        (
            LowerRegime::FarCenters,
            lower_central_binomial_log2(e, k) - nf,
        )
    };
    let next_shell_log2 = (d == eps + 1).then(|| e + (-(-e * LN_2).exp_m1()).log2() - nf);
    let best_log2 = next_shell_log2.map_or(regime_log2, |v| v.max(regime_log2));
    Ok(IntersectionLower {
        regime,
        regime_log2,
        next_shell_log2,
        best_log2,
    })
}

/// Row `[S(n, 0), ..., S(n, n)]` of Stirling numbers of the second kind.
pub fn stirling2_row(n: u32) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for m in 1..=n as usize {
        let mut next = vec![BigUint::zero(); m + 1];
        for k in 1..=m {
            let mut v = if k < m { &row[k] * k } else { BigUint::zero() };
            v += &row[k - 1];
            next[k] = v;
        }
        row = next;
    }
    row
}

/// S(n, k) by the additive recurrence.
pub fn stirling2(n: u32, k: u32) -> Result<BigUint> {
    if k > n {
        return domain(format!("stirling2({n}, {k}): k exceeds n"));
    }
    Ok(stirling2_row(n).swap_remove(k as usize))
}
