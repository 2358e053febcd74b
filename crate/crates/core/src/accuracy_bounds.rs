//! Attack complexity from published matcher accuracy: FMR/FPIR/FAR driven
//! trial bounds, birthday-style near-collision probability and the largest
//! database that keeps that probability under 1/lambda.

use serde::{Serialize, Serializer};

use crate::combinatorics::{one_minus_pow, LogProb, LOG2_LN2};
use crate::error::{domain, precondition, Error, Result};

/// Empirical error rates. Missing fields are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AccuracyRates {
    pub fmr: Option<f64>,
    pub fnmr: Option<f64>,
    pub fta: Option<f64>,
    pub fpir: Option<f64>,
    pub fnir: Option<f64>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
}

fn check_rate(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(0.0..=1.0).contains(&x) => {
            domain(format!("{name} = {x} is not a probability"))
        }
        _ => Ok(()),
    }
}

fn agree(name: &str, given: f64, derived: f64) -> Result<()> {
    let scale = given.abs().max(derived.abs());
    if scale > 0.0 && (given - derived).abs() > 1e-9 * scale {
        return Err(Error::Consistency(format!(
            "{name} = {given} but the identity gives {derived}"
        )));
    }
    Ok(())
}

/// Fills FAR = FMR (1 - FTA) and FRR = FTA + FNMR (1 - FTA).
pub fn derive_rates(r: AccuracyRates) -> Result<AccuracyRates> {
    for (name, v) in [
        ("FMR", r.fmr),
        ("FNMR", r.fnmr),
        ("FTA", r.fta),
        ("FPIR", r.fpir),
        ("FNIR", r.fnir),
        ("FAR", r.far),
        ("FRR", r.frr),
    ] {
        check_rate(name, v)?;
    }
    let mut out = r;
    if let (Some(fmr), Some(fta)) = (r.fmr, r.fta) {
        let far = fmr * (1.0 - fta);
        if let Some(given) = r.far {
            agree("FAR", given, far)?;
        }
        out.far = Some(far);
    } else if let (Some(far), Some(fta), None) = (r.far, r.fta, r.fmr) {
        if fta < 1.0 {
            out.fmr = Some(far / (1.0 - fta));
        }
    }
    if let (Some(fnmr), Some(fta)) = (r.fnmr, r.fta) {
        let frr = fta + fnmr * (1.0 - fta);
        if let Some(given) = r.frr {
            agree("FRR", given, frr)?;
        }
        out.frr = Some(frr);
    }
    Ok(out)
}

/// How a log2 bound is turned into the integer shown in tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    Floor,
    Nearest,
    None,
}

impl Rounding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Floor => x.floor(),
            Rounding::Nearest => x.round(),
            Rounding::None => x,
        }
    }
}

/// A pair of log2 bounds on a trial count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub lower_log2: f64,
    pub upper_log2: f64,
    pub rounding: Rounding,
}

impl Bound {
    pub fn new(lower_log2: f64, upper_log2: f64, rounding: Rounding) -> Bound {
        Bound {
            lower_log2,
            upper_log2,
            rounding,
        }
    }

    /// Bounds below one trial are reported as 2^0.
    pub fn clipped(&self) -> (f64, f64) {
        (self.lower_log2.max(0.0), self.upper_log2.max(0.0))
    }

    pub fn is_clipped(&self) -> bool {
        self.lower_log2 < 0.0 || self.upper_log2 < 0.0
    }

    pub fn rounded(&self) -> (f64, f64) {
        let (l, u) = self.clipped();
        (self.rounding.apply(l), self.rounding.apply(u))
    }

    pub fn shifted(&self, dl: f64, du: f64) -> Bound {
        Bound::new(self.lower_log2 + dl, self.upper_log2 + du, self.rounding)
    }

    pub fn display(&self) -> String {
        let (l, u) = self.rounded();
        match self.rounding {
            Rounding::None => format!("{l:.2} / {u:.2}"),
            _ => format!("{l} / {u}"),
        }
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let (cl, cu) = self.clipped();
        let (rl, ru) = self.rounded();
        let mut st = s.serialize_struct("Bound", 9)?;
        st.serialize_field("lower_log2", &finite_or_none(self.lower_log2))?;
        st.serialize_field("upper_log2", &finite_or_none(self.upper_log2))?;
        st.serialize_field("lower_clipped", &finite_or_none(cl))?;
        st.serialize_field("upper_clipped", &finite_or_none(cu))?;
        st.serialize_field("lower_rounded", &finite_or_none(rl))?;
        st.serialize_field("upper_rounded", &finite_or_none(ru))?;
        st.serialize_field("clipped", &self.is_clipped())?;
        st.serialize_field("rounding", &self.rounding)?;
        st.serialize_field("display", &self.display())?;
        st.end()
    }
}

/// A value that may be unbounded (a zero error rate gives no finite bound).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bounded<T> {
    Finite(T),
    Unbounded,
}

impl<T> Bounded<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Bounded::Finite(t) => Some(t),
            Bounded::Unbounded => None,
        }
    }
}

/// Outsider trial bounds driven by per-user match rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FmrTrials {
    /// -log2 sum FMR_i (1 + FMR_i) and -log2 sum FMR_i.
    pub bound: Bound,
    /// The same bounds with the log2(ln 2) offset carried by the median itself.
    pub with_ln2: Bound,
    /// log2 of the continuous median -ln 2 / ln(1 - p), p = 1 - prod(1 - FMR_i).
    pub median_log2: f64,
    /// log2 of the median in units of ln 2; the quantity `bound` brackets.
    pub median_ln2_units_log2: f64,
}

/// Bounds from `(rate, multiplicity)` terms.
fn trials_from_rates(terms: &[(f64, f64)], what: &str) -> Result<Bounded<FmrTrials>> {
    if terms.is_empty() || terms.iter().all(|&(_, w)| w == 0.0) {
        return domain(format!("at least one {what} value is required"));
    }
    for &(f, _) in terms {
        if f.is_nan() || f < 0.0 {
            return domain(format!("{what} = {f} is not a probability"));
        }
        if f > 0.5 {
            return precondition(format!("{what} = {f} exceeds 1/2"));
        }
    }
    if terms.iter().any(|&(f, w)| f == 0.0 && w > 0.0) {
        return Ok(Bounded::Unbounded);
    }
    let sum: f64 = terms.iter().map(|&(f, w)| w * f).sum();
    let sum_sq: f64 = terms.iter().map(|&(f, w)| w * f * (1.0 + f)).sum();
    let neg_log_survival: f64 = terms.iter().map(|&(f, w)| -w * (-f).ln_1p()).sum();
    let bound = Bound::new(-sum_sq.log2(), -sum.log2(), Rounding::Floor);
    Ok(Bounded::Finite(FmrTrials {
        bound,
        with_ln2: bound.shifted(LOG2_LN2, LOG2_LN2),
        median_log2: LOG2_LN2 - neg_log_survival.log2(),
        median_ln2_units_log2: -neg_log_survival.log2(),
    }))
}

/// Median outsider trials against users with individual FMR values.
pub fn outsider_trials_fmr(per_user_fmr: &[f64]) -> Result<Bounded<FmrTrials>> {
    let terms: Vec<(f64, f64)> = per_user_fmr.iter().map(|&f| (f, 1.0)).collect();
    trials_from_rates(&terms, "FMR")
}

/// Same as [`outsider_trials_fmr`] with `users` copies of one rate.
pub fn outsider_trials_fmr_uniform(fmr: f64, users: u64) -> Result<Bounded<FmrTrials>> {
    if users == 0 {
        return domain("at least one user is required");
    }
    trials_from_rates(&[(fmr, users as f64)], "FMR")
}

/// Identification-mode bound from the FPIR of the whole gallery.
pub fn outsider_trials_fpir(fpir: f64) -> Result<Bounded<Bound>> {
    if fpir.is_nan() || !(0.0..=1.0).contains(&fpir) {
        return domain(format!("FPIR = {fpir} is not a probability"));
    }
    if fpir == 0.0 {
        return Ok(Bounded::Unbounded);
    }
    if fpir > 0.5 {
        return precondition(format!("FPIR = {fpir} exceeds 1/2"));
    }
    let upper = -fpir.log2();
    Ok(Bounded::Finite(Bound::new(
        upper - fpir.ln_1p() / std::f64::consts::LN_2,
        upper,
        Rounding::Floor,
    )))
}

/// FMR-form bounds with FMR_i replaced by FAR_i / (1 - FTA_i).
pub fn outsider_trials_far(
    per_user_far: &[f64],
    per_user_fta: &[f64],
) -> Result<Bounded<FmrTrials>> {
    if per_user_far.len() != per_user_fta.len() {
        return domain("FAR and FTA lists must have the same length");
    }
    let mut fmr = Vec::with_capacity(per_user_far.len());
    for (&far, &fta) in per_user_far.iter().zip(per_user_fta) {
        check_rate("FAR", Some(far))?;
        check_rate("FTA", Some(fta))?;
        if fta >= 1.0 {
            return domain("FTA = 1: no acquisition ever succeeds");
        }
        fmr.push(far / (1.0 - fta));
    }
    outsider_trials_fmr(&fmr)
}

/// 1 - (1 - FMR)^{N(N-1)/2}.
pub fn near_collision_probability_fmr(fmr: f64, users: u64) -> Result<LogProb> {
    if fmr.is_nan() || !(0.0..=1.0).contains(&fmr) {
        return domain(format!("FMR = {fmr} is not a probability"));
    }
    if users == 0 {
        return domain("at least one user is required");
    }
    let pairs = users as f64 * (users as f64 - 1.0) / 2.0;
    Ok(one_minus_pow(LogProb::from_f64(fmr), pairs))
}

fn check_fmr_lambda(fmr: f64, lambda: f64) -> Result<()> {
    if fmr.is_nan() || !(0.0..1.0).contains(&fmr) {
        return domain(format!("FMR = {fmr} must lie in [0, 1)"));
    }
    if lambda.is_nan() || lambda < 2.0 {
        return precondition(format!("lambda = {lambda} must be at least 2"));
    }
    Ok(())
}

/// Largest N whose near-collision probability stays below 1/lambda.
pub fn max_database_size(fmr: f64, lambda: f64) -> Result<Bounded<u64>> {
    check_fmr_lambda(fmr, lambda)?;
    if fmr == 0.0 {
        return Ok(Bounded::Unbounded);
    }
    let budget = -(-1.0 / lambda).ln_1p();
    let per_pair = -(-fmr).ln_1p();
    let ratio = budget / per_pair;
    let safe = |n: u64| (n as f64) * (n as f64 - 1.0) / 2.0 * per_pair < budget;
    let mut n = (0.5 * (1.0 + (1.0 + 8.0 * ratio).sqrt())).floor().max(1.0) as u64;
    while n > 1 && !safe(n) {
        n -= 1;
    }
    while safe(n + 1) {
        n += 1;
    }
    Ok(Bounded::Finite(n))
}

/// sqrt(2 / (lambda FMR)).
pub fn max_database_size_asymptotic(fmr: f64, lambda: f64) -> Result<Bounded<f64>> {
    check_fmr_lambda(fmr, lambda)?;
    if fmr == 0.0 {
        return Ok(Bounded::Unbounded);
    }
    Ok(Bounded::Finite((2.0 / (lambda * fmr)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_rates_examples() {
        let r = derive_rates(AccuracyRates {
            fmr: Some(0.01),
            fta: Some(0.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.far, Some(0.01));
        let r = derive_rates(AccuracyRates {
            fnmr: Some(0.02),
            fta: Some(0.1),
            ..Default::default()
        })
        .unwrap();
        assert!((r.frr.unwrap() - 0.118).abs() < 1e-15);
        let r = derive_rates(AccuracyRates {
            fmr: Some(0.5),
            fta: Some(1.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.far, Some(0.0));
        let bad = AccuracyRates {
            fmr: Some(0.01),
            fta: Some(0.5),
            far: Some(0.01),
            ..Default::default()
        };
        assert!(matches!(derive_rates(bad), Err(Error::Consistency(_))));
        assert!(derive_rates(AccuracyRates {
            fmr: Some(1.5),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn fmr_examples() {
        let t = outsider_trials_fmr(&[1e-6; 8]).unwrap().finite().unwrap();
        assert_eq!(t.bound.rounded(), (16.0, 16.0));
        let t = outsider_trials_fmr(&[0.5]).unwrap().finite().unwrap();
        assert_eq!(t.bound.upper_log2, 1.0);
        let t = outsider_trials_fmr_uniform(1e-4, 100)
            .unwrap()
            .finite()
            .unwrap();
        assert!(
            (t.bound.lower_log2 - 6.64).abs() < 0.01 && (t.bound.upper_log2 - 6.64).abs() < 0.01
        );
        assert_eq!(
            outsider_trials_fmr(&[1e-3, 0.0]).unwrap(),
            Bounded::Unbounded
        );
        assert!(matches!(
            outsider_trials_fmr(&[0.6]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn fpir_examples() {
        assert_eq!(
            outsider_trials_fpir(0.5)
                .unwrap()
                .finite()
                .unwrap()
                .upper_log2,
            1.0
        );
        let b = outsider_trials_fpir(2f64.powi(-20))
            .unwrap()
            .finite()
            .unwrap();
        assert_eq!(b.upper_log2, 20.0);
        assert!((b.lower_log2 - (20.0 - 1.3758e-6)).abs() < 1e-9);
        let b = outsider_trials_fpir(1e-3).unwrap().finite().unwrap();
        assert!((b.upper_log2 - 9.9658).abs() < 1e-4 && (b.lower_log2 - 9.9644).abs() < 1e-4);
        assert_eq!(outsider_trials_fpir(0.0).unwrap(), Bounded::Unbounded);
    }

    #[test]
    fn far_examples() {
        let a = outsider_trials_far(&[1e-5], &[0.0]).unwrap();
        assert_eq!(a, outsider_trials_fmr(&[1e-5]).unwrap());
        let b = outsider_trials_far(&[5e-7], &[0.5])
            .unwrap()
            .finite()
            .unwrap();
        assert!((b.bound.upper_log2 - 19.93).abs() < 0.005);
        let c = outsider_trials_far(&[1e-6; 10], &[0.9; 10])
            .unwrap()
            .finite()
            .unwrap();
        assert!((c.bound.upper_log2 - 13.29).abs() < 0.005);
        assert!(outsider_trials_far(&[1e-6], &[1.0]).is_err());
    }

    #[test]
    fn near_collision_examples() {
        assert!(near_collision_probability_fmr(0.3, 1).unwrap().is_zero());
        let p = near_collision_probability_fmr(2e-6, 7).unwrap().to_f64();
        assert!((p - 4.2e-5).abs() < 1e-7);
        let p = near_collision_probability_fmr(1e-4, 100).unwrap().to_f64();
        assert!((p - 0.39044).abs() < 5e-6);
    }

    #[test]
    fn max_size_examples() {
        assert_eq!(
            max_database_size(1e-6, 100.0).unwrap(),
            Bounded::Finite(142)
        );
        assert_eq!(
            max_database_size(2e-6, 100.0).unwrap(),
            Bounded::Finite(100)
        );
        assert_eq!(max_database_size(0.04, 100.0).unwrap(), Bounded::Finite(1));
        assert_eq!(max_database_size(0.0, 100.0).unwrap(), Bounded::Unbounded);
        let a = max_database_size_asymptotic(1e-6, 100.0)
            .unwrap()
            .finite()
            .unwrap();
        assert!((a - 141.42).abs() < 0.01);
        let a = max_database_size_asymptotic(2e-6, 100.0)
            .unwrap()
            .finite()
            .unwrap();
        assert!((a - 100.0).abs() < 1e-9);
        let a = max_database_size_asymptotic(5e-6, 100.0)
            .unwrap()
            .finite()
            .unwrap();
        assert!((a - 63.25).abs() < 0.01);
    }
}
