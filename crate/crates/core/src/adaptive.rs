//! The kappa-adaptive attacker: after every failed trial, kappa candidate
//! templates are known to miss and are never tried again.
//!
//! With success probability p and r = kappa / 2^n, the first success happens
//! at trial a with probability
//! `prod_{j=0}^{a-2} (1 - p/(1-jr)) * p/(1-(a-1)r)`.

use serde::Serialize;

use crate::combinatorics::{ldexp, one_minus_pow, CompensatedSum, LogProb};
use crate::error::{domain, Error, Result};
use crate::metric_bounds::SystemParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackerConfig {
    /// per-trial success probability of the naive attacker
    pub p: f64,
    /// templates excluded per failed trial
    #[serde(serialize_with = "ser_u128")]
    pub kappa: u128,
    /// dimension; the universe holds 2^n templates
    pub n: u32,
}

fn ser_u128<S: serde::Serializer>(v: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl AttackerConfig {
    pub fn new(p: f64, kappa: u128, n: u32) -> Result<AttackerConfig> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return domain(format!("success probability {p} outside [0, 1]"));
        }
        if n == 0 || n > 1000 {
            return domain(format!("dimension {n} outside 1..=1000"));
        }
        Ok(AttackerConfig { p, kappa, n })
    }

    /// kappa / 2^n
    pub fn rate(&self) -> f64 {
        ldexp(self.kappa as f64, -(self.n as i64))
    }

    /// Last trial with positive probability; `None` for kappa = 0.
    pub fn horizon(&self) -> Option<u64> {
        if self.kappa == 0 {
            return None;
        }
        let h = ((1.0 - self.p) / self.rate()).ceil() + 1.0;
        Some(if h >= u64::MAX as f64 {
            u64::MAX
        } else {
            h.max(1.0) as u64
        })
    }

    fn check_trial(&self, a: u64) -> Result<()> {
        if a == 0 {
            return domain("trial index starts at 1");
        }
        match self.horizon() {
            Some(h) if a > h => domain(format!("trial {a} beyond the horizon {h}")),
            _ => Ok(()),
        }
    }

    /// Probability that trial j+1 succeeds given j earlier failures; once the
    /// remaining mass 1 - j r drops to p or below the hit is certain.
    fn hit(&self, j: u64, r: f64) -> f64 {
        let rest = 1.0 - j as f64 * r;
        if rest <= self.p {
            1.0
        } else {
            self.p / rest
        }
    }

    /// ln of the probability that trial j+1 fails given j earlier failures.
    fn ln_fail(&self, j: u64, r: f64) -> f64 {
        let q = self.hit(j, r);
        if q >= 1.0 {
            f64::NEG_INFINITY
        } else {
            (-q).ln_1p()
        }
    }

    /// ln of P(A > a): a straight run of failures.
    fn ln_survival(&self, a: u64) -> f64 {
        let r = self.rate();
        let mut s = CompensatedSum::default();
        for j in 0..a {
            let t = self.ln_fail(j, r);
            if t == f64::NEG_INFINITY {
                return t;
            }
            s.add(t);
        }
        s.value()
    }
}

/// Largest trial count walked term by term.
pub const MAX_TRIALS: u64 = 1 << 30;

fn budget(a: u64) -> Result<()> {
    if a > MAX_TRIALS {
        return Err(Error::Budget {
            size: a.to_string(),
            budget: MAX_TRIALS,
        });
    }
    Ok(())
}

/// P(A(kappa) = a).
pub fn adaptive_pmf(cfg: &AttackerConfig, a: u64) -> Result<LogProb> {
    cfg.check_trial(a)?;
    if cfg.kappa == 0 {
        let tail = LogProb::from_f64(1.0 - cfg.p).powu(a - 1);
        return Ok(LogProb::from_f64(cfg.p).mul(tail));
    }
    budget(a)?;
    let fail = cfg.ln_survival(a - 1);
    let hit = cfg.hit(a - 1, cfg.rate());
    if fail == f64::NEG_INFINITY || hit == 0.0 {
        return Ok(LogProb::ZERO);
    }
    Ok(LogProb::from_log2(fail / std::f64::consts::LN_2).mul(LogProb::from_f64(hit)))
}

/// P(A(kappa) = a) for a = 1..=last in one pass.
pub fn adaptive_pmf_series(cfg: &AttackerConfig, last: u64) -> Result<Vec<LogProb>> {
    if last == 0 {
        return Ok(vec![]);
    }
    cfg.check_trial(last)?;
    budget(last)?;
    let r = cfg.rate();
    let mut out = Vec::with_capacity(last as usize);
    let mut fail = CompensatedSum::default();
    for a in 1..=last {
        let j = a - 1;
        let hit = if cfg.kappa == 0 { cfg.p } else { cfg.hit(j, r) };
        let f = fail.value();
        out.push(if f == f64::NEG_INFINITY || hit == 0.0 {
            LogProb::ZERO
        } else {
            LogProb::from_log2(f / std::f64::consts::LN_2).mul(LogProb::from_f64(hit))
        });
        let t = if cfg.kappa == 0 {
            (-cfg.p).ln_1p()
        } else {
            cfg.ln_fail(j, r)
        };
        if t == f64::NEG_INFINITY {
            out.resize(last as usize, LogProb::ZERO);
            break;
        }
        fail.add(t);
    }
    Ok(out)
}

/// P(A(kappa) <= a), computed from the survival product so tiny values keep precision.
pub fn adaptive_cdf(cfg: &AttackerConfig, a: u64) -> Result<LogProb> {
    cfg.check_trial(a)?;
    if cfg.kappa == 0 {
        return Ok(one_minus_pow(LogProb::from_f64(cfg.p), a as f64));
    }
    budget(a)?;
    let s = cfg.ln_survival(a);
    if s == f64::NEG_INFINITY {
        return Ok(LogProb::ONE);
    }
    Ok(LogProb::from_f64(-s.exp_m1()))
}

/// P(A(0) = a) / P(A(kappa) = a) as a closed product.
pub fn pmf_ratio(cfg: &AttackerConfig, a: u64) -> Result<f64> {
    cfg.check_trial(a)?;
    budget(a)?;
    let r = cfg.rate();
    let mut s = CompensatedSum::default();
    for j in 1..a {
        let num = 1.0 - j as f64 * r;
        let den = 1.0 - (j - 1) as f64 * r / (1.0 - cfg.p);
        if num <= 0.0 || den <= 0.0 {
            return domain(format!("ratio factor {j} is not positive"));
        }
        s.add((-(j as f64) * r).ln_1p() - (-((j - 1) as f64) * r / (1.0 - cfg.p)).ln_1p());
    }
    Ok(s.value().exp())
}

/// CDF comparison between the adaptive and naive attackers at trial a.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdfRatio {
    pub p: f64,
    #[serde(serialize_with = "ser_u128")]
    pub kappa: u128,
    pub a: u64,
    pub adaptive_cdf: f64,
    pub naive_cdf: f64,
    /// adaptive_cdf / naive_cdf
    pub ratio: f64,
    pub ratio_inverse: f64,
    /// the alternative expression sum_{i<=a} p/(1-(i-1)r) prod_{j=1}^{i+2} (1-p-jr)/(1-jr)
    pub displayed_cdf: f64,
    /// displayed_cdf / naive_cdf
    pub displayed_ratio: f64,
    pub displayed_ratio_inverse: f64,
}

/// The alternative CDF expression whose product runs to i+2.
pub fn displayed_cdf(cfg: &AttackerConfig, a: u64) -> Result<f64> {
    budget(a)?;
    let (p, r) = (cfg.p, cfg.rate());
    let factor = |j: u64| {
        let jr = j as f64 * r;
        (-(p / (1.0 - jr))).ln_1p()
    };
    let mut log_prod = CompensatedSum::default();
    log_prod.add(factor(1));
    log_prod.add(factor(2));
    let mut sum = CompensatedSum::default();
    for i in 1..=a {
        log_prod.add(factor(i + 2));
        let head = p / (1.0 - (i - 1) as f64 * r);
        sum.add(head * log_prod.value().exp());
    }
    Ok(sum.value())
}

/// Adaptive versus naive CDF at trial a, with p = N V_eps.
pub fn cdf_ratio(params: &SystemParams, kappa: u128, a: u64) -> Result<CdfRatio> {
    let p = params
        .volume()
        .log_prob()
        .scale(params.users as f64)
        .to_f64();
    if p > 1.0 {
        return domain(format!("N V_eps = {p} exceeds 1"));
    }
    let cfg = AttackerConfig::new(p, kappa, params.n)?;
    let adaptive = adaptive_cdf(&cfg, a)?.to_f64();
    let naive = one_minus_pow(LogProb::from_f64(p), a as f64).to_f64();
    let displayed = displayed_cdf(&cfg, a)?;
    Ok(CdfRatio {
        p,
        kappa,
        a,
        adaptive_cdf: adaptive,
        naive_cdf: naive,
        ratio: adaptive / naive,
        ratio_inverse: naive / adaptive,
        displayed_cdf: displayed,
        displayed_ratio: displayed / naive,
        displayed_ratio_inverse: naive / displayed,
    })
}

/// Smallest a with P(A(kappa) <= a) >= 1/2, searched up to `limit` trials.
pub fn median_trials_adaptive(cfg: &AttackerConfig, limit: u64) -> Result<u64> {
    let half = -std::f64::consts::LN_2;
    if cfg.p == 0.0 && cfg.kappa == 0 {
        return Err(Error::BeyondHorizon { horizon: limit });
    }
    if cfg.kappa == 0 {
        // ln survival = a ln(1-p), monotone: bisection on the closed form.
        let step = (-cfg.p).ln_1p();
        let guess = (half / step).ceil().max(1.0);
        if guess > limit as f64 {
            return Err(Error::BeyondHorizon { horizon: limit });
        }
        let mut a = guess as u64;
        while a > 1 && (a - 1) as f64 * step <= half {
            a -= 1;
        }
        while (a as f64) * step > half {
            a += 1;
        }
        return if a > limit {
            Err(Error::BeyondHorizon { horizon: limit })
        } else {
            Ok(a)
        };
    }
    let r = cfg.rate();
    let mut s = CompensatedSum::default();
    let end = cfg.horizon().unwrap_or(u64::MAX).min(limit).min(MAX_TRIALS);
    for a in 1..=end {
        let t = cfg.ln_fail(a - 1, r);
        if t == f64::NEG_INFINITY {
            return Ok(a);
        }
        s.add(t);
        if s.value() <= half {
            return Ok(a);
        }
    }
    Err(Error::BeyondHorizon { horizon: end })
}
