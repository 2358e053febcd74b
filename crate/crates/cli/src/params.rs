//! Parameters shared by the analysis and simulation commands.

use clap::{Args, ValueEnum};
use hamsec::metric_bounds::{BoundForm, Check, SystemParams};

use crate::numbers::{parse_f64, parse_u128, parse_u32, parse_u64};

/// A command-line mistake: a missing or contradictory flag.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

#[derive(Args, Clone, Debug, Default)]
pub struct Params {
    /// Template length in bits
    #[arg(long = "n", value_parser = parse_u32)]
    pub n: Option<u32>,
    /// Number of enrolled users
    #[arg(long = "N", visible_alias = "users", value_parser = parse_u64)]
    pub users: Option<u64>,
    /// Matching radius in bits
    #[arg(long, value_parser = parse_u32)]
    pub eps: Option<u32>,
    /// False match rate; a comma-separated list gives one value per user
    #[arg(long, value_parser = parse_f64, value_delimiter = ',')]
    pub fmr: Vec<f64>,
    /// False positive identification rate
    #[arg(long, value_parser = parse_f64)]
    pub fpir: Option<f64>,
    /// False accept rate, per user or one shared value
    #[arg(long, value_parser = parse_f64, value_delimiter = ',')]
    pub far: Vec<f64>,
    /// Failure-to-acquire rate, per user or one shared value
    #[arg(long, value_parser = parse_f64, value_delimiter = ',')]
    pub fta: Vec<f64>,
    /// Required ratio 1 / P[near-collision]
    #[arg(long, value_parser = parse_f64)]
    pub lambda: Option<f64>,
    /// Templates excluded per failed adaptive trial
    #[arg(long, value_parser = parse_u128)]
    pub kappa: Option<u128>,
    /// Number of colluding insiders
    #[arg(long, value_parser = parse_u64)]
    pub ell: Option<u64>,
    /// Trial index for adaptive CDFs
    #[arg(long, value_parser = parse_u64)]
    pub a: Option<u64>,
    /// Insider exponent alpha
    #[arg(long, value_parser = parse_f64)]
    pub alpha: Option<f64>,
    /// Subset size for k-NC and k-master quantities
    #[arg(long, value_parser = parse_u64)]
    pub k: Option<u64>,
    /// Per-trial success probability of the naive attacker
    #[arg(long, value_parser = parse_f64)]
    pub p: Option<f64>,
}

pub fn need<T: Copy>(v: Option<T>, flag: &str, what: &str) -> anyhow::Result<T> {
    match v {
        Some(v) => Ok(v),
        None => usage(format!("{what} needs --{flag}")),
    }
}

impl Params {
    /// (n, N, eps) plus alpha and ell when given.
    pub fn system(&self, what: &str) -> anyhow::Result<SystemParams> {
        let mut p = SystemParams::new(
            need(self.n, "n", what)?,
            need(self.users, "N", what)?,
            need(self.eps, "eps", what)?,
        )?;
        if let Some(a) = self.alpha {
            p = p.with_alpha(a);
        }
        if let Some(l) = self.ell {
            p = p.with_ell(l);
        }
        Ok(p)
    }

    pub fn k(&self, what: &str) -> anyhow::Result<u64> {
        need(self.k, "k", what)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Form {
    Exact,
    Entropy,
    Asymptotic,
}

impl From<Form> for BoundForm {
    fn from(f: Form) -> BoundForm {
        match f {
            Form::Exact => BoundForm::Exact,
            Form::Entropy => BoundForm::Entropy,
            Form::Asymptotic => BoundForm::Asymptotic,
        }
    }
}

/// "yes", or the names of the violated hypotheses.
pub fn validity_text(v: &[Check]) -> String {
    let failed: Vec<String> = v
        .iter()
        .filter(|c| !c.satisfied)
        .map(|c| {
            serde_json::to_value(c.condition)
                .ok()
                .and_then(|x| x.as_str().map(String::from))
                .unwrap_or_default()
        })
        .collect();
    if failed.is_empty() {
        "yes".into()
    } else {
        format!("no: {}", failed.join(", "))
    }
}
