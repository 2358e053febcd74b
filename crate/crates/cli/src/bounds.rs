use clap::{Args, ValueEnum};
use hamsec::accuracy_bounds::{
    near_collision_probability_fmr, outsider_trials_far, outsider_trials_fmr,
    outsider_trials_fmr_uniform, outsider_trials_fpir, Bound, Bounded, FmrTrials,
};
use hamsec::adaptive::{
    adaptive_cdf, adaptive_pmf, cdf_ratio, median_trials_adaptive, pmf_ratio, AttackerConfig,
    MAX_TRIALS,
};
use hamsec::combinatorics::LogProb;
use hamsec::master_template::{
    disjoint_balls_probability_bounds, k_master_template_bounds, k_near_collision_probability,
    master_report,
};
use hamsec::metric_bounds::{
    insider_bounds, insider_bounds_subset, outsider_bounds, outsider_bounds_distinct,
    strong_nc_probability, weak_nc_probability_bounds, Check, ProbabilityBounds,
};
use serde_json::{json, Value};

use crate::output::{num, Report, Table};
use crate::params::{need, usage, validity_text, Form, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Fmr,
    Fpir,
    Far,
    Outsider,
    Insider,
    WeakNc,
    StrongNc,
    Master,
    KMaster,
    KNc,
    Disjoint,
    Adaptive,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(value_enum)]
    pub family: Family,
    #[command(flatten)]
    pub params: Params,
    /// Formula family for the metric-space trial bounds
    #[arg(long, value_enum, default_value = "asymptotic")]
    pub form: Form,
    /// Assume the database holds distinct templates (outsider only)
    #[arg(long)]
    pub distinct: bool,
}

/// Longest FAR/FTA list expanded from a single shared value.
const MAX_EXPANDED_USERS: u64 = 10_000_000;

fn trial_table() -> Table {
    Table::new(
        None,
        &["quantity", "lower_log2", "upper_log2", "bound", "valid"],
    )
}

fn trial_row(t: &mut Table, name: &str, b: &Bound, validity: &str) {
    t.row(vec![
        name.into(),
        num(b.lower_log2),
        num(b.upper_log2),
        b.display(),
        validity.into(),
    ]);
}

fn prob_table() -> Table {
    Table::new(
        None,
        &[
            "quantity",
            "lower",
            "upper",
            "lower_log2",
            "upper_log2",
            "valid",
        ],
    )
}

fn prob_row(t: &mut Table, name: &str, lo: LogProb, hi: LogProb, validity: &[Check]) {
    t.row(vec![
        name.into(),
        num(lo.to_f64()),
        num(hi.to_f64()),
        num(lo.log2()),
        num(hi.log2()),
        validity_text(validity),
    ]);
}

fn bounds_row(t: &mut Table, name: &str, b: &ProbabilityBounds) {
    prob_row(t, name, b.lower, b.upper, &b.validity);
}

fn fmr_rows(t: &mut Table, r: &Bounded<FmrTrials>) {
    match r {
        Bounded::Finite(f) => {
            trial_row(t, "trials", &f.bound, "yes");
            trial_row(t, "trials incl. ln 2", &f.with_ln2, "yes");
            t.row(vec![
                "median".into(),
                num(f.median_log2),
                num(f.median_log2),
                "-".into(),
                "yes".into(),
            ]);
        }
        Bounded::Unbounded => t.row(vec![
            "trials".into(),
            "-".into(),
            "-".into(),
            "unbounded".into(),
            "yes".into(),
        ]),
    }
}

pub fn run(args: &BoundsArgs) -> anyhow::Result<Report> {
    let p = &args.params;
    let family = args
        .family
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let what = format!("bounds {family}");
    let mut t;
    let result: Value = match args.family {
        Family::Fmr => {
            t = trial_table();
            if p.fmr.is_empty() {
                return usage(format!("{what} needs --fmr"));
            }
            let r = match (p.fmr.len(), p.users) {
                (1, Some(users)) => outsider_trials_fmr_uniform(p.fmr[0], users)?,
                (_, None) => outsider_trials_fmr(&p.fmr)?,
                (len, Some(users)) if len as u64 == users => outsider_trials_fmr(&p.fmr)?,
                (len, Some(users)) => {
                    return usage(format!("{len} FMR values given for N = {users} users"))
                }
            };
            fmr_rows(&mut t, &r);
            let mut v = json!({ "trials": r });
            if let (&[fmr], Some(users)) = (p.fmr.as_slice(), p.users) {
                let nc = near_collision_probability_fmr(fmr, users)?;
                t.row(vec![
                    "near-collision %".into(),
                    "-".into(),
                    "-".into(),
                    num(100.0 * nc.to_f64()),
                    "yes".into(),
                ]);
                v["near_collision_probability"] = serde_json::to_value(nc)?;
            }
            v
        }
        Family::Fpir => {
            t = trial_table();
            let r = outsider_trials_fpir(need(p.fpir, "fpir", &what)?)?;
            match &r {
                Bounded::Finite(b) => trial_row(&mut t, "trials", b, "yes"),
                Bounded::Unbounded => t.row(vec![
                    "trials".into(),
                    "-".into(),
                    "-".into(),
                    "unbounded".into(),
                    "yes".into(),
                ]),
            }
            json!({ "trials": r })
        }
        Family::Far => {
            t = trial_table();
            let (far, fta) = match (p.far.len(), p.fta.len(), p.users) {
                (0, _, _) => return usage(format!("{what} needs --far")),
                (_, 0, _) => return usage(format!("{what} needs --fta")),
                (1, 1, Some(users)) => {
                    if users > MAX_EXPANDED_USERS {
                        return usage(format!("N = {users} is too large to expand per user"));
                    }
                    (
                        vec![p.far[0]; users as usize],
                        vec![p.fta[0]; users as usize],
                    )
                }
                (a, b, _) if a == b => (p.far.clone(), p.fta.clone()),
                (a, b, _) => return usage(format!("{a} FAR values but {b} FTA values")),
            };
            let r = outsider_trials_far(&far, &fta)?;
            fmr_rows(&mut t, &r);
            json!({ "trials": r })
        }
        Family::Outsider => {
            t = trial_table();
            let sp = p.system(&what)?;
            if args.distinct {
                let b = outsider_bounds_distinct(&sp, args.form.into())?;
                trial_row(
                    &mut t,
                    "outsider trials (distinct)",
                    &b.bound.bound,
                    &validity_text(&b.bound.validity),
                );
                serde_json::to_value(&b)?
            } else {
                let b = outsider_bounds(&sp, args.form.into())?;
                trial_row(
                    &mut t,
                    "outsider trials",
                    &b.bound,
                    &validity_text(&b.validity),
                );
                serde_json::to_value(&b)?
            }
        }
        Family::Insider => {
            t = trial_table();
            let sp = p.system(&what)?;
            let b = match p.ell {
                Some(ell) => insider_bounds_subset(&sp, ell, args.form.into())?,
                None => insider_bounds(&sp, args.form.into())?,
            };
            trial_row(
                &mut t,
                "insider trials",
                &b.bound,
                &validity_text(&b.validity),
            );
            serde_json::to_value(&b)?
        }
        Family::WeakNc => {
            t = prob_table();
            let b = weak_nc_probability_bounds(&p.system(&what)?)?;
            bounds_row(&mut t, "weak near-collision", &b);
            serde_json::to_value(&b)?
        }
        Family::StrongNc => {
            t = prob_table();
            let s = strong_nc_probability(&p.system(&what)?);
            prob_row(&mut t, "strong near-collision", s, s, &[]);
            json!({ "probability": s })
        }
        Family::Master => {
            t = prob_table();
            let r = master_report(&p.system(&what)?)?;
            bounds_row(&mut t, "master template", &r.full_master);
            bounds_row(&mut t, "disjoint balls", &r.disjoint_balls);
            serde_json::to_value(&r)?
        }
        Family::KMaster => {
            t = prob_table();
            let k = p.k(&what)?;
            let b = k_master_template_bounds(&p.system(&what)?, k)?;
            bounds_row(&mut t, &format!("{k}-master template"), &b);
            serde_json::to_value(&b)?
        }
        Family::KNc => {
            t = prob_table();
            let k = p.k(&what)?;
            let s = k_near_collision_probability(&p.system(&what)?, k)?;
            prob_row(&mut t, &format!("{k}-near-collision"), s, s, &[]);
            json!({ "k": k, "probability": s })
        }
        Family::Disjoint => {
            t = prob_table();
            let b = disjoint_balls_probability_bounds(&p.system(&what)?)?;
            bounds_row(&mut t, "disjoint balls", &b);
            serde_json::to_value(&b)?
        }
        Family::Adaptive => {
            t = Table::new(None, &["quantity", "value"]);
            let kappa = need(p.kappa, "kappa", &what)?;
            match p.p {
                Some(prob) => {
                    let cfg = AttackerConfig::new(prob, kappa, need(p.n, "n", &what)?)?;
                    let median = median_trials_adaptive(&cfg, MAX_TRIALS);
                    t.row(vec![
                        "horizon".into(),
                        cfg.horizon().map_or("none".into(), |h| h.to_string()),
                    ]);
                    t.row(vec![
                        "median trials".into(),
                        median
                            .as_ref()
                            .map_or_else(|e| e.to_string(), u64::to_string),
                    ]);
                    let mut v = json!({
                        "config": cfg,
                        "horizon": cfg.horizon(),
                        "median_trials": median.as_ref().ok(),
                    });
                    if let Some(a) = p.a {
                        let pmf = adaptive_pmf(&cfg, a)?;
                        let cdf = adaptive_cdf(&cfg, a)?;
                        let ratio = pmf_ratio(&cfg, a)?;
                        t.row(vec![format!("pmf({a})"), num(pmf.to_f64())]);
                        t.row(vec![format!("cdf({a})"), num(cdf.to_f64())]);
                        t.row(vec![format!("pmf ratio({a})"), num(ratio)]);
                        v["a"] = json!(a);
                        v["pmf"] = serde_json::to_value(pmf)?;
                        v["cdf"] = serde_json::to_value(cdf)?;
                        v["pmf_ratio"] = json!(ratio);
                    }
                    v
                }
                None => {
                    let r = cdf_ratio(&p.system(&what)?, kappa, need(p.a, "a", &what)?)?;
                    for (name, x) in [
                        ("p", r.p),
                        ("adaptive cdf", r.adaptive_cdf),
                        ("naive cdf", r.naive_cdf),
                        ("ratio", r.ratio),
                        ("inverse ratio", r.ratio_inverse),
                    ] {
                        t.row(vec![name.into(), num(x)]);
                    }
                    serde_json::to_value(&r)?
                }
            }
        }
    };
    Ok(Report::new(json!({ "command": "bounds", "family": family, "result": result })).table(t))
}
