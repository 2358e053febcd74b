use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hamsec::simulate::{
    estimate_event, generate_database, simulate_adaptive, simulate_insider, simulate_outsider,
    EventKind, InsiderMode, SimulationReport,
};
use serde_json::{json, Value};

use crate::numbers::parse_u64;
use crate::output::{num, opt_num, Report, Table};
use crate::params::{need, usage, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Outsider,
    Adaptive,
    Insider,
    StrongNc,
    WeakNc,
    Disjoint,
    KNc,
    Master,
    KMaster,
    Partition,
    OutsiderTrial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Redraw,
    FixedDb,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: Kind,
    #[command(flatten)]
    pub params: Params,
    #[arg(long, value_parser = parse_u64, default_value = "1000")]
    pub replicas: u64,
    /// RNG seed; a random one is drawn and printed when absent
    #[arg(long, value_parser = parse_u64)]
    pub seed: Option<u64>,
    /// Censoring limit for trial counts
    #[arg(long, value_parser = parse_u64, default_value = "2^20")]
    pub max_trials: u64,
    /// Censoring limit for insider rounds
    #[arg(long, value_parser = parse_u64, default_value = "1000")]
    pub max_rounds: u64,
    /// Insider database handling between rounds
    #[arg(long, value_enum, default_value = "redraw")]
    pub mode: Mode,
    /// Hit states in the adaptive urn; defaults to round(p 2^n)
    #[arg(long, value_parser = parse_u64)]
    pub success_states: Option<u64>,
    /// Include the per-replica outcomes in the JSON output
    #[arg(long)]
    pub outcomes: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long = "n", value_parser = crate::numbers::parse_u32)]
    pub n: u32,
    #[arg(long = "N", visible_alias = "users", value_parser = parse_u64)]
    pub users: u64,
    /// RNG seed; a random one is drawn and printed when absent
    #[arg(long, value_parser = parse_u64)]
    pub seed: Option<u64>,
    /// Reject duplicate templates
    #[arg(long)]
    pub distinct: bool,
    /// Output file; the database goes to standard output when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn report(r: SimulationReport, keep_outcomes: bool) -> anyhow::Result<Report> {
    let (mlo, mhi) = r.median_interval();
    let mut value = serde_json::to_value(&r)?;
    value["median_interval"] = json!([mlo, mhi]);
    value["pass"] = json!(r.all_checks_pass());
    if !keep_outcomes {
        value
            .as_object_mut()
            .expect("report is an object")
            .remove("outcomes");
    }

    let mut summary = Table::new(
        Some(&format!("simulation: {}", r.kind)),
        &["quantity", "value"],
    );
    summary.row(vec!["seed".into(), r.seed.to_string()]);
    summary.row(vec!["replicas".into(), r.replicas.to_string()]);
    // Event-only reports carry no counts at all.
    if r.frequency.is_none() || r.censored < r.replicas {
        summary.row(vec!["censored".into(), r.censored.to_string()]);
        summary.row(vec![
            "median".into(),
            r.empirical_median.map_or("-".into(), |m| m.to_string()),
        ]);
        let show = |v: Option<u64>| v.map_or("censored".into(), |m| m.to_string());
        summary.row(vec![
            "median interval".into(),
            format!("[{}, {}]", show(mlo), show(mhi)),
        ]);
        summary.row(vec!["mean".into(), opt_num(r.empirical_mean)]);
    }
    if let Some(f) = &r.frequency {
        summary.row(vec![
            "frequency".into(),
            format!("{} +- {}", num(f.estimate), num(f.std_error)),
        ]);
    }
    let mut checks = Table::new(
        Some("checks"),
        &["check", "lower", "upper", "estimate", "std_error", "pass"],
    );
    let mut failures: Vec<Value> = vec![];
    for c in &r.checks {
        checks.row(vec![
            c.name.clone(),
            num(c.lower),
            num(c.upper),
            num(c.estimate),
            num(c.std_error),
            if c.pass { "PASS" } else { "FAIL" }.into(),
        ]);
        if !c.pass {
            failures.push(serde_json::to_value(c)?);
        }
    }
    let mut out = Report::new(value).table(summary).table(checks);
    out.failures = failures;
    Ok(out)
}

pub fn run(args: &SimulateArgs) -> anyhow::Result<Report> {
    let p = &args.params;
    let seed = seed_or_random(args.seed);
    let what = "simulate";
    let event = |kind: EventKind| -> anyhow::Result<SimulationReport> {
        Ok(estimate_event(&p.system(what)?, kind, seed, args.replicas)?)
    };
    let r = match args.kind {
        Kind::Outsider => {
            simulate_outsider(&p.system(what)?, seed, args.replicas, args.max_trials)?
        }
        Kind::Adaptive => {
            let n = need(p.n, "n", "simulate adaptive")?;
            let kappa = need(p.kappa, "kappa", "simulate adaptive")?;
            let Ok(kappa) = u64::try_from(kappa) else {
                return usage("simulate adaptive needs kappa < 2^64");
            };
            let states = match (args.success_states, p.p) {
                (Some(s), _) => s,
                (None, Some(prob)) if n <= 62 => (prob * (1u64 << n) as f64).round() as u64,
                (None, Some(_)) => return usage("simulate adaptive needs n <= 62"),
                (None, None) => return usage("simulate adaptive needs --success-states or --p"),
            };
            simulate_adaptive(n, states, kappa, seed, args.replicas, args.max_trials)?
        }
        Kind::Insider => {
            let sp = p.system(what)?;
            let mode = match args.mode {
                Mode::Redraw => InsiderMode::Redraw,
                Mode::FixedDb => InsiderMode::FixedDb,
            };
            simulate_insider(
                &sp,
                p.ell.unwrap_or(sp.users),
                seed,
                args.replicas,
                args.max_rounds,
                mode,
            )?
        }
        Kind::StrongNc => event(EventKind::StrongNc)?,
        Kind::WeakNc => event(EventKind::WeakNc)?,
        Kind::Disjoint => event(EventKind::Disjoint)?,
        Kind::KNc => event(EventKind::KNearCollision {
            k: p.k("simulate k-nc")?,
        })?,
        Kind::Master => event(EventKind::Master)?,
        Kind::KMaster => event(EventKind::KMasterCount {
            k: p.k("simulate k-master")?,
        })?,
        Kind::Partition => event(EventKind::PartitionSize)?,
        Kind::OutsiderTrial => event(EventKind::OutsiderTrial)?,
    };
    report(r, args.outcomes)
}

/// Writes the database and returns `None`, or returns its text for standard output.
pub fn generate(args: &GenerateArgs) -> anyhow::Result<(Option<String>, Report)> {
    let seed = seed_or_random(args.seed);
    let users = usize::try_from(args.users)?;
    let db = generate_database(args.n, users, seed, args.distinct)?;
    let text = hamsec::io::write_database(&db);
    let value = json!({
        "command": "generate",
        "n": args.n,
        "N": args.users,
        "seed": seed,
        "distinct": args.distinct,
        "output": args.output.as_ref().map(|p| p.display().to_string()),
    });
    let mut t = Table::new(None, &["quantity", "value"]);
    for (k, v) in [
        ("n", args.n.to_string()),
        ("N", args.users.to_string()),
        ("seed", seed.to_string()),
    ] {
        t.row(vec![k.into(), v]);
    }
    let report = Report::new(value).table(t);
    match &args.output {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok((None, report))
        }
        None => Ok((Some(text), report)),
    }
}
