//! `hamsec`: security bounds for biometric template databases in Hamming space.

mod audit;
mod bounds;
mod numbers;
mod output;
mod params;
mod simulate;

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hamsec::accuracy_bounds::{
    max_database_size, max_database_size_asymptotic, near_collision_probability_fmr, Bounded,
};
use hamsec::metric_bounds::{
    robustness_thresholds, security_scores, RobustnessQuery, SystemParams,
};
use hamsec::reproduce::reproduce;
use serde_json::{json, Value};

use output::{num, opt_num, Format, Report, Table};
use params::{usage, validity_text, Usage};

#[derive(Parser, Debug)]
#[command(name = "hamsec", version, about)]
struct Cli {
    /// Output format
    #[arg(long, global = true, value_enum, default_value = "markdown")]
    format: Format,
    /// Worker threads for simulations
    #[arg(long, global = true, env = "HAMSEC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trial-count and probability bounds for one parameter set
    Bounds(bounds::BoundsArgs),
    /// Recompute the published tables and compare cell by cell
    Reproduce(ReproduceArgs),
    /// Largest safe database size or robustness threshold
    Recommend(RecommendArgs),
    /// Scan a template database file for near-collisions and master templates
    Audit(audit::AuditArgs),
    /// Monte Carlo estimates checked against the analytic bounds
    Simulate(simulate::SimulateArgs),
    /// Write a random template database
    Generate(simulate::GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TableName {
    Table1,
    Table2,
    Table3,
    Scores,
    All,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(value_enum)]
    table: TableName,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    #[command(flatten)]
    params: params::Params,
}

fn run_reproduce(args: &ReproduceArgs) -> anyhow::Result<Report> {
    let names: &[&str] = match args.table {
        TableName::Table1 => &["table1"],
        TableName::Table2 => &["table2"],
        TableName::Table3 => &["table3"],
        TableName::Scores => &["scores"],
        TableName::All => &["table1", "table2", "table3", "scores"],
    };
    let mut tables = vec![];
    let mut values = vec![];
    let mut failures = vec![];
    for name in names {
        let r = reproduce(name)?;
        let mut t = Table::new(
            Some(name),
            &[
                "cell",
                "expected",
                "computed",
                "raw",
                "diff",
                "tolerance",
                "pass",
                "note",
            ],
        );
        for c in &r.cells {
            t.row(vec![
                c.id.clone(),
                num(c.expected),
                num(c.computed),
                num(c.raw),
                num(c.diff()),
                num(c.tolerance),
                if c.pass { "PASS" } else { "FAIL" }.into(),
                c.note.clone().unwrap_or_default(),
            ]);
        }
        for c in r.failures() {
            failures.push(json!({
                "table": name,
                "cell": c.id,
                "expected": c.expected,
                "computed": c.computed,
                "diff": c.diff(),
                "tolerance": c.tolerance,
            }));
        }
        tables.push(t);
        values.push(serde_json::to_value(&r)?);
    }
    let mut report = Report::new(json!({
        "command": "reproduce",
        "tables": values,
        "pass": failures.is_empty(),
    }));
    report.tables = tables;
    report.failures = failures;
    Ok(report)
}

fn run_recommend(args: &RecommendArgs) -> anyhow::Result<Report> {
    let p = &args.params;
    if let Some(&fmr) = p.fmr.first() {
        if p.fmr.len() > 1 {
            return usage("recommend takes a single --fmr value");
        }
        let lambda = params::need(p.lambda, "lambda", "recommend --fmr")?;
        let exact = max_database_size(fmr, lambda)?;
        let asym = max_database_size_asymptotic(fmr, lambda)?;
        let mut t = Table::new(None, &["quantity", "value"]);
        let nc = match exact {
            Bounded::Finite(users) => {
                t.row(vec!["max N".into(), users.to_string()]);
                Some(near_collision_probability_fmr(fmr, users)?)
            }
            Bounded::Unbounded => {
                t.row(vec!["max N".into(), "unbounded".into()]);
                None
            }
        };
        t.row(vec!["max N (asymptotic)".into(), opt_num(asym.finite())]);
        t.row(vec![
            "P[near-collision] at max N".into(),
            opt_num(nc.map(|x| x.to_f64())),
        ]);
        t.row(vec!["1 / lambda".into(), num(1.0 / lambda)]);
        return Ok(Report::new(json!({
            "command": "recommend",
            "fmr": fmr,
            "lambda": lambda,
            "max_users": exact,
            "max_users_asymptotic": asym,
            "near_collision_probability": nc,
        }))
        .table(t));
    }

    let (query, free, param) = match (p.n, p.users, p.eps) {
        (Some(n), Some(users), None) => {
            (RobustnessQuery::MaxEpsilon { n, users }, "max eps", "eps")
        }
        (None, Some(users), Some(eps)) => {
            (RobustnessQuery::MinDimension { eps, users }, "min n", "n")
        }
        (Some(n), None, Some(eps)) => (RobustnessQuery::MaxUsers { n, eps }, "max N", "N"),
        _ => {
            return usage("recommend needs --fmr with --lambda, or exactly two of --n, --N, --eps")
        }
    };
    let th = robustness_thresholds(query)?;
    let mut t = Table::new(None, &["quantity", "value"]);
    let mut value = json!({ "command": "recommend", "threshold": th });
    let mut failures = vec![];
    match th.value {
        Some(v) => {
            t.row(vec![free.into(), v.to_string()]);
            t.row(vec!["S1 at threshold".into(), opt_num(th.s1_at_value)]);
            t.row(vec!["S1 one step beyond".into(), opt_num(th.s1_beyond)]);
            let point = match query {
                RobustnessQuery::MaxEpsilon { n, users } => SystemParams::new(n, users, v as u32),
                RobustnessQuery::MinDimension { eps, users } => {
                    SystemParams::new(v as u32, users, eps)
                }
                RobustnessQuery::MaxUsers { n, eps } => SystemParams::new(n, v, eps),
            }?;
            match security_scores(&point) {
                Ok(s) => {
                    t.row(vec!["S1".into(), num(s.s1)]);
                    t.row(vec!["S2".into(), num(s.s2)]);
                    t.row(vec!["S3".into(), opt_num(s.s3)]);
                    t.row(vec!["valid".into(), validity_text(&s.validity)]);
                    value["scores"] = serde_json::to_value(&s)?;
                }
                Err(e) => {
                    t.row(vec!["scores".into(), e.to_string()]);
                    value["scores"] =
                        json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
                }
            }
            value["feasible"] = json!(true);
        }
        None => {
            let msg = format!("infeasible: no {param} keeps S1 >= 1/2 in the searched range");
            t.row(vec![free.into(), msg.clone()]);
            value["feasible"] = json!(false);
            value["message"] = json!(msg);
            failures.push(json!({ "check": "feasible", "message": msg }));
        }
    }
    let mut report = Report::new(value).table(t);
    report.failures = failures;
    Ok(report)
}

fn error_json(e: &anyhow::Error) -> Value {
    let kind = if let Some(h) = e.downcast_ref::<hamsec::Error>() {
        h.kind()
    } else if e.downcast_ref::<Usage>().is_some() {
        "usage"
    } else {
        "io"
    };
    json!({ "error": { "kind": kind, "message": format!("{e:#}") } })
}

fn run(cli: &Cli) -> anyhow::Result<(Option<String>, Report)> {
    Ok(match &cli.command {
        Command::Bounds(a) => (None, bounds::run(a)?),
        Command::Reproduce(a) => (None, run_reproduce(a)?),
        Command::Recommend(a) => (None, run_recommend(a)?),
        Command::Audit(a) => (None, audit::run(a)?),
        Command::Simulate(a) => (None, simulate::run(a)?),
        Command::Generate(a) => simulate::generate(a)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": e.to_string() } })
            );
            return ExitCode::from(2);
        }
    }
    let (raw, report) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            return ExitCode::from(2);
        }
    };
    let text = match raw {
        Some(t) => Ok(t),
        None => report.render(cli.format),
    };
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = text.map(|t| stdout.write_all(t.as_bytes())) {
        eprintln!("{}", error_json(&e));
        return ExitCode::from(2);
    }
    if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", json!({ "failures": report.failures }));
        ExitCode::from(1)
    }
}
