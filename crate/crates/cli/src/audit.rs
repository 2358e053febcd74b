use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use hamsec::ball_solver::{
    enumerate_intersection, intersection_cardinality, TemplateDatabase, DEFAULT_BUDGET,
};
use hamsec::combinatorics::ball_count;
use hamsec::io::{parse_database, template_hex};
use hamsec::simulate::{brute_force_weak_nc, find_clique, CLIQUE_BUDGET};
use num_bigint::BigUint;
use serde_json::{json, Value};

use crate::numbers::{parse_u32, parse_u64};
use crate::output::{Report, Table};

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Template database file
    pub file: PathBuf,
    /// Matching radius in bits
    #[arg(long, value_parser = parse_u32)]
    pub eps: u32,
    /// Largest clique size searched
    #[arg(long, default_value_t = 5)]
    pub max_clique: usize,
    /// Node budget for the intersection solver
    #[arg(long, value_parser = parse_u64, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Enumerate master templates when at most this many exist
    #[arg(long, value_parser = parse_u64, default_value_t = 64)]
    pub list_limit: u64,
    /// Treat any near-collision as a failed check
    #[arg(long)]
    pub strict: bool,
}

/// Intersection of the balls around `members`, listed when small enough.
/// Budget overruns are reported in place.
fn intersection(
    db: &TemplateDatabase,
    members: &[usize],
    eps: u32,
    budget: u64,
    limit: u64,
) -> Value {
    let sub = TemplateDatabase::new(
        db.n,
        members.iter().map(|&i| db.templates[i].clone()).collect(),
    )
    .expect("subset of a valid database");
    match intersection_cardinality(&sub, eps, budget) {
        Ok(c) => {
            let listed = (c <= BigUint::from(limit) && c > BigUint::from(0u8))
                .then(|| enumerate_intersection(&sub, eps, budget))
                .transpose();
            match listed {
                Ok(l) => json!({
                    "cardinality": c.to_string(),
                    "master_templates": l.map(|ts| ts.iter().map(template_hex).collect::<Vec<_>>()),
                }),
                Err(e) => {
                    json!({ "cardinality": c.to_string(), "error": { "kind": e.kind(), "message": e.to_string() } })
                }
            }
        }
        Err(e) => {
            json!({ "cardinality": null, "error": { "kind": e.kind(), "message": e.to_string() } })
        }
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

pub fn run(args: &AuditArgs) -> anyhow::Result<Report> {
    let text = std::fs::read_to_string(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let db = parse_database(&text)?;
    let eps = args.eps;
    if eps > db.n {
        return Err(hamsec::Error::Domain(format!("epsilon {eps} exceeds n = {}", db.n)).into());
    }
    let ball = ball_count(db.n, eps)?;
    let scan = brute_force_weak_nc(&db, eps);

    // Strong near-collisions: for each template its nearest neighbour within eps.
    let mut nearest: Vec<Option<(usize, u32)>> = vec![None; db.len()];
    for &(i, j, d) in &scan.pairs {
        for (a, b) in [(i, j), (j, i)] {
            if nearest[a].is_none_or(|(_, e)| d < e) {
                nearest[a] = Some((b, d));
            }
        }
    }
    let strong: Vec<Value> = nearest
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.map(|(j, d)| json!({ "template": i, "nearest": j, "distance": d })))
        .collect();

    let mut parent: Vec<usize> = (0..db.len()).collect();
    for &(i, j, _) in &scan.pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a.max(b)] = a.min(b);
    }
    let mut clusters: Vec<Vec<usize>> = vec![];
    let mut slot = vec![usize::MAX; db.len()];
    for i in 0..db.len() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = clusters.len();
            clusters.push(vec![]);
        }
        clusters[slot[r]].push(i);
    }
    clusters.retain(|c| c.len() > 1);

    let mut cliques = vec![];
    if !scan.pairs.is_empty() {
        for m in 3..=args.max_clique {
            match find_clique(&db, eps, m, CLIQUE_BUDGET)? {
                Some(c) => cliques.push(json!({ "size": m, "members": c })),
                None => break,
            }
        }
    }

    let cluster_info: Vec<Value> = clusters
        .iter()
        .map(|c| {
            let mut v = intersection(&db, c, eps, args.budget, args.list_limit);
            v["members"] = json!(c);
            v
        })
        .collect();
    let all: Vec<usize> = (0..db.len()).collect();
    let whole = intersection(&db, &all, eps, args.budget, args.list_limit);

    let findings = !scan.pairs.is_empty();
    let pairs: Vec<Value> = scan
        .pairs
        .iter()
        .map(|&(i, j, d)| json!({ "i": i, "j": j, "distance": d, "identical": d == 0 }))
        .collect();

    let mut summary = Table::new(Some("summary"), &["quantity", "value"]);
    summary.row(vec!["n".into(), db.n.to_string()]);
    summary.row(vec!["N".into(), db.len().to_string()]);
    summary.row(vec!["eps".into(), eps.to_string()]);
    summary.row(vec!["ball size".into(), ball.to_string()]);
    summary.row(vec![
        "weak near-collision pairs".into(),
        scan.pairs.len().to_string(),
    ]);
    summary.row(vec![
        "templates with a strong near-collision".into(),
        strong.len().to_string(),
    ]);
    summary.row(vec![
        "largest clique".into(),
        cliques.last().map_or("-".into(), |c| c["size"].to_string()),
    ]);
    summary.row(vec![
        "master templates for all users".into(),
        whole["cardinality"]
            .as_str()
            .map_or("budget exceeded".into(), String::from),
    ]);
    let mut pair_table = Table::new(Some("near-collisions"), &["i", "j", "distance"]);
    for &(i, j, d) in &scan.pairs {
        pair_table.row(vec![i.to_string(), j.to_string(), d.to_string()]);
    }
    let mut cluster_table = Table::new(
        Some("clusters"),
        &["members", "intersection", "master templates"],
    );
    for c in &cluster_info {
        cluster_table.row(vec![
            c["members"].to_string(),
            c["cardinality"]
                .as_str()
                .unwrap_or("budget exceeded")
                .into(),
            c["master_templates"].as_array().map_or("-".into(), |l| {
                l.iter()
                    .filter_map(Value::as_str)
                    .collect::<Vec<_>>()
                    .join(" ")
            }),
        ]);
    }

    let mut report = Report::new(json!({
        "command": "audit",
        "n": db.n,
        "N": db.len(),
        "eps": eps,
        "ball_size": ball.to_string(),
        "findings": findings,
        "weak_nc_pairs": pairs,
        "strong_nc": strong,
        "cliques": cliques,
        "clusters": cluster_info,
        "full_intersection": whole,
    }))
    .table(summary);
    if findings {
        report = report.table(pair_table).table(cluster_table);
        if args.strict {
            report
                .failures
                .push(json!({ "check": "no-near-collision", "pairs": scan.pairs.len() }));
        }
    }
    Ok(report)
}
