//! Regenerates the published tables from `fixtures/published_tables.toml` and
//! compares every cell against its declared tolerance.

use serde::{Deserialize, Serialize};

use crate::accuracy_bounds::{
    max_database_size, near_collision_probability_fmr, outsider_trials_fmr_uniform,
};
use crate::adaptive::cdf_ratio;
use crate::error::{Error, Result};
use crate::metric_bounds::{
    insider_bounds, outsider_bounds, robustness_thresholds, security_scores, BoundForm,
    RobustnessQuery, SystemParams,
};

pub const FIXTURES: &str = include_str!("../fixtures/published_tables.toml");

#[derive(Debug, Deserialize)]
struct Fixtures {
    table1: Table1,
    table2: Table2,
    table3: Table3,
    scores: Scores,
}

#[derive(Debug, Deserialize)]
struct Table1 {
    lambda: f64,
    small_trials_tolerance: f64,
    rows: Vec<Table1Row>,
}

#[derive(Debug, Deserialize)]
struct Table1Row {
    system: String,
    fmr: f64,
    users: u64,
    trials: [f64; 2],
    nc_percent: Option<f64>,
    max_users: u64,
}

#[derive(Debug, Deserialize)]
struct Table2 {
    tolerance: f64,
    columns: Vec<Table2Column>,
}

#[derive(Debug, Deserialize)]
struct Table2Column {
    n: u32,
    users: u64,
    eps: u32,
    outsider: [f64; 2],
    insider: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct Table3 {
    tolerance: f64,
    columns: Vec<Table3Column>,
}

#[derive(Debug, Deserialize)]
struct Table3Column {
    n: u32,
    eps: u32,
    users: u64,
    a: u64,
    kappa_log2: u32,
    ratio: f64,
}

#[derive(Debug, Deserialize)]
struct Scores {
    s1_tolerance: f64,
    s1: Vec<S1Entry>,
    s2_s3: S23Entry,
    max_eps: MaxEps,
    min_n: MinN,
    max_users: MaxUsers,
}

#[derive(Debug, Deserialize)]
struct S1Entry {
    n: u32,
    users: u64,
    eps: u32,
    expected: f64,
}

#[derive(Debug, Deserialize)]
struct S23Entry {
    n: u32,
    users: u64,
    eps: u32,
    s2: i64,
    s3: i64,
}

#[derive(Debug, Deserialize)]
struct MaxEps {
    n: u32,
    users: u64,
    expected: u64,
}

#[derive(Debug, Deserialize)]
struct MinN {
    eps: u32,
    users: u64,
    expected: u64,
}

#[derive(Debug, Deserialize)]
struct MaxUsers {
    n: u32,
    eps: u32,
    expected: u64,
}

fn fixtures() -> Result<Fixtures> {
    toml::from_str(FIXTURES).map_err(|e| Error::Invariant(format!("fixtures file: {e}")))
}

/// One compared cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub id: String,
    pub expected: f64,
    /// the value after the table's rounding convention
    pub computed: f64,
    /// the value before rounding
    pub raw: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Cell {
    fn new(id: String, expected: f64, computed: f64, raw: f64, tolerance: f64) -> Cell {
        let pass = (computed - expected).abs() <= tolerance + 1e-12;
        Cell {
            id,
            expected,
            computed,
            raw,
            tolerance,
            pass,
            note: None,
        }
    }

    fn with_note(mut self, note: String) -> Cell {
        self.note = Some(note);
        self
    }

    pub fn diff(&self) -> f64 {
        self.computed - self.expected
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reproduction {
    pub table: String,
    pub cells: Vec<Cell>,
    pub pass: bool,
}

impl Reproduction {
    fn new(table: &str, cells: Vec<Cell>) -> Reproduction {
        let pass = cells.iter().all(|c| c.pass);
        Reproduction {
            table: table.into(),
            cells,
            pass,
        }
    }

    pub fn failures(&self) -> Vec<&Cell> {
        self.cells.iter().filter(|c| !c.pass).collect()
    }
}

fn truncate(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s + 1e-9).floor() / s
}

/// Table 1: FMR-driven trial bounds, near-collision percentage, maximal N.
pub fn table1() -> Result<Reproduction> {
    let f = fixtures()?.table1;
    let mut cells = Vec::new();
    for row in &f.rows {
        let t = outsider_trials_fmr_uniform(row.fmr, row.users)?
            .finite()
            .ok_or_else(|| Error::Invariant("zero FMR in fixtures".into()))?;
        let (lo, hi) = t.bound.clipped();
        for (which, raw, expected) in [("lower", lo, row.trials[0]), ("upper", hi, row.trials[1])] {
            let (computed, tol) = if expected >= 10.0 || raw >= 10.0 {
                (raw.floor(), 0.0)
            } else {
                (raw, f.small_trials_tolerance)
            };
            cells.push(Cell::new(
                format!("{} trials {which}", row.system),
                expected,
                computed,
                raw,
                tol,
            ));
        }
        if let Some(expected) = row.nc_percent {
            let raw = 100.0 * near_collision_probability_fmr(row.fmr, row.users)?.to_f64();
            cells.push(Cell::new(
                format!("{} near-collision %", row.system),
                expected,
                truncate(raw, 3),
                raw,
                0.0,
            ));
        }
        let m = max_database_size(row.fmr, f.lambda)?
            .finite()
            .unwrap_or(u64::MAX) as f64;
        cells.push(Cell::new(
            format!("{} max N", row.system),
            row.max_users as f64,
            m,
            m,
            0.0,
        ));
    }
    Ok(Reproduction::new("table1", cells))
}

/// Table 2: asymptotic outsider and insider bounds.
pub fn table2() -> Result<Reproduction> {
    let f = fixtures()?.table2;
    let mut cells = Vec::new();
    for c in &f.columns {
        let p = SystemParams::new(c.n, c.users, c.eps)?;
        let out = outsider_bounds(&p, BoundForm::Asymptotic)?.bound;
        let ins = insider_bounds(&p, BoundForm::Asymptotic)?.bound;
        let tag = format!("n={} N={} eps={}", c.n, c.users, c.eps);
        let (or, ir) = (out.rounded(), ins.rounded());
        let entries = [
            ("outsider lower", c.outsider[0], or.0, out.lower_log2),
            ("outsider upper", c.outsider[1], or.1, out.upper_log2),
            ("insider lower", c.insider[0], ir.0, ins.lower_log2),
            ("insider upper", c.insider[1], ir.1, ins.upper_log2),
        ];
        for (what, expected, computed, raw) in entries {
            cells.push(Cell::new(
                format!("{tag} {what}"),
                expected,
                computed,
                raw,
                f.tolerance,
            ));
        }
    }
    Ok(Reproduction::new("table2", cells))
}

/// Table 3: adaptive versus naive CDF ratios.
pub fn table3() -> Result<Reproduction> {
    let f = fixtures()?.table3;
    let mut cells = Vec::new();
    for c in &f.columns {
        let p = SystemParams::new(c.n, c.users, c.eps)?;
        let r = cdf_ratio(&p, 1u128 << c.kappa_log2, c.a)?;
        let id = format!(
            "n={} eps={} N={} a={} kappa=2^{}",
            c.n, c.eps, c.users, c.a, c.kappa_log2
        );
        let rounded = (r.displayed_ratio * 1e4).round() / 1e4;
        let note = format!(
            "cumulative-PMF ratio {:.6}, inverse {:.6}",
            r.ratio, r.displayed_ratio_inverse
        );
        cells.push(Cell::new(id, c.ratio, rounded, r.displayed_ratio, f.tolerance).with_note(note));
    }
    Ok(Reproduction::new("table3", cells))
}

/// S1/S2/S3 values and the robustness thresholds.
pub fn scores() -> Result<Reproduction> {
    let f = fixtures()?.scores;
    let mut cells = Vec::new();
    for e in &f.s1 {
        let s = security_scores(&SystemParams::new(e.n, e.users, e.eps)?)?;
        cells.push(Cell::new(
            format!("S1 n={} N={} eps={}", e.n, e.users, e.eps),
            e.expected,
            s.s1,
            s.s1,
            f.s1_tolerance,
        ));
    }
    let e = &f.s2_s3;
    let s = security_scores(&SystemParams::new(e.n, e.users, e.eps)?)?;
    let tag = format!("n={} N={} eps={}", e.n, e.users, e.eps);
    cells.push(Cell::new(
        format!("S2 {tag}"),
        e.s2 as f64,
        s.s2_table as f64,
        s.s2,
        0.0,
    ));
    let s3 = s.s3_table.map_or(f64::NAN, |v| v as f64);
    cells.push(Cell::new(
        format!("S3 {tag}"),
        e.s3 as f64,
        s3,
        s.s3.unwrap_or(f64::NAN),
        0.0,
    ));
    let queries = [
        (
            format!("max eps n={} N={}", f.max_eps.n, f.max_eps.users),
            RobustnessQuery::MaxEpsilon {
                n: f.max_eps.n,
                users: f.max_eps.users,
            },
            f.max_eps.expected,
        ),
        (
            format!("min n eps={} N={}", f.min_n.eps, f.min_n.users),
            RobustnessQuery::MinDimension {
                eps: f.min_n.eps,
                users: f.min_n.users,
            },
            f.min_n.expected,
        ),
        (
            format!("max N n={} eps={}", f.max_users.n, f.max_users.eps),
            RobustnessQuery::MaxUsers {
                n: f.max_users.n,
                eps: f.max_users.eps,
            },
            f.max_users.expected,
        ),
    ];
    for (id, q, expected) in queries {
        let t = robustness_thresholds(q)?;
        let v = t.value.map_or(f64::NAN, |v| v as f64);
        cells.push(Cell::new(id, expected as f64, v, v, 0.0));
    }
    Ok(Reproduction::new("scores", cells))
}

/// Every table by name: `table1`, `table2`, `table3` or `scores`.
pub fn reproduce(name: &str) -> Result<Reproduction> {
    match name {
        "table1" => table1(),
        "table2" => table2(),
        "table3" => table3(),
        "scores" => scores(),
        _ => Err(Error::Domain(format!(
            "unknown table {name:?} (table1 | table2 | table3 | scores)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse() {
        let f = fixtures().unwrap();
        assert_eq!(f.table1.rows.len(), 10);
        assert_eq!(f.table2.columns.len(), 24);
        assert_eq!(f.table3.columns.len(), 10);
    }

    #[test]
    fn unknown_table() {
        assert!(reproduce("table9").is_err());
    }
}
