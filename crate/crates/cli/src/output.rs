//! One report per command: the JSON value is the data, markdown and CSV are
//! renderings of its tables.

use anyhow::Result;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Markdown,
    Csv,
}

pub struct Table {
    pub title: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: Option<&str>, headers: &[&str]) -> Table {
        Table {
            title: title.map(Into::into),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }
}

pub struct Report {
    pub value: Value,
    pub tables: Vec<Table>,
    /// Failed checks; any entry makes the exit code nonzero.
    pub failures: Vec<Value>,
}

impl Report {
    pub fn new(value: Value) -> Report {
        Report {
            value,
            tables: vec![],
            failures: vec![],
        }
    }

    pub fn table(mut self, t: Table) -> Report {
        self.tables.push(t);
        self
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.value)?;
                s.push('\n');
                s
            }
            Format::Markdown => self
                .tables
                .iter()
                .map(markdown)
                .collect::<Vec<_>>()
                .join("\n"),
            Format::Csv => {
                let mut parts = Vec::new();
                for t in &self.tables {
                    let mut w = csv::WriterBuilder::new().from_writer(vec![]);
                    w.write_record(&t.headers)?;
                    for r in &t.rows {
                        w.write_record(r)?;
                    }
                    parts.push(String::from_utf8(w.into_inner()?)?);
                }
                parts.join("\n")
            }
        })
    }
}

fn markdown(t: &Table) -> String {
    let mut out = String::new();
    if let Some(title) = &t.title {
        out.push_str(&format!("### {title}\n\n"));
    }
    let esc = |s: &String| s.replace('|', "\\|");
    out.push_str(&format!(
        "| {} |\n",
        t.headers.iter().map(esc).collect::<Vec<_>>().join(" | ")
    ));
    out.push_str(&format!("|{}\n", " --- |".repeat(t.headers.len())));
    for r in &t.rows {
        out.push_str(&format!(
            "| {} |\n",
            r.iter().map(esc).collect::<Vec<_>>().join(" | ")
        ));
    }
    out
}

/// Short human rendering of a float.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else if x == 0.0 || (1e-4..1e7).contains(&x.abs()) {
        let s = format!("{x:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{x:.6e}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or("-".into(), num)
}
