//! Template database files.
//!
//! ```text
//! n=<bits> N=<count>
//! <hex>        one template per line, ceil(n/8) bytes
//! ```
//!
//! The most significant bit of the first byte is coordinate 1; unused low bits
//! of the last byte must be zero. Blank lines and lines starting with `#` are
//! ignored.

use std::fmt::Write as _;

use crate::ball_solver::{Template, TemplateDatabase};
use crate::error::{Error, Result};

fn parse_err<T>(line: usize, offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        offset,
        msg: msg.into(),
    })
}

fn header_field(line: usize, text: &str, key: &str) -> Result<u64> {
    let Some(pos) = text.find(&format!("{key}=")) else {
        return parse_err(line, 0, format!("header is missing {key}="));
    };
    let start = pos + key.len() + 1;
    let digits: String = text[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits
        .parse()
        .or_else(|_| parse_err(line, start, format!("{key} is not a nonnegative integer")))
}

pub fn parse_database(text: &str) -> Result<TemplateDatabase> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((hl, header)) = lines.next() else {
        return parse_err(1, 0, "empty file");
    };
    let n = header_field(hl, header, "n")?;
    let users = header_field(hl, header, "N")?;
    if n == 0 || n > u32::MAX as u64 {
        return parse_err(hl, 0, "n must be a positive 32-bit integer");
    }
    let n = n as u32;
    let bytes = (n as usize).div_ceil(8);
    let mut templates = Vec::new();
    for (ln, raw) in lines {
        let lead = raw.len() - raw.trim_start().len();
        let hex = raw.trim();
        if hex.len() != 2 * bytes {
            return parse_err(
                ln,
                lead,
                format!("expected {} hex digits, found {}", 2 * bytes, hex.len()),
            );
        }
        let mut t = Template::zeros(n);
        for (b, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).unwrap_or("");
            let Ok(byte) = u8::from_str_radix(s, 16) else {
                return parse_err(ln, lead + 2 * b, format!("invalid hex byte {s:?}"));
            };
            for bit in 0..8u32 {
                let coord = 8 * b as u32 + bit;
                let on = byte >> (7 - bit) & 1 == 1;
                if coord >= n {
                    if on {
                        return parse_err(ln, lead + 2 * b, "padding bits must be zero");
                    }
                } else if on {
                    t.set(coord, true);
                }
            }
        }
        templates.push(t);
    }
    if templates.len() as u64 != users {
        return parse_err(
            hl,
            0,
            format!(
                "header declares N={users} but the file holds {} templates",
                templates.len()
            ),
        );
    }
    TemplateDatabase::new(n, templates)
}

pub fn template_hex(t: &Template) -> String {
    let n = t.len();
    let mut out = String::with_capacity(2 * (n as usize).div_ceil(8));
    for b in 0..n.div_ceil(8) {
        let mut byte = 0u8;
        for bit in 0..8u32 {
            let coord = 8 * b + bit;
            if coord < n && t.bit(coord) {
                byte |= 1 << (7 - bit);
            }
        }
        let _ = write!(out, "{byte:02x}");
    }
    out
}

pub fn write_database(db: &TemplateDatabase) -> String {
    let mut out = format!("n={} N={}\n", db.n, db.len());
    for t in &db.templates {
        out.push_str(&template_hex(t));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1u32, 7, 8, 13, 64, 65, 130] {
            let db = TemplateDatabase::random(n, 5, false, &mut rng).unwrap();
            assert_eq!(parse_database(&write_database(&db)).unwrap(), db);
        }
    }

    #[test]
    fn bit_order() {
        let db = parse_database("n=10 N=1\n8040\n").unwrap();
        let t = &db.templates[0];
        assert!(t.bit(0) && t.bit(9));
        assert_eq!((0..10).filter(|&i| t.bit(i)).count(), 2);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_database("n=10 N=1\n80c1\n") {
            Err(Error::Parse {
                line: 2, offset: 2, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        match parse_database("n=8 N=2\nzz\n00\n") {
            Err(Error::Parse {
                line: 2, offset: 0, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_database("n=8 N=3\n00\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_database("N=3\n"), Err(Error::Parse { .. })));
    }
}
