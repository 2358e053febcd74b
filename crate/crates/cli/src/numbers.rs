//! Numeric arguments in plain, scientific (`1e8`, `2.5e3`) or power (`10^8`,
//! `2^47`, `10^-6`) notation. Integer forms are parsed exactly.

fn clean(s: &str) -> String {
    s.trim().replace('_', "")
}

/// Exact nonnegative integer.
pub fn parse_u128(s: &str) -> Result<u128, String> {
    let s = clean(s);
    if let Some((base, exp)) = s.split_once('^') {
        let base: u128 = base.parse().map_err(|_| format!("bad base in {s:?}"))?;
        let exp: u32 = exp
            .parse()
            .map_err(|_| format!("exponent in {s:?} must be a nonnegative integer"))?;
        return base
            .checked_pow(exp)
            .ok_or_else(|| format!("{s} overflows 128 bits"));
    }
    if let Some((mant, exp)) = s.split_once(['e', 'E']) {
        let exp: i64 = exp.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
        let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
        let digits = format!("{int}{}", frac.trim_end_matches('0'));
        let scale = exp - frac.trim_end_matches('0').len() as i64;
        if scale < 0 {
            return Err(format!("{s} is not an integer"));
        }
        let m: u128 = digits
            .parse()
            .map_err(|_| format!("bad mantissa in {s:?}"))?;
        return 10u128
            .checked_pow(scale as u32)
            .and_then(|p| m.checked_mul(p))
            .ok_or_else(|| format!("{s} overflows 128 bits"));
    }
    s.parse()
        .map_err(|_| format!("{s:?} is not a nonnegative integer"))
}

pub fn parse_u64(s: &str) -> Result<u64, String> {
    parse_u128(s)?
        .try_into()
        .map_err(|_| format!("{s} does not fit in 64 bits"))
}

pub fn parse_u32(s: &str) -> Result<u32, String> {
    parse_u128(s)?
        .try_into()
        .map_err(|_| format!("{s} does not fit in 32 bits"))
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    let s = clean(s);
    let v = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.parse().map_err(|_| format!("bad base in {s:?}"))?;
            let exp: f64 = exp.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
            base.powf(exp)
        }
        None => s.parse().map_err(|_| format!("{s:?} is not a number"))?,
    };
    if !v.is_finite() {
        return Err(format!("{s} is not finite"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notations() {
        assert_eq!(parse_u128("2^47").unwrap(), 1 << 47);
        assert_eq!(parse_u64("1e8").unwrap(), 100_000_000);
        assert_eq!(parse_u64("10^8").unwrap(), 100_000_000);
        assert_eq!(parse_u64("2.5e3").unwrap(), 2500);
        assert_eq!(parse_u64("10_000").unwrap(), 10_000);
        assert!(parse_u64("1.5e0").is_err());
        assert!(parse_u64("2^64").is_err());
        assert_eq!(parse_f64("10^-6").unwrap(), 1e-6);
        assert_eq!(parse_f64("1e-6").unwrap(), 1e-6);
        assert!(parse_f64("inf").is_err());
    }
}
