//! Number formatting for archival CSV output.

use std::io::Write;

use crate::error::{LabError, Result};

/// Decimal with 17 significant digits; round-trips every finite `f64`.
pub fn decimal17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// C99 `%a`-style hexadecimal float, e.g. `0x1.8p+1` for 3.
pub fn hexfloat(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{e:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{e:+}")
    }
}

/// Inverse of [`hexfloat`].
pub fn parse_hexfloat(s: &str) -> Result<f64> {
    let bad = || LabError::param(format!("malformed hexfloat '{s}'"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = match body {
        "inf" => f64::INFINITY,
        "nan" => f64::NAN,
        _ => {
            let body = body.strip_prefix("0x").ok_or_else(bad)?;
            let (m, e) = body.split_once('p').ok_or_else(bad)?;
            let e: i32 = e.parse().map_err(|_| bad())?;
            let (int, frac) = m.split_once('.').unwrap_or((m, ""));
            let lead = u64::from_str_radix(int, 16).map_err(|_| bad())?;
            if frac.len() > 13 || lead > 1 {
                return Err(bad());
            }
            let frac_bits = if frac.is_empty() {
                0
            } else {
                u64::from_str_radix(&format!("{frac:0<13}"), 16).map_err(|_| bad())?
            };
            if lead == 0 && frac_bits == 0 {
                0.0
            } else if lead == 0 {
                f64::from_bits(frac_bits)
            } else {
                let biased = (e + 1023) as u64;
                f64::from_bits((biased << 52) | frac_bits)
            }
        }
    };
    Ok(if neg { -v } else { v })
}

/// Write a CSV with a header and rows of floats (17-digit decimal).
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| decimal17(x)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Like [`write_csv`], optionally followed by a `<name>_hex` column per field.
pub fn write_csv_hex<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>], hex: bool) -> Result<()> {
    if !hex {
        return write_csv(w, header, rows);
    }
    let mut head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    head.extend(header.iter().map(|s| format!("{s}_hex")));
    writeln!(w, "{}", head.join(","))?;
    for row in rows {
        let mut cells: Vec<String> = row.iter().map(|&x| decimal17(x)).collect();
        cells.extend(row.iter().map(|&x| hexfloat(x)));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_hexfloats() {
        assert_eq!(hexfloat(3.0), "0x1.8p+1");
        assert_eq!(hexfloat(1.0), "0x1p+0");
        assert_eq!(hexfloat(-0.0), "-0x0p+0");
        assert_eq!(hexfloat(0.1), "0x1.999999999999ap-4");
        assert_eq!(hexfloat(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
    }

    proptest! {
        #[test]
        fn hexfloat_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(!x.is_nan());
            prop_assert_eq!(parse_hexfloat(&hexfloat(x)).unwrap().to_bits(), x.to_bits());
            if x.is_finite() {
                prop_assert_eq!(decimal17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
            }
        }
    }
}
