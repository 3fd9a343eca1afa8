use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Significant digits kept for every float in serialized reports.
pub const REPORT_DIGITS: usize = 6;

pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_significant(x, REPORT_DIGITS)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to [`REPORT_DIGITS`] significant digits.
/// Non-finite floats serialize as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Serialization(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(1.23456789, 6), 1.23457);
        assert_eq!(round_significant(-0.000123456789, 6), -0.000123457);
        assert_eq!(round_significant(123456789.0, 6), 123457000.0);
        assert_eq!(round_significant(0.0, 6), 0.0);
    }

    #[test]
    fn nested_values_are_rounded() {
        #[derive(Serialize)]
        struct T {
            a: f64,
            b: Vec<f64>,
            c: u64,
        }
        let s = to_json(&T {
            a: 1.0 / 3.0,
            b: vec![2.0 / 3.0],
            c: u64::MAX,
        })
        .unwrap();
        assert!(s.contains("0.333333") && !s.contains("0.3333333"));
        assert!(s.contains("0.666667"));
        assert!(s.contains(&u64::MAX.to_string()));
    }
}
