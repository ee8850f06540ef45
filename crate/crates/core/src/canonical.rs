//! Byte-stable JSON output.
//!
//! Object keys are sorted (numeric keys numerically, others
//! lexicographically), floats are printed with six decimals and integers
//! verbatim. There is no insignificant whitespace.

use std::cmp::Ordering;
use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v);
    Ok(out)
}

pub fn value_to_canonical_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

/// Rounds to the six-decimal grid used by the canonical form, so values
/// survive a write/parse cycle bit-for-bit.
pub fn quantize(x: f64) -> f64 {
    let q = (x * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn key_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                let f = n.as_f64().unwrap_or(0.0);
                let s = format!("{:.6}", f);
                // "-0.000000" and "0.000000" denote the same value
                if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                    out.push_str("0.000000");
                } else {
                    out.push_str(&s);
                }
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| key_order(a, b));
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_value(out, &map[k]);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys_and_fixes_floats() {
        let v = json!({"b": 1.5, "a": [1, -0.0000001, "x"], "10": true, "2": null});
        assert_eq!(
            value_to_canonical_string(&v),
            r#"{"2":null,"10":true,"a":[1,0.000000,"x"],"b":1.500000}"#
        );
    }

    #[test]
    fn quantized_values_round_trip() {
        for x in [0.1234565, -3.3333333, 1e-7, 12345.6789012] {
            let q = quantize(x);
            let text = value_to_canonical_string(&json!(q));
            let back: f64 = text.parse().unwrap();
            assert_eq!(back, q);
        }
    }
}
