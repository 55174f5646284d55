//! Rendering of flat records in human, CSV and JSON form.

use std::io::{self, Write};

use serde_json::{Map, Value};

use crate::opts::Format;

pub type Record = Map<String, Value>;

/// Six significant digits, switching to exponent form outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn human_value(v: &Value) -> String {
    match v {
        Value::Null => "NA".into(),
        Value::Number(n) if n.is_f64() => sig6(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(human_value).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

fn csv_value(v: &Value) -> String {
    let s = match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(csv_value).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

pub fn write_records<W: Write>(out: &mut W, records: &[Record], format: Format) -> io::Result<()> {
    match format {
        Format::Human => {
            let width = records
                .iter()
                .flat_map(|r| r.keys())
                .map(String::len)
                .max()
                .unwrap_or(0);
            for (i, r) in records.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                for (k, v) in r {
                    writeln!(out, "{k:<width$}  {}", human_value(v))?;
                }
            }
        }
        Format::Csv => {
            let mut header: Vec<&String> = Vec::new();
            for r in records {
                for k in r.keys() {
                    if !header.contains(&k) {
                        header.push(k);
                    }
                }
            }
            let line: Vec<String> = header.iter().map(|k| csv_value(&Value::String((*k).clone()))).collect();
            writeln!(out, "{}", line.join(","))?;
            for r in records {
                let line: Vec<String> = header
                    .iter()
                    .map(|k| r.get(*k).map(csv_value).unwrap_or_default())
                    .collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        Format::Json => {
            let v = if records.len() == 1 {
                Value::Object(records[0].clone())
            } else {
                Value::Array(records.iter().cloned().map(Value::Object).collect())
            };
            serde_json::to_writer_pretty(&mut *out, &v)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.025317), "0.0253170");
        assert_eq!(sig6(2.236477), "2.23648");
        assert_eq!(sig6(97.0), "97.0000");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }
}
