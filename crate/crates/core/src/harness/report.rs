//! Report aggregation and canonical serialisation.
//!
//! JSON output has sorted keys, writes every float as `{:.16e}` (17
//! significant digits) and carries a `"schema": 1` field. Nothing depends on
//! wall-clock time, so identical configurations give identical bytes.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use super::HarnessError;

pub const SCHEMA_VERSION: u64 = 1;

/// Mean and population standard deviation over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        if xs.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

struct FixedFloats;

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialises `body` under a `"schema"` envelope with sorted keys.
pub fn to_canonical_json<T: Serialize>(kind: &str, body: &T) -> Result<String, HarnessError> {
    let mut v = serde_json::to_value(body)?;
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), Value::from(SCHEMA_VERSION));
        map.insert("report".into(), Value::from(kind));
    }
    // serde_json's default map is a BTreeMap, so keys come out sorted
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats);
    v.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// One `(level, metric, mean, std)` row for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub level: f64,
    pub metric: String,
    pub stat: Stat,
}

pub fn to_csv(rows: &[CsvRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| HarnessError::Io { path: "<csv buffer>".into(), source: io::Error::other(e) };
    w.write_record(["level", "metric", "mean", "std"]).map_err(io_err)?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.level),
            r.metric.clone(),
            format!("{:.16e}", r.stat.mean),
            format!("{:.16e}", r.stat.std),
        ])
        .map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io { path: "<csv buffer>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_is_population_std() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s, Stat { mean: 2.0, std: 1.0 });
        assert_eq!(Stat::of(&[5.0]).std, 0.0);
        assert!(Stat::of(&[]).mean.is_nan());
    }

    #[test]
    fn json_is_sorted_and_fixed_width() {
        #[derive(Serialize)]
        struct B {
            zeta: f64,
            alpha: u32,
        }
        let s = to_canonical_json("demo", &B { zeta: 0.1, alpha: 3 }).unwrap();
        assert_eq!(s, "{\"alpha\":3,\"report\":\"demo\",\"schema\":1,\"zeta\":1.0000000000000001e-1}\n");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["zeta"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_columns() {
        let s = to_csv(&[CsvRow { level: 0.5, metric: "actual".into(), stat: Stat { mean: 1.0, std: 0.0 } }]).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("level,metric,mean,std"));
        assert!(lines.next().unwrap().starts_with("5.0000000000000000e-1,actual,"));
    }
}
