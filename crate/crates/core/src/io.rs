//! CSV and JSON output with fixed float formatting.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::trajectory::Trajectory;

/// Version tag written as the first line of every CSV file.
pub const CSV_SCHEMA: &str = "# schema=1";

/// 17 significant digits in scientific notation; enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Wraps a formatter so that every float is written with [`fmt_f64`]; serde_json
/// already writes non-finite floats as `null`.
struct FixedFloats<F>(F);

impl<F: Formatter> Formatter for FixedFloats<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// Single-line variant for messages on stderr.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(CompactFormatter));
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    std::fs::write(path, to_json(value))
}

/// A table with the schema line, a header row and float rows.
pub fn csv_string(
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<String> {
    let mut buf = Vec::new();
    writeln!(buf, "{CSV_SCHEMA}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv writes UTF-8"))
}

/// One row per solution node; impulse nodes get a second row for the right limit.
/// Columns: `t`, `side` (`left` or `right`), `c1..cN`.
pub fn trajectory_csv(x: &Trajectory) -> io::Result<String> {
    let mut header = vec!["t".to_string(), "side".to_string()];
    header.extend((1..=x.dim()).map(|n| format!("c{n}")));
    let mut rows = Vec::with_capacity(x.steps() + 1);
    let row = |t: f64, side: &str, v: &[f64]| {
        let mut r = vec![fmt_f64(t), side.to_string()];
        r.extend(v.iter().map(|&c| fmt_f64(c)));
        r
    };
    for i in 0..=x.steps() {
        rows.push(row(x.time(i), "left", x.value(i)));
        if let Some(r) = x.jump_at(i) {
            rows.push(row(x.time(i), "right", r));
        }
    }
    csv_string(&header, rows)
}

/// Reads back a CSV written by [`csv_string`], checking the schema line.
pub fn read_csv(src: &str) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let body = src
        .strip_prefix(CSV_SCHEMA)
        .and_then(|b| b.strip_prefix('\n'))
        .ok_or_else(|| format!("missing '{CSV_SCHEMA}' line"))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::WeightedHistory;
    use proptest::prelude::*;

    #[test]
    fn json_floats_have_seventeen_digits() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            c: Option<f64>,
        }
        let s = to_json(&S {
            a: 0.1,
            b: vec![1.0, f64::NAN],
            c: None,
        });
        assert!(s.contains("\"a\": 1.0000000000000001e-1"), "{s}");
        assert!(s.contains("1.0000000000000000e0"));
        assert!(s.contains("null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
        let line = to_json_line(&S {
            a: 2.0,
            b: vec![],
            c: Some(1.5),
        });
        assert!(!line.contains('\n'));
    }

    #[test]
    fn trajectory_csv_has_schema_and_right_limits() {
        let h = WeightedHistory::from_fn(0.5, -1.0, 2, |s| vec![s, 1.0]).unwrap();
        let mut x = Trajectory::from_history(&h, 2);
        x.set_jump(1, Some(vec![3.0, 4.0]));
        let src = trajectory_csv(&x).unwrap();
        let (header, rows) = read_csv(&src).unwrap();
        assert_eq!(header, ["t", "side", "c1", "c2"]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2][1], "right");
        assert_eq!(rows[2][2].parse::<f64>().unwrap(), 3.0);
        assert!(read_csv("t,side\n").is_err());
    }

    proptest! {
        #[test]
        fn float_text_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
