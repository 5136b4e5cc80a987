//! Reading streams from CSV or NDJSON.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use cer_core::ceql::AttrType;
use cer_core::{DataTuple, Schema, Time, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Ndjson,
}

impl Format {
    /// Guesses from the file extension; stdin and unknown extensions are CSV.
    pub fn detect(path: Option<&Path>) -> Format {
        match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("ndjson" | "jsonl" | "json") => Format::Ndjson,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug)]
pub struct InputError {
    /// 1-based line in the input, header included.
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn at(line: usize, message: impl Into<String>) -> InputError {
    InputError {
        line: Some(line),
        message: message.into(),
    }
}

/// Opens `path`, or stdin for `None` and `-`.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Read>, InputError> {
    match path {
        None => Ok(Box::new(io::stdin().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdin().lock())),
        Some(p) => File::open(p)
            .map(|f| Box::new(f) as Box<dyn Read>)
            .map_err(|e| InputError {
                line: None,
                message: format!("{}: {e}", p.display()),
            }),
    }
}

/// Reads every tuple, assigning dense positions. A `time` field sets the
/// tuple's clock; otherwise the clock is the position. Decreasing times
/// are rejected.
pub fn read_stream(reader: impl Read, format: Format, schema: Option<&Schema>) -> Result<Vec<DataTuple>, InputError> {
    let tuples = match format {
        Format::Csv => read_csv(reader, schema)?,
        Format::Ndjson => read_ndjson(reader, schema)?,
    };
    Ok(tuples)
}

struct Clock {
    last: Option<Time>,
}

impl Clock {
    fn check(&mut self, line: usize, t: &DataTuple) -> Result<(), InputError> {
        if let Some(prev) = self.last {
            if t.time < prev {
                return Err(at(
                    line,
                    format!("time {} is earlier than the previous time {prev}", t.time),
                ));
            }
        }
        self.last = Some(t.time);
        Ok(())
    }
}

fn parse_time(line: usize, raw: &str) -> Result<Time, InputError> {
    raw.trim()
        .parse()
        .map_err(|_| at(line, format!("time `{raw}` is not a non-negative integer")))
}

/// Schema-free typing: int, then double, then bool, else string.
fn infer(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.is_empty() {
        Value::Null
    } else if let Ok(i) = raw.parse::<i64>() {
        Value::Int(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        Value::Bool(b)
    } else {
        Value::text(raw)
    }
}

fn read_csv(reader: impl Read, schema: Option<&Schema>) -> Result<Vec<DataTuple>, InputError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| at(1, e.to_string()))?.clone();
    let type_col = header
        .iter()
        .position(|h| h == "type")
        .ok_or_else(|| at(1, "missing required column `type`"))?;
    let time_col = header.iter().position(|h| h == "time");
    let mut out = Vec::new();
    let mut clock = Clock { last: None };
    let mut record = csv::StringRecord::new();
    loop {
        let line = out.len() + 2;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(at(line, e.to_string())),
        }
        let ty = &record[type_col];
        let mut t = DataTuple::new(ty, out.len());
        let declared = match schema {
            Some(s) => Some(
                s.attributes(ty)
                    .ok_or_else(|| at(line, format!("undeclared event type `{ty}`")))?,
            ),
            None => None,
        };
        for (i, (name, raw)) in header.iter().zip(record.iter()).enumerate() {
            if i == type_col {
                continue;
            }
            if Some(i) == time_col {
                t.time = parse_time(line, raw)?;
                continue;
            }
            let value = match declared {
                None => infer(raw),
                Some(attrs) => match attrs.iter().find(|(a, _)| a == name) {
                    Some((_, ty)) => ty.read(raw).map_err(|m| at(line, format!("column `{name}`: {m}")))?,
                    None if raw.is_empty() => Value::Null,
                    None => return Err(at(line, format!("`{ty}` does not declare column `{name}`"))),
                },
            };
            if !value.is_null() {
                t.set(name, value);
            }
        }
        clock.check(line, &t)?;
        out.push(t);
    }
    Ok(out)
}

fn json_value(line: usize, name: &str, v: &serde_json::Value, ty: Option<AttrType>) -> Result<Value, InputError> {
    let value = match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match (n.as_i64(), ty) {
            (Some(i), Some(AttrType::Double)) => Value::Float(i as f64),
            (Some(i), _) => Value::Int(i),
            (None, _) => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => match ty {
            Some(ty) if ty != AttrType::String => ty.read(s).map_err(|m| at(line, format!("field `{name}`: {m}")))?,
            _ => Value::text(s),
        },
        _ => return Err(at(line, format!("field `{name}` must be a scalar"))),
    };
    Ok(value)
}

fn read_ndjson(reader: impl Read, schema: Option<&Schema>) -> Result<Vec<DataTuple>, InputError> {
    let mut out = Vec::new();
    let mut clock = Clock { last: None };
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| at(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&line).map_err(|e| at(line_no, e.to_string()))?;
        let ty = obj
            .get("type")
            .and_then(|v| v.as_str())
            .ok_or_else(|| at(line_no, "missing string field `type`"))?;
        let mut t = DataTuple::new(ty, out.len());
        for (name, v) in &obj {
            match name.as_str() {
                "type" => continue,
                "time" => {
                    t.time = v
                        .as_u64()
                        .ok_or_else(|| at(line_no, "`time` must be a non-negative integer"))?;
                    continue;
                }
                _ => {}
            }
            let declared = schema.and_then(|s| s.attr_type(ty, name));
            let value = json_value(line_no, name, v, declared)?;
            if !value.is_null() {
                t.set(name, value);
            }
        }
        if let Some(s) = schema {
            s.validate_tuple(&t).map_err(|m| at(line_no, m))?;
        }
        clock.check(line_no, &t)?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cer_core::fixtures::{stock_csv, STOCK_SCHEMA};

    fn schema() -> Schema {
        Schema::parse(STOCK_SCHEMA).unwrap()
    }

    #[test]
    fn csv_with_schema() {
        let s = read_stream(stock_csv().as_bytes(), Format::Csv, Some(&schema())).unwrap();
        assert_eq!(s, cer_core::fixtures::stock_stream());
    }

    #[test]
    fn csv_without_schema_infers() {
        let s = read_stream("type,a,b\nX,1,2.5\nY,no,\n".as_bytes(), Format::Csv, None).unwrap();
        assert_eq!(*s[0].get("a"), Value::Int(1));
        assert_eq!(*s[0].get("b"), Value::Float(2.5));
        assert_eq!(*s[1].get("a"), Value::text("no"));
        assert!(s[1].get("b").is_null());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = "type,name,price\nSELL,MSFT,10\nSELL,MSFT,ten\n";
        let err = read_stream(bad.as_bytes(), Format::Csv, Some(&schema())).unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = read_stream("name\nx\n".as_bytes(), Format::Csv, None).unwrap_err();
        assert_eq!(err.line, Some(1));
        let err = read_stream("type,time\nA,5\nA,4\n".as_bytes(), Format::Csv, None).unwrap_err();
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn ndjson_matches_csv() {
        let text: String = cer_core::fixtures::STOCK_ROWS
            .iter()
            .map(|(ty, name, price)| format!("{{\"type\":\"{ty}\",\"name\":\"{name}\",\"price\":{price}}}\n"))
            .collect();
        let a = read_stream(text.as_bytes(), Format::Ndjson, Some(&schema())).unwrap();
        let b = read_stream(stock_csv().as_bytes(), Format::Csv, Some(&schema())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn detects_format() {
        assert_eq!(Format::detect(Some(Path::new("a.ndjson"))), Format::Ndjson);
        assert_eq!(Format::detect(Some(Path::new("a.csv"))), Format::Csv);
        assert_eq!(Format::detect(None), Format::Csv);
    }
}
