//! NDJSON output records and reports.

use std::io::{self, Write};

use cer_core::{ComplexEvent, DataTuple, Position};
use serde::ser::{Serialize, SerializeMap, Serializer};

/// A tuple echoed back as `{"type": ..., attributes...}`.
pub struct Echo<'a>(pub &'a DataTuple);

impl Serialize for Echo<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("type", &*self.0.event_type)?;
        for (k, v) in self.0.attributes() {
            m.serialize_entry(k, v)?;
        }
        if self.0.time != self.0.position as u64 {
            m.serialize_entry("time", &self.0.time)?;
        }
        m.end()
    }
}

#[derive(serde::Serialize)]
pub struct Record<'a> {
    pub end: Position,
    pub start: Position,
    pub positions: &'a [Position],
    pub events: Vec<Echo<'a>>,
}

impl<'a> Record<'a> {
    pub fn new(c: &'a ComplexEvent, stream: &'a [DataTuple]) -> Self {
        Record {
            end: c.end,
            start: c.start,
            positions: &c.data,
            events: c.data.iter().map(|&p| Echo(&stream[p])).collect(),
        }
    }
}

pub fn write_record(w: &mut impl Write, c: &ComplexEvent, stream: &[DataTuple]) -> io::Result<()> {
    serde_json::to_writer(&mut *w, &Record::new(c, stream))?;
    w.write_all(b"\n")
}
