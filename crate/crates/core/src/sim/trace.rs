//! Line-oriented event trace: `time_min,seq,kind,node,video,detail`.

use std::fmt;

pub const TRACE_HEADER: &str = "time_min,seq,kind,node,video,detail";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_min: f64,
    pub seq: u64,
    pub kind: &'static str,
    pub node: String,
    pub video: String,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // detail is free text; commas would break the column count
        write!(
            f,
            "{:.6},{},{},{},{},{}",
            self.time_min,
            self.seq,
            self.kind,
            self.node,
            self.video,
            self.detail.replace(',', ";")
        )
    }
}

pub fn render(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Splits a rendered trace line back into its six fields.
pub fn parse_line(line: &str) -> Option<(f64, u64, &str, &str, &str, &str)> {
    let mut it = line.splitn(6, ',');
    let t = it.next()?.parse().ok()?;
    let seq = it.next()?.parse().ok()?;
    Some((t, seq, it.next()?, it.next()?, it.next()?, it.next()?))
}
