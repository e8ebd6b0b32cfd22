//! Run accumulators, the finalized report, CSV rows and the summary table.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::routing::DecisionKind;

/// Served/rejected counts per decision kind, indexed like [`DecisionKind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceBreakdown(pub [u64; 6]);

impl SourceBreakdown {
    pub fn get(&self, kind: DecisionKind) -> u64 {
        self.0[kind.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Requests whose pref-1 came from inside their own LPSG.
    pub fn lpsg_hits(&self) -> u64 {
        DecisionKind::ALL.iter().filter(|k| k.is_lpsg_hit()).map(|&k| self.get(k)).sum()
    }
}

/// Running totals owned by the event loop.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    pub requests: u64,
    pub served: u64,
    pub rejected: u64,
    pub by_kind: SourceBreakdown,
    pub wait_ms_sum: f64,
    pub wan_minutes: f64,
    pub demanded_minutes: f64,
}

impl Accumulator {
    pub fn serve(&mut self, kind: DecisionKind, wait_ms: f64, duration_min: f64) {
        self.requests += 1;
        self.served += 1;
        self.by_kind.0[kind.index()] += 1;
        self.wait_ms_sum += wait_ms;
        self.demanded_minutes += duration_min;
    }

    pub fn reject(&mut self) {
        self.requests += 1;
        self.rejected += 1;
        self.by_kind.0[DecisionKind::Reject.index()] += 1;
    }

    /// A served request lost its stream and could not be restored.
    pub fn drop_served(&mut self, kind: DecisionKind, wait_ms: f64, duration_min: f64) {
        self.served -= 1;
        self.rejected += 1;
        self.by_kind.0[kind.index()] -= 1;
        self.by_kind.0[DecisionKind::Reject.index()] += 1;
        self.wait_ms_sum -= wait_ms;
        self.demanded_minutes -= duration_min;
    }

    pub fn add_wan(&mut self, minutes: f64) {
        self.wan_minutes += minutes;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub r: u64,
    pub q: u64,
    pub n_rej: u64,
    pub r_rej: f64,
    pub s_eff: f64,
    pub vhr: f64,
    pub wan_minutes: f64,
    pub wan_fraction: f64,
    /// Present only when a paired no-proxy run exists.
    pub server_load_reduction: Option<f64>,
    pub y_wait_ms: f64,
    pub source_breakdown: SourceBreakdown,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn finalize(acc: &Accumulator) -> MetricsReport {
    let r = acc.requests as f64;
    let q = acc.served as f64;
    MetricsReport {
        r: acc.requests,
        q: acc.served,
        n_rej: acc.rejected,
        r_rej: ratio(acc.rejected as f64, r),
        s_eff: ratio(q, r),
        vhr: ratio(acc.by_kind.lpsg_hits() as f64, q),
        wan_minutes: acc.wan_minutes,
        wan_fraction: ratio(acc.wan_minutes, acc.demanded_minutes),
        server_load_reduction: None,
        y_wait_ms: ratio(acc.wait_ms_sum, q),
        source_breakdown: acc.by_kind,
    }
}

impl MetricsReport {
    /// Share of all requests whose pref-1 was served inside their LPSG.
    pub fn lpsg_served_fraction(&self) -> f64 {
        ratio(self.source_breakdown.lpsg_hits() as f64, self.r as f64)
    }

    /// Fills in the load reduction against a no-proxy run of the same workload.
    pub fn pair_with_baseline(&mut self, baseline: &MetricsReport) {
        self.server_load_reduction = Some(if baseline.wan_minutes > 0.0 {
            1.0 - self.wan_minutes / baseline.wan_minutes
        } else {
            0.0
        });
    }

    /// Checks the counting identities that must hold for every run.
    pub fn check_identities(&self) -> std::result::Result<(), String> {
        if self.q + self.n_rej != self.r {
            return Err(format!("Q + N_rej = {} + {} != R = {}", self.q, self.n_rej, self.r));
        }
        if self.source_breakdown.total() != self.r {
            return Err(format!("source breakdown sums to {}, R = {}", self.source_breakdown.total(), self.r));
        }
        if self.r > 0 && self.s_eff + self.r_rej != 1.0 {
            return Err(format!("S_eff + R_rej = {}", self.s_eff + self.r_rej));
        }
        for (name, v) in [("R_rej", self.r_rej), ("S_eff", self.s_eff), ("VHR", self.vhr), ("wan_fraction", self.wan_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "sweep_key,seed,R,Q,N_rej,R_rej,S_eff,VHR,wan_minutes,wan_fraction,server_load_reduction,y_wait_ms,join_chain,new_local,peer_ps,neighbor,mms,reject";

/// `printf("%g")` style: six significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e6)`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

pub fn csv_row(sweep_key: f64, seed: u64, m: &MetricsReport) -> String {
    let b = &m.source_breakdown;
    let mut cols = vec![fmt_sig6(sweep_key), seed.to_string()];
    cols.extend([m.r, m.q, m.n_rej].map(|v| v.to_string()));
    cols.extend(
        [
            m.r_rej,
            m.s_eff,
            m.vhr,
            m.wan_minutes,
            m.wan_fraction,
            m.server_load_reduction.unwrap_or(0.0),
            m.y_wait_ms,
        ]
        .map(fmt_sig6),
    );
    cols.extend(DecisionKind::ALL.map(|k| b.get(k).to_string()));
    cols.join(",")
}

/// Header plus rows, in the order given.
pub fn emit_csv<'a>(rows: impl IntoIterator<Item = (f64, u64, &'a MetricsReport)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (key, seed, m) in rows {
        out.push_str(&csv_row(key, seed, m));
        out.push('\n');
    }
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub sweep_key: f64,
    pub seed: u64,
    pub report: MetricsReport,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::invalid("CSV header does not match")),
    }
    let bad = |line: usize, what: &str| Error::Config {
        line,
        message: format!("bad {what}"),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 18 {
            return Err(bad(n, "column count"));
        }
        let float = |j: usize| f[j].parse::<f64>().map_err(|_| bad(n, "number"));
        let int = |j: usize| f[j].parse::<u64>().map_err(|_| bad(n, "count"));
        let mut counts = [0u64; 6];
        for (k, c) in counts.iter_mut().enumerate() {
            *c = int(12 + k)?;
        }
        rows.push(CsvRow {
            sweep_key: float(0)?,
            seed: int(1)?,
            report: MetricsReport {
                r: int(2)?,
                q: int(3)?,
                n_rej: int(4)?,
                r_rej: float(5)?,
                s_eff: float(6)?,
                vhr: float(7)?,
                wan_minutes: float(8)?,
                wan_fraction: float(9)?,
                server_load_reduction: Some(float(10)?),
                y_wait_ms: float(11)?,
                source_breakdown: SourceBreakdown(counts),
            },
        });
    }
    Ok(rows)
}

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

/// Side-by-side comparison of runs, one column per label. Each column holds
/// the reports of every seed; values are averaged across seeds.
pub fn summary_table(columns: &[(&str, Vec<&MetricsReport>)]) -> String {
    let mean = |rs: &[&MetricsReport], f: &dyn Fn(&MetricsReport) -> f64| -> f64 {
        if rs.is_empty() {
            0.0
        } else {
            rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64
        }
    };
    type Row<'a> = (&'a str, Box<dyn Fn(&[&MetricsReport]) -> String + 'a>);
    let rows: Vec<Row> = vec![
        ("Total requests at LPSG", Box::new(|rs| format!("{:.0}", mean(rs, &|r| r.r as f64)))),
        (
            "Requests served from LPSG",
            Box::new(|rs| {
                format!(
                    "{:.0} ({})",
                    mean(rs, &|r| r.source_breakdown.lpsg_hits() as f64),
                    pct(mean(rs, &|r| r.lpsg_served_fraction()))
                )
            }),
        ),
        ("Requests served", Box::new(|rs| format!("{:.0} ({})", mean(rs, &|r| r.q as f64), pct(mean(rs, &|r| r.s_eff))))),
        ("Requests rejected", Box::new(|rs| format!("{:.0} ({})", mean(rs, &|r| r.n_rej as f64), pct(mean(rs, &|r| r.r_rej))))),
        ("Average video hit ratio", Box::new(|rs| pct(mean(rs, &|r| r.vhr)))),
        (
            "MMS load reduction",
            Box::new(|rs| {
                if rs.iter().all(|r| r.server_load_reduction.is_some()) && !rs.is_empty() {
                    pct(mean(rs, &|r| r.server_load_reduction.unwrap_or(0.0)))
                } else {
                    "n/a".into()
                }
            }),
        ),
        ("Bandwidth usage from MMS to proxies", Box::new(|rs| pct(mean(rs, &|r| r.wan_fraction)))),
        ("Mean waiting time", Box::new(|rs| format!("{:.2} s", mean(rs, &|r| r.y_wait_ms) / 1000.0))),
    ];

    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w = columns.iter().map(|c| c.0.len()).max().unwrap_or(0).max(12);
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (name, _) in columns {
        let _ = write!(out, "  {name:>col_w$}");
    }
    out.push('\n');
    for (label, f) in &rows {
        let _ = write!(out, "{label:label_w$}");
        for (_, rs) in columns {
            let _ = write!(out, "  {:>col_w$}", f(rs));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn acc(served: u64, rejected: u64) -> Accumulator {
        let mut a = Accumulator::default();
        for _ in 0..served {
            a.serve(DecisionKind::NewStreamLocal, 100.0, 120.0);
        }
        for _ in 0..rejected {
            a.reject();
        }
        a
    }

    #[test]
    fn ratios_from_counts() {
        let m = finalize(&acc(296, 24));
        assert_eq!(m.r, 320);
        assert_abs_diff_eq!(m.s_eff, 0.925);
        m.check_identities().unwrap();
    }

    #[test]
    fn no_rejections() {
        let m = finalize(&acc(10, 0));
        assert_eq!(m.r_rej, 0.0);
        assert_eq!(m.s_eff, 1.0);
    }

    #[test]
    fn mean_wait() {
        let mut a = Accumulator::default();
        a.serve(DecisionKind::JoinChain, 100.0, 120.0);
        a.serve(DecisionKind::FetchMms, 500.0, 120.0);
        assert_abs_diff_eq!(finalize(&a).y_wait_ms, 300.0);
    }

    #[test]
    fn empty_report_is_zero() {
        let m = finalize(&Accumulator::default());
        assert_eq!((m.r, m.q, m.n_rej), (0, 0, 0));
        assert_eq!([m.r_rej, m.s_eff, m.vhr, m.wan_fraction, m.y_wait_ms], [0.0; 5]);
        m.check_identities().unwrap();
        let row = csv_row(0.0, 0, &m);
        assert!(row.split(',').all(|c| c == "0"), "{row}");
    }

    #[test]
    fn drop_moves_served_to_rejected() {
        let mut a = acc(3, 0);
        a.drop_served(DecisionKind::NewStreamLocal, 100.0, 120.0);
        let m = finalize(&a);
        assert_eq!((m.q, m.n_rej), (2, 1));
        m.check_identities().unwrap();
    }

    #[test]
    fn vhr_counts_lpsg_kinds() {
        let mut a = Accumulator::default();
        for k in DecisionKind::ALL {
            if k == DecisionKind::Reject {
                a.reject();
            } else {
                a.serve(k, 0.0, 100.0);
            }
        }
        let m = finalize(&a);
        assert_abs_diff_eq!(m.vhr, 3.0 / 5.0);
        assert_abs_diff_eq!(m.lpsg_served_fraction(), 3.0 / 6.0);
    }

    #[test]
    fn load_reduction_pairing() {
        let mut m = finalize(&acc(1, 0));
        m.wan_minutes = 30.0;
        let mut base = m.clone();
        base.wan_minutes = 120.0;
        m.pair_with_baseline(&base);
        assert_abs_diff_eq!(m.server_load_reduction.unwrap(), 0.75);
    }

    #[test]
    fn sig6_format() {
        assert_eq!(fmt_sig6(0.925), "0.925");
        assert_eq!(fmt_sig6(320.0), "320");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(12345.678), "12345.7");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(0.00001234), "1.234e-05");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(999999.7), "1e+06");
    }

    #[test]
    fn csv_round_trip() {
        let mut a = acc(7, 2);
        a.add_wan(1234.56789);
        let mut m = finalize(&a);
        m.server_load_reduction = Some(0.7123456);
        let text = emit_csv([(0.3, 9, &m)]);
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 1);
        let p = &rows[0].report;
        assert_eq!((p.r, p.q, p.n_rej), (m.r, m.q, m.n_rej));
        assert_eq!(p.source_breakdown, m.source_breakdown);
        assert_abs_diff_eq!(p.wan_minutes, m.wan_minutes, epsilon = 1e-2);
        assert_abs_diff_eq!(p.server_load_reduction.unwrap(), 0.712346, epsilon = 1e-12);
        assert_eq!(rows[0].seed, 9);
        assert_eq!(rows[0].sweep_key, 0.3);
    }

    #[test]
    fn summary_has_a_column_per_label() {
        let on = finalize(&acc(9, 1));
        let off = finalize(&acc(6, 4));
        let t = summary_table(&[("PC+Chaining", vec![&on]), ("PC-Chaining", vec![&off])]);
        assert!(t.lines().next().unwrap().contains("PC+Chaining"));
        assert!(t.contains("90%"));
        assert!(t.contains("60%"));
    }
}
