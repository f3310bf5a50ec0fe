//! Plot-ready CSV output.

use std::fmt::Write as _;

use cgt_core::algorithms::TraceRecord;

pub const HEADER: &str = "k,residual,opt_error,consensus_error,tracking_error,compress_error_x,compress_error_y,ef_error_x,ef_error_y,bits_cumulative";

/// Seventeen significant digits, enough to round-trip any double.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 + trace.len() * 200);
    out.push_str(HEADER);
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{}", r.k);
        for v in [
            r.residual,
            r.opt_error,
            r.consensus_error,
            r.tracking_error,
            r.compress_error_x,
            r.compress_error_y,
            r.ef_error_x,
            r.ef_error_y,
        ] {
            out.push(',');
            out.push_str(&float(v));
        }
        let _ = writeln!(out, ",{}", r.bits_cumulative);
    }
    out
}

/// Quote a field if it holds a comma or a quote.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
