use ssp_core::gridworld::{Mismatch, Table2Row};
use ssp_core::tables::TraceRow;

/// Six significant digits; integers and plain decimals stay unscientific when they fit.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if (1e-4..1e6).contains(&mag) {
        format!("{rounded}")
    } else {
        let s = format!("{rounded:.5e}");
        let (mantissa, exp) = s.split_once('e').expect("scientific format");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,J_under,m,resid,error\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.iter, sig6(r.j_under), opt(r.m), opt(r.residual), opt(r.error)));
    }
    out
}

pub fn table2_csv(rows: &[Table2Row]) -> String {
    let n = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::from("iter");
    for i in 0..n {
        out.push_str(&format!(",J({i}),N({i})"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter.to_string());
        for (j, s) in r.values.iter().zip(&r.steps) {
            out.push_str(&format!(",{},{}", sig6(*j), sig6(*s)));
        }
        out.push('\n');
    }
    out
}

pub fn mismatch_list(mismatches: &[Mismatch]) -> String {
    mismatches
        .iter()
        .map(|m| match (m.expected, m.got) {
            (Some(e), Some(g)) => format!("row {} {}: expected {e}, got {}", m.row, m.column, sig6(g)),
            _ => format!("row {} {}: missing", m.row, m.column),
        })
        .collect::<Vec<_>>()
        .join("; ")
}
