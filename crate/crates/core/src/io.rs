//! CSV serialization. Floats use 17 significant digits, integers are exact
//! decimals, missing values are empty fields.

use std::fmt::Write;

use crate::coarse::CoarseSpectrum;
use crate::gibbs::LocalDimensionStats;
use crate::spectrum::{LegendreGrid, TauGrid};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

pub fn tau_csv(grid: &TauGrid) -> String {
    let mut s = String::from("q,tau,slope_left,slope_right,source_n\n");
    for p in &grid.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(p.q),
            fmt_f64(p.tau),
            opt(p.slope_left, fmt_f64),
            opt(p.slope_right, fmt_f64),
            opt(p.source_n, |n| n.to_string())
        );
    }
    s
}

pub fn legendre_csv(grid: &LegendreGrid) -> String {
    let mut s = String::from("alpha,tau_star,argmin_q,boundary_flag\n");
    for p in &grid.points {
        let _ = writeln!(s, "{},{},{},{}", fmt_f64(p.alpha), fmt_f64(p.tau_star), fmt_f64(p.argmin_q), p.flag.code());
    }
    s
}

pub fn coarse_csv(cs: &CoarseSpectrum) -> String {
    let mut s = String::from("alpha_low,alpha_high,count,f_value,spill_count\n");
    for b in &cs.bins {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(b.low),
            fmt_f64(b.high),
            b.count,
            opt(b.f_value, fmt_f64),
            b.spill
        );
    }
    s
}

pub fn histogram_csv(stats: &LocalDimensionStats) -> String {
    let mut s = String::from("alpha_bin_low,alpha_bin_high,count\n");
    for b in &stats.histogram {
        let _ = writeln!(s, "{},{},{}", fmt_f64(b.low), fmt_f64(b.high), b.count);
    }
    s
}

/// Parsed CSV: header names and rows of optional numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r.get(i).copied().flatten()).collect())
    }
}

/// Reads CSV written by this module; non-numeric cells read as `None`.
pub fn parse_csv(text: &str) -> Option<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next()?.split(',').map(|h| h.trim().to_string()).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.trim().parse::<f64>().ok()).collect()).collect();
    Some(Table { header, rows })
}
