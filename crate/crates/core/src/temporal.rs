//! Monthly counts and the year-by-month seasonality pivot.

use std::io::Write;

use chrono::Datelike;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::CrashRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(o: i64) -> Self {
        YearMonth {
            year: o.div_euclid(12) as i32,
            month: o.rem_euclid(12) as u32 + 1,
        }
    }
}

/// Inclusive month range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonthWindow {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl MonthWindow {
    pub fn new(start: YearMonth, end: YearMonth) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!(
                "window starts after it ends ({}-{:02} > {}-{:02})",
                start.year, start.month, end.year, end.month
            )));
        }
        Ok(MonthWindow { start, end })
    }

    /// Smallest window containing every record, or `None` for no records.
    pub fn spanning(records: &[CrashRecord]) -> Option<Self> {
        let months = records.iter().map(month_of);
        let start = months.clone().min()?;
        let end = months.max()?;
        Some(MonthWindow { start, end })
    }

    pub fn months(&self) -> usize {
        (self.end.ordinal() - self.start.ordinal() + 1) as usize
    }
}

fn month_of(r: &CrashRecord) -> YearMonth {
    YearMonth {
        year: r.timestamp.year(),
        month: r.timestamp.month(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonthlySeries {
    pub window: MonthWindow,
    /// One count per month of the window, in order.
    pub counts: Vec<u64>,
}

impl MonthlySeries {
    pub fn iter(&self) -> impl Iterator<Item = (YearMonth, u64)> + '_ {
        let base = self.window.start.ordinal();
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (YearMonth::from_ordinal(base + i as i64), c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts per local calendar month; records outside `window` are ignored and
/// empty months are explicit zeros.
pub fn monthly_series(records: &[CrashRecord], window: MonthWindow) -> MonthlySeries {
    let mut counts = vec![0u64; window.months()];
    let base = window.start.ordinal();
    for r in records {
        let o = month_of(r).ordinal() - base;
        if o >= 0 && (o as usize) < counts.len() {
            counts[o as usize] += 1;
        }
    }
    MonthlySeries { window, counts }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeasonalMatrix {
    pub years: Vec<i32>,
    /// `rows[y][m]` is the count of year `years[y]`, month `m + 1`.
    pub rows: Vec<[u64; 12]>,
}

impl SeasonalMatrix {
    pub fn annual_totals(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn month_means(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        let n = self.rows.len().max(1) as f64;
        for r in &self.rows {
            for (o, v) in out.iter_mut().zip(r) {
                *o += *v as f64 / n;
            }
        }
        out
    }
}

pub fn seasonal_matrix(series: &MonthlySeries) -> SeasonalMatrix {
    let years: Vec<i32> = (series.window.start.year..=series.window.end.year).collect();
    let mut rows = vec![[0u64; 12]; years.len()];
    for (ym, c) in series.iter() {
        rows[(ym.year - years[0]) as usize][ym.month as usize - 1] += c;
    }
    SeasonalMatrix { years, rows }
}

pub fn write_series_csv<W: Write>(series: &MonthlySeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year", "month", "count"])?;
    for (ym, c) in series.iter() {
        w.write_record([ym.year.to_string(), ym.month.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(m: &SeasonalMatrix, out: W) -> Result<()> {
    const MONTHS: [&str; 12] = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["year"];
    header.extend(MONTHS);
    header.push("total");
    w.write_record(&header)?;
    for (y, row) in m.years.iter().zip(&m.rows) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        rec.push(row.iter().sum::<u64>().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<matrix csv>", e))?;
    Ok(())
}
