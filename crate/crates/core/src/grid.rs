//! Monthly region-level count grids.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geo::{EventRecord, Region, RegionSet};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::YearMonth(format!("{year}-{month}")));
        }
        Ok(Self { year, month })
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self { year: date.year(), month: date.month() }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    fn ordinal(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(&self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn offset(&self, months: i64) -> YearMonth {
        let o = self.ordinal() + months;
        YearMonth { year: o.div_euclid(12) as i32, month: (o.rem_euclid(12) + 1) as u32 }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::YearMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse::<i32>().map_err(|_| bad())?;
        let month = m.parse::<u32>().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Optional country / event-type predicate applied before counting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub country: Option<String>,
    pub event_type: Option<String>,
}

impl EventFilter {
    pub fn matches(&self, ev: &EventRecord) -> bool {
        self.country.as_ref().is_none_or(|c| *c == ev.country)
            && self.event_type.as_ref().is_none_or(|t| *t == ev.event_type)
    }
}

/// `T x R` matrix of monthly counts. Row `t` is calendar month
/// `start_month + t`; the first `warmup` rows are history only.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGrid {
    counts: Array2<u32>,
    start_month: YearMonth,
    warmup: usize,
    regions: RegionSet,
}

impl EventGrid {
    pub fn new(
        counts: Array2<u32>,
        start_month: YearMonth,
        warmup: usize,
        regions: RegionSet,
    ) -> Result<Self> {
        if counts.ncols() != regions.len() {
            return Err(Error::Dimension(format!(
                "{} count columns for {} regions",
                counts.ncols(),
                regions.len()
            )));
        }
        if counts.nrows() == 0 {
            return Err(Error::Domain("grid must have at least one month".into()));
        }
        if warmup >= counts.nrows() {
            return Err(Error::Domain(format!(
                "warm-up of {warmup} months leaves no likelihood rows in a {}-month grid",
                counts.nrows()
            )));
        }
        Ok(Self { counts, start_month, warmup, regions })
    }

    pub fn counts(&self) -> ArrayView2<'_, u32> {
        self.counts.view()
    }

    pub fn start_month(&self) -> YearMonth {
        self.start_month
    }

    pub fn end_month(&self) -> YearMonth {
        self.start_month.offset(self.months() as i64 - 1)
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn months(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_regions(&self) -> usize {
        self.counts.ncols()
    }

    /// Number of cells entering the likelihood.
    pub fn n_obs(&self) -> usize {
        (self.months() - self.warmup) * self.n_regions()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Totals over regions, one per month.
    pub fn month_totals(&self) -> Vec<u64> {
        self.counts
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&c| c as u64).sum())
            .collect()
    }

    /// Totals over months, one per region.
    pub fn region_totals(&self) -> Vec<u64> {
        self.counts
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|&v| v as u64).sum())
            .collect()
    }

    /// Mean count over the likelihood cells.
    pub fn likelihood_mean(&self) -> f64 {
        let s: u64 = self
            .counts
            .rows()
            .into_iter()
            .skip(self.warmup)
            .map(|r| r.iter().map(|&c| c as u64).sum::<u64>())
            .sum();
        s as f64 / self.n_obs() as f64
    }

    pub fn month_of(&self, row: usize) -> YearMonth {
        self.start_month.offset(row as i64)
    }

    /// Row index of a calendar month, if inside the grid.
    pub fn row_of(&self, month: YearMonth) -> Option<usize> {
        let t = self.start_month.months_until(month);
        (t >= 0 && (t as usize) < self.months()).then_some(t as usize)
    }

    /// Keeps rows `0..rows` (the first `rows` months).
    pub fn truncate(&self, rows: usize) -> Result<EventGrid> {
        let rows = rows.min(self.months());
        let counts = self.counts.slice(ndarray::s![..rows, ..]).to_owned();
        EventGrid::new(counts, self.start_month, self.warmup.min(rows.saturating_sub(1)), self.regions.clone())
    }

    /// Long-format CSV: `month_index,region_id,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month_index", "region_id", "count"])?;
        for ((t, r), &c) in self.counts.indexed_iter() {
            w.write_record([t.to_string(), self.regions.get(r).region_id.clone(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> GridSidecar {
        GridSidecar {
            start_month: self.start_month,
            months: self.months(),
            warmup: self.warmup,
            regions: self.regions.regions().to_vec(),
        }
    }

    /// Rebuilds a grid from its long-format CSV and JSON sidecar. Cells absent
    /// from the CSV are zero.
    pub fn read_csv<R: Read>(reader: R, sidecar: &GridSidecar) -> Result<EventGrid> {
        let regions = RegionSet::new(sidecar.regions.clone())?;
        let mut counts = Array2::<u32>::zeros((sidecar.months, regions.len()));
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["month_index", "region_id", "count"] {
            return Err(Error::Config("grid CSV header must be `month_index,region_id,count`".into()));
        }
        for row in rdr.deserialize::<(usize, String, u32)>() {
            let (t, id, c) = row?;
            let r = regions.index_of(&id).ok_or(Error::UnknownRegion(id))?;
            if t >= sidecar.months {
                return Err(Error::Dimension(format!(
                    "month_index {t} outside a {}-month grid",
                    sidecar.months
                )));
            }
            counts[[t, r]] = c;
        }
        EventGrid::new(counts, sidecar.start_month, sidecar.warmup, regions)
    }
}

/// JSON companion of the long-format grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub start_month: YearMonth,
    pub months: usize,
    pub warmup: usize,
    pub regions: Vec<Region>,
}

/// Counts filtered events per (month, region) over the inclusive window
/// `[start, end]`. Events outside the window are dropped.
pub fn aggregate_counts(
    events: &[EventRecord],
    regions: &RegionSet,
    start: YearMonth,
    end: YearMonth,
    filter: &EventFilter,
) -> Result<EventGrid> {
    if start > end {
        return Err(Error::Domain(format!("window start {start} is after end {end}")));
    }
    let months = start.months_until(end) as usize + 1;
    let mut counts = Array2::<u32>::zeros((months, regions.len()));
    for ev in events.iter().filter(|e| filter.matches(e)) {
        let id = ev
            .region_id
            .as_deref()
            .ok_or_else(|| Error::Domain("event has no region assigned".into()))?;
        let r = regions.index_of(id).ok_or_else(|| Error::UnknownRegion(id.to_string()))?;
        let t = start.months_until(YearMonth::from_date(ev.date));
        if t < 0 || t as usize >= months {
            continue;
        }
        counts[[t as usize, r]] += 1;
    }
    EventGrid::new(counts, start, 0, regions.clone())
}

/// Marks the first `t_max` rows as warm-up history.
pub fn set_warmup(grid: EventGrid, t_max: usize) -> Result<EventGrid> {
    if t_max >= grid.months() {
        return Err(Error::Domain(format!(
            "t_max = {t_max} must be smaller than the number of months ({})",
            grid.months()
        )));
    }
    Ok(EventGrid { warmup: t_max, ..grid })
}
