//! Geo-referenced event records, region centroids and nearest-centroid assignment.

use std::collections::HashMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single raw event row.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub lon: f64,
    pub lat: f64,
    pub event_type: String,
    pub country: String,
    pub region_id: Option<String>,
}

/// A spatial region represented by its centroid `(cx, cy)` in degrees (lon, lat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub cx: f64,
    pub cy: f64,
}

/// Ordered, uniquely-keyed set of regions. The order defines the column index
/// of every count grid built on top of it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    regions: Vec<Region>,
    index: HashMap<String, usize>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let mut index = HashMap::with_capacity(regions.len());
        for (i, r) in regions.iter().enumerate() {
            if !(r.cx.is_finite() && r.cy.is_finite()) {
                return Err(Error::Domain(format!(
                    "region `{}` has a non-finite centroid",
                    r.region_id
                )));
            }
            if index.insert(r.region_id.clone(), i).is_some() {
                return Err(Error::DuplicateRegion(r.region_id.clone()));
            }
        }
        Ok(Self { regions, index })
    }

    /// Rectangular `nx x ny` lattice of centroids `spacing` apart, ids `r{i}`
    /// in row-major order from the origin.
    pub fn lattice(nx: usize, ny: usize, spacing: f64) -> Self {
        let regions = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .enumerate()
            .map(|(k, (i, j))| Region { region_id: format!("r{k}"), cx: i as f64 * spacing, cy: j as f64 * spacing })
            .collect();
        Self::new(regions).expect("lattice ids are unique")
    }

    /// Reads a centroid CSV with the header `region_id,cx,cy`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["region_id", "cx", "cy"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Config(format!(
                "centroid CSV header must be exactly `region_id,cx,cy`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut regions = Vec::new();
        for row in rdr.deserialize::<Region>() {
            regions.push(row?);
        }
        Self::new(regions)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn get(&self, i: usize) -> &Region {
        &self.regions[i]
    }

    pub fn index_of(&self, region_id: &str) -> Option<usize> {
        self.index.get(region_id).copied()
    }

    pub fn centroids(&self) -> Vec<(f64, f64)> {
        self.regions.iter().map(|r| (r.cx, r.cy)).collect()
    }

    /// Index of the centroid nearest to `(x, y)` in Euclidean degree space.
    /// Ties go to the lower index.
    pub fn nearest(&self, x: f64, y: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.regions.iter().enumerate() {
            let d2 = (x - r.cx).powi(2) + (y - r.cy).powi(2);
            match best {
                Some((_, bd)) if d2 >= bd => {}
                _ => best = Some((i, d2)),
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Names of the CSV columns holding each event field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub date: String,
    pub lat: String,
    pub lon: String,
    pub event_type: String,
    pub country: String,
    pub region_id: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "event_date".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            event_type: "event_type".into(),
            country: "country".into(),
            region_id: None,
        }
    }
}

/// What to do with a malformed row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowPolicy {
    #[default]
    FailFast,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub records: Vec<EventRecord>,
    pub skipped: Vec<SkippedRow>,
}

/// Parses an event CSV. Records come back in file order.
pub fn parse_events<R: Read>(
    reader: R,
    columns: &ColumnMap,
    policy: RowPolicy,
) -> Result<ParsedEvents> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let i_date = col(&columns.date)?;
    let i_lat = col(&columns.lat)?;
    let i_lon = col(&columns.lon)?;
    let i_type = col(&columns.event_type)?;
    let i_country = col(&columns.country)?;
    let i_region = columns.region_id.as_deref().map(col).transpose()?;

    let mut out = ParsedEvents::default();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, i_date, i_lat, i_lon, i_type, i_country, i_region) {
            Ok(ev) => out.records.push(ev),
            Err(reason) => match policy {
                RowPolicy::FailFast => return Err(Error::Row { line, message: reason }),
                RowPolicy::Skip => out.skipped.push(SkippedRow { line, reason }),
            },
        }
    }
    Ok(out)
}

fn parse_row(
    record: &csv::StringRecord,
    i_date: usize,
    i_lat: usize,
    i_lon: usize,
    i_type: usize,
    i_country: usize,
    i_region: Option<usize>,
) -> std::result::Result<EventRecord, String> {
    let field = |i: usize| record.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let date_s = field(i_date)?;
    let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d")
        .map_err(|e| format!("malformed date `{date_s}`: {e}"))?;
    let num = |i: usize, what: &str| -> std::result::Result<f64, String> {
        let s = field(i)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("malformed {what} `{s}`"))
    };
    let lat = num(i_lat, "latitude")?;
    let lon = num(i_lon, "longitude")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    let region_id = match i_region {
        Some(i) => Some(field(i)?.to_string()).filter(|s| !s.is_empty()),
        None => None,
    };
    Ok(EventRecord {
        date,
        lon,
        lat,
        event_type: field(i_type)?.to_string(),
        country: field(i_country)?.to_string(),
        region_id,
    })
}

/// Fills in missing region ids with the nearest centroid. Pre-assigned ids are
/// kept but must exist in `regions`.
pub fn assign_regions(events: Vec<EventRecord>, regions: &RegionSet) -> Result<Vec<EventRecord>> {
    if regions.is_empty() {
        return Err(Error::Domain("region set is empty".into()));
    }
    events
        .into_iter()
        .map(|mut ev| {
            match &ev.region_id {
                Some(id) => {
                    if regions.index_of(id).is_none() {
                        return Err(Error::UnknownRegion(id.clone()));
                    }
                }
                None => {
                    // non-empty set, so nearest is always Some
                    let i = regions.nearest(ev.lon, ev.lat).expect("non-empty region set");
                    ev.region_id = Some(regions.get(i).region_id.clone());
                }
            }
            Ok(ev)
        })
        .collect()
}
