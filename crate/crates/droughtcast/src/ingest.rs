//! Daily CSV parsing, California filtering and weekly aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use droughtcast_core::date::CivilDate;
use droughtcast_core::features::{N_WEATHER, WEATHER_VARIABLES};
use droughtcast_core::{CountySeries, WeeklyRecord};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error("input has no data rows")]
    EmptyFile,
    #[error("county {fips} has no score release days")]
    NoScoreDays { fips: u32 },
    #[error("county {fips}: no {variable} values in the week ending {week_end}")]
    AllMissingVariable { fips: u32, variable: &'static str, week_end: CivilDate },
    #[error("county {0} missing from county metadata")]
    UnknownFips(u32),
    #[error("county {fips}: release {date} is not on the weekly release grid starting {origin}")]
    OffGridRelease { fips: u32, date: CivilDate, origin: CivilDate },
    #[error("county {fips}: missing release weeks between {before} and {after}")]
    WeekGap { fips: u32, before: CivilDate, after: CivilDate },
    #[error("invalid county metadata: {0}")]
    InvalidMeta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One CSV row: a county-day of weather plus the score on release days.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyWeatherRecord {
    pub fips: u32,
    pub date: CivilDate,
    /// `None` marks a missing or unparseable cell.
    pub weather: [Option<f64>; N_WEATHER],
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyMeta {
    pub fips: u32,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

struct Columns {
    fips: usize,
    date: usize,
    score: usize,
    weather: [usize; N_WEATHER],
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| IngestError::MissingColumn(name.into()));
        let mut weather = [0; N_WEATHER];
        for (slot, name) in weather.iter_mut().zip(WEATHER_VARIABLES) {
            *slot = find(name)?;
        }
        Ok(Self { fips: find("fips")?, date: find("date")?, score: find("score")?, weather })
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Result<DailyWeatherRecord> {
    let line = row.position().map_or(0, csv::Position::line);
    let bad = |reason: String| IngestError::MalformedRow { row: line, reason };
    let cell = |i: usize| row.get(i).map(str::trim).ok_or_else(|| bad(format!("only {} fields", row.len())));
    let fips_text = cell(cols.fips)?;
    // Some exports write fips as a float ("6001.0").
    let fips = fips_text
        .parse::<u32>()
        .ok()
        .or_else(|| fips_text.parse::<f64>().ok().filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= f64::from(u32::MAX)).map(|v| v as u32))
        .ok_or_else(|| bad(format!("bad fips {fips_text:?}")))?;
    let date_text = cell(cols.date)?;
    let date = date_text.get(..10).unwrap_or(date_text).parse::<CivilDate>().map_err(|()| bad(format!("bad date {date_text:?}")))?;
    let score_text = cell(cols.score)?;
    let score = if score_text.is_empty() {
        None
    } else {
        match score_text.parse::<f64>() {
            Ok(s) if (0.0..=5.0).contains(&s) => Some(s),
            Ok(s) if s.is_nan() => None,
            _ => return Err(bad(format!("score {score_text:?} outside [0, 5]"))),
        }
    };
    let mut weather = [None; N_WEATHER];
    for (w, &i) in weather.iter_mut().zip(&cols.weather) {
        *w = cell(i)?.parse::<f64>().ok().filter(|v| v.is_finite());
    }
    Ok(DailyWeatherRecord { fips, date, weather, score })
}

/// Stream daily rows from any reader, keeping those accepted by `keep`.
pub fn read_daily<R: Read>(reader: R, mut keep: impl FnMut(&DailyWeatherRecord) -> bool) -> Result<Vec<DailyWeatherRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let mut out = Vec::new();
    let mut rows = 0usize;
    let mut row = csv::StringRecord::new();
    while rdr.read_record(&mut row)? {
        rows += 1;
        let rec = parse_row(&row, &cols)?;
        if keep(&rec) {
            out.push(rec);
        }
    }
    if rows == 0 {
        return Err(IngestError::EmptyFile);
    }
    Ok(out)
}

pub fn parse_daily_csv(path: &Path) -> Result<Vec<DailyWeatherRecord>> {
    read_daily(File::open(path)?, |_| true)
}

pub fn is_california(fips: u32) -> bool {
    (6000..=6999).contains(&fips)
}

pub fn filter_california(records: Vec<DailyWeatherRecord>) -> Vec<DailyWeatherRecord> {
    records.into_iter().filter(|r| is_california(r.fips)).collect()
}

/// Group by county, each county sorted by date.
pub fn group_by_county(records: Vec<DailyWeatherRecord>) -> BTreeMap<u32, Vec<DailyWeatherRecord>> {
    let mut map: BTreeMap<u32, Vec<DailyWeatherRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.fips).or_default().push(r);
    }
    for days in map.values_mut() {
        days.sort_by_key(|d| d.date);
    }
    map
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyAggregate {
    pub series: Vec<CountySeries>,
    /// Release days dropped because fewer than 7 days of weather preceded them.
    pub dropped_partial_weeks: usize,
}

/// One weekly record per release day, averaging the 7 days ending on it.
///
/// `week_index` counts weeks from the earliest retained release day across
/// all counties, so counties on the same release calendar share indices.
/// Static features are left at zero until [`attach_static_features`].
pub fn aggregate_weekly(daily: &BTreeMap<u32, Vec<DailyWeatherRecord>>) -> Result<WeeklyAggregate> {
    let mut dropped = 0;
    let mut weeks_by_county = Vec::with_capacity(daily.len());
    for (&fips, days) in daily {
        let mut days = days.clone();
        days.sort_by_key(|d| d.date);
        let first = days.first().map(|d| d.date.to_days()).ok_or(IngestError::NoScoreDays { fips })?;
        let releases: Vec<usize> = (0..days.len()).filter(|&i| days[i].score.is_some()).collect();
        if releases.is_empty() {
            return Err(IngestError::NoScoreDays { fips });
        }
        let mut weeks = Vec::with_capacity(releases.len());
        for &r in &releases {
            let end = days[r].date.to_days();
            if end - 6 < first {
                dropped += 1;
                continue;
            }
            let mut sums = [0.0; N_WEATHER];
            let mut counts = [0u32; N_WEATHER];
            for d in days[..=r].iter().rev().take_while(|d| d.date.to_days() > end - 7) {
                for k in 0..N_WEATHER {
                    if let Some(v) = d.weather[k] {
                        sums[k] += v;
                        counts[k] += 1;
                    }
                }
            }
            let mut weather = [0.0; N_WEATHER];
            for k in 0..N_WEATHER {
                if counts[k] == 0 {
                    return Err(IngestError::AllMissingVariable { fips, variable: WEATHER_VARIABLES[k], week_end: days[r].date });
                }
                weather[k] = sums[k] / f64::from(counts[k]);
            }
            let week_end = days[r].date;
            weeks.push(WeeklyRecord {
                fips,
                week_index: 0,
                week_end,
                weather,
                score: days[r].score.unwrap_or_default(),
                month: week_end.month,
                latitude: 0.0,
                longitude: 0.0,
            });
        }
        if weeks.is_empty() {
            return Err(IngestError::NoScoreDays { fips });
        }
        weeks_by_county.push(weeks);
    }
    let origin = weeks_by_county.iter().filter_map(|w| w.first()).map(|w| w.week_end).min();
    let mut series = Vec::with_capacity(weeks_by_county.len());
    for mut weeks in weeks_by_county {
        let origin = origin.expect("at least one week exists");
        let fips = weeks[0].fips;
        for w in &mut weeks {
            let offset = w.week_end.to_days() - origin.to_days();
            if offset % 7 != 0 {
                return Err(IngestError::OffGridRelease { fips, date: w.week_end, origin });
            }
            w.week_index = (offset / 7) as u32;
        }
        if let Some(pair) = weeks.windows(2).find(|p| p[1].week_index != p[0].week_index + 1) {
            return Err(IngestError::WeekGap { fips, before: pair[0].week_end, after: pair[1].week_end });
        }
        series.push(CountySeries { fips, weeks });
    }
    Ok(WeeklyAggregate { series, dropped_partial_weeks: dropped })
}

/// Copy latitude/longitude from the metadata table and set the month.
pub fn attach_static_features(series: &mut [CountySeries], meta: &BTreeMap<u32, CountyMeta>) -> Result<()> {
    for s in series {
        let m = meta.get(&s.fips).ok_or(IngestError::UnknownFips(s.fips))?;
        for w in &mut s.weeks {
            w.latitude = m.latitude;
            w.longitude = m.longitude;
            w.month = w.week_end.month;
        }
    }
    Ok(())
}

pub fn read_county_meta<R: Read>(reader: R) -> Result<BTreeMap<u32, CountyMeta>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| IngestError::MissingColumn(name.into()));
    let (fi, ni, la, lo) = (find("fips")?, find("name")?, find("latitude")?, find("longitude")?);
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, csv::Position::line);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let bad = |what: &str| IngestError::MalformedRow { row: line, reason: format!("bad {what} {:?}", field(fi)) };
        let fips: u32 = field(fi).parse().map_err(|_| bad("fips"))?;
        let latitude: f64 = field(la).parse().map_err(|_| bad("latitude"))?;
        let longitude: f64 = field(lo).parse().map_err(|_| bad("longitude"))?;
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(IngestError::InvalidMeta(format!("county {fips} coordinates out of range")));
        }
        let meta = CountyMeta { fips, name: field(ni).to_string(), latitude, longitude };
        if out.insert(fips, meta).is_some() {
            return Err(IngestError::InvalidMeta(format!("duplicate fips {fips}")));
        }
    }
    Ok(out)
}

/// The 58 California counties with approximate centroid coordinates.
pub fn california_counties() -> BTreeMap<u32, CountyMeta> {
    read_county_meta(include_str!("../data/ca_counties.csv").as_bytes()).expect("bundled county table is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub series: Vec<CountySeries>,
    pub daily_rows: usize,
    pub dropped_partial_weeks: usize,
}

/// Parse, filter to California, aggregate and attach static features.
pub fn ingest_reader<R: Read>(reader: R, meta: &BTreeMap<u32, CountyMeta>) -> Result<IngestReport> {
    let daily = read_daily(reader, |r| is_california(r.fips))?;
    let daily_rows = daily.len();
    let grouped = group_by_county(daily);
    if grouped.is_empty() {
        return Ok(IngestReport { series: Vec::new(), daily_rows, dropped_partial_weeks: 0 });
    }
    let mut agg = aggregate_weekly(&grouped)?;
    attach_static_features(&mut agg.series, meta)?;
    Ok(IngestReport { series: agg.series, daily_rows, dropped_partial_weeks: agg.dropped_partial_weeks })
}

/// Distinct release dates across all counties, for reporting.
pub fn release_dates(series: &[CountySeries]) -> BTreeSet<CivilDate> {
    series.iter().flat_map(|s| s.weeks.iter().map(|w| w.week_end)).collect()
}
