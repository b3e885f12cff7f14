use alloc::vec::Vec;

use crate::date::CivilDate;
use crate::features::{LATITUDE, LONGITUDE, MONTH, N_FEATURES, N_WEATHER, SCORE};

/// One county-week after ingestion and feature enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyRecord {
    pub fips: u32,
    /// 0 is the first week of the dataset.
    pub week_index: u32,
    /// Release day of the drought score; the week ends here.
    pub week_end: CivilDate,
    /// Weekly means, ordered as [`crate::features::WEATHER_VARIABLES`].
    pub weather: [f64; N_WEATHER],
    pub score: f64,
    pub month: u8,
    pub latitude: f64,
    pub longitude: f64,
}

impl WeeklyRecord {
    /// Input features of this week in [`crate::features::FEATURE_NAMES`] order.
    pub fn feature_row(&self) -> [f64; N_FEATURES] {
        let mut row = [0.0; N_FEATURES];
        row[..N_WEATHER].copy_from_slice(&self.weather);
        row[SCORE] = self.score;
        row[LATITUDE] = self.latitude;
        row[LONGITUDE] = self.longitude;
        row[MONTH] = f64::from(self.month);
        row
    }
}

/// A county's weekly records, sorted by `week_index` with no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct CountySeries {
    pub fips: u32,
    pub weeks: Vec<WeeklyRecord>,
}

impl CountySeries {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn week_range(&self) -> Option<(u32, u32)> {
        Some((self.weeks.first()?.week_index, self.weeks.last()?.week_index))
    }

    /// True when week indices increase by exactly one.
    pub fn is_contiguous(&self) -> bool {
        self.weeks.windows(2).all(|w| w[1].week_index == w[0].week_index + 1)
    }
}
