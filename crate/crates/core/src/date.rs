//! Minimal proleptic Gregorian calendar date.

use core::fmt;

/// Calendar date with no time zone. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CivilDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl CivilDate {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Self { year, month, day })
    }

    /// Days since 1970-01-01.
    pub fn to_days(self) -> i64 {
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = i64::from(self.month);
        let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn from_days(days: i64) -> Self {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
        let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
        Self { year, month, day }
    }

    pub fn add_days(self, days: i64) -> Self {
        Self::from_days(self.to_days() + days)
    }

    /// Day of year, 1-based.
    pub fn ordinal(self) -> u32 {
        let jan1 = Self { year: self.year, month: 1, day: 1 };
        (self.to_days() - jan1.to_days()) as u32 + 1
    }
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl core::str::FromStr for CivilDate {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let mut parts = s.trim().splitn(3, '-');
        let year = parts.next().ok_or(())?.parse().map_err(|_| ())?;
        let month = parts.next().ok_or(())?.parse().map_err(|_| ())?;
        let day = parts.next().ok_or(())?.parse().map_err(|_| ())?;
        Self::new(year, month, day).ok_or(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn epoch_round_trip() {
        let d = CivilDate::new(1970, 1, 1).unwrap();
        assert_eq!(d.to_days(), 0);
        for days in [-800_000i64, -1, 0, 59, 365, 11_000, 18_628, 400_000] {
            assert_eq!(CivilDate::from_days(days).to_days(), days);
        }
    }

    #[test]
    fn known_dates() {
        let d: CivilDate = "2020-12-29".parse().unwrap();
        assert_eq!(d.to_days(), 18_625);
        assert_eq!(d.add_days(7).to_string(), "2021-01-05");
        assert_eq!(CivilDate::new(2000, 3, 1).unwrap().ordinal(), 61);
        assert!(CivilDate::new(2001, 2, 29).is_none());
        assert!("2020-13-01".parse::<CivilDate>().is_err());
    }
}
