//! Per-week feature layout shared by every model.
//!
//! A week is described by [`N_FEATURES`] values in this fixed order: the 18
//! weekly-mean weather variables, the drought score, latitude, longitude and
//! month. Flattened windows repeat this block once per week, oldest first, so
//! column `c` of a flattened window belongs to variable `c % N_FEATURES`.

pub const WEATHER_VARIABLES: [&str; 18] = [
    "PRECTOT",
    "PS",
    "QV2M",
    "T2M",
    "T2MDEW",
    "T2MWET",
    "T2M_MAX",
    "T2M_MIN",
    "T2M_RANGE",
    "TS",
    "WS10M",
    "WS10M_MAX",
    "WS10M_MIN",
    "WS10M_RANGE",
    "WS50M",
    "WS50M_MAX",
    "WS50M_MIN",
    "WS50M_RANGE",
];

pub const N_WEATHER: usize = WEATHER_VARIABLES.len();
pub const SCORE: usize = N_WEATHER;
pub const LATITUDE: usize = N_WEATHER + 1;
pub const LONGITUDE: usize = N_WEATHER + 2;
pub const MONTH: usize = N_WEATHER + 3;
pub const N_FEATURES: usize = N_WEATHER + 4;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "PRECTOT",
    "PS",
    "QV2M",
    "T2M",
    "T2MDEW",
    "T2MWET",
    "T2M_MAX",
    "T2M_MIN",
    "T2M_RANGE",
    "TS",
    "WS10M",
    "WS10M_MAX",
    "WS10M_MIN",
    "WS10M_RANGE",
    "WS50M",
    "WS50M_MAX",
    "WS50M_MIN",
    "WS50M_RANGE",
    "score",
    "latitude",
    "longitude",
    "month",
];

pub fn weather_index(name: &str) -> Option<usize> {
    WEATHER_VARIABLES.iter().position(|v| *v == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_line_up() {
        assert_eq!(&FEATURE_NAMES[..N_WEATHER], &WEATHER_VARIABLES[..]);
        assert_eq!(FEATURE_NAMES[SCORE], "score");
        assert_eq!(FEATURE_NAMES[MONTH], "month");
        assert_eq!(weather_index("TS"), Some(9));
        assert_eq!(weather_index("nope"), None);
    }
}
