//! Seeded synthetic daily data in the ingest CSV schema.
//!
//! Each county carries a weekly drought score driven by
//!
//! ```text
//! s[t+1] = clamp(a*s[t] + (1-a)*(level + seasonal(month)) + b*T_anom[t] - c*P_anom[t] + noise, 0, 5)
//! ```
//!
//! where the temperature and precipitation anomalies are persistent AR(1)
//! processes that also shift the daily weather, so a model that sees the
//! weather window can anticipate score changes that the score history alone
//! cannot.

use std::io::Write;

use droughtcast_core::date::CivilDate;
use droughtcast_core::features::WEATHER_VARIABLES;
use droughtcast_core::seed;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::ingest::california_counties;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid synthetic spec: {0}")]
pub struct InvalidSpec(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_counties: usize,
    pub n_weeks: usize,
    pub seed: u64,
    /// Week-to-week score persistence `a`.
    pub ar: f64,
    /// Peak-to-mean amplitude of the seasonal score term.
    pub seasonal_amplitude: f64,
    /// Long-run mean score before county offsets.
    pub level: f64,
    /// Half-width of the uniform per-county level offset.
    pub county_spread: f64,
    /// `b`: score response to a one-sigma temperature anomaly.
    pub temp_coupling: f64,
    /// `c`: score response to a one-sigma precipitation anomaly.
    pub precip_coupling: f64,
    /// AR(1) coefficient of the weekly weather anomalies.
    pub anomaly_persistence: f64,
    pub noise_scale: f64,
    /// Date of the first day written; the first release is six days later.
    pub start: CivilDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_counties: 10,
            n_weeks: 500,
            seed: 0,
            ar: 0.92,
            seasonal_amplitude: 0.5,
            level: 1.1,
            county_spread: 0.55,
            temp_coupling: 0.12,
            precip_coupling: 0.12,
            anomaly_persistence: 0.85,
            noise_scale: 0.08,
            start: CivilDate { year: 2000, month: 1, day: 4 },
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let fail = |m: &str| Err(InvalidSpec(m.into()));
        let max = california_counties().len();
        if self.n_counties == 0 || self.n_counties > max {
            return fail(&format!("counties must lie in 1..={max}"));
        }
        if self.n_weeks < 2 {
            return fail("at least two weeks are required");
        }
        if !(0.0..=1.0).contains(&self.ar) {
            return fail("AR coefficient must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.anomaly_persistence) {
            return fail("anomaly persistence must lie in [0, 1)");
        }
        let finite = [self.seasonal_amplitude, self.level, self.county_spread, self.temp_coupling, self.precip_coupling];
        if finite.iter().any(|v| !v.is_finite()) || !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail("dynamics parameters must be finite and noise non-negative");
        }
        Ok(())
    }
}

fn normal(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn seasonal(month: u8) -> f64 {
    // Driest in late summer, wettest in late winter.
    (2.0 * std::f64::consts::PI * (f64::from(month) - 9.0) / 12.0).cos()
}

/// Write the daily CSV for `spec` to `out`.
pub fn write_synth_csv<W: Write>(spec: &SynthSpec, out: W) -> std::io::Result<()> {
    spec.validate().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let mut out = std::io::BufWriter::new(out);
    write!(out, "fips,date,score")?;
    for v in WEATHER_VARIABLES {
        write!(out, ",{v}")?;
    }
    writeln!(out)?;
    let counties = california_counties();
    let sd_innovation = (1.0 - spec.anomaly_persistence * spec.anomaly_persistence).sqrt();
    for meta in counties.values().take(spec.n_counties) {
        let fips = meta.fips;
        let mut rng = seed::rng(seed::derive(spec.seed, &[u64::from(fips)]));
        let offset = spec.county_spread * (2.0 * rng.random::<f64>() - 1.0);
        let base_temp = 14.0 + 0.9 * (38.0 - meta.latitude) + rng.random_range(-1.5..1.5);
        let base_precip = 1.6 + 0.25 * (meta.latitude - 34.0).max(0.0);
        let pressure = rng.random_range(88.0..101.5);
        let wind = rng.random_range(2.0..4.5);
        let level = spec.level + offset;
        let (mut t_anom, mut p_anom) = (normal(&mut rng), normal(&mut rng));
        let mut score = (level + spec.seasonal_amplitude * seasonal(spec.start.add_days(6).month)).clamp(0.0, 5.0);
        for week in 0..spec.n_weeks {
            for d in 0..7 {
                let date = spec.start.add_days((7 * week + d) as i64);
                let phase = 2.0 * std::f64::consts::PI * (f64::from(date.ordinal()) - 110.0) / 365.25;
                let t2m = base_temp + 8.0 * phase.sin() + 2.0 * t_anom + 1.2 * normal(&mut rng);
                let range = (11.0 + 2.0 * phase.sin() + 0.8 * t_anom + normal(&mut rng)).max(1.0);
                let dew = t2m - 9.0 + 1.5 * p_anom + normal(&mut rng);
                let wet = 0.5 * (t2m + dew);
                let winter = 1.0 - phase.sin();
                let precip = (base_precip * winter * (1.0 + 0.6 * p_anom) + 1.5 * normal(&mut rng)).max(0.0);
                let qv = (1.2 + 0.35 * (dew + 12.0)).max(0.1);
                let ws10 = (wind + 0.3 * t_anom + 0.7 * normal(&mut rng)).max(0.2);
                let ws10_range = (2.5 + 0.8 * normal(&mut rng).abs()).max(0.1);
                let ws50 = 1.45 * ws10 + 0.3 * normal(&mut rng).abs();
                let ws50_range = 1.3 * ws10_range;
                let values = [
                    precip,
                    pressure + 0.25 * normal(&mut rng),
                    qv,
                    t2m,
                    dew,
                    wet,
                    t2m + 0.5 * range,
                    t2m - 0.5 * range,
                    range,
                    t2m + 1.0 + 0.8 * normal(&mut rng),
                    ws10,
                    ws10 + 0.6 * ws10_range,
                    (ws10 - 0.4 * ws10_range).max(0.0),
                    ws10_range,
                    ws50,
                    ws50 + 0.6 * ws50_range,
                    (ws50 - 0.4 * ws50_range).max(0.0),
                    ws50_range,
                ];
                write!(out, "{fips},{date},")?;
                if d == 6 {
                    write!(out, "{score:.6}")?;
                }
                for v in values {
                    write!(out, ",{v:.4}")?;
                }
                writeln!(out)?;
            }
            let release = spec.start.add_days((7 * week + 6) as i64);
            let month = release.month;
            let target = level + spec.seasonal_amplitude * seasonal(month);
            score = (spec.ar * score + (1.0 - spec.ar) * target + spec.temp_coupling * t_anom - spec.precip_coupling * p_anom
                + spec.noise_scale * normal(&mut rng))
            .clamp(0.0, 5.0);
            t_anom = spec.anomaly_persistence * t_anom + sd_innovation * normal(&mut rng);
            p_anom = spec.anomaly_persistence * p_anom + sd_innovation * normal(&mut rng);
        }
    }
    out.flush()
}

/// The daily CSV for `spec` as bytes.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<u8>, InvalidSpec> {
    spec.validate()?;
    let mut buf = Vec::new();
    write_synth_csv(spec, &mut buf).expect("writing to memory cannot fail");
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest;

    #[test]
    fn deterministic_bytes() {
        let spec = SynthSpec { n_counties: 2, n_weeks: 20, seed: 3, ..SynthSpec::default() };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        assert_ne!(synth_generate(&spec).unwrap(), synth_generate(&SynthSpec { seed: 4, ..spec }).unwrap());
    }

    #[test]
    fn ingests_cleanly() {
        let spec = SynthSpec { n_counties: 3, n_weeks: 30, ..SynthSpec::default() };
        let bytes = synth_generate(&spec).unwrap();
        let report = ingest::ingest_reader(bytes.as_slice(), &ingest::california_counties()).unwrap();
        assert_eq!(report.daily_rows, 3 * 30 * 7);
        assert_eq!(report.dropped_partial_weeks, 0);
        assert!(report.series.iter().all(|s| s.len() == 30 && s.is_contiguous()));
    }

    #[test]
    fn degenerate_dynamics_hold_score() {
        let spec = SynthSpec { n_counties: 2, n_weeks: 40, ar: 1.0, temp_coupling: 0.0, precip_coupling: 0.0, noise_scale: 0.0, ..SynthSpec::default() };
        let report = ingest::ingest_reader(synth_generate(&spec).unwrap().as_slice(), &ingest::california_counties()).unwrap();
        for s in &report.series {
            assert!(s.weeks.iter().all(|w| w.score == s.weeks[0].score));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthSpec { n_counties: 0, ..SynthSpec::default() }.validate().is_err());
        assert!(SynthSpec { n_counties: 59, ..SynthSpec::default() }.validate().is_err());
        assert!(SynthSpec { ar: 1.1, ..SynthSpec::default() }.validate().is_err());
        assert!(SynthSpec { noise_scale: -1.0, ..SynthSpec::default() }.validate().is_err());
    }
}
