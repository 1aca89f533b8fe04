//! Parametric circadian and menstrual hormone trajectories with seeded
//! Gaussian noise, phase classification, and percentile binning.
//!
//! Levels are normalized to [0,1] rather than physiological units; body
//! temperature is in degrees Celsius. All functions are pure in
//! (inputs, seed), so the same seed reproduces the same noise bitwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RhythmError {
    #[error("position {position} out of range for {kind:?} cycle ({range})")]
    OutOfRange {
        kind: CycleKind,
        position: f64,
        range: &'static str,
    },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, RhythmError>;

/// Snapshot of all seven simulated signals at one cycle point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HormoneState {
    pub estrogen: f64,
    pub progesterone: f64,
    pub lh: f64,
    pub fsh: f64,
    pub testosterone: f64,
    pub cortisol: f64,
    /// Degrees Celsius, within [35.5, 38.0].
    pub body_temp: f64,
}

impl HormoneState {
    /// Named access for the normalized signals (body_temp excluded).
    pub fn level(&self, signal: Signal) -> f64 {
        match signal {
            Signal::Estrogen => self.estrogen,
            Signal::Progesterone => self.progesterone,
            Signal::Lh => self.lh,
            Signal::Fsh => self.fsh,
            Signal::Testosterone => self.testosterone,
            Signal::Cortisol => self.cortisol,
            Signal::BodyTemp => self.body_temp,
        }
    }

    fn clamped(mut self) -> Self {
        self.estrogen = self.estrogen.clamp(0.0, 1.0);
        self.progesterone = self.progesterone.clamp(0.0, 1.0);
        self.lh = self.lh.clamp(0.0, 1.0);
        self.fsh = self.fsh.clamp(0.0, 1.0);
        self.testosterone = self.testosterone.clamp(0.0, 1.0);
        self.cortisol = self.cortisol.clamp(0.0, 1.0);
        self.body_temp = self.body_temp.clamp(35.5, 38.0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    Estrogen,
    Progesterone,
    Lh,
    Fsh,
    Testosterone,
    Cortisol,
    BodyTemp,
}

impl Signal {
    pub const ALL: [Signal; 7] = [
        Signal::Estrogen,
        Signal::Progesterone,
        Signal::Lh,
        Signal::Fsh,
        Signal::Testosterone,
        Signal::Cortisol,
        Signal::BodyTemp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Signal::Estrogen => "estrogen",
            Signal::Progesterone => "progesterone",
            Signal::Lh => "lh",
            Signal::Fsh => "fsh",
            Signal::Testosterone => "testosterone",
            Signal::Cortisol => "cortisol",
            Signal::BodyTemp => "body_temp",
        }
    }

    pub fn parse(s: &str) -> Option<Signal> {
        Signal::ALL.iter().copied().find(|sig| sig.name() == s)
    }
}

impl std::fmt::Display for Signal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleKind {
    Menstrual,
    Circadian,
}

impl CycleKind {
    pub fn name(&self) -> &'static str {
        match self {
            CycleKind::Menstrual => "menstrual",
            CycleKind::Circadian => "circadian",
        }
    }

    pub fn parse(s: &str) -> Option<CycleKind> {
        match s.to_ascii_lowercase().as_str() {
            "menstrual" => Some(CycleKind::Menstrual),
            "circadian" => Some(CycleKind::Circadian),
            _ => None,
        }
    }
}

impl std::fmt::Display for CycleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Position in a cycle: day-of-cycle in [1,28] for menstrual, hour-of-day
/// in [0,24) for circadian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclePoint {
    pub cycle_kind: CycleKind,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CyclePhase {
    // menstrual family
    Menstrual,
    Follicular,
    Ovulatory,
    Luteal,
    // circadian family
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl CyclePhase {
    pub fn name(&self) -> &'static str {
        match self {
            CyclePhase::Menstrual => "Menstrual",
            CyclePhase::Follicular => "Follicular",
            CyclePhase::Ovulatory => "Ovulatory",
            CyclePhase::Luteal => "Luteal",
            CyclePhase::Morning => "Morning",
            CyclePhase::Afternoon => "Afternoon",
            CyclePhase::Evening => "Evening",
            CyclePhase::Night => "Night",
        }
    }

    pub fn parse(s: &str) -> Option<CyclePhase> {
        [
            CyclePhase::Menstrual,
            CyclePhase::Follicular,
            CyclePhase::Ovulatory,
            CyclePhase::Luteal,
            CyclePhase::Morning,
            CyclePhase::Afternoon,
            CyclePhase::Evening,
            CyclePhase::Night,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

impl std::fmt::Display for CyclePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CycleParams {
    /// Hour of waking, [0,24).
    pub wake_hour: f64,
    pub cycle_length_days: u32,
    /// Gaussian noise sigma in normalized units (x0.1 degC for body_temp).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CycleParams {
    fn default() -> Self {
        CycleParams {
            wake_hour: 7.0,
            cycle_length_days: 28,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl CycleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..24.0).contains(&self.wake_hour) {
            return Err(RhythmError::InvalidParam(format!(
                "wake_hour {} outside [0,24)",
                self.wake_hour
            )));
        }
        if self.cycle_length_days < 21 {
            return Err(RhythmError::InvalidParam(format!(
                "cycle_length_days {} below 21",
                self.cycle_length_days
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(RhythmError::InvalidParam(format!(
                "noise_sigma {} negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Phase boundaries; the defaults match the canonical 28-day / 24-hour split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    /// Last day (inclusive) of the menstrual and follicular and ovulatory
    /// windows; luteal runs to cycle end.
    pub menstrual_end_day: f64,
    pub follicular_end_day: f64,
    pub ovulatory_end_day: f64,
    /// Start hours of morning, afternoon, evening, night.
    pub morning_start: f64,
    pub afternoon_start: f64,
    pub evening_start: f64,
    pub night_start: f64,
}

impl Default for PhaseBoundaries {
    fn default() -> Self {
        PhaseBoundaries {
            menstrual_end_day: 5.0,
            follicular_end_day: 11.0,
            ovulatory_end_day: 16.0,
            morning_start: 5.0,
            afternoon_start: 12.0,
            evening_start: 17.0,
            night_start: 21.0,
        }
    }
}

impl PhaseBoundaries {
    pub fn classify_menstrual(&self, day: f64) -> Result<CyclePhase> {
        if !(1.0..=28.0).contains(&day) {
            return Err(RhythmError::OutOfRange {
                kind: CycleKind::Menstrual,
                position: day,
                range: "[1,28]",
            });
        }
        Ok(if day <= self.menstrual_end_day {
            CyclePhase::Menstrual
        } else if day <= self.follicular_end_day {
            CyclePhase::Follicular
        } else if day <= self.ovulatory_end_day {
            CyclePhase::Ovulatory
        } else {
            CyclePhase::Luteal
        })
    }

    pub fn classify_circadian(&self, hour: f64) -> Result<CyclePhase> {
        if !(0.0..24.0).contains(&hour) {
            return Err(RhythmError::OutOfRange {
                kind: CycleKind::Circadian,
                position: hour,
                range: "[0,24)",
            });
        }
        Ok(if hour < self.morning_start {
            CyclePhase::Night
        } else if hour < self.afternoon_start {
            CyclePhase::Morning
        } else if hour < self.evening_start {
            CyclePhase::Afternoon
        } else if hour < self.night_start {
            CyclePhase::Evening
        } else {
            CyclePhase::Night
        })
    }
}

/// Menstrual for days 1-5, Follicular 6-11, Ovulatory 12-16, Luteal 17-28.
pub fn classify_menstrual_phase(day: f64) -> Result<CyclePhase> {
    PhaseBoundaries::default().classify_menstrual(day)
}

/// Morning [5,12), Afternoon [12,17), Evening [17,21), Night otherwise.
pub fn classify_circadian_phase(hour: f64) -> Result<CyclePhase> {
    PhaseBoundaries::default().classify_circadian(hour)
}

pub fn classify_phase(point: CyclePoint) -> Result<CyclePhase> {
    match point.cycle_kind {
        CycleKind::Menstrual => classify_menstrual_phase(point.position),
        CycleKind::Circadian => classify_circadian_phase(point.position),
    }
}

/// Circular hour distance: min(|a-b|, 24-|a-b|).
fn hour_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 24.0;
    d.min(24.0 - d)
}

fn gauss_bump(d: f64, mu: f64, sigma: f64) -> f64 {
    (-(d - mu) * (d - mu) / (2.0 * sigma * sigma)).exp()
}

/// Noise-free circadian closed forms; reproductive hormones are held flat
/// at 0.5 in the circadian context.
fn circadian_clean(t: f64, wake: f64) -> HormoneState {
    let two_pi = 2.0 * std::f64::consts::PI;
    let cortisol = 0.2 + 0.8 * {
        let d = hour_dist(t, wake + 0.5);
        (-d * d / (2.0 * 3.0 * 3.0)).exp()
    };
    let testosterone = 0.3 + 0.7 * {
        let d = hour_dist(t, wake - 0.5);
        (-d * d / (2.0 * 3.5 * 3.5)).exp()
    };
    let body_temp = 36.65 - 0.25 * (two_pi * (t - (wake - 1.0)) / 24.0).cos();
    HormoneState {
        estrogen: 0.5,
        progesterone: 0.5,
        lh: 0.5,
        fsh: 0.5,
        testosterone,
        cortisol,
        body_temp,
    }
}

/// Noise-free menstrual closed forms on the canonical 28-day scale.
fn menstrual_clean(day: f64) -> HormoneState {
    let two_pi = 2.0 * std::f64::consts::PI;
    let estrogen =
        (0.15 + 0.85 * gauss_bump(day, 12.0, 1.8) + 0.45 * gauss_bump(day, 21.0, 3.0)).clamp(0.0, 1.0);
    let lh = 0.08 + 0.92 * gauss_bump(day, 13.0, 0.7);
    let fsh = (0.2 + 0.3 * gauss_bump(day, 3.0, 3.0) + 0.5 * gauss_bump(day, 13.0, 0.8)).clamp(0.0, 1.0);
    let progesterone = 0.05 + 0.95 * gauss_bump(day, 21.0, 2.5);
    let testosterone = 0.4 + 0.3 * gauss_bump(day, 13.0, 2.0);
    let cortisol = 0.5 + 0.1 * (two_pi * (day - 2.0) / 28.0).cos();
    let body_temp = 36.4 + 0.4 / (1.0 + (-(day - 14.5) / 0.8).exp());
    HormoneState {
        estrogen,
        progesterone,
        lh,
        fsh,
        testosterone,
        cortisol,
        body_temp,
    }
}

/// Deterministic per-point RNG: mixes the seed with the position bits so
/// each (seed, kind, position) gets an independent, reproducible stream.
fn point_rng(seed: u64, kind: CycleKind, position: f64) -> ChaCha8Rng {
    let mut x = seed
        ^ position.to_bits().wrapping_mul(0x9e3779b97f4a7c15)
        ^ match kind {
            CycleKind::Menstrual => 0x6d656e73u64,
            CycleKind::Circadian => 0x63697263u64,
        };
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn add_noise(state: HormoneState, rng: &mut ChaCha8Rng, sigma: f64) -> HormoneState {
    if sigma == 0.0 {
        return state.clamped();
    }
    let mut s = state;
    s.estrogen += sigma * standard_normal(rng);
    s.progesterone += sigma * standard_normal(rng);
    s.lh += sigma * standard_normal(rng);
    s.fsh += sigma * standard_normal(rng);
    s.testosterone += sigma * standard_normal(rng);
    s.cortisol += sigma * standard_normal(rng);
    s.body_temp += 0.1 * sigma * standard_normal(rng);
    s.clamped()
}

/// Hormone state at hour-of-day `t` in [0,24).
pub fn circadian_profile(t: f64, params: &CycleParams) -> Result<HormoneState> {
    params.validate()?;
    if !(0.0..24.0).contains(&t) {
        return Err(RhythmError::OutOfRange {
            kind: CycleKind::Circadian,
            position: t,
            range: "[0,24)",
        });
    }
    let clean = circadian_clean(t, params.wake_hour);
    let mut rng = point_rng(params.seed, CycleKind::Circadian, t);
    Ok(add_noise(clean, &mut rng, params.noise_sigma))
}

/// Hormone state at day-of-cycle `day` in [1, cycle_length_days]. Days on
/// nonstandard cycle lengths are rescaled onto the canonical 28-day shape.
pub fn menstrual_profile(day: f64, params: &CycleParams) -> Result<HormoneState> {
    params.validate()?;
    let len = params.cycle_length_days as f64;
    if !(1.0..=len).contains(&day) {
        return Err(RhythmError::OutOfRange {
            kind: CycleKind::Menstrual,
            position: day,
            range: "[1, cycle_length_days]",
        });
    }
    let canonical = day * 28.0 / len;
    let clean = menstrual_clean(canonical);
    let mut rng = point_rng(params.seed, CycleKind::Menstrual, day);
    Ok(add_noise(clean, &mut rng, params.noise_sigma))
}

/// Evenly spaced samples over one full cycle; deterministic for a fixed seed.
///
/// Menstrual: days 1, 1+L/n, ... (n samples across [1, L]). Circadian:
/// hours 0, 24/n, ... (n samples across [0,24)).
pub fn sample_cycle(
    kind: CycleKind,
    resolution: usize,
    params: &CycleParams,
) -> Result<Vec<(CyclePoint, HormoneState)>> {
    if resolution == 0 {
        return Err(RhythmError::EmptyInput("resolution must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(resolution);
    match kind {
        CycleKind::Menstrual => {
            // closed interval [1, len]; the hour grid below is half-open
            let len = params.cycle_length_days as f64;
            let step = if resolution > 1 {
                (len - 1.0) / (resolution as f64 - 1.0)
            } else {
                0.0
            };
            for i in 0..resolution {
                let day = (1.0 + i as f64 * step).min(len);
                let state = menstrual_profile(day, params)?;
                out.push((
                    CyclePoint {
                        cycle_kind: kind,
                        position: day,
                    },
                    state,
                ));
            }
        }
        CycleKind::Circadian => {
            let step = 24.0 / resolution as f64;
            for i in 0..resolution {
                let hour = i as f64 * step;
                let state = circadian_profile(hour, params)?;
                out.push((
                    CyclePoint {
                        cycle_kind: kind,
                        position: hour,
                    },
                    state,
                ));
            }
        }
    }
    Ok(out)
}

/// Mean-rank percentile quintiles: each value is assigned by
/// p = 100*(mean_rank - 0.5)/n to bins [0,20)->1 ... [80,100]->5; ties
/// share their mean rank, so a full tie lands every value in bin 3.
pub fn quintile_bins(values: &[f64]) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Err(RhythmError::EmptyInput("quintile_bins over empty list".into()));
    }
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut bins = vec![0u8; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the mean rank
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        let p = 100.0 * (mean_rank - 0.5) / n as f64;
        let bin = match p {
            p if p < 20.0 => 1,
            p if p < 40.0 => 2,
            p if p < 60.0 => 3,
            p if p < 80.0 => 4,
            _ => 5,
        };
        for &k in &idx[i..=j] {
            bins[k] = bin;
        }
        i = j + 1;
    }
    Ok(bins)
}

/// CSV header for hormone sample files.
pub const SAMPLE_CSV_HEADER: &str =
    "cycle_kind,position,phase,estrogen,progesterone,lh,fsh,testosterone,cortisol,body_temp,seed";

/// Writes samples in the hormone CSV format (positions at 2 decimals,
/// levels at 6).
pub fn write_sample_csv<W: std::io::Write>(
    mut w: W,
    samples: &[(CyclePoint, HormoneState)],
    seed: u64,
) -> std::io::Result<()> {
    writeln!(w, "{SAMPLE_CSV_HEADER}")?;
    for (point, s) in samples {
        let phase = classify_phase(*point).map(|p| p.name().to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{:.2},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            point.cycle_kind,
            point.position,
            phase,
            s.estrogen,
            s.progesterone,
            s.lh,
            s.fsh,
            s.testosterone,
            s.cortisol,
            s.body_temp,
            seed
        )?;
    }
    Ok(())
}

/// Reads a hormone sample CSV back into (point, state) pairs.
pub fn read_sample_csv<R: std::io::Read>(r: R) -> Result<Vec<(CyclePoint, HormoneState)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RhythmError::InvalidParam(format!("row {i}: {e}")))?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j)
                .ok_or_else(|| RhythmError::InvalidParam(format!("row {i}: missing column {j}")))
        };
        let kind = match field(0)? {
            "menstrual" => CycleKind::Menstrual,
            "circadian" => CycleKind::Circadian,
            other => {
                return Err(RhythmError::InvalidParam(format!(
                    "row {i}: unknown cycle_kind {other:?}"
                )))
            }
        };
        let num = |j: usize| -> Result<f64> {
            field(j)?
                .parse::<f64>()
                .map_err(|e| RhythmError::InvalidParam(format!("row {i} col {j}: {e}")))
        };
        out.push((
            CyclePoint {
                cycle_kind: kind,
                position: num(1)?,
            },
            HormoneState {
                estrogen: num(3)?,
                progesterone: num(4)?,
                lh: num(5)?,
                fsh: num(6)?,
                testosterone: num(7)?,
                cortisol: num(8)?,
                body_temp: num(9)?,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_params() -> CycleParams {
        CycleParams {
            noise_sigma: 0.0,
            ..CycleParams::default()
        }
    }

    #[test]
    fn cortisol_peak_at_wake_plus_half() {
        let s = circadian_profile(7.5, &clean_params()).unwrap();
        assert!((s.cortisol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cortisol_evening_value() {
        let s = circadian_profile(19.5, &clean_params()).unwrap();
        let expect = 0.2 + 0.8 * (-144.0_f64 / 18.0).exp();
        assert!((s.cortisol - expect).abs() < 1e-12);
        assert!((s.cortisol - 0.2003).abs() < 5e-4);
    }

    #[test]
    fn body_temp_minimum_before_wake() {
        let s = circadian_profile(6.0, &clean_params()).unwrap();
        assert!((s.body_temp - 36.40).abs() < 1e-12);
    }

    #[test]
    fn circadian_reproductive_hormones_flat() {
        for t in [0.0, 6.3, 12.0, 23.9] {
            let s = circadian_profile(t, &clean_params()).unwrap();
            assert_eq!(s.estrogen, 0.5);
            assert_eq!(s.progesterone, 0.5);
            assert_eq!(s.lh, 0.5);
            assert_eq!(s.fsh, 0.5);
        }
    }

    #[test]
    fn circadian_out_of_range() {
        assert!(circadian_profile(24.0, &clean_params()).is_err());
        assert!(circadian_profile(-0.1, &clean_params()).is_err());
    }

    #[test]
    fn lh_surge_day_13() {
        let s = menstrual_profile(13.0, &clean_params()).unwrap();
        assert!((s.lh - 1.0).abs() < 1e-12);
    }

    #[test]
    fn progesterone_peak_day_21() {
        let s = menstrual_profile(21.0, &clean_params()).unwrap();
        assert!((s.progesterone - 1.0).abs() < 1e-12);
    }

    #[test]
    fn progesterone_day_1_near_floor() {
        let s = menstrual_profile(1.0, &clean_params()).unwrap();
        let expect = 0.05 + 0.95 * (-400.0_f64 / 12.5).exp();
        assert!((s.progesterone - expect).abs() < 1e-12);
        assert!((s.progesterone - 0.05).abs() < 1e-4);
    }

    #[test]
    fn menstrual_out_of_range() {
        assert!(menstrual_profile(0.5, &clean_params()).is_err());
        assert!(menstrual_profile(28.5, &clean_params()).is_err());
    }

    #[test]
    fn menstrual_body_temp_biphasic() {
        let p = clean_params();
        let mut prev = f64::MIN;
        let mut day = 1.0;
        while day <= 28.0 {
            let s = menstrual_profile(day, &p).unwrap();
            assert!(s.body_temp >= prev - 1e-12, "non-monotone at day {day}");
            prev = s.body_temp;
            day += 0.25;
        }
        let lo = menstrual_profile(1.0, &p).unwrap().body_temp;
        let hi = menstrual_profile(28.0, &p).unwrap().body_temp;
        assert!((hi - lo - 0.4).abs() < 0.005, "rise = {}", hi - lo);
    }

    #[test]
    fn nonstandard_cycle_rescales() {
        let p = CycleParams {
            cycle_length_days: 35,
            noise_sigma: 0.0,
            ..CycleParams::default()
        };
        // day 13 on the canonical scale maps to day 13*35/28 = 16.25
        let s = menstrual_profile(16.25, &p).unwrap();
        assert!((s.lh - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classify_menstrual_boundaries() {
        assert_eq!(classify_menstrual_phase(1.0).unwrap(), CyclePhase::Menstrual);
        assert_eq!(classify_menstrual_phase(5.0).unwrap(), CyclePhase::Menstrual);
        assert_eq!(classify_menstrual_phase(6.0).unwrap(), CyclePhase::Follicular);
        assert_eq!(classify_menstrual_phase(14.0).unwrap(), CyclePhase::Ovulatory);
        assert_eq!(classify_menstrual_phase(17.0).unwrap(), CyclePhase::Luteal);
        assert_eq!(classify_menstrual_phase(28.0).unwrap(), CyclePhase::Luteal);
        assert!(classify_menstrual_phase(0.0).is_err());
        assert!(classify_menstrual_phase(29.0).is_err());
    }

    #[test]
    fn classify_circadian_boundaries() {
        assert_eq!(classify_circadian_phase(8.0).unwrap(), CyclePhase::Morning);
        assert_eq!(classify_circadian_phase(12.0).unwrap(), CyclePhase::Afternoon);
        assert_eq!(classify_circadian_phase(17.0).unwrap(), CyclePhase::Evening);
        assert_eq!(classify_circadian_phase(23.0).unwrap(), CyclePhase::Night);
        assert_eq!(classify_circadian_phase(0.0).unwrap(), CyclePhase::Night);
        assert_eq!(classify_circadian_phase(4.99).unwrap(), CyclePhase::Night);
        assert!(classify_circadian_phase(24.0).is_err());
    }

    #[test]
    fn classify_partitions_domain() {
        // totality: every grid point classifies without error
        let mut t = 0.0;
        while t < 24.0 {
            classify_circadian_phase(t).unwrap();
            t += 0.01;
        }
        let mut d = 1.0;
        while d <= 28.0 {
            classify_menstrual_phase(d).unwrap();
            d += 0.01;
        }
    }

    #[test]
    fn sample_cycle_grids() {
        let p = CycleParams {
            seed: 42,
            ..CycleParams::default()
        };
        let m = sample_cycle(CycleKind::Menstrual, 28, &p).unwrap();
        assert_eq!(m.len(), 28);
        assert!((m[0].0.position - 1.0).abs() < 1e-12);
        assert!((m[27].0.position - 28.0).abs() < 1e-12);
        let c = sample_cycle(CycleKind::Circadian, 24, &CycleParams { seed: 7, ..p }).unwrap();
        assert_eq!(c.len(), 24);
        assert_eq!(c[0].0.position, 0.0);
        assert_eq!(c[23].0.position, 23.0);
    }

    #[test]
    fn sample_cycle_deterministic() {
        let p = CycleParams {
            seed: 42,
            ..CycleParams::default()
        };
        let a = sample_cycle(CycleKind::Menstrual, 28, &p).unwrap();
        let b = sample_cycle(CycleKind::Menstrual, 28, &p).unwrap();
        assert_eq!(a, b);
        let p2 = CycleParams { seed: 43, ..p };
        let c = sample_cycle(CycleKind::Menstrual, 28, &p2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noisy_outputs_stay_in_bounds() {
        for seed in 0..200 {
            let p = CycleParams {
                seed,
                noise_sigma: 0.3,
                ..CycleParams::default()
            };
            for i in 0..50 {
                let t = i as f64 * 24.0 / 50.0;
                let s = circadian_profile(t, &p).unwrap();
                for sig in [s.estrogen, s.progesterone, s.lh, s.fsh, s.testosterone, s.cortisol] {
                    assert!((0.0..=1.0).contains(&sig));
                }
                assert!((35.5..=38.0).contains(&s.body_temp));
            }
        }
    }

    #[test]
    fn quintile_examples() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let bins = quintile_bins(&values).unwrap();
        assert_eq!(bins[49], 3); // value 50
        assert_eq!(bins[99], 5); // value 100
        let ties = vec![2.0; 9];
        assert!(quintile_bins(&ties).unwrap().iter().all(|&b| b == 3));
        assert!(quintile_bins(&[]).is_err());
    }

    #[test]
    fn quintile_balanced_when_distinct() {
        for n in [5usize, 23, 50, 101] {
            let values: Vec<f64> = (0..n).map(|v| v as f64 * 1.7).collect();
            let bins = quintile_bins(&values).unwrap();
            for b in 1..=5u8 {
                let count = bins.iter().filter(|&&x| x == b).count();
                assert!(
                    count + 1 >= n / 5 && count <= n / 5 + 2,
                    "n={n} bin {b} count {count}"
                );
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = CycleParams {
            seed: 11,
            ..CycleParams::default()
        };
        let samples = sample_cycle(CycleKind::Circadian, 6, &p).unwrap();
        let mut buf = Vec::new();
        write_sample_csv(&mut buf, &samples, p.seed).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(SAMPLE_CSV_HEADER));
        let back = read_sample_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 6);
        for ((pt, st), (pt2, st2)) in samples.iter().zip(&back) {
            assert_eq!(pt.cycle_kind, pt2.cycle_kind);
            assert!((pt.position - pt2.position).abs() < 0.01);
            assert!((st.cortisol - st2.cortisol).abs() < 1e-5);
            assert!((st.body_temp - st2.body_temp).abs() < 1e-5);
        }
    }
}
