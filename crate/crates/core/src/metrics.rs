//! Octave-band room-acoustic parameters from impulse responses: Schroeder
//! decay curves, T20/T30/EDT, clarity, direct-to-reverberant ratio, and
//! speech-weighted scalars.

use serde::Serialize;

use crate::dsp::{energy, OctaveFilterbank, N_BANDS, OCTAVE_CENTERS};
use crate::error::{Error, Result};

/// Default octave-band importance weights for speech-weighted scalars
/// (normalized band-importance shape; configurable everywhere it is used).
pub const SPEECH_WEIGHTS: [f64; N_BANDS] = [0.01, 0.06, 0.17, 0.24, 0.26, 0.21, 0.05];

/// Reports clamp to ±99 dB instead of infinities.
pub const CLAMP_DB: f64 = 99.0;
/// Representation floor for log-domain decay levels.
pub const EDC_FLOOR_DB: f64 = -120.0;
/// Default noise-floor truncation level for decay curves.
pub const DEFAULT_EDC_TRUNCATION_DB: f64 = -65.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    Ok,
    /// Decay range required by the estimator not reached before truncation.
    InsufficientDecay,
    /// Ratio clamped at ±99 dB (zero numerator or denominator energy).
    Clamped,
}

/// A scalar result that may be flagged instead of (or besides) carrying a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: Option<f64>,
    pub flag: MetricFlag,
}

impl Metric {
    pub fn ok(v: f64) -> Metric {
        Metric { value: Some(v), flag: MetricFlag::Ok }
    }

    pub fn clamped(v: f64) -> Metric {
        Metric { value: Some(v), flag: MetricFlag::Clamped }
    }

    pub fn insufficient() -> Metric {
        Metric { value: None, flag: MetricFlag::InsufficientDecay }
    }

    pub fn unwrap(self) -> f64 {
        self.value.expect("metric carries no value")
    }
}

/// Normalized backward-integrated energy decay, in dB. `level_db[0] = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyDecayCurve {
    pub sample_rate: f64,
    pub level_db: Vec<f64>,
}

impl EnergyDecayCurve {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,level_db\n");
        for (i, l) in self.level_db.iter().enumerate() {
            s.push_str(&format!("{:.9},{:.6}\n", self.time(i), l));
        }
        s
    }
}

/// Schroeder backward integration: EDC(t) = 10·log10(∫_t h² / ∫_0 h²),
/// truncated where the curve first reaches `truncation_db` (levels below
/// the representation floor are clamped to it).
pub fn schroeder_edc(h: &[f64], sample_rate: f64, truncation_db: f64) -> Result<EnergyDecayCurve> {
    let mut tail = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (i, &v) in h.iter().enumerate().rev() {
        acc += v * v;
        tail[i] = acc;
    }
    // Normalize by the same accumulation so level_db[0] is exactly 0.
    let total = tail.first().copied().unwrap_or(0.0);
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::SilentInput("decay analysis needs nonzero energy".into()));
    }
    let mut level_db = Vec::with_capacity(h.len());
    for t in tail {
        let l = (10.0 * (t / total).log10()).max(EDC_FLOOR_DB);
        level_db.push(l);
        if l <= truncation_db {
            break;
        }
    }
    Ok(EnergyDecayCurve { sample_rate, level_db })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayTimes {
    pub t20: Metric,
    pub t30: Metric,
    pub edt: Metric,
}

/// Least-squares line through the EDC samples with level in [lo, hi] dB;
/// returns the decay time extrapolated to 60 dB, or None when the curve
/// never reaches `lo` or the fit is degenerate.
fn fit_decay_time(edc: &EnergyDecayCurve, hi: f64, lo: f64) -> Option<f64> {
    if !edc.level_db.iter().any(|l| *l <= lo) {
        return None;
    }
    let pts: Vec<(f64, f64)> = edc
        .level_db
        .iter()
        .enumerate()
        .filter(|(_, l)| **l <= hi && **l >= lo)
        .map(|(i, l)| (edc.time(i), *l))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= 0.0 {
        return None;
    }
    Some(-60.0 / slope)
}

/// T20 (fit −5..−25 dB), T30 (−5..−35 dB) and EDT (0..−10 dB), each as the
/// fitted line's time to fall 60 dB. Metrics whose range is not reached
/// before truncation come back flagged.
pub fn decay_times(edc: &EnergyDecayCurve) -> DecayTimes {
    let m = |hi: f64, lo: f64| match fit_decay_time(edc, hi, lo) {
        Some(t) => Metric::ok(t),
        None => Metric::insufficient(),
    };
    DecayTimes { t20: m(-5.0, -25.0), t30: m(-5.0, -35.0), edt: m(0.0, -10.0) }
}

/// First sample whose magnitude exceeds the peak by −20 dB, as a time.
pub fn detect_direct_time(h: &[f64], sample_rate: f64) -> Result<f64> {
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::SilentInput("direct-sound detection needs signal".into()));
    }
    let thr = peak * 0.1; // −20 dB
    let idx = h.iter().position(|v| v.abs() > thr).unwrap();
    Ok(idx as f64 / sample_rate)
}

fn ratio_db(num: f64, den: f64) -> Metric {
    if den <= 0.0 {
        Metric::clamped(CLAMP_DB)
    } else if num <= 0.0 {
        Metric::clamped(-CLAMP_DB)
    } else {
        Metric::ok(10.0 * (num / den).log10())
    }
}

/// C50 and C80: early-to-late energy ratios with boundaries 50/80 ms after
/// the direct sound. The boundary sample belongs to the late interval.
pub fn clarity_indices(h: &[f64], sample_rate: f64, direct_time: Option<f64>) -> Result<(Metric, Metric)> {
    let t_d = match direct_time {
        Some(t) => t,
        None => detect_direct_time(h, sample_rate)?,
    };
    let i_d = (t_d * sample_rate).round() as usize;
    if i_d >= h.len() {
        return Err(Error::SilentInput("direct time beyond signal end".into()));
    }
    let clarity = |boundary_s: f64| -> Metric {
        let i_b = ((t_d + boundary_s) * sample_rate).round() as usize;
        let i_b = i_b.min(h.len());
        let early = energy(&h[i_d..i_b]);
        let late = energy(&h[i_b..]);
        ratio_db(early, late)
    };
    Ok((clarity(0.050), clarity(0.080)))
}

/// Integration window for the direct sound in DRR computations.
#[derive(Debug, Clone, Copy)]
pub enum DirectWindow {
    /// [t_d − 1 ms, t_d + 2.5 ms]; covers the rendering kernel's main lobe.
    Around { direct_time: f64 },
    /// [t_d, first_reflection): exact split when the event times are known.
    UntilFirstReflection { direct_time: f64, first_reflection_time: f64 },
}

/// Direct-to-reverberant ratio: 10·log10(E_direct / E_everything_else).
pub fn drr(h: &[f64], sample_rate: f64, window: DirectWindow) -> Result<Metric> {
    let (num, den) = drr_energies(h, sample_rate, window)?;
    Ok(ratio_db(num, den))
}

/// The (direct, rest) energy split backing [`drr`], reusable per band.
pub fn drr_energies(h: &[f64], sample_rate: f64, window: DirectWindow) -> Result<(f64, f64)> {
    let total = energy(h);
    if !(total > 0.0) {
        return Err(Error::SilentInput("DRR needs nonzero energy".into()));
    }
    let (t0, t1) = match window {
        DirectWindow::Around { direct_time } => (direct_time - 0.001, direct_time + 0.0025),
        DirectWindow::UntilFirstReflection { direct_time, first_reflection_time } => {
            (direct_time, first_reflection_time)
        }
    };
    let i0 = ((t0 * sample_rate).round() as i64).clamp(0, h.len() as i64) as usize;
    let i1 = ((t1 * sample_rate).round() as i64).clamp(0, h.len() as i64) as usize;
    let direct = energy(&h[i0..i1.max(i0)]);
    Ok((direct, total - direct))
}

/// 10·log10(Σ w·N / Σ w·D) with weights normalized to sum 1.
pub fn speech_weighted_ratio(
    num: &[f64; N_BANDS],
    den: &[f64; N_BANDS],
    weights: &[f64; N_BANDS],
) -> Result<Metric> {
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || wsum <= 0.0 {
        return Err(Error::Validation("weights must be ≥ 0 and not all zero".into()));
    }
    if num.iter().chain(den.iter()).any(|e| *e < 0.0 || !e.is_finite()) {
        return Err(Error::Validation("band energies must be finite and ≥ 0".into()));
    }
    let n: f64 = num.iter().zip(weights).map(|(e, w)| e * w / wsum).sum();
    let d: f64 = den.iter().zip(weights).map(|(e, w)| e * w / wsum).sum();
    Ok(ratio_db(n, d))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandMetrics {
    pub center_hz: f64,
    pub t20: Metric,
    pub t30: Metric,
    pub edt: Metric,
    pub c50: Metric,
    pub c80: Metric,
    pub drr: Metric,
}

/// Per-band decay/clarity/DRR figures plus speech-weighted broadband scalars.
#[derive(Debug, Clone, Serialize)]
pub struct AcousticReport {
    pub sample_rate: f64,
    pub direct_time_s: f64,
    pub bands: Vec<BandMetrics>,
    pub speech_weighted_c50: Metric,
    pub speech_weighted_drr: Metric,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub truncation_db: f64,
    /// Direct-sound time; detected from the broadband signal when None.
    pub direct_time: Option<f64>,
    /// Enables the exact [t_d, first_reflection) DRR window.
    pub first_reflection_time: Option<f64>,
    pub speech_weights: [f64; N_BANDS],
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            truncation_db: DEFAULT_EDC_TRUNCATION_DB,
            direct_time: None,
            first_reflection_time: None,
            speech_weights: SPEECH_WEIGHTS,
        }
    }
}

/// Full octave-band analysis of one IR channel.
pub fn analyze(h: &[f64], sample_rate: f64, opts: &AnalysisOptions) -> Result<AcousticReport> {
    let bank = OctaveFilterbank::new(sample_rate)?;
    if !(energy(h) > 0.0) {
        return Err(Error::SilentInput("analysis needs nonzero energy".into()));
    }
    let t_d = match opts.direct_time {
        Some(t) => t,
        None => detect_direct_time(h, sample_rate)?,
    };
    let window = match opts.first_reflection_time {
        Some(fr) => DirectWindow::UntilFirstReflection { direct_time: t_d, first_reflection_time: fr },
        None => DirectWindow::Around { direct_time: t_d },
    };
    let mut bands = Vec::with_capacity(N_BANDS);
    let mut early = [0.0; N_BANDS];
    let mut late = [0.0; N_BANDS];
    let mut direct = [0.0; N_BANDS];
    let mut rest = [0.0; N_BANDS];
    for b in 0..N_BANDS {
        let y = bank.filter_band(h, b);
        let dt = match schroeder_edc(&y, sample_rate, opts.truncation_db) {
            Ok(edc) => decay_times(&edc),
            Err(_) => DecayTimes {
                t20: Metric::insufficient(),
                t30: Metric::insufficient(),
                edt: Metric::insufficient(),
            },
        };
        let (c50, c80) = clarity_indices(&y, sample_rate, Some(t_d))
            .unwrap_or((Metric::insufficient(), Metric::insufficient()));
        let band_drr = drr(&y, sample_rate, window).unwrap_or(Metric::insufficient());
        // Energy splits feeding the speech-weighted scalars.
        let i_d = (t_d * sample_rate).round() as usize;
        let i_50 = (((t_d + 0.050) * sample_rate).round() as usize).min(y.len());
        if i_d < y.len() {
            early[b] = energy(&y[i_d..i_50]);
            late[b] = energy(&y[i_50..]);
        }
        if let Ok((n, d)) = drr_energies(&y, sample_rate, window) {
            direct[b] = n;
            rest[b] = d;
        }
        bands.push(BandMetrics {
            center_hz: OCTAVE_CENTERS[b],
            t20: dt.t20,
            t30: dt.t30,
            edt: dt.edt,
            c50,
            c80,
            drr: band_drr,
        });
    }
    let speech_weighted_c50 = speech_weighted_ratio(&early, &late, &opts.speech_weights)?;
    let speech_weighted_drr = speech_weighted_ratio(&direct, &rest, &opts.speech_weights)?;
    Ok(AcousticReport {
        sample_rate,
        direct_time_s: t_d,
        bands,
        speech_weighted_c50,
        speech_weighted_drr,
    })
}

impl AcousticReport {
    /// Rows = metrics, columns = bands plus broadband scalars.
    pub fn to_csv(&self) -> String {
        fn cell(m: &Metric) -> String {
            match m.value {
                Some(v) => {
                    if m.flag == MetricFlag::Clamped {
                        format!("{v:.6} (clamped)")
                    } else {
                        format!("{v:.6}")
                    }
                }
                None => "insufficient_decay".into(),
            }
        }
        let mut s = String::from("metric");
        for b in &self.bands {
            s.push_str(&format!(",{}hz", b.center_hz));
        }
        s.push_str(",speech_weighted\n");
        let rows: [(&str, Box<dyn Fn(&BandMetrics) -> &Metric>, Option<&Metric>); 6] = [
            ("t20_s", Box::new(|b: &BandMetrics| &b.t20), None),
            ("t30_s", Box::new(|b: &BandMetrics| &b.t30), None),
            ("edt_s", Box::new(|b: &BandMetrics| &b.edt), None),
            ("c50_db", Box::new(|b: &BandMetrics| &b.c50), Some(&self.speech_weighted_c50)),
            ("c80_db", Box::new(|b: &BandMetrics| &b.c80), None),
            ("drr_db", Box::new(|b: &BandMetrics| &b.drr), Some(&self.speech_weighted_drr)),
        ];
        for (name, get, broadband) in rows {
            s.push_str(name);
            for b in &self.bands {
                s.push(',');
                s.push_str(&cell(get(b)));
            }
            s.push(',');
            if let Some(m) = broadband {
                s.push_str(&cell(m));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
