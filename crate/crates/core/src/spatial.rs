//! Horizontal higher-order Ambisonics panning onto a loudspeaker ring, a
//! spherical-head binaural stage, and interaural metrics (ITD/ILD/IACC).

use std::f64::consts::{PI, TAU};

use crate::dsp::{
    energy, fft_convolve, fractional_delay_kernel, highpass_zero_phase, lowpass_zero_phase, xcorr,
};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::ir::{assemble_hybrid, render_placed, ImpulseResponse, PlacedEvent};
use crate::ism::ReflectionEvent;

/// Split frequency between the time- and level-difference analysis ranges.
pub const ITD_ILD_SPLIT_HZ: f64 = 1300.0;
/// Default rigid-sphere head radius, metres.
pub const HEAD_RADIUS: f64 = 0.0875;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loudspeaker {
    /// Radians, counter-clockwise, 0 = listener facing direction; in [0, 2π).
    pub azimuth: f64,
    /// Radians, positive up.
    pub elevation: f64,
    /// Metres from the listening position.
    pub distance: f64,
}

impl Loudspeaker {
    pub fn unit(&self) -> Vec3 {
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        Vec3::new(ce * self.azimuth.cos(), ce * self.azimuth.sin(), se)
    }
}

/// Loudspeaker positions in channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub speakers: Vec<Loudspeaker>,
}

fn wrap_azimuth(az: f64) -> f64 {
    let mut a = az % TAU;
    if a < 0.0 {
        a += TAU;
    }
    a
}

impl ArrayLayout {
    pub fn new(speakers: Vec<Loudspeaker>) -> Result<ArrayLayout> {
        let layout = ArrayLayout { speakers };
        layout.validate()?;
        Ok(layout)
    }

    /// `n` evenly spaced loudspeakers at elevation 0, first at azimuth 0.
    pub fn horizontal_ring(n: usize, distance: f64) -> Result<ArrayLayout> {
        if n == 0 {
            return Err(Error::Validation("ring needs ≥ 1 loudspeaker".into()));
        }
        ArrayLayout::new(
            (0..n)
                .map(|j| Loudspeaker {
                    azimuth: wrap_azimuth(TAU * j as f64 / n as f64),
                    elevation: 0.0,
                    distance,
                })
                .collect(),
        )
    }

    /// The 60-loudspeaker playback room: 36 horizontal at 10° spacing plus
    /// two elevated rings of 12 (−19° and +32°) at 30° spacing.
    pub fn station_60(distance: f64) -> Result<ArrayLayout> {
        let mut speakers = Vec::with_capacity(60);
        for j in 0..36 {
            speakers.push(Loudspeaker {
                azimuth: wrap_azimuth((10.0 * j as f64).to_radians()),
                elevation: 0.0,
                distance,
            });
        }
        for &elev_deg in &[-19.0, 32.0] {
            for j in 0..12 {
                speakers.push(Loudspeaker {
                    azimuth: wrap_azimuth((30.0 * j as f64).to_radians()),
                    elevation: (elev_deg as f64).to_radians(),
                    distance,
                });
            }
        }
        ArrayLayout::new(speakers)
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers.is_empty() {
            return Err(Error::Validation("layout needs ≥ 1 loudspeaker".into()));
        }
        for (i, s) in self.speakers.iter().enumerate() {
            if !(s.distance > 0.0) {
                return Err(Error::Validation(format!("loudspeaker {i} distance must be > 0")));
            }
            if !(0.0..TAU).contains(&s.azimuth) {
                return Err(Error::Validation(format!("loudspeaker {i} azimuth outside [0, 2π)")));
            }
            for (j, t) in self.speakers.iter().enumerate().take(i) {
                if (s.azimuth - t.azimuth).abs() < 1e-9 && (s.elevation - t.elevation).abs() < 1e-9
                {
                    return Err(Error::Validation(format!(
                        "loudspeakers {j} and {i} share a direction"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the layout is a single uniform horizontal ring (the decoder
    /// precondition).
    pub fn is_uniform_ring(&self) -> bool {
        let n = self.speakers.len();
        if n == 0 || self.speakers.iter().any(|s| s.elevation != 0.0) {
            return false;
        }
        let step = TAU / n as f64;
        let base = self.speakers[0].azimuth;
        self.speakers
            .iter()
            .enumerate()
            .all(|(j, s)| {
                let expect = wrap_azimuth(base + step * j as f64);
                let d = (s.azimuth - expect).abs();
                d < 1e-9 || (TAU - d) < 1e-9
            })
    }
}

/// Horizontal Ambisonics signal set: channel 0 is the omni term, followed by
/// (cos mφ, sin mφ) pairs for m = 1..=order.
#[derive(Debug, Clone)]
pub struct AmbisonicField {
    pub order: usize,
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl AmbisonicField {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != 2 * self.order + 1 {
            return Err(Error::Validation(format!(
                "order {} field needs {} channels, has {}",
                self.order,
                2 * self.order + 1,
                self.channels.len()
            )));
        }
        let n = self.channels[0].len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Validation("field channels differ in length".into()));
        }
        Ok(())
    }
}

/// Encoding vector y(φ) = [1, cos φ, sin φ, …, cos Mφ, sin Mφ].
pub fn encode_horizontal(azimuth: f64, order: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * order + 1);
    y.push(1.0);
    for m in 1..=order {
        let a = m as f64 * azimuth;
        y.push(a.cos());
        y.push(a.sin());
    }
    y
}

/// Sampling decoder: g_j = ⟨y(φ_j), b⟩ / L with harmonic weights 1 for the
/// omni term and 2 for each m ≥ 1 term, so a plane wave encoded at φ_s
/// decodes to the order-M Dirichlet kernel [1 + 2·Σ cos(m(φ_j−φ_s))]/L.
///
/// Requires a uniform horizontal ring with L ≥ 2M+1 loudspeakers;
/// `allow_aliasing` skips the channel-count guard (spatial aliasing accepted).
pub fn sampling_decode(
    coeffs: &[f64],
    layout: &ArrayLayout,
    allow_aliasing: bool,
) -> Result<Vec<f64>> {
    if coeffs.len() % 2 != 1 {
        return Err(Error::Validation("coefficient vector length must be 2M+1".into()));
    }
    let order = coeffs.len() / 2;
    if !layout.is_uniform_ring() {
        return Err(Error::Validation("sampling decoder needs a uniform horizontal ring".into()));
    }
    let l = layout.len();
    if l < coeffs.len() && !allow_aliasing {
        return Err(Error::OrderTooHigh { order, needed: coeffs.len(), speakers: l });
    }
    Ok(layout
        .speakers
        .iter()
        .map(|s| {
            let y = encode_horizontal(s.azimuth, order);
            let mut acc = y[0] * coeffs[0];
            for (a, b) in y.iter().zip(coeffs).skip(1) {
                acc += 2.0 * a * b;
            }
            acc / l as f64
        })
        .collect())
}

/// Gain-weighted mean of loudspeaker directions; its azimuth predicts the
/// perceived low-frequency direction of the decoded field.
pub fn velocity_vector(gains: &[f64], layout: &ArrayLayout) -> Result<Vec3> {
    if gains.len() != layout.len() {
        return Err(Error::Validation("one gain per loudspeaker required".into()));
    }
    let gsum: f64 = gains.iter().sum();
    if gsum.abs() < 1e-30 {
        return Err(Error::Validation("gain sum too small for a velocity vector".into()));
    }
    let mut v = Vec3::new(0.0, 0.0, 0.0);
    for (g, s) in gains.iter().zip(&layout.speakers) {
        v = v + s.unit() * *g;
    }
    Ok(v * (1.0 / gsum))
}

/// Renders reflection events through the Ambisonics panner onto the array
/// and splices the per-loudspeaker late tail.
///
/// Each event is encoded at its DOA azimuth relative to `facing_azimuth`
/// (elevation projected onto the horizontal plane with a cos(elevation) gain
/// factor), decoded to loudspeaker gains, and rendered with its fractional
/// delay and band gains. The tail must supply one channel per loudspeaker.
/// With no events the tail is returned unchanged.
pub fn render_scene_to_array(
    events: &[ReflectionEvent],
    tail: &ImpulseResponse,
    layout: &ArrayLayout,
    order: usize,
    elst: f64,
    facing_azimuth: f64,
    taps: usize,
    allow_aliasing: bool,
) -> Result<ImpulseResponse> {
    if tail.channels.len() != layout.len() {
        return Err(Error::Validation(format!(
            "tail has {} channels for {} loudspeakers",
            tail.channels.len(),
            layout.len()
        )));
    }
    tail.validate()?;
    if events.is_empty() {
        return Ok(tail.clone());
    }
    let mut per_speaker: Vec<Vec<PlacedEvent>> = vec![Vec::with_capacity(events.len()); layout.len()];
    for ev in events {
        let az = ev.doa.y.atan2(ev.doa.x) - facing_azimuth;
        let horiz = (ev.doa.x * ev.doa.x + ev.doa.y * ev.doa.y).sqrt();
        let cos_el = horiz.min(1.0); // |doa| = 1, so the horizontal norm is cos(elevation)
        let gains = sampling_decode(&encode_horizontal(az, order), layout, allow_aliasing)?;
        for (j, g) in gains.iter().enumerate() {
            let mut band_gain = ev.band_amplitude;
            for b in band_gain.iter_mut() {
                *b *= g * cos_el;
            }
            per_speaker[j].push(PlacedEvent { time: ev.arrival_time, band_gain });
        }
    }
    let early = render_placed(&per_speaker, tail.sample_rate, taps)?;
    assemble_hybrid(&early, tail, elst)
}

/// Stereo head-related IRs indexed by direction.
#[derive(Debug, Clone)]
pub struct HrirSet {
    /// (azimuth, elevation) radians, azimuth in [0, 2π).
    pub directions: Vec<(f64, f64)>,
    /// One (left, right) pair per direction.
    pub pairs: Vec<[Vec<f64>; 2]>,
    pub sample_rate: f64,
}

impl HrirSet {
    pub fn lookup(&self, azimuth: f64, elevation: f64) -> Option<&[Vec<f64>; 2]> {
        let az = wrap_azimuth(azimuth);
        self.directions.iter().position(|&(a, e)| {
            let d = (a - az).abs();
            (d < 1e-6 || (TAU - d).abs() < 1e-6) && (e - elevation).abs() < 1e-6
        })
        .map(|i| &self.pairs[i])
    }

    /// Analytic rigid-sphere set covering every direction of `layout`.
    pub fn spherical_head_for_layout(layout: &ArrayLayout, sample_rate: f64) -> HrirSet {
        let mut directions = Vec::with_capacity(layout.len());
        let mut pairs = Vec::with_capacity(layout.len());
        for s in &layout.speakers {
            directions.push((s.azimuth, s.elevation));
            pairs.push(spherical_head_hrir(s.azimuth, s.elevation, sample_rate));
        }
        HrirSet { directions, pairs, sample_rate }
    }
}

/// Per-ear propagation delay around a rigid sphere (Woodworth): with Θ the
/// angle between the source direction and the ear axis, the direct side
/// arrives at −(a/c)·cosΘ and the shadowed side wraps along the surface,
/// (a/c)·(Θ − π/2).
fn woodworth_delay(cos_theta: f64, c: f64) -> f64 {
    let a = HEAD_RADIUS;
    if cos_theta >= 0.0 {
        -(a / c) * cos_theta
    } else {
        (a / c) * (cos_theta.acos() - PI / 2.0)
    }
}

/// Analytic spherical-head HRIR: Woodworth per-ear delays, a one-pole
/// low-pass head shadow on the far ear whose cutoff falls with wrap angle,
/// and a first-order scattering shelf lifting the near ear toward the +6 dB
/// rigid-sphere surface-pressure limit at normal incidence.
/// Deterministic; 256 taps per ear.
pub fn spherical_head_hrir(azimuth: f64, elevation: f64, sample_rate: f64) -> [Vec<f64>; 2] {
    const LEN: usize = 256;
    const KERNEL_TAPS: usize = 64;
    let c = 343.0;
    let (ce, se) = (elevation.cos(), elevation.sin());
    let dir = Vec3::new(ce * azimuth.cos(), ce * azimuth.sin(), se);
    let left_axis = Vec3::new(0.0, 1.0, 0.0);
    let mut out = [vec![0.0; LEN], vec![0.0; LEN]];
    const SHELF_HZ: f64 = 2500.0;
    for (ear, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        let cos_theta = (dir.dot(left_axis) * sign).clamp(-1.0, 1.0);
        let delay = woodworth_delay(cos_theta, c);
        // The scattering shelf below carries a low-frequency phase lead of
        // (A−1)/ω0; pre-delaying by the same amount keeps the effective
        // low-frequency arrival on the Woodworth time.
        let shelf_comp =
            if cos_theta > 0.0 { cos_theta / (TAU * SHELF_HZ) } else { 0.0 };
        // Base offset keeps the (possibly negative) interaural lead inside
        // the buffer.
        let pos = (0.0015 + delay + shelf_comp) * sample_rate;
        let (first, kernel) = fractional_delay_kernel(pos, KERNEL_TAPS);
        crate::dsp::add_scaled_at(&mut out[ear], first, &kernel, 1.0);
        if cos_theta < 0.0 {
            // Head shadow: cutoff slides from 15 kHz at grazing incidence
            // down to 1.5 kHz at the antipode.
            let s = -cos_theta; // 0..1 into the shadow zone
            let fc = 15000.0 * 10f64.powf(-s);
            let beta = (-TAU * fc / sample_rate).exp();
            let mut y = 0.0;
            for v in out[ear].iter_mut() {
                y = (1.0 - beta) * *v + beta * y;
                *v = y;
            }
        } else if cos_theta > 0.0 {
            // Scattering gain at the exposed ear: high shelf whose top
            // plateau is 1 + cosΘ (the rigid-sphere pressure doubling at
            // Θ = 0), unity at grazing so both branches meet continuously.
            // Bilinear first-order shelf.
            let a = 1.0 + cos_theta;
            let k = (PI * SHELF_HZ / sample_rate).tan();
            let (b0, b1) = ((k + a) / (k + 1.0), (k - a) / (k + 1.0));
            let a1 = (k - 1.0) / (k + 1.0);
            let (mut x1, mut y1) = (0.0, 0.0);
            for v in out[ear].iter_mut() {
                let y = b0 * *v + b1 * x1 - a1 * y1;
                x1 = *v;
                y1 = y;
                *v = y;
            }
        }
    }
    out
}

/// Folds the loudspeaker channels through their HRIRs into a stereo response.
pub fn array_to_binaural(
    array_ir: &ImpulseResponse,
    layout: &ArrayLayout,
    hrirs: &HrirSet,
) -> Result<ImpulseResponse> {
    array_ir.validate()?;
    if array_ir.channels.len() != layout.len() {
        return Err(Error::Validation(format!(
            "array IR has {} channels for {} loudspeakers",
            array_ir.channels.len(),
            layout.len()
        )));
    }
    if (hrirs.sample_rate - array_ir.sample_rate).abs() > 1e-9 {
        return Err(Error::RateMismatch { a: hrirs.sample_rate, b: array_ir.sample_rate });
    }
    let hrir_len = hrirs.pairs.first().map_or(0, |p| p[0].len());
    let n = array_ir.len() + hrir_len.saturating_sub(1);
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for (ch, s) in array_ir.channels.iter().zip(&layout.speakers) {
        let pair = hrirs.lookup(s.azimuth, s.elevation).ok_or_else(|| {
            Error::MissingDirection(format!(
                "azimuth {:.1}°, elevation {:.1}°",
                s.azimuth.to_degrees(),
                s.elevation.to_degrees()
            ))
        })?;
        if energy(ch) == 0.0 {
            continue;
        }
        for (acc, h) in [(&mut left, &pair[0]), (&mut right, &pair[1])] {
            let y = fft_convolve(ch, h);
            for (a, v) in acc.iter_mut().zip(y) {
                *a += v;
            }
        }
    }
    Ok(ImpulseResponse {
        sample_rate: array_ir.sample_rate,
        channels: vec![left, right],
        time_origin: array_ir.time_origin,
    })
}

/// Interaural metrics of a stereo signal.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BinauralMetrics {
    /// Seconds; positive when the left ear leads. |itd| ≤ 1 ms.
    pub itd: f64,
    /// dB, left re right, from the > 1300 Hz portion.
    pub ild: f64,
    /// Peak normalized cross-correlation of the < 1300 Hz portion, in [0, 1].
    pub iacc: f64,
    /// Set when iacc < 0.3; the ITD lag is then weakly determined.
    pub low_coherence: bool,
}

/// ITD from the peak cross-correlation lag (±1 ms, ties to the smallest
/// |lag|) of the low-passed ears, ILD from high-passed energies, IACC from
/// the normalized low-band cross-correlation peak.
pub fn binaural_metrics(stereo: &ImpulseResponse) -> Result<BinauralMetrics> {
    if stereo.channels.len() != 2 {
        return Err(Error::Validation(format!(
            "binaural metrics need 2 channels, got {}",
            stereo.channels.len()
        )));
    }
    let fs = stereo.sample_rate;
    for (i, ch) in stereo.channels.iter().enumerate() {
        if energy(ch) == 0.0 {
            return Err(Error::SilentChannel(i));
        }
    }
    let lo_l = lowpass_zero_phase(&stereo.channels[0], ITD_ILD_SPLIT_HZ, fs)?;
    let lo_r = lowpass_zero_phase(&stereo.channels[1], ITD_ILD_SPLIT_HZ, fs)?;
    let max_lag = (0.001 * fs).floor() as usize;
    let cc = xcorr(&lo_l, &lo_r, max_lag);
    let mut best = max_lag; // zero lag index
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in cc.iter().enumerate() {
        let a = v.abs();
        let lag = (i as i64 - max_lag as i64).abs();
        let cur = (best as i64 - max_lag as i64).abs();
        if a > best_v + 1e-15 || ((a - best_v).abs() <= 1e-15 && lag < cur) {
            best_v = a;
            best = i;
        }
    }
    let itd = (best as i64 - max_lag as i64) as f64 / fs;
    let norm = (energy(&lo_l) * energy(&lo_r)).sqrt();
    let iacc = if norm > 0.0 { (best_v / norm).min(1.0) } else { 0.0 };
    let hi_l = highpass_zero_phase(&stereo.channels[0], ITD_ILD_SPLIT_HZ, fs)?;
    let hi_r = highpass_zero_phase(&stereo.channels[1], ITD_ILD_SPLIT_HZ, fs)?;
    let (el, er) = (energy(&hi_l), energy(&hi_r));
    if el == 0.0 {
        return Err(Error::SilentChannel(0));
    }
    if er == 0.0 {
        return Err(Error::SilentChannel(1));
    }
    let ild = 10.0 * (el / er).log10();
    Ok(BinauralMetrics { itd, ild, iacc, low_coherence: iacc < 0.3 })
}
