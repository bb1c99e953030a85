//! Signal-processing primitives: fractional-delay kernels, convolution,
//! cross-correlation, Butterworth section design, zero-phase filtering, and
//! the 7-band octave filterbank used throughout the pipeline.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Octave band centre frequencies, Hz.
pub const OCTAVE_CENTERS: [f64; 7] =
    [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
pub const N_BANDS: usize = 7;

/// Band edges at centre/√2 and centre·√2 (contiguous across the bank).
pub fn octave_edges(center: f64) -> (f64, f64) {
    (center / std::f64::consts::SQRT_2, center * std::f64::consts::SQRT_2)
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (energy(x) / x.len() as f64).sqrt()
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    20.0 * lin.log10()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Hann-windowed sinc fractional-delay kernel.
///
/// `pos` is the exact (possibly fractional) sample position of the impulse.
/// Returns the output index of the kernel's first tap and the taps
/// themselves. The kernel is normalized to unit sum, so each event
/// contributes exactly its gain at DC; at integer positions it degenerates
/// to a single unit sample.
pub fn fractional_delay_kernel(pos: f64, taps: usize) -> (i64, Vec<f64>) {
    assert!(taps >= 2);
    let anchor = pos.round();
    let mu = pos - anchor; // in [-0.5, 0.5]
    let center = (taps / 2) as i64;
    let first = anchor as i64 - center;
    let mut k = Vec::with_capacity(taps);
    let mut sum = 0.0;
    for n in 0..taps {
        let w = 0.5
            * (1.0
                - (2.0 * std::f64::consts::PI * n as f64 / (taps as f64 - 1.0)).cos());
        let v = w * sinc(n as i64 as f64 - center as f64 - mu);
        sum += v;
        k.push(v);
    }
    for v in &mut k {
        *v /= sum;
    }
    (first, k)
}

/// Adds `kernel * gain` into `buf` at output offset `first`, clipping taps
/// that fall before the buffer start or past its end.
pub fn add_scaled_at(buf: &mut [f64], first: i64, kernel: &[f64], gain: f64) {
    for (j, &v) in kernel.iter().enumerate() {
        let idx = first + j as i64;
        if idx >= 0 && (idx as usize) < buf.len() {
            buf[idx as usize] += gain * v;
        }
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Linear convolution; switches to FFT when the direct cost is large.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let direct_cost = a.len() as u64 * b.len() as u64;
    if direct_cost <= 1 << 22 {
        convolve_direct(a, b)
    } else {
        fft_convolve(a, b)
    }
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let mut out = vec![0.0; n];
    for (i, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (j, &bv) in b.iter().enumerate() {
            out[i + j] += av * bv;
        }
    }
    out
}

pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let m = next_pow2(n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let ifft = planner.plan_fft_inverse(m);
    let mut fa: Vec<Complex64> =
        a.iter().map(|&v| Complex64::new(v, 0.0)).chain(std::iter::repeat(Complex64::new(0.0, 0.0))).take(m).collect();
    let mut fb: Vec<Complex64> =
        b.iter().map(|&v| Complex64::new(v, 0.0)).chain(std::iter::repeat(Complex64::new(0.0, 0.0))).take(m).collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    ifft.process(&mut fa);
    let scale = 1.0 / m as f64;
    fa.truncate(n);
    fa.iter().map(|c| c.re * scale).collect()
}

/// Cross-correlation r(τ) = Σ_n a[n]·b[n+τ] for τ in [-max_lag, max_lag].
/// With b a delayed copy of a, the peak sits at the (positive) delay.
pub fn xcorr(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * max_lag + 1);
    let nb = b.len() as i64;
    for lag in -(max_lag as i64)..=(max_lag as i64) {
        let mut s = 0.0;
        for (n, &av) in a.iter().enumerate() {
            let m = n as i64 + lag;
            if m >= 0 && m < nb {
                s += av * b[m as usize];
            }
        }
        out.push(s);
    }
    out
}

/// One biquad section, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
pub struct Sos {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Sos {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        // Direct form II transposed.
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        out.clear();
        out.reserve(x.len());
        for &v in x {
            let y = self.b0 * v + s1;
            s1 = self.b1 * v - self.a1 * y + s2;
            s2 = self.b2 * v - self.a2 * y;
            out.push(y);
        }
    }

    /// Complex response at z = e^{jθ}.
    fn response(&self, theta: f64) -> Complex64 {
        let z1 = Complex64::new(theta.cos(), -theta.sin());
        let z2 = z1 * z1;
        (Complex64::new(self.b0, 0.0) + z1 * self.b1 + z2 * self.b2)
            / (Complex64::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2)
    }
}

pub fn sosfilt(sos: &[Sos], x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let mut tmp = Vec::new();
    for s in sos {
        s.apply(&cur, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
    }
    cur
}

/// Zero-phase filtering: forward pass, reverse, forward again, reverse.
/// The signal is zero-padded by `pad` samples on both sides first; for
/// impulse-response material (silence outside the buffer) this is the
/// physically correct extension.
pub fn sosfiltfilt(sos: &[Sos], x: &[f64], pad: usize) -> Vec<f64> {
    let mut ext = vec![0.0; x.len() + 2 * pad];
    ext[pad..pad + x.len()].copy_from_slice(x);
    let mut y = sosfilt(sos, &ext);
    y.reverse();
    let mut y = sosfilt(sos, &y);
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

/// Analog Butterworth lowpass prototype poles (ωc = 1), left half-plane.
fn butter_prototype(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta =
                std::f64::consts::PI * (2.0 * k as f64 + order as f64 - 1.0) / (2.0 * order as f64);
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (std::f64::consts::PI * f / fs).tan()
}

fn bilinear_pole(p: Complex64, fs: f64) -> Complex64 {
    let k = Complex64::new(2.0 * fs, 0.0);
    (k + p) / (k - p)
}

/// Groups digital poles into conjugate pairs and returns one denominator
/// per pair. Poles are produced by real-coefficient designs, so every pole
/// with nonzero imaginary part has a conjugate partner.
fn pair_poles(mut poles: Vec<Complex64>) -> Vec<(f64, f64)> {
    let mut dens = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    poles.retain(|p| {
        if p.im.abs() < 1e-10 {
            reals.push(p.re);
            false
        } else {
            true
        }
    });
    poles.retain(|p| p.im > 0.0);
    for p in poles {
        dens.push((-2.0 * p.re, p.norm_sqr()));
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut it = reals.chunks_exact(2);
    for pair in &mut it {
        dens.push((-(pair[0] + pair[1]), pair[0] * pair[1]));
    }
    if let [r] = it.remainder() {
        dens.push((-r, 0.0));
    }
    dens
}

/// 2n-pole Butterworth bandpass as n biquad sections (zeros at z = ±1),
/// unity gain at the band's geometric centre.
pub fn butter_bandpass_sos(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Result<Vec<Sos>> {
    if !(0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::RateTooLow { fs, needed: 2.0 * f_hi });
    }
    let w1 = prewarp(f_lo, fs);
    let w2 = prewarp(f_hi, fs);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    // LP→BP: each prototype pole p yields s² − bw·p·s + w0² = 0.
    let mut poles = Vec::with_capacity(2 * order);
    for p in butter_prototype(order) {
        let bp = p * bw;
        let disc = (bp * bp - Complex64::new(4.0 * w0 * w0, 0.0)).sqrt();
        poles.push(bilinear_pole((bp + disc) * 0.5, fs));
        poles.push(bilinear_pole((bp - disc) * 0.5, fs));
    }
    let mut sos: Vec<Sos> = pair_poles(poles)
        .into_iter()
        .map(|(a1, a2)| Sos { b0: 1.0, b1: 0.0, b2: -1.0, a1, a2 })
        .collect();
    // Normalize to unity at the (digital image of the) centre frequency.
    let theta0 = 2.0 * (w0 / (2.0 * fs)).atan();
    let g: Complex64 = sos.iter().map(|s| s.response(theta0)).product();
    let scale = 1.0 / g.norm();
    sos[0].b0 *= scale;
    sos[0].b2 *= scale;
    Ok(sos)
}

/// n-pole Butterworth lowpass (unity DC gain).
pub fn butter_lowpass_sos(order: usize, fc: f64, fs: f64) -> Result<Vec<Sos>> {
    if !(0.0 < fc && fc < fs / 2.0) {
        return Err(Error::RateTooLow { fs, needed: 2.0 * fc });
    }
    let wc = prewarp(fc, fs);
    let poles: Vec<Complex64> =
        butter_prototype(order).into_iter().map(|p| bilinear_pole(p * wc, fs)).collect();
    let mut sos: Vec<Sos> = pair_poles(poles)
        .into_iter()
        .map(|(a1, a2)| Sos { b0: 1.0, b1: 2.0, b2: 1.0, a1, a2 })
        .collect();
    // Odd-order designs end with a single-pole section (a2 = 0): drop its z^-2 zero.
    for s in &mut sos {
        if s.a2 == 0.0 {
            s.b1 = 1.0;
            s.b2 = 0.0;
        }
    }
    let g: f64 = sos.iter().map(|s| s.response(0.0).norm()).product();
    let scale = 1.0 / g;
    sos[0].b0 *= scale;
    sos[0].b1 *= scale;
    sos[0].b2 *= scale;
    Ok(sos)
}

/// n-pole Butterworth highpass (unity gain at Nyquist).
pub fn butter_highpass_sos(order: usize, fc: f64, fs: f64) -> Result<Vec<Sos>> {
    if !(0.0 < fc && fc < fs / 2.0) {
        return Err(Error::RateTooLow { fs, needed: 2.0 * fc });
    }
    let wc = prewarp(fc, fs);
    // HP transform s → wc/s maps each prototype pole p to wc/p.
    let poles: Vec<Complex64> = butter_prototype(order)
        .into_iter()
        .map(|p| bilinear_pole(Complex64::new(wc, 0.0) / p, fs))
        .collect();
    let mut sos: Vec<Sos> = pair_poles(poles)
        .into_iter()
        .map(|(a1, a2)| Sos { b0: 1.0, b1: -2.0, b2: 1.0, a1, a2 })
        .collect();
    for s in &mut sos {
        if s.a2 == 0.0 {
            s.b1 = -1.0;
            s.b2 = 0.0;
        }
    }
    let g: f64 = sos.iter().map(|s| s.response(std::f64::consts::PI).norm()).product();
    let scale = 1.0 / g;
    sos[0].b0 *= scale;
    sos[0].b1 *= scale;
    sos[0].b2 *= scale;
    Ok(sos)
}

/// Zero-phase octave filterbank: 7 bands, 6th-order Butterworth bandpass
/// run forward-backward (magnitude response squared, zero group delay).
pub struct OctaveFilterbank {
    pub fs: f64,
    sections: Vec<Vec<Sos>>,
    pads: Vec<usize>,
}

impl OctaveFilterbank {
    pub fn new(fs: f64) -> Result<OctaveFilterbank> {
        let top_edge = octave_edges(OCTAVE_CENTERS[N_BANDS - 1]).1;
        if fs <= 2.0 * top_edge {
            return Err(Error::RateTooLow { fs, needed: 2.0 * top_edge });
        }
        let mut sections = Vec::with_capacity(N_BANDS);
        let mut pads = Vec::with_capacity(N_BANDS);
        for center in OCTAVE_CENTERS {
            let (lo, hi) = octave_edges(center);
            sections.push(butter_bandpass_sos(3, lo, hi, fs)?);
            // Ring-out margin: several time constants of the band's bandwidth.
            pads.push((8.0 * fs / (hi - lo)).ceil() as usize);
        }
        Ok(OctaveFilterbank { fs, sections, pads })
    }

    pub fn centers(&self) -> [f64; N_BANDS] {
        OCTAVE_CENTERS
    }

    pub fn filter_band(&self, x: &[f64], band: usize) -> Vec<f64> {
        sosfiltfilt(&self.sections[band], x, self.pads[band].min(x.len().max(1024)))
    }

    pub fn band_signals(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..N_BANDS).map(|b| self.filter_band(x, b)).collect()
    }

    pub fn band_energies(&self, x: &[f64]) -> [f64; N_BANDS] {
        let mut e = [0.0; N_BANDS];
        for b in 0..N_BANDS {
            e[b] = energy(&self.filter_band(x, b));
        }
        e
    }
}

/// Zero-phase 4th-order Butterworth lowpass, used by the binaural metrics.
pub fn lowpass_zero_phase(x: &[f64], fc: f64, fs: f64) -> Result<Vec<f64>> {
    let sos = butter_lowpass_sos(4, fc, fs)?;
    Ok(sosfiltfilt(&sos, x, (4.0 * fs / fc).ceil() as usize))
}

/// Zero-phase 4th-order Butterworth highpass.
pub fn highpass_zero_phase(x: &[f64], fc: f64, fs: f64) -> Result<Vec<f64>> {
    let sos = butter_highpass_sos(4, fc, fs)?;
    Ok(sosfiltfilt(&sos, x, (4.0 * fs / fc).ceil() as usize))
}
