//! Simulated speech-reception-threshold experiments: speech-shaped masking
//! noise, an adaptive level staircase driven by a psychometric oracle, a
//! better-ear intelligibility model over binaural responses, spatial release
//! from masking, and paired statistics.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dsp::{butter_bandpass_sos, energy, octave_edges, rms, sosfilt, OctaveFilterbank, N_BANDS, OCTAVE_CENTERS};
use crate::error::{Error, Result};
use crate::ir::ImpulseResponse;
use crate::metrics::SPEECH_WEIGHTS;

/// Octave-band template of the masking noise, dB relative to the 1 kHz band.
pub const SPEECH_NOISE_TEMPLATE_DB: [f64; N_BANDS] = [2.0, 4.0, 2.0, 0.0, -6.0, -12.0, -18.0];

/// Full-scale RMS 1.0 corresponds to this sound pressure level.
pub const DB_SPL_FULL_SCALE: f64 = 94.0;

/// Speech-spectrum masking noise with a 4 Hz-dominant amplitude modulation,
/// RMS-calibrated to `level_db` SPL (re the 94 dB full-scale convention).
/// Deterministic per seed.
pub fn speech_shaped_noise(
    duration: f64,
    sample_rate: f64,
    level_db: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::Validation("noise duration must be > 0".into()));
    }
    let n = (duration * sample_rate).round() as usize;
    let mut out = vec![0.0; n];
    for b in 0..N_BANDS {
        let (lo, hi) = octave_edges(OCTAVE_CENTERS[b]);
        let sos = butter_bandpass_sos(3, lo, hi, sample_rate)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64 + 1);
        let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let shaped = sosfilt(&sos, &white);
        let e = energy(&shaped);
        if e <= 0.0 {
            continue;
        }
        // Scale the band to the template energy (re the 1 kHz band).
        let g = (10f64.powf(SPEECH_NOISE_TEMPLATE_DB[b] / 10.0) * n as f64 / e).sqrt();
        for (o, v) in out.iter_mut().zip(shaped) {
            *o += g * v;
        }
    }
    // 4 Hz-dominant modulator: band-limited noise generated at a low rate
    // and linearly interpolated up.
    let fs_mod = 200.0;
    let n_mod = (duration * fs_mod).ceil() as usize + 2;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000);
    let raw: Vec<f64> = (0..n_mod).map(|_| StandardNormal.sample(&mut rng)).collect();
    let sos = butter_bandpass_sos(2, 2.0, 8.0, fs_mod)?;
    let mut m = sosfilt(&sos, &raw);
    let m_rms = rms(&m);
    if m_rms > 0.0 {
        for v in &mut m {
            *v /= m_rms;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sample_rate * fs_mod;
        let k = (t as usize).min(n_mod - 2);
        let frac = t - k as f64;
        let mod_v = m[k] + frac * (m[k + 1] - m[k]);
        *o *= (1.0 + 0.6 * mod_v).max(0.0);
    }
    let r = rms(&out);
    if r > 0.0 {
        let target = 10f64.powf((level_db - DB_SPL_FULL_SCALE) / 20.0);
        for v in &mut out {
            *v *= target / r;
        }
    }
    Ok(out)
}

/// Word-level psychometric function: probability of reporting one word
/// correctly at a presented level.
pub trait Oracle {
    fn p_correct(&self, level_db: f64) -> f64;
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pure logistic listener with a known threshold; p = 0.5 at `srt_true`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticOracle {
    pub srt_true: f64,
    /// dB per logistic unit; must be > 0.
    pub slope: f64,
}

impl Oracle for LogisticOracle {
    fn p_correct(&self, level_db: f64) -> f64 {
        logistic((level_db - self.srt_true) / self.slope)
    }
}

#[derive(Debug, Clone)]
pub struct BetterEarParams {
    /// Interferer presentation level, dB SPL (presented levels are dB SNR
    /// against this).
    pub noise_level_db: f64,
    /// Effective SNR at which p = 0.5.
    pub srt_offset: f64,
    pub slope: f64,
    pub weights: [f64; N_BANDS],
}

impl Default for BetterEarParams {
    fn default() -> Self {
        BetterEarParams {
            noise_level_db: 65.0,
            srt_offset: -14.4,
            slope: 1.0,
            weights: SPEECH_WEIGHTS,
        }
    }
}

/// Energetic better-ear listener: per octave band the more favorable ear's
/// target/interferer energy ratio, importance-weighted into an effective
/// SNR, then a logistic psychometric function.
#[derive(Debug, Clone, Copy)]
pub struct BetterEarOracle {
    /// Σ w_b · max_ear 10·log10(E_target/E_interferer), dB.
    pub advantage: f64,
    pub srt_offset: f64,
    pub slope: f64,
}

impl BetterEarOracle {
    /// Both responses must be stereo at the same rate with signal in every
    /// channel.
    pub fn new(
        target: &ImpulseResponse,
        interferer: &ImpulseResponse,
        params: &BetterEarParams,
    ) -> Result<BetterEarOracle> {
        if target.sample_rate != interferer.sample_rate {
            return Err(Error::RateMismatch { a: target.sample_rate, b: interferer.sample_rate });
        }
        for brir in [target, interferer] {
            if brir.channels.len() != 2 {
                return Err(Error::Validation("better-ear model needs stereo responses".into()));
            }
            if brir.channels.iter().any(|c| energy(c) == 0.0) {
                return Err(Error::SilentBrir);
            }
        }
        let bank = OctaveFilterbank::new(target.sample_rate)?;
        let et: Vec<[f64; N_BANDS]> =
            target.channels.iter().map(|c| bank.band_energies(c)).collect();
        let ei: Vec<[f64; N_BANDS]> =
            interferer.channels.iter().map(|c| bank.band_energies(c)).collect();
        let wsum: f64 = params.weights.iter().sum();
        if params.weights.iter().any(|w| *w < 0.0) || wsum <= 0.0 {
            return Err(Error::Validation("weights must be ≥ 0 and not all zero".into()));
        }
        let mut advantage = 0.0;
        for b in 0..N_BANDS {
            let per_ear = |ear: usize| -> f64 {
                if et[ear][b] <= 0.0 || ei[ear][b] <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    10.0 * (et[ear][b] / ei[ear][b]).log10()
                }
            };
            let best = per_ear(0).max(per_ear(1));
            if best == f64::NEG_INFINITY {
                return Err(Error::SilentBrir);
            }
            advantage += params.weights[b] / wsum * best;
        }
        Ok(BetterEarOracle { advantage, srt_offset: params.srt_offset, slope: params.slope })
    }
}

impl Oracle for BetterEarOracle {
    fn p_correct(&self, level_db: f64) -> f64 {
        logistic((self.advantage + level_db - self.srt_offset) / self.slope)
    }
}

pub const WORDS_PER_SENTENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    pub level_db: f64,
    pub words: [bool; WORDS_PER_SENTENCE],
    pub proportion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SrtResult {
    pub srt_estimate: f64,
    pub trials: Vec<TrialRecord>,
    pub condition: String,
}

/// Adaptive word-proportion staircase.
///
/// Per sentence, 5 independent word draws at the current level; the level
/// then moves by −step·(proportion − 0.5)/0.5. The step starts at 4 dB and
/// halves after each of the first two direction reversals (so 4 → 2 → 1 dB,
/// never below 1; the move that triggers a reversal still uses the
/// pre-halving step). The estimate is the mean presented level of the last
/// 20 sentences.
pub fn run_adaptive_track(
    oracle: &dyn Oracle,
    start_level: f64,
    n_sentences: usize,
    seed: u64,
    condition: impl Into<String>,
) -> Result<SrtResult> {
    if n_sentences < 25 {
        return Err(Error::Validation(format!(
            "track needs ≥ 25 sentences, got {n_sentences}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut level = start_level;
    let mut step = 4.0f64;
    let mut reversals = 0usize;
    let mut last_dir = 0.0f64;
    let mut trials = Vec::with_capacity(n_sentences);
    for index in 0..n_sentences {
        let p = oracle.p_correct(level);
        let mut words = [false; WORDS_PER_SENTENCE];
        let mut correct = 0usize;
        for w in &mut words {
            *w = rng.random::<f64>() < p;
            correct += *w as usize;
        }
        let proportion = correct as f64 / WORDS_PER_SENTENCE as f64;
        trials.push(TrialRecord { index, level_db: level, words, proportion });
        let delta = -step * (proportion - 0.5) / 0.5;
        if delta != 0.0 {
            if last_dir != 0.0 && delta.signum() != last_dir && reversals < 2 {
                reversals += 1;
                step = (step / 2.0).max(1.0);
            }
            last_dir = delta.signum();
        }
        level += delta;
    }
    let tail = &trials[n_sentences - 20..];
    let srt_estimate = tail.iter().map(|t| t.level_db).sum::<f64>() / 20.0;
    Ok(SrtResult { srt_estimate, trials, condition: condition.into() })
}

/// Spatial release from masking; positive when the test condition is easier.
pub fn compute_srm(srt_reference: f64, srt_test: f64) -> f64 {
    srt_reference - srt_test
}

/// Two-tailed paired t-test. All-zero differences give (t = 0, p = 1);
/// a constant nonzero difference has no variance to test against.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Validation("paired test needs equal lengths ≥ 2".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok((0.0, df, 1.0));
        }
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df ≥ 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, df, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FS: f64 = 44100.0;

    #[test]
    fn noise_octave_spectrum_matches_template() {
        let x = speech_shaped_noise(10.0, FS, 65.0, 5).unwrap();
        let bank = OctaveFilterbank::new(FS).unwrap();
        let e = bank.band_energies(&x);
        for b in 0..N_BANDS {
            let rel = 10.0 * (e[b] / e[3]).log10();
            let want = SPEECH_NOISE_TEMPLATE_DB[b] - SPEECH_NOISE_TEMPLATE_DB[3];
            assert!(
                (rel - want).abs() < 1.5,
                "band {} Hz: {rel:.2} dB vs template {want:.2} dB",
                OCTAVE_CENTERS[b]
            );
        }
    }

    #[test]
    fn noise_modulation_peaks_between_2_and_8_hz() {
        let x = speech_shaped_noise(10.0, FS, 65.0, 9).unwrap();
        // Envelope: rectified, 30 Hz low-passed, decimated to ~200 Hz.
        let rect: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let env_full = crate::dsp::lowpass_zero_phase(&rect, 30.0, FS).unwrap();
        let dec = 220usize;
        let fs_env = FS / dec as f64;
        let env: Vec<f64> = env_full.iter().step_by(dec).copied().collect();
        let mean = env.iter().sum::<f64>() / env.len() as f64;
        use rustfft::{num_complex::Complex64, FftPlanner};
        let nfft = 2048usize;
        let mut buf: Vec<Complex64> = (0..nfft)
            .map(|i| Complex64::new(env.get(i).copied().unwrap_or(mean) - mean, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
        let bin_hz = fs_env / nfft as f64;
        let lo = (0.5 / bin_hz).ceil() as usize;
        let hi = (20.0 / bin_hz).floor() as usize;
        let peak_bin = (lo..=hi).max_by(|&i, &j| buf[i].norm().total_cmp(&buf[j].norm())).unwrap();
        let peak_hz = peak_bin as f64 * bin_hz;
        assert!(
            (2.0..=8.0).contains(&peak_hz),
            "modulation spectrum peaks at {peak_hz:.2} Hz"
        );
    }

    #[test]
    fn noise_is_deterministic_and_rms_calibrated() {
        let a = speech_shaped_noise(1.0, FS, 70.0, 3).unwrap();
        let b = speech_shaped_noise(1.0, FS, 70.0, 3).unwrap();
        assert_eq!(a, b);
        let c = speech_shaped_noise(1.0, FS, 70.0, 4).unwrap();
        assert_ne!(a, c);
        let want = 10f64.powf((70.0 - DB_SPL_FULL_SCALE) / 20.0);
        assert_relative_eq!(rms(&a), want, max_relative = 1e-9);
    }

    #[test]
    fn staircase_recovers_logistic_threshold() {
        let oracle = LogisticOracle { srt_true: -14.4, slope: 1.0 };
        let mut sum = 0.0;
        for seed in 0..200u64 {
            let r = run_adaptive_track(&oracle, -14.4 + 6.0, 30, seed, "t").unwrap();
            assert!(
                (r.srt_estimate - -14.4).abs() < 1.5,
                "seed {seed}: estimate {}",
                r.srt_estimate
            );
            sum += r.srt_estimate;
        }
        let mean = sum / 200.0;
        assert!((mean - -14.4).abs() < 0.5, "mean estimate {mean}");
    }

    struct StepOracle {
        l0: f64,
    }
    impl Oracle for StepOracle {
        fn p_correct(&self, level: f64) -> f64 {
            if level > self.l0 {
                1.0
            } else {
                0.0
            }
        }
    }

    #[test]
    fn staircase_converges_on_a_hard_threshold() {
        let oracle = StepOracle { l0: -10.0 };
        for seed in 0..5 {
            let r = run_adaptive_track(&oracle, -4.0, 30, seed, "step").unwrap();
            assert!(
                (r.srt_estimate - -10.0).abs() <= 1.0 + 1e-9,
                "estimate {} should sit within the 1 dB step floor of -10",
                r.srt_estimate
            );
        }
    }

    #[test]
    fn track_history_is_deterministic_and_well_formed() {
        let oracle = LogisticOracle { srt_true: -5.0, slope: 2.0 };
        let a = run_adaptive_track(&oracle, 1.0, 30, 77, "c").unwrap();
        let b = run_adaptive_track(&oracle, 1.0, 30, 77, "c").unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.trials.len(), 30);
        for (i, t) in a.trials.iter().enumerate() {
            assert_eq!(t.index, i);
            let k = (t.proportion * 5.0).round();
            assert_relative_eq!(t.proportion, k / 5.0, epsilon = 1e-12);
        }
        let mean = a.trials[10..].iter().map(|t| t.level_db).sum::<f64>() / 20.0;
        assert_eq!(a.srt_estimate, mean);
        assert!(run_adaptive_track(&oracle, 1.0, 24, 0, "short").is_err());
    }

    #[test]
    fn staircase_is_bounded_over_long_runs() {
        let oracle = LogisticOracle { srt_true: 0.0, slope: 1.0 };
        let r = run_adaptive_track(&oracle, 6.0, 10_000, 1, "long").unwrap();
        for t in &r.trials {
            assert!(t.level_db.abs() < 40.0, "level diverged to {}", t.level_db);
        }
    }

    #[test]
    fn staircase_translation_equivariance() {
        let c = 7.25;
        let base = LogisticOracle { srt_true: -14.4, slope: 1.0 };
        let shifted = LogisticOracle { srt_true: -14.4 + c, slope: 1.0 };
        for seed in 0..10 {
            let a = run_adaptive_track(&base, -8.4, 30, seed, "a").unwrap();
            let b = run_adaptive_track(&shifted, -8.4 + c, 30, seed, "b").unwrap();
            assert_relative_eq!(b.srt_estimate, a.srt_estimate + c, epsilon = 1e-9);
        }
    }

    fn stereo(l: Vec<f64>, r: Vec<f64>) -> ImpulseResponse {
        ImpulseResponse { sample_rate: FS, channels: vec![l, r], time_origin: 0.0 }
    }

    fn brir_noise(seed: u64, gain_l: f64, gain_r: f64) -> ImpulseResponse {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 8192;
        let mut draw = |g: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    g * v
                })
                .collect()
        };
        let l = draw(gain_l);
        let r = draw(gain_r);
        stereo(l, r)
    }

    #[test]
    fn better_ear_oracle_basics() {
        let brir = brir_noise(1, 1.0, 1.0);
        let oracle = BetterEarOracle::new(&brir, &brir, &BetterEarParams::default()).unwrap();
        assert_relative_eq!(oracle.advantage, 0.0, epsilon = 1e-12);
        // Level linearity: +10 dB SNR moves the logistic argument by +10.
        let p1 = oracle.p_correct(-14.4);
        assert_relative_eq!(p1, 0.5, epsilon = 1e-12);
        let p2 = oracle.p_correct(-4.4);
        assert_relative_eq!(p2, logistic(10.0), epsilon = 1e-12);

        // A target favoring one ear against a symmetric interferer earns a
        // positive better-ear advantage.
        let lateral = brir_noise(2, 2.0, 0.5);
        let interferer = brir_noise(3, 1.0, 1.0);
        let adv = BetterEarOracle::new(&lateral, &interferer, &BetterEarParams::default())
            .unwrap()
            .advantage;
        assert!(adv > 3.0, "lateral advantage {adv}");

        let silent = stereo(vec![0.0; 100], vec![1.0; 100]);
        assert!(matches!(
            BetterEarOracle::new(&silent, &brir, &BetterEarParams::default()),
            Err(Error::SilentBrir)
        ));
    }

    #[test]
    fn srm_examples() {
        assert_relative_eq!(compute_srm(-14.4, -19.4), 5.0, epsilon = 1e-12);
        assert_eq!(compute_srm(-3.0, -3.0), 0.0);
        assert_relative_eq!(compute_srm(-14.4, -7.2), -7.2, epsilon = 1e-12);
    }

    #[test]
    fn t_test_matches_reference_and_edge_cases() {
        let (t, df, p) = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((t - 3.464).abs() < 1e-3, "t = {t}");
        assert_eq!(df, 2.0);
        assert!((p - 0.0742).abs() < 1e-3, "p = {p}");

        let (t, _, p) = paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((t, p), (0.0, 1.0));

        assert!(matches!(
            paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]),
            Err(Error::DegenerateVariance)
        ));

        // Antisymmetry.
        let a = [1.0, 2.5, 3.0, -1.0];
        let b = [0.5, 1.0, 4.0, 0.0];
        let (t1, _, p1) = paired_t_test(&a, &b).unwrap();
        let (t2, _, p2) = paired_t_test(&b, &a).unwrap();
        assert_relative_eq!(t1, -t2, epsilon = 1e-12);
        assert_relative_eq!(p1, p2, epsilon = 1e-12);
    }
}
