//! `hallsim` — command-line front end for the auralization pipeline.
//!
//! Every artifact-writing subcommand is deterministic given its flags and
//! seeds, writes files atomically (temp + rename), and reruns byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hallsim_core::dsp::{N_BANDS, OCTAVE_CENTERS};
use hallsim_core::geom::Vec3;
use hallsim_core::ir::{
    assemble_hybrid, elst_sweep, generate_late_tail, render_events_omni, splice_energy_gain,
    sweep_rows_to_csv, ImpulseResponse, LateTailSpec,
};
use hallsim_core::ism::{early_reflections, IsmOptions, ReflectionEvent};
use hallsim_core::metrics::{analyze, AnalysisOptions};
use hallsim_core::scene::{
    build_preset_scene, default_station_room, emit_scene, eyring_t60_bands, load_scene,
    SceneConfig,
};
use hallsim_core::spatial::{
    array_to_binaural, binaural_metrics, render_scene_to_array, ArrayLayout, HrirSet,
};
use hallsim_core::srt::{
    paired_t_test, run_adaptive_track, BetterEarOracle, BetterEarParams, LogisticOracle, Oracle,
};
use hallsim_core::wav::{read_ir, write_atomic, write_ir};
use hallsim_core::{Error, Result};

const DEFAULT_RATE: f64 = 44100.0;
const DEFAULT_TAPS: usize = 380;
const DEFAULT_ELST: f64 = 0.1;
const DEFAULT_WINDOW: f64 = 0.25;
const DEFAULT_ORDER: usize = 17;
const DEFAULT_SPEAKERS: usize = 36;
const DEFAULT_DISTANCE: f64 = 2.4;

const DEFAULTS_TABLE: &str = "\
Defaults shared across subcommands:
  sample rate             44100 Hz
  delay kernel            380 taps
  early/late separation   0.1 s
  early-reflection window 0.25 s
  image-source order      12, candidate budget 10000000
  ambisonic order         17
  loudspeaker layout      ring of 36 at 2.4 m
  masking noise           65 dB SPL
  EDC truncation          -65 dB

Conventions:
  WAV files are 32-bit float, unnormalized; RMS 1.0 corresponds to 94 dB SPL.
  Each WAV gets a .json sidecar (sample rate, time origin, layout, level ref).
  Azimuths are degrees counter-clockwise from the receiver's facing (+90 = left).
  Seeds are explicit flags or config fields, never derived from the clock.

Exit codes: 2 configuration error, 3 numeric/signal error, 4 I/O error.";

/// Room auralization toolkit: hybrid impulse-response synthesis, decay and
/// clarity analysis, loudspeaker-array and binaural rendering, and simulated
/// adaptive speech-reception experiments.
#[derive(Parser)]
#[command(name = "hallsim", version, after_help = DEFAULTS_TABLE)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a scene configuration as JSON
    Scene(SceneCmd),
    /// Trace early reflections and render per-source omni impulse responses
    Simulate(SimulateCmd),
    /// Generate a diffuse, exponentially decaying late tail
    Tail(TailCmd),
    /// Splice early and late responses at a separation time
    Hybrid(HybridCmd),
    /// Decay times, clarity, and direct-to-reverberant metrics from a WAV
    Analyze(AnalyzeCmd),
    /// Analyze hybrids across a list of separation times into one CSV
    ElstSweep(ElstSweepCmd),
    /// Render a scene source to a loudspeaker array (multichannel WAV)
    RenderArray(RenderArrayCmd),
    /// Fold an array response to two ears and report ITD/ILD/IACC
    Binaural(BinauralCmd),
    /// Run batches of adaptive speech-reception-threshold tracks
    Srt(SrtCmd),
    /// Aggregate results into figure-style CSV tables
    Report(ReportCmd),
}

#[derive(Args)]
struct SceneCmd {
    /// Source layout preset: "scene1" (12 sources on a 1.6 m ring) or
    /// "scene2" (on-axis distance series); omit for the bare hall
    #[arg(long)]
    preset: Option<String>,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCmd {
    /// Scene JSON (from `hallsim scene` or hand-written)
    #[arg(long)]
    scene: PathBuf,
    /// Source id to simulate; repeatable, defaults to every source
    #[arg(long)]
    source: Vec<u32>,
    /// Early-reflection time window, seconds
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: f64,
    /// Maximum reflection order
    #[arg(long, default_value_t = 12)]
    max_order: usize,
    /// Cap on mirror candidates evaluated
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    /// Output sample rate, Hz
    #[arg(long, default_value_t = DEFAULT_RATE)]
    rate: f64,
    /// Fractional-delay kernel taps
    #[arg(long, default_value_t = DEFAULT_TAPS)]
    taps: usize,
    /// Parallel jobs across sources
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory receiving src<id>_events.json and src<id>_early.wav
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TailCmd {
    /// Scene JSON; per-band decay targets come from its absorption
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Override decay targets: 7 comma-separated T60 seconds (125 Hz…8 kHz)
    #[arg(long)]
    t60: Option<String>,
    /// Tail is exactly zero before this time, seconds
    #[arg(long, default_value_t = 0.098)]
    onset: f64,
    /// Total length, seconds; default 1.25 × max T60 + onset
    #[arg(long)]
    duration: Option<f64>,
    /// Decorrelated output channels
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Output sample rate, Hz
    #[arg(long, default_value_t = DEFAULT_RATE)]
    rate: f64,
    /// Noise seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output WAV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HybridCmd {
    /// Early-reflection WAV
    #[arg(long)]
    early: PathBuf,
    /// Late-tail WAV (single channel broadcasts across the other input)
    #[arg(long)]
    late: PathBuf,
    /// Early/late separation time, seconds
    #[arg(long, default_value_t = DEFAULT_ELST)]
    elst: f64,
    /// Skip scaling the tail to the early branch's splice-window energy
    #[arg(long)]
    no_energy_match: bool,
    /// Output WAV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct AnalyzeCmd {
    /// Impulse-response WAV
    #[arg(long)]
    ir: PathBuf,
    /// Channel to analyze
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Decay-curve truncation level, dB
    #[arg(long, default_value_t = -65.0)]
    truncation_db: f64,
    /// Direct-sound time, seconds; detected from the signal when omitted
    #[arg(long)]
    direct_time: Option<f64>,
    /// First-reflection time, seconds; switches the direct window to
    /// [direct, first reflection)
    #[arg(long)]
    first_reflection: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ElstSweepCmd {
    /// Early-reflection WAV
    #[arg(long)]
    early: PathBuf,
    /// Late-tail WAV
    #[arg(long)]
    late: PathBuf,
    /// Comma-separated separation times, seconds
    #[arg(long, default_value = "0,0.025,0.05,0.075,0.1,0.2")]
    elst_list: String,
    /// Disable the splice-window energy rescale of the late tail
    #[arg(long)]
    no_energy_match: bool,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutKind {
    /// Horizontal ring (--speakers wide) at ear height
    #[value(name = "ring")]
    Ring,
    /// 60 loudspeakers: 36 at 0° elevation, 12 at −19°, 12 at +32°
    #[value(name = "station60")]
    Station60,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long, value_enum, default_value_t = LayoutKind::Ring)]
    layout: LayoutKind,
    /// Ring size (ring layout only)
    #[arg(long, default_value_t = DEFAULT_SPEAKERS)]
    speakers: usize,
    /// Loudspeaker distance, metres
    #[arg(long, default_value_t = DEFAULT_DISTANCE)]
    distance: f64,
}

impl LayoutArgs {
    fn build(&self) -> Result<(ArrayLayout, String)> {
        match self.layout {
            LayoutKind::Ring => Ok((
                ArrayLayout::horizontal_ring(self.speakers, self.distance)?,
                format!("ring of {} at {} m", self.speakers, self.distance),
            )),
            LayoutKind::Station60 => Ok((
                ArrayLayout::station_60(self.distance)?,
                format!("station array of 60 at {} m", self.distance),
            )),
        }
    }
}

#[derive(Args)]
struct RenderArrayCmd {
    /// Scene JSON
    #[arg(long)]
    scene: PathBuf,
    /// Source id to render
    #[arg(long)]
    source: u32,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Ambisonic order
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Early/late separation time, seconds
    #[arg(long, default_value_t = DEFAULT_ELST)]
    elst: f64,
    /// Early-reflection time window, seconds
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: f64,
    /// Maximum reflection order
    #[arg(long, default_value_t = 12)]
    max_order: usize,
    /// Tail onset, seconds; default separation − 2 ms
    #[arg(long)]
    onset: Option<f64>,
    /// Tail length, seconds; default 1.25 × max T60 + onset
    #[arg(long)]
    duration: Option<f64>,
    /// Output sample rate, Hz
    #[arg(long, default_value_t = DEFAULT_RATE)]
    rate: f64,
    /// Fractional-delay kernel taps
    #[arg(long, default_value_t = DEFAULT_TAPS)]
    taps: usize,
    /// Tail noise seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Direct sound only: skip reflections and the late tail
    #[arg(long)]
    anechoic: bool,
    /// Skip scaling the tail to the early branch's splice-window energy
    #[arg(long)]
    no_energy_match: bool,
    /// Permit orders the layout cannot resolve (spatial aliasing)
    #[arg(long)]
    allow_aliasing: bool,
    /// Output multichannel WAV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BinauralCmd {
    /// Loudspeaker-array WAV (one channel per speaker, from render-array)
    #[arg(long)]
    array: PathBuf,
    #[command(flatten)]
    layout: LayoutArgs,
    /// CSV manifest of measured HRIRs: azimuth_deg,elevation_deg,filename
    /// (stereo WAVs beside the manifest); spherical-head model when omitted
    #[arg(long)]
    hrir_manifest: Option<PathBuf>,
    /// Output stereo WAV path
    #[arg(long)]
    out: PathBuf,
    /// Metrics JSON path; stdout when omitted
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct SrtCmd {
    /// Batch JSON: seeds, sentence count, start level, conditions, and
    /// optional paired comparisons
    #[arg(long)]
    config: PathBuf,
    /// Parallel jobs across tracks
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory receiving srt_tracks.csv, srt_summary.csv, srt_tests.csv
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportCmd {
    /// Directory of pipeline results (see --help for the expected names)
    #[arg(long)]
    results: PathBuf,
    /// Comma list from {elst,srt,ild,itd,iacc,c50,drr}; default all
    #[arg(long)]
    figures: Option<String>,
    /// Directory receiving the aggregated CSV tables
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Scene(c) => cmd_scene(c),
        Cmd::Simulate(c) => cmd_simulate(c),
        Cmd::Tail(c) => cmd_tail(c),
        Cmd::Hybrid(c) => cmd_hybrid(c),
        Cmd::Analyze(c) => cmd_analyze(c),
        Cmd::ElstSweep(c) => cmd_elst_sweep(c),
        Cmd::RenderArray(c) => cmd_render_array(c),
        Cmd::Binaural(c) => cmd_binaural(c),
        Cmd::Srt(c) => cmd_srt(c),
        Cmd::Report(c) => cmd_report(c),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

// --------------------------------------------------------------------------
// shared helpers

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_scene_file(path: &Path) -> Result<SceneConfig> {
    load_scene(&read_text(path)?)
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_float_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("'{t}' is not a number")))
        })
        .collect()
}

fn parse_t60_list(s: &str) -> Result<[f64; N_BANDS]> {
    let v = parse_float_list(s)?;
    if v.len() != N_BANDS {
        return Err(Error::Parse(format!("expected {N_BANDS} T60 values, got {}", v.len())));
    }
    let mut a = [0.0; N_BANDS];
    a.copy_from_slice(&v);
    Ok(a)
}

fn ring_directions(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Vec3::new(a.cos(), a.sin(), 0.0)
        })
        .collect()
}

fn max_t60(t60: &[f64; N_BANDS]) -> f64 {
    t60.iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Deterministic order-preserving parallel map; worker count never changes
/// the result.
fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs <= 1 {
        return items.iter().map(|i| f(i)).collect();
    }
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for t in 0..jobs {
            let f = &f;
            let slots = &slots;
            s.spawn(move || {
                let mut i = t;
                while i < items.len() {
                    *slots[i].lock().unwrap() = Some(f(&items[i]));
                    i += jobs;
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

// --------------------------------------------------------------------------
// scene

fn cmd_scene(c: SceneCmd) -> Result<()> {
    let base = default_station_room();
    let scene = match &c.preset {
        Some(p) => build_preset_scene(p.parse()?, &base)?,
        None => base,
    };
    emit_text(c.out.as_deref(), &emit_scene(&scene))
}

// --------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct EventRow {
    arrival_time_s: f64,
    /// Unit vector from the receiver toward the apparent source.
    doa: [f64; 3],
    band_amplitude: [f64; N_BANDS],
    order: usize,
}

#[derive(Serialize)]
struct EventsFile {
    source_id: u32,
    window_s: f64,
    max_order: usize,
    count: usize,
    events: Vec<EventRow>,
}

fn events_json(source_id: u32, window_s: f64, max_order: usize, events: &[ReflectionEvent]) -> String {
    let file = EventsFile {
        source_id,
        window_s,
        max_order,
        count: events.len(),
        events: events
            .iter()
            .map(|e| EventRow {
                arrival_time_s: e.arrival_time,
                doa: [e.doa.x, e.doa.y, e.doa.z],
                band_amplitude: e.band_amplitude,
                order: e.order,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("event serialization cannot fail");
    s.push('\n');
    s
}

fn cmd_simulate(c: SimulateCmd) -> Result<()> {
    let scene = load_scene_file(&c.scene)?;
    let ids: Vec<u32> = if c.source.is_empty() {
        scene.sources.keys().copied().collect()
    } else {
        c.source.clone()
    };
    if ids.is_empty() {
        return Err(Error::Validation("scene has no sources".into()));
    }
    for id in &ids {
        scene.source(*id)?;
    }
    fs::create_dir_all(&c.out_dir)?;
    let opts = IsmOptions {
        max_order: c.max_order,
        budget: c.budget,
        check_occlusion: true,
        max_path_length: None,
    };
    parallel_map(&ids, c.jobs, |id| {
        let events = early_reflections(&scene, *id, c.window, &opts)?;
        let ir = render_events_omni(&events, c.rate, c.taps)?;
        write_atomic(
            &c.out_dir.join(format!("src{id}_events.json")),
            events_json(*id, c.window, c.max_order, &events).as_bytes(),
        )?;
        write_ir(&c.out_dir.join(format!("src{id}_early.wav")), &ir, "omni")?;
        Ok(())
    })?;
    Ok(())
}

// --------------------------------------------------------------------------
// tail / hybrid

fn cmd_tail(c: TailCmd) -> Result<()> {
    let t60 = match (&c.t60, &c.scene) {
        (Some(list), _) => parse_t60_list(list)?,
        (None, Some(p)) => eyring_t60_bands(&load_scene_file(p)?)?,
        (None, None) => {
            return Err(Error::Validation("tail needs --scene or --t60".into()));
        }
    };
    if c.channels == 0 {
        return Err(Error::Validation("tail needs at least one channel".into()));
    }
    let duration = c.duration.unwrap_or_else(|| c.onset + 1.25 * max_t60(&t60));
    let spec = LateTailSpec {
        t60,
        onset: c.onset,
        duration,
        directions: ring_directions(c.channels),
        seed: c.seed,
    };
    let ir = generate_late_tail(&spec, c.rate)?;
    write_ir(&c.out, &ir, &format!("diffuse tail, {} channel(s)", c.channels))
}

/// Multiply every sample by `k`.
fn scale_ir(ir: &mut ImpulseResponse, k: f64) {
    for ch in &mut ir.channels {
        for v in ch.iter_mut() {
            *v *= k;
        }
    }
}

fn cmd_hybrid(c: HybridCmd) -> Result<()> {
    let early = read_ir(&c.early)?;
    let mut late = read_ir(&c.late)?;
    // Level continuity: the tail meets the modeled field's energy at the
    // splice. Skipped at elst = 0 (tail-only reference) and when disabled.
    if !c.no_energy_match && c.elst > 0.0 && c.elst.is_finite() {
        let k = splice_energy_gain(&early, &late, c.elst, 0.02)?;
        scale_ir(&mut late, k);
    }
    let ir = assemble_hybrid(&early, &late, c.elst)?;
    write_ir(&c.out, &ir, "hybrid")
}

// --------------------------------------------------------------------------
// analyze / elst-sweep

fn cmd_analyze(c: AnalyzeCmd) -> Result<()> {
    let ir = read_ir(&c.ir)?;
    let ch = ir.channels.get(c.channel).ok_or_else(|| {
        Error::Validation(format!(
            "channel {} out of range ({} channels)",
            c.channel,
            ir.channels.len()
        ))
    })?;
    let opts = AnalysisOptions {
        truncation_db: c.truncation_db,
        direct_time: c.direct_time,
        first_reflection_time: c.first_reflection,
        ..AnalysisOptions::default()
    };
    let report = analyze(ch, ir.sample_rate, &opts)?;
    let text = match c.format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
    };
    emit_text(c.out.as_deref(), &text)
}

fn cmd_elst_sweep(c: ElstSweepCmd) -> Result<()> {
    let early = read_ir(&c.early)?;
    let late = read_ir(&c.late)?;
    let list = parse_float_list(&c.elst_list)?;
    let rows = elst_sweep(&early, &late, &list, !c.no_energy_match)?;
    write_atomic(&c.out, sweep_rows_to_csv(&rows).as_bytes())
}

// --------------------------------------------------------------------------
// render-array / binaural

fn cmd_render_array(c: RenderArrayCmd) -> Result<()> {
    let scene = load_scene_file(&c.scene)?;
    scene.source(c.source)?;
    let (layout, layout_desc) = c.layout.build()?;
    if c.allow_aliasing {
        eprintln!(
            "warning: order {} exceeds what {} loudspeakers resolve; aliased output",
            c.order,
            layout.len()
        );
    }
    let opts = IsmOptions {
        max_order: if c.anechoic { 0 } else { c.max_order },
        budget: 10_000_000,
        check_occlusion: true,
        max_path_length: None,
    };
    let events = early_reflections(&scene, c.source, c.window, &opts)?;
    let onset = c.onset.unwrap_or((c.elst - 0.002).max(0.0));
    // Render the early field alone first (silent tail, early-only splice) so
    // the tail can be levelled against it before the real assembly.
    let silence = |n: usize| ImpulseResponse {
        sample_rate: c.rate,
        channels: vec![vec![0.0; n]; layout.len()],
        time_origin: 0.0,
    };
    let early_ir = render_scene_to_array(
        &events,
        &silence(((c.window + 0.05) * c.rate).round() as usize),
        &layout,
        c.order,
        f64::INFINITY,
        scene.receiver.facing_azimuth_rad(),
        c.taps,
        c.allow_aliasing,
    )?;
    let ir = if c.anechoic {
        early_ir
    } else {
        let t60 = eyring_t60_bands(&scene)?;
        let duration = c.duration.unwrap_or_else(|| onset + 1.25 * max_t60(&t60));
        let directions = layout.speakers.iter().map(|s| s.unit()).collect();
        let spec = LateTailSpec { t60, onset, duration, directions, seed: c.seed };
        let mut tail = generate_late_tail(&spec, c.rate)?;
        if !c.no_energy_match && c.elst > 0.0 && c.elst.is_finite() {
            let k = splice_energy_gain(&early_ir, &tail, c.elst, 0.02)?;
            scale_ir(&mut tail, k);
        }
        assemble_hybrid(&early_ir, &tail, c.elst)?
    };
    write_ir(&c.out, &ir, &layout_desc)
}

fn load_hrir_manifest(path: &Path, sample_rate: f64) -> Result<HrirSet> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut directions = Vec::new();
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && cols.first().map_or(false, |c| c.parse::<f64>().is_err()) {
            continue; // header row
        }
        if cols.len() != 3 {
            return Err(Error::Parse(format!(
                "{} line {}: expected azimuth_deg,elevation_deg,filename",
                path.display(),
                lineno + 1
            )));
        }
        let az: f64 = cols[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad azimuth '{}'", cols[0])))?;
        let el: f64 = cols[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad elevation '{}'", cols[1])))?;
        let ir = read_ir(&dir.join(cols[2]))?;
        if ir.channels.len() != 2 {
            return Err(Error::Validation(format!("{}: HRIR must be stereo", cols[2])));
        }
        if ir.sample_rate != sample_rate {
            return Err(Error::RateMismatch { a: ir.sample_rate, b: sample_rate });
        }
        directions.push((az.to_radians(), el.to_radians()));
        pairs.push([ir.channels[0].clone(), ir.channels[1].clone()]);
    }
    if directions.is_empty() {
        return Err(Error::Validation(format!("{}: empty HRIR manifest", path.display())));
    }
    Ok(HrirSet { directions, pairs, sample_rate })
}

fn cmd_binaural(c: BinauralCmd) -> Result<()> {
    let array = read_ir(&c.array)?;
    let (layout, _) = c.layout.build()?;
    let hrirs = match &c.hrir_manifest {
        Some(p) => load_hrir_manifest(p, array.sample_rate)?,
        None => HrirSet::spherical_head_for_layout(&layout, array.sample_rate),
    };
    let stereo = array_to_binaural(&array, &layout, &hrirs)?;
    write_ir(&c.out, &stereo, "binaural left,right")?;
    let m = binaural_metrics(&stereo)?;
    let mut json = serde_json::to_string_pretty(&m).expect("metric serialization cannot fail");
    json.push('\n');
    emit_text(c.metrics_out.as_deref(), &json)
}

// --------------------------------------------------------------------------
// srt

fn default_start_level() -> f64 {
    -8.4
}
fn default_sentences() -> usize {
    30
}
fn default_slope() -> f64 {
    1.0
}
fn default_noise_level() -> f64 {
    65.0
}
fn default_srt_offset() -> f64 {
    -14.4
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SrtConfig {
    #[serde(default = "default_start_level")]
    start_level_db: f64,
    #[serde(default = "default_sentences")]
    n_sentences: usize,
    seeds: Vec<u64>,
    conditions: Vec<SrtCondition>,
    #[serde(default)]
    comparisons: Vec<Comparison>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SrtCondition {
    name: String,
    #[serde(default)]
    start_level_db: Option<f64>,
    oracle: OracleConfig,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum OracleConfig {
    /// Analytic listener with a known threshold.
    Logistic {
        srt_true: f64,
        #[serde(default = "default_slope")]
        slope: f64,
    },
    /// Energetic better-ear listener over a target and an interferer BRIR
    /// (paths relative to the config file).
    BetterEar {
        target_brir: String,
        interferer_brir: String,
        #[serde(default = "default_noise_level")]
        noise_level_db: f64,
        #[serde(default = "default_srt_offset")]
        srt_offset: f64,
        #[serde(default = "default_slope")]
        slope: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Comparison {
    a: String,
    b: String,
}

fn build_oracle(cfg: &OracleConfig, base_dir: &Path) -> Result<Box<dyn Oracle + Send + Sync>> {
    match cfg {
        OracleConfig::Logistic { srt_true, slope } => {
            if !(*slope > 0.0) {
                return Err(Error::Range(format!("slope must be > 0, got {slope}")));
            }
            Ok(Box::new(LogisticOracle { srt_true: *srt_true, slope: *slope }))
        }
        OracleConfig::BetterEar {
            target_brir,
            interferer_brir,
            noise_level_db,
            srt_offset,
            slope,
        } => {
            if !(*slope > 0.0) {
                return Err(Error::Range(format!("slope must be > 0, got {slope}")));
            }
            let target = read_ir(&base_dir.join(target_brir))?;
            let interferer = read_ir(&base_dir.join(interferer_brir))?;
            let params = BetterEarParams {
                noise_level_db: *noise_level_db,
                srt_offset: *srt_offset,
                slope: *slope,
                weights: BetterEarParams::default().weights,
            };
            Ok(Box::new(BetterEarOracle::new(&target, &interferer, &params)?))
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_srt(c: SrtCmd) -> Result<()> {
    let cfg: SrtConfig = serde_json::from_str(&read_text(&c.config)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", c.config.display())))?;
    if cfg.seeds.is_empty() {
        return Err(Error::Validation("srt config needs at least one seed".into()));
    }
    if cfg.conditions.is_empty() {
        return Err(Error::Validation("srt config needs at least one condition".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for cond in &cfg.conditions {
        if !names.insert(cond.name.as_str()) {
            return Err(Error::Validation(format!("duplicate condition '{}'", cond.name)));
        }
    }
    let base_dir = c.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let oracles: Vec<Box<dyn Oracle + Send + Sync>> = cfg
        .conditions
        .iter()
        .map(|cond| build_oracle(&cond.oracle, &base_dir))
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, u64)> = cfg
        .conditions
        .iter()
        .enumerate()
        .flat_map(|(i, _)| cfg.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let results = parallel_map(&tasks, c.jobs, |(ci, seed)| {
        let cond = &cfg.conditions[*ci];
        let start = cond.start_level_db.unwrap_or(cfg.start_level_db);
        let r = run_adaptive_track(oracles[*ci].as_ref(), start, cfg.n_sentences, *seed, &*cond.name)?;
        Ok(r.srt_estimate)
    })?;

    fs::create_dir_all(&c.out_dir)?;
    let mut tracks = String::from("condition,seed,srt_db\n");
    let mut by_condition: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ((ci, seed), srt) in tasks.iter().zip(&results) {
        tracks.push_str(&format!("{},{seed},{srt:.6}\n", cfg.conditions[*ci].name));
        by_condition.entry(*ci).or_default().push(*srt);
    }
    write_atomic(&c.out_dir.join("srt_tracks.csv"), tracks.as_bytes())?;

    let mut summary = String::from("condition,n,mean_srt_db,sd_srt_db\n");
    for (ci, vals) in &by_condition {
        let (mean, sd) = mean_sd(vals);
        summary.push_str(&format!(
            "{},{},{mean:.6},{sd:.6}\n",
            cfg.conditions[*ci].name,
            vals.len()
        ));
    }
    write_atomic(&c.out_dir.join("srt_summary.csv"), summary.as_bytes())?;

    if !cfg.comparisons.is_empty() {
        let index: BTreeMap<&str, usize> = cfg
            .conditions
            .iter()
            .enumerate()
            .map(|(i, cond)| (cond.name.as_str(), i))
            .collect();
        let mut tests = String::from("condition_a,condition_b,n,mean_diff_db,t,df,p\n");
        for cmp in &cfg.comparisons {
            let ia = *index
                .get(cmp.a.as_str())
                .ok_or_else(|| Error::Validation(format!("unknown condition '{}'", cmp.a)))?;
            let ib = *index
                .get(cmp.b.as_str())
                .ok_or_else(|| Error::Validation(format!("unknown condition '{}'", cmp.b)))?;
            let a = &by_condition[&ia];
            let b = &by_condition[&ib];
            let (t, df, p) = paired_t_test(a, b)?;
            let diff = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
            tests.push_str(&format!(
                "{},{},{},{diff:.6},{t:.6},{df:.0},{p:.6}\n",
                cmp.a,
                cmp.b,
                a.len()
            ));
        }
        write_atomic(&c.out_dir.join("srt_tests.csv"), tests.as_bytes())?;
    }
    Ok(())
}

// --------------------------------------------------------------------------
// report

#[derive(Clone, Copy, PartialEq, Eq)]
enum Figure {
    Elst,
    Srt,
    Ild,
    Itd,
    Iacc,
    C50,
    Drr,
}

const ALL_FIGURES: [Figure; 7] = [
    Figure::Elst,
    Figure::Srt,
    Figure::Ild,
    Figure::Itd,
    Figure::Iacc,
    Figure::C50,
    Figure::Drr,
];

fn parse_figures(s: &str) -> Result<Vec<Figure>> {
    s.split(',')
        .map(|t| match t.trim() {
            "elst" => Ok(Figure::Elst),
            "srt" => Ok(Figure::Srt),
            "ild" => Ok(Figure::Ild),
            "itd" => Ok(Figure::Itd),
            "iacc" => Ok(Figure::Iacc),
            "c50" => Ok(Figure::C50),
            "drr" => Ok(Figure::Drr),
            other => Err(Error::Parse(format!(
                "unknown figure '{other}' (expected elst, srt, ild, itd, iacc, c50, drr)"
            ))),
        })
        .collect()
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// `pos<N>_<suffix>` file scan; returns (position, path) sorted by position.
fn scan_positions(dir: &Path, suffix: &str) -> Result<Vec<(u32, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(rest) = name.strip_prefix("pos") else { continue };
        let Some(num) = rest.strip_suffix(suffix) else { continue };
        if let Ok(pos) = num.parse::<u32>() {
            found.push((pos, entry.path()));
        }
    }
    found.sort_by_key(|(p, _)| *p);
    Ok(found)
}

fn json_number(v: &serde_json::Value, keys: &[&str]) -> Option<f64> {
    let mut cur = v;
    for k in keys {
        cur = cur.get(k)?;
    }
    cur.as_f64()
}

fn cmd_report(c: ReportCmd) -> Result<()> {
    let figures = match &c.figures {
        Some(s) => parse_figures(s)?,
        None => ALL_FIGURES.to_vec(),
    };
    if !c.results.is_dir() {
        return Err(Error::MissingResults(format!(
            "{} is not a directory",
            c.results.display()
        )));
    }

    let mut missing: Vec<String> = Vec::new();
    // (filename, contents) pairs, written only after every input resolves.
    let mut outputs: Vec<(&'static str, String)> = Vec::new();

    for fig in &figures {
        match fig {
            Figure::Elst => {
                let src = c.results.join("elst_sweep.csv");
                if src.is_file() {
                    outputs.push(("elst_sweep.csv", read_text(&src)?));
                } else {
                    missing.push("elst_sweep.csv".into());
                }
            }
            Figure::Srt => {
                let src = c.results.join("srt_tracks.csv");
                if !src.is_file() {
                    missing.push("srt_tracks.csv".into());
                    continue;
                }
                let text = read_text(&src)?;
                let mut order: Vec<String> = Vec::new();
                let mut by_cond: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for (i, line) in text.lines().enumerate() {
                    if i == 0 || line.trim().is_empty() {
                        continue;
                    }
                    let cols: Vec<&str> = line.split(',').collect();
                    if cols.len() != 3 {
                        return Err(Error::Parse(format!(
                            "srt_tracks.csv line {}: expected condition,seed,srt_db",
                            i + 1
                        )));
                    }
                    let srt: f64 = cols[2]
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad srt '{}'", cols[2])))?;
                    if !by_cond.contains_key(cols[0]) {
                        order.push(cols[0].to_string());
                    }
                    by_cond.entry(cols[0].to_string()).or_default().push(srt);
                }
                if order.is_empty() {
                    missing.push("srt_tracks.csv rows".into());
                    continue;
                }
                let mut out = String::from("condition,n,mean_srt_db,sd_srt_db\n");
                for name in &order {
                    let vals = &by_cond[name];
                    let (mean, sd) = mean_sd(vals);
                    out.push_str(&format!("{name},{},{mean:.6},{sd:.6}\n", vals.len()));
                }
                outputs.push(("srt_summary.csv", out));
            }
            Figure::Ild | Figure::Itd | Figure::Iacc => {
                let (fname, key, scale): (&'static str, &str, f64) = match fig {
                    Figure::Ild => ("ild.csv", "ild", 1.0),
                    Figure::Itd => ("itd.csv", "itd", 1e3),
                    _ => ("iacc.csv", "iacc", 1.0),
                };
                if outputs.iter().any(|(n, _)| *n == fname) {
                    continue;
                }
                let anechoic = scan_positions(&c.results, "_anechoic_binaural.json")?;
                let reverberant = scan_positions(&c.results, "_reverberant_binaural.json")?;
                if anechoic.is_empty() && reverberant.is_empty() {
                    missing.push("pos<N>_{anechoic,reverberant}_binaural.json".into());
                    continue;
                }
                let rev: BTreeMap<u32, PathBuf> = reverberant.into_iter().collect();
                let mut positions: Vec<(u32, PathBuf, PathBuf)> = Vec::new();
                let mut incomplete = false;
                for (pos, a_path) in &anechoic {
                    match rev.get(pos) {
                        Some(r_path) => positions.push((*pos, a_path.clone(), r_path.clone())),
                        None => {
                            missing.push(format!("pos{pos}_reverberant_binaural.json"));
                            incomplete = true;
                        }
                    }
                }
                let have_an: std::collections::BTreeSet<u32> =
                    anechoic.iter().map(|(p, _)| *p).collect();
                for pos in rev.keys() {
                    if !have_an.contains(pos) {
                        missing.push(format!("pos{pos}_anechoic_binaural.json"));
                        incomplete = true;
                    }
                }
                if incomplete {
                    continue;
                }
                let unit = match fig {
                    Figure::Ild => "_db",
                    Figure::Itd => "_ms",
                    _ => "",
                };
                let mut out = format!("position,anechoic{unit},reverberant{unit}\n");
                for (pos, a_path, r_path) in &positions {
                    let a = json_number(&read_json_value(a_path)?, &[key]).ok_or_else(|| {
                        Error::Parse(format!("{}: no numeric '{key}'", a_path.display()))
                    })?;
                    let r = json_number(&read_json_value(r_path)?, &[key]).ok_or_else(|| {
                        Error::Parse(format!("{}: no numeric '{key}'", r_path.display()))
                    })?;
                    out.push_str(&format!("{pos},{:.6},{:.6}\n", a * scale, r * scale));
                }
                outputs.push((fname, out));
            }
            Figure::C50 | Figure::Drr => {
                let (fname, band_key, speech_key): (&'static str, &str, &str) = match fig {
                    Figure::C50 => ("c50.csv", "c50", "speech_weighted_c50"),
                    _ => ("drr.csv", "drr", "speech_weighted_drr"),
                };
                if outputs.iter().any(|(n, _)| *n == fname) {
                    continue;
                }
                let reports = scan_positions(&c.results, "_report.json")?;
                if reports.is_empty() {
                    missing.push("pos<N>_report.json".into());
                    continue;
                }
                let mut out = String::from("position,speech_weighted_db");
                for center in OCTAVE_CENTERS {
                    out.push_str(&format!(",{center}hz"));
                }
                out.push('\n');
                for (pos, path) in &reports {
                    let v = read_json_value(path)?;
                    out.push_str(&format!("{pos}"));
                    match json_number(&v, &[speech_key, "value"]) {
                        Some(x) => out.push_str(&format!(",{x:.6}")),
                        None => out.push(','),
                    }
                    for b in 0..N_BANDS {
                        let cell = v
                            .get("bands")
                            .and_then(|bands| bands.get(b))
                            .and_then(|band| band.get(band_key))
                            .and_then(|m| m.get("value"))
                            .and_then(|x| x.as_f64());
                        match cell {
                            Some(x) => out.push_str(&format!(",{x:.6}")),
                            None => out.push(','),
                        }
                    }
                    out.push('\n');
                }
                outputs.push((fname, out));
            }
        }
    }

    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingResults(format!(
            "in {}: {}",
            c.results.display(),
            missing.join(", ")
        )));
    }
    fs::create_dir_all(&c.out_dir)?;
    for (name, text) in &outputs {
        write_atomic(&c.out_dir.join(name), text.as_bytes())?;
    }
    Ok(())
}
