//! 32-bit float WAV I/O for impulse responses. Samples are written exactly
//! as computed (no normalization); a JSON sidecar next to each file records
//! the precise sample rate, time origin, channel layout, and the level
//! convention (RMS 1.0 ↔ 94 dB SPL).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::ImpulseResponse;
use crate::srt::DB_SPL_FULL_SCALE;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WavSidecar {
    pub sample_rate: f64,
    pub channels: usize,
    pub time_origin_s: f64,
    /// Sound pressure level represented by a signal of RMS 1.0.
    pub db_spl_reference: f64,
    /// Human-readable channel layout ("omni", "ring36", "binaural", …).
    pub layout: String,
}

/// Sidecar lives next to the audio file with `.json` appended to the full
/// file name (`ir.wav` → `ir.wav.json`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Write `bytes` to `path` via a temp file in the same directory plus a
/// rename, so an interrupted run never leaves a half-written file and
/// reruns replace outputs in one step.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Validation(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode_wav(ir: &ImpulseResponse) -> Result<Vec<u8>> {
    ir.validate()?;
    let spec = hound::WavSpec {
        channels: ir.channels.len() as u16,
        sample_rate: ir.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for i in 0..ir.len() {
            for ch in &ir.channels {
                writer.write_sample(ch[i] as f32)?;
            }
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

/// Write the response and its sidecar. Both writes are atomic and the
/// output is byte-identical for identical inputs.
pub fn write_ir(path: &Path, ir: &ImpulseResponse, layout: &str) -> Result<()> {
    let bytes = encode_wav(ir)?;
    write_atomic(path, &bytes)?;
    let sidecar = WavSidecar {
        sample_rate: ir.sample_rate,
        channels: ir.channels.len(),
        time_origin_s: ir.time_origin,
        db_spl_reference: DB_SPL_FULL_SCALE,
        layout: layout.to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| Error::Parse(format!("sidecar encode: {e}")))?;
    json.push(b'\n');
    write_atomic(&sidecar_path(path), &json)?;
    Ok(())
}

/// Read a 32-bit float WAV. When the sidecar is present it supplies the
/// exact sample rate and time origin; otherwise the header rate is used and
/// the origin is zero.
pub fn read_ir(path: &Path) -> Result<ImpulseResponse> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(Error::Validation(format!(
            "{}: expected 32-bit float WAV",
            path.display()
        )));
    }
    let nch = spec.channels as usize;
    if nch == 0 {
        return Err(Error::Validation(format!("{}: zero channels", path.display())));
    }
    let mut channels = vec![Vec::new(); nch];
    for (i, s) in reader.samples::<f32>().enumerate() {
        channels[i % nch].push(s? as f64);
    }
    let mut ir = ImpulseResponse {
        sample_rate: spec.sample_rate as f64,
        channels,
        time_origin: 0.0,
    };
    let sc = sidecar_path(path);
    if sc.exists() {
        let text = fs::read_to_string(&sc)?;
        let sidecar: WavSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("sidecar {}: {e}", sc.display())))?;
        if sidecar.channels != nch {
            return Err(Error::Validation(format!(
                "sidecar {} says {} channels, WAV has {nch}",
                sc.display(),
                sidecar.channels
            )));
        }
        ir.sample_rate = sidecar.sample_rate;
        ir.time_origin = sidecar.time_origin_s;
    }
    ir.validate()?;
    Ok(ir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ir() -> ImpulseResponse {
        ImpulseResponse {
            sample_rate: 44100.0,
            channels: vec![vec![0.0, 1.0, -0.5, 0.25], vec![2.0, 0.0, 0.125, -4.0]],
            time_origin: 0.0125,
        }
    }

    #[test]
    fn wav_round_trip_preserves_f32_exact_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ir.wav");
        let ir = sample_ir();
        write_ir(&path, &ir, "test pair").unwrap();
        let back = read_ir(&path).unwrap();
        // Every sample above is exactly representable in f32.
        assert_eq!(back.channels, ir.channels);
        assert_eq!(back.sample_rate, ir.sample_rate);
        assert_eq!(back.time_origin, ir.time_origin);

        let sidecar: WavSidecar =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(sidecar.db_spl_reference, 94.0);
        assert_eq!(sidecar.layout, "test pair");
        assert_eq!(sidecar.channels, 2);
    }

    #[test]
    fn values_beyond_unity_survive_unclipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loud.wav");
        let ir = ImpulseResponse {
            sample_rate: 48000.0,
            channels: vec![vec![8.0, -16.0, 3.5]],
            time_origin: 0.0,
        };
        write_ir(&path, &ir, "omni").unwrap();
        let back = read_ir(&path).unwrap();
        assert_eq!(back.channels[0], vec![8.0, -16.0, 3.5]);
    }

    #[test]
    fn rewrites_are_byte_identical_and_leave_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ir.wav");
        let ir = sample_ir();
        write_ir(&path, &ir, "omni").unwrap();
        let first = fs::read(&path).unwrap();
        let first_json = fs::read(sidecar_path(&path)).unwrap();
        write_ir(&path, &ir, "omni").unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert_eq!(fs::read(sidecar_path(&path)).unwrap(), first_json);
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty(), "temp files left behind: {leftovers:?}");
    }

    #[test]
    fn missing_sidecar_defaults_to_header_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.wav");
        write_ir(&path, &sample_ir(), "omni").unwrap();
        fs::remove_file(sidecar_path(&path)).unwrap();
        let back = read_ir(&path).unwrap();
        assert_eq!(back.sample_rate, 44100.0);
        assert_eq!(back.time_origin, 0.0);
    }

    #[test]
    fn wrong_format_and_missing_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("int.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1000i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_ir(&path), Err(Error::Validation(_))));
        let err = read_ir(&dir.path().join("absent.wav")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
