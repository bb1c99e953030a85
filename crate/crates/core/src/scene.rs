//! Scene description: room geometry, materials, sources, receiver,
//! environment, plus the parametric station-hall preset and its calibration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dsp::N_BANDS;
use crate::error::{Error, Result};
use crate::geom::{point_in_polyhedron, Polygon, Vec3};

/// Default hall dimensions (metres): length × width × height.
pub const DEFAULT_HALL_DIMS: [f64; 3] = [120.0, 11.0, 5.0];

/// Default octave-band decay-time targets for the station-hall preset (s).
pub const DEFAULT_HALL_T30: [f64; N_BANDS] = [1.73, 2.44, 2.05, 1.71, 1.47, 1.11, 0.65];

/// Default per-band air attenuation at 20 °C / 50 % RH (dB per metre).
pub const DEFAULT_AIR_ATTENUATION: [f64; N_BANDS] =
    [0.0002, 0.0006, 0.002, 0.005, 0.01, 0.03, 0.1];

/// Listening height used by the presets (metres).
pub const DEFAULT_EAR_HEIGHT: f64 = 1.4;

/// Default source reference level, dB SPL at 1 m.
pub const DEFAULT_SOURCE_LEVEL_DB: f64 = 65.0;

/// Speed of sound in air at `temperature` °C. Valid for [-30, 50] °C.
pub fn speed_of_sound(temperature_c: f64) -> Result<f64> {
    if !(-30.0..=50.0).contains(&temperature_c) {
        return Err(Error::Range(format!(
            "temperature {temperature_c} °C outside [-30, 50]"
        )));
    }
    Ok(331.3 * (1.0 + temperature_c / 273.15).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Material {
    /// Energy absorption coefficient per octave band, each in [0, 1].
    pub absorption: [f64; N_BANDS],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum Directivity {
    Omni,
    /// g(θ) = a + (1-a)·cos θ, floored at 0.
    Cardioid { a: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub polygon: Polygon,
    pub material_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: Vec3,
    /// Unit vector the source points at (|facing| = 1 within 1e-9).
    pub facing: Vec3,
    #[serde(default = "default_directivity")]
    pub directivity: Directivity,
    /// dB SPL at 1 m on axis.
    #[serde(default = "default_level")]
    pub reference_level_db: f64,
}

fn default_directivity() -> Directivity {
    Directivity::Omni
}

fn default_level() -> f64 {
    DEFAULT_SOURCE_LEVEL_DB
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub position: Vec3,
    /// Facing azimuth, stored in degrees (the file-schema unit) so scenes
    /// round-trip bit-exactly; use [`ReceiverSpec::facing_azimuth_rad`].
    pub facing_azimuth_deg: f64,
}

impl ReceiverSpec {
    pub fn facing_azimuth_rad(&self) -> f64 {
        self.facing_azimuth_deg.to_radians()
    }

    /// Unit vector of the facing direction (horizontal plane).
    pub fn facing_dir(&self) -> Vec3 {
        let a = self.facing_azimuth_rad();
        Vec3::new(a.cos(), a.sin(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_c: f64,
    pub relative_humidity_pct: f64,
    pub speed_of_sound_mps: f64,
    pub air_attenuation_db_per_m: [f64; N_BANDS],
}

impl Environment {
    pub fn from_temperature(temperature_c: f64, relative_humidity_pct: f64) -> Result<Self> {
        Ok(Environment {
            temperature_c,
            relative_humidity_pct,
            speed_of_sound_mps: speed_of_sound(temperature_c)?,
            air_attenuation_db_per_m: DEFAULT_AIR_ATTENUATION,
        })
    }
}

impl Default for Environment {
    fn default() -> Self {
        Environment::from_temperature(20.0, 50.0).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub room: Vec<Surface>,
    pub materials: BTreeMap<String, Material>,
    /// Numbered sources; ids are unique by construction of the map.
    pub sources: BTreeMap<u32, SourceSpec>,
    pub receiver: ReceiverSpec,
    pub environment: Environment,
}

impl SceneConfig {
    pub fn source(&self, id: u32) -> Result<&SourceSpec> {
        self.sources
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("no source with id {id}")))
    }

    pub fn material(&self, id: &str) -> Result<&Material> {
        self.materials
            .get(id)
            .ok_or_else(|| Error::Validation(format!("unknown material '{id}'")))
    }

    /// Enclosed volume via the divergence theorem (outward normals).
    pub fn volume(&self) -> f64 {
        let mut v = 0.0;
        for s in &self.room {
            let p = &s.polygon;
            v += p.centroid().dot(p.plane().normal) * p.area();
        }
        (v / 3.0).abs()
    }

    pub fn surface_area(&self) -> f64 {
        self.room.iter().map(|s| s.polygon.area()).sum()
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let polys: Vec<Polygon> = self.room.iter().map(|s| s.polygon.clone()).collect();
        point_in_polyhedron(&polys, p)
    }

    /// Checks every documented invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.room.is_empty() {
            return Err(Error::Validation("room has no surfaces".into()));
        }
        for s in &self.room {
            if !self.materials.contains_key(&s.material_id) {
                return Err(Error::Validation(format!(
                    "unknown material '{}'",
                    s.material_id
                )));
            }
        }
        for (name, m) in &self.materials {
            for (b, a) in m.absorption.iter().enumerate() {
                if !(0.0..=1.0).contains(a) || !a.is_finite() {
                    return Err(Error::Validation(format!(
                        "material '{name}' band {b} absorption {a} outside [0, 1]"
                    )));
                }
            }
        }
        for (id, src) in &self.sources {
            if (src.facing.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "source {id} facing vector is not unit length"
                )));
            }
            if !src.reference_level_db.is_finite() {
                return Err(Error::Validation(format!(
                    "source {id} reference level not finite"
                )));
            }
            if !src.position.is_finite() {
                return Err(Error::Validation(format!("source {id} position not finite")));
            }
            if let Directivity::Cardioid { a } = src.directivity {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Validation(format!(
                        "source {id} directivity parameter {a} outside [0, 1]"
                    )));
                }
            }
        }
        if !self.contains_point(self.receiver.position) {
            return Err(Error::Validation("receiver outside room volume".into()));
        }
        if self.environment.speed_of_sound_mps <= 0.0 {
            return Err(Error::Validation("speed of sound must be > 0".into()));
        }
        if self.environment.air_attenuation_db_per_m.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return Err(Error::Validation("air attenuation must be ≥ 0 per band".into()));
        }
        Ok(())
    }
}

/// Result of [`calibrate_absorption`]; `clamped` marks bands whose target
/// was unreachable for the geometry (α pinned to [0.01, 0.99]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub material: Material,
    pub clamped: [bool; N_BANDS],
}

impl Calibration {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

/// Inverts the Eyring decay formula per band:
/// α_b = 1 − exp(−0.161·V / (S·T60_b)), clamped to [0.01, 0.99].
pub fn calibrate_absorption(volume: f64, surface_area: f64, target_t60: &[f64; N_BANDS]) -> Result<Calibration> {
    if volume <= 0.0 || surface_area <= 0.0 {
        return Err(Error::Geometry("calibration needs positive volume and area".into()));
    }
    let mut absorption = [0.0; N_BANDS];
    let mut clamped = [false; N_BANDS];
    for b in 0..N_BANDS {
        let t = target_t60[b];
        if !(t > 0.0) {
            return Err(Error::Range(format!("target T60 band {b} must be > 0, got {t}")));
        }
        let alpha = 1.0 - (-0.161 * volume / (surface_area * t)).exp();
        let pinned = alpha.clamp(0.01, 0.99);
        clamped[b] = pinned != alpha;
        absorption[b] = pinned;
    }
    Ok(Calibration { material: Material { absorption }, clamped })
}

/// Forward Eyring prediction, the inverse of [`calibrate_absorption`].
pub fn eyring_t60(volume: f64, surface_area: f64, alpha: f64) -> f64 {
    -0.161 * volume / (surface_area * (1.0 - alpha).ln())
}

/// Per-band Eyring decay prediction from the scene's area-weighted mean
/// absorption. A hall whose single material came from
/// [`calibrate_absorption`] returns the calibration targets.
pub fn eyring_t60_bands(scene: &SceneConfig) -> Result<[f64; N_BANDS]> {
    scene.validate()?;
    let area = scene.surface_area();
    let volume = scene.volume();
    if !(area > 0.0 && volume > 0.0) {
        return Err(Error::Geometry("decay prediction needs positive volume and area".into()));
    }
    let mut mean_alpha = [0.0; N_BANDS];
    for s in &scene.room {
        let m = scene.material(&s.material_id)?;
        let a = s.polygon.area();
        for b in 0..N_BANDS {
            mean_alpha[b] += a * m.absorption[b];
        }
    }
    let mut t60 = [0.0; N_BANDS];
    for b in 0..N_BANDS {
        let alpha = (mean_alpha[b] / area).clamp(1e-6, 1.0 - 1e-9);
        t60[b] = eyring_t60(volume, area, alpha);
    }
    Ok(t60)
}

/// Axis-aligned shoebox [0,lx]×[0,ly]×[0,lz] with outward-wound faces.
pub fn shoebox_surfaces(lx: f64, ly: f64, lz: f64, material_id: &str) -> Result<Vec<Surface>> {
    if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
        return Err(Error::Geometry(format!("box dimensions must be positive: {lx}×{ly}×{lz}")));
    }
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let faces: [Vec<Vec3>; 6] = [
        // floor z=0 (outward -z)
        vec![v(0., 0., 0.), v(0., ly, 0.), v(lx, ly, 0.), v(lx, 0., 0.)],
        // ceiling z=lz (outward +z)
        vec![v(0., 0., lz), v(lx, 0., lz), v(lx, ly, lz), v(0., ly, lz)],
        // y=0 wall (outward -y)
        vec![v(0., 0., 0.), v(lx, 0., 0.), v(lx, 0., lz), v(0., 0., lz)],
        // y=ly wall (outward +y)
        vec![v(0., ly, 0.), v(0., ly, lz), v(lx, ly, lz), v(lx, ly, 0.)],
        // x=0 wall (outward -x)
        vec![v(0., 0., 0.), v(0., 0., lz), v(0., ly, lz), v(0., ly, 0.)],
        // x=lx wall (outward +x)
        vec![v(lx, 0., 0.), v(lx, ly, 0.), v(lx, ly, lz), v(lx, 0., lz)],
    ];
    faces
        .into_iter()
        .map(|verts| {
            Ok(Surface { polygon: Polygon::new(verts)?, material_id: material_id.to_string() })
        })
        .collect()
}

/// Parametric station hall: a shoebox with a single calibrated material,
/// receiver at the hall centre at listening height, facing +x.
pub fn default_station_room_with(dims: [f64; 3], target_t30: &[f64; N_BANDS]) -> Result<SceneConfig> {
    let [lx, ly, lz] = dims;
    let room = shoebox_surfaces(lx, ly, lz, "hall")?;
    let volume = lx * ly * lz;
    let area = 2.0 * (lx * ly + lx * lz + ly * lz);
    let cal = calibrate_absorption(volume, area, target_t30)?;
    let mut materials = BTreeMap::new();
    materials.insert("hall".to_string(), cal.material);
    let receiver = ReceiverSpec {
        position: Vec3::new(lx / 2.0, ly / 2.0, DEFAULT_EAR_HEIGHT.min(lz / 2.0)),
        facing_azimuth_deg: 0.0,
    };
    let scene = SceneConfig {
        room,
        materials,
        sources: BTreeMap::new(),
        receiver,
        environment: Environment::default(),
    };
    scene.validate()?;
    Ok(scene)
}

pub fn default_station_room() -> SceneConfig {
    default_station_room_with(DEFAULT_HALL_DIMS, &DEFAULT_HALL_T30).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenePreset {
    /// 12 sources on a 1.6 m ring around the receiver, 30° apart,
    /// numbered counter-clockwise from the facing direction.
    Scene1,
    /// On-axis distance series: position 1 at 1.6 m plus positions 13-17 at
    /// {1.01, 2.53, 4.01, 6.37, 10.1} m, all in front of the receiver.
    Scene2,
}

impl std::str::FromStr for ScenePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scene1" => Ok(ScenePreset::Scene1),
            "scene2" => Ok(ScenePreset::Scene2),
            other => Err(Error::Parse(format!("unknown scene preset '{other}'"))),
        }
    }
}

/// Distances of the on-axis series, indexed by source id.
pub const SCENE2_DISTANCES: [(u32, f64); 6] =
    [(13, 1.01), (1, 1.6), (14, 2.53), (15, 4.01), (16, 6.37), (17, 10.1)];

fn place_source(scene: &SceneConfig, azimuth_rad: f64, distance: f64) -> SourceSpec {
    let r = scene.receiver.position;
    let theta = scene.receiver.facing_azimuth_rad() + azimuth_rad;
    let dir = Vec3::new(theta.cos(), theta.sin(), 0.0);
    let position = r + dir * distance;
    // Sources aim back at the receiver.
    let facing = (r - position).normalized();
    SourceSpec {
        position,
        facing,
        directivity: Directivity::Omni,
        reference_level_db: DEFAULT_SOURCE_LEVEL_DB,
    }
}

/// Populates `base` with one of the preset source layouts.
pub fn build_preset_scene(preset: ScenePreset, base: &SceneConfig) -> Result<SceneConfig> {
    base.validate()?;
    let mut scene = base.clone();
    scene.sources.clear();
    match preset {
        ScenePreset::Scene1 => {
            for k in 0..12u32 {
                let azimuth = (k as f64) * 30f64.to_radians();
                scene.sources.insert(k + 1, place_source(&scene, azimuth, 1.6));
            }
        }
        ScenePreset::Scene2 => {
            for (id, dist) in SCENE2_DISTANCES {
                scene.sources.insert(id, place_source(&scene, 0.0, dist));
            }
        }
    }
    for (id, src) in &scene.sources {
        if !scene.contains_point(src.position) {
            return Err(Error::Geometry(format!("source {id} falls outside the room")));
        }
    }
    scene.validate()?;
    Ok(scene)
}

// ---------------------------------------------------------------------------
// JSON schema (positions in metres, angles in degrees, 7 floats per material)

#[derive(Serialize, Deserialize)]
struct SurfaceFile {
    vertices: Vec<[f64; 3]>,
    material: String,
}

#[derive(Serialize, Deserialize)]
struct SourceFile {
    id: u32,
    position: [f64; 3],
    facing: [f64; 3],
    #[serde(default = "default_directivity")]
    directivity: Directivity,
    #[serde(default = "default_level")]
    reference_level_db: f64,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    room: Vec<SurfaceFile>,
    materials: BTreeMap<String, Material>,
    sources: Vec<SourceFile>,
    receiver: ReceiverSpec,
    environment: Environment,
}

/// Parses and fully validates a scene from JSON text.
pub fn load_scene(text: &str) -> Result<SceneConfig> {
    let file: SceneFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut room = Vec::with_capacity(file.room.len());
    for s in file.room {
        room.push(Surface {
            polygon: Polygon::new(s.vertices.into_iter().map(Vec3::from).collect())?,
            material_id: s.material,
        });
    }
    let mut sources = BTreeMap::new();
    for s in file.sources {
        let spec = SourceSpec {
            position: s.position.into(),
            facing: s.facing.into(),
            directivity: s.directivity,
            reference_level_db: s.reference_level_db,
        };
        if sources.insert(s.id, spec).is_some() {
            return Err(Error::Validation(format!("duplicate source id {}", s.id)));
        }
    }
    let scene = SceneConfig {
        room,
        materials: file.materials,
        sources,
        receiver: file.receiver,
        environment: file.environment,
    };
    scene.validate()?;
    Ok(scene)
}

/// Serializes a scene to the JSON schema accepted by [`load_scene`].
pub fn emit_scene(scene: &SceneConfig) -> String {
    let file = SceneFile {
        room: scene
            .room
            .iter()
            .map(|s| SurfaceFile {
                vertices: s.polygon.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
                material: s.material_id.clone(),
            })
            .collect(),
        materials: scene.materials.clone(),
        sources: scene
            .sources
            .iter()
            .map(|(id, s)| SourceFile {
                id: *id,
                position: s.position.into(),
                facing: s.facing.into(),
                directivity: s.directivity,
                reference_level_db: s.reference_level_db,
            })
            .collect(),
        receiver: scene.receiver,
        environment: scene.environment.clone(),
    };
    serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
}
