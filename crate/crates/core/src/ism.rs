//! Image-source engine for arbitrary polyhedral rooms: mirror enumeration
//! with validity/visibility testing, and conversion of visible images into
//! timed, banded reflection events at the receiver.

use crate::dsp::N_BANDS;
use crate::error::{Error, Result};
use crate::geom::{Plane, Polygon, Vec3, GRAZE_TOL};
use crate::scene::{Directivity, Environment, ReceiverSpec, SceneConfig, SourceSpec};

#[derive(Debug, Clone)]
pub struct ImageSource {
    pub position: Vec3,
    pub order: usize,
    /// Surface indices in mirroring order (first mirror first).
    pub surface_path: Vec<usize>,
    /// Accumulated reflection loss ∏√(1−α_b) per band.
    pub band_gain: [f64; N_BANDS],
    /// Unit vector of the first path leg, leaving the real source.
    pub emission_dir: Vec3,
}

#[derive(Debug, Clone, Copy)]
pub struct ReflectionEvent {
    /// Seconds from emission.
    pub arrival_time: f64,
    /// Unit vector from the receiver toward the apparent source.
    pub doa: Vec3,
    /// Linear gain per band: reflection loss × (1 m / d) × air loss × directivity.
    pub band_amplitude: [f64; N_BANDS],
    pub order: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IsmOptions {
    pub max_order: usize,
    /// Cap on mirror candidates evaluated before aborting.
    pub budget: u64,
    /// Occlusion testing of every path leg (no-op for convex rooms).
    pub check_occlusion: bool,
    /// Optional path-length ceiling (metres). Images farther than this are
    /// not emitted, and — when the receiver is strictly interior to every
    /// wall plane, where |child−R| > |parent−R| is guaranteed — their whole
    /// subtree is skipped. Combined with a matching time window in
    /// `collect_reflections` this changes nothing in the output.
    pub max_path_length: Option<f64>,
}

impl Default for IsmOptions {
    fn default() -> Self {
        IsmOptions {
            max_order: 12,
            budget: 10_000_000,
            check_occlusion: true,
            max_path_length: None,
        }
    }
}

/// Source directivity gain for an emission direction at angle θ from the
/// facing axis: omni ⇒ 1, cardioid family ⇒ a + (1−a)·cos θ, floored at 0.
pub fn directivity_gain(pattern: Directivity, cos_theta: f64) -> f64 {
    match pattern {
        Directivity::Omni => 1.0,
        Directivity::Cardioid { a } => (a + (1.0 - a) * cos_theta).max(0.0),
    }
}

struct Enumerator<'a> {
    surfaces: &'a [Polygon],
    planes: Vec<Plane>,
    /// √(1−α_b) per surface.
    refl: Vec<[f64; N_BANDS]>,
    receiver: Vec3,
    source: Vec3,
    opts: IsmOptions,
    /// Receiver strictly interior to every plane ⇒ image-receiver distance
    /// grows monotonically down any valid branch, licensing subtree cuts.
    monotone_ok: bool,
    visited: u64,
    out: Vec<ImageSource>,
}

impl<'a> Enumerator<'a> {
    /// Walks the receiver-side unfolding of a mirror path. `prefix[i]` is
    /// the source image after mirrors `path[0..=i]`. Returns the first
    /// reflection point (on `path[0]`) when the path is geometrically
    /// realizable, i.e. every leg pierces its polygon front-face-first and
    /// no other polygon occludes a leg.
    fn backtrace(&self, path: &[usize], prefix: &[Vec3]) -> Option<Vec3> {
        let mut p = self.receiver;
        for i in (0..path.len()).rev() {
            let poly = &self.surfaces[path[i]];
            let plane = self.planes[path[i]];
            // The leg must approach the wall from the room side.
            if plane.signed_distance(p) > GRAZE_TOL {
                return None;
            }
            let target = prefix[i];
            let t = poly.segment_hit(p, target)?;
            let q = p + (target - p) * t;
            if self.opts.check_occlusion && self.occluded(p, q) {
                return None;
            }
            p = q;
        }
        if self.opts.check_occlusion && self.occluded(p, self.source) {
            return None;
        }
        Some(p)
    }

    /// Whether any polygon blocks the open segment a→b. Hits within the
    /// grazing tolerance of either endpoint are the path's own reflection
    /// points and do not count.
    fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let len = a.distance(b);
        if len <= GRAZE_TOL {
            return false;
        }
        for poly in self.surfaces {
            if let Some(t) = poly.segment_hit(a, b) {
                let margin = GRAZE_TOL / len;
                if t > margin && t < 1.0 - margin {
                    return true;
                }
            }
        }
        false
    }

    fn emit(&mut self, pos: Vec3, path: &[usize], prefix: &[Vec3], gain: [f64; N_BANDS]) {
        let q1 = if path.is_empty() {
            if self.opts.check_occlusion && self.occluded(self.receiver, self.source) {
                return;
            }
            self.receiver
        } else {
            match self.backtrace(path, prefix) {
                Some(q) => q,
                None => return,
            }
        };
        let leg = q1 - self.source;
        let emission_dir = if leg.norm() > GRAZE_TOL {
            leg.normalized()
        } else {
            // Source on the first wall: fall back to the apparent direction.
            (pos - self.receiver).normalized()
        };
        self.out.push(ImageSource {
            position: pos,
            order: path.len(),
            surface_path: path.to_vec(),
            band_gain: gain,
            emission_dir,
        });
    }

    fn dfs(
        &mut self,
        pos: Vec3,
        path: &mut Vec<usize>,
        prefix: &mut Vec<Vec3>,
        gain: [f64; N_BANDS],
    ) -> Result<()> {
        let dist = pos.distance(self.receiver);
        let within = self.opts.max_path_length.map_or(true, |l| dist <= l);
        if within {
            self.emit(pos, path, prefix, gain);
        } else if self.monotone_ok {
            // Every descendant is at least this far: cut the subtree.
            return Ok(());
        }
        if path.len() >= self.opts.max_order {
            return Ok(());
        }
        for s in 0..self.surfaces.len() {
            self.visited += 1;
            if self.visited > self.opts.budget {
                return Err(Error::BudgetExceeded { visited: self.visited, cap: self.opts.budget });
            }
            // Validity: the image being mirrored must lie strictly on the
            // room side of the mirror plane. An invalid image cannot have
            // visible descendants, so the subtree dies here.
            if self.planes[s].signed_distance(pos) >= 0.0 {
                continue;
            }
            let child = self.planes[s].mirror(pos);
            let mut g = gain;
            for b in 0..N_BANDS {
                g[b] *= self.refl[s][b];
            }
            path.push(s);
            prefix.push(child);
            self.dfs(child, path, prefix, g)?;
            path.pop();
            prefix.pop();
        }
        Ok(())
    }
}

/// Enumerates all validity- and visibility-passing image sources of
/// `source_id` up to `max_order` for the scene's receiver.
pub fn enumerate_images(
    scene: &SceneConfig,
    source_id: u32,
    opts: &IsmOptions,
) -> Result<Vec<ImageSource>> {
    let source = scene.source(source_id)?;
    let surfaces: Vec<Polygon> = scene.room.iter().map(|s| s.polygon.clone()).collect();
    let mut refl = Vec::with_capacity(scene.room.len());
    for s in &scene.room {
        let m = scene.material(&s.material_id)?;
        let mut r = [0.0; N_BANDS];
        for b in 0..N_BANDS {
            r[b] = (1.0 - m.absorption[b]).max(0.0).sqrt();
        }
        refl.push(r);
    }
    let planes: Vec<Plane> = surfaces.iter().map(|p| p.plane()).collect();
    let receiver = scene.receiver.position;
    let monotone_ok = planes.iter().all(|p| p.signed_distance(receiver) < -GRAZE_TOL);
    let mut e = Enumerator {
        surfaces: &surfaces,
        planes,
        refl,
        receiver,
        source: source.position,
        opts: *opts,
        monotone_ok,
        visited: 0,
        out: Vec::new(),
    };
    e.dfs(source.position, &mut Vec::new(), &mut Vec::new(), [1.0; N_BANDS])?;
    let mut images = e.out;
    // Deterministic order regardless of traversal schedule.
    images.sort_by(|a, b| {
        a.order
            .cmp(&b.order)
            .then_with(|| a.surface_path.cmp(&b.surface_path))
    });
    Ok(images)
}

/// Converts visible images into receiver events inside the time window.
pub fn collect_reflections(
    images: &[ImageSource],
    source: &SourceSpec,
    receiver: &ReceiverSpec,
    env: &Environment,
    window_s: f64,
) -> Result<Vec<ReflectionEvent>> {
    if !(window_s > 0.0) {
        return Err(Error::Range(format!("window must be > 0 s, got {window_s}")));
    }
    let c = env.speed_of_sound_mps;
    let mut events = Vec::with_capacity(images.len());
    for img in images {
        let d = img.position.distance(receiver.position);
        if d <= GRAZE_TOL {
            return Err(Error::Geometry("image coincides with receiver".into()));
        }
        let t = d / c;
        if t > window_s {
            continue;
        }
        let cos_theta = source.facing.dot(img.emission_dir);
        let dir_gain = directivity_gain(source.directivity, cos_theta);
        let mut amp = [0.0; N_BANDS];
        for b in 0..N_BANDS {
            let air = 10f64.powf(-env.air_attenuation_db_per_m[b] * d / 20.0);
            amp[b] = img.band_gain[b] * (1.0 / d) * air * dir_gain;
        }
        events.push(ReflectionEvent {
            arrival_time: t,
            doa: (img.position - receiver.position).normalized(),
            band_amplitude: amp,
            order: img.order,
        });
    }
    events.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.order.cmp(&b.order))
            .then(a.doa.x.total_cmp(&b.doa.x))
            .then(a.doa.y.total_cmp(&b.doa.y))
            .then(a.doa.z.total_cmp(&b.doa.z))
    });
    Ok(events)
}

/// Enumerate + collect in one step, with the image enumeration pruned to
/// the window's reachable path length (output is identical to the unpruned
/// enumeration filtered by the same window).
pub fn early_reflections(
    scene: &SceneConfig,
    source_id: u32,
    window_s: f64,
    opts: &IsmOptions,
) -> Result<Vec<ReflectionEvent>> {
    if !(window_s > 0.0) {
        return Err(Error::Range(format!("window must be > 0 s, got {window_s}")));
    }
    let mut pruned = *opts;
    let limit = scene.environment.speed_of_sound_mps * window_s;
    pruned.max_path_length = Some(match opts.max_path_length {
        Some(l) => l.min(limit),
        None => limit,
    });
    let images = enumerate_images(scene, source_id, &pruned)?;
    collect_reflections(
        &images,
        scene.source(source_id)?,
        &scene.receiver,
        &scene.environment,
        window_s,
    )
}
