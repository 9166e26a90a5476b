//! Keypoint trajectories: data model, validation, resampling, file formats
//! and a synthetic gait generator.
//!
//! # Text format (`.traj`)
//!
//! ```text
//! CBTRAJ 1
//! id=<id> embodiment=<embodiment id> frame_rate_hz=<f64> applied_scale=<f64> keypoints=<K> frames=<N>
//! <t> <x0> <y0> <z0> <x1> ... <z(K-1)>      (N lines)
//! ```
//!
//! Fields are whitespace separated; meters and seconds. Ids must not contain
//! whitespace or `=`. Numbers are written in shortest round-trip form, so a
//! text file reproduces the in-memory trajectory exactly.
//!
//! # Binary format (`.trajb`)
//!
//! Little-endian, frame-major:
//!
//! | bytes | content |
//! |------:|---------|
//! | 4 | magic `CBTB` |
//! | 4 | u32 version (1) |
//! | 4 | u32 keypoint count K |
//! | 8 | u64 frame count N |
//! | 8 | f64 frame rate (Hz) |
//! | 8 | f64 applied scale |
//! | 8 | f64 first timestamp t0 (s) |
//! | 4 + n | u32 length, UTF-8 trajectory id |
//! | 4 + n | u32 length, UTF-8 embodiment id |
//! | N x K x 3 x 4 | f32 keypoint coordinates, frame by frame |
//!
//! Timestamps are implicit: frame `i` is at `t0 + i / rate`. Coordinates are
//! stored in single precision.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embodiment::{Embodiment, KinematicTree, RootPose};
use crate::{Error, Result, Vec3};

pub const TEXT_MAGIC: &str = "CBTRAJ";
pub const BINARY_MAGIC: &[u8; 4] = b"CBTB";
pub const FORMAT_VERSION: u32 = 1;

/// Plausible upper bound on pelvis speed used by the continuity check.
pub const MAX_PLAUSIBLE_SPEED_MPS: f64 = 10.0;

/// Allowed relative deviation of a bone length from its median.
pub const BONE_LENGTH_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time_s: f64,
    pub keypoints: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub embodiment_id: String,
    pub frame_rate_hz: f64,
    pub applied_scale: f64,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.time_s - a.time_s,
            _ => 0.0,
        }
    }

    /// Translates every keypoint.
    pub fn translated(&self, offset: Vec3) -> Trajectory {
        let mut out = self.clone();
        for f in &mut out.frames {
            for k in &mut f.keypoints {
                *k += offset;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trajectory_id: String,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every trajectory check against the embodiment. Never fails; the
/// report carries the outcome of each check.
pub fn validate(traj: &Trajectory, emb: &Embodiment) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, failure: Option<String>| {
        checks.push(CheckResult {
            name: name.to_string(),
            passed: failure.is_none(),
            detail: failure.unwrap_or_else(|| "ok".to_string()),
        });
    };

    push(
        "embodiment_id",
        (traj.embodiment_id != emb.id)
            .then(|| format!("trajectory embodiment {:?} != {:?}", traj.embodiment_id, emb.id)),
    );
    push(
        "frame_rate",
        (!(traj.frame_rate_hz > 0.0 && traj.frame_rate_hz.is_finite()))
            .then(|| format!("frame rate must be positive, got {}", traj.frame_rate_hz)),
    );
    push(
        "applied_scale",
        (!(traj.applied_scale > 0.0 && traj.applied_scale.is_finite()))
            .then(|| format!("applied scale must be positive, got {}", traj.applied_scale)),
    );
    push("frame_count", (traj.frames.len() < 2).then(|| format!("need at least 2 frames, got {}", traj.frames.len())));

    let k = emb.keypoint_count();
    let bad_count = traj.frames.iter().position(|f| f.keypoints.len() != k);
    push(
        "keypoint_count",
        bad_count.map(|i| format!("frame {i}: expected {k} keypoints, got {}", traj.frames[i].keypoints.len())),
    );

    let non_finite = traj.frames.iter().enumerate().find_map(|(i, f)| {
        if !f.time_s.is_finite() {
            return Some(format!("frame {i}: non-finite timestamp"));
        }
        f.keypoints
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
            .map(|j| format!("frame {i}: non-finite keypoint {j}"))
    });
    let finite = non_finite.is_none();
    push("finite", non_finite);

    let dt = 1.0 / traj.frame_rate_hz;
    let timing = traj.frames.windows(2).enumerate().find_map(|(i, w)| {
        let gap = w[1].time_s - w[0].time_s;
        if !(gap > 0.0) {
            Some(format!("frame {}: timestamps not strictly increasing", i + 1))
        } else if (gap - dt).abs() > 1e-6 {
            Some(format!("frame {}: spacing {gap} s differs from 1/rate = {dt} s", i + 1))
        } else {
            None
        }
    });
    push("timestamps", timing);

    let structural = bad_count.is_none() && finite;
    let pelvis = emb.pelvis_index;
    if structural {
        let below = traj.frames.iter().position(|f| f.keypoints[pelvis].z <= 0.0);
        push("pelvis_height", below.map(|i| format!("frame {i}: pelvis at or below the floor")));

        let max_step = MAX_PLAUSIBLE_SPEED_MPS * dt;
        let jump = traj.frames.windows(2).enumerate().find_map(|(i, w)| {
            let d = (w[1].keypoints[pelvis] - w[0].keypoints[pelvis]).norm();
            (d > max_step).then(|| {
                format!(
                    "frame {}: pelvis moved {d:.3} m in one frame (limit {max_step:.3} m at {MAX_PLAUSIBLE_SPEED_MPS} m/s)",
                    i + 1
                )
            })
        });
        push("continuity", jump);

        let mut bone = None;
        if !traj.frames.is_empty() {
            for (e, &(p, c)) in emb.skeleton_edges.iter().enumerate() {
                let lengths: Vec<f64> = traj.frames.iter().map(|f| (f.keypoints[c] - f.keypoints[p]).norm()).collect();
                let med = median(lengths.clone());
                if let Some(i) = lengths.iter().position(|&l| (l - med).abs() > BONE_LENGTH_TOLERANCE * med) {
                    bone = Some(format!(
                        "edge {e} ({}-{}): frame {i} length {:.4} m deviates more than {:.0}% from median {med:.4} m",
                        emb.keypoint_names[p],
                        emb.keypoint_names[c],
                        lengths[i],
                        BONE_LENGTH_TOLERANCE * 100.0
                    ));
                    break;
                }
            }
        }
        push("bone_lengths", bone);
    } else {
        for name in ["pelvis_height", "continuity", "bone_lengths"] {
            push(name, Some("skipped: keypoint structure invalid".to_string()));
        }
    }

    ValidationReport { trajectory_id: traj.id.clone(), checks }
}

/// Linear interpolation onto uniform timestamps `t0 + i / target_rate`
/// spanning the original range. The last original frame is always kept.
pub fn resample(traj: &Trajectory, target_rate_hz: f64) -> Result<Trajectory> {
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::domain(format!("target rate must be positive, got {target_rate_hz}")));
    }
    if traj.frames.len() < 2 {
        return Err(Error::domain("resampling needs at least 2 frames"));
    }
    let t0 = traj.frames[0].time_s;
    let duration = traj.duration_s();
    let steps = (duration * target_rate_hz + 1e-9).floor() as usize;
    let mut frames = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for i in 0..=steps {
        let t = if i == steps && (steps as f64 / target_rate_hz - duration).abs() < 1e-9 {
            traj.frames.last().unwrap().time_s
        } else {
            t0 + i as f64 / target_rate_hz
        };
        while seg + 2 < traj.frames.len() && traj.frames[seg + 1].time_s <= t {
            seg += 1;
        }
        let (a, b) = (&traj.frames[seg], &traj.frames[seg + 1]);
        let u = ((t - a.time_s) / (b.time_s - a.time_s)).clamp(0.0, 1.0);
        let keypoints = if u == 0.0 {
            a.keypoints.clone()
        } else if u == 1.0 {
            b.keypoints.clone()
        } else {
            a.keypoints.iter().zip(&b.keypoints).map(|(p, q)| p + (q - p) * u).collect()
        };
        frames.push(Frame { time_s: t, keypoints });
    }
    Ok(Trajectory { frames, frame_rate_hz: target_rate_hz, ..traj.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitProfile {
    Flat,
    Crouched,
    SideStep,
}

impl GaitProfile {
    pub const ALL: [GaitProfile; 3] = [GaitProfile::Flat, GaitProfile::Crouched, GaitProfile::SideStep];
}

impl std::str::FromStr for GaitProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(GaitProfile::Flat),
            "crouched" => Ok(GaitProfile::Crouched),
            "side_step" | "side-step" => Ok(GaitProfile::SideStep),
            other => Err(Error::config(format!("unknown gait profile {other:?}"))),
        }
    }
}

/// Pelvis height ratio of the crouched profile.
pub const CROUCH_FACTOR: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub duration_s: f64,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub seed: u64,
    pub profile: GaitProfile,
    /// Ground-plane start position of the pelvis.
    pub start: [f64; 2],
    /// Facing direction about +z.
    pub heading_rad: f64,
    /// Relative amplitude of the seeded phase/amplitude jitter.
    pub perturbation: f64,
}

impl WalkParams {
    pub fn new(profile: GaitProfile, duration_s: f64, seed: u64) -> Self {
        WalkParams {
            duration_s,
            speed_mps: 1.0,
            frame_rate_hz: 30.0,
            seed,
            profile,
            start: [0.0, 0.0],
            heading_rad: 0.0,
            perturbation: 0.05,
        }
    }
}

/// Nominal gait constants derived from the skeleton.
#[derive(Debug, Clone, Copy)]
pub struct GaitShape {
    /// Step cadence in gait cycles per second.
    pub cycle_hz: f64,
    /// Pelvis height at zero oscillation.
    pub pelvis_height_m: f64,
    /// Pelvis vertical oscillation amplitude (twice per cycle).
    pub bob_amplitude_m: f64,
    pub foot_lift_m: f64,
    pub arm_swing_rad: f64,
    /// Per-cycle phase offset in radians.
    pub phase_rad: f64,
}

fn named(emb: &Embodiment, name: &str) -> Option<usize> {
    emb.keypoint_names.iter().position(|n| n == name)
}

struct LegChain {
    hip: usize,
    knee: usize,
    ankle: usize,
    foot: usize,
    thigh: f64,
    shank: f64,
    /// Foot keypoint offset from the ankle in the heading frame.
    foot_offset: Vec3,
    /// Ankle height above the floor with the foot flat.
    ankle_height: f64,
}

fn leg_chain(emb: &Embodiment, side: &str) -> Result<LegChain> {
    let get = |part: &str| {
        named(emb, &format!("{side}_{part}"))
            .ok_or_else(|| Error::config(format!("embodiment {:?} lacks keypoint {side}_{part}", emb.id)))
    };
    let (hip, knee, ankle, foot) = (get("hip")?, get("knee")?, get("ankle")?, get("foot")?);
    let rest = emb.rest_pose();
    let foot_offset = rest[foot] - rest[ankle];
    let foot_radius = emb
        .skeleton_edges
        .iter()
        .zip(&emb.capsule_radii_m)
        .filter(|(&(p, c), _)| c == foot || p == foot)
        .map(|(_, &r)| r)
        .fold(0.0, f64::max);
    Ok(LegChain {
        hip,
        knee,
        ankle,
        foot,
        thigh: (rest[knee] - rest[hip]).norm(),
        shank: (rest[ankle] - rest[knee]).norm(),
        foot_offset,
        ankle_height: -foot_offset.z + foot_radius,
    })
}

/// Places knee and ankle for a hip at `hip` reaching for `target`, with the
/// knee bending toward `forward`. Unreachable targets straighten the leg
/// along the hip-target direction, leaving the ankle above the target.
fn leg_ik(hip: Vec3, target: Vec3, forward: Vec3, thigh: f64, shank: f64) -> (Vec3, Vec3) {
    let to = target - hip;
    let d = to.norm().max(1e-9);
    let dir = to / d;
    let reach = thigh + shank;
    let d = d.min(reach * (1.0 - 1e-9)).max((thigh - shank).abs() + 1e-9);
    let ankle = hip + dir * d;
    let a = (thigh * thigh - shank * shank + d * d) / (2.0 * d);
    let h = (thigh * thigh - a * a).max(0.0).sqrt();
    let bend = (forward - dir * forward.dot(&dir)).try_normalize(1e-9).unwrap_or(forward);
    (hip + dir * a + bend * h, ankle)
}

/// Deterministic sinusoidal gait over the embodiment skeleton.
///
/// The pelvis advances at `speed_mps` (forward for `flat`/`crouched`,
/// leftward for `side_step`) with pelvis height
/// `f * (H + b * cos(2 * phase))` where `f` is 1 or [`CROUCH_FACTOR`].
/// Feet follow a planted/lifted cycle and legs are solved by two-link IK so
/// that foot capsules stay on or above the floor. The upper body is posed by
/// forward kinematics: arm swing, and a forward trunk lean when crouched.
pub fn synthesize_walk(emb: &Embodiment, params: &WalkParams) -> Result<Trajectory> {
    let shape = gait_shape(emb, params)?;
    let n = (params.duration_s * params.frame_rate_hz).round() as usize;
    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / params.frame_rate_hz;
            Ok(Frame { time_s: t, keypoints: gait_pose(emb, params, &shape, t)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        id: format!("synth-{:?}-{}", params.profile, params.seed).to_lowercase(),
        embodiment_id: emb.id.clone(),
        frame_rate_hz: params.frame_rate_hz,
        applied_scale: 1.0,
        frames,
    })
}

/// Gait constants for `params`, including the seeded jitter.
pub fn gait_shape(emb: &Embodiment, params: &WalkParams) -> Result<GaitShape> {
    if !(params.duration_s > 0.0 && params.speed_mps > 0.0 && params.frame_rate_hz > 0.0) {
        return Err(Error::domain("duration, speed and frame rate must be positive"));
    }
    let left = leg_chain(emb, "left")?;
    let rest = emb.rest_pose();
    let hip_drop = -(rest[left.hip] - rest[emb.pelvis_index]).z;
    let leg = left.thigh + left.shank;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = params.perturbation;
    let mut jitter = || 1.0 + p * rng.random_range(-1.0..=1.0);
    let cadence = match params.profile {
        GaitProfile::SideStep => 1.2,
        _ => 0.9,
    };
    let cycle_hz = cadence * jitter();
    let bob = 0.012 * jitter();
    let lift = 0.08 * jitter();
    let arm = 0.35 * jitter();
    let phase = TAU * p * rng.random_range(-1.0..=1.0);
    Ok(GaitShape {
        cycle_hz,
        pelvis_height_m: hip_drop + 0.92 * leg + left.ankle_height,
        bob_amplitude_m: bob,
        foot_lift_m: lift,
        arm_swing_rad: arm,
        phase_rad: phase,
    })
}

fn gait_pose(emb: &Embodiment, params: &WalkParams, shape: &GaitShape, t: f64) -> Result<Vec<Vec3>> {
    let crouch = params.profile == GaitProfile::Crouched;
    let factor = if crouch { CROUCH_FACTOR } else { 1.0 };
    let phase = TAU * shape.cycle_hz * t + shape.phase_rad;
    let (sh, ch) = params.heading_rad.sin_cos();
    let forward = Vec3::new(ch, sh, 0.0);
    let left_dir = Vec3::new(-sh, ch, 0.0);
    let travel = match params.profile {
        GaitProfile::SideStep => left_dir,
        _ => forward,
    };
    let ground = Vec3::new(params.start[0], params.start[1], 0.0) + travel * (params.speed_mps * t);
    let pelvis_z = factor * (shape.pelvis_height_m + shape.bob_amplitude_m * (2.0 * phase).cos());

    // Upper body and rest legs by forward kinematics.
    let mut tree = KinematicTree::from_embodiment(emb);
    tree.root = RootPose { position: ground + Vec3::new(0.0, 0.0, pelvis_z), yaw_rad: params.heading_rad };
    let mut angles = vec![0.0; emb.keypoint_count()];
    if let Some(s) = named(emb, "spine1") {
        angles[s] = if crouch { 0.35 } else { 0.0 };
    }
    for (side, sign) in [("left", 1.0), ("right", -1.0)] {
        if let Some(s) = named(emb, &format!("{side}_shoulder")) {
            angles[s] = -sign * shape.arm_swing_rad * phase.sin();
        }
        if let Some(e) = named(emb, &format!("{side}_elbow")) {
            angles[e] = -0.3;
        }
    }
    let mut kp = tree.forward_kinematics(&angles)?;

    // Legs: foot targets cycle between planted (stance) and lifted (swing).
    let stride = params.speed_mps / shape.cycle_hz;
    for (side, offset) in [("left", 0.0), ("right", PI)] {
        let chain = leg_chain(emb, side)?;
        let u = (phase + offset).rem_euclid(TAU);
        let hip = kp[chain.hip];
        let hip_ground = Vec3::new(hip.x, hip.y, 0.0);
        let swing = (-u.sin()).max(0.0);
        let target = hip_ground
            + travel * (0.2 * stride * u.cos())
            + Vec3::new(0.0, 0.0, chain.ankle_height + shape.foot_lift_m * swing.powi(3));
        let (knee, ankle) = leg_ik(hip, target, forward, chain.thigh, chain.shank);
        let (fx, fy) = (chain.foot_offset.x, chain.foot_offset.y);
        kp[chain.knee] = knee;
        kp[chain.ankle] = ankle;
        kp[chain.foot] = ankle + forward * fx + left_dir * fy + Vec3::new(0.0, 0.0, chain.foot_offset.z);
    }
    Ok(kp)
}

fn fmt_f64(v: f64) -> String {
    // `{}` prints the shortest representation that round-trips.
    format!("{v}")
}

pub fn write_text<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    check_id(&traj.id)?;
    check_id(&traj.embodiment_id)?;
    let k = traj.frames.first().map_or(0, |f| f.keypoints.len());
    writeln!(w, "{TEXT_MAGIC} {FORMAT_VERSION}")?;
    writeln!(
        w,
        "id={} embodiment={} frame_rate_hz={} applied_scale={} keypoints={k} frames={}",
        traj.id,
        traj.embodiment_id,
        fmt_f64(traj.frame_rate_hz),
        fmt_f64(traj.applied_scale),
        traj.frames.len()
    )?;
    let mut line = String::new();
    for f in &traj.frames {
        if f.keypoints.len() != k {
            return Err(Error::domain("frames disagree on keypoint count"));
        }
        line.clear();
        line.push_str(&fmt_f64(f.time_s));
        for p in &f.keypoints {
            for v in p.iter() {
                line.push(' ');
                line.push_str(&fmt_f64(*v));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::domain(format!("id {id:?} must be non-empty without whitespace or '='")));
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R, source: &str) -> Result<Trajectory> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::format(source.to_string(), format!("unexpected end of file, expected {what}"))),
        }
    };
    let at = |line: usize| format!("{source}:{line}");

    let (ln, magic) = next("magic line")?;
    let expected = format!("{TEXT_MAGIC} {FORMAT_VERSION}");
    if magic.trim() != expected {
        return Err(Error::format(at(ln), format!("expected {expected:?}, found {:?}", magic.trim())));
    }
    let (ln, header) = next("header line")?;
    let mut fields = std::collections::BTreeMap::new();
    for tok in header.split_whitespace() {
        let (k, v) =
            tok.split_once('=').ok_or_else(|| Error::format(at(ln), format!("malformed header field {tok:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let field =
        |k: &str| fields.get(k).cloned().ok_or_else(|| Error::format(at(ln), format!("missing header field {k:?}")));
    let num = |k: &str| -> Result<f64> {
        field(k)?.parse::<f64>().map_err(|e| Error::format(at(ln), format!("header field {k:?}: {e}")))
    };
    let int = |k: &str| -> Result<usize> {
        field(k)?.parse::<usize>().map_err(|e| Error::format(at(ln), format!("header field {k:?}: {e}")))
    };
    let id = field("id")?;
    let embodiment_id = field("embodiment")?;
    let frame_rate_hz = num("frame_rate_hz")?;
    let applied_scale = num("applied_scale")?;
    let k = int("keypoints")?;
    let n = int("frames")?;

    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, line) = next("frame line")?;
        let values = line
            .split_whitespace()
            .enumerate()
            .map(|(col, tok)| tok.parse::<f64>().map_err(|e| Error::format(at(ln), format!("column {}: {e}", col + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 1 + 3 * k {
            return Err(Error::format(at(ln), format!("expected {} values, found {}", 1 + 3 * k, values.len())));
        }
        let keypoints = values[1..].chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        frames.push(Frame { time_s: values[0], keypoints });
    }
    if let Ok((ln, extra)) = next("") {
        if !extra.trim().is_empty() {
            return Err(Error::format(at(ln), format!("trailing data after {n} frames")));
        }
    }
    Ok(Trajectory { id, embodiment_id, frame_rate_hz, applied_scale, frames })
}

pub fn write_binary<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let k = traj.frames.first().map_or(0, |f| f.keypoints.len());
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(k as u32).to_le_bytes())?;
    w.write_all(&(traj.frames.len() as u64).to_le_bytes())?;
    w.write_all(&traj.frame_rate_hz.to_le_bytes())?;
    w.write_all(&traj.applied_scale.to_le_bytes())?;
    let t0 = traj.frames.first().map_or(0.0, |f| f.time_s);
    w.write_all(&t0.to_le_bytes())?;
    for s in [&traj.id, &traj.embodiment_id] {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        w.write_all(s.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(k * 12);
    for f in &traj.frames {
        if f.keypoints.len() != k {
            return Err(Error::domain("frames disagree on keypoint count"));
        }
        buf.clear();
        for p in &f.keypoints {
            for v in p.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R, source: &str) -> Result<Trajectory> {
    let mut offset = 0usize;
    let mut take = |r: &mut R, n: usize, what: &str| -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b)
            .map_err(|_| Error::format(format!("{source}@{offset}"), format!("truncated while reading {what}")))?;
        offset += n;
        Ok(b)
    };
    let magic = take(&mut r, 4, "magic")?;
    if magic != BINARY_MAGIC {
        return Err(Error::format(format!("{source}@0"), "bad magic bytes"));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap());
    let f64_at = |b: Vec<u8>| f64::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(&mut r, 4, "version")?);
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("{source}@4"), format!("unsupported version {version}")));
    }
    let k = u32_at(take(&mut r, 4, "keypoint count")?) as usize;
    let n = u64::from_le_bytes(take(&mut r, 8, "frame count")?.try_into().unwrap()) as usize;
    let frame_rate_hz = f64_at(take(&mut r, 8, "frame rate")?);
    let applied_scale = f64_at(take(&mut r, 8, "applied scale")?);
    let t0 = f64_at(take(&mut r, 8, "first timestamp")?);
    let mut strings = Vec::new();
    for what in ["trajectory id", "embodiment id"] {
        let len = u32_at(take(&mut r, 4, what)?) as usize;
        let bytes = take(&mut r, len, what)?;
        strings.push(
            String::from_utf8(bytes).map_err(|_| Error::format(source.to_string(), format!("{what} is not UTF-8")))?,
        );
    }
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let b = take(&mut r, k * 12, "frame data")?;
        let keypoints = b
            .chunks_exact(12)
            .map(|c| {
                let f = |j: usize| f32::from_le_bytes(c[j..j + 4].try_into().unwrap()) as f64;
                Vec3::new(f(0), f(4), f(8))
            })
            .collect();
        frames.push(Frame { time_s: t0 + i as f64 / frame_rate_hz, keypoints });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format(format!("{source}@{offset}"), "trailing bytes after last frame"));
    }
    let embodiment_id = strings.pop().unwrap();
    let id = strings.pop().unwrap();
    Ok(Trajectory { id, embodiment_id, frame_rate_hz, applied_scale, frames })
}

/// Reads a trajectory file, choosing the format from the magic bytes.
pub fn load(path: &std::path::Path) -> Result<Trajectory> {
    let bytes = std::fs::read(path)?;
    let source = path.display().to_string();
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes[..], &source)
    } else {
        read_text(&bytes[..], &source)
    }
}

/// Writes binary when the extension is `trajb`, text otherwise.
pub fn save(traj: &Trajectory, path: &std::path::Path) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "trajb") {
        write_binary(traj, &mut buf)?;
    } else {
        write_text(traj, &mut buf)?;
    }
    crate::io::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb() -> Embodiment {
        Embodiment::default_humanoid()
    }

    fn linear(n: usize, rate: f64) -> Trajectory {
        let frames = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                Frame {
                    time_s: t,
                    keypoints: (0..24).map(|k| Vec3::new(t, 0.5 * t + k as f64, 1.0 + 0.1 * t)).collect(),
                }
            })
            .collect();
        Trajectory {
            id: "lin".into(),
            embodiment_id: "humanoid-1p32".into(),
            frame_rate_hz: rate,
            applied_scale: 1.0,
            frames,
        }
    }

    #[test]
    fn synthetic_walk_passes_validation() {
        let e = emb();
        for profile in [GaitProfile::Flat, GaitProfile::Crouched, GaitProfile::SideStep] {
            let t = synthesize_walk(&e, &WalkParams::new(profile, 4.0, 3)).unwrap();
            let r = validate(&t, &e);
            assert!(r.passed(), "{profile:?}: {:?}", r.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn frame_count_is_duration_times_rate() {
        let t = synthesize_walk(&emb(), &WalkParams::new(GaitProfile::Flat, 10.0, 0)).unwrap();
        assert_eq!(t.len(), 300);
    }

    #[test]
    fn flat_pelvis_height_is_steady() {
        let e = emb();
        let t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 10.0, 5)).unwrap();
        let z: Vec<f64> = t.frames.iter().map(|f| f.keypoints[0].z).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        let leg = leg_chain(&e, "left").unwrap();
        assert!(sd < 0.05 * (leg.thigh + leg.shank));
    }

    #[test]
    fn crouch_ratio() {
        let e = emb();
        let mean_z = |p| {
            let t = synthesize_walk(&e, &WalkParams::new(p, 10.0, 9)).unwrap();
            t.frames.iter().map(|f| f.keypoints[0].z).sum::<f64>() / t.len() as f64
        };
        let ratio = mean_z(GaitProfile::Crouched) / mean_z(GaitProfile::Flat);
        assert!((ratio - 0.7).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn feet_never_sink_into_floor() {
        let e = emb();
        for profile in [GaitProfile::Flat, GaitProfile::Crouched, GaitProfile::SideStep] {
            let t = synthesize_walk(&e, &WalkParams::new(profile, 5.0, 1)).unwrap();
            for f in &t.frames {
                for (&(p, c), &r) in e.skeleton_edges.iter().zip(&e.capsule_radii_m) {
                    let low = f.keypoints[p].z.min(f.keypoints[c].z) - r;
                    assert!(low > -1e-9, "{profile:?} edge {p}-{c} reaches {low}");
                }
            }
        }
    }

    #[test]
    fn walk_is_deterministic_and_seed_sensitive() {
        let e = emb();
        let a = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 2.0, 1)).unwrap();
        let b = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 2.0, 1)).unwrap();
        let c = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 2.0, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn nan_keypoint_is_reported_with_frame() {
        let e = emb();
        let mut t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 1.0, 0)).unwrap();
        t.frames[7].keypoints[3].y = f64::NAN;
        let r = validate(&t, &e);
        assert!(!r.passed());
        let c = r.check("finite").unwrap();
        assert!(!c.passed && c.detail.contains("frame 7"));
    }

    #[test]
    fn teleport_fails_continuity() {
        let e = emb();
        let mut t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 2.0, 0)).unwrap();
        for f in &mut t.frames[20..] {
            for k in &mut f.keypoints {
                k.x += 1.2;
            }
        }
        let r = validate(&t, &e);
        let c = r.check("continuity").unwrap();
        assert!(!c.passed && c.detail.contains("frame 20"), "{}", c.detail);
        assert!(r.check("bone_lengths").unwrap().passed);
    }

    #[test]
    fn stretched_bone_fails() {
        let e = emb();
        let mut t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 2.0, 0)).unwrap();
        t.frames[10].keypoints[15].z += 0.5;
        assert!(!validate(&t, &e).check("bone_lengths").unwrap().passed);
    }

    #[test]
    fn resample_identity_and_linearity() {
        let t = linear(31, 30.0);
        let same = resample(&t, 30.0).unwrap();
        assert_eq!(same.len(), t.len());
        for (a, b) in same.frames.iter().zip(&t.frames) {
            for (p, q) in a.keypoints.iter().zip(&b.keypoints) {
                assert!((p - q).amax() < 1e-9);
            }
        }
        let up = resample(&t, 60.0).unwrap();
        assert_eq!(up.len(), 61);
        for i in 0..30 {
            let mid = &up.frames[2 * i + 1].keypoints;
            let (a, b) = (&up.frames[2 * i].keypoints, &up.frames[2 * i + 2].keypoints);
            for k in 0..24 {
                assert!((mid[k] - (a[k] + b[k]) * 0.5).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn downsample_frame_count() {
        let t = linear(91, 30.0);
        assert!((t.duration_s() - 3.0).abs() < 1e-12);
        assert_eq!(resample(&t, 10.0).unwrap().len(), 31);
        assert!(resample(&linear(1, 30.0), 10.0).is_err());
        assert!(resample(&t, 0.0).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = synthesize_walk(&emb(), &WalkParams::new(GaitProfile::SideStep, 1.0, 4)).unwrap();
        let mut buf = Vec::new();
        write_text(&t, &mut buf).unwrap();
        assert_eq!(read_text(&buf[..], "mem").unwrap(), t);
    }

    #[test]
    fn binary_round_trip_within_f32() {
        let t = synthesize_walk(&emb(), &WalkParams::new(GaitProfile::Flat, 1.0, 4)).unwrap();
        let mut buf = Vec::new();
        write_binary(&t, &mut buf).unwrap();
        assert_eq!(&buf[..4], BINARY_MAGIC);
        let back = read_binary(&buf[..], "mem").unwrap();
        assert_eq!(back.len(), t.len());
        for (a, b) in back.frames.iter().zip(&t.frames) {
            assert!((a.time_s - b.time_s).abs() < 1e-12);
            for (p, q) in a.keypoints.iter().zip(&b.keypoints) {
                assert!((p - q).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn corrupted_text_reports_line() {
        let t = linear(5, 30.0);
        let mut buf = Vec::new();
        write_text(&t, &mut buf).unwrap();
        let mut s = String::from_utf8(buf).unwrap();
        s = s.replacen("1.0333333333333334", "1.03x", 1);
        let err = read_text(s.as_bytes(), "f.traj").unwrap_err();
        assert!(err.to_string().starts_with("f.traj:"), "{err}");
        let truncated = &s.as_bytes()[..s.len() / 2];
        assert!(read_text(truncated, "f.traj").is_err());
        assert!(read_binary(&b"CBTBxx"[..], "b").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn resample_keeps_endpoints(n in 2usize..60, rate in 1.0..120.0f64, target in 1.0..120.0f64) {
            let t = linear(n, rate);
            let r = resample(&t, target).unwrap();
            prop_assert_eq!(&r.frames[0].keypoints, &t.frames[0].keypoints);
            let last = &r.frames.last().unwrap();
            if (last.time_s - t.frames.last().unwrap().time_s).abs() < 1e-9 {
                prop_assert_eq!(&last.keypoints, &t.frames.last().unwrap().keypoints);
            }
        }
    }
}
