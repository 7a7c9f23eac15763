//! Seeded synthetic fall/ADL sequences.
//!
//! Falls and lie-downs share their start (standing) and end (lying) poses
//! and differ only in how fast the transition happens, so a classifier has
//! to use temporal dynamics rather than posture to tell them apart.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{joint::*, BODY25_JOINTS};
use crate::skeleton::{Frame, Joint2D, SequenceMeta, SkeletonSequence};
use crate::{rng_from_seed, SdfaRng};

pub const FALL_TYPES: [&str; 5] = ["forward", "backward", "sideways", "sitting", "syncope"];

const SUBJECTS: usize = 10;
const VIEWS: usize = 3;
const SETUPS: usize = 4;
const TRIALS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdlKind {
    Sit,
    LieDown,
    Walk,
    PickUp,
}

impl AdlKind {
    pub const ALL: [AdlKind; 4] = [AdlKind::Sit, AdlKind::LieDown, AdlKind::Walk, AdlKind::PickUp];

    pub fn name(self) -> &'static str {
        match self {
            AdlKind::Sit => "sit",
            AdlKind::LieDown => "lie_down",
            AdlKind::Walk => "walk",
            AdlKind::PickUp => "pick_up",
        }
    }
}

impl fmt::Display for AdlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdlKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdlKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ADL kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_per_class: usize,
    /// Sequence length in frames.
    #[serde(alias = "T")]
    pub frames: usize,
    pub fps: f32,
    pub seed: u64,
    /// Standard deviation of the Gaussian pixel noise.
    pub noise_std: f64,
    pub fall_duration_frames: usize,
    pub adl_kinds: Vec<AdlKind>,
    /// Total number of ADL samples, spread round-robin over `adl_kinds`.
    /// When absent every kind gets `n_per_class` samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adl_total: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 50,
            frames: 120,
            fps: 30.0,
            seed: 0,
            noise_std: 1.0,
            fall_duration_frames: 15,
            adl_kinds: AdlKind::ALL.to_vec(),
            adl_total: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Config("n_per_class must be ≥ 1".into()));
        }
        if self.fall_duration_frames < 2 || self.fall_duration_frames >= self.frames {
            return Err(Error::Config(format!(
                "fall_duration_frames must lie in [2, {}), got {}",
                self.frames, self.fall_duration_frames
            )));
        }
        if self.adl_kinds.is_empty() || self.adl_total == Some(0) {
            return Err(Error::Config("at least one ADL sample is required".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(self.fps > 0.0) {
            return Err(Error::Config("noise_std must be ≥ 0 and fps > 0".into()));
        }
        Ok(())
    }

    pub fn adl_count(&self) -> usize {
        self.adl_total.unwrap_or(self.n_per_class * self.adl_kinds.len())
    }
}

/// Joint positions in body units: x to the right, `up` above the ground,
/// standing height ≈ 1.
type Pose = [[f64; 2]; BODY25_JOINTS];

fn standing() -> Pose {
    let mut p = [[0.0; 2]; BODY25_JOINTS];
    let set = |p: &mut Pose, j: usize, x: f64, u: f64| p[j] = [x, u];
    set(&mut p, NOSE, 0.0, 0.93);
    set(&mut p, NECK, 0.0, 0.82);
    set(&mut p, R_SHOULDER, -0.10, 0.81);
    set(&mut p, R_ELBOW, -0.13, 0.66);
    set(&mut p, R_WRIST, -0.14, 0.52);
    set(&mut p, L_SHOULDER, 0.10, 0.81);
    set(&mut p, L_ELBOW, 0.13, 0.66);
    set(&mut p, L_WRIST, 0.14, 0.52);
    set(&mut p, MID_HIP, 0.0, 0.52);
    set(&mut p, R_HIP, -0.06, 0.52);
    set(&mut p, R_KNEE, -0.06, 0.28);
    set(&mut p, R_ANKLE, -0.06, 0.04);
    set(&mut p, L_HIP, 0.06, 0.52);
    set(&mut p, L_KNEE, 0.06, 0.28);
    set(&mut p, L_ANKLE, 0.06, 0.04);
    set(&mut p, R_EYE, -0.02, 0.95);
    set(&mut p, L_EYE, 0.02, 0.95);
    set(&mut p, R_EAR, -0.04, 0.94);
    set(&mut p, L_EAR, 0.04, 0.94);
    set(&mut p, L_BIG_TOE, 0.09, 0.0);
    set(&mut p, L_SMALL_TOE, 0.11, 0.0);
    set(&mut p, L_HEEL, 0.05, 0.0);
    set(&mut p, R_BIG_TOE, -0.09, 0.0);
    set(&mut p, R_SMALL_TOE, -0.11, 0.0);
    set(&mut p, R_HEEL, -0.05, 0.0);
    p
}

const UPPER_BODY: [usize; 12] = [
    NOSE, NECK, R_SHOULDER, R_ELBOW, R_WRIST, L_SHOULDER, L_ELBOW, L_WRIST, R_EYE, L_EYE, R_EAR, L_EAR,
];

/// Seated: hips lowered to knee height, thighs horizontal.
fn seated() -> Pose {
    let mut p = standing();
    let drop = 0.22;
    for &j in UPPER_BODY.iter().chain(&[MID_HIP, R_HIP, L_HIP]) {
        p[j][1] -= drop;
    }
    for (knee, ankle) in [(R_KNEE, R_ANKLE), (L_KNEE, L_ANKLE)] {
        p[knee] = [p[knee][0] + 0.2, 0.30];
        p[ankle][0] += 0.2;
    }
    for toe in [R_BIG_TOE, R_SMALL_TOE, R_HEEL, L_BIG_TOE, L_SMALL_TOE, L_HEEL] {
        p[toe][0] += 0.2;
    }
    p
}

fn lerp(a: &Pose, b: &Pose, s: f64) -> Pose {
    let mut out = *a;
    for (o, (pa, pb)) in out.iter_mut().zip(a.iter().zip(b)) {
        o[0] = pa[0] + s * (pb[0] - pa[0]);
        o[1] = pa[1] + s * (pb[1] - pa[1]);
    }
    out
}

/// Tips the whole body over about the feet; `theta = ±π/2` is lying flat.
fn tip_over(p: &Pose, theta: f64) -> Pose {
    let (s, c) = theta.sin_cos();
    let lift = 0.12 * s.abs();
    let mut out = *p;
    for q in out.iter_mut() {
        let [x, u] = *q;
        *q = [x * c + u * s, -x * s + u * c + lift];
    }
    out
}

/// Bends the upper body forward about the hips.
fn bend(p: &Pose, phi: f64) -> Pose {
    let (s, c) = phi.sin_cos();
    let [hx, hu] = p[MID_HIP];
    let mut out = *p;
    for &j in &UPPER_BODY {
        let [x, u] = p[j];
        let (dx, du) = (x - hx, u - hu);
        out[j] = [hx + dx * c + du * s, hu - dx * s + du * c];
    }
    out
}

/// Gait cycle: legs and arms swing in antiphase.
fn stride(p: &Pose, phase: f64, amp: f64) -> Pose {
    let mut out = *p;
    let swing = amp * phase.sin();
    for (j, sign) in [
        (R_KNEE, 0.5),
        (R_ANKLE, 1.0),
        (R_BIG_TOE, 1.0),
        (R_SMALL_TOE, 1.0),
        (R_HEEL, 1.0),
        (L_KNEE, -0.5),
        (L_ANKLE, -1.0),
        (L_BIG_TOE, -1.0),
        (L_SMALL_TOE, -1.0),
        (L_HEEL, -1.0),
        (R_WRIST, -0.6),
        (R_ELBOW, -0.3),
        (L_WRIST, 0.6),
        (L_ELBOW, 0.3),
    ] {
        out[j][0] += sign * swing;
    }
    out
}

/// `0` before `start`, `1` after `start + len`, eased in between.
fn progress(t: usize, start: usize, len: usize, ease: fn(f64) -> f64) -> f64 {
    let s = (t as f64 - start as f64) / len as f64;
    ease(s.clamp(0.0, 1.0))
}

/// Gravity-like acceleration.
fn accelerate(s: f64) -> f64 {
    s * s
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// Per-sequence rendering parameters.
struct Actor {
    scale: f64,
    x0: f64,
    ground: f64,
    x_gain: f64,
    noise: Normal<f64>,
}

impl Actor {
    fn new(rng: &mut SdfaRng, view: usize, noise_std: f64) -> Self {
        let mirror = if view == 2 { -1.0 } else { 1.0 };
        let foreshorten = if view == 3 { 0.7 } else { 1.0 };
        Self {
            scale: 200.0 * rng.random_range(0.85..1.15),
            x0: rng.random_range(220.0..420.0),
            ground: rng.random_range(380.0..440.0),
            x_gain: mirror * foreshorten,
            noise: Normal::new(0.0, noise_std).expect("noise_std validated"),
        }
    }

    fn render(&self, pose: &Pose, shift: f64, rng: &mut SdfaRng) -> Frame {
        let mut frame = Frame::empty();
        for (j, [x, u]) in pose.iter().enumerate() {
            let px = self.x0 + self.scale * (self.x_gain * x + shift);
            let py = self.ground - self.scale * u;
            frame.joints[j] = Joint2D::new(
                (px + self.noise.sample(rng)) as f32,
                (py + self.noise.sample(rng)) as f32,
                rng.random_range(0.6f32..=1.0),
            );
        }
        frame
    }
}

enum Script {
    Fall { kind: usize, start: usize, direction: f64, walk_before: bool },
    LieDown { start: usize, len: usize, direction: f64, walk_before: bool },
    Sit { start: usize, len: usize },
    Walk { speed: f64 },
    PickUp { start: usize, len: usize, hold: usize },
}

const WALK_STEP: f64 = 0.004;
const GAIT_RATE: f64 = 0.25;

impl Script {
    fn pose(&self, t: usize, d: usize) -> (Pose, f64) {
        let up = standing();
        let gait = |until: usize| {
            let tw = t.min(until) as f64;
            (stride(&up, GAIT_RATE * tw, if t < until { 0.06 } else { 0.0 }), WALK_STEP * tw)
        };
        match *self {
            Script::Fall { kind, start, direction, walk_before } => {
                let (pre, shift) = if walk_before { gait(start) } else { (up, 0.0) };
                let s = progress(t, start, d, accelerate);
                let pose = match FALL_TYPES[kind] {
                    // knees give way first, then the trunk goes over backwards
                    "sitting" => {
                        let half = (d / 2).max(1);
                        let sit = lerp(&pre, &seated(), progress(t, start, half, accelerate));
                        tip_over(&sit, -FRAC_PI_2 * progress(t, start + half, d - half, accelerate))
                    }
                    // collapse with buckling knees
                    "syncope" => tip_over(&lerp(&pre, &seated(), 0.5 * s), direction * FRAC_PI_2 * s),
                    "backward" => tip_over(&pre, -FRAC_PI_2 * s),
                    "forward" => tip_over(&pre, FRAC_PI_2 * s),
                    _ => tip_over(&pre, direction * FRAC_PI_2 * s),
                };
                (pose, shift)
            }
            Script::LieDown { start, len, direction, walk_before } => {
                let (pre, shift) = if walk_before { gait(start) } else { (up, 0.0) };
                (tip_over(&pre, direction * FRAC_PI_2 * progress(t, start, len, smoothstep)), shift)
            }
            Script::Sit { start, len } => (lerp(&up, &seated(), progress(t, start, len, smoothstep)), 0.0),
            Script::Walk { speed } => {
                (stride(&up, GAIT_RATE * speed * t as f64, 0.06), WALK_STEP * speed * t as f64)
            }
            Script::PickUp { start, len, hold } => {
                let down = progress(t, start, len, smoothstep);
                let back = progress(t, start + len + hold, len, smoothstep);
                (bend(&up, 1.4 * (down - back)), 0.0)
            }
        }
    }
}

fn sign(rng: &mut SdfaRng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn script_for(kind: Option<AdlKind>, fall_kind: usize, spec: &SynthSpec, rng: &mut SdfaRng) -> Script {
    let t = spec.frames;
    let d = spec.fall_duration_frames;
    // latest start that still lets a transition of `len` frames finish
    let start_in = |rng: &mut SdfaRng, len: usize, lo: usize| {
        let hi = t.saturating_sub(len + 2);
        if hi <= lo {
            hi.min(lo)
        } else {
            rng.random_range(lo..=hi)
        }
    };
    match kind {
        None => {
            let start = start_in(rng, d + 10, t / 5);
            Script::Fall { kind: fall_kind, start, direction: sign(rng), walk_before: rng.random_bool(0.5) }
        }
        Some(AdlKind::LieDown) => {
            let len = ((d as f64 * rng.random_range(5.0..6.0)).round() as usize).min(t.saturating_sub(4)).max(4 * d);
            let start = start_in(rng, len, 2);
            Script::LieDown { start, len, direction: sign(rng), walk_before: rng.random_bool(0.5) }
        }
        Some(AdlKind::Sit) => {
            let len = rng.random_range(30..=45).min(t - 1);
            Script::Sit { start: start_in(rng, len, t / 8), len }
        }
        Some(AdlKind::Walk) => Script::Walk { speed: rng.random_range(0.7..1.3) },
        Some(AdlKind::PickUp) => {
            let len = rng.random_range(25..=35).min(t / 3);
            let hold = rng.random_range(5..=15);
            Script::PickUp { start: start_in(rng, 2 * len + hold, 2), len, hold }
        }
    }
}

/// Round-robin metadata for the `k`-th sample of its class.
fn meta_for(k: usize) -> (u32, u32, u32, u32) {
    (
        (k % SUBJECTS) as u32 + 1,
        (k % VIEWS) as u32 + 1,
        (k % SETUPS) as u32 + 1,
        (k / VIEWS % TRIALS) as u32 + 1,
    )
}

/// Falls first, then ADLs in round-robin kind order. Sample `i` draws from
/// its own stream of the spec seed, so every sequence is reproducible alone.
pub fn generate_synthetic_dataset(spec: &SynthSpec) -> Result<Vec<SkeletonSequence>> {
    spec.validate()?;
    let n_adl = spec.adl_count();
    let mut out = Vec::with_capacity(spec.n_per_class + n_adl);
    for i in 0..spec.n_per_class + n_adl {
        let is_fall = i < spec.n_per_class;
        let k = if is_fall { i } else { i - spec.n_per_class };
        let kind = (!is_fall).then(|| spec.adl_kinds[k % spec.adl_kinds.len()]);
        let (subject_id, view_id, setup_id, trial_id) = meta_for(k);

        let mut rng = rng_from_seed(spec.seed);
        rng.set_stream(i as u64);
        let actor = Actor::new(&mut rng, view_id as usize, spec.noise_std);
        let script = script_for(kind, k % FALL_TYPES.len(), spec, &mut rng);
        let frames = (0..spec.frames)
            .map(|t| {
                let (pose, shift) = script.pose(t, spec.fall_duration_frames);
                actor.render(&pose, shift, &mut rng)
            })
            .collect();
        let meta = SequenceMeta {
            subject_id,
            view_id,
            setup_id,
            trial_id,
            action_label: kind.map_or("fall", AdlKind::name).to_string(),
            fall_type: is_fall.then(|| FALL_TYPES[k % FALL_TYPES.len()].to_string()),
            is_fall,
        };
        out.push(SkeletonSequence::new(frames, spec.fps, meta));
    }
    Ok(out)
}

/// Largest frame-to-frame vertical MidHip movement, in pixels.
pub fn peak_midhip_vertical_speed(seq: &SkeletonSequence) -> f32 {
    seq.frames
        .windows(2)
        .map(|w| (w[1].joints[MID_HIP].y - w[0].joints[MID_HIP].y).abs())
        .fold(0.0, f32::max)
}
