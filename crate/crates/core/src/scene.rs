//! Time-varying propagation scenes and their ground-truth multipath.
//!
//! World frame: x/y horizontal, z up, metres. Azimuths are measured
//! counter-clockwise from +x in the world frame and reported relative to each
//! pose's boresight.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamforming::{ArrayGeometry, Beam};
use crate::dsp::{db_to_amp, wrap_deg};
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn lerp(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub boresight_azimuth_deg: f64,
}

impl Pose {
    pub fn new(position: Vec3, boresight_azimuth_deg: f64) -> Self {
        Self { position, boresight_azimuth_deg }
    }

    /// Azimuth and elevation of `target` in this pose's local frame.
    pub fn direction_to(&self, target: Vec3) -> (f64, f64) {
        let d = sub(target, self.position);
        let az = d[1].atan2(d[0]).to_degrees();
        let el = d[2].atan2(d[0].hypot(d[1])).to_degrees();
        (wrap_deg(az - self.boresight_azimuth_deg), el)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_s: f64,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScattererKind {
    PointReflector,
    BlockerScreen,
}

fn default_depth() -> f64 {
    20.0
}

/// A moving object. Point reflectors add a single-bounce path; blocker
/// screens are vertical rectangles standing on their trajectory point that
/// attenuate any path crossing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub name: String,
    pub kind: ScattererKind,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub reflection_loss_db: f64,
    /// Screen (width, height) in metres.
    #[serde(default)]
    pub extent_m: [f64; 2],
    /// Direction of the screen's width axis, degrees from +x.
    #[serde(default)]
    pub orientation_deg: f64,
    /// Attenuation of a fully blocked path.
    #[serde(default = "default_depth")]
    pub blockage_depth_db: f64,
}

impl Scatterer {
    pub fn point_reflector(name: &str, waypoints: Vec<Waypoint>, reflection_loss_db: f64) -> Self {
        Self {
            name: name.into(),
            kind: ScattererKind::PointReflector,
            waypoints,
            reflection_loss_db,
            extent_m: [0.0, 0.0],
            orientation_deg: 0.0,
            blockage_depth_db: default_depth(),
        }
    }

    pub fn blocker_screen(name: &str, waypoints: Vec<Waypoint>, width_m: f64, height_m: f64, orientation_deg: f64) -> Self {
        Self {
            name: name.into(),
            kind: ScattererKind::BlockerScreen,
            waypoints,
            reflection_loss_db: 0.0,
            extent_m: [width_m, height_m],
            orientation_deg,
            blockage_depth_db: default_depth(),
        }
    }

    /// Constant-velocity motion from `start` over `[0, duration_s]`.
    pub fn linear(start: Vec3, velocity: Vec3, duration_s: f64) -> Vec<Waypoint> {
        let end = [
            start[0] + velocity[0] * duration_s,
            start[1] + velocity[1] * duration_s,
            start[2] + velocity[2] * duration_s,
        ];
        vec![
            Waypoint { t_s: 0.0, position: start },
            Waypoint { t_s: duration_s, position: end },
        ]
    }

    fn segment(&self, t: f64) -> usize {
        let w = &self.waypoints;
        match w.iter().rposition(|p| p.t_s <= t) {
            None => 0,
            Some(i) => i.min(w.len().saturating_sub(2)),
        }
    }

    /// Position at time `t`, held constant outside the waypoint span.
    pub fn position(&self, t: f64) -> Vec3 {
        let w = &self.waypoints;
        if w.len() == 1 || t <= w[0].t_s {
            return w[0].position;
        }
        let last = w[w.len() - 1];
        if t >= last.t_s {
            return last.position;
        }
        let i = self.segment(t);
        let s = (t - w[i].t_s) / (w[i + 1].t_s - w[i].t_s);
        lerp(w[i].position, w[i + 1].position, s)
    }

    /// Velocity at time `t` (right derivative at waypoints).
    pub fn velocity(&self, t: f64) -> Vec3 {
        let w = &self.waypoints;
        if w.len() < 2 || t < w[0].t_s || t >= w[w.len() - 1].t_s {
            return [0.0; 3];
        }
        let i = self.segment(t);
        let dt = w[i + 1].t_s - w[i].t_s;
        let d = sub(w[i + 1].position, w[i].position);
        [d[0] / dt, d[1] / dt, d[2] / dt]
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidSpec(format!("scatterer '{}' has no waypoints", self.name)));
        }
        if self.waypoints.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            return Err(Error::InvalidSpec(format!("scatterer '{}' waypoint times must increase", self.name)));
        }
        if self.waypoints.iter().any(|w| !w.t_s.is_finite() || w.position.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSpec(format!("scatterer '{}' has non-finite waypoints", self.name)));
        }
        if !(self.reflection_loss_db >= 0.0) || !(self.blockage_depth_db >= 0.0) {
            return Err(Error::InvalidSpec(format!("scatterer '{}' losses must be non-negative", self.name)));
        }
        if self.kind == ScattererKind::BlockerScreen && !(self.extent_m[0] > 0.0 && self.extent_m[1] > 0.0) {
            return Err(Error::InvalidSpec(format!("blocker '{}' needs positive extent", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Los,
    SingleBounce,
    Blocked,
}

/// Which geometric path an MPC follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathId {
    Los,
    Scatterer(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMpc {
    pub path: PathId,
    pub delay_s: f64,
    pub dod_azimuth_deg: f64,
    pub dod_elevation_deg: f64,
    pub doa_azimuth_deg: f64,
    pub doa_elevation_deg: f64,
    pub complex_gain: Complex64,
    pub doppler_hz: f64,
    pub interaction: Interaction,
    /// Attenuation added by blockers, dB.
    pub blockage_loss_db: f64,
}

impl GroundTruthMpc {
    pub fn power_db(&self) -> f64 {
        10.0 * self.complex_gain.norm_sqr().log10()
    }
}

/// Free-space path loss `20·log10(4π·d·f/c)` in dB.
pub fn free_space_path_loss_db(distance_m: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidSpec(format!("distance must be positive, got {distance_m}")));
    }
    if !(carrier_hz > 0.0) {
        return Err(Error::InvalidSpec(format!("carrier must be positive, got {carrier_hz}")));
    }
    Ok(20.0 * (4.0 * PI * distance_m * carrier_hz / SPEED_OF_LIGHT).log10())
}

fn default_partial() -> f64 {
    6.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationScene {
    pub name: String,
    pub carrier_hz: f64,
    pub duration_s: f64,
    pub tx: Pose,
    pub rx: Pose,
    #[serde(default = "default_true")]
    pub los_enabled: bool,
    pub scatterers: Vec<Scatterer>,
    /// Attenuation of a path grazing a blocker's top edge within one
    /// first-Fresnel-zone radius.
    #[serde(default = "default_partial")]
    pub partial_blockage_db: f64,
    /// Extra loss applied to every path (shadowing).
    #[serde(default)]
    pub excess_loss_db: f64,
}

impl PropagationScene {
    pub fn new(name: &str, carrier_hz: f64, duration_s: f64, tx: Pose, rx: Pose) -> Self {
        Self {
            name: name.into(),
            carrier_hz,
            duration_s,
            tx,
            rx,
            los_enabled: true,
            scatterers: Vec::new(),
            partial_blockage_db: default_partial(),
            excess_loss_db: 0.0,
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) || !(self.duration_s >= 0.0) {
            return Err(Error::InvalidSpec("scene carrier and duration must be positive".into()));
        }
        let finite = |p: &Pose| p.position.iter().all(|v| v.is_finite()) && p.boresight_azimuth_deg.is_finite();
        if !finite(&self.tx) || !finite(&self.rx) {
            return Err(Error::InvalidSpec("poses must be finite".into()));
        }
        if self.tx.position == self.rx.position {
            return Err(Error::InvalidSpec("TX and RX must not coincide".into()));
        }
        self.scatterers.iter().try_for_each(Scatterer::validate)
    }

    /// Same scene seen with TX and RX swapped.
    pub fn reversed(&self) -> Self {
        Self {
            tx: self.rx,
            rx: self.tx,
            ..self.clone()
        }
    }

    /// Total blocker attenuation for the straight segment `a → b` at `t`.
    fn blockage_db(&self, a: Vec3, b: Vec3, t: f64, skip: Option<usize>) -> f64 {
        let lambda = self.wavelength_m();
        let mut total = 0.0;
        for (k, s) in self.scatterers.iter().enumerate() {
            if s.kind != ScattererKind::BlockerScreen || Some(k) == skip {
                continue;
            }
            let c = s.position(t);
            let o = s.orientation_deg.to_radians();
            let w = [o.cos(), o.sin(), 0.0];
            let n = [-o.sin(), o.cos(), 0.0];
            let ab = sub(b, a);
            let denom = dot(n, ab);
            if denom.abs() < 1e-12 {
                continue;
            }
            let frac = dot(n, sub(c, a)) / denom;
            if !(frac > 0.0 && frac < 1.0) {
                continue;
            }
            let x = lerp(a, b, frac);
            if dot(w, sub(x, c)).abs() > s.extent_m[0] / 2.0 {
                continue;
            }
            let (d1, d2) = (frac * norm(ab), (1.0 - frac) * norm(ab));
            let fresnel = (lambda * d1 * d2 / (d1 + d2)).sqrt();
            let top = c[2] + s.extent_m[1];
            if x[2] < c[2] {
                continue;
            }
            if x[2] <= top - fresnel {
                total += s.blockage_depth_db;
            } else if x[2] <= top + fresnel {
                total += self.partial_blockage_db.min(s.blockage_depth_db);
            }
        }
        total
    }

    fn make_mpc(&self, path: PathId, length: f64, rate: f64, dod: Vec3, doa: Vec3, loss_db: f64, blockage_db: f64) -> GroundTruthMpc {
        let fspl = free_space_path_loss_db(length, self.carrier_hz).unwrap_or(0.0);
        let delay_s = length / SPEED_OF_LIGHT;
        let amp = db_to_amp(-(fspl + loss_db + blockage_db + self.excess_loss_db));
        let phase = -2.0 * PI * (self.carrier_hz * delay_s).fract();
        let (dod_az, dod_el) = self.tx.direction_to(dod);
        let (doa_az, doa_el) = self.rx.direction_to(doa);
        let interaction = match (blockage_db > 0.0, path) {
            (true, _) => Interaction::Blocked,
            (false, PathId::Los) => Interaction::Los,
            (false, PathId::Scatterer(_)) => Interaction::SingleBounce,
        };
        GroundTruthMpc {
            path,
            delay_s,
            dod_azimuth_deg: dod_az,
            dod_elevation_deg: dod_el,
            doa_azimuth_deg: doa_az,
            doa_elevation_deg: doa_el,
            complex_gain: Complex64::from_polar(amp, phase),
            doppler_hz: -rate / self.wavelength_m(),
            interaction,
            blockage_loss_db: blockage_db,
        }
    }

    /// Ground-truth MPCs at time `t`: the LOS path and one single-bounce path
    /// per point reflector. Blocked paths stay in the list, attenuated.
    pub fn snapshot_mpcs(&self, t: f64) -> Vec<GroundTruthMpc> {
        let (tx, rx) = (self.tx.position, self.rx.position);
        let mut out = Vec::new();
        if self.los_enabled {
            let length = norm(sub(rx, tx));
            let block = self.blockage_db(tx, rx, t, None);
            out.push(self.make_mpc(PathId::Los, length, 0.0, rx, tx, 0.0, block));
        }
        for (k, s) in self.scatterers.iter().enumerate() {
            if s.kind != ScattererKind::PointReflector {
                continue;
            }
            let p = s.position(t);
            let (a, b) = (sub(p, tx), sub(p, rx));
            let (la, lb) = (norm(a), norm(b));
            if la < 1e-9 || lb < 1e-9 {
                continue;
            }
            let v = s.velocity(t);
            let rate = dot(v, a) / la + dot(v, b) / lb;
            let block = self.blockage_db(tx, p, t, Some(k)) + self.blockage_db(p, rx, t, Some(k));
            out.push(self.make_mpc(PathId::Scatterer(k), la + lb, rate, p, p, s.reflection_loss_db, block));
        }
        out
    }

    /// Geometric length of a path at time `t`, if the path exists.
    pub fn path_length(&self, path: PathId, t: f64) -> Option<f64> {
        let (tx, rx) = (self.tx.position, self.rx.position);
        match path {
            PathId::Los => self.los_enabled.then(|| norm(sub(rx, tx))),
            PathId::Scatterer(k) => {
                let s = self.scatterers.get(k)?;
                (s.kind == ScattererKind::PointReflector).then(|| {
                    let p = s.position(t);
                    norm(sub(p, tx)) + norm(sub(p, rx))
                })
            }
        }
    }
}

/// Blocker size for the blockage template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockerProfile {
    Truck,
    Van,
    Car,
}

impl BlockerProfile {
    /// (length, height) in metres.
    pub fn extent_m(self) -> (f64, f64) {
        match self {
            BlockerProfile::Truck => (7.0, 4.0),
            BlockerProfile::Van => (5.0, 3.0),
            BlockerProfile::Car => (4.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockageParams {
    pub blocker: BlockerProfile,
    /// How far the reflected path sits below LOS after beamforming, dB.
    pub alternate_margin_db: f64,
    /// Margin of the static background reflector below LOS, dB.
    pub background_margin_db: f64,
    pub blockage_depth_db: f64,
}

impl Default for BlockageParams {
    fn default() -> Self {
        Self {
            blocker: BlockerProfile::Truck,
            alternate_margin_db: 10.0,
            background_margin_db: 20.0,
            blockage_depth_db: 20.0,
        }
    }
}

pub const CASE1_NAME: &str = "case1_moving_scatterers";
pub const CASE2_NAME: &str = "case2_blockage";

const CARRIER_HZ: f64 = 27.85e9;

/// Gain (dBi) of the nearest 5°-grid azimuth beam of the default array
/// towards a local direction.
fn nearest_beam_gain_dbi(az: f64, el: f64) -> f64 {
    let geometry = ArrayGeometry::default();
    let steer = (az / 5.0).round().clamp(-9.0, 9.0) * 5.0;
    Beam::steer(&geometry, steer, 0.0, 11.25)
        .map(|b| b.gain_dbi(&geometry, az, el))
        .unwrap_or(0.0)
}

/// Street-blockage scene: a LOS path, a facade reflector seen at
/// (35°, −35°), a weak background reflector at (−40°, 15°) and a blocker
/// driving across the facade path and then the LOS. Reflection losses are
/// set so that, through the best default beams, the facade path sits
/// `alternate_margin_db` and the background path `background_margin_db`
/// below LOS.
pub fn case2_blockage(params: BlockageParams) -> PropagationScene {
    let tx = Pose::new([0.0, 0.0, 3.5], 5.0);
    let rx = Pose::new([60.0, 0.0, 1.8], 205.0);
    let mut scene = PropagationScene::new(CASE2_NAME, CARRIER_HZ, 12.0, tx, rx);
    // 40° from TX and 170° from RX in world azimuth
    let reflector = [10.42, 8.74, 2.5];
    scene.scatterers.push(Scatterer::point_reflector("facade", vec![Waypoint { t_s: 0.0, position: reflector }], 0.0));

    let los = scene.snapshot_mpcs(0.0);
    let beamformed = |m: &GroundTruthMpc| {
        m.power_db()
            + nearest_beam_gain_dbi(m.dod_azimuth_deg, m.dod_elevation_deg)
            + nearest_beam_gain_dbi(m.doa_azimuth_deg, m.doa_elevation_deg)
    };
    let natural_margin = beamformed(&los[0]) - beamformed(&los[1]);
    scene.scatterers[0].reflection_loss_db = (params.alternate_margin_db - natural_margin).max(0.0);

    // -35° from TX and 220° from RX; the blocker only reaches it after 9.7 s
    scene.scatterers.push(Scatterer::point_reflector("background", vec![Waypoint { t_s: 0.0, position: [32.69, -22.89, 2.0] }], 0.0));
    let mpcs = scene.snapshot_mpcs(0.0);
    let natural_margin = beamformed(&mpcs[0]) - beamformed(&mpcs[2]);
    scene.scatterers[1].reflection_loss_db = (params.background_margin_db - natural_margin).max(0.0);

    let (length, height) = params.blocker.extent_m();
    let mut blocker = Scatterer::blocker_screen(
        params.blocker_name(),
        Scatterer::linear([12.0, 14.5, 0.0], [0.0, -2.0, 0.0], scene.duration_s),
        length,
        height,
        90.0,
    );
    blocker.blockage_depth_db = params.blockage_depth_db;
    scene.scatterers.push(blocker);
    scene
}

impl BlockageParams {
    fn blocker_name(&self) -> &'static str {
        match self.blocker {
            BlockerProfile::Truck => "truck",
            BlockerProfile::Van => "van",
            BlockerProfile::Car => "car",
        }
    }
}

/// Street scene with three cars driving towards a side-by-side TX/RX pair and
/// a pedestrian walking away. The direct TX–RX path lies outside the beam
/// sector and is disabled.
pub fn case1_moving_scatterers() -> PropagationScene {
    let duration = 12.0;
    let tx = Pose::new([0.0, 0.0, 3.5], 0.0);
    let rx = Pose::new([0.0, -8.0, 1.8], 0.0);
    let mut scene = PropagationScene::new(CASE1_NAME, CARRIER_HZ, duration, tx, rx);
    scene.los_enabled = false;
    let cars = [("car_a", [95.0, -4.0, 1.0], 6.7), ("car_b", [85.0, -1.0, 1.0], 6.2), ("car_c", [90.0, -7.0, 1.0], 6.0)];
    for (name, start, speed) in cars {
        scene
            .scatterers
            .push(Scatterer::point_reflector(name, Scatterer::linear(start, [-speed, 0.0, 0.0], duration), 10.0));
    }
    scene.scatterers.push(Scatterer::point_reflector(
        "pedestrian",
        Scatterer::linear([12.0, 2.0, 1.2], [1.4, 0.0, 0.0], duration),
        15.0,
    ));
    scene
}

/// Built-in scenario templates by name.
pub fn scenario_templates() -> Vec<(&'static str, PropagationScene)> {
    vec![
        (CASE1_NAME, case1_moving_scatterers()),
        (CASE2_NAME, case2_blockage(BlockageParams::default())),
    ]
}

pub fn scenario_by_name(name: &str) -> Result<PropagationScene> {
    let blocker = |b| case2_blockage(BlockageParams { blocker: b, ..BlockageParams::default() });
    match name {
        CASE1_NAME | "case1" => Ok(case1_moving_scatterers()),
        CASE2_NAME | "case2" | "case2_truck" => Ok(blocker(BlockerProfile::Truck)),
        "case2_van" => Ok(blocker(BlockerProfile::Van)),
        "case2_car" => Ok(blocker(BlockerProfile::Car)),
        other => Err(Error::InvalidSpec(format!("unknown scenario '{other}'"))),
    }
}
