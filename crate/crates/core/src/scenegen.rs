//! Layered procedural scene placement.
//!
//! Obstacles are placed in four passes: the anchor, supporting large items,
//! small clutter, and (debris rooms only) overhead vertical obstructions. The
//! number of supporting and clutter items follows the clutterness density law;
//! every placement is rejection-sampled against room bounds, the two spawn
//! zones and previously placed obstacles. The raw layout is then handed to
//! [`anneal_until_navigable`] which strips expendable items until the spawn
//! zones are connected for the target embodiment.
//!
//! Room coordinates: the floor spans `[0, length] x [0, width]` with `z = 0`
//! on the floor. `zone_start` sits in the `(0, 0)` corner and `zone_goal` in
//! the opposite corner.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::{mean_footprint, Asset, AssetCatalog, Layer, PlacementPrior, Regime};
use crate::embodiment::Embodiment;
use crate::navigability::{anneal_until_navigable, AnnealStep, AnnealingSchedule, NavConfig};
use crate::{Error, Result};

pub const SCENE_SCHEMA: &str = "clutterbench.scene/1";

/// Gap left between wall-aligned assets and the wall.
pub const WALL_STANDOFF_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerWeights {
    pub supporting_large: f64,
    pub small_clutter: f64,
}

impl Default for LayerWeights {
    fn default() -> Self {
        LayerWeights { supporting_large: 0.6, small_clutter: 0.4 }
    }
}

impl LayerWeights {
    pub fn validate(&self) -> Result<()> {
        let (l, s) = (self.supporting_large, self.small_clutter);
        if !(l >= 0.0 && s >= 0.0 && l.is_finite() && s.is_finite()) {
            return Err(Error::domain(format!("layer weights must be nonnegative, got ({l}, {s})")));
        }
        if (l + s - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("layer weights must sum to 1, got {}", l + s)));
        }
        Ok(())
    }
}

fn default_ceiling() -> f64 {
    2.8
}
fn default_spawn_zone() -> f64 {
    1.0
}
fn default_retries() -> u32 {
    64
}
fn default_pillar_density() -> f64 {
    0.06
}
fn default_vertical_count() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub regime: Regime,
    pub room_type: String,
    /// `(length along x, width along y)`.
    pub room_size_m: [f64; 2],
    #[serde(default = "default_ceiling")]
    pub ceiling_height_m: f64,
    pub target_clutterness: f64,
    #[serde(default)]
    pub layer_weights: LayerWeights,
    #[serde(default = "default_spawn_zone")]
    pub spawn_zone_size_m: f64,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_placement_retries: u32,
    /// Debris anchors: pillars per square meter of floor (at least one).
    #[serde(default = "default_pillar_density")]
    pub pillar_density_per_m2: f64,
    /// Debris rooms only.
    #[serde(default = "default_vertical_count")]
    pub vertical_obstruction_count: u32,
    #[serde(default)]
    pub annealing: AnnealingSchedule,
    #[serde(default)]
    pub navigation: NavConfig,
}

impl GenerationConfig {
    pub fn new(regime: Regime, room_type: &str, room_size_m: [f64; 2], c: f64, seed: u64) -> Self {
        GenerationConfig {
            regime,
            room_type: room_type.to_string(),
            room_size_m,
            ceiling_height_m: default_ceiling(),
            target_clutterness: c,
            layer_weights: LayerWeights::default(),
            spawn_zone_size_m: default_spawn_zone(),
            seed,
            max_placement_retries: default_retries(),
            pillar_density_per_m2: default_pillar_density(),
            vertical_obstruction_count: default_vertical_count(),
            annealing: AnnealingSchedule::default(),
            navigation: NavConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [l, w] = self.room_size_m;
        if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
            return Err(Error::config(format!("room_size_m must be positive, got [{l}, {w}]")));
        }
        if !(self.ceiling_height_m > 0.0) {
            return Err(Error::config("ceiling_height_m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.target_clutterness) {
            return Err(Error::config(format!(
                "target_clutterness must lie in [0, 1], got {}",
                self.target_clutterness
            )));
        }
        self.layer_weights.validate().map_err(|e| Error::config(format!("layer_weights: {e}")))?;
        let s = self.spawn_zone_size_m;
        if !(s > 0.0) {
            return Err(Error::config("spawn_zone_size_m must be positive"));
        }
        if s > l || s > w {
            return Err(Error::config(format!("spawn zones of size {s} m do not fit in a {l} x {w} m room")));
        }
        if self.max_placement_retries == 0 {
            return Err(Error::config("max_placement_retries must be positive"));
        }
        if !(self.pillar_density_per_m2 >= 0.0) {
            return Err(Error::config("pillar_density_per_m2 must be nonnegative"));
        }
        self.annealing.validate()?;
        self.navigation.validate()?;
        Ok(())
    }

    pub fn floor_area(&self) -> f64 {
        self.room_size_m[0] * self.room_size_m[1]
    }
}

/// Axis-aligned floor rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn as_footprint(&self) -> Footprint {
        let c = self.center();
        Footprint { center: c, half: [0.5 * (self.max[0] - self.min[0]), 0.5 * (self.max[1] - self.min[1])], yaw: 0.0 }
    }
}

/// Yawed floor rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub center: [f64; 2],
    pub half: [f64; 2],
    pub yaw: f64,
}

impl Footprint {
    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [ax, ay] = self.axes();
        let [hx, hy] = self.half;
        let mut out = [[0.0; 2]; 4];
        for (k, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].iter().enumerate() {
            out[k] = [
                self.center[0] + sx * hx * ax[0] + sy * hy * ay[0],
                self.center[1] + sx * hx * ax[1] + sy * hy * ay[1],
            ];
        }
        out
    }

    /// Point in the footprint's local frame.
    pub fn to_local(&self, x: f64, y: f64) -> [f64; 2] {
        let [ax, ay] = self.axes();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        [dx * ax[0] + dy * ax[1], dx * ay[0] + dy * ay[1]]
    }

    /// Euclidean distance from a floor point to the rectangle (0 inside).
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let [lx, ly] = self.to_local(x, y);
        let dx = (lx.abs() - self.half[0]).max(0.0);
        let dy = (ly.abs() - self.half[1]).max(0.0);
        dx.hypot(dy)
    }

    /// World-aligned bounding box `(min, max)`.
    pub fn aabb(&self) -> ([f64; 2], [f64; 2]) {
        let cs = self.corners();
        let mut lo = cs[0];
        let mut hi = cs[0];
        for c in &cs[1..] {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        (lo, hi)
    }

    /// Separating-axis overlap test. Touching edges do not count as overlap.
    pub fn overlaps(&self, other: &Footprint) -> bool {
        let a = self.corners();
        let b = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let project = |pts: &[[f64; 2]; 4]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p[0] * axis[0] + p[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = project(&a);
            let (blo, bhi) = project(&b);
            if ahi <= blo + 1e-9 || bhi <= alo + 1e-9 {
                return false;
            }
        }
        true
    }

    pub fn inside(&self, length: f64, width: f64) -> bool {
        self.corners().iter().all(|p| p[0] >= -1e-9 && p[0] <= length + 1e-9 && p[1] >= -1e-9 && p[1] <= width + 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleInstance {
    pub id: String,
    pub asset_id: String,
    pub layer: Layer,
    pub center_m: [f64; 2],
    pub yaw_rad: f64,
    pub extents_m: [f64; 3],
    pub base_height_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_target: Option<String>,
}

impl ObstacleInstance {
    pub fn footprint(&self) -> Footprint {
        Footprint { center: self.center_m, half: [0.5 * self.extents_m[0], 0.5 * self.extents_m[1]], yaw: self.yaw_rad }
    }

    /// Canonical (unyawed) floor footprint area.
    pub fn footprint_area(&self) -> f64 {
        self.extents_m[0] * self.extents_m[1]
    }

    pub fn top_m(&self) -> f64 {
        self.base_height_m + self.extents_m[2]
    }

    fn collides(&self, other: &ObstacleInstance) -> bool {
        let vertical = self.base_height_m < other.top_m() - 1e-9 && other.base_height_m < self.top_m() - 1e-9;
        vertical && self.footprint().overlaps(&other.footprint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomBounds {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
}

impl RoomBounds {
    pub fn area(&self) -> f64 {
        self.length_m * self.width_m
    }
}

/// The embodiment quantities a scene depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentEcho {
    pub id: String,
    pub standing_height_m: f64,
    pub clearance_radius_m: f64,
}

impl From<&Embodiment> for EmbodimentEcho {
    fn from(e: &Embodiment) -> Self {
        EmbodimentEcho {
            id: e.id.clone(),
            standing_height_m: e.standing_height_m,
            clearance_radius_m: e.clearance_radius_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema: String,
    pub id: String,
    pub config: GenerationConfig,
    pub catalog_version: String,
    pub embodiment: EmbodimentEcho,
    pub room: RoomBounds,
    pub obstacles: Vec<ObstacleInstance>,
    pub zone_start: Rect,
    pub zone_goal: Rect,
    pub seed: u64,
    pub target_clutterness: f64,
    pub realized_clutterness: f64,
    pub annealing_level_used: u32,
    #[serde(default)]
    pub annealing_trace: Vec<AnnealStep>,
}

impl Scene {
    pub fn count(&self, layer: Layer) -> usize {
        self.obstacles.iter().filter(|o| o.layer == layer).count()
    }

    /// An empty scene with spawn zones in opposite corners, useful for
    /// evaluation fixtures.
    pub fn empty(config: GenerationConfig, embodiment: &Embodiment) -> Self {
        let [length, width] = config.room_size_m;
        let s = config.spawn_zone_size_m;
        Scene {
            schema: SCENE_SCHEMA.to_string(),
            id: scene_id(&config),
            room: RoomBounds { length_m: length, width_m: width, height_m: config.ceiling_height_m },
            zone_start: Rect { min: [0.0, 0.0], max: [s, s] },
            zone_goal: Rect { min: [length - s, width - s], max: [length, width] },
            seed: config.seed,
            target_clutterness: config.target_clutterness,
            realized_clutterness: 0.0,
            annealing_level_used: 0,
            annealing_trace: Vec::new(),
            obstacles: Vec::new(),
            catalog_version: String::new(),
            embodiment: embodiment.into(),
            config,
        }
    }

    /// Structural checks on a loaded scene file.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != SCENE_SCHEMA {
            out.push(format!("schema: expected {SCENE_SCHEMA:?}, found {:?}", self.schema));
        }
        let RoomBounds { length_m, width_m, height_m } = self.room;
        if !(length_m > 0.0 && width_m > 0.0 && height_m > 0.0) {
            out.push("room: dimensions must be positive".into());
        }
        let mut last_layer = Layer::Anchor;
        for (i, o) in self.obstacles.iter().enumerate() {
            let at = format!("obstacles[{i}] ({:?})", o.id);
            if o.extents_m.iter().any(|e| !(*e > 0.0)) {
                out.push(format!("{at}.extents_m: must be positive"));
            }
            if !o.footprint().inside(length_m, width_m) {
                out.push(format!("{at}: footprint leaves the room"));
            }
            if o.top_m() > height_m + 1e-9 {
                out.push(format!("{at}: top {} exceeds ceiling {height_m}", o.top_m()));
            }
            if o.base_height_m < 0.0 {
                out.push(format!("{at}.base_height_m: must be nonnegative"));
            }
            if o.layer < last_layer {
                out.push(format!("{at}.layer: {} placed after {last_layer}", o.layer));
            }
            last_layer = last_layer.max(o.layer);
            for (name, zone) in [("zone_start", &self.zone_start), ("zone_goal", &self.zone_goal)] {
                if o.footprint().overlaps(&zone.as_footprint()) {
                    out.push(format!("{at}: footprint overlaps {name}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.realized_clutterness) {
            out.push("realized_clutterness: must lie in [0, 1]".into());
        }
        out
    }
}

pub fn scene_id(config: &GenerationConfig) -> String {
    format!("{}-{}-{:016x}", config.regime, config.room_type, config.seed)
}

/// Per-layer item counts for the two density-controlled layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub supporting_large: usize,
    pub small_clutter: usize,
}

/// `n_i = floor(c * A * w_i / a_i)` for the supporting and clutter layers.
///
/// A relative slack of 1e-12 absorbs binary rounding of decimal inputs whose
/// exact quotient is an integer.
pub fn layer_counts(
    clutterness: f64,
    floor_area_m2: f64,
    weights: &LayerWeights,
    mean_footprint_large_m2: f64,
    mean_footprint_small_m2: f64,
) -> Result<LayerCounts> {
    if !(0.0..=1.0).contains(&clutterness) {
        return Err(Error::domain(format!("clutterness must lie in [0, 1], got {clutterness}")));
    }
    if !(floor_area_m2 > 0.0 && floor_area_m2.is_finite()) {
        return Err(Error::domain(format!("floor area must be positive, got {floor_area_m2}")));
    }
    weights.validate()?;
    for (name, a) in [("supporting_large", mean_footprint_large_m2), ("small_clutter", mean_footprint_small_m2)] {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("mean footprint for {name} must be positive, got {a}")));
        }
    }
    let count = |w: f64, a: f64| {
        let x = clutterness * floor_area_m2 * w / a;
        (x * (1.0 + 1e-12) + 1e-12).floor() as usize
    };
    Ok(LayerCounts {
        supporting_large: count(weights.supporting_large, mean_footprint_large_m2),
        small_clutter: count(weights.small_clutter, mean_footprint_small_m2),
    })
}

/// Whether an obstacle's footprint counts toward realized clutterness.
pub fn counts_toward_clutterness(o: &ObstacleInstance, standing_height_m: f64) -> bool {
    match o.layer {
        Layer::Anchor => false,
        Layer::VerticalObstruction => o.base_height_m < standing_height_m,
        _ => true,
    }
}

/// `c' = (sum of non-anchor canonical footprints) / floor area`. Overhead
/// members mounted at or above the embodiment's standing height occupy no
/// floor and are excluded.
pub fn realized_clutterness(scene: &Scene) -> f64 {
    let area = scene.room.area();
    let sum: f64 = scene
        .obstacles
        .iter()
        .filter(|o| counts_toward_clutterness(o, scene.embodiment.standing_height_m))
        .map(ObstacleInstance::footprint_area)
        .sum();
    sum / area
}

struct Placer<'a> {
    config: &'a GenerationConfig,
    rng: ChaCha8Rng,
    placed: Vec<ObstacleInstance>,
    zones: [Footprint; 2],
    standing_height_m: f64,
}

impl Placer<'_> {
    fn length(&self) -> f64 {
        self.config.room_size_m[0]
    }

    fn width(&self) -> f64 {
        self.config.room_size_m[1]
    }

    fn yaw(&mut self) -> f64 {
        match self.config.regime {
            Regime::Domestic => self.rng.random_range(0..4) as f64 * FRAC_PI_2,
            Regime::Debris => self.rng.random_range(0.0..TAU),
        }
    }

    fn accepts(&self, candidate: &ObstacleInstance) -> bool {
        let fp = candidate.footprint();
        if !fp.inside(self.length(), self.width()) {
            return false;
        }
        if candidate.top_m() > self.config.ceiling_height_m + 1e-9 {
            return false;
        }
        if self.zones.iter().any(|z| z.overlaps(&fp)) {
            return false;
        }
        self.placed.iter().all(|o| candidate.attach_target.as_deref() == Some(o.id.as_str()) || !candidate.collides(o))
    }

    fn commit(&mut self, mut o: ObstacleInstance) {
        o.id = format!("obs{:03}", self.placed.len());
        self.placed.push(o);
    }

    fn instance(asset: &Asset, center: [f64; 2], yaw: f64) -> ObstacleInstance {
        ObstacleInstance {
            id: String::new(),
            asset_id: asset.id.clone(),
            layer: asset.layer,
            center_m: center,
            yaw_rad: yaw,
            extents_m: asset.extents_m,
            base_height_m: 0.0,
            attach_target: None,
        }
    }

    /// Wall-adjacent pose: the asset's width runs along the wall and its back
    /// faces it. `wall` indexes south (y=0), north (y=W), west (x=0), east
    /// (x=L).
    fn wall_pose(&mut self, asset: &Asset, wall: usize) -> Option<([f64; 2], f64)> {
        let (l, w) = (self.length(), self.width());
        let (aw, ad) = (asset.width(), asset.depth());
        let off = WALL_STANDOFF_M + 0.5 * ad;
        let along_len = if wall < 2 { l } else { w };
        if aw > along_len {
            return None;
        }
        let t = self.rng.random_range(0.5 * aw..=along_len - 0.5 * aw);
        Some(match wall {
            0 => ([t, off], 0.0),
            1 => ([t, w - off], PI),
            2 => ([off, t], -FRAC_PI_2),
            _ => ([l - off, t], FRAC_PI_2),
        })
    }

    fn uniform_pose(&mut self, asset: &Asset) -> ([f64; 2], f64) {
        let yaw = self.yaw();
        let r = 0.5 * asset.width().hypot(asset.depth());
        let (l, w) = (self.length(), self.width());
        let sample = |rng: &mut ChaCha8Rng, span: f64| {
            if span > 2.0 * r {
                rng.random_range(r..span - r)
            } else {
                rng.random_range(0.0..span)
            }
        };
        let x = sample(&mut self.rng, l);
        let y = sample(&mut self.rng, w);
        ([x, y], yaw)
    }

    fn try_place(&mut self, asset: &Asset, mut pose: impl FnMut(&mut Self) -> Option<([f64; 2], f64)>) -> bool {
        for _ in 0..self.config.max_placement_retries {
            let Some((center, yaw)) = pose(self) else { continue };
            let candidate = Self::instance(asset, center, yaw);
            if self.accepts(&candidate) {
                self.commit(candidate);
                return true;
            }
        }
        false
    }

    fn place_domestic_anchor(&mut self, assets: &[&Asset]) -> bool {
        let asset = assets[self.rng.random_range(0..assets.len())];
        let (l, w) = (self.length(), self.width());
        let walls: Vec<usize> = if (l - w).abs() < 1e-9 {
            vec![0, 1, 2, 3]
        } else if l > w {
            vec![0, 1]
        } else {
            vec![2, 3]
        };
        self.try_place(asset, |p| {
            let wall = walls[p.rng.random_range(0..walls.len())];
            p.wall_pose(asset, wall)
        })
    }

    fn place_pillar_grid(&mut self, assets: &[&Asset]) -> usize {
        let (l, w) = (self.length(), self.width());
        let n = ((self.config.pillar_density_per_m2 * l * w).round() as usize).max(1);
        let cols = ((n as f64 * l / w).sqrt().ceil() as usize).max(1);
        let rows = n.div_ceil(cols);
        let mut placed = 0;
        for k in 0..n {
            let (i, j) = (k % cols, k / cols);
            let center = [l * (i + 1) as f64 / (cols + 1) as f64, w * (j + 1) as f64 / (rows + 1) as f64];
            let asset = assets[self.rng.random_range(0..assets.len())];
            let yaw = self.yaw();
            let candidate = Self::instance(asset, center, yaw);
            if self.accepts(&candidate) {
                self.commit(candidate);
                placed += 1;
            }
        }
        if placed == 0 {
            // Grid points all collided with spawn zones; fall back to one
            // freely placed pillar.
            let asset = assets[self.rng.random_range(0..assets.len())];
            if self.try_place(asset, |p| Some(p.uniform_pose(asset))) {
                placed = 1;
            }
        }
        placed
    }

    fn place_layer_item(&mut self, asset: &Asset) -> bool {
        if asset.placement_prior == PlacementPrior::WallAligned {
            self.try_place(asset, |p| {
                let wall = p.rng.random_range(0..4);
                p.wall_pose(asset, wall)
            })
        } else {
            self.try_place(asset, |p| Some(p.uniform_pose(asset)))
        }
    }

    /// Overhead member hanging off a random pillar or wall at a clearance of
    /// `U[0.6, 1.1] x standing height`.
    fn place_vertical(&mut self, asset: &Asset) -> bool {
        let (l, w) = (self.length(), self.width());
        for _ in 0..self.config.max_placement_retries {
            let base = self.rng.random_range(0.6..=1.1) * self.standing_height_m;
            let pillars: Vec<(String, [f64; 2])> = self
                .placed
                .iter()
                .filter(|o| o.layer == Layer::Anchor || o.asset_id.contains("pillar"))
                .filter(|o| o.top_m() >= base + asset.height())
                .map(|o| (o.id.clone(), o.center_m))
                .collect();
            let use_pillar = !pillars.is_empty() && self.rng.random_bool(0.5);
            let half = 0.5 * asset.width();
            let (center, yaw, target) = if use_pillar {
                let (id, c) = pillars[self.rng.random_range(0..pillars.len())].clone();
                let yaw = self.rng.random_range(0.0..TAU);
                let (s, co) = yaw.sin_cos();
                ([c[0] + half * co, c[1] + half * s], yaw, id)
            } else {
                let wall = self.rng.random_range(0..4usize);
                let (along, name) = match wall {
                    0 | 1 => (l, if wall == 0 { "wall_south" } else { "wall_north" }),
                    _ => (w, if wall == 2 { "wall_west" } else { "wall_east" }),
                };
                let m = 0.5 * asset.depth();
                if along <= 2.0 * m {
                    continue;
                }
                let t = self.rng.random_range(m..along - m);
                let (center, yaw) = match wall {
                    0 => ([t, half], FRAC_PI_2),
                    1 => ([t, w - half], -FRAC_PI_2),
                    2 => ([half, t], 0.0),
                    _ => ([l - half, t], PI),
                };
                (center, yaw, name.to_string())
            };
            let mut candidate = Self::instance(asset, center, yaw);
            candidate.base_height_m = base;
            candidate.attach_target = Some(target);
            if self.accepts(&candidate) {
                self.commit(candidate);
                return true;
            }
        }
        false
    }
}

fn eligible<'a>(catalog: &'a AssetCatalog, layer: Layer, config: &'a GenerationConfig) -> Result<Vec<&'a Asset>> {
    let v: Vec<&Asset> = catalog.eligible(layer, config.regime, &config.room_type).collect();
    if v.is_empty() {
        return Err(Error::config(format!(
            "no eligible assets for (layer={layer}, regime={}, room_type={:?})",
            config.regime, config.room_type
        )));
    }
    Ok(v)
}

/// Places obstacles for `config` without navigability repair. The returned
/// scene has annealing level 0 and an empty trace.
pub fn place_layout(config: &GenerationConfig, catalog: &AssetCatalog, embodiment: &Embodiment) -> Result<Scene> {
    config.validate()?;
    embodiment.validate()?;
    let anchors = eligible(catalog, Layer::Anchor, config)?;
    let large = eligible(catalog, Layer::SupportingLarge, config)?;
    let small = eligible(catalog, Layer::SmallClutter, config)?;
    let vertical = match config.regime {
        Regime::Debris if config.vertical_obstruction_count > 0 => {
            eligible(catalog, Layer::VerticalObstruction, config)?
        }
        _ => Vec::new(),
    };

    let mut scene = Scene::empty(config.clone(), embodiment);
    scene.catalog_version = catalog.version.clone();

    let mut placer = Placer {
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        placed: Vec::new(),
        zones: [scene.zone_start.as_footprint(), scene.zone_goal.as_footprint()],
        standing_height_m: embodiment.standing_height_m,
    };

    let anchored = match config.regime {
        Regime::Domestic => placer.place_domestic_anchor(&anchors),
        Regime::Debris => placer.place_pillar_grid(&anchors) > 0,
    };
    if !anchored {
        scene.obstacles = placer.placed;
        return Err(Error::GenerationFailed {
            reason: format!("could not place an anchor in a {:?} m room", config.room_size_m),
            last_layout: Some(Box::new(scene)),
        });
    }

    let counts = layer_counts(
        config.target_clutterness,
        config.floor_area(),
        &config.layer_weights,
        mean_footprint(catalog, Layer::SupportingLarge, config.regime, &config.room_type)?,
        mean_footprint(catalog, Layer::SmallClutter, config.regime, &config.room_type)?,
    )?;

    for (pool, n) in [(&large, counts.supporting_large), (&small, counts.small_clutter)] {
        for _ in 0..n {
            let asset = pool[placer.rng.random_range(0..pool.len())];
            if !placer.place_layer_item(asset) {
                tracing::debug!(asset = %asset.id, seed = config.seed, "placement retries exhausted; item skipped");
            }
        }
    }
    if !vertical.is_empty() {
        for _ in 0..config.vertical_obstruction_count {
            let asset = vertical[placer.rng.random_range(0..vertical.len())];
            if !placer.place_vertical(asset) {
                tracing::warn!(asset = %asset.id, seed = config.seed, "overhead member could not be attached; skipped");
            }
        }
    }

    scene.obstacles = placer.placed;
    scene.realized_clutterness = realized_clutterness(&scene);
    Ok(scene)
}

/// Generates a navigable scene. Deterministic in `(config, catalog,
/// embodiment)`.
pub fn generate_scene(config: &GenerationConfig, catalog: &AssetCatalog, embodiment: &Embodiment) -> Result<Scene> {
    let layout = place_layout(config, catalog, embodiment)?;
    let outcome = anneal_until_navigable(&layout, embodiment, &config.annealing, &config.navigation)?;
    Ok(outcome.scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigability::{rasterize, reachable};
    use proptest::prelude::*;

    fn bedroom(c: f64, seed: u64) -> GenerationConfig {
        GenerationConfig::new(Regime::Domestic, "bedroom", [5.0, 4.0], c, seed)
    }

    #[test]
    fn layer_counts_examples() {
        let w = LayerWeights { supporting_large: 0.6, small_clutter: 0.4 };
        let n = layer_counts(0.3, 20.0, &w, 1.5, 0.25).unwrap();
        assert_eq!((n.supporting_large, n.small_clutter), (2, 9));
        let z = layer_counts(0.0, 20.0, &w, 1.5, 0.25).unwrap();
        assert_eq!((z.supporting_large, z.small_clutter), (0, 0));
        let d = LayerWeights { supporting_large: 1.0, small_clutter: 0.0 };
        let n = layer_counts(1.0, 10.0, &d, 2.0, 0.3).unwrap();
        assert_eq!((n.supporting_large, n.small_clutter), (5, 0));
        assert!(matches!(layer_counts(0.3, 20.0, &w, 0.0, 0.25), Err(Error::Domain(_))));
        let bad = LayerWeights { supporting_large: 0.7, small_clutter: 0.4 };
        assert!(layer_counts(0.3, 20.0, &bad, 1.0, 1.0).is_err());
    }

    #[test]
    fn footprint_overlap_and_distance() {
        let a = Footprint { center: [0.0, 0.0], half: [0.5, 0.5], yaw: 0.0 };
        let b = Footprint { center: [1.2, 0.0], half: [0.5, 0.5], yaw: 0.0 };
        assert!(!a.overlaps(&b));
        let c = Footprint { center: [1.2, 0.0], half: [0.5, 0.5], yaw: PI / 4.0 };
        // Rotated square reaches 1.2 - 0.707 = 0.49 < 0.5.
        assert!(a.overlaps(&c));
        assert!((a.distance(1.5, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(a.distance(0.1, 0.2), 0.0);
        assert!((a.distance(1.5, 1.5) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_clutterness_leaves_single_anchor() {
        let emb = Embodiment::default_humanoid();
        let cat = AssetCatalog::starter();
        for seed in 0..20 {
            let s = generate_scene(&bedroom(0.0, seed), &cat, &emb).unwrap();
            assert_eq!(s.count(Layer::Anchor), 1);
            assert_eq!(s.obstacles.len(), 1);
            assert_eq!(s.annealing_level_used, 0);
            assert_eq!(s.realized_clutterness, 0.0);
        }
        let debris = GenerationConfig::new(Regime::Debris, "bedroom", [6.0, 5.0], 0.0, 3);
        let s = generate_scene(&debris, &cat, &emb).unwrap();
        assert!(s.count(Layer::Anchor) >= 1);
        assert_eq!(s.count(Layer::SupportingLarge) + s.count(Layer::SmallClutter), 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let emb = Embodiment::default_humanoid();
        let cat = AssetCatalog::starter();
        let cfg = GenerationConfig::new(Regime::Debris, "kitchen", [6.0, 5.0], 0.4, 42);
        let a = serde_json::to_string(&generate_scene(&cfg, &cat, &emb).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scene(&cfg, &cat, &emb).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bedroom_realized_density_and_navigability() {
        let emb = Embodiment::default_humanoid();
        let cat = AssetCatalog::starter();
        let s = generate_scene(&bedroom(0.4, 11), &cat, &emb).unwrap();
        let sum: f64 =
            s.obstacles.iter().filter(|o| o.layer != Layer::Anchor).map(|o| o.extents_m[0] * o.extents_m[1]).sum();
        assert!((s.realized_clutterness - sum / 20.0).abs() < 1e-12);
        let grid = rasterize(&s, 0.05, emb.clearance_radius_m, 0.3 * emb.standing_height_m);
        assert!(reachable(&grid, &s.zone_start, &s.zone_goal, Default::default()));
        assert!(s.violations().is_empty(), "{:?}", s.violations());
    }

    #[test]
    fn catalog_gap_is_configuration_error() {
        let emb = Embodiment::default_humanoid();
        let cat = AssetCatalog::starter();
        let cfg = GenerationConfig::new(Regime::Domestic, "garage", [5.0, 4.0], 0.3, 1);
        assert!(matches!(generate_scene(&cfg, &cat, &emb), Err(Error::Config(_))));
    }

    #[test]
    fn realized_clutterness_examples() {
        let emb = Embodiment::default_humanoid();
        let mut s = Scene::empty(GenerationConfig::new(Regime::Domestic, "bedroom", [5.0, 2.0], 0.3, 0), &emb);
        assert_eq!(realized_clutterness(&s), 0.0);
        let mk = |layer, ext: [f64; 3], base| ObstacleInstance {
            id: "x".into(),
            asset_id: "x".into(),
            layer,
            center_m: [2.5, 1.0],
            yaw_rad: 0.3,
            extents_m: ext,
            base_height_m: base,
            attach_target: None,
        };
        s.obstacles.push(mk(Layer::Anchor, [1.0, 1.0, 1.0], 0.0));
        s.obstacles.push(mk(Layer::SupportingLarge, [1.0, 2.0, 1.0], 0.0));
        s.obstacles.push(mk(Layer::SmallClutter, [0.5, 2.0, 1.0], 0.0));
        assert!((realized_clutterness(&s) - 0.3).abs() < 1e-15);
        // Overhead member above standing height occupies no floor.
        s.obstacles.push(mk(Layer::VerticalObstruction, [2.0, 0.2, 0.2], emb.standing_height_m));
        assert!((realized_clutterness(&s) - 0.3).abs() < 1e-15);
        s.obstacles.push(mk(Layer::VerticalObstruction, [2.0, 0.5, 0.2], 0.9));
        assert!((realized_clutterness(&s) - 0.4).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn generated_scenes_respect_placement_invariants(
            seed in 0u64..10_000,
            c in 0.0..0.6f64,
            debris in any::<bool>(),
        ) {
            let emb = Embodiment::default_humanoid();
            let cat = AssetCatalog::starter();
            let regime = if debris { Regime::Debris } else { Regime::Domestic };
            let cfg = GenerationConfig::new(regime, "living_room", [6.0, 4.5], c, seed);
            let s = generate_scene(&cfg, &cat, &emb).unwrap();
            prop_assert!(s.violations().is_empty(), "{:?}", s.violations());
            let floor: Vec<&ObstacleInstance> = s.obstacles.iter().filter(|o| o.base_height_m == 0.0).collect();
            for (i, a) in floor.iter().enumerate() {
                for b in &floor[i + 1..] {
                    prop_assert!(!a.footprint().overlaps(&b.footprint()), "{} overlaps {}", a.id, b.id);
                }
            }
        }
    }
}
