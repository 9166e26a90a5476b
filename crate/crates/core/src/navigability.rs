//! Occupancy rasterization, BFS reachability between spawn zones, and the
//! annealed removal schedule that repairs unreachable layouts.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::assets::Layer;
use crate::embodiment::Embodiment;
use crate::scenegen::{realized_clutterness, Rect, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavConfig {
    pub resolution_m: f64,
    pub connectivity: Connectivity,
    /// Obstacles whose vertical span misses `[0, fraction x standing
    /// height]` do not block the floor map.
    pub height_cutoff_fraction: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig { resolution_m: 0.05, connectivity: Connectivity::Four, height_cutoff_fraction: 0.3 }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_m > 0.0 && self.resolution_m.is_finite()) {
            return Err(Error::config("navigation.resolution_m must be positive"));
        }
        if !(self.height_cutoff_fraction >= 0.0) {
            return Err(Error::config("navigation.height_cutoff_fraction must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealingSchedule {
    pub decay_per_level: f64,
    pub level_large_starts: u32,
    pub max_level: u32,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule { decay_per_level: 0.2, level_large_starts: 3, max_level: 10 }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_per_level > 0.0 && self.decay_per_level < 1.0) {
            return Err(Error::config(format!(
                "annealing.decay_per_level must lie in (0, 1), got {}",
                self.decay_per_level
            )));
        }
        if self.level_large_starts < 1 {
            return Err(Error::config("annealing.level_large_starts must be at least 1"));
        }
        if self.max_level < 1 {
            return Err(Error::config("annealing.max_level must be positive"));
        }
        Ok(())
    }

    /// Small-clutter items kept at `level` out of `placed`.
    pub fn retained_small(&self, placed: usize, level: u32) -> usize {
        retained(placed, self.decay_per_level, level)
    }

    /// Supporting-large items kept at `level` out of `placed`.
    pub fn retained_large(&self, placed: usize, level: u32) -> usize {
        if level < self.level_large_starts {
            placed
        } else {
            retained(placed, self.decay_per_level, level - self.level_large_starts + 1)
        }
    }
}

/// `ceil(n * (1 - decay)^k)`, with a small slack so exact products are not
/// rounded up by binary error.
fn retained(n: usize, decay: f64, k: u32) -> usize {
    if k == 0 {
        return n;
    }
    let x = n as f64 * (1.0 - decay).powi(k as i32);
    ((x - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Boolean floor map; `true` marks a blocked cell. Cell `(ix, iy)` is stored
/// at `iy * nx + ix` and has its center at `origin + (i + 0.5) * resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution_m: f64,
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    /// Free grid covering `[0, length] x [0, width]`, including partial
    /// cells at the far edges.
    pub fn new(length_m: f64, width_m: f64, resolution_m: f64) -> Self {
        let nx = ((length_m / resolution_m - 1e-9).ceil() as usize).max(1);
        let ny = ((width_m / resolution_m - 1e-9).ceil() as usize).max(1);
        OccupancyGrid { resolution_m, origin: [0.0, 0.0], nx, ny, cells: vec![false; nx * ny] }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution_m
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn is_blocked(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, blocked: bool) {
        let i = self.index(ix, iy);
        self.cells[i] = blocked;
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let r = self.resolution();
        let o = self.origin();
        [o[0] + (ix as f64 + 0.5) * r, o[1] + (iy as f64 + 0.5) * r]
    }

    pub fn blocked_count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// Indices of cells whose centers fall in `zone`; if none does, the cell
    /// containing the zone center.
    pub fn zone_cells(&self, zone: &Rect) -> Vec<usize> {
        let r = self.resolution();
        let o = self.origin();
        let lo = |v: f64, org: f64| (((v - org) / r - 0.5).ceil().max(0.0)) as usize;
        let hi = |v: f64, org: f64, n: usize| ((((v - org) / r - 0.5).floor()) as i64).min(n as i64 - 1);
        let (x0, x1) = (lo(zone.min[0], o[0]), hi(zone.max[0], o[0], self.nx));
        let (y0, y1) = (lo(zone.min[1], o[1]), hi(zone.max[1], o[1], self.ny));
        let mut out = Vec::new();
        for iy in y0 as i64..=y1 {
            for ix in x0 as i64..=x1 {
                let (ix, iy) = (ix as usize, iy as usize);
                let c = self.cell_center(ix, iy);
                if zone.contains(c[0], c[1]) {
                    out.push(self.index(ix, iy));
                }
            }
        }
        if out.is_empty() {
            let c = zone.center();
            let ix = (((c[0] - o[0]) / r).floor().max(0.0) as usize).min(self.nx - 1);
            let iy = (((c[1] - o[1]) / r).floor().max(0.0) as usize).min(self.ny - 1);
            out.push(self.index(ix, iy));
        }
        out
    }

    /// Binary PGM (P5): `nx` columns by `ny` rows, one byte per cell, 0 for
    /// blocked and 255 for free. The first row written is the highest `y`
    /// so that the image shows `+y` upward.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        for iy in (0..self.ny).rev() {
            for ix in 0..self.nx {
                out.push(if self.is_blocked(ix, iy) { 0 } else { 255 });
            }
        }
        out
    }
}

/// Blocks every cell whose center lies within `inflation_m` of a footprint
/// of an obstacle whose vertical span meets `[0, height_cutoff_m]`.
pub fn rasterize(scene: &Scene, resolution_m: f64, inflation_m: f64, height_cutoff_m: f64) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(scene.room.length_m, scene.room.width_m, resolution_m);
    for o in &scene.obstacles {
        if o.base_height_m > height_cutoff_m || o.top_m() < 0.0 {
            continue;
        }
        let fp = o.footprint();
        let (lo, hi) = fp.aabb();
        let cell_range = |a: f64, b: f64, n: usize| {
            let first = ((a - inflation_m) / resolution_m - 0.5).floor().max(0.0) as usize;
            let last = ((((b + inflation_m) / resolution_m - 0.5).ceil()) as i64).clamp(-1, n as i64 - 1);
            (first, last)
        };
        let (x0, x1) = cell_range(lo[0], hi[0], grid.nx);
        let (y0, y1) = cell_range(lo[1], hi[1], grid.ny);
        for iy in y0 as i64..=y1 {
            for ix in x0 as i64..=x1 {
                let (ix, iy) = (ix as usize, iy as usize);
                let c = grid.cell_center(ix, iy);
                if fp.distance(c[0], c[1]) <= inflation_m {
                    grid.set(ix, iy, true);
                }
            }
        }
    }
    grid
}

/// BFS from every free start-zone cell; true iff a free goal-zone cell is
/// reached.
pub fn reachable(grid: &OccupancyGrid, zone_start: &Rect, zone_goal: &Rect, connectivity: Connectivity) -> bool {
    let mut goal = vec![false; grid.cells.len()];
    for i in grid.zone_cells(zone_goal) {
        goal[i] = !grid.cells[i];
    }
    let mut seen = vec![false; grid.cells.len()];
    let mut queue = VecDeque::new();
    for i in grid.zone_cells(zone_start) {
        if !grid.cells[i] && !seen[i] {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const N8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    let steps: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    };
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    while let Some(i) = queue.pop_front() {
        if goal[i] {
            return true;
        }
        let (x, y) = ((i % grid.nx) as i64, (i / grid.nx) as i64);
        for &(dx, dy) in steps {
            let (qx, qy) = (x + dx, y + dy);
            if qx < 0 || qy < 0 || qx >= nx || qy >= ny {
                continue;
            }
            let j = (qy * nx + qx) as usize;
            if !seen[j] && !grid.cells[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    false
}

/// Rasterizes with the embodiment's clearance radius and checks spawn-zone
/// connectivity.
pub fn is_navigable(scene: &Scene, embodiment: &Embodiment, nav: &NavConfig) -> bool {
    let grid = rasterize(
        scene,
        nav.resolution_m,
        embodiment.clearance_radius_m,
        nav.height_cutoff_fraction * embodiment.standing_height_m,
    );
    reachable(&grid, &scene.zone_start, &scene.zone_goal, nav.connectivity)
}

/// One evaluated annealing level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealStep {
    pub level: u32,
    pub retained_supporting_large: usize,
    pub retained_small_clutter: usize,
    pub realized_clutterness: f64,
    pub navigable: bool,
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub scene: Scene,
    pub level: u32,
}

/// The layout kept at `level`: anchors and overhead members stay, the most
/// recently placed supporting and clutter items go first.
pub fn layout_at_level(scene: &Scene, schedule: &AnnealingSchedule, level: u32) -> Scene {
    let placed_large = scene.count(Layer::SupportingLarge);
    let placed_small = scene.count(Layer::SmallClutter);
    let keep_large = schedule.retained_large(placed_large, level);
    let keep_small = schedule.retained_small(placed_small, level);
    let (mut seen_large, mut seen_small) = (0usize, 0usize);
    let mut out = scene.clone();
    out.obstacles.retain(|o| match o.layer {
        Layer::SupportingLarge => {
            seen_large += 1;
            seen_large <= keep_large
        }
        Layer::SmallClutter => {
            seen_small += 1;
            seen_small <= keep_small
        }
        _ => true,
    });
    out.realized_clutterness = realized_clutterness(&out);
    out.annealing_level_used = level;
    out
}

/// Removes supporting and clutter items level by level until the spawn
/// zones connect. The returned scene records its level, its realized
/// clutterness and the trace of every level evaluated.
pub fn anneal_until_navigable(
    scene: &Scene,
    embodiment: &Embodiment,
    schedule: &AnnealingSchedule,
    nav: &NavConfig,
) -> Result<AnnealOutcome> {
    schedule.validate()?;
    nav.validate()?;
    let mut trace = Vec::new();
    let mut last = scene.clone();
    for level in 0..=schedule.max_level {
        let candidate = layout_at_level(scene, schedule, level);
        let navigable = is_navigable(&candidate, embodiment, nav);
        trace.push(AnnealStep {
            level,
            retained_supporting_large: candidate.count(Layer::SupportingLarge),
            retained_small_clutter: candidate.count(Layer::SmallClutter),
            realized_clutterness: candidate.realized_clutterness,
            navigable,
        });
        last = candidate;
        if navigable {
            last.annealing_trace = trace;
            return Ok(AnnealOutcome { scene: last, level });
        }
    }
    last.annealing_trace = trace;
    Err(Error::GenerationFailed {
        reason: format!(
            "spawn zones still disconnected at annealing level {} (scene {})",
            schedule.max_level, scene.id
        ),
        last_layout: Some(Box::new(last)),
    })
}
