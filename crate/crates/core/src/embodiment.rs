//! Humanoid morphology descriptor, embodiment scaling, a small forward
//! kinematics model and capsule surface sampling.
//!
//! Keypoints follow the 24-joint body layout emitted by common full-body
//! trackers. The default order is:
//!
//! | idx | name | idx | name | idx | name |
//! |----:|------|----:|------|----:|------|
//! | 0 | pelvis | 8 | right_ankle | 16 | left_shoulder |
//! | 1 | left_hip | 9 | spine3 | 17 | right_shoulder |
//! | 2 | right_hip | 10 | left_foot | 18 | left_elbow |
//! | 3 | spine1 | 11 | right_foot | 19 | right_elbow |
//! | 4 | left_knee | 12 | neck | 20 | left_wrist |
//! | 5 | right_knee | 13 | left_collar | 21 | right_wrist |
//! | 6 | spine2 | 14 | right_collar | 22 | left_hand |
//! | 7 | left_ankle | 15 | head | 23 | right_hand |
//!
//! The mapping from a specific robot to these keypoints is configuration: a
//! descriptor file may rename keypoints and change offsets and radii as long as
//! the tree invariants hold.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::trajectory::Trajectory;
use crate::{Error, Result, Vec3};

pub const KEYPOINT_COUNT: usize = 24;

pub const EMBODIMENT_SCHEMA: &str = "clutterbench.embodiment/1";

/// Default capsule surface sampling density in samples per meter.
pub const DEFAULT_SAMPLE_DENSITY: f64 = 100.0;

pub const DEFAULT_KEYPOINT_NAMES: [&str; KEYPOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Parent of every default keypoint; the pelvis is the root.
pub const DEFAULT_PARENTS: [Option<usize>; KEYPOINT_COUNT] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Humanoid morphology descriptor.
///
/// `rest_offsets_m[i]` is the offset of keypoint `i` from its parent in the
/// upright rest pose (x forward, y left, z up); the root entry is ignored.
/// `capsule_radii_m[e]` is the radius of the body capsule spanning
/// `skeleton_edges[e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embodiment {
    #[serde(default = "embodiment_schema")]
    pub schema: String,
    pub id: String,
    pub standing_height_m: f64,
    pub clearance_radius_m: f64,
    pub keypoint_names: Vec<String>,
    pub skeleton_edges: Vec<(usize, usize)>,
    pub capsule_radii_m: Vec<f64>,
    pub rest_offsets_m: Vec<Vec3>,
    pub pelvis_index: usize,
    pub left_foot_index: usize,
    pub right_foot_index: usize,
}

fn embodiment_schema() -> String {
    EMBODIMENT_SCHEMA.to_string()
}

impl Embodiment {
    /// A 1.32 m tall humanoid roughly proportioned like a compact
    /// commercial biped.
    pub fn default_humanoid() -> Self {
        let offsets: [[f64; 3]; KEYPOINT_COUNT] = [
            [0.0, 0.0, 0.0],
            [0.0, 0.09, -0.06],
            [0.0, -0.09, -0.06],
            [0.0, 0.0, 0.10],
            [0.0, 0.0, -0.30],
            [0.0, 0.0, -0.30],
            [0.0, 0.0, 0.12],
            [0.0, 0.0, -0.30],
            [0.0, 0.0, -0.30],
            [0.0, 0.0, 0.10],
            [0.10, 0.0, -0.05],
            [0.10, 0.0, -0.05],
            [0.0, 0.0, 0.14],
            [0.0, 0.06, 0.10],
            [0.0, -0.06, 0.10],
            [0.0, 0.0, 0.12],
            [0.0, 0.12, 0.0],
            [0.0, -0.12, 0.0],
            [0.0, 0.0, -0.22],
            [0.0, 0.0, -0.22],
            [0.0, 0.0, -0.20],
            [0.0, 0.0, -0.20],
            [0.0, 0.0, -0.07],
            [0.0, 0.0, -0.07],
        ];
        // Radius of the capsule ending at each child keypoint.
        let child_radius: [f64; KEYPOINT_COUNT] = [
            0.0, 0.06, 0.06, 0.09, 0.06, 0.06, 0.09, 0.045, 0.045, 0.10, 0.03, 0.03, 0.05, 0.05, 0.05, 0.09, 0.045,
            0.045, 0.04, 0.04, 0.035, 0.035, 0.03, 0.03,
        ];
        let skeleton_edges: Vec<(usize, usize)> =
            DEFAULT_PARENTS.iter().enumerate().filter_map(|(child, parent)| parent.map(|p| (p, child))).collect();
        let capsule_radii_m = skeleton_edges.iter().map(|&(_, child)| child_radius[child]).collect();
        let rest_offsets_m: Vec<Vec3> = offsets.iter().map(|o| Vec3::new(o[0], o[1], o[2])).collect();
        let mut emb = Embodiment {
            schema: EMBODIMENT_SCHEMA.to_string(),
            id: "humanoid-1p32".to_string(),
            standing_height_m: 1.32,
            clearance_radius_m: 0.0,
            keypoint_names: DEFAULT_KEYPOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            skeleton_edges,
            capsule_radii_m,
            rest_offsets_m,
            pelvis_index: 0,
            left_foot_index: 10,
            right_foot_index: 11,
        };
        emb.clearance_radius_m = emb.default_clearance_radius();
        emb
    }

    /// Half the rest-pose distance between the two keypoints named
    /// `left_shoulder` and `right_shoulder`. Returns 0 if either is missing.
    pub fn default_clearance_radius(&self) -> f64 {
        let idx = |name: &str| self.keypoint_names.iter().position(|n| n == name);
        match (idx("left_shoulder"), idx("right_shoulder")) {
            (Some(l), Some(r)) => {
                let rest = self.rest_pose();
                0.5 * (rest[l] - rest[r]).norm()
            }
            _ => 0.0,
        }
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_names.len()
    }

    /// Parent index of every keypoint (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.keypoint_count()];
        for &(p, c) in &self.skeleton_edges {
            if c < parents.len() {
                parents[c] = Some(p);
            }
        }
        parents
    }

    /// Rest-pose keypoints with the root at the origin.
    pub fn rest_pose(&self) -> Vec<Vec3> {
        let tree = KinematicTree::from_embodiment(self);
        let zeros = vec![0.0; tree.joint_count()];
        tree.forward_kinematics(&zeros).expect("angle count matches by construction")
    }

    /// Checks every descriptor invariant and returns all violations, each
    /// prefixed with its JSON path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != EMBODIMENT_SCHEMA {
            out.push(format!("schema: expected {EMBODIMENT_SCHEMA:?}, found {:?}", self.schema));
        }
        let n = self.keypoint_count();
        if n != KEYPOINT_COUNT {
            out.push(format!("keypoint_names: expected {KEYPOINT_COUNT} keypoints, found {n}"));
        }
        if !(self.standing_height_m > 0.0 && self.standing_height_m.is_finite()) {
            out.push("standing_height_m: must be positive".into());
        }
        if !(self.clearance_radius_m > 0.0 && self.clearance_radius_m.is_finite()) {
            out.push("clearance_radius_m: must be positive".into());
        } else if self.clearance_radius_m >= self.standing_height_m {
            out.push("clearance_radius_m: must be smaller than standing_height_m".into());
        }
        if self.rest_offsets_m.len() != n {
            out.push(format!("rest_offsets_m: expected {n} entries, found {}", self.rest_offsets_m.len()));
        }
        for (i, o) in self.rest_offsets_m.iter().enumerate() {
            if !o.iter().all(|v| v.is_finite()) {
                out.push(format!("rest_offsets_m[{i}]: non-finite offset"));
            }
        }
        if self.capsule_radii_m.len() != self.skeleton_edges.len() {
            out.push(format!(
                "capsule_radii_m: expected {} entries (one per edge), found {}",
                self.skeleton_edges.len(),
                self.capsule_radii_m.len()
            ));
        }
        for (i, r) in self.capsule_radii_m.iter().enumerate() {
            if !(*r > 0.0 && r.is_finite()) {
                out.push(format!("capsule_radii_m[{i}]: must be positive"));
            }
        }
        // Tree check: n - 1 edges, every child has exactly one parent, and
        // all keypoints connect to a single root.
        if n > 0 && self.skeleton_edges.len() != n - 1 {
            out.push(format!(
                "skeleton_edges: a tree over {n} keypoints needs {} edges, found {}",
                n - 1,
                self.skeleton_edges.len()
            ));
        }
        let mut parent_count = vec![0usize; n];
        for (i, &(p, c)) in self.skeleton_edges.iter().enumerate() {
            if p >= n || c >= n {
                out.push(format!("skeleton_edges[{i}]: index out of range"));
                continue;
            }
            if p == c {
                out.push(format!("skeleton_edges[{i}]: self loop"));
            }
            parent_count[c] += 1;
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent_count[i] == 0).collect();
        if parent_count.iter().any(|&c| c > 1) {
            out.push("skeleton_edges: a keypoint has more than one parent".into());
        } else if roots.len() != 1 {
            out.push(format!("skeleton_edges: expected a single root, found {}", roots.len()));
        } else if out.iter().all(|m| !m.starts_with("skeleton_edges")) {
            let reached = topological_order(n, &self.skeleton_edges, roots[0]).len();
            if reached != n {
                out.push("skeleton_edges: graph is not connected or contains a cycle".into());
            }
        }
        let named = [
            ("pelvis_index", self.pelvis_index),
            ("left_foot_index", self.left_foot_index),
            ("right_foot_index", self.right_foot_index),
        ];
        for (field, idx) in named {
            if idx >= n {
                out.push(format!("{field}: index {idx} out of range"));
            }
        }
        if self.pelvis_index == self.left_foot_index
            || self.pelvis_index == self.right_foot_index
            || self.left_foot_index == self.right_foot_index
        {
            out.push("pelvis_index/left_foot_index/right_foot_index: must be distinct".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("embodiment {:?}: {}", self.id, v.join("; "))))
        }
    }
}

/// Breadth-first order from `root` following parent→child edges.
fn topological_order(n: usize, edges: &[(usize, usize)], root: usize) -> Vec<usize> {
    let mut children = vec![Vec::new(); n];
    for &(p, c) in edges {
        if p < n && c < n {
            children[p].push(c);
        }
    }
    let mut seen = vec![false; n];
    let mut order = vec![root];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let j = order[head];
        head += 1;
        for &c in &children[j] {
            if !seen[c] {
                seen[c] = true;
                order.push(c);
            }
        }
    }
    order
}

/// `α = h_r / h_o`, the ratio of robot to operator standing height.
pub fn embodiment_scale_factor(robot_height_m: f64, operator_height_m: f64) -> Result<f64> {
    if !(robot_height_m > 0.0 && robot_height_m.is_finite()) {
        return Err(Error::domain(format!("robot standing height must be positive, got {robot_height_m}")));
    }
    if !(operator_height_m > 0.0 && operator_height_m.is_finite()) {
        return Err(Error::domain(format!("operator standing height must be positive, got {operator_height_m}")));
    }
    Ok(robot_height_m / operator_height_m)
}

/// Uniformly rescales every keypoint about the world origin. Timestamps are
/// untouched and the factor is folded into `applied_scale`.
pub fn scale_trajectory(traj: &Trajectory, alpha: f64) -> Result<Trajectory> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("scale factor must be positive, got {alpha}")));
    }
    let mut out = traj.clone();
    for frame in &mut out.frames {
        for kp in &mut frame.keypoints {
            *kp *= alpha;
        }
    }
    out.applied_scale *= alpha;
    Ok(out)
}

/// Rigid root placement: translation plus heading about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPose {
    pub position: Vec3,
    pub yaw_rad: f64,
}

impl Default for RootPose {
    fn default() -> Self {
        RootPose { position: Vec3::zeros(), yaw_rad: 0.0 }
    }
}

/// Kinematic chain with one revolute degree of freedom per joint.
///
/// Each joint's rotation (about its own axis, expressed in the parent frame
/// after the parent's rotation) is applied to the offsets of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    axes: Vec<Unit<Vec3>>,
    order: Vec<usize>,
    pub root: RootPose,
}

impl KinematicTree {
    /// Builds a tree from explicit parents, offsets and axes. Exactly one
    /// joint must have no parent.
    pub fn new(parents: Vec<Option<usize>>, offsets: Vec<Vec3>, axes: Vec<Vec3>) -> Result<Self> {
        let n = parents.len();
        if offsets.len() != n || axes.len() != n {
            return Err(Error::domain(format!(
                "joint arrays disagree: {n} parents, {} offsets, {} axes",
                offsets.len(),
                axes.len()
            )));
        }
        if offsets.iter().any(|o| !o.iter().all(|v| v.is_finite())) {
            return Err(Error::domain("non-finite joint offset"));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::domain(format!("expected one root joint, found {}", roots.len())));
        }
        let edges: Vec<(usize, usize)> = parents.iter().enumerate().filter_map(|(c, p)| p.map(|p| (p, c))).collect();
        if edges.iter().any(|&(p, _)| p >= n) {
            return Err(Error::domain("parent index out of range"));
        }
        let order = topological_order(n, &edges, roots[0]);
        if order.len() != n {
            return Err(Error::domain("joint graph is not a connected tree"));
        }
        let axes = axes
            .into_iter()
            .map(|a| Unit::try_new(a, 1e-12).ok_or_else(|| Error::domain("zero-length joint axis")))
            .collect::<Result<Vec<_>>>()?;
        Ok(KinematicTree { parents, offsets, axes, order, root: RootPose::default() })
    }

    /// Tree over the embodiment skeleton with every joint pitching about +y.
    pub fn from_embodiment(emb: &Embodiment) -> Self {
        let n = emb.keypoint_count();
        Self::new(emb.parents(), emb.rest_offsets_m.clone(), vec![Vec3::y(); n])
            .expect("embodiment skeleton is a valid tree")
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn set_axis(&mut self, joint: usize, axis: Vec3) -> Result<()> {
        let axis = Unit::try_new(axis, 1e-12).ok_or_else(|| Error::domain("zero-length joint axis"))?;
        let slot = self.axes.get_mut(joint).ok_or_else(|| Error::domain(format!("joint {joint} out of range")))?;
        *slot = axis;
        Ok(())
    }

    /// World positions of every joint for the given per-joint angles.
    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Vec<Vec3>> {
        let n = self.joint_count();
        if angles.len() != n {
            return Err(Error::domain(format!("expected {n} joint angles, got {}", angles.len())));
        }
        let root_rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.root.yaw_rad);
        let mut rot = vec![Rotation3::identity(); n];
        let mut pos = vec![Vec3::zeros(); n];
        for &j in &self.order {
            let (parent_rot, parent_pos) = match self.parents[j] {
                Some(p) => (rot[p], pos[p]),
                None => (root_rot, self.root.position),
            };
            pos[j] = parent_pos + parent_rot * self.offsets[j];
            rot[j] = parent_rot * Rotation3::from_axis_angle(&self.axes[j], angles[j]);
        }
        Ok(pos)
    }
}

/// Free-function form of [`KinematicTree::forward_kinematics`].
pub fn forward_kinematics(tree: &KinematicTree, joint_angles: &[f64]) -> Result<Vec<Vec3>> {
    tree.forward_kinematics(joint_angles)
}

/// Unit vectors `u`, `v` completing `axis` to an orthonormal basis.
fn orthonormal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Deterministic samples on the surface of the capsule of radius `radius`
/// around segment `a`–`b`.
///
/// The cylinder carries `round(len * density) + 1` rings, each with
/// `ceil(2π r density)` points (at least 6). Both ends get hemispherical caps
/// with latitude rings at the same arc spacing. A zero-length segment yields a
/// full sphere.
pub fn sample_capsule_surface(a: &Vec3, b: &Vec3, radius: f64, density: f64, out: &mut Vec<Vec3>) {
    let seg = b - a;
    let len = seg.norm();
    let axis = if len > 1e-12 { seg / len } else { Vec3::z() };
    let (u, v) = orthonormal_basis(&axis);
    let ring_points = ((2.0 * PI * radius * density).ceil() as usize).max(6);
    let ring = |center: Vec3, r: f64, count: usize, out: &mut Vec<Vec3>| {
        for k in 0..count {
            let theta = 2.0 * PI * k as f64 / count as f64;
            out.push(center + (u * theta.cos() + v * theta.sin()) * r);
        }
    };

    if len > 1e-12 {
        let rings = (len * density).round() as usize + 1;
        for i in 0..rings {
            let t = if rings == 1 { 0.5 } else { i as f64 / (rings - 1) as f64 };
            ring(a + seg * t, radius, ring_points, out);
        }
    }

    // Hemispherical caps: latitude phi in (0, π/2], measured from the
    // equator toward the pole.
    let lat_rings = ((0.5 * PI * radius * density).ceil() as usize).max(2);
    for (end, dir) in [(*a, -axis), (*b, axis)] {
        for i in 1..=lat_rings {
            let phi = 0.5 * PI * i as f64 / lat_rings as f64;
            if i == lat_rings {
                out.push(end + dir * radius);
                continue;
            }
            let r = radius * phi.cos();
            let count = ((2.0 * PI * r * density).ceil() as usize).max(6);
            for k in 0..count {
                let theta = 2.0 * PI * k as f64 / count as f64;
                let radial = u * theta.cos() + v * theta.sin();
                out.push(end + radial * r + dir * (radius * phi.sin()));
            }
        }
        if len <= 1e-12 {
            // Equator of the sphere, shared by both caps.
            if dir == axis {
                ring(end, radius, ring_points, out);
            }
        }
    }
}

/// Surface samples for every capsule of the body in the given pose.
pub fn sample_body_surface(emb: &Embodiment, keypoints: &[Vec3], density: f64) -> Result<Vec<Vec3>> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::domain(format!("sample density must be positive, got {density}")));
    }
    if keypoints.len() != emb.keypoint_count() {
        return Err(Error::domain(format!("expected {} keypoints, got {}", emb.keypoint_count(), keypoints.len())));
    }
    if keypoints.iter().any(|k| !k.iter().all(|v| v.is_finite())) {
        return Err(Error::domain("non-finite keypoint"));
    }
    let mut out = Vec::new();
    for (&(p, c), &r) in emb.skeleton_edges.iter().zip(&emb.capsule_radii_m) {
        sample_capsule_surface(&keypoints[p], &keypoints[c], r, density, &mut out);
    }
    Ok(out)
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}
