//! Analytic signed distances against a scene compiled to oriented boxes plus
//! the floor and four wall half-spaces.
//!
//! Distances are exact outside the union of primitives. Inside overlapping
//! primitives the min-of-signed-distances is a lower bound on the true
//! distance, so penetration depths there are conservative: never deeper than
//! the deepest single-primitive penetration.

use serde::{Deserialize, Serialize};

use crate::scenegen::Scene;
use crate::{Error, Result, Vec3};

/// Default floor contact tolerance: floor penetrations shallower than this
/// are treated as ground contact and report zero.
pub const DEFAULT_FLOOR_CONTACT_TOLERANCE_M: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Aabb {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    pub fn expanded(&self, by: f64) -> Aabb {
        Aabb { min: self.min - Vec3::repeat(by), max: self.max + Vec3::repeat(by) }
    }
}

/// Box with a yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub yaw_rad: f64,
    pub half_extents: Vec3,
}

impl OrientedBox {
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.yaw_rad.sin_cos();
        let d = p - self.center;
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let q = self.to_local(p).abs() - self.half_extents;
        let outside = q.sup(&Vec3::zeros()).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    pub fn aabb(&self) -> Aabb {
        let (s, c) = self.yaw_rad.sin_cos();
        let h = self.half_extents;
        let ex = c.abs() * h.x + s.abs() * h.y;
        let ey = s.abs() * h.x + c.abs() * h.y;
        let e = Vec3::new(ex, ey, h.z);
        Aabb { min: self.center - e, max: self.center + e }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Box(OrientedBox),
    /// Solid region `normal . p < offset`; `normal` points into free space.
    HalfSpace {
        normal: Vec3,
        offset: f64,
        floor: bool,
    },
}

impl Primitive {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Box(b) => b.signed_distance(p),
            Primitive::HalfSpace { normal, offset, .. } => normal.dot(p) - offset,
        }
    }

    /// Bounds of the solid region; unbounded axes are infinite.
    pub fn aabb(&self) -> Aabb {
        match self {
            Primitive::Box(b) => b.aabb(),
            Primitive::HalfSpace { normal, offset, .. } => {
                let mut min = Vec3::repeat(f64::NEG_INFINITY);
                let mut max = Vec3::repeat(f64::INFINITY);
                // Axis-aligned planes only.
                for k in 0..3 {
                    if normal[k] > 0.5 {
                        max[k] = *offset;
                    } else if normal[k] < -0.5 {
                        min[k] = -offset;
                    }
                }
                Aabb { min, max }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    primitives: Vec<Primitive>,
    aabbs: Vec<Aabb>,
    pub floor_contact_tolerance_m: f64,
}

impl SceneGeometry {
    /// Obstacle boxes followed by the floor and the four walls of a room
    /// spanning `[0, length] x [0, width]`.
    pub fn from_boxes(boxes: &[OrientedBox], length_m: f64, width_m: f64) -> Self {
        let mut primitives: Vec<Primitive> = boxes.iter().copied().map(Primitive::Box).collect();
        let plane = |n: [f64; 3], offset: f64, floor: bool| Primitive::HalfSpace {
            normal: Vec3::new(n[0], n[1], n[2]),
            offset,
            floor,
        };
        primitives.extend([
            plane([0.0, 0.0, 1.0], 0.0, true),
            plane([1.0, 0.0, 0.0], 0.0, false),
            plane([-1.0, 0.0, 0.0], -length_m, false),
            plane([0.0, 1.0, 0.0], 0.0, false),
            plane([0.0, -1.0, 0.0], -width_m, false),
        ]);
        let aabbs = primitives.iter().map(Primitive::aabb).collect();
        SceneGeometry { primitives, aabbs, floor_contact_tolerance_m: DEFAULT_FLOOR_CONTACT_TOLERANCE_M }
    }

    /// Union of arbitrary primitives, without implicit floor or walls.
    pub fn from_primitives(primitives: Vec<Primitive>) -> Self {
        let aabbs = primitives.iter().map(Primitive::aabb).collect();
        SceneGeometry { primitives, aabbs, floor_contact_tolerance_m: DEFAULT_FLOOR_CONTACT_TOLERANCE_M }
    }

    pub fn compile(scene: &Scene) -> Self {
        let boxes: Vec<OrientedBox> = scene
            .obstacles
            .iter()
            .map(|o| OrientedBox {
                center: Vec3::new(o.center_m[0], o.center_m[1], o.base_height_m + 0.5 * o.extents_m[2]),
                yaw_rad: o.yaw_rad,
                half_extents: Vec3::new(0.5 * o.extents_m[0], 0.5 * o.extents_m[1], 0.5 * o.extents_m[2]),
            })
            .collect();
        Self::from_boxes(&boxes, scene.room.length_m, scene.room.width_m)
    }

    pub fn with_floor_contact_tolerance(mut self, tolerance_m: f64) -> Self {
        self.floor_contact_tolerance_m = tolerance_m;
        self
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn aabbs(&self) -> &[Aabb] {
        &self.aabbs
    }

    /// Minimum analytic signed distance over all primitives.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.primitives.iter().map(|prim| prim.signed_distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to one primitive with floor contact folded in:
    /// floor penetrations shallower than the contact tolerance read as 0.
    fn contact_distance(&self, prim: &Primitive, p: &Vec3) -> f64 {
        let s = prim.signed_distance(p);
        match prim {
            Primitive::HalfSpace { floor: true, .. } if s < 0.0 && s >= -self.floor_contact_tolerance_m => 0.0,
            _ => s,
        }
    }

    /// Signed distance used for penetration: [`Self::signed_distance`] with
    /// floor contact folded in. Identical when the tolerance is zero.
    pub fn contact_signed_distance(&self, p: &Vec3) -> f64 {
        self.primitives.iter().map(|prim| self.contact_distance(prim, p)).fold(f64::INFINITY, f64::min)
    }

    /// `max(0, -min_i s_i)` over the samples.
    pub fn frame_penetration(&self, samples: &[Vec3]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::domain("frame penetration needs at least one sample"));
        }
        let min = samples.iter().map(|p| self.contact_signed_distance(p)).fold(f64::INFINITY, f64::min);
        Ok((-min).max(0.0))
    }

    /// Same value as [`Self::frame_penetration`] restricted to primitives
    /// whose bounds meet `region`. Samples inside `region` can only have
    /// negative distance to such primitives, so the result is exact when
    /// every sample lies in `region`.
    pub fn penetration_within(&self, region: &Aabb, samples: &[Vec3]) -> f64 {
        let mut min = f64::INFINITY;
        for (prim, aabb) in self.primitives.iter().zip(&self.aabbs) {
            if !aabb.intersects(region) {
                continue;
            }
            for p in samples {
                min = min.min(self.contact_distance(prim, p));
            }
        }
        (-min).max(0.0)
    }

    /// True if any primitive's bounds meet `region`.
    pub fn touches(&self, region: &Aabb) -> bool {
        self.aabbs.iter().any(|a| a.intersects(region))
    }
}

/// Free-function form of [`SceneGeometry::signed_distance`].
pub fn signed_distance(geom: &SceneGeometry, point: &Vec3) -> f64 {
    geom.signed_distance(point)
}

/// Free-function form of [`SceneGeometry::frame_penetration`].
pub fn frame_penetration(geom: &SceneGeometry, samples: &[Vec3]) -> Result<f64> {
    geom.frame_penetration(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(center: [f64; 3], half: f64, yaw: f64) -> OrientedBox {
        OrientedBox {
            center: Vec3::new(center[0], center[1], center[2]),
            yaw_rad: yaw,
            half_extents: Vec3::repeat(half),
        }
    }

    #[test]
    fn primitive_count_is_boxes_plus_five() {
        let g = SceneGeometry::from_boxes(&[cube([1.0, 1.0, 0.5], 0.2, 0.0); 3], 5.0, 4.0);
        assert_eq!(g.primitives().len(), 8);
        for (p, a) in g.primitives().iter().zip(g.aabbs()) {
            if let Primitive::Box(b) = p {
                let h = b.half_extents;
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        let (s, c) = b.yaw_rad.sin_cos();
                        let corner =
                            b.center + Vec3::new(c * sx * h.x - s * sy * h.y, s * sx * h.x + c * sy * h.y, h.z);
                        assert!(a.expanded(1e-12).contains(&corner));
                    }
                }
            }
        }
    }

    #[test]
    fn floor_distance() {
        let g = SceneGeometry::from_boxes(&[], 10.0, 10.0);
        assert_eq!(g.signed_distance(&Vec3::new(5.0, 5.0, 0.5)), 0.5);
    }

    #[test]
    fn box_center_and_face_distances() {
        let b = OrientedBox { center: Vec3::new(5.0, 5.0, 1.0), yaw_rad: 0.4, half_extents: Vec3::repeat(0.2) };
        let g = SceneGeometry::from_boxes(&[b], 10.0, 10.0);
        assert!((g.signed_distance(&b.center) + 0.2).abs() < 1e-15);
        let (s, c) = 0.4f64.sin_cos();
        let outside = b.center + Vec3::new(c, s, 0.0) * 0.3;
        assert!((g.signed_distance(&outside) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn penetration_examples() {
        let b1 = cube([5.0, 5.0, 1.0], 0.5, 0.0);
        let b2 = cube([5.6, 5.0, 1.0], 0.5, 0.0);
        let g = SceneGeometry::from_boxes(&[b1, b2], 10.0, 10.0);
        let free = [Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 1.0, 0.3)];
        assert_eq!(g.frame_penetration(&free).unwrap(), 0.0);
        // 0.03 inside the -x face of b1.
        let one = [Vec3::new(4.53, 5.0, 1.0), Vec3::new(1.0, 1.0, 1.0)];
        assert!((g.frame_penetration(&one).unwrap() - 0.03).abs() < 1e-12);
        // Depth 0.02 (near b1's -y face) and 0.05 (near b2's +x face).
        let two = [Vec3::new(4.8, 4.52, 1.0), Vec3::new(6.05, 5.0, 1.0)];
        assert!((g.frame_penetration(&two).unwrap() - 0.05).abs() < 1e-12);
        assert!(matches!(g.frame_penetration(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn floor_contact_tolerance() {
        let g = SceneGeometry::from_boxes(&[], 10.0, 10.0);
        let touching = [Vec3::new(1.0, 1.0, -0.005)];
        assert_eq!(g.frame_penetration(&touching).unwrap(), 0.0);
        let deep = [Vec3::new(1.0, 1.0, -0.03)];
        assert!((g.frame_penetration(&deep).unwrap() - 0.03).abs() < 1e-15);
        let strict = g.clone().with_floor_contact_tolerance(0.0);
        assert!((strict.frame_penetration(&touching).unwrap() - 0.005).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn lipschitz_outside_union(
            ax in 0.5..9.5f64, ay in 0.5..9.5f64, az in 0.1..3.0f64,
            bx in 0.5..9.5f64, by in 0.5..9.5f64, bz in 0.1..3.0f64,
            yaw in 0.0..6.3f64,
        ) {
            let g = SceneGeometry::from_boxes(&[cube([5.0, 5.0, 1.0], 0.6, yaw), cube([3.0, 7.0, 0.5], 0.4, 0.0)], 10.0, 10.0);
            let p = Vec3::new(ax, ay, az);
            let q = Vec3::new(bx, by, bz);
            let (fp, fq) = (g.signed_distance(&p), g.signed_distance(&q));
            prop_assume!(fp >= 0.0 && fq >= 0.0);
            prop_assert!((fp - fq).abs() <= (p - q).norm() + 1e-12);
        }

        #[test]
        fn adding_primitive_never_increases_distance(
            x in 0.0..10.0f64, y in 0.0..10.0f64, z in 0.0..3.0f64,
            cx in 1.0..9.0f64, cy in 1.0..9.0f64, h in 0.05..1.0f64, yaw in 0.0..6.3f64,
        ) {
            let base = vec![cube([5.0, 5.0, 1.0], 0.5, 0.3)];
            let mut more = base.clone();
            more.push(cube([cx, cy, h], h, yaw));
            let p = Vec3::new(x, y, z);
            let a = SceneGeometry::from_boxes(&base, 10.0, 10.0).signed_distance(&p);
            let b = SceneGeometry::from_boxes(&more, 10.0, 10.0).signed_distance(&p);
            prop_assert!(b <= a);
        }

        #[test]
        fn penetration_zero_iff_all_nonnegative(
            pts in proptest::collection::vec((0.0..10.0f64, 0.0..10.0f64, -0.1..2.0f64), 1..20),
        ) {
            let g = SceneGeometry::from_boxes(&[cube([5.0, 5.0, 1.0], 1.0, 0.7)], 10.0, 10.0)
                .with_floor_contact_tolerance(0.0);
            let samples: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let d = g.frame_penetration(&samples).unwrap();
            prop_assert!(d >= 0.0);
            let all_free = samples.iter().all(|p| g.signed_distance(p) >= 0.0);
            prop_assert_eq!(d == 0.0, all_free);
        }
    }
}
