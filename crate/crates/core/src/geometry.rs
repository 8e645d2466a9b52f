//! Rigid poses, frame changes and the voxel-lattice / metric mapping.
//!
//! Cell `(i, j, k)` of a [`GridSpec`] covers the metric box
//! `min_corner + [i, i+1) × [j, j+1) × [k, k+1) · resolution` and its center sits
//! at continuous cell coordinate `(i + 0.5, j + 0.5, k + 0.5)`. Flat cell indices
//! are x-major: `index = (i · Y + j) · Z + k`, so `k` (z) varies fastest.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// SE(3) transform stored as an orthonormal rotation plus a translation in meters.
///
/// `apply(p) = rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = String;

    fn try_from(r: RigidTransformRepr) -> std::result::Result<Self, Self::Error> {
        let rot = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        let t = RigidTransform::new(rot, Vec3::from(r.translation));
        if !t.is_orthonormal(1e-6) {
            return Err("rotation matrix is not orthonormal".into());
        }
        Ok(t)
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = t.rotation[(i, j)];
            }
        }
        RigidTransformRepr {
            rotation,
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vec3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vec3::new(x, y, z))
    }

    /// Rotation about +z by `angle` radians.
    pub fn rot_z(angle: f64) -> Self {
        Self::new(
            *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            Vec3::zeros(),
        )
    }

    /// Yaw about +z followed by a translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vec3) -> Self {
        Self::new(Self::rot_z(yaw).rotation, translation)
    }

    /// Rotation from roll/pitch/yaw (applied x, then y, then z) plus translation.
    pub fn from_euler_translation(roll: f64, pitch: f64, yaw: f64, translation: Vec3) -> Self {
        Self::new(
            *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
            translation,
        )
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        compose(self, other)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let d = self.rotation.transpose() * self.rotation - Matrix3::identity();
        d.iter().all(|v| v.abs() <= tol)
    }

    /// Largest absolute entry difference over rotation and translation.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).amax();
        let t = (self.translation - other.translation).amax();
        r.max(t)
    }

    /// The 12 numbers (row-major rotation, then translation) used in pose files.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            for j in 0..3 {
                out[i * 3 + j] = self.rotation[(i, j)];
            }
            out[9 + i] = self.translation[i];
        }
        out
    }

    pub fn from_row_major(v: &[f64; 12]) -> RigidTransform {
        let rot = Matrix3::from_fn(|i, j| v[i * 3 + j]);
        RigidTransform::new(rot, Vec3::new(v[9], v[10], v[11]))
    }
}

/// `a ∘ b`: the transform that applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

/// Ego pose at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub timestep: u64,
    pub ego_to_global: RigidTransform,
}

/// Maps coordinates expressed in the `prev` ego frame into the `curr` ego frame:
/// `global_to_ego(curr) · ego_to_global(prev)`.
pub fn relative_transform(prev: &EgoPose, curr: &EgoPose) -> RigidTransform {
    compose(&curr.ego_to_global.inverse(), &prev.ego_to_global)
}

/// Frame the voxel lattice is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GridFrame {
    /// Lattice expressed in the ego frame (Occ3D-style).
    #[default]
    Ego,
    /// Lattice expressed in a lidar frame with the given extrinsic (SurroundOcc-style).
    Lidar { lidar_to_ego: RigidTransform },
}

/// Voxel lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub min_corner: [f64; 3],
    pub resolution: f64,
    #[serde(default)]
    pub frame: GridFrame,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], min_corner: [f64; 3], resolution: f64, frame: GridFrame) -> Result<Self> {
        let spec = Self {
            dims,
            min_corner,
            resolution,
            frame,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from metric bounds; the extent must be a whole number of cells.
    pub fn from_bounds(min: [f64; 3], max: [f64; 3], resolution: f64, frame: GridFrame) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::config("grid resolution must be positive"));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = ((max[a] - min[a]) / resolution).round();
            if n < 1.0 || ((n * resolution) - (max[a] - min[a])).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "grid extent along axis {a} is not a whole number of {resolution} m cells"
                )));
            }
            dims[a] = n as usize;
        }
        Self::new(dims, min, resolution, frame)
    }

    /// Occ3D-nuScenes: 200×200×16 cells of 0.4 m over [−40, 40]² × [−1, 5.4], ego frame.
    pub fn occ3d() -> Self {
        Self {
            dims: [200, 200, 16],
            min_corner: [-40.0, -40.0, -1.0],
            resolution: 0.4,
            frame: GridFrame::Ego,
        }
    }

    /// SurroundOcc: 200×200×16 cells of 0.5 m over [−50, 50]² × [−5, 3], lidar frame.
    pub fn surround_occ(lidar_to_ego: RigidTransform) -> Self {
        Self {
            dims: [200, 200, 16],
            min_corner: [-50.0, -50.0, -5.0],
            resolution: 0.5,
            frame: GridFrame::Lidar { lidar_to_ego },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::config("grid dims must all be >= 1"));
        }
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::config("grid resolution must be positive and finite"));
        }
        if self.min_corner.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("grid min_corner must be finite"));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn max_corner(&self) -> [f64; 3] {
        let mut m = self.min_corner;
        for a in 0..3 {
            m[a] += self.dims[a] as f64 * self.resolution;
        }
        m
    }

    /// The grid at half resolution (each dim halved, cells twice as large).
    pub fn half(&self) -> Result<Self> {
        if self.dims.iter().any(|d| d % 2 != 0) {
            return Err(Error::contract(format!(
                "grid dims {:?} are not divisible by 2",
                self.dims
            )));
        }
        Ok(Self {
            dims: [self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2],
            resolution: self.resolution * 2.0,
            ..*self
        })
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let r = self.resolution;
        Vec3::new(
            self.min_corner[0] + (i as f64 + 0.5) * r,
            self.min_corner[1] + (j as f64 + 0.5) * r,
            self.min_corner[2] + (k as f64 + 0.5) * r,
        )
    }

    /// All cell centers in flat (x-major) order.
    pub fn cell_centers(&self) -> Vec<Vec3> {
        (0..self.num_cells())
            .map(|idx| {
                let [i, j, k] = self.unflatten(idx);
                self.cell_center(i, j, k)
            })
            .collect()
    }

    /// Metric point to continuous cell coordinates (cell centers at integer + 0.5).
    pub fn to_cell_space(&self, p: &Vec3) -> Vec3 {
        let r = self.resolution;
        Vec3::new(
            (p.x - self.min_corner[0]) / r,
            (p.y - self.min_corner[1]) / r,
            (p.z - self.min_corner[2]) / r,
        )
    }

    /// Cell containing the metric point, or `None` outside the extent.
    pub fn world_to_cell(&self, p: &Vec3) -> Option<[usize; 3]> {
        let c = self.to_cell_space(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = c[a].floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.world_to_cell(p).is_some()
    }

    /// Transform taking ego-frame coordinates into this lattice's frame.
    pub fn ego_to_grid(&self) -> RigidTransform {
        match &self.frame {
            GridFrame::Ego => RigidTransform::identity(),
            GridFrame::Lidar { lidar_to_ego } => lidar_to_ego.inverse(),
        }
    }

    /// Re-expresses an ego-frame motion (past ego → current ego) in the lattice frame.
    pub fn grid_motion(&self, ego_motion: &RigidTransform) -> RigidTransform {
        match &self.frame {
            GridFrame::Ego => *ego_motion,
            GridFrame::Lidar { lidar_to_ego } => {
                compose(&lidar_to_ego.inverse(), &compose(ego_motion, lidar_to_ego))
            }
        }
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.dims == other.dims
            && self.resolution == other.resolution
            && self.min_corner == other.min_corner
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pose(t: u64, tf: RigidTransform) -> EgoPose {
        EgoPose {
            timestep: t,
            ego_to_global: tf,
        }
    }

    #[test]
    fn compose_identity_and_translations() {
        let i = RigidTransform::identity();
        assert_eq!(compose(&i, &i), i);
        let c = compose(
            &RigidTransform::from_translation(1.0, 0.0, 0.0),
            &RigidTransform::from_translation(0.0, 2.0, 0.0),
        );
        assert_eq!(c, RigidTransform::from_translation(1.0, 2.0, 0.0));
        let r = compose(&RigidTransform::rot_z(FRAC_PI_2), &RigidTransform::rot_z(-FRAC_PI_2));
        assert!(r.max_abs_diff(&i) < 1e-6);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = RigidTransform::rot_z(FRAC_PI_2);
        let b = RigidTransform::from_translation(1.0, 0.0, 0.0);
        let p = Vec3::new(0.0, 0.0, 0.0);
        // b then a: (1,0,0) rotated to (0,1,0)
        let q = compose(&a, &b).apply(&p);
        assert!((q - Vec3::new(0.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn relative_transform_cases() {
        let a = pose(0, RigidTransform::from_yaw_translation(0.3, Vec3::new(4.0, -1.0, 0.2)));
        assert!(relative_transform(&a, &a).max_abs_diff(&RigidTransform::identity()) < 1e-9);

        let prev = pose(0, RigidTransform::identity());
        let curr = pose(1, RigidTransform::from_translation(2.0, 0.0, 0.0));
        let t = relative_transform(&prev, &curr);
        let p = Vec3::new(5.0, 1.0, -0.5);
        assert!((t.apply(&p) - (p - Vec3::new(2.0, 0.0, 0.0))).amax() < 1e-12);
    }

    #[test]
    fn relative_transform_rotation_matches_hand_chain() {
        // ego rotated +90° about z between frames, both at the global origin.
        let prev = pose(0, RigidTransform::identity());
        let curr = pose(1, RigidTransform::rot_z(FRAC_PI_2));
        let t = relative_transform(&prev, &curr);
        // Hand-rolled chain: past ego -> global is identity; global -> current ego is
        // rotation by -90° about z: (x, y) -> (y, -x).
        let hand = |p: [f64; 3]| [p[1], -p[0], p[2]];
        for p in [[1.0, 0.0, 0.0], [0.0, 2.0, 0.5], [-3.0, 1.0, 2.0]] {
            let got = t.apply(&Vec3::from(p));
            let want = Vec3::from(hand(p));
            assert!((got - want).amax() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn cell_center_examples() {
        let unit = GridSpec::new([1, 1, 1], [0.0; 3], 1.0, GridFrame::Ego).unwrap();
        assert_eq!(unit.cell_centers(), vec![Vec3::new(0.5, 0.5, 0.5)]);

        let occ = GridSpec::occ3d();
        let c0 = occ.cell_center(0, 0, 0);
        assert!((c0 - Vec3::new(-39.8, -39.8, -0.8)).amax() < 1e-9);
        let c1 = occ.cell_center(199, 199, 15);
        assert!((c1 - Vec3::new(39.8, 39.8, 5.2)).amax() < 1e-9);
        let centers = occ.cell_centers();
        assert_eq!(centers.len(), 200 * 200 * 16);
        // x-major: the second entry steps along z
        assert!((centers[1] - occ.cell_center(0, 0, 1)).amax() == 0.0);
    }

    #[test]
    fn extent_matches_bounds() {
        let occ = GridSpec::occ3d();
        let max = occ.max_corner();
        for (a, want) in [40.0, 40.0, 5.4].into_iter().enumerate() {
            assert!((max[a] - want).abs() < 1e-9);
        }
        let so = GridSpec::from_bounds(
            [-50.0, -50.0, -5.0],
            [50.0, 50.0, 3.0],
            0.5,
            GridFrame::Ego,
        )
        .unwrap();
        assert_eq!(so.dims, [200, 200, 16]);
        assert!(GridSpec::from_bounds([0.0; 3], [1.0, 1.0, 1.05], 0.1, GridFrame::Ego).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::new([0, 1, 1], [0.0; 3], 1.0, GridFrame::Ego).is_err());
        assert!(GridSpec::new([1, 1, 1], [0.0; 3], 0.0, GridFrame::Ego).is_err());
        assert!(GridSpec::new([3, 2, 2], [0.0; 3], 1.0, GridFrame::Ego).unwrap().half().is_err());
    }

    #[test]
    fn world_to_cell_round_trips_occ3d() {
        let occ = GridSpec::occ3d();
        for idx in (0..occ.num_cells()).step_by(97) {
            let [i, j, k] = occ.unflatten(idx);
            assert_eq!(occ.flat_index(i, j, k), idx);
            assert_eq!(occ.world_to_cell(&occ.cell_center(i, j, k)), Some([i, j, k]));
        }
        assert_eq!(occ.world_to_cell(&Vec3::new(40.0, 0.0, 0.0)), None);
        assert_eq!(occ.world_to_cell(&Vec3::new(0.0, 0.0, -1.01)), None);
    }

    #[test]
    fn lidar_grid_motion_conjugates() {
        let l2e = RigidTransform::from_yaw_translation(FRAC_PI_2, Vec3::new(0.9, 0.0, 1.8));
        let spec = GridSpec::surround_occ(l2e);
        let motion = RigidTransform::from_translation(-2.0, 0.0, 0.0);
        let gm = spec.grid_motion(&motion);
        // A fixed world point: ego-frame p_prev -> p_curr; lidar frame coordinates follow.
        let p_lidar_prev = Vec3::new(3.0, -1.0, 0.5);
        let p_ego_prev = l2e.apply(&p_lidar_prev);
        let p_ego_curr = motion.apply(&p_ego_prev);
        let want = l2e.inverse().apply(&p_ego_curr);
        assert!((gm.apply(&p_lidar_prev) - want).amax() < 1e-12);
    }

    #[test]
    fn serde_round_trip_spec() {
        let spec = GridSpec::surround_occ(RigidTransform::from_translation(0.9, 0.0, 1.8));
        let s = toml::to_string(&spec).unwrap();
        let back: GridSpec = toml::from_str(&s).unwrap();
        assert_eq!(spec, back);
        let ego: GridSpec = toml::from_str(
            "dims = [4, 4, 2]\nmin_corner = [0.0, 0.0, 0.0]\nresolution = 0.5\nframe = \"ego\"\n",
        )
        .unwrap();
        assert_eq!(ego.frame, GridFrame::Ego);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            -3.2f64..3.2,
            -0.3f64..0.3,
            -0.3f64..0.3,
            prop::array::uniform3(-50.0f64..50.0),
        )
            .prop_map(|(yaw, pitch, roll, t)| {
                RigidTransform::from_euler_translation(roll, pitch, yaw, Vec3::from(t))
            })
    }

    proptest! {
        #[test]
        fn inverse_is_identity(t in arb_transform()) {
            prop_assert!(t.is_orthonormal(1e-6));
            prop_assert!(compose(&t, &t.inverse()).max_abs_diff(&RigidTransform::identity()) < 1e-6);
        }

        #[test]
        fn compose_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            prop_assert!(l.max_abs_diff(&r) < 1e-9);
        }

        #[test]
        fn relative_chain_consistency(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let (pa, pb, pc) = (pose(0, a), pose(1, b), pose(2, c));
            let direct = relative_transform(&pa, &pc);
            let chained = compose(&relative_transform(&pb, &pc), &relative_transform(&pa, &pb));
            prop_assert!(direct.max_abs_diff(&chained) < 1e-6);
            prop_assert!(relative_transform(&pa, &pa).max_abs_diff(&RigidTransform::identity()) < 1e-9);
        }
    }
}
