//! Pinhole camera rig: exact depth rendering and class-colored features.

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::classes::NUM_CLASSES;
use crate::geometry::{RigidTransform, Vec3};

use super::config::{CameraConfig, NoiseConfig};
use super::world::World;

/// Feature channels of a lifted pixel: one-hot class plus a hit indicator.
pub const LIFT_CHANNELS: usize = NUM_CLASSES + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    /// Pixel intrinsics `K`.
    pub intrinsics: Matrix3<f64>,
    /// Optical frame (x right, y down, z forward) to ego.
    pub cam_to_ego: RigidTransform,
    /// `(W, H)`.
    pub image_dims: (usize, usize),
    /// `LIFT_CHANNELS × H × W`, channel-major.
    pub feature_image: Vec<f32>,
    /// `H × W` z-depth in meters; `f32::INFINITY` where nothing was hit.
    pub depth_image: Vec<f32>,
}

impl CameraRig {
    /// Rig with empty images (all depths undefined).
    pub fn new(intrinsics: Matrix3<f64>, cam_to_ego: RigidTransform, width: usize, height: usize) -> Self {
        Self {
            intrinsics,
            cam_to_ego,
            image_dims: (width, height),
            feature_image: vec![0.0; LIFT_CHANNELS * width * height],
            depth_image: vec![f32::INFINITY; width * height],
        }
    }

    pub fn from_config(c: &CameraConfig) -> Self {
        let f = (c.width as f64 * 0.5) / (c.fov_deg.to_radians() * 0.5).tan();
        let k = Matrix3::new(f, 0.0, c.width as f64 * 0.5, 0.0, f, c.height as f64 * 0.5, 0.0, 0.0, 1.0);
        Self::new(k, mount(c), c.width, c.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.image_dims.0 * self.image_dims.1
    }

    /// Feature vector of pixel `(u, v)`.
    pub fn pixel_feature(&self, u: usize, v: usize) -> [f32; LIFT_CHANNELS] {
        let n = self.pixel_count();
        let p = v * self.image_dims.0 + u;
        std::array::from_fn(|c| self.feature_image[c * n + p])
    }

    /// Optical-frame ray through the center of pixel `(u, v)` with unit z,
    /// so the ray parameter equals z-depth.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let k = &self.intrinsics;
        let x = (u as f64 + 0.5 - k[(0, 2)]) / k[(0, 0)];
        let y = (v as f64 + 0.5 - k[(1, 2)]) / k[(1, 1)];
        Vec3::new(x, y, 1.0)
    }

    /// Ego-frame point seen at pixel `(u, v)`, or `None` without depth.
    pub fn unproject(&self, u: usize, v: usize) -> Option<Vec3> {
        let d = self.depth_image[v * self.image_dims.0 + u];
        if !d.is_finite() {
            return None;
        }
        Some(self.cam_to_ego.apply(&(self.pixel_ray(u, v) * d as f64)))
    }

    /// Renders depth and features of `world` seen from ego pose `ego_to_global`.
    /// Noise streams are keyed by `(seed, stream)`.
    pub fn render(&mut self, world: &World, ego_to_global: &RigidTransform, max_range: f64, noise: &NoiseConfig, seed: u64, stream: u64) {
        let (w, h) = self.image_dims;
        let cam_to_global = ego_to_global.compose(&self.cam_to_ego);
        let origin = cam_to_global.apply(&Vec3::zeros());
        let hits: Vec<Option<(f64, u8)>> = (0..w * h)
            .into_par_iter()
            .map(|p| {
                let dir = cam_to_global.apply_vector(&self.pixel_ray(p % w, p / w));
                world.cast(&origin, &dir).filter(|&(t, _)| t <= max_range)
            })
            .collect();

        let n = w * h;
        self.feature_image.iter_mut().for_each(|x| *x = 0.0);
        self.depth_image.iter_mut().for_each(|x| *x = f32::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let feat_noise = Normal::new(0.0, noise.feature_sigma).expect("validated sigma");
        let depth_noise = Normal::new(0.0, noise.depth_sigma).expect("validated sigma");
        for (p, hit) in hits.into_iter().enumerate() {
            let Some((t, class)) = hit else { continue };
            self.feature_image[(class as usize - 1) * n + p] = 1.0;
            self.feature_image[NUM_CLASSES * n + p] = 1.0;
            if noise.feature_sigma > 0.0 {
                for c in 0..LIFT_CHANNELS {
                    self.feature_image[c * n + p] += feat_noise.sample(&mut rng) as f32;
                }
            }
            let mut d = t;
            if noise.depth_sigma > 0.0 {
                d += depth_noise.sample(&mut rng);
                if d <= 1e-3 {
                    d = 1e-3;
                }
            }
            self.depth_image[p] = d as f32;
        }
    }
}

/// Optical-to-ego transform of a camera mount: yaw about ego +z, pitch
/// (positive up), optical axis along the rotated ego +x.
pub fn mount(c: &CameraConfig) -> RigidTransform {
    // optical (right, down, forward) -> body (forward, left, up)
    let optical = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let (sp, cp) = c.pitch_deg.to_radians().sin_cos();
    // rotation about body y by -pitch lifts +x toward +z
    let pitch = Matrix3::new(cp, 0.0, -sp, 0.0, 1.0, 0.0, sp, 0.0, cp);
    let yaw = RigidTransform::rot_z(c.yaw_deg.to_radians()).rotation;
    RigidTransform::new(yaw * pitch * optical, Vec3::from(c.position))
}
