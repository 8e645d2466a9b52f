//! Deterministic synthetic driving scenes and the depth-given camera lift
//! that produces `V_init`.

pub mod camera;
pub mod config;
pub mod world;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::decoder_metrics::SemanticGrid;
use crate::error::{Error, Result};
use crate::geometry::{EgoPose, GridSpec, RigidTransform, Vec3};
use crate::numerics::VoxelVolume;
use crate::query_agg::{Box3, DynamicBox};

pub use camera::{mount, CameraRig, LIFT_CHANNELS};
pub use config::{
    CameraConfig, DynamicConfig, EgoConfig, GroundConfig, NoiseConfig, PillarConfig, SceneConfig, StaticConfig,
    WallConfig, DEFAULT_SCENE,
};
pub use world::World;

/// One generated timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub timestep: u64,
    pub ego: EgoPose,
    /// Semantic labels on the full-resolution lattice, in the lattice frame.
    pub gt_grid: SemanticGrid,
    /// Boxes expressed in the current ego frame.
    pub dynamic_boxes: Vec<DynamicBox>,
    pub cameras: Vec<CameraRig>,
}

/// Rasterizes `world` by cell-center containment on `spec` seen from `ego_to_global`.
pub fn rasterize(world: &World, spec: &GridSpec, ego_to_global: &RigidTransform) -> SemanticGrid {
    let grid_to_global = ego_to_global.compose(&spec.ego_to_grid().inverse());
    let labels: Vec<u8> = (0..spec.num_cells())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = spec.unflatten(idx);
            world.label_at(&grid_to_global.apply(&spec.cell_center(i, j, k)))
        })
        .collect();
    SemanticGrid::from_labels(spec.dims, spec.resolution as f32, labels).expect("labels match dims")
}

fn yaw_of(t: &RigidTransform) -> f64 {
    t.rotation[(1, 0)].atan2(t.rotation[(0, 0)])
}

/// Dynamic boxes of `cfg` at `time`, re-expressed in the ego frame.
pub fn boxes_in_ego(cfg: &SceneConfig, time: f64, ego_to_global: &RigidTransform) -> Vec<DynamicBox> {
    let g2e = ego_to_global.inverse();
    let ego_yaw = yaw_of(ego_to_global);
    cfg.dynamic
        .iter()
        .map(|(key, d)| {
            let c = Vec3::new(
                d.center[0] + d.velocity[0] * time,
                d.center[1] + d.velocity[1] * time,
                d.center[2] + d.velocity[2] * time,
            );
            let ce = g2e.apply(&c);
            DynamicBox {
                class_id: SceneConfig::class_of(&d.class),
                bbox: Box3::new([ce.x, ce.y, ce.z], d.size, d.yaw - ego_yaw),
                velocity: g2e.apply_vector(&Vec3::from(d.velocity)),
                track_id: key.parse().expect("validated track id"),
            }
        })
        .collect()
}

/// Generates every frame of the scene; pure in `(cfg, seed)`.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Vec<SceneFrame>> {
    cfg.validate()?;
    let cams: Vec<&CameraConfig> = cfg.camera.values().collect();
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let time = t as f64 * cfg.dt;
        let world = World::at_time(cfg, time);
        let pose = world::ego_pose(&cfg.ego, t, cfg.frames);
        let cameras = cams
            .iter()
            .enumerate()
            .map(|(n, c)| {
                let mut rig = CameraRig::from_config(c);
                rig.render(&world, &pose, c.max_range, &cfg.noise, seed, (t * cams.len() + n) as u64);
                rig
            })
            .collect();
        frames.push(SceneFrame {
            timestep: t as u64,
            ego: EgoPose {
                timestep: t as u64,
                ego_to_global: pose,
            },
            gt_grid: rasterize(&world, &cfg.grid, &pose),
            dynamic_boxes: boxes_in_ego(cfg, time, &pose),
            cameras,
        });
    }
    Ok(frames)
}

/// Sums every depth-carrying pixel's feature into the cell containing its
/// unprojected point (64-bit accumulation); out-of-extent points are dropped.
pub fn lift_splat(frame: &SceneFrame, spec: &GridSpec) -> VoxelVolume {
    let n = spec.num_cells();
    let mut acc = vec![0f64; LIFT_CHANNELS * n];
    let e2g = spec.ego_to_grid();
    for rig in &frame.cameras {
        let (w, h) = rig.image_dims;
        let px = w * h;
        for v in 0..h {
            for u in 0..w {
                let Some(p) = rig.unproject(u, v) else { continue };
                let Some([i, j, k]) = spec.world_to_cell(&e2g.apply(&p)) else { continue };
                let cell = spec.flat_index(i, j, k);
                let p = v * w + u;
                for c in 0..LIFT_CHANNELS {
                    acc[c * n + cell] += rig.feature_image[c * px + p] as f64;
                }
            }
        }
    }
    VoxelVolume::from_data(LIFT_CHANNELS, spec.dims, acc.into_iter().map(|x| x as f32).collect())
        .expect("shape matches")
}

/// A scene read back from an exported directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedScene {
    pub config: SceneConfig,
    pub seed: u64,
    pub poses: Vec<EgoPose>,
    pub grids: Vec<SemanticGrid>,
    pub boxes: Vec<Vec<DynamicBox>>,
}

pub fn frame_file_name(t: u64) -> String {
    format!("frame_{t:03}.grid")
}

pub fn poses_text(frames: &[SceneFrame]) -> String {
    let mut s = String::new();
    for f in frames {
        let r = f.ego.ego_to_global.to_row_major();
        let _ = write!(s, "{}", f.timestep);
        // row-major R (9) then t (3)
        for a in 0..3 {
            for b in 0..3 {
                let _ = write!(s, " {}", r[a * 4 + b]);
            }
        }
        for a in 0..3 {
            let _ = write!(s, " {}", r[a * 4 + 3]);
        }
        s.push('\n');
    }
    s
}

pub fn boxes_text(frames: &[SceneFrame]) -> String {
    let mut s = String::from("# timestep track_id class_id cx cy cz l w h yaw vx vy vz (ego frame)\n");
    for f in frames {
        for b in &f.dynamic_boxes {
            let p = b.bbox.params();
            let _ = write!(s, "{} {} {}", f.timestep, b.track_id, b.class_id);
            for x in p.iter().chain(b.velocity.iter()) {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
    }
    s
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Writes `scene.toml`, `seed.txt`, `poses.txt`, `boxes.txt` and
/// `frames/frame_NNN.grid` under `dir`.
pub fn export_scene(dir: &Path, cfg: &SceneConfig, seed: u64, frames: &[SceneFrame]) -> Result<()> {
    let fdir = dir.join("frames");
    std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
    write(&dir.join("scene.toml"), cfg.to_toml().as_bytes())?;
    write(&dir.join("seed.txt"), format!("{seed}\n").as_bytes())?;
    write(&dir.join("poses.txt"), poses_text(frames).as_bytes())?;
    write(&dir.join("boxes.txt"), boxes_text(frames).as_bytes())?;
    for f in frames {
        f.gt_grid.save(&fdir.join(frame_file_name(f.timestep)))?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_floats(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::InputLine {
                path: path.into(),
                line,
                message: format!("'{f}' is not a number"),
            })
        })
        .collect()
}

fn line_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::InputLine {
        path: path.into(),
        line,
        message: message.into(),
    }
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<EgoPose>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 13 {
            return Err(line_err(path, n + 1, format!("expected 13 fields, found {}", f.len())));
        }
        let timestep = f[0].parse().map_err(|_| line_err(path, n + 1, "bad timestep"))?;
        let v = parse_floats(path, n + 1, &f[1..])?;
        let mut rm = [0.0; 12];
        for a in 0..3 {
            for b in 0..3 {
                rm[a * 4 + b] = v[a * 3 + b];
            }
            rm[a * 4 + 3] = v[9 + a];
        }
        let t = RigidTransform::from_row_major(&rm);
        if !t.is_orthonormal(1e-6) {
            return Err(line_err(path, n + 1, "rotation is not orthonormal"));
        }
        out.push(EgoPose {
            timestep,
            ego_to_global: t,
        });
    }
    Ok(out)
}

pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<(u64, DynamicBox)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 13 {
            return Err(line_err(path, n + 1, format!("expected 13 fields, found {}", f.len())));
        }
        let t = f[0].parse().map_err(|_| line_err(path, n + 1, "bad timestep"))?;
        let track_id = f[1].parse().map_err(|_| line_err(path, n + 1, "bad track id"))?;
        let class_id: u8 = f[2].parse().map_err(|_| line_err(path, n + 1, "bad class id"))?;
        if class_id == 0 || class_id as usize > crate::classes::NUM_CLASSES {
            return Err(line_err(path, n + 1, format!("class id {class_id} out of range")));
        }
        let v = parse_floats(path, n + 1, &f[3..])?;
        out.push((
            t,
            DynamicBox {
                class_id,
                bbox: Box3::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], v[6]),
                velocity: Vec3::new(v[7], v[8], v[9]),
                track_id,
            },
        ));
    }
    Ok(out)
}

/// Reads an exported scene directory back.
pub fn import_scene(dir: &Path) -> Result<ExportedScene> {
    let config = SceneConfig::load(&dir.join("scene.toml"))?;
    let seed_path = dir.join("seed.txt");
    let seed = read(&seed_path)?
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("{}: seed must be an unsigned integer", seed_path.display())))?;
    let pp = dir.join("poses.txt");
    let poses = parse_poses(&read(&pp)?, &pp)?;
    if poses.len() != config.frames {
        return Err(Error::input(format!(
            "{}: {} poses for {} frames",
            pp.display(),
            poses.len(),
            config.frames
        )));
    }
    let mut grids = Vec::with_capacity(poses.len());
    for p in &poses {
        let g = SemanticGrid::load(&dir.join("frames").join(frame_file_name(p.timestep)))?;
        if g.dims != config.grid.dims {
            return Err(Error::input(format!("frame {}: grid dims {:?} differ from config", p.timestep, g.dims)));
        }
        grids.push(g);
    }
    let bp = dir.join("boxes.txt");
    let mut boxes = vec![Vec::new(); poses.len()];
    for (t, b) in parse_boxes(&read(&bp)?, &bp)? {
        let slot = poses
            .iter()
            .position(|p| p.timestep == t)
            .ok_or_else(|| Error::input(format!("{}: box for unknown timestep {t}", bp.display())))?;
        boxes[slot].push(b);
    }
    Ok(ExportedScene {
        config,
        seed,
        poses,
        grids,
        boxes,
    })
}

/// Regenerates the full frames (with cameras) of an exported scene.
pub fn load_scene_frames(dir: &Path) -> Result<(SceneConfig, u64, Vec<SceneFrame>)> {
    let s = import_scene(dir)?;
    let frames = generate_scene(&s.config, s.seed)?;
    for (f, g) in frames.iter().zip(&s.grids) {
        if &f.gt_grid != g {
            return Err(Error::input(format!(
                "{}: frame {} does not match its scene description",
                dir.display(),
                f.timestep
            )));
        }
    }
    Ok((s.config, s.seed, frames))
}
