//! Scene description file (TOML): grid, ego trajectory, static layout,
//! dynamic objects and the camera rig.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;

fn default_frames() -> usize {
    8
}

fn default_dt() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Seconds between frames.
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub ego: EgoConfig,
    #[serde(default, rename = "static")]
    pub static_layout: StaticConfig,
    /// Keyed by track id.
    #[serde(default)]
    pub dynamic: BTreeMap<String, DynamicConfig>,
    #[serde(default)]
    pub camera: BTreeMap<String, CameraConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    /// Global `(x, y)` waypoints of a Catmull-Rom path traversed uniformly
    /// over the sequence; one waypoint means a stationary ego.
    pub waypoints: Vec<[f64; 2]>,
    /// Height of the ego origin above global z = 0.
    pub height: f64,
    /// Heading (rad) used when the path has no tangent (stationary ego).
    pub yaw: f64,
    /// Heading follows the path tangent when true.
    pub follow_tangent: bool,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            waypoints: vec![[0.0, 0.0]],
            height: 0.0,
            yaw: 0.0,
            follow_tangent: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticConfig {
    /// Infinite horizontal slab; `None` disables it.
    pub ground: Option<GroundConfig>,
    pub walls: Vec<WallConfig>,
    pub pillars: Vec<PillarConfig>,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            ground: Some(GroundConfig::default()),
            walls: Vec::new(),
            pillars: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundConfig {
    pub class: String,
    /// Global z of the top surface.
    pub top: f64,
    pub thickness: f64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            class: "driveable_surface".into(),
            top: 0.0,
            thickness: 0.4,
        }
    }
}

/// Oriented static box (building facade, barrier wall, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub class: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

/// Vertical cylinder (tree trunk, pole).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PillarConfig {
    pub class: String,
    /// Global `(x, y)` of the axis.
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Constant-velocity oriented box in global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicConfig {
    pub class: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    /// m/s, global frame.
    #[serde(default)]
    pub velocity: [f64; 3],
}

/// Pinhole camera mounted on the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Ego-frame position.
    pub position: [f64; 3],
    /// Heading in degrees about ego +z (0 looks along +x).
    pub yaw_deg: f64,
    /// Degrees, positive looks up.
    #[serde(default)]
    pub pitch_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

fn default_max_range() -> f64 {
    80.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std-dev of Gaussian noise added to every feature channel of hit pixels.
    pub feature_sigma: f64,
    /// Std-dev (m) of Gaussian noise added to rendered depth.
    pub depth_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            feature_sigma: 0.3,
            depth_sigma: 0.0,
        }
    }
}

fn class_id(name: &str, field: &str) -> Result<u8> {
    match classes::from_name(name) {
        Some(0) | None => Err(Error::input(format!("{field}: unknown class '{name}'"))),
        Some(c) => Ok(c),
    }
}

fn positive(v: f64, field: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::input(format!("{field} must be positive, got {v}")));
    }
    Ok(())
}

fn finite(v: &[f64], field: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input(format!("{field} must be finite")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::input(format!("scene config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Input(m) => Error::input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    /// Checks every field; messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::input("frames must be at least 1"));
        }
        positive(self.dt, "dt")?;
        self.grid
            .validate()
            .map_err(|e| Error::input(format!("grid: {e}")))?;
        if self.grid.dims.iter().any(|d| d % 4 != 0) {
            return Err(Error::input(format!("grid.dims {:?} must be divisible by 4", self.grid.dims)));
        }
        if self.ego.waypoints.is_empty() {
            return Err(Error::input("ego.waypoints must list at least one point"));
        }
        for w in &self.ego.waypoints {
            finite(w, "ego.waypoints")?;
        }
        finite(&[self.ego.height, self.ego.yaw], "ego.height/ego.yaw")?;
        if let Some(g) = &self.static_layout.ground {
            class_id(&g.class, "static.ground.class")?;
            positive(g.thickness, "static.ground.thickness")?;
            finite(&[g.top], "static.ground.top")?;
        }
        for (n, w) in self.static_layout.walls.iter().enumerate() {
            class_id(&w.class, &format!("static.walls[{n}].class"))?;
            finite(&w.center, &format!("static.walls[{n}].center"))?;
            for s in w.size {
                positive(s, &format!("static.walls[{n}].size"))?;
            }
        }
        for (n, p) in self.static_layout.pillars.iter().enumerate() {
            class_id(&p.class, &format!("static.pillars[{n}].class"))?;
            positive(p.radius, &format!("static.pillars[{n}].radius"))?;
            if !(p.z_max > p.z_min) {
                return Err(Error::input(format!("static.pillars[{n}]: z_max must exceed z_min")));
            }
        }
        for (key, d) in &self.dynamic {
            key.parse::<u64>()
                .map_err(|_| Error::input(format!("dynamic.{key}: table key must be an integer track id")))?;
            class_id(&d.class, &format!("dynamic.{key}.class"))?;
            finite(&d.center, &format!("dynamic.{key}.center"))?;
            finite(&d.velocity, &format!("dynamic.{key}.velocity"))?;
            for s in d.size {
                positive(s, &format!("dynamic.{key}.size"))?;
            }
        }
        for (key, c) in &self.camera {
            if c.width == 0 || c.height == 0 {
                return Err(Error::input(format!("camera.{key}: width and height must be >= 1")));
            }
            if !(c.fov_deg > 0.0 && c.fov_deg < 179.0) {
                return Err(Error::input(format!("camera.{key}.fov_deg must lie in (0, 179)")));
            }
            positive(c.max_range, &format!("camera.{key}.max_range"))?;
            finite(&c.position, &format!("camera.{key}.position"))?;
        }
        if !(self.noise.feature_sigma >= 0.0) || !(self.noise.depth_sigma >= 0.0) {
            return Err(Error::input("noise sigmas must be >= 0"));
        }
        Ok(())
    }

    pub(crate) fn class_of(name: &str) -> u8 {
        classes::from_name(name).expect("validated class name")
    }

    /// A small urban scene: straight road, facades, trees, traffic.
    pub fn default_scene() -> Self {
        Self::parse(DEFAULT_SCENE).expect("built-in scene parses")
    }
}

/// The built-in demo scene on the Occ3D lattice.
pub const DEFAULT_SCENE: &str = r#"
frames = 8
dt = 0.5

[grid]
dims = [200, 200, 16]
min_corner = [-40.0, -40.0, -1.0]
resolution = 0.4
frame = "ego"

[ego]
waypoints = [[0.0, 0.0], [8.0, 0.0], [16.0, 0.8]]
height = 0.0

[static.ground]
class = "driveable_surface"
top = 0.0
thickness = 0.4

[[static.walls]]
class = "sidewalk"
center = [10.0, 9.0, 0.1]
size = [70.0, 6.0, 0.2]

[[static.walls]]
class = "sidewalk"
center = [10.0, -9.0, 0.1]
size = [70.0, 6.0, 0.2]

[[static.walls]]
class = "manmade"
center = [6.0, 15.0, 4.0]
size = [40.0, 4.0, 8.0]

[[static.walls]]
class = "manmade"
center = [14.0, -15.0, 3.0]
size = [30.0, 4.0, 6.0]
yaw = 0.05

[[static.walls]]
class = "terrain"
center = [-20.0, 22.0, 0.3]
size = [20.0, 10.0, 0.6]

[[static.pillars]]
class = "vegetation"
center = [-4.0, 7.5]
radius = 1.2
z_min = 0.0
z_max = 4.5

[[static.pillars]]
class = "vegetation"
center = [20.0, -7.5]
radius = 1.0
z_min = 0.0
z_max = 4.0

[[static.pillars]]
class = "others"
center = [2.0, -6.5]
radius = 0.3
z_min = 0.0
z_max = 3.0

[dynamic.1]
class = "car"
center = [12.0, 2.0, 0.8]
size = [4.4, 1.9, 1.6]
velocity = [2.0, 0.0, 0.0]

[dynamic.2]
class = "truck"
center = [-12.0, -2.5, 1.6]
size = [8.0, 2.6, 3.2]
velocity = [1.6, 0.0, 0.0]

[dynamic.3]
class = "bus"
center = [28.0, -2.4, 1.6]
size = [10.0, 2.8, 3.2]
velocity = [-2.0, 0.0, 0.0]

[dynamic.4]
class = "pedestrian"
center = [5.0, 7.0, 0.95]
size = [0.8, 0.8, 1.7]
velocity = [0.8, 0.0, 0.0]

[dynamic.5]
class = "bicycle"
center = [-6.0, 5.2, 0.8]
size = [1.8, 0.8, 1.4]
velocity = [1.0, 0.0, 0.0]

[dynamic.6]
class = "barrier"
center = [22.0, 5.0, 0.6]
size = [2.4, 0.8, 1.2]
yaw = 0.3

[dynamic.7]
class = "traffic_cone"
center = [8.0, -5.0, 0.4]
size = [0.6, 0.6, 0.8]

[dynamic.8]
class = "car"
center = [-2.0, -13.0, 0.8]
size = [4.6, 2.0, 1.6]
yaw = 1.5707963

[camera.0]
position = [1.5, 0.0, 1.6]
yaw_deg = 0.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[camera.1]
position = [1.2, 0.6, 1.6]
yaw_deg = 60.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[camera.2]
position = [-0.8, 0.6, 1.6]
yaw_deg = 120.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[camera.3]
position = [-1.2, 0.0, 1.6]
yaw_deg = 180.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[camera.4]
position = [-0.8, -0.6, 1.6]
yaw_deg = 240.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[camera.5]
position = [1.2, -0.6, 1.6]
yaw_deg = 300.0
pitch_deg = -8.0
width = 160
height = 90
fov_deg = 70.0

[noise]
feature_sigma = 0.3
depth_sigma = 0.0
"#;
