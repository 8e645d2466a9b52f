//! Pluggable instance-query sources: a noisy oracle over ground-truth boxes,
//! and replay of externally produced detections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::query::{Box3, DynamicBox, InstanceQuery};
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::numerics::{Activation, DenseMatrix, LinearLayer, ParamStore, Role};

/// Gaussian perturbation of oracle boxes plus a truncated-normal confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleNoise {
    pub center_sigma: f64,
    pub size_sigma: f64,
    pub yaw_sigma: f64,
    pub confidence_mean: f64,
    pub confidence_sigma: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self {
            center_sigma: 0.3,
            size_sigma: 0.1,
            yaw_sigma: 0.1,
            confidence_mean: 0.7,
            confidence_sigma: 0.2,
        }
    }
}

impl OracleNoise {
    /// No perturbation and confidence 1.
    pub fn exact() -> Self {
        Self {
            center_sigma: 0.0,
            size_sigma: 0.0,
            yaw_sigma: 0.0,
            confidence_mean: 1.0,
            confidence_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = [self.center_sigma, self.size_sigma, self.yaw_sigma, self.confidence_sigma];
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("detector noise sigmas must be finite and ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.confidence_mean) {
            return Err(Error::config("detector confidence_mean must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One externally produced detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayRecord {
    pub track_id: u64,
    pub class_id: u8,
    pub confidence: f64,
    pub bbox: Box3,
}

/// Detections grouped by frame index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayDetections {
    pub frames: BTreeMap<u64, Vec<ReplayRecord>>,
}

impl ReplayDetections {
    /// Parses whitespace-separated records, one per line:
    /// `frame_index track_id class_id confidence cx cy cz l w h yaw`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut out = ReplayDetections::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::InputLine {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 11 {
                return Err(err(format!("expected 11 fields, found {}", f.len())));
            }
            let int = |i: usize, name: &str| f[i].parse::<u64>().map_err(|_| err(format!("bad {name} '{}'", f[i])));
            let num = |i: usize, name: &str| {
                f[i].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad {name} '{}'", f[i])))
            };
            let frame = int(0, "frame_index")?;
            let track_id = int(1, "track_id")?;
            let class_id = int(2, "class_id")?;
            if class_id == 0 || class_id as usize > NUM_CLASSES {
                return Err(err(format!("class_id {class_id} out of range 1..={NUM_CLASSES}")));
            }
            let confidence = num(3, "confidence")?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(err(format!("confidence {confidence} outside [0, 1]")));
            }
            let names = ["cx", "cy", "cz", "l", "w", "h", "yaw"];
            let mut v = [0.0; 7];
            for (k, name) in names.iter().enumerate() {
                v[k] = num(4 + k, name)?;
            }
            if v[3] <= 0.0 || v[4] <= 0.0 || v[5] <= 0.0 {
                return Err(err("box sizes must be positive".into()));
            }
            out.frames.entry(frame).or_default().push(ReplayRecord {
                track_id,
                class_id: class_id as u8,
                confidence,
                bbox: Box3::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], v[6]),
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# frame_index track_id class_id confidence cx cy cz l w h yaw\n");
        for (f, recs) in &self.frames {
            for r in recs {
                let p = r.bbox.params();
                s.push_str(&format!(
                    "{f} {} {} {} {} {} {} {} {} {} {}\n",
                    r.track_id, r.class_id, r.confidence, p[0], p[1], p[2], p[3], p[4], p[5], p[6]
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorMode {
    OracleNoise(OracleNoise),
    Replay { detections: ReplayDetections, source: PathBuf },
}

/// Learned query encoder: a class embedding plus a projection of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// `(C_cls + 1) × C`, row per class id.
    pub class_embed: DenseMatrix,
    /// 7 box parameters → C.
    pub box_proj: LinearLayer,
}

impl DetectorParams {
    pub fn zeros(c: usize) -> Self {
        Self {
            class_embed: DenseMatrix::zeros(NUM_CLASSES + 1, c),
            box_proj: LinearLayer::zeros(c, 7, Activation::None),
        }
    }

    pub fn uniform(c: usize, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            class_embed: DenseMatrix::uniform(NUM_CLASSES + 1, c, bound, rng),
            box_proj: LinearLayer::uniform(c, 7, Activation::None, bound, rng),
        }
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.insert(
            "detector.class_embed",
            Role::Embedding,
            vec![self.class_embed.rows, self.class_embed.cols],
            self.class_embed.data.clone(),
        );
        s.put_linear("detector.box_proj", &self.box_proj);
    }

    pub fn load(s: &ParamStore, c: usize) -> Result<Self> {
        let e = s.get("detector.class_embed", Role::Embedding, &[NUM_CLASSES + 1, c])?;
        Ok(Self {
            class_embed: DenseMatrix::from_data(NUM_CLASSES + 1, c, e.to_vec())?,
            box_proj: s.linear("detector.box_proj", c, 7, Activation::None)?,
        })
    }

    pub fn encode(&self, class_id: u8, bbox: &Box3) -> Vec<f32> {
        let proj = self.box_proj.forward(&bbox.params());
        self.class_embed
            .row(class_id as usize)
            .iter()
            .zip(proj)
            .map(|(e, p)| (*e as f64 + p) as f32)
            .collect()
    }
}

fn frame_rng(seed: u64, timestep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ timestep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    }
}

/// Normal(mean, sigma) truncated to [0, 1] by rejection.
fn truncated_confidence(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    let d = Normal::new(mean, sigma).unwrap();
    loop {
        let v = d.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
}

const MIN_SIZE: f64 = 0.05;

/// Produces this frame's instance queries, capped at `max_queries` (highest
/// confidence first, ties by track id).
pub fn detector_source(
    timestep: u64,
    gt_boxes: &[DynamicBox],
    mode: &DetectorMode,
    params: &DetectorParams,
    seed: u64,
    max_queries: usize,
) -> Result<Vec<InstanceQuery>> {
    let mut out: Vec<InstanceQuery> = match mode {
        DetectorMode::OracleNoise(noise) => {
            let mut rng = frame_rng(seed, timestep);
            gt_boxes
                .iter()
                .map(|b| {
                    let g = &b.bbox;
                    let mut bbox = *g;
                    for a in 0..3 {
                        bbox.center[a] += gauss(&mut rng, noise.center_sigma);
                    }
                    for a in 0..3 {
                        bbox.size[a] = (bbox.size[a] + gauss(&mut rng, noise.size_sigma)).max(MIN_SIZE);
                    }
                    bbox.yaw += gauss(&mut rng, noise.yaw_sigma);
                    let confidence = truncated_confidence(&mut rng, noise.confidence_mean, noise.confidence_sigma);
                    InstanceQuery {
                        feature: params.encode(b.class_id, &bbox),
                        bbox,
                        confidence,
                        class_id: b.class_id,
                        track_id: b.track_id,
                    }
                })
                .collect()
        }
        // a frame absent from the file simply has no detections
        DetectorMode::Replay { detections, .. } => detections
            .frames
            .get(&timestep)
            .map(Vec::as_slice)
            .unwrap_or_default()
            .iter()
                .map(|r| InstanceQuery {
                    feature: params.encode(r.class_id, &r.bbox),
                    bbox: r.bbox,
                    confidence: r.confidence,
                    class_id: r.class_id,
                    track_id: r.track_id,
                })
            .collect(),
    };
    if out.len() > max_queries {
        out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.track_id.cmp(&b.track_id)));
        out.truncate(max_queries);
        out.sort_by_key(|q| q.track_id);
    }
    Ok(out)
}
