//! Voxel-to-query deformable attention: each query samples the fused volume
//! at learned offsets around its box center and adds the result residually.

use rand::Rng;
use rayon::prelude::*;

use super::query::InstanceQuery;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::numerics::{sample_point, softmax, Activation, DenseMatrix, LinearLayer, ParamStore, VoxelVolume};

#[derive(Debug, Clone, PartialEq)]
pub struct DeformAttnParams {
    pub heads: usize,
    pub points: usize,
    /// C → H·O·3 metric offsets, laid out `[h][o][xyz]`.
    pub offset_net: LinearLayer,
    /// C → H·O logits, softmaxed over O within each head.
    pub weight_net: LinearLayer,
    /// Per head W′_h: `C/H × C`.
    pub value_proj: Vec<DenseMatrix>,
    /// Per head W_h: `C × C/H`.
    pub output_proj: Vec<DenseMatrix>,
}

impl DeformAttnParams {
    fn head_dim(c: usize, heads: usize) -> usize {
        (c / heads).max(1)
    }

    pub fn zeros(c: usize, heads: usize, points: usize) -> Self {
        let d = Self::head_dim(c, heads);
        Self {
            heads,
            points,
            offset_net: LinearLayer::zeros(heads * points * 3, c, Activation::None),
            weight_net: LinearLayer::zeros(heads * points, c, Activation::None),
            value_proj: vec![DenseMatrix::zeros(d, c); heads],
            output_proj: vec![DenseMatrix::zeros(c, d); heads],
        }
    }

    pub fn uniform(c: usize, heads: usize, points: usize, bound: f32, rng: &mut impl Rng) -> Self {
        let d = Self::head_dim(c, heads);
        Self {
            heads,
            points,
            offset_net: LinearLayer::uniform(heads * points * 3, c, Activation::None, bound, rng),
            weight_net: LinearLayer::uniform(heads * points, c, Activation::None, bound, rng),
            value_proj: (0..heads).map(|_| DenseMatrix::uniform(d, c, bound, rng)).collect(),
            output_proj: (0..heads).map(|_| DenseMatrix::uniform(c, d, bound, rng)).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.offset_net.in_dim()
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.put_linear("queryagg.v2q.offset_net", &self.offset_net);
        s.put_linear("queryagg.v2q.weight_net", &self.weight_net);
        for h in 0..self.heads {
            s.put_matrix(&format!("queryagg.v2q.value_proj.{h}"), &self.value_proj[h]);
            s.put_matrix(&format!("queryagg.v2q.output_proj.{h}"), &self.output_proj[h]);
        }
    }

    pub fn load(s: &ParamStore, c: usize, heads: usize, points: usize) -> Result<Self> {
        if heads == 0 || points == 0 {
            return Err(Error::config("deformable attention needs at least one head and one point"));
        }
        let d = Self::head_dim(c, heads);
        Ok(Self {
            heads,
            points,
            offset_net: s.linear("queryagg.v2q.offset_net", heads * points * 3, c, Activation::None)?,
            weight_net: s.linear("queryagg.v2q.weight_net", heads * points, c, Activation::None)?,
            value_proj: (0..heads)
                .map(|h| s.matrix(&format!("queryagg.v2q.value_proj.{h}"), d, c))
                .collect::<Result<_>>()?,
            output_proj: (0..heads)
                .map(|h| s.matrix(&format!("queryagg.v2q.output_proj.{h}"), c, d))
                .collect::<Result<_>>()?,
        })
    }
}

/// The attention weights α of one query, `[h][o]`.
pub type PointWeights = Vec<Vec<f64>>;

/// Attends one query; returns the updated feature and its point weights.
pub fn attend_query(q: &InstanceQuery, v_sa: &VoxelVolume, p: &DeformAttnParams, spec_half: &GridSpec) -> (Vec<f32>, PointWeights) {
    let c = v_sa.channels();
    let x: Vec<f64> = q.feature.iter().map(|&v| v as f64).collect();
    let offsets = p.offset_net.forward(&x);
    let logits = p.weight_net.forward(&x);
    let to_grid = spec_half.ego_to_grid();
    let center = q.bbox.center;
    let mut sample = vec![0.0f32; c];
    let mut update = vec![0.0f64; c];
    let mut alphas = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let alpha = softmax(&logits[h * p.points..(h + 1) * p.points], 1.0);
        let mut acc = vec![0.0f64; c];
        for (o, a) in alpha.iter().enumerate() {
            let base = (h * p.points + o) * 3;
            let pt = center + crate::geometry::Vec3::new(offsets[base], offsets[base + 1], offsets[base + 2]);
            let u = spec_half.to_cell_space(&to_grid.apply(&pt));
            sample_point(v_sa, [u.x, u.y, u.z], &mut sample);
            for (dst, s) in acc.iter_mut().zip(&sample) {
                *dst += a * *s as f64;
            }
        }
        let projected = p.value_proj[h].mul_vec(&acc);
        for (dst, v) in update.iter_mut().zip(p.output_proj[h].mul_vec(&projected)) {
            *dst += v;
        }
        alphas.push(alpha);
    }
    let feature = q.feature.iter().zip(&update).map(|(f, u)| (*f as f64 + u) as f32).collect();
    (feature, alphas)
}

/// Updates every query from the fused volume (q_img → q_vox).
pub fn v2q_deform_attn(queries: &[InstanceQuery], v_sa: &VoxelVolume, p: &DeformAttnParams, spec_half: &GridSpec) -> Result<Vec<InstanceQuery>> {
    if v_sa.channels() != p.channels() {
        return Err(Error::contract(format!(
            "v2q: volume has {} channels, attention expects {}",
            v_sa.channels(),
            p.channels()
        )));
    }
    if let Some(q) = queries.iter().find(|q| q.feature.len() != p.channels()) {
        return Err(Error::contract(format!("v2q: query feature length {}", q.feature.len())));
    }
    Ok(queries
        .par_iter()
        .map(|q| {
            let (feature, _) = attend_query(q, v_sa, p, spec_half);
            InstanceQuery { feature, ..q.clone() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridFrame;
    use crate::query_agg::Box3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(rng: &mut ChaCha8Rng) -> (GridSpec, VoxelVolume, InstanceQuery) {
        let spec = GridSpec::new([8, 8, 4], [-3.2, -3.2, -1.6], 0.8, GridFrame::Ego).unwrap();
        let v = VoxelVolume::from_fn(8, spec.dims, |_, _, _, _| rng.random_range(-1.0..1.0));
        let q = InstanceQuery {
            feature: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bbox: Box3::new([0.3, -0.5, 0.1], [2.0, 1.0, 1.0], 0.0),
            confidence: 0.9,
            class_id: 5,
            track_id: 1,
        };
        (spec, v, q)
    }

    #[test]
    fn zero_offsets_and_logits_sample_the_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (spec, v, q) = setup(&mut rng);
        let mut p = DeformAttnParams::uniform(8, 2, 2, 0.5, &mut rng);
        p.offset_net = LinearLayer::zeros(12, 8, Activation::None);
        p.weight_net = LinearLayer::zeros(4, 8, Activation::None);
        let (f, alphas) = attend_query(&q, &v, &p, &spec);
        for a in &alphas {
            assert_eq!(a, &vec![0.5, 0.5]);
        }
        let u = spec.to_cell_space(&q.bbox.center);
        let mut s = vec![0.0; 8];
        sample_point(&v, [u.x, u.y, u.z], &mut s);
        let s: Vec<f64> = s.iter().map(|&x| x as f64).collect();
        for c in 0..8 {
            let mut want = q.feature[c] as f64;
            for h in 0..2 {
                want += p.output_proj[h].mul_vec(&p.value_proj[h].mul_vec(&s))[c];
            }
            assert!((f[c] as f64 - want).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_output_projection_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (spec, v, q) = setup(&mut rng);
        let mut p = DeformAttnParams::uniform(8, 4, 3, 0.5, &mut rng);
        p.output_proj = vec![DenseMatrix::zeros(8, 2); 4];
        let out = v2q_deform_attn(std::slice::from_ref(&q), &v, &p, &spec).unwrap();
        assert_eq!(out[0], q);
    }

    #[test]
    fn point_weights_normalize_per_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (spec, v, q) = setup(&mut rng);
        let p = DeformAttnParams::uniform(8, 4, 4, 2.0, &mut rng);
        let (_, alphas) = attend_query(&q, &v, &p, &spec);
        assert_eq!(alphas.len(), 4);
        for a in alphas {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn store_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = DeformAttnParams::uniform(8, 2, 3, 0.05, &mut rng);
        let mut s = ParamStore::new();
        p.save(&mut s);
        assert_eq!(DeformAttnParams::load(&s, 8, 2, 3).unwrap(), p);
    }
}
