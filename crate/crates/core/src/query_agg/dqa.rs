//! Query-to-voxel gated attention and the residual feed-forward block.

use rand::Rng;
use rayon::prelude::*;

use super::index::VoxelQueryIndex;
use super::query::InstanceQuery;
use crate::error::{Error, Result};
use crate::numerics::{pointwise_mlp, softmax, Activation, LinearLayer, ParamStore, Role, VoxelVolume};

/// Per-cell channel standardization with a learned affine.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNorm {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl ChannelNorm {
    pub fn identity(c: usize) -> Self {
        Self {
            scale: vec![1.0; c],
            shift: vec![0.0; c],
        }
    }

    /// Normalizes `x` in place.
    pub fn apply(&self, x: &mut [f64], eps: f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for (c, v) in x.iter_mut().enumerate() {
            *v = (*v - mean) * inv * self.scale[c] as f64 + self.shift[c] as f64;
        }
    }

    fn save(&self, s: &mut ParamStore, prefix: &str) {
        s.put_vector(&format!("{prefix}.scale"), Role::Scale, &self.scale);
        s.put_vector(&format!("{prefix}.shift"), Role::Shift, &self.shift);
    }

    fn load(s: &ParamStore, prefix: &str, c: usize) -> Result<Self> {
        Ok(Self {
            scale: s.vector(&format!("{prefix}.scale"), Role::Scale, c)?,
            shift: s.vector(&format!("{prefix}.shift"), Role::Shift, c)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub norm_in: ChannelNorm,
    /// C → 4C (ReLU), 4C → C.
    pub layers: [LinearLayer; 2],
    pub norm_out: ChannelNorm,
}

impl FfnParams {
    pub fn zeros(c: usize) -> Self {
        Self {
            norm_in: ChannelNorm::identity(c),
            layers: [LinearLayer::zeros(4 * c, c, Activation::Relu), LinearLayer::zeros(c, 4 * c, Activation::None)],
            norm_out: ChannelNorm::identity(c),
        }
    }

    /// Random FFN weights with identity normalization affines.
    pub fn uniform(c: usize, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            norm_in: ChannelNorm::identity(c),
            layers: [
                LinearLayer::uniform(4 * c, c, Activation::Relu, bound, rng),
                LinearLayer::uniform(c, 4 * c, Activation::None, bound, rng),
            ],
            norm_out: ChannelNorm::identity(c),
        }
    }

    pub fn save(&self, s: &mut ParamStore) {
        self.norm_in.save(s, "queryagg.ffn.norm_in");
        s.put_linear("queryagg.ffn.0", &self.layers[0]);
        s.put_linear("queryagg.ffn.1", &self.layers[1]);
        self.norm_out.save(s, "queryagg.ffn.norm_out");
    }

    pub fn load(s: &ParamStore, c: usize) -> Result<Self> {
        Ok(Self {
            norm_in: ChannelNorm::load(s, "queryagg.ffn.norm_in", c)?,
            layers: [
                s.linear("queryagg.ffn.0", 4 * c, c, Activation::Relu)?,
                s.linear("queryagg.ffn.1", c, 4 * c, Activation::None)?,
            ],
            norm_out: ChannelNorm::load(s, "queryagg.ffn.norm_out", c)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqaParams {
    pub w_q: LinearLayer,
    /// Shared key/value projection of the voxel-updated queries.
    pub w_kv: LinearLayer,
    /// `[V_SA, z]` (2C) → C, sigmoid.
    pub w_gate: LinearLayer,
    /// Normalized cell coordinates in [0, 1]³ → C.
    pub pos_enc: LinearLayer,
    pub ffn: FfnParams,
}

impl DqaParams {
    pub fn zeros(c: usize) -> Self {
        Self {
            w_q: LinearLayer::zeros(c, c, Activation::None),
            w_kv: LinearLayer::zeros(c, c, Activation::None),
            w_gate: LinearLayer::zeros(c, 2 * c, Activation::Sigmoid),
            pos_enc: LinearLayer::zeros(c, 3, Activation::None),
            ffn: FfnParams::zeros(c),
        }
    }

    pub fn uniform(c: usize, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            w_q: LinearLayer::uniform(c, c, Activation::None, bound, rng),
            w_kv: LinearLayer::uniform(c, c, Activation::None, bound, rng),
            w_gate: LinearLayer::uniform(c, 2 * c, Activation::Sigmoid, bound, rng),
            pos_enc: LinearLayer::uniform(c, 3, Activation::None, bound, rng),
            ffn: FfnParams::uniform(c, bound, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_q.in_dim()
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.put_linear("queryagg.dqa.w_q", &self.w_q);
        s.put_linear("queryagg.dqa.w_kv", &self.w_kv);
        s.put_linear("queryagg.dqa.w_gate", &self.w_gate);
        s.put_linear("queryagg.dqa.pos_enc", &self.pos_enc);
        self.ffn.save(s);
    }

    pub fn load(s: &ParamStore, c: usize) -> Result<Self> {
        Ok(Self {
            w_q: s.linear("queryagg.dqa.w_q", c, c, Activation::None)?,
            w_kv: s.linear("queryagg.dqa.w_kv", c, c, Activation::None)?,
            w_gate: s.linear("queryagg.dqa.w_gate", c, 2 * c, Activation::Sigmoid)?,
            pos_enc: s.linear("queryagg.dqa.pos_enc", c, 3, Activation::None)?,
            ffn: FfnParams::load(s, c)?,
        })
    }
}

/// Result of attending one indexed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellUpdate {
    pub output: Vec<f64>,
    /// Softmax weights over the cell's queries.
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
    pub gate: Vec<f64>,
}

fn normalized_coords(cell: usize, dims: [usize; 3]) -> [f64; 3] {
    let k = cell % dims[2];
    let j = (cell / dims[2]) % dims[1];
    let i = cell / (dims[1] * dims[2]);
    [
        (i as f64 + 0.5) / dims[0] as f64,
        (j as f64 + 0.5) / dims[1] as f64,
        (k as f64 + 0.5) / dims[2] as f64,
    ]
}

/// Gate `g = σ(W_gate·[x, z] + b)`.
pub fn gate(p: &DqaParams, x: &[f64], z: &[f64]) -> Vec<f64> {
    let xz: Vec<f64> = x.iter().chain(z).copied().collect();
    p.w_gate.forward(&xz)
}

/// Gated output channel `x_c + g_c(z)·z_c` as a function of `z`.
pub fn gated_output_channel(p: &DqaParams, x: &[f64], z: &[f64], c: usize) -> f64 {
    x[c] + gate(p, x, z)[c] * z[c]
}

/// Analytic gradient of [`gated_output_channel`] with respect to `z`.
pub fn gated_output_channel_grad(p: &DqaParams, x: &[f64], z: &[f64], c: usize) -> Vec<f64> {
    let g = gate(p, x, z)[c];
    let dim = x.len();
    (0..z.len())
        .map(|m| {
            let w = p.w_gate.weight.at(c, dim + m) as f64;
            let own = if m == c { g } else { 0.0 };
            own + g * (1.0 - g) * w * z[c]
        })
        .collect()
}

/// Attends one cell with features `x` to the projected keys/values of its queries.
pub fn attend_cell(p: &DqaParams, x: &[f64], coords: [f64; 3], kv: &[&[f64]]) -> CellUpdate {
    let pe = p.pos_enc.forward(&coords);
    let xq: Vec<f64> = x.iter().zip(&pe).map(|(a, b)| a + b).collect();
    let q = p.w_q.forward(&xq);
    let scores: Vec<f64> = kv.iter().map(|k| q.iter().zip(k.iter()).map(|(a, b)| a * b).sum()).collect();
    let alpha = softmax(&scores, (x.len() as f64).sqrt());
    let mut z = vec![0.0f64; x.len()];
    for (a, v) in alpha.iter().zip(kv) {
        for (dst, s) in z.iter_mut().zip(v.iter()) {
            *dst += a * s;
        }
    }
    let g = gate(p, x, &z);
    let output = x.iter().zip(&g).zip(&z).map(|((x, g), z)| x + g * z).collect();
    CellUpdate { output, alpha, z, gate: g }
}

/// V_DQA: indexed cells receive gated query features; all other cells are
/// copied unchanged.
pub fn dqa(v_sa: &VoxelVolume, queries: &[InstanceQuery], index: &VoxelQueryIndex, p: &DqaParams) -> Result<VoxelVolume> {
    Ok(dqa_detailed(v_sa, queries, index, p)?.0)
}

/// As [`dqa`], also returning each indexed cell's update in index order.
pub fn dqa_detailed(v_sa: &VoxelVolume, queries: &[InstanceQuery], index: &VoxelQueryIndex, p: &DqaParams) -> Result<(VoxelVolume, Vec<(usize, CellUpdate)>)> {
    let c = v_sa.channels();
    if c != p.channels() {
        return Err(Error::contract(format!("dqa: volume has {c} channels, params expect {}", p.channels())));
    }
    if let Some((&cell, _)) = index.cells.iter().find(|(&cell, qs)| cell >= v_sa.num_cells() || qs.iter().any(|&j| j >= queries.len())) {
        return Err(Error::contract(format!("dqa: index entry for cell {cell} out of range")));
    }
    if queries.iter().any(|q| q.feature.len() != c) {
        return Err(Error::contract("dqa: query feature length differs from volume channels"));
    }
    let kv: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| p.w_kv.forward(&q.feature.iter().map(|&v| v as f64).collect::<Vec<_>>()))
        .collect();
    let entries: Vec<(&usize, &Vec<usize>)> = index.cells.iter().collect();
    let dims = v_sa.dims();
    let updates: Vec<(usize, CellUpdate)> = entries
        .par_iter()
        .map(|(&cell, qs)| {
            let x: Vec<f64> = v_sa.cell_vector(cell).iter().map(|&v| v as f64).collect();
            let refs: Vec<&[f64]> = qs.iter().map(|&j| kv[j].as_slice()).collect();
            (cell, attend_cell(p, &x, normalized_coords(cell, dims), &refs))
        })
        .collect();
    let mut out = v_sa.clone();
    for (cell, u) in &updates {
        let v: Vec<f32> = u.output.iter().map(|&x| x as f32).collect();
        out.set_cell_vector(*cell, &v);
    }
    Ok((out, updates))
}

/// V_fin = norm_out(x + FFN(norm_in(x))) per cell.
pub fn ffn_residual(v_dqa: &VoxelVolume, p: &FfnParams, eps: f64) -> Result<VoxelVolume> {
    let c = v_dqa.channels();
    if c != p.norm_in.scale.len() {
        return Err(Error::contract("ffn: channel count differs from params"));
    }
    let mut normed = v_dqa.clone();
    normalize_cells(&mut normed, &p.norm_in, eps);
    let h = pointwise_mlp(&normed, &p.layers)?;
    let mut out = v_dqa.add(&h)?;
    normalize_cells(&mut out, &p.norm_out, eps);
    Ok(out)
}

fn normalize_cells(vol: &mut VoxelVolume, norm: &ChannelNorm, eps: f64) {
    let cells = vol.num_cells();
    let c = vol.channels();
    let rows: Vec<Vec<f32>> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let mut x: Vec<f64> = (0..c).map(|ch| vol.data()[ch * cells + cell] as f64).collect();
            norm.apply(&mut x, eps);
            x.into_iter().map(|v| v as f32).collect()
        })
        .collect();
    let data = vol.data_mut();
    for (cell, r) in rows.iter().enumerate() {
        for (ch, v) in r.iter().enumerate() {
            data[ch * cells + cell] = *v;
        }
    }
}
