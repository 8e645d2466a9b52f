use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::volume::VoxelVolume;
use crate::error::{Error, Result};

/// Cells per work tile for the pointwise (per-cell) kernels.
const CELL_TILE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "matrix data length {} != {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn uniform(rows: usize, cols: usize, bound: f32, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `M · x` with f64 accumulation.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| *w as f64 * v)
                    .sum()
            })
            .collect()
    }
}

/// Fully connected layer `activation(W · x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl LinearLayer {
    pub fn new(weight: DenseMatrix, bias: Vec<f32>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows {
            return Err(Error::contract(format!(
                "linear bias length {} != output size {}",
                bias.len(),
                weight.rows
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(out: usize, inp: usize, activation: Activation) -> Self {
        Self {
            weight: DenseMatrix::zeros(out, inp),
            bias: vec![0.0; out],
            activation,
        }
    }

    pub fn uniform(out: usize, inp: usize, activation: Activation, bound: f32, rng: &mut impl Rng) -> Self {
        let weight = DenseMatrix::uniform(out, inp, bound, rng);
        let bias = (0..out).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    /// Pre-activation output `W · x + b`.
    pub fn linear(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.mul_vec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += *b as f64;
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.linear(x);
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        y
    }

    pub fn forward_f32(&self, x: &[f32]) -> Vec<f32> {
        let xd: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.forward(&xd).into_iter().map(|v| v as f32).collect()
    }
}

/// Applies a chain of linear layers independently at every cell of `vol`.
///
/// Each cell's result depends only on that cell and the summation order over
/// input features is fixed, so the output does not depend on the tiling or
/// the number of worker threads.
pub fn pointwise_mlp(vol: &VoxelVolume, layers: &[LinearLayer]) -> Result<VoxelVolume> {
    let mut width = vol.channels();
    for (n, l) in layers.iter().enumerate() {
        if l.in_dim() != width {
            return Err(Error::contract(format!(
                "pointwise layer {n} expects {} inputs, got {width}",
                l.in_dim()
            )));
        }
        width = l.out_dim();
    }
    let cells = vol.num_cells();
    let out_ch = width;
    let tiles: Vec<(usize, Vec<f32>)> = (0..cells.div_ceil(CELL_TILE))
        .into_par_iter()
        .map(|t| {
            let start = t * CELL_TILE;
            let len = CELL_TILE.min(cells - start);
            let mut cur: Vec<f64> = Vec::with_capacity(vol.channels() * len);
            for c in 0..vol.channels() {
                cur.extend(vol.channel(c)[start..start + len].iter().map(|&v| v as f64));
            }
            for layer in layers {
                cur = channel_mix_tile(layer, &cur, len);
            }
            (start, cur.into_iter().map(|v| v as f32).collect())
        })
        .collect();
    let mut out = VoxelVolume::zeros(out_ch, vol.dims());
    for (start, tile) in tiles {
        let len = tile.len() / out_ch;
        for c in 0..out_ch {
            out.channel_mut(c)[start..start + len].copy_from_slice(&tile[c * len..(c + 1) * len]);
        }
    }
    Ok(out)
}

/// One linear layer over a channel-major tile of `len` cells.
fn channel_mix_tile(layer: &LinearLayer, input: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; layer.out_dim() * len];
    for (o, acc) in out.chunks_exact_mut(len).enumerate() {
        acc.fill(layer.bias[o] as f64);
        for (i, &w) in layer.weight.row(o).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let w = w as f64;
            let x = &input[i * len..(i + 1) * len];
            for (a, v) in acc.iter_mut().zip(x) {
                *a += w * v;
            }
        }
        if layer.activation != Activation::None {
            for a in acc.iter_mut() {
                *a = layer.activation.apply(*a);
            }
        }
    }
    out
}

/// 3D convolution layer with cubic kernel `c_out × c_in × k × k × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dLayer {
    pub c_out: usize,
    pub c_in: usize,
    pub kernel_size: usize,
    /// `kernel[(((o · c_in + i) · k + kx) · k + ky) · k + kz]`.
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv3dLayer {
    pub fn new(
        c_out: usize,
        c_in: usize,
        kernel_size: usize,
        kernel: Vec<f32>,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let k3 = kernel_size.pow(3);
        if kernel_size == 0 || stride == 0 {
            return Err(Error::contract("conv kernel size and stride must be >= 1"));
        }
        if kernel.len() != c_out * c_in * k3 || bias.len() != c_out {
            return Err(Error::contract(format!(
                "conv weights: kernel {} (want {}), bias {} (want {c_out})",
                kernel.len(),
                c_out * c_in * k3,
                bias.len()
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            kernel_size,
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(c_out: usize, c_in: usize, kernel_size: usize, stride: usize, padding: usize) -> Self {
        Self {
            c_out,
            c_in,
            kernel_size,
            kernel: vec![0.0; c_out * c_in * kernel_size.pow(3)],
            bias: vec![0.0; c_out],
            stride,
            padding,
        }
    }

    pub fn uniform(
        c_out: usize,
        c_in: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        bound: f32,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layer = Self::zeros(c_out, c_in, kernel_size, stride, padding);
        for v in layer.kernel.iter_mut().chain(layer.bias.iter_mut()) {
            *v = rng.random_range(-bound..=bound);
        }
        layer
    }

    #[inline]
    pub fn kernel_index(&self, o: usize, i: usize, kx: usize, ky: usize, kz: usize) -> usize {
        let k = self.kernel_size;
        (((o * self.c_in + i) * k + kx) * k + ky) * k + kz
    }

    pub fn weight(&self, o: usize, i: usize, kx: usize, ky: usize, kz: usize) -> f32 {
        self.kernel[self.kernel_index(o, i, kx, ky, kz)]
    }

    pub fn set_weight(&mut self, o: usize, i: usize, kx: usize, ky: usize, kz: usize, v: f32) {
        let idx = self.kernel_index(o, i, kx, ky, kz);
        self.kernel[idx] = v;
    }

    /// Output dims of the forward (cross-correlation) pass.
    pub fn output_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = dims[a] + 2 * self.padding;
            if padded < self.kernel_size {
                return None;
            }
            out[a] = (padded - self.kernel_size) / self.stride + 1;
        }
        Some(out)
    }

    /// Output dims of the transposed pass: `(n − 1) · s − 2p + k`.
    pub fn transposed_output_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let full = (dims[a] - 1) * self.stride + self.kernel_size;
            if full <= 2 * self.padding {
                return None;
            }
            out[a] = full - 2 * self.padding;
        }
        Some(out)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_size == 1 && self.stride == 1 && self.padding == 0
    }

    /// The 1×1×1 kernel viewed as a linear layer.
    fn as_linear(&self) -> LinearLayer {
        LinearLayer {
            weight: DenseMatrix {
                rows: self.c_out,
                cols: self.c_in,
                data: self.kernel.clone(),
            },
            bias: self.bias.clone(),
            activation: Activation::None,
        }
    }
}

/// Zero-padded 3D cross-correlation (no kernel flip).
pub fn conv3d(layer: &Conv3dLayer, vol: &VoxelVolume) -> Result<VoxelVolume> {
    if vol.channels() != layer.c_in {
        return Err(Error::contract(format!(
            "conv3d expects {} input channels, got {}",
            layer.c_in,
            vol.channels()
        )));
    }
    if layer.is_pointwise() {
        return pointwise_mlp(vol, std::slice::from_ref(&layer.as_linear()));
    }
    let out_dims = layer
        .output_dims(vol.dims())
        .ok_or_else(|| Error::contract(format!("conv3d output empty for input {:?}", vol.dims())))?;
    let [ix, iy, iz] = vol.dims();
    let [ox, oy, oz] = out_dims;
    let k = layer.kernel_size;
    let (s, p) = (layer.stride as isize, layer.padding as isize);
    let out_cells = ox * oy * oz;

    // Valid output range along an axis for kernel tap t: 0 <= o*s + t - p < n.
    let valid = |t: usize, n: usize, on: usize| -> (usize, usize) {
        let t = t as isize;
        let lo = ((p - t).max(0) + s - 1) / s;
        let hi_excl = ((n as isize - 1 + p - t).div_euclid(s) + 1).min(on as isize);
        let lo = lo.max(0) as usize;
        let hi = hi_excl.max(0) as usize;
        (lo, hi.max(lo))
    };

    let mut out = VoxelVolume::zeros(layer.c_out, out_dims);
    out.data_mut()
        .par_chunks_mut(out_cells)
        .enumerate()
        .for_each(|(o, dst)| {
            let mut acc = vec![layer.bias[o] as f64; out_cells];
            for c in 0..layer.c_in {
                let src = vol.channel(c);
                for kx in 0..k {
                    let (x0, x1) = valid(kx, ix, ox);
                    for ky in 0..k {
                        let (y0, y1) = valid(ky, iy, oy);
                        for kz in 0..k {
                            let w = layer.weight(o, c, kx, ky, kz);
                            if w == 0.0 {
                                continue;
                            }
                            let w = w as f64;
                            let (z0, z1) = valid(kz, iz, oz);
                            if z0 >= z1 {
                                continue;
                            }
                            for x in x0..x1 {
                                let sx = (x as isize * s + kx as isize - p) as usize;
                                for y in y0..y1 {
                                    let sy = (y as isize * s + ky as isize - p) as usize;
                                    let obase = (x * oy + y) * oz;
                                    let ibase = (sx * iy + sy) * iz;
                                    let sz0 = (z0 as isize * s + kz as isize - p) as usize;
                                    let a = &mut acc[obase + z0..obase + z1];
                                    if s == 1 {
                                        let b = &src[ibase + sz0..ibase + sz0 + (z1 - z0)];
                                        for (a, v) in a.iter_mut().zip(b) {
                                            *a += w * *v as f64;
                                        }
                                    } else {
                                        let b = src[ibase + sz0..].iter().step_by(s as usize);
                                        for (a, v) in a.iter_mut().zip(b) {
                                            *a += w * *v as f64;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for (d, a) in dst.iter_mut().zip(acc) {
                *d = a as f32;
            }
        });
    Ok(out)
}

/// Stride-2 transposed convolution doubling every spatial dim.
///
/// Input cell `x` scatters `kernel[.., t]` to output `2x + t − padding`. The
/// kernel uses the same `c_out × c_in × k³` layout as [`conv3d`].
pub fn deconv3d_x2(layer: &Conv3dLayer, vol: &VoxelVolume) -> Result<VoxelVolume> {
    if vol.channels() != layer.c_in {
        return Err(Error::contract(format!(
            "deconv3d expects {} input channels, got {}",
            layer.c_in,
            vol.channels()
        )));
    }
    if layer.stride != 2 {
        return Err(Error::contract("deconv3d_x2 requires stride 2"));
    }
    let in_dims = vol.dims();
    let want = [in_dims[0] * 2, in_dims[1] * 2, in_dims[2] * 2];
    if layer.transposed_output_dims(in_dims) != Some(want) {
        return Err(Error::contract(format!(
            "deconv3d_x2: kernel {} / padding {} does not double dims {:?}",
            layer.kernel_size, layer.padding, in_dims
        )));
    }
    let [ix, iy, iz] = in_dims;
    let [ox, oy, oz] = want;
    let k = layer.kernel_size;
    let p = layer.padding as isize;
    let out_cells = ox * oy * oz;

    let mut out = VoxelVolume::zeros(layer.c_out, want);
    if k == 2 && p == 0 {
        // every output cell has exactly one tap: mix channels per tap, then interleave
        let in_cells = ix * iy * iz;
        out.data_mut()
            .par_chunks_mut(out_cells)
            .enumerate()
            .for_each(|(o, dst)| {
                let mut acc = vec![0f64; in_cells];
                for t in 0..8 {
                    let (kx, ky, kz) = (t >> 2, (t >> 1) & 1, t & 1);
                    acc.fill(layer.bias[o] as f64);
                    for c in 0..layer.c_in {
                        let w = layer.weight(o, c, kx, ky, kz);
                        if w == 0.0 {
                            continue;
                        }
                        let w = w as f64;
                        for (a, v) in acc.iter_mut().zip(vol.channel(c)) {
                            *a += w * *v as f64;
                        }
                    }
                    for x in 0..ix {
                        for y in 0..iy {
                            let ibase = (x * iy + y) * iz;
                            let obase = ((2 * x + kx) * oy + 2 * y + ky) * oz + kz;
                            for z in 0..iz {
                                dst[obase + 2 * z] = acc[ibase + z] as f32;
                            }
                        }
                    }
                }
            });
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(out_cells)
        .enumerate()
        .for_each(|(o, dst)| {
            let mut acc = vec![layer.bias[o] as f64; out_cells];
            for c in 0..layer.c_in {
                let src = vol.channel(c);
                for kx in 0..k {
                    for ky in 0..k {
                        for kz in 0..k {
                            let w = layer.weight(o, c, kx, ky, kz);
                            if w == 0.0 {
                                continue;
                            }
                            let w = w as f64;
                            for x in 0..ix {
                                let tx = 2 * x as isize + kx as isize - p;
                                if tx < 0 || tx >= ox as isize {
                                    continue;
                                }
                                for y in 0..iy {
                                    let ty = 2 * y as isize + ky as isize - p;
                                    if ty < 0 || ty >= oy as isize {
                                        continue;
                                    }
                                    let obase = (tx as usize * oy + ty as usize) * oz;
                                    let ibase = (x * iy + y) * iz;
                                    for z in 0..iz {
                                        let tz = 2 * z as isize + kz as isize - p;
                                        if tz < 0 || tz >= oz as isize {
                                            continue;
                                        }
                                        acc[obase + tz as usize] += w * src[ibase + z] as f64;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for (d, a) in dst.iter_mut().zip(acc) {
                *d = a as f32;
            }
        });
    Ok(out)
}

/// Elementwise ReLU.
pub fn relu(vol: &VoxelVolume) -> VoxelVolume {
    let mut out = vol.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}
