use crate::error::{Error, Result};

/// Dense feature volume: `channels` feature maps over an X×Y×Z lattice.
///
/// Layout is channel-major, then x-major within a channel:
/// `data[((c · X + i) · Y + j) · Z + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    channels: usize,
    dims: [usize; 3],
    data: Vec<f32>,
}

impl VoxelVolume {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self::filled(channels, dims, 0.0)
    }

    pub fn filled(channels: usize, dims: [usize; 3], value: f32) -> Self {
        let n = channels * dims[0] * dims[1] * dims[2];
        Self {
            channels,
            dims,
            data: vec![value; n],
        }
    }

    pub fn from_data(channels: usize, dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let n = channels * dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::contract(format!(
                "volume data length {} does not match {channels}×{dims:?}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    /// Builds a volume from `f(channel, i, j, k)`.
    pub fn from_fn(channels: usize, dims: [usize; 3], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(channels * dims[0] * dims[1] * dims[2]);
        for c in 0..channels {
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    for k in 0..dims[2] {
                        data.push(f(c, i, j, k));
                    }
                }
            }
        }
        Self {
            channels,
            dims,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_shape(&self, other: &VoxelVolume) -> bool {
        self.channels == other.channels && self.dims == other.dims
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.num_cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.num_cells();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize, k: usize) -> f32 {
        self.data[c * self.num_cells() + self.cell_index(i, j, k)]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, k: usize, v: f32) {
        let idx = c * self.num_cells() + self.cell_index(i, j, k);
        self.data[idx] = v;
    }

    /// Feature vector of one cell (strided gather across channels).
    pub fn cell_vector(&self, cell: usize) -> Vec<f32> {
        let n = self.num_cells();
        (0..self.channels).map(|c| self.data[c * n + cell]).collect()
    }

    pub fn set_cell_vector(&mut self, cell: usize, v: &[f32]) {
        let n = self.num_cells();
        for (c, x) in v.iter().enumerate() {
            self.data[c * n + cell] = *x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_shape(&self, other: &VoxelVolume, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::contract(format!(
                "{what}: shape {}×{:?} vs {}×{:?}",
                self.channels, self.dims, other.channels, other.dims
            )));
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &VoxelVolume) -> Result<VoxelVolume> {
        self.check_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(VoxelVolume {
            data,
            ..self.clone_shape()
        })
    }

    /// Elementwise `alpha · self + beta · other` (f64 arithmetic).
    pub fn axpby(&self, alpha: f64, other: &VoxelVolume, beta: f64) -> Result<VoxelVolume> {
        self.check_shape(other, "axpby")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (alpha * *a as f64 + beta * *b as f64) as f32)
            .collect();
        Ok(VoxelVolume {
            data,
            ..self.clone_shape()
        })
    }

    pub fn scaled(&self, s: f32) -> VoxelVolume {
        VoxelVolume {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone_shape()
        }
    }

    fn clone_shape(&self) -> VoxelVolume {
        VoxelVolume {
            channels: self.channels,
            dims: self.dims,
            data: Vec::new(),
        }
    }

    /// Stacks volumes of equal dims along the channel axis.
    pub fn concat_channels(parts: &[&VoxelVolume]) -> Result<VoxelVolume> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero volumes"))?;
        let dims = first.dims;
        if let Some(bad) = parts.iter().find(|p| p.dims != dims) {
            return Err(Error::contract(format!(
                "concat: dims {:?} vs {:?}",
                bad.dims, dims
            )));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(channels * first.num_cells());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(VoxelVolume {
            channels,
            dims,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &VoxelVolume) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Σ of all entries, accumulated in f64.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}
