//! Upsampling MLP decoder: deconv ×2 to full resolution, then a per-cell MLP
//! to class logits. The forecast head reuses the same architecture.

use rand::Rng;

use super::grid::SemanticGrid;
use crate::error::Result;
use crate::numerics::{deconv3d_x2, pointwise_mlp, Activation, Conv3dLayer, LinearLayer, ParamStore, VoxelVolume};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHead {
    /// C → C_dec, kernel 2, stride 2.
    pub deconv: Conv3dLayer,
    /// Per-cell MLP ending in `C_cls + 1` logits.
    pub mlp: Vec<LinearLayer>,
}

/// Shape of a [`DecoderHead`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderDims {
    pub in_channels: usize,
    pub deconv_channels: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl DecoderHead {
    pub fn zeros(d: DecoderDims) -> Self {
        Self {
            deconv: Conv3dLayer::zeros(d.deconv_channels, d.in_channels, 2, 2, 0),
            mlp: vec![
                LinearLayer::zeros(d.hidden, d.deconv_channels, Activation::Relu),
                LinearLayer::zeros(d.classes, d.hidden, Activation::None),
            ],
        }
    }

    pub fn uniform(d: DecoderDims, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            deconv: Conv3dLayer::uniform(d.deconv_channels, d.in_channels, 2, 2, 0, bound, rng),
            mlp: vec![
                LinearLayer::uniform(d.hidden, d.deconv_channels, Activation::Relu, bound, rng),
                LinearLayer::uniform(d.classes, d.hidden, Activation::None, bound, rng),
            ],
        }
    }

    pub fn save(&self, store: &mut ParamStore, prefix: &str) {
        store.put_conv(&format!("{prefix}.deconv"), &self.deconv);
        for (n, l) in self.mlp.iter().enumerate() {
            store.put_linear(&format!("{prefix}.mlp.{n}"), l);
        }
    }

    pub fn load(store: &ParamStore, prefix: &str, d: DecoderDims) -> Result<Self> {
        Ok(Self {
            deconv: store.conv(&format!("{prefix}.deconv"), d.deconv_channels, d.in_channels, 2, 2, 0)?,
            mlp: vec![
                store.linear(&format!("{prefix}.mlp.0"), d.hidden, d.deconv_channels, Activation::Relu)?,
                store.linear(&format!("{prefix}.mlp.1"), d.classes, d.hidden, Activation::None)?,
            ],
        })
    }

    /// Half-resolution features → full-resolution logits.
    pub fn forward(&self, vol: &VoxelVolume) -> Result<VoxelVolume> {
        let up = deconv3d_x2(&self.deconv, vol)?;
        pointwise_mlp(&up, &self.mlp)
    }
}

/// Per-cell argmax over logit channels; ties go to the lowest class id.
pub fn argmax_labels(logits: &VoxelVolume, resolution: f32) -> SemanticGrid {
    let cells = logits.num_cells();
    let mut best = logits.channel(0).to_vec();
    let mut labels = vec![0u8; cells];
    for c in 1..logits.channels() {
        for ((b, l), v) in best.iter_mut().zip(labels.iter_mut()).zip(logits.channel(c)) {
            if *v > *b {
                *b = *v;
                *l = c as u8;
            }
        }
    }
    SemanticGrid {
        dims: logits.dims(),
        resolution,
        labels,
        mask: None,
    }
}

/// Decodes V_fin into full-resolution logits and labels.
pub fn decode(v_fin: &VoxelVolume, head: &DecoderHead, resolution: f32) -> Result<(VoxelVolume, SemanticGrid)> {
    let logits = head.forward(v_fin)?;
    let labels = argmax_labels(&logits, resolution);
    Ok((logits, labels))
}
