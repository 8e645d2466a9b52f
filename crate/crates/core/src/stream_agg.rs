//! Stream-based voxel aggregation: multi-scale lift compression, ego-motion
//! warping of the previous final volume, bottleneck refinement with
//! channel/spatial attention, additive fusion, and the two auxiliary heads.

use rand::Rng;

use crate::decoder_metrics::{DecoderDims, DecoderHead};
use crate::error::{Error, Result};
use crate::geometry::{relative_transform, EgoPose, GridSpec, RigidTransform};
use crate::numerics::{
    channel_pool, conv3d, gather_volume, pointwise_mlp, relu, resample_trilinear, sigmoid, spatial_pool, Activation,
    Conv3dLayer, EdgeMode, LinearLayer, ParamStore, PoolKind, VoxelVolume,
};
use crate::query_agg::InstanceQuery;

/// Offsets within this distance of an integer are snapped when building the
/// cell-space warp, so identity and lattice-aligned motions sample exact
/// cell centers.
const SNAP_EPS: f64 = 1e-9;

// ---------------------------------------------------------------- lift FPN

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpnDims {
    pub c_init: usize,
    pub c1: usize,
    pub c2: usize,
    pub c: usize,
}

/// Two stride-2 convolutions (full → half → quarter) and a 1×1×1 compression
/// of `[V_init↓, V1, V2↑]` to C channels at half resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FpnParams {
    pub down1: Conv3dLayer,
    pub down2: Conv3dLayer,
    pub compress: Conv3dLayer,
}

impl FpnParams {
    pub fn zeros(d: FpnDims) -> Self {
        Self {
            down1: Conv3dLayer::zeros(d.c1, d.c_init, 2, 2, 0),
            down2: Conv3dLayer::zeros(d.c2, d.c1, 2, 2, 0),
            compress: Conv3dLayer::zeros(d.c, d.c_init + d.c1 + d.c2, 1, 1, 0),
        }
    }

    pub fn uniform(d: FpnDims, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            down1: Conv3dLayer::uniform(d.c1, d.c_init, 2, 2, 0, bound, rng),
            down2: Conv3dLayer::uniform(d.c2, d.c1, 2, 2, 0, bound, rng),
            compress: Conv3dLayer::uniform(d.c, d.c_init + d.c1 + d.c2, 1, 1, 0, bound, rng),
        }
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.put_conv("fpn.down1", &self.down1);
        s.put_conv("fpn.down2", &self.down2);
        s.put_conv("fpn.compress", &self.compress);
    }

    pub fn load(s: &ParamStore, d: FpnDims) -> Result<Self> {
        Ok(Self {
            down1: s.conv("fpn.down1", d.c1, d.c_init, 2, 2, 0)?,
            down2: s.conv("fpn.down2", d.c2, d.c1, 2, 2, 0)?,
            compress: s.conv("fpn.compress", d.c, d.c_init + d.c1 + d.c2, 1, 1, 0)?,
        })
    }
}

/// V_init (full resolution) → V_curr (C channels, half resolution).
pub fn fpn3d(v_init: &VoxelVolume, p: &FpnParams) -> Result<VoxelVolume> {
    let d = v_init.dims();
    if d.iter().any(|&n| n % 4 != 0) {
        return Err(Error::contract(format!("lift volume dims {d:?} must be divisible by 4")));
    }
    let half = [d[0] / 2, d[1] / 2, d[2] / 2];
    let v1 = conv3d(&p.down1, v_init)?;
    let v2 = conv3d(&p.down2, &v1)?;
    let r0 = resample_trilinear(v_init, half, EdgeMode::Clamp);
    let r2 = resample_trilinear(&v2, half, EdgeMode::Clamp);
    let stacked = VoxelVolume::concat_channels(&[&r0, &v1, &r2])?;
    conv3d(&p.compress, &stacked)
}

// ---------------------------------------------------------------- warp

/// Cell-space affine map `u_prev = A·u + b` pulling current cells from the
/// previous lattice, for a past-ego → current-ego motion.
pub fn warp_affine(transform: &RigidTransform, spec: &GridSpec) -> ([[f64; 3]; 3], [f64; 3]) {
    let g = spec.grid_motion(transform);
    let rt = g.rotation.transpose();
    let min = nalgebra::Vector3::from(spec.min_corner);
    // p_prev = Rᵀ(p − t) with p = min + res·u
    let off = (rt * (min - g.translation) - min) / spec.resolution;
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() <= SNAP_EPS {
            r
        } else {
            v
        }
    };
    let mut a = [[0.0; 3]; 3];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = snap(rt[(r, c)]);
        }
    }
    (a, [snap(off.x), snap(off.y), snap(off.z)])
}

/// Motion-compensates `prev` into the current frame: every current cell center
/// is mapped into the previous frame and trilinearly sampled there (zeros
/// outside the previous lattice).
pub fn warp_volume(prev: &VoxelVolume, transform: &RigidTransform, spec_half: &GridSpec) -> Result<VoxelVolume> {
    if prev.dims() != spec_half.dims {
        return Err(Error::contract(format!(
            "warp: volume dims {:?} differ from grid {:?}",
            prev.dims(),
            spec_half.dims
        )));
    }
    let (a, b) = warp_affine(transform, spec_half);
    let [nx, ny, nz] = spec_half.dims;
    let mut pts = Vec::with_capacity(spec_half.num_cells());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let u = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
                let mut p = [0.0; 3];
                for r in 0..3 {
                    p[r] = a[r][0] * u[0] + a[r][1] * u[1] + a[r][2] * u[2] + b[r];
                }
                pts.push(p);
            }
        }
    }
    Ok(gather_volume(prev, &pts, spec_half.dims))
}

// ---------------------------------------------------------------- refinement

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineDims {
    pub c: usize,
    /// Channel attention reduction ratio.
    pub reduction: usize,
}

impl RefineDims {
    pub fn bottleneck(&self) -> usize {
        self.c / 4
    }

    pub fn hidden(&self) -> usize {
        (self.c / self.reduction).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineNetParams {
    pub squeeze: Conv3dLayer,
    pub body: Conv3dLayer,
    pub expand: Conv3dLayer,
    /// C → C/r (ReLU) → C, shared by the average and max paths.
    pub cbam_mlp: [LinearLayer; 2],
    pub spatial_conv: Conv3dLayer,
}

impl RefineNetParams {
    pub fn zeros(d: RefineDims) -> Self {
        let b = d.bottleneck();
        Self {
            squeeze: Conv3dLayer::zeros(b, d.c, 1, 1, 0),
            body: Conv3dLayer::zeros(b, b, 3, 1, 1),
            expand: Conv3dLayer::zeros(d.c, b, 1, 1, 0),
            cbam_mlp: [
                LinearLayer::zeros(d.hidden(), d.c, Activation::Relu),
                LinearLayer::zeros(d.c, d.hidden(), Activation::None),
            ],
            spatial_conv: Conv3dLayer::zeros(1, 2, 7, 1, 3),
        }
    }

    pub fn uniform(d: RefineDims, bound: f32, rng: &mut impl Rng) -> Self {
        let b = d.bottleneck();
        Self {
            squeeze: Conv3dLayer::uniform(b, d.c, 1, 1, 0, bound, rng),
            body: Conv3dLayer::uniform(b, b, 3, 1, 1, bound, rng),
            expand: Conv3dLayer::uniform(d.c, b, 1, 1, 0, bound, rng),
            cbam_mlp: [
                LinearLayer::uniform(d.hidden(), d.c, Activation::Relu, bound, rng),
                LinearLayer::uniform(d.c, d.hidden(), Activation::None, bound, rng),
            ],
            spatial_conv: Conv3dLayer::uniform(1, 2, 7, 1, 3, bound, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.squeeze.c_in;
        if c % 4 != 0 || self.squeeze.c_out != c / 4 || self.body.c_in != c / 4 || self.expand.c_out != c {
            return Err(Error::config(format!("refine channel chain inconsistent for C = {c}")));
        }
        Ok(())
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.put_conv("streamagg.squeeze", &self.squeeze);
        s.put_conv("streamagg.body", &self.body);
        s.put_conv("streamagg.expand", &self.expand);
        s.put_linear("streamagg.cbam_mlp.0", &self.cbam_mlp[0]);
        s.put_linear("streamagg.cbam_mlp.1", &self.cbam_mlp[1]);
        s.put_conv("streamagg.spatial_conv", &self.spatial_conv);
    }

    pub fn load(s: &ParamStore, d: RefineDims) -> Result<Self> {
        let b = d.bottleneck();
        Ok(Self {
            squeeze: s.conv("streamagg.squeeze", b, d.c, 1, 1, 0)?,
            body: s.conv("streamagg.body", b, b, 3, 1, 1)?,
            expand: s.conv("streamagg.expand", d.c, b, 1, 1, 0)?,
            cbam_mlp: [
                s.linear("streamagg.cbam_mlp.0", d.hidden(), d.c, Activation::Relu)?,
                s.linear("streamagg.cbam_mlp.1", d.c, d.hidden(), Activation::None)?,
            ],
            spatial_conv: s.conv("streamagg.spatial_conv", 1, 2, 7, 1, 3)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    /// M_c, one gate per channel, in (0, 1).
    pub channel_mask: Vec<f64>,
    /// M_s as pre-sigmoid logits, single channel.
    pub spatial_mask: VoxelVolume,
}

fn mlp_f64(layers: &[LinearLayer], x: &[f32]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|&a| a as f64).collect();
    for l in layers {
        v = l.forward(&v);
    }
    v
}

/// Channel attention from global average/max pooling, then spatial attention
/// from channel-pooled maps of the channel-gated volume.
pub fn cbam3d(v_out: &VoxelVolume, p: &RefineNetParams) -> Result<AttentionMaps> {
    if v_out.channels() != p.cbam_mlp[0].in_dim() {
        return Err(Error::contract("cbam: channel count differs from attention MLP"));
    }
    let a = mlp_f64(&p.cbam_mlp, &spatial_pool(v_out, PoolKind::Avg));
    let m = mlp_f64(&p.cbam_mlp, &spatial_pool(v_out, PoolKind::Max));
    let channel_mask: Vec<f64> = a.iter().zip(&m).map(|(x, y)| sigmoid(x + y)).collect();
    let mut gated = v_out.clone();
    for (c, g) in channel_mask.iter().enumerate() {
        for v in gated.channel_mut(c) {
            *v = (*v as f64 * g) as f32;
        }
    }
    let pooled = VoxelVolume::concat_channels(&[&channel_pool(&gated, PoolKind::Avg), &channel_pool(&gated, PoolKind::Max)])?;
    let spatial_mask = conv3d(&p.spatial_conv, &pooled)?;
    Ok(AttentionMaps {
        channel_mask,
        spatial_mask,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutput {
    pub v_refwarp: VoxelVolume,
    /// Bottleneck output before attention modulation.
    pub v_out: VoxelVolume,
    pub maps: AttentionMaps,
}

/// `V_refwarp = σ(M_s) ⊙ (M_c ⊙ V_out) + V_warp`.
pub fn refine(v_warp: &VoxelVolume, p: &RefineNetParams) -> Result<RefineOutput> {
    let s = relu(&conv3d(&p.squeeze, v_warp)?);
    let b = relu(&conv3d(&p.body, &s)?);
    let v_out = conv3d(&p.expand, &b)?;
    let maps = cbam3d(&v_out, p)?;
    let gate: Vec<f64> = maps.spatial_mask.data().iter().map(|&x| sigmoid(x as f64)).collect();
    let mut v_refwarp = v_warp.clone();
    for (c, mc) in maps.channel_mask.iter().enumerate() {
        let src = v_out.channel(c);
        for ((dst, o), g) in v_refwarp.channel_mut(c).iter_mut().zip(src).zip(&gate) {
            *dst = (*dst as f64 + g * mc * *o as f64) as f32;
        }
    }
    Ok(RefineOutput { v_refwarp, v_out, maps })
}

/// `V_SA = V_refwarp + V_curr`.
pub fn fuse(v_refwarp: &VoxelVolume, v_curr: &VoxelVolume) -> Result<VoxelVolume> {
    v_refwarp.add(v_curr)
}

// ---------------------------------------------------------------- auxiliary heads

/// Binary occupancy from the spatial attention logits.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupiedHead {
    pub mlp: [LinearLayer; 2],
}

impl OccupiedHead {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            mlp: [LinearLayer::zeros(hidden, 1, Activation::Relu), LinearLayer::zeros(1, hidden, Activation::None)],
        }
    }

    pub fn uniform(hidden: usize, bound: f32, rng: &mut impl Rng) -> Self {
        Self {
            mlp: [
                LinearLayer::uniform(hidden, 1, Activation::Relu, bound, rng),
                LinearLayer::uniform(1, hidden, Activation::None, bound, rng),
            ],
        }
    }

    pub fn save(&self, s: &mut ParamStore) {
        s.put_linear("streamagg.occ_head.0", &self.mlp[0]);
        s.put_linear("streamagg.occ_head.1", &self.mlp[1]);
    }

    pub fn load(s: &ParamStore, hidden: usize) -> Result<Self> {
        Ok(Self {
            mlp: [
                s.linear("streamagg.occ_head.0", hidden, 1, Activation::Relu)?,
                s.linear("streamagg.occ_head.1", 1, hidden, Activation::None)?,
            ],
        })
    }
}

/// Upsamples M_s to `full_dims` and decodes a per-cell occupancy logit.
pub fn occupied_head(maps: &AttentionMaps, head: &OccupiedHead, full_dims: [usize; 3]) -> Result<VoxelVolume> {
    let up = resample_trilinear(&maps.spatial_mask, full_dims, EdgeMode::Clamp);
    pointwise_mlp(&up, &head.mlp)
}

/// Class logits of the current frame predicted from the warped history alone.
pub fn forecast_head(v_refwarp: &VoxelVolume, head: &DecoderHead) -> Result<VoxelVolume> {
    head.forward(v_refwarp)
}

// ---------------------------------------------------------------- recurrence

#[derive(Debug, Clone, PartialEq)]
pub struct StreamAggParams {
    pub refine: RefineNetParams,
    pub occ_head: OccupiedHead,
    pub fore_head: DecoderHead,
}

impl StreamAggParams {
    pub fn save(&self, s: &mut ParamStore) {
        self.refine.save(s);
        self.occ_head.save(s);
        self.fore_head.save(s, "streamagg.fore_head");
    }

    pub fn load(s: &ParamStore, d: RefineDims, occ_hidden: usize, fore: DecoderDims) -> Result<Self> {
        Ok(Self {
            refine: RefineNetParams::load(s, d)?,
            occ_head: OccupiedHead::load(s, occ_hidden)?,
            fore_head: DecoderHead::load(s, "streamagg.fore_head", fore)?,
        })
    }
}

/// State carried from one frame to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    /// V_fin of the previous frame at half resolution (zeros at cold start).
    pub prev_volume: VoxelVolume,
    /// `None` at cold start.
    pub prev_pose: Option<EgoPose>,
    pub prev_queries: Vec<InstanceQuery>,
    /// Timestep of the last consumed frame; `None` at cold start.
    pub timestep: Option<u64>,
}

impl StreamState {
    pub fn cold_start(channels: usize, half_dims: [usize; 3]) -> Self {
        Self {
            prev_volume: VoxelVolume::zeros(channels, half_dims),
            prev_pose: None,
            prev_queries: Vec::new(),
            timestep: None,
        }
    }

    pub fn is_cold(&self) -> bool {
        self.timestep.is_none()
    }

    /// Past-ego → current-ego motion; identity at cold start.
    pub fn motion_to(&self, curr: &EgoPose) -> RigidTransform {
        match &self.prev_pose {
            Some(p) => relative_transform(p, curr),
            None => RigidTransform::identity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamAggOutput {
    pub v_warp: VoxelVolume,
    pub refined: RefineOutput,
    pub v_sa: VoxelVolume,
}

/// Warp → refine → fuse for one frame. At cold start there is no history, so
/// V_SA is V_curr itself (the refinement still runs on the zero volume to feed
/// the auxiliary heads).
pub fn stream_aggregate(state: &StreamState, v_curr: &VoxelVolume, pose: &EgoPose, spec_half: &GridSpec, p: &RefineNetParams) -> Result<StreamAggOutput> {
    let transform = state.motion_to(pose);
    let v_warp = warp_volume(&state.prev_volume, &transform, spec_half)?;
    let refined = refine(&v_warp, p)?;
    let v_sa = if state.is_cold() {
        if !v_curr.same_shape(&refined.v_refwarp) {
            return Err(Error::contract("fuse: current volume shape differs from state"));
        }
        v_curr.clone()
    } else {
        fuse(&refined.v_refwarp, v_curr)?
    };
    Ok(StreamAggOutput { v_warp, refined, v_sa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridFrame, Vec3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(dims: [usize; 3]) -> GridSpec {
        GridSpec::new(dims, [-4.0, -4.0, -1.0], 0.4, GridFrame::Ego).unwrap()
    }

    fn random_volume(c: usize, dims: [usize; 3], rng: &mut impl Rng) -> VoxelVolume {
        VoxelVolume::from_fn(c, dims, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    const FD: FpnDims = FpnDims {
        c_init: 3,
        c1: 4,
        c2: 5,
        c: 8,
    };

    #[test]
    fn fpn_branch_selection_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = FpnParams::uniform(FD, 0.3, &mut rng);
        p.compress = Conv3dLayer::zeros(FD.c1, FD.c_init + FD.c1 + FD.c2, 1, 1, 0);
        for c in 0..FD.c1 {
            p.compress.set_weight(c, FD.c_init + c, 0, 0, 0, 1.0);
        }
        let v = random_volume(3, [8, 8, 4], &mut rng);
        let out = fpn3d(&v, &p).unwrap();
        let v1 = conv3d(&p.down1, &v).unwrap();
        assert_eq!(out, v1);
        assert!(fpn3d(&random_volume(3, [6, 8, 4], &mut rng), &p).is_err());
    }

    #[test]
    fn fpn_preserves_constants_under_averaging_weights() {
        let mut p = FpnParams::zeros(FD);
        p.down1.kernel.fill(1.0 / (8.0 * FD.c_init as f32));
        p.down2.kernel.fill(1.0 / (8.0 * FD.c1 as f32));
        p.compress.kernel.fill(1.0 / 12.0);
        let v = VoxelVolume::filled(3, [8, 12, 4], 2.5);
        let out = fpn3d(&v, &p).unwrap();
        assert_eq!(out.dims(), [4, 6, 2]);
        assert!(out.data().iter().all(|&x| (x - 2.5).abs() < 1e-5));
    }

    #[test]
    fn warp_identity_and_one_cell_shift() {
        let spec = grid([10, 8, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_volume(3, spec.dims, &mut rng);
        assert_eq!(warp_volume(&v, &RigidTransform::identity(), &spec).unwrap(), v);
        // past point p maps to p − 0.4 x̂: content moves one cell toward −x
        let t = RigidTransform::from_translation(-0.4, 0.0, 0.0);
        let w = warp_volume(&v, &t, &spec).unwrap();
        for c in 0..3 {
            for i in 0..10 {
                for j in 0..8 {
                    for k in 0..4 {
                        let want = if i + 1 < 10 { v.get(c, i + 1, j, k) } else { 0.0 };
                        assert_eq!(w.get(c, i, j, k).to_bits(), want.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn warp_half_cell_on_ramp() {
        let spec = grid([12, 10, 6]);
        let ramp = VoxelVolume::from_fn(1, spec.dims, |_, i, j, k| {
            let p = spec.cell_center(i, j, k);
            (p.x + 2.0 * p.y - 0.5 * p.z) as f32
        });
        let t = RigidTransform::from_translation(0.2, 0.0, 0.0);
        let w = warp_volume(&ramp, &t, &spec).unwrap();
        for i in 1..11 {
            for j in 0..10 {
                for k in 0..6 {
                    let p = spec.cell_center(i, j, k) - Vec3::new(0.2, 0.0, 0.0);
                    let want = p.x + 2.0 * p.y - 0.5 * p.z;
                    assert!((w.get(0, i, j, k) as f64 - want).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn warp_rotation_by_quarter_turn_is_exact_permutation() {
        let spec = GridSpec::new([6, 6, 2], [-1.2, -1.2, 0.0], 0.4, GridFrame::Ego).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_volume(2, spec.dims, &mut rng);
        let w = warp_volume(&v, &RigidTransform::rot_z(std::f64::consts::FRAC_PI_2), &spec).unwrap();
        // current (x, y) pulls past Rᵀ(x, y) = (y, −x)
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(w.get(1, i, j, 1), v.get(1, j, 5 - i, 1));
            }
        }
    }

    const RD: RefineDims = RefineDims { c: 8, reduction: 4 };

    #[test]
    fn cbam_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = RefineNetParams::zeros(RD);
        p.spatial_conv.bias = vec![0.75];
        let m = cbam3d(&random_volume(8, [4, 4, 2], &mut rng), &p).unwrap();
        assert!(m.channel_mask.iter().all(|&g| g == 0.5));
        assert!(m.spatial_mask.data().iter().all(|&s| s == 0.75));
    }

    #[test]
    fn cbam_single_channel_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = VoxelVolume::from_fn(1, [3, 3, 3], |_, _, _, _| rng.random_range(0.0..2.0));
        let mut p = RefineNetParams::zeros(RefineDims { c: 4, reduction: 4 });
        p.cbam_mlp = [LinearLayer::zeros(1, 1, Activation::Relu), LinearLayer::zeros(1, 1, Activation::None)];
        p.cbam_mlp[0].weight.set(0, 0, 1.0);
        p.cbam_mlp[1].weight.set(0, 0, 1.0);
        let m = cbam3d(&v, &p).unwrap();
        let avg = spatial_pool(&v, PoolKind::Avg)[0] as f64;
        let max = spatial_pool(&v, PoolKind::Max)[0] as f64;
        assert!((m.channel_mask[0] - sigmoid(avg + max)).abs() < 1e-12);
    }

    #[test]
    fn refine_residual_identity_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = random_volume(8, [4, 4, 4], &mut rng);
        let out = refine(&v, &RefineNetParams::zeros(RD)).unwrap();
        assert_eq!(out.v_refwarp, v);
        for _ in 0..10 {
            let p = RefineNetParams::uniform(RD, 0.5, &mut rng);
            let v = random_volume(8, [4, 4, 4], &mut rng);
            let out = refine(&v, &p).unwrap();
            assert_eq!(out.v_refwarp.dims(), v.dims());
            assert!(out.maps.channel_mask.iter().all(|&g| g > 0.0 && g < 1.0));
            for n in 0..v.data().len() {
                let d = (out.v_refwarp.data()[n] as f64 - v.data()[n] as f64).abs();
                assert!(d <= (out.v_out.data()[n] as f64).abs());
            }
        }
    }

    #[test]
    fn fuse_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_volume(2, [2, 2, 2], &mut rng);
        let b = random_volume(2, [2, 2, 2], &mut rng);
        assert_eq!(fuse(&a, &b).unwrap(), fuse(&b, &a).unwrap());
        assert_eq!(fuse(&a, &VoxelVolume::zeros(2, [2, 2, 2])).unwrap(), a);
        assert_eq!(fuse(&VoxelVolume::zeros(2, [2, 2, 2]), &b).unwrap(), b);
        assert_eq!(fuse(&a, &VoxelVolume::zeros(3, [2, 2, 2])).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn cold_start_passes_current_volume_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = grid([4, 4, 2]);
        let p = RefineNetParams::uniform(RD, 0.5, &mut rng);
        let v_curr = random_volume(8, spec.dims, &mut rng);
        let st = StreamState::cold_start(8, spec.dims);
        let pose = EgoPose {
            timestep: 0,
            ego_to_global: RigidTransform::from_translation(5.0, 1.0, 0.0),
        };
        let out = stream_aggregate(&st, &v_curr, &pose, &spec, &p).unwrap();
        assert_eq!(out.v_sa, v_curr);
    }

    #[test]
    fn occupied_head_is_monotone_in_spatial_logit() {
        let mut head = OccupiedHead::zeros(4);
        for h in 0..4 {
            head.mlp[0].weight.set(h, 0, 0.5 + h as f32);
            head.mlp[0].bias[h] = 0.1;
            head.mlp[1].weight.set(0, h, 1.0);
        }
        let mut maps = AttentionMaps {
            channel_mask: vec![0.5],
            spatial_mask: VoxelVolume::filled(1, [2, 2, 2], 0.3),
        };
        let base = occupied_head(&maps, &head, [4, 4, 4]).unwrap();
        maps.spatial_mask.set(0, 1, 1, 1, 2.0);
        let up = occupied_head(&maps, &head, [4, 4, 4]).unwrap();
        assert!(up.get(0, 3, 3, 3) > base.get(0, 3, 3, 3));
        let zero = occupied_head(&maps, &OccupiedHead::zeros(4), [4, 4, 4]).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_round_trip_through_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fd = DecoderDims {
            in_channels: 8,
            deconv_channels: 4,
            hidden: 4,
            classes: 18,
        };
        let p = StreamAggParams {
            refine: RefineNetParams::uniform(RD, 0.05, &mut rng),
            occ_head: OccupiedHead::uniform(8, 0.05, &mut rng),
            fore_head: DecoderHead::uniform(fd, 0.05, &mut rng),
        };
        let mut s = ParamStore::new();
        p.save(&mut s);
        assert_eq!(StreamAggParams::load(&s, RD, 8, fd).unwrap(), p);
        let f = FpnParams::uniform(FD, 0.05, &mut rng);
        f.save(&mut s);
        assert_eq!(FpnParams::load(&s, FD).unwrap(), f);
        let err = RefineNetParams::load(&ParamStore::new(), RD).unwrap_err();
        assert!(err.to_string().contains("streamagg.squeeze"));
    }
}
