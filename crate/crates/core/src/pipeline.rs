//! The per-frame recurrence: lift → FPN → stream aggregation → query
//! aggregation → decode, threading [`StreamState`] between frames.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{DYNAMIC_CLASSES, NUM_CLASSES};
use crate::decoder_metrics::{
    decode, losses, ray_counts, ConfusionMatrix, DecoderDims, DecoderHead, Losses, MetricReport, RayCounts, RaySet,
    SemanticGrid,
};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};
use crate::numerics::{ParamStore, VoxelVolume};
use crate::query_agg::{
    build_voxel_query_index, detector_source, dqa, ffn_residual, select_queries, v2q_deform_attn, DeformAttnParams,
    DetectorMode, DetectorParams, DqaParams, OracleNoise, SelectMode, SelectionConfig,
};
use crate::scene_harness::{lift_splat, SceneFrame, LIFT_CHANNELS};
use crate::stream_agg::{
    forecast_head, fpn3d, occupied_head, stream_aggregate, FpnDims, FpnParams, OccupiedHead, RefineDims,
    RefineNetParams, StreamAggParams, StreamState,
};

/// Which optional stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageFlags {
    pub enable_stream_agg: bool,
    pub enable_query_agg: bool,
    pub enable_aux_heads: bool,
}

impl Default for StageFlags {
    fn default() -> Self {
        Ablation::Full.flags()
    }
}

/// The three wiring variants compared in the ablation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Single-frame baseline.
    Base,
    /// Stream aggregation only.
    Stream,
    /// Stream and query aggregation.
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Base, Ablation::Stream, Ablation::Full];

    pub fn flags(self) -> StageFlags {
        let (s, q) = match self {
            Ablation::Base => (false, false),
            Ablation::Stream => (true, false),
            Ablation::Full => (true, true),
        };
        StageFlags {
            enable_stream_agg: s,
            enable_query_agg: q,
            enable_aux_heads: s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Base => "base",
            Ablation::Stream => "stream",
            Ablation::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Ablation::Base),
            "stream" => Ok(Ablation::Stream),
            "full" => Ok(Ablation::Full),
            _ => Err(Error::config(format!("unknown ablation '{s}' (base|stream|full)"))),
        }
    }
}

impl StageFlags {
    /// Names of the stages that execute, in order.
    pub fn stages(&self) -> Vec<&'static str> {
        let mut s = vec!["lift", "fpn"];
        if self.enable_stream_agg {
            s.extend(["warp_refine_fuse"]);
            if self.enable_aux_heads {
                s.push("aux_heads");
            }
        }
        if self.enable_query_agg {
            s.extend(["detector", "v2q", "select", "index", "dqa", "ffn"]);
        }
        s.push("decode");
        s
    }
}

/// Layer widths of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub channels: usize,
    pub lift_channels: usize,
    pub fpn_c1: usize,
    pub fpn_c2: usize,
    pub reduction: usize,
    pub occ_hidden: usize,
    pub decoder_channels: usize,
    pub decoder_hidden: usize,
    pub heads: usize,
    pub points: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            channels: 64,
            lift_channels: LIFT_CHANNELS,
            fpn_c1: 32,
            fpn_c2: 32,
            reduction: 4,
            occ_hidden: 8,
            decoder_channels: NUM_CLASSES + 1,
            decoder_hidden: NUM_CLASSES + 1,
            heads: 8,
            points: 4,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if c == 0 || c % 4 != 0 {
            return Err(Error::config(format!("channels = {c} must be a positive multiple of 4")));
        }
        if self.heads == 0 || c % self.heads != 0 {
            return Err(Error::config(format!("channels = {c} must be divisible by heads = {}", self.heads)));
        }
        if self.lift_channels != LIFT_CHANNELS {
            return Err(Error::config(format!("lift_channels must be {LIFT_CHANNELS}")));
        }
        let v = [self.fpn_c1, self.fpn_c2, self.reduction, self.occ_hidden, self.decoder_channels, self.decoder_hidden, self.points];
        if v.contains(&0) {
            return Err(Error::config("model dims must all be positive"));
        }
        Ok(())
    }

    fn fpn(&self) -> FpnDims {
        FpnDims {
            c_init: self.lift_channels,
            c1: self.fpn_c1,
            c2: self.fpn_c2,
            c: self.channels,
        }
    }

    fn refine(&self) -> RefineDims {
        RefineDims {
            c: self.channels,
            reduction: self.reduction,
        }
    }

    fn decoder(&self) -> DecoderDims {
        DecoderDims {
            in_channels: self.channels,
            deconv_channels: self.decoder_channels,
            hidden: self.decoder_hidden,
            classes: NUM_CLASSES + 1,
        }
    }
}

/// Every learned block of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub fpn: FpnParams,
    pub stream: StreamAggParams,
    pub detector: DetectorParams,
    pub v2q: DeformAttnParams,
    pub dqa: DqaParams,
    pub decoder: DecoderHead,
}

/// Bound of the untrained-weights initialization.
pub const RANDOM_WEIGHT_BOUND: f32 = 0.05;

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let r = dims.refine();
        Ok(Self {
            dims,
            fpn: FpnParams::zeros(dims.fpn()),
            stream: StreamAggParams {
                refine: RefineNetParams::zeros(r),
                occ_head: OccupiedHead::zeros(dims.occ_hidden),
                fore_head: DecoderHead::zeros(dims.decoder()),
            },
            detector: DetectorParams::zeros(dims.channels),
            v2q: DeformAttnParams::zeros(dims.channels, dims.heads, dims.points),
            dqa: DqaParams::zeros(dims.channels),
            decoder: DecoderHead::zeros(dims.decoder()),
        })
    }

    /// Untrained-weights mode: every block uniform in ±[`RANDOM_WEIGHT_BOUND`],
    /// each from its own seeded stream.
    pub fn random(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let b = RANDOM_WEIGHT_BOUND;
        let rng = |block: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(block);
            r
        };
        let c = dims.channels;
        Ok(Self {
            dims,
            fpn: FpnParams::uniform(dims.fpn(), b, &mut rng(0)),
            stream: StreamAggParams {
                refine: RefineNetParams::uniform(dims.refine(), b, &mut rng(1)),
                occ_head: OccupiedHead::uniform(dims.occ_hidden, b, &mut rng(2)),
                fore_head: DecoderHead::uniform(dims.decoder(), b, &mut rng(3)),
            },
            detector: DetectorParams::uniform(c, b, &mut rng(4)),
            v2q: DeformAttnParams::uniform(c, dims.heads, dims.points, b, &mut rng(5)),
            dqa: DqaParams::uniform(c, b, &mut rng(6)),
            decoder: DecoderHead::uniform(dims.decoder(), b, &mut rng(7)),
        })
    }

    pub fn to_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        self.fpn.save(&mut s);
        self.stream.save(&mut s);
        self.detector.save(&mut s);
        self.v2q.save(&mut s);
        self.dqa.save(&mut s);
        self.decoder.save(&mut s, "decoder");
        s
    }

    pub fn from_store(s: &ParamStore, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let c = dims.channels;
        Ok(Self {
            dims,
            fpn: FpnParams::load(s, dims.fpn())?,
            stream: StreamAggParams::load(s, dims.refine(), dims.occ_hidden, dims.decoder())?,
            detector: DetectorParams::load(s, c)?,
            v2q: DeformAttnParams::load(s, c, dims.heads, dims.points)?,
            dqa: DqaParams::load(s, c)?,
            decoder: DecoderHead::load(s, "decoder", dims.decoder())?,
        })
    }

    /// Writes `<path>` (manifest) and its `.bin` blob.
    pub fn save(&self, manifest: &Path) -> Result<()> {
        self.to_store().save(manifest).map(|_| ())
    }

    pub fn load(manifest: &Path, dims: ModelDims) -> Result<Self> {
        Self::from_store(&ParamStore::load(manifest)?, dims)
    }

    /// Hand-built interpretable weights (see [`StructuredWeights`]).
    pub fn structured(dims: ModelDims, w: &StructuredWeights) -> Result<Self> {
        w.build(dims)
    }
}

/// Hand-constructed weights under which each stage does the job its
/// architecture is meant for, so stage ablations are meaningful without
/// training:
///
/// * the FPN copies lifted class evidence into channels `0..17` (as hit
///   counts per half cell) and writes a constant `anchor` into the last channel;
/// * RefineNet cancels the warped history of the dynamic-class channels and of
///   the anchor channel (σ(M_s)·M_c = ¼ exactly, so an expand gain of −4 removes
///   the positive part), keeping static evidence and thereby accumulating it;
/// * the detector embeds a query as `query_gain` on its class channel; DQA
///   averages the covering queries' values and adds them with gate ½;
/// * the FFN is a no-op and its output norm is tuned so that, thanks to the
///   large anchor, per-cell standardization is close to the identity;
/// * the decoder reads class channels as logits against a constant empty logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuredWeights {
    pub anchor: f32,
    pub query_gain: f32,
    pub empty_logit: f32,
    /// Fraction of static history retained (1 = pure accumulation).
    pub static_keep: f32,
}

impl Default for StructuredWeights {
    fn default() -> Self {
        Self {
            anchor: 1000.0,
            query_gain: 4.0,
            empty_logit: 0.5,
            static_keep: 1.0,
        }
    }
}

impl StructuredWeights {
    fn build(&self, dims: ModelDims) -> Result<ModelParams> {
        let mut m = ModelParams::zeros(dims)?;
        let c = dims.channels;
        let anchor_ch = c - 1;
        if c < NUM_CLASSES + 1 || dims.decoder_channels < NUM_CLASSES + 1 || dims.decoder_hidden < NUM_CLASSES + 1 {
            return Err(Error::config("structured weights need channels and decoder widths of at least 18"));
        }
        // FPN: mean-pooled lift → hit count per half cell
        for k in 0..NUM_CLASSES {
            m.fpn.compress.set_weight(k, k, 0, 0, 0, 8.0);
        }
        m.fpn.compress.bias[anchor_ch] = self.anchor;

        // RefineNet: cancel dynamic history and the anchor, optionally decay statics
        let mut cancel: Vec<(usize, f32)> = DYNAMIC_CLASSES.iter().map(|&k| (k as usize - 1, -4.0)).collect();
        cancel.push((anchor_ch, -4.0));
        if self.static_keep != 1.0 {
            let gain = -4.0 * (1.0 - self.static_keep);
            for k in 1..=NUM_CLASSES as u8 {
                if !DYNAMIC_CLASSES.contains(&k) {
                    cancel.push((k as usize - 1, gain));
                }
            }
        }
        let bottleneck = dims.refine().bottleneck();
        if cancel.len() > bottleneck {
            return Err(Error::config(format!(
                "structured refine needs {} bottleneck channels, have {bottleneck}",
                cancel.len()
            )));
        }
        let r = &mut m.stream.refine;
        for (n, &(ch, gain)) in cancel.iter().enumerate() {
            r.squeeze.set_weight(n, ch, 0, 0, 0, 1.0);
            r.body.set_weight(n, n, 1, 1, 1, 1.0);
            r.expand.set_weight(ch, n, 0, 0, 0, gain);
        }

        // detector embedding and DQA injection
        for k in 1..=NUM_CLASSES {
            m.detector.class_embed.set(k, k - 1, self.query_gain);
        }
        for k in 0..c {
            m.dqa.w_kv.weight.set(k, k, 1.0);
        }
        // FFN output norm ≈ identity around the anchored cell statistics
        let a = self.anchor as f64;
        let n = c as f64;
        let sigma0 = (a * a / n - (a / n) * (a / n)).sqrt();
        m.dqa.ffn.norm_out.scale = vec![sigma0 as f32; c];
        m.dqa.ffn.norm_out.shift = vec![(a / n) as f32; c];

        // decoder: class channels → logits, constant → empty logit
        for head in [&mut m.decoder, &mut m.stream.fore_head] {
            for k in 0..NUM_CLASSES {
                for t in 0..8 {
                    head.deconv.set_weight(k, k, t >> 2, (t >> 1) & 1, t & 1, 1.0);
                }
                head.mlp[0].weight.set(k, k, 1.0);
                head.mlp[1].weight.set(k + 1, k, 1.0);
            }
            head.deconv.bias[NUM_CLASSES] = 1.0;
            head.mlp[0].weight.set(NUM_CLASSES, NUM_CLASSES, 1.0);
            head.mlp[1].weight.set(0, NUM_CLASSES, self.empty_logit);
        }
        Ok(m)
    }
}

fn default_budget() -> usize {
    900
}

fn default_eps() -> f64 {
    1e-5
}

/// Run-time configuration of the recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Full-resolution lattice.
    pub spec: GridSpec,
    pub dims: ModelDims,
    pub query_budget: usize,
    pub detector: DetectorMode,
    pub detector_seed: u64,
    pub selection: SelectionConfig,
    pub flags: StageFlags,
    pub norm_eps: f64,
    /// Also score RayIoU in [`run_sequence`].
    pub rayiou: bool,
}

/// Serializable subset of [`PipelineConfig`] read from run-config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSettings {
    #[serde(default)]
    pub dims: ModelDims,
    #[serde(default = "default_budget")]
    pub query_budget: usize,
    #[serde(default)]
    pub oracle_noise: OracleNoise,
    #[serde(default)]
    pub detector_seed: u64,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub flags: StageFlags,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
    #[serde(default)]
    pub rayiou: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            dims: ModelDims::default(),
            query_budget: default_budget(),
            oracle_noise: OracleNoise::default(),
            detector_seed: 0,
            selection: SelectionConfig::default(),
            flags: StageFlags::default(),
            norm_eps: default_eps(),
            rayiou: false,
        }
    }
}

impl PipelineSettings {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("run config: {e}")))
    }

    pub fn into_config(self, spec: GridSpec) -> PipelineConfig {
        PipelineConfig {
            spec,
            dims: self.dims,
            query_budget: self.query_budget,
            detector: DetectorMode::OracleNoise(self.oracle_noise),
            detector_seed: self.detector_seed,
            selection: self.selection,
            flags: self.flags,
            norm_eps: self.norm_eps,
            rayiou: self.rayiou,
        }
    }
}

impl PipelineConfig {
    pub fn new(spec: GridSpec) -> Self {
        PipelineSettings::default().into_config(spec)
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.flags = a.flags();
        self
    }

    pub fn half_spec(&self) -> Result<GridSpec> {
        self.spec.half()
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        self.dims.validate()?;
        if self.dims != params.dims {
            return Err(Error::config("model dims of config and weights differ"));
        }
        self.spec.validate().map_err(|e| Error::config(format!("grid: {e}")))?;
        if self.spec.dims.iter().any(|d| d % 4 != 0) {
            return Err(Error::config(format!("grid dims {:?} must be divisible by 4", self.spec.dims)));
        }
        self.selection.validate()?;
        if let DetectorMode::OracleNoise(n) = &self.detector {
            n.validate()?;
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::config("norm_eps must be positive"));
        }
        Ok(())
    }
}

/// Auxiliary head outputs (present when stream aggregation and aux heads run).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxOutputs {
    /// Full-resolution binary occupancy logits.
    pub occupied: Option<VoxelVolume>,
    /// Full-resolution class logits predicted from history alone.
    pub forecast: Option<VoxelVolume>,
}

/// Wall-clock milliseconds per executed stage, in execution order.
pub type StageTimings = Vec<(&'static str, f64)>;

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub timestep: u64,
    pub labels: SemanticGrid,
    pub logits: VoxelVolume,
    pub aux: AuxOutputs,
    pub selected_query_count: usize,
    pub timings: StageTimings,
    /// Half-resolution final volume carried to the next frame.
    pub v_fin: VoxelVolume,
}

/// Equality of everything computed; timings are ignored.
impl PartialEq for FrameOutput {
    fn eq(&self, o: &Self) -> bool {
        self.timestep == o.timestep
            && self.labels == o.labels
            && self.logits == o.logits
            && self.aux == o.aux
            && self.selected_query_count == o.selected_query_count
            && self.v_fin == o.v_fin
    }
}

struct Clock {
    timings: StageTimings,
    t: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            t: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push((stage, (now - self.t).as_secs_f64() * 1e3));
        self.t = now;
    }
}

/// One frame of the recurrence. `state` is not modified; the successor state
/// is returned.
pub fn step(state: &StreamState, frame: &SceneFrame, config: &PipelineConfig, params: &ModelParams) -> Result<(FrameOutput, StreamState)> {
    config.validate(params)?;
    if let Some(t) = state.timestep {
        if frame.timestep != t + 1 {
            return Err(Error::contract(format!(
                "timestep discontinuity: state at {t}, frame at {}",
                frame.timestep
            )));
        }
    }
    let spec_half = config.half_spec()?;
    if state.prev_volume.dims() != spec_half.dims || state.prev_volume.channels() != config.dims.channels {
        return Err(Error::contract("stream state volume does not match the configured lattice"));
    }
    let flags = config.flags;
    let mut clock = Clock::new();

    let v_init = lift_splat(frame, &config.spec);
    clock.lap("lift");
    let v_curr = fpn3d(&v_init, &params.fpn)?;
    clock.lap("fpn");

    let mut aux = AuxOutputs::default();
    let v_sa = if flags.enable_stream_agg {
        let sa = stream_aggregate(state, &v_curr, &frame.ego, &spec_half, &params.stream.refine)?;
        clock.lap("warp_refine_fuse");
        if flags.enable_aux_heads {
            aux.occupied = Some(occupied_head(&sa.refined.maps, &params.stream.occ_head, config.spec.dims)?);
            aux.forecast = Some(forecast_head(&sa.refined.v_refwarp, &params.stream.fore_head)?);
            clock.lap("aux_heads");
        }
        sa.v_sa
    } else {
        v_curr
    };

    let (v_fin, selected) = if flags.enable_query_agg {
        let queries = detector_source(
            frame.timestep,
            &frame.dynamic_boxes,
            &config.detector,
            &params.detector,
            config.detector_seed,
            config.query_budget,
        )?;
        clock.lap("detector");
        let queries = v2q_deform_attn(&queries, &v_sa, &params.v2q, &spec_half)?;
        clock.lap("v2q");
        let selected = select_queries(&queries, None, SelectMode::Infer, &config.selection)?;
        clock.lap("select");
        let index = build_voxel_query_index(&selected, &spec_half);
        clock.lap("index");
        let v_dqa = dqa(&v_sa, &selected, &index, &params.dqa)?;
        clock.lap("dqa");
        let v_fin = ffn_residual(&v_dqa, &params.dqa.ffn, config.norm_eps)?;
        clock.lap("ffn");
        (v_fin, selected)
    } else {
        (v_sa, Vec::new())
    };

    let (logits, labels) = decode(&v_fin, &params.decoder, config.spec.resolution as f32)?;
    clock.lap("decode");

    let next = StreamState {
        prev_volume: v_fin.clone(),
        prev_pose: Some(frame.ego),
        prev_queries: selected.clone(),
        timestep: Some(frame.timestep),
    };
    Ok((
        FrameOutput {
            timestep: frame.timestep,
            labels,
            logits,
            aux,
            selected_query_count: selected.len(),
            timings: clock.timings,
            v_fin,
        },
        next,
    ))
}

/// Outputs and aggregate metrics of a whole sequence.
#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub outputs: Vec<FrameOutput>,
    pub report: MetricReport,
    /// Mean milliseconds per stage over frames.
    pub mean_timings: StageTimings,
}

/// Ego origin in lattice-frame metric coordinates.
pub fn ray_origin(spec: &GridSpec) -> Vec3 {
    spec.ego_to_grid().apply(&Vec3::zeros())
}

/// Folds [`step`] over `frames` from cold start and scores every frame
/// against its ground truth.
pub fn run_sequence(frames: &[SceneFrame], config: &PipelineConfig, params: &ModelParams) -> Result<SequenceResult> {
    config.validate(params)?;
    let spec_half = config.half_spec()?;
    let mut state = StreamState::cold_start(config.dims.channels, spec_half.dims);
    let mut outputs = Vec::with_capacity(frames.len());
    let mut cm = ConfusionMatrix::default();
    let mut rays = RayCounts::default();
    let ray_set = RaySet::default();
    let origin = ray_origin(&config.spec);
    let mut loss_sum: Option<(f64, f64, f64)> = None;
    for f in frames {
        let (out, next) = step(&state, f, config, params)?;
        cm.add(&out.labels, &f.gt_grid, false)?;
        if config.rayiou {
            rays.merge(&ray_counts(&out.labels, &f.gt_grid, &config.spec, &origin, &ray_set)?);
        }
        if let (Some(occ), Some(fore)) = (&out.aux.occupied, &out.aux.forecast) {
            let l = losses(&out.logits, fore, occ, &f.gt_grid)?;
            let s = loss_sum.get_or_insert((0.0, 0.0, 0.0));
            s.0 += l.occ;
            s.1 += l.fore;
            s.2 += l.bin;
        }
        outputs.push(out);
        state = next;
    }
    let n = frames.len();
    let report = if n == 0 {
        MetricReport::default()
    } else {
        let losses = loss_sum.map(|(o, f, b)| Losses::combine(o / n as f64, f / n as f64, b / n as f64));
        MetricReport::from_parts(n, cm.summary(), config.rayiou.then(|| rays.scores()), losses)
    };
    Ok(SequenceResult {
        mean_timings: mean_timings(&outputs),
        outputs,
        report,
    })
}

fn mean_timings(outputs: &[FrameOutput]) -> StageTimings {
    let Some(first) = outputs.first() else { return Vec::new() };
    let mut acc: StageTimings = first.timings.iter().map(|&(s, _)| (s, 0.0)).collect();
    for o in outputs {
        for (a, (_, t)) in acc.iter_mut().zip(&o.timings) {
            a.1 += t;
        }
    }
    for a in &mut acc {
        a.1 /= outputs.len() as f64;
    }
    acc
}

/// Runs the three ablation variants on the same frames.
pub fn ablation_sweep(frames: &[SceneFrame], config: &PipelineConfig, params: &ModelParams) -> Result<Vec<(Ablation, SequenceResult)>> {
    Ablation::ALL
        .iter()
        .map(|&a| Ok((a, run_sequence(frames, &config.clone().with_ablation(a), params)?)))
        .collect()
}

/// `stage value` lines (milliseconds, three decimals).
pub fn timings_text(t: &StageTimings) -> String {
    t.iter().map(|(s, ms)| format!("{s} {ms:.3}\n")).collect()
}
