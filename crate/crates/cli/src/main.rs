//! `voxstream`: scene generation, streaming runs, ablation sweeps, metric
//! evaluation of dumped grids, and a quick self-check.
//!
//! Exit codes: 0 success, 1 input error, 2 configuration error, 3 contract
//! violation.

mod checks;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voxstream_core::decoder_metrics::{ray_counts, ConfusionMatrix, RayCounts, RaySet};
use voxstream_core::pipeline::{
    ablation_sweep, ray_origin, run_sequence, timings_text, Ablation, ModelDims, ModelParams, PipelineConfig,
    PipelineSettings, SequenceResult, StructuredWeights,
};
use voxstream_core::query_agg::{DetectorMode, ReplayDetections};
use voxstream_core::scene_harness::{
    export_scene, frame_file_name, generate_scene, load_scene_frames, SceneConfig, SceneFrame,
};
use voxstream_core::{Error, GridFrame, GridSpec, MetricReport, Result, SemanticGrid};

#[derive(Parser)]
#[command(name = "voxstream", version, about = "Streaming 3D occupancy engine")]
struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene directory.
    GenScene {
        /// Scene description (TOML); the built-in scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a scene through the model and report metrics.
    Run(RunArgs),
    /// Run base, stream-only and full wiring on the same scene.
    Sweep(RunArgs),
    /// Score predicted grid dumps against ground-truth dumps.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth dumps, or an exported scene directory.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        rayiou: bool,
        /// Honor visibility masks stored in the ground-truth dumps.
        #[arg(long)]
        mask: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a weight file.
    GenWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hand-built interpretable weights instead of seeded uniform ones.
        #[arg(long)]
        structured: bool,
    },
    /// Run the built-in property checks.
    SelfCheck,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Exported scene directory or scene description (TOML).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Scene seed when `--scene` is a description.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight manifest.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use seeded-uniform untrained weights.
    #[arg(long, conflicts_with = "weights")]
    random_weights: bool,
    /// Use the hand-built interpretable weights.
    #[arg(long, conflicts_with_all = ["weights", "random_weights"])]
    structured_weights: bool,
    #[arg(long, default_value_t = 0)]
    weight_seed: u64,
    /// base | stream | full.
    #[arg(long)]
    ablation: Option<String>,
    /// Run settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay detections instead of oracle-noise queries.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    detector_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Write predicted grids to `<out>/frames`.
    #[arg(long)]
    dump_grids: bool,
    #[arg(long)]
    rayiou: bool,
    #[arg(long)]
    json: bool,
}

/// Everything a run needs, checked at launch.
struct RunManifest {
    frames: Vec<SceneFrame>,
    config: PipelineConfig,
    params: ModelParams,
    out: PathBuf,
    dump_grids: bool,
    json: bool,
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".voxstream-write-test");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

fn load_scene_arg(scene: Option<&Path>, seed: u64) -> Result<(SceneConfig, Vec<SceneFrame>)> {
    match scene {
        Some(p) if p.is_dir() => {
            let (cfg, _, frames) = load_scene_frames(p)?;
            Ok((cfg, frames))
        }
        Some(p) => {
            if !p.exists() {
                return Err(Error::input(format!("scene {} does not exist", p.display())));
            }
            let cfg = SceneConfig::load(p)?;
            let frames = generate_scene(&cfg, seed)?;
            Ok((cfg, frames))
        }
        None => {
            let cfg = SceneConfig::default_scene();
            let frames = generate_scene(&cfg, seed)?;
            Ok((cfg, frames))
        }
    }
}

impl RunManifest {
    fn from_args(a: &RunArgs) -> Result<Self> {
        let settings = match &a.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                PipelineSettings::parse(&text)?
            }
            None => PipelineSettings::default(),
        };
        let dims = settings.dims;
        let params = if let Some(w) = &a.weights {
            if !w.exists() {
                return Err(Error::config(format!("weight file {} does not exist", w.display())));
            }
            ModelParams::load(w, dims)?
        } else if a.random_weights {
            ModelParams::random(dims, a.weight_seed)?
        } else if a.structured_weights {
            ModelParams::structured(dims, &StructuredWeights::default())?
        } else {
            return Err(Error::config(
                "no weights: pass --weights FILE, --random-weights or --structured-weights",
            ));
        };
        let (scene_cfg, frames) = load_scene_arg(a.scene.as_deref(), a.seed)?;
        let mut config = settings.into_config(scene_cfg.grid);
        if let Some(name) = &a.ablation {
            config = config.with_ablation(Ablation::parse(name)?);
        }
        if let Some(s) = a.detector_seed {
            config.detector_seed = s;
        }
        if let Some(r) = &a.replay {
            config.detector = DetectorMode::Replay {
                detections: ReplayDetections::load(r)?,
                source: r.clone(),
            };
        }
        config.rayiou |= a.rayiou;
        config.validate(&params)?;
        ensure_writable(&a.out)?;
        Ok(Self {
            frames,
            config,
            params,
            out: a.out.clone(),
            dump_grids: a.dump_grids,
            json: a.json,
        })
    }
}

fn write_result(dir: &Path, r: &SequenceResult, dump_grids: bool, json: bool) -> Result<()> {
    ensure_writable(dir)?;
    write(&dir.join("report.txt"), r.report.to_text())?;
    write(&dir.join("timings.txt"), timings_text(&r.mean_timings))?;
    if json {
        let s = serde_json::to_string_pretty(&r.report).expect("report serializes");
        write(&dir.join("report.json"), s + "\n")?;
    }
    if dump_grids {
        let fdir = dir.join("frames");
        std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
        for o in &r.outputs {
            o.labels.save(&fdir.join(frame_file_name(o.timestep)))?;
        }
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let m = RunManifest::from_args(a)?;
    let r = run_sequence(&m.frames, &m.config, &m.params)?;
    write_result(&m.out, &r, m.dump_grids, m.json)?;
    print!("{}", r.report.to_text());
    Ok(())
}

fn cmd_sweep(a: &RunArgs) -> Result<()> {
    let m = RunManifest::from_args(a)?;
    for (ab, r) in ablation_sweep(&m.frames, &m.config, &m.params)? {
        write_result(&m.out.join(ab.name()), &r, m.dump_grids, m.json)?;
        println!(
            "{} stages {} miou {}",
            ab.name(),
            ab.flags().stages().len(),
            r.report.miou.map_or("nan".into(), |v| format!("{v:.6}"))
        );
    }
    Ok(())
}

fn grid_files(dir: &Path) -> Result<BTreeSet<String>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeSet::new();
    for e in rd {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.ends_with(".grid") {
            out.insert(name);
        }
    }
    Ok(out)
}

/// `dir/frames` when `dir` is a scene or run directory, else `dir`.
fn frames_dir(dir: &Path) -> PathBuf {
    let f = dir.join("frames");
    if f.is_dir() {
        f
    } else {
        dir.to_path_buf()
    }
}

/// Lattice for ray casting: from the scene description next to the dumps when
/// present, otherwise centered on the ego in x/y with the ego at the bottom
/// tenth in z.
fn eval_spec(gt_root: &Path, sample: &SemanticGrid) -> Result<GridSpec> {
    let desc = gt_root.join("scene.toml");
    if desc.is_file() {
        return Ok(SceneConfig::load(&desc)?.grid);
    }
    let r = sample.resolution as f64;
    let d = sample.dims;
    GridSpec::new(
        d,
        [-(d[0] as f64) * r / 2.0, -(d[1] as f64) * r / 2.0, -(d[2] as f64) * r / 10.0],
        r,
        GridFrame::Ego,
    )
}

fn cmd_eval(pred: &Path, gt: &Path, rayiou: bool, mask: bool, json: bool, out: Option<&Path>) -> Result<()> {
    let (pd, gd) = (frames_dir(pred), frames_dir(gt));
    let (pf, gf) = (grid_files(&pd)?, grid_files(&gd)?);
    let missing_pred: Vec<&String> = gf.difference(&pf).collect();
    let missing_gt: Vec<&String> = pf.difference(&gf).collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        return Err(Error::input(format!(
            "frame sets differ; missing in pred: {missing_pred:?}; missing in gt: {missing_gt:?}"
        )));
    }
    if gf.is_empty() {
        return Err(Error::input(format!("no .grid files in {}", gd.display())));
    }
    let mut total = ConfusionMatrix::default();
    let mut total_rays = RayCounts::default();
    let mut per_frame = String::new();
    let mut spec = None;
    let rays = RaySet::default();
    for name in &gf {
        let p = SemanticGrid::load(&pd.join(name))?;
        let g = SemanticGrid::load(&gd.join(name))?;
        if p.dims != g.dims {
            return Err(Error::input(format!("{name}: pred dims {:?} differ from gt {:?}", p.dims, g.dims)));
        }
        let mut cm = ConfusionMatrix::default();
        cm.add(&p, &g, mask)?;
        total.merge(&cm);
        let s = cm.summary();
        let stem = name.trim_end_matches(".grid");
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6}"));
        per_frame.push_str(&format!("{stem}.miou {}\n{stem}.geometry_iou {}\n", fmt(s.miou), fmt(s.geometry_iou)));
        if rayiou {
            let sp = match spec {
                Some(s) => s,
                None => *spec.insert(eval_spec(gt, &g)?),
            };
            let rc = ray_counts(&p, &g, &sp, &ray_origin(&sp), &rays)?;
            per_frame.push_str(&format!("{stem}.rayiou.mean {:.6}\n", rc.scores().mean));
            total_rays.merge(&rc);
        }
    }
    let report = MetricReport::from_parts(gf.len(), total.summary(), rayiou.then(|| total_rays.scores()), None);
    let text = report.to_text() + &per_frame;
    if let Some(o) = out {
        ensure_writable(o)?;
        write(&o.join("report.txt"), &text)?;
        if json {
            let s = serde_json::to_string_pretty(&report).expect("report serializes");
            write(&o.join("report.json"), s + "\n")?;
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{text}");
    }
    Ok(())
}

fn cmd_gen_scene(scene: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let (cfg, frames) = load_scene_arg(scene, seed)?;
    ensure_writable(out)?;
    export_scene(out, &cfg, seed, &frames)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn cmd_gen_weights(out: &Path, seed: u64, structured: bool) -> Result<()> {
    let dims = ModelDims::default();
    let p = if structured {
        ModelParams::structured(dims, &StructuredWeights::default())?
    } else {
        ModelParams::random(dims, seed)?
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_writable(parent)?;
    }
    p.save(out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Cmd::GenScene { scene, seed, out } => cmd_gen_scene(scene.as_deref(), *seed, out),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Eval {
            pred,
            gt,
            rayiou,
            mask,
            json,
            out,
        } => cmd_eval(pred, gt, *rayiou, *mask, *json, out.as_deref()),
        Cmd::GenWeights { out, seed, structured } => cmd_gen_weights(out, *seed, *structured),
        Cmd::SelfCheck => {
            let results = checks::run_all();
            let mut ok = true;
            for (name, pass, detail) in &results {
                println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
                ok &= pass;
            }
            if ok {
                Ok(())
            } else {
                Err(Error::contract("self-check failed"))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
