//! Fast property checks run by `voxstream self-check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxstream_core::decoder_metrics::cross_entropy;
use voxstream_core::numerics::{finite_difference_check, sigmoid, softmax};
use voxstream_core::query_agg::{build_voxel_query_index, select_queries, SelectMode, SelectionConfig};
use voxstream_core::stream_agg::warp_volume;
use voxstream_core::{Box3, DynamicBox, GridFrame, GridSpec, InstanceQuery, RigidTransform, SemanticGrid, Vec3, VoxelVolume};

pub type Check = (&'static str, bool, String);

fn warp_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = GridSpec::new([16, 12, 8], [-3.2, -2.4, -0.8], 0.4, GridFrame::Ego).unwrap();
    let v = VoxelVolume::from_fn(4, spec.dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let same = warp_volume(&v, &RigidTransform::identity(), &spec).map(|w| w == v).unwrap_or(false);
    let shifted = warp_volume(&v, &RigidTransform::from_translation(0.4, 0.0, 0.0), &spec).unwrap();
    let shift_ok = (1..16).all(|i| (0..12).all(|j| (0..8).all(|k| shifted.get(0, i, j, k) == v.get(0, i - 1, j, k))))
        && (0..12).all(|j| (0..8).all(|k| shifted.get(0, 0, j, k) == 0.0));
    ("warp identity and one-cell shift", same && shift_ok, format!("identity {same}, shift {shift_ok}"))
}

fn softmax_normalized() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..12);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        worst = worst.max((softmax(&v, 1.0).iter().sum::<f64>() - 1.0).abs());
    }
    ("softmax sums to one", worst < 1e-6, format!("max deviation {worst:.2e}"))
}

fn uniform_loss() -> Check {
    let logits = VoxelVolume::zeros(18, [4, 4, 4]);
    let gt = SemanticGrid::empty([4, 4, 4], 0.4);
    let l = cross_entropy(&logits, &gt).unwrap();
    let d = (l - 18f64.ln()).abs();
    ("uniform logits give ln 18", d < 1e-6, format!("loss {l:.9}"))
}

fn selection_examples() -> Check {
    let cfg = SelectionConfig::default();
    let q = |class: u8, conf: f64, b: Box3| InstanceQuery {
        feature: vec![],
        bbox: b,
        confidence: conf,
        class_id: class,
        track_id: 0,
    };
    let gt = |class: u8, b: Box3| DynamicBox {
        class_id: class,
        bbox: b,
        velocity: Vec3::zeros(),
        track_id: 0,
    };
    let car = Box3::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let low = select_queries(&[q(5, 0.2, car)], Some(&[gt(5, car)]), SelectMode::Train, &cfg).unwrap().is_empty();
    // a 4/3 m shift along the length gives BEV IoU (4 - s) / (4 + s) = 0.5
    let shifted = Box3::new([4.0 / 3.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let large = select_queries(&[q(5, 0.4, shifted)], Some(&[gt(5, car)]), SelectMode::Train, &cfg).unwrap().len() == 1;
    let ped = Box3::new([0.0, 0.0, 0.0], [0.8, 0.8, 1.7], 0.0);
    let ped_q = Box3::new([0.3, 0.2, 0.0], [0.8, 0.8, 1.7], 0.0);
    let score = cfg.small_score(&ped_q, &ped);
    let small = select_queries(&[q(8, 0.9, ped_q)], Some(&[gt(8, ped)]), SelectMode::Train, &cfg).unwrap().len() == 1;
    (
        "selection thresholds",
        low && large && small && score < 1.5,
        format!("reject low conf {low}, accept IoU 0.5 {large}, accept small score {score:.3} {small}"),
    )
}

fn sigmoid_derivative() -> Check {
    let mut worst = 0.0f64;
    for n in 0..50 {
        let x = -6.0 + 0.25 * n as f64;
        let d = finite_difference_check(|v| sigmoid(v[0]), |v| vec![sigmoid(v[0]) * (1.0 - sigmoid(v[0]))], &[x], 1e-4);
        worst = worst.max(d);
    }
    ("sigmoid derivative matches finite differences", worst < 1e-4, format!("max deviation {worst:.2e}"))
}

fn index_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = GridSpec::new([20, 20, 8], [-8.0, -8.0, -1.6], 0.8, GridFrame::Ego).unwrap();
    let queries: Vec<InstanceQuery> = (0..20)
        .map(|t| InstanceQuery {
            feature: vec![],
            bbox: Box3::new(
                [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-1.0..4.0)],
                [rng.random_range(0.3..5.0), rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)],
                rng.random_range(-3.2..3.2),
            ),
            confidence: 1.0,
            class_id: 5,
            track_id: t,
        })
        .collect();
    let index = build_voxel_query_index(&queries, &spec);
    let mut ok = true;
    for cell in 0..spec.num_cells() {
        let [i, j, k] = spec.unflatten(cell);
        let c = spec.cell_center(i, j, k);
        let want: Vec<usize> = (0..queries.len()).filter(|&q| queries[q].bbox.contains(&c)).collect();
        ok &= index.get(cell) == want.as_slice();
    }
    ("voxel-query index matches brute force", ok, format!("{} indexed cells", index.len()))
}

pub fn run_all() -> Vec<Check> {
    vec![
        warp_identity(),
        softmax_normalized(),
        uniform_loss(),
        selection_examples(),
        sigmoid_derivative(),
        index_oracle(),
    ]
}
