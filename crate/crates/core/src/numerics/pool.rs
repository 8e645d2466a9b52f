use serde::{Deserialize, Serialize};

use super::volume::VoxelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Avg,
    Max,
}

/// Per-cell reduction across channels, producing a single-channel volume.
pub fn channel_pool(vol: &VoxelVolume, kind: PoolKind) -> VoxelVolume {
    let cells = vol.num_cells();
    let c = vol.channels();
    let mut out = VoxelVolume::zeros(1, vol.dims());
    match kind {
        PoolKind::Avg => {
            let mut acc = vec![0.0f64; cells];
            for ch in 0..c {
                for (a, v) in acc.iter_mut().zip(vol.channel(ch)) {
                    *a += *v as f64;
                }
            }
            for (o, a) in out.data_mut().iter_mut().zip(acc) {
                *o = (a / c as f64) as f32;
            }
        }
        PoolKind::Max => {
            out.data_mut().copy_from_slice(vol.channel(0));
            for ch in 1..c {
                for (o, v) in out.data_mut().iter_mut().zip(vol.channel(ch)) {
                    *o = o.max(*v);
                }
            }
        }
    }
    out
}

/// Per-channel reduction over all cells.
pub fn spatial_pool(vol: &VoxelVolume, kind: PoolKind) -> Vec<f32> {
    (0..vol.channels())
        .map(|ch| {
            let s = vol.channel(ch);
            match kind {
                PoolKind::Avg => (s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64) as f32,
                PoolKind::Max => s.iter().copied().fold(f32::NEG_INFINITY, f32::max),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_channel_unchanged() {
        let vol = VoxelVolume::from_fn(1, [3, 2, 2], |_, i, j, k| (i + 2 * j) as f32 - k as f32);
        assert_eq!(channel_pool(&vol, PoolKind::Avg), vol);
        assert_eq!(channel_pool(&vol, PoolKind::Max), vol);
    }

    #[test]
    fn two_constant_channels() {
        let vol = VoxelVolume::from_fn(2, [2, 2, 2], |c, _, _, _| if c == 0 { 1.0 } else { 3.0 });
        assert!(channel_pool(&vol, PoolKind::Avg).data().iter().all(|&v| v == 2.0));
        assert!(channel_pool(&vol, PoolKind::Max).data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn avg_le_max_on_random_volumes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let c = rng.random_range(1..6);
            let vol = VoxelVolume::from_fn(c, [3, 3, 3], |_, _, _, _| rng.random_range(-5.0..5.0));
            let a = channel_pool(&vol, PoolKind::Avg);
            let m = channel_pool(&vol, PoolKind::Max);
            assert!(a.data().iter().zip(m.data()).all(|(a, m)| a <= m));
        }
    }

    #[test]
    fn spatial_pool_cases() {
        let vol = VoxelVolume::filled(2, [3, 4, 2], -1.5);
        assert_eq!(spatial_pool(&vol, PoolKind::Avg), vec![-1.5, -1.5]);
        assert_eq!(spatial_pool(&vol, PoolKind::Max), vec![-1.5, -1.5]);

        let mut hot = VoxelVolume::zeros(1, [4, 4, 4]);
        hot.set(0, 2, 1, 3, 5.0);
        assert_eq!(spatial_pool(&hot, PoolKind::Max), vec![5.0]);

        // Linear ramp over x: mean equals the value at the midpoint coordinate.
        let ramp = VoxelVolume::from_fn(1, [8, 2, 2], |_, i, _, _| 2.0 * i as f32 + 1.0);
        let mid = 2.0 * 3.5 + 1.0;
        assert!((spatial_pool(&ramp, PoolKind::Avg)[0] - mid).abs() < 1e-6);
    }
}
