//! Trilinear sampling and resampling of dense volumes.
//!
//! Points are continuous cell coordinates: the center of cell `(i, j, k)` is at
//! `(i + 0.5, j + 0.5, k + 0.5)`, matching [`crate::geometry::GridSpec`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::volume::VoxelVolume;

/// Interpolation stencil of one point: up to 8 `(flat cell, weight)` pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    pub cells: [usize; 8],
    pub weights: [f64; 8],
    pub len: usize,
}

impl Stencil {
    /// Zero-padded stencil: corners outside the lattice are dropped (they read as zero).
    pub fn zero_padded(dims: [usize; 3], p: [f64; 3]) -> Stencil {
        let mut base = [0isize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let u = p[a] - 0.5;
            if !u.is_finite() {
                return Stencil::default();
            }
            let f = u.floor();
            // Far outside: nothing to read.
            if f < -1.0 || f > dims[a] as f64 {
                return Stencil::default();
            }
            base[a] = f as isize;
            frac[a] = u - f;
        }
        let mut s = Stencil::default();
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let hi = (corner >> (2 - a)) & 1 == 1;
                let wa = if hi { frac[a] } else { 1.0 - frac[a] };
                let c = base[a] + hi as isize;
                if wa == 0.0 || c < 0 || c >= dims[a] as isize {
                    inside = false;
                    break;
                }
                w *= wa;
                idx[a] = c as usize;
            }
            if inside {
                s.cells[s.len] = (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2];
                s.weights[s.len] = w;
                s.len += 1;
            }
        }
        s
    }

    /// Blended value of one channel slice.
    #[inline]
    pub fn eval(&self, channel: &[f32]) -> f32 {
        let mut acc = 0.0f64;
        for n in 0..self.len {
            acc += self.weights[n] * channel[self.cells[n]] as f64;
        }
        acc as f32
    }
}

/// Trilinear sample of every channel at each point; outside points give zeros.
pub fn trilinear_sample(vol: &VoxelVolume, points: &[[f64; 3]]) -> Vec<Vec<f32>> {
    points
        .iter()
        .map(|p| {
            let s = Stencil::zero_padded(vol.dims(), *p);
            (0..vol.channels()).map(|c| s.eval(vol.channel(c))).collect()
        })
        .collect()
}

/// Samples `vol` at one continuous point into `out` (length = channels).
pub fn sample_point(vol: &VoxelVolume, p: [f64; 3], out: &mut [f32]) {
    let s = Stencil::zero_padded(vol.dims(), p);
    for (c, o) in out.iter_mut().enumerate() {
        *o = s.eval(vol.channel(c));
    }
}

/// Gathers a new volume of `out_dims` whose cell `n` is `vol` sampled at `points[n]`.
pub fn gather_volume(vol: &VoxelVolume, points: &[[f64; 3]], out_dims: [usize; 3]) -> VoxelVolume {
    let cells = out_dims[0] * out_dims[1] * out_dims[2];
    assert_eq!(points.len(), cells, "one sample point per output cell");
    let stencils: Vec<Stencil> = points
        .par_iter()
        .map(|p| Stencil::zero_padded(vol.dims(), *p))
        .collect();
    let mut out = VoxelVolume::zeros(vol.channels(), out_dims);
    out.data_mut()
        .par_chunks_mut(cells)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = vol.channel(c);
            for (d, s) in dst.iter_mut().zip(&stencils) {
                *d = s.eval(src);
            }
        });
    out
}

/// Boundary rule for [`resample_trilinear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeMode {
    /// Replicate border cells (constants are preserved).
    Clamp,
    /// Read zeros beyond the border.
    Zero,
}

struct AxisTap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

fn axis_taps(n_in: usize, n_out: usize, mode: EdgeMode) -> Vec<AxisTap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            match mode {
                EdgeMode::Clamp => {
                    let s = src.clamp(0.0, (n_in - 1) as f64);
                    let lo = s.floor() as usize;
                    let hi = (lo + 1).min(n_in - 1);
                    let f = s - lo as f64;
                    AxisTap {
                        lo,
                        hi,
                        w_lo: 1.0 - f,
                        w_hi: if hi == lo { 0.0 } else { f },
                    }
                }
                EdgeMode::Zero => {
                    let f0 = src.floor();
                    let f = src - f0;
                    let lo = f0 as isize;
                    let ok = |c: isize| c >= 0 && c < n_in as isize;
                    AxisTap {
                        lo: lo.max(0) as usize,
                        hi: ((lo + 1).max(0) as usize).min(n_in - 1),
                        w_lo: if ok(lo) { 1.0 - f } else { 0.0 },
                        w_hi: if ok(lo + 1) { f } else { 0.0 },
                    }
                }
            }
        })
        .collect()
}

/// Trilinear resize of every channel to `out_dims` (half-pixel aligned centers).
pub fn resample_trilinear(vol: &VoxelVolume, out_dims: [usize; 3], mode: EdgeMode) -> VoxelVolume {
    let in_dims = vol.dims();
    if in_dims == out_dims {
        return vol.clone();
    }
    let tx = axis_taps(in_dims[0], out_dims[0], mode);
    let ty = axis_taps(in_dims[1], out_dims[1], mode);
    let tz = axis_taps(in_dims[2], out_dims[2], mode);
    let cells = out_dims[0] * out_dims[1] * out_dims[2];
    let (iy, iz) = (in_dims[1], in_dims[2]);
    let mut out = VoxelVolume::zeros(vol.channels(), out_dims);
    out.data_mut()
        .par_chunks_mut(cells)
        .enumerate()
        .for_each(|(c, dst)| {
            let src = vol.channel(c);
            let at = |x: usize, y: usize, z: usize| src[(x * iy + y) * iz + z] as f64;
            let mut n = 0;
            for ax in &tx {
                for ay in &ty {
                    for az in &tz {
                        let mut acc = 0.0;
                        for (x, wx) in [(ax.lo, ax.w_lo), (ax.hi, ax.w_hi)] {
                            if wx == 0.0 {
                                continue;
                            }
                            for (y, wy) in [(ay.lo, ay.w_lo), (ay.hi, ay.w_hi)] {
                                if wy == 0.0 {
                                    continue;
                                }
                                for (z, wz) in [(az.lo, az.w_lo), (az.hi, az.w_hi)] {
                                    if wz == 0.0 {
                                        continue;
                                    }
                                    acc += wx * wy * wz * at(x, y, z);
                                }
                            }
                        }
                        dst[n] = acc as f32;
                        n += 1;
                    }
                }
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3]) -> VoxelVolume {
        VoxelVolume::from_fn(1, dims, |_, i, j, k| {
            (i as f32 + 0.5) + 2.0 * (j as f32 + 0.5) + 3.0 * (k as f32 + 0.5)
        })
    }

    #[test]
    fn cell_center_sampling_is_exact() {
        let vol = VoxelVolume::from_fn(3, [4, 5, 3], |c, i, j, k| {
            ((c * 31 + i * 7 + j * 3 + k) as f32).sin() * 1e3
        });
        for i in 0..4 {
            for j in 0..5 {
                for k in 0..3 {
                    let got = &trilinear_sample(&vol, &[[i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5]])[0];
                    for c in 0..3 {
                        assert_eq!(got[c].to_bits(), vol.get(c, i, j, k).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let vol = ramp([6, 6, 6]);
        for p in [[0.5, 0.5, 0.5], [1.3, 2.7, 4.1], [5.5, 0.9, 3.33], [2.0, 2.0, 2.0]] {
            let got = trilinear_sample(&vol, &[p])[0][0] as f64;
            let want = p[0] + 2.0 * p[1] + 3.0 * p[2];
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn far_outside_is_zero() {
        let vol = VoxelVolume::filled(2, [3, 3, 3], 7.0);
        assert_eq!(trilinear_sample(&vol, &[[-10.0, -10.0, -10.0]])[0], vec![0.0, 0.0]);
        assert_eq!(trilinear_sample(&vol, &[[f64::NAN, 1.0, 1.0]])[0], vec![0.0, 0.0]);
        // Half a cell beyond the last center: blended with the zero exterior.
        let edge = trilinear_sample(&vol, &[[3.0, 1.5, 1.5]])[0][0];
        assert!((edge - 3.5).abs() < 1e-6);
    }

    #[test]
    fn resample_clamp_preserves_constants() {
        let vol = VoxelVolume::filled(2, [4, 4, 2], 3.25);
        for dims in [[8, 8, 4], [2, 2, 1], [5, 3, 7]] {
            let r = resample_trilinear(&vol, dims, EdgeMode::Clamp);
            assert!(r.data().iter().all(|v| (*v - 3.25).abs() < 1e-6));
        }
    }

    #[test]
    fn downsample_by_two_averages_blocks() {
        let vol = VoxelVolume::from_fn(1, [4, 4, 4], |_, i, j, k| (i * 16 + j * 4 + k) as f32);
        let r = resample_trilinear(&vol, [2, 2, 2], EdgeMode::Clamp);
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    want += vol.get(0, i, j, k) / 8.0;
                }
            }
        }
        assert!((r.get(0, 0, 0, 0) - want).abs() < 1e-6);
    }

    #[test]
    fn resample_zero_mode_attenuates_border() {
        let vol = VoxelVolume::filled(1, [2, 2, 2], 1.0);
        let r = resample_trilinear(&vol, [4, 4, 4], EdgeMode::Zero);
        assert!((r.get(0, 0, 0, 0) - 0.75f32.powi(3)).abs() < 1e-6);
        assert!((r.get(0, 1, 1, 1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gather_matches_pointwise_sampling() {
        let vol = ramp([5, 4, 3]);
        let pts: Vec<[f64; 3]> = (0..60).map(|n| [n as f64 * 0.09, 1.7, (n % 5) as f64 * 0.7]).collect();
        let g = gather_volume(&vol, &pts, [3, 4, 5]);
        let s = trilinear_sample(&vol, &pts);
        for (n, v) in s.iter().enumerate() {
            assert_eq!(g.data()[n], v[0]);
        }
    }

    proptest! {
        #[test]
        fn sampling_is_linear_in_volume(
            a in prop::collection::vec(-10.0f32..10.0, 2 * 27),
            b in prop::collection::vec(-10.0f32..10.0, 2 * 27),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            p in prop::array::uniform3(-0.5f64..3.5),
        ) {
            let va = VoxelVolume::from_data(2, [3, 3, 3], a).unwrap();
            let vb = VoxelVolume::from_data(2, [3, 3, 3], b).unwrap();
            let mix = va.axpby(alpha, &vb, beta).unwrap();
            let sa = &trilinear_sample(&va, &[p])[0];
            let sb = &trilinear_sample(&vb, &[p])[0];
            let sm = &trilinear_sample(&mix, &[p])[0];
            for c in 0..2 {
                let want = alpha * sa[c] as f64 + beta * sb[c] as f64;
                prop_assert!((sm[c] as f64 - want).abs() < 1e-5 * (1.0 + want.abs()));
            }
        }
    }
}
