//! Per-cell semantic label grids and their binary dump format.

use std::io::Write;
use std::path::Path;

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"SGRD";
const HEADER_LEN: usize = 4 + 12 + 4 + 1 + 1;

/// One class id per cell (x-major, like [`crate::GridSpec::flat_index`]);
/// 0 is empty space. The optional mask marks visible cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    pub dims: [usize; 3],
    pub resolution: f32,
    pub labels: Vec<u8>,
    pub mask: Option<Vec<bool>>,
}

impl SemanticGrid {
    pub fn empty(dims: [usize; 3], resolution: f32) -> Self {
        Self {
            dims,
            resolution,
            labels: vec![0; dims[0] * dims[1] * dims[2]],
            mask: None,
        }
    }

    pub fn from_labels(dims: [usize; 3], resolution: f32, labels: Vec<u8>) -> Result<Self> {
        let g = Self {
            dims,
            resolution,
            labels,
            mask: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_cells();
        if self.labels.len() != n {
            return Err(Error::contract(format!(
                "grid has {} labels for dims {:?}",
                self.labels.len(),
                self.dims
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l as usize > NUM_CLASSES) {
            return Err(Error::contract(format!("label {bad} out of range 0..={NUM_CLASSES}")));
        }
        if let Some(m) = &self.mask {
            if m.len() != n {
                return Err(Error::contract("mask length differs from label count"));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, label: u8) {
        let n = self.index(i, j, k);
        self.labels[n] = label;
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Serialized form: magic `SGRD`, dims as 3 × u32 LE, resolution f32 LE,
    /// class count u8, mask flag u8, then one label byte per cell, then (if
    /// flagged) one 0/1 byte per cell.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.num_cells();
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * n);
        out.extend_from_slice(GRID_MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        out.push(NUM_CLASSES as u8);
        out.push(self.mask.is_some() as u8);
        out.extend_from_slice(&self.labels);
        if let Some(m) = &self.mask {
            out.extend(m.iter().map(|&b| b as u8));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != GRID_MAGIC {
            return Err(Error::input("not a semantic grid dump (bad magic or truncated header)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let dims = [u32_at(4), u32_at(8), u32_at(12)];
        let resolution = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let classes = bytes[20] as usize;
        let has_mask = match bytes[21] {
            0 => false,
            1 => true,
            f => return Err(Error::input(format!("bad mask flag {f}"))),
        };
        if classes != NUM_CLASSES {
            return Err(Error::input(format!("grid dump has {classes} classes, expected {NUM_CLASSES}")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::input(format!("bad grid dims {dims:?}")))?;
        let want = HEADER_LEN + n * (1 + has_mask as usize);
        if bytes.len() != want {
            return Err(Error::input(format!(
                "grid dump is {} bytes, header implies {want}",
                bytes.len()
            )));
        }
        let labels = bytes[HEADER_LEN..HEADER_LEN + n].to_vec();
        let mask = if has_mask {
            let raw = &bytes[HEADER_LEN + n..];
            if raw.iter().any(|&b| b > 1) {
                return Err(Error::input("mask bytes must be 0 or 1"));
            }
            Some(raw.iter().map(|&b| b == 1).collect())
        } else {
            None
        };
        let g = Self {
            dims,
            resolution,
            labels,
            mask,
        };
        g.validate().map_err(|e| Error::input(e.to_string()))?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Input(m) => Error::input(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
