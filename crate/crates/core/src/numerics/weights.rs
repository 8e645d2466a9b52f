//! Manifest-plus-blob weight files.
//!
//! A weight set is two files next to each other:
//!
//! * `NAME.manifest`: UTF-8 text. First line `voxstream-weights 1`; then one
//!   line per parameter block, `<name> <role> <d0>x<d1>x...`, in blob order.
//!   Blank lines and lines starting with `#` are ignored.
//! * `NAME.bin`: the blocks' values as little-endian IEEE-754 f32, concatenated
//!   in manifest order with no padding.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::layers::{Activation, Conv3dLayer, DenseMatrix, LinearLayer};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "voxstream-weights 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
    Kernel,
    Scale,
    Shift,
    Embedding,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Weight => "weight",
            Role::Bias => "bias",
            Role::Kernel => "kernel",
            Role::Scale => "scale",
            Role::Shift => "shift",
            Role::Embedding => "embedding",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "weight" => Role::Weight,
            "bias" => Role::Bias,
            "kernel" => Role::Kernel,
            "scale" => Role::Scale,
            "shift" => Role::Shift,
            "embedding" => Role::Embedding,
            other => return Err(format!("unknown role `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub role: Role,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named parameter blocks in insertion (= file) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    blocks: std::collections::HashMap<String, ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, role: Role, shape: Vec<usize>, data: Vec<f32>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if !self.blocks.contains_key(&name) {
            self.names.push(name.clone());
        }
        self.blocks.insert(name, ParamBlock { role, shape, data });
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.get(name)
    }

    /// Fetches a block, checking role and shape.
    pub fn get(&self, name: &str, role: Role, shape: &[usize]) -> Result<&[f32]> {
        let b = self
            .blocks
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter block `{name}`")))?;
        if b.role != role {
            return Err(Error::config(format!(
                "parameter block `{name}` has role {} (expected {role})",
                b.role
            )));
        }
        if b.shape != shape {
            return Err(Error::config(format!(
                "parameter block `{name}` has shape {:?} (expected {shape:?})",
                b.shape
            )));
        }
        Ok(&b.data)
    }

    pub fn put_linear(&mut self, prefix: &str, l: &LinearLayer) {
        self.insert(
            format!("{prefix}.weight"),
            Role::Weight,
            vec![l.weight.rows, l.weight.cols],
            l.weight.data.clone(),
        );
        self.insert(format!("{prefix}.bias"), Role::Bias, vec![l.bias.len()], l.bias.clone());
    }

    pub fn linear(&self, prefix: &str, out: usize, inp: usize, activation: Activation) -> Result<LinearLayer> {
        let w = self.get(&format!("{prefix}.weight"), Role::Weight, &[out, inp])?;
        let b = self.get(&format!("{prefix}.bias"), Role::Bias, &[out])?;
        LinearLayer::new(DenseMatrix::from_data(out, inp, w.to_vec())?, b.to_vec(), activation)
    }

    pub fn put_matrix(&mut self, name: &str, m: &DenseMatrix) {
        self.insert(name, Role::Weight, vec![m.rows, m.cols], m.data.clone());
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<DenseMatrix> {
        DenseMatrix::from_data(rows, cols, self.get(name, Role::Weight, &[rows, cols])?.to_vec())
    }

    pub fn put_conv(&mut self, prefix: &str, c: &Conv3dLayer) {
        let k = c.kernel_size;
        self.insert(
            format!("{prefix}.kernel"),
            Role::Kernel,
            vec![c.c_out, c.c_in, k, k, k],
            c.kernel.clone(),
        );
        self.insert(format!("{prefix}.bias"), Role::Bias, vec![c.c_out], c.bias.clone());
    }

    /// Loads a conv block; stride and padding are architecture, not file content.
    pub fn conv(
        &self,
        prefix: &str,
        c_out: usize,
        c_in: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Conv3dLayer> {
        let k = kernel_size;
        let kern = self.get(&format!("{prefix}.kernel"), Role::Kernel, &[c_out, c_in, k, k, k])?;
        let b = self.get(&format!("{prefix}.bias"), Role::Bias, &[c_out])?;
        Conv3dLayer::new(c_out, c_in, k, kern.to_vec(), b.to_vec(), stride, padding)
    }

    pub fn put_vector(&mut self, name: &str, role: Role, v: &[f32]) {
        self.insert(name, role, vec![v.len()], v.to_vec());
    }

    pub fn vector(&self, name: &str, role: Role, len: usize) -> Result<Vec<f32>> {
        Ok(self.get(name, role, &[len])?.to_vec())
    }

    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MANIFEST_HEADER);
        s.push('\n');
        for name in &self.names {
            let b = &self.blocks[name];
            let shape: Vec<String> = b.shape.iter().map(|d| d.to_string()).collect();
            s.push_str(&format!("{name} {} {}\n", b.role, shape.join("x")));
        }
        s
    }

    pub fn blob_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for name in &self.names {
            for v in &self.blocks[name].data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Writes `<stem>.manifest` and `<stem>.bin`; returns the manifest path.
    pub fn save(&self, manifest_path: &Path) -> Result<PathBuf> {
        let blob = blob_path(manifest_path);
        fs::write(manifest_path, self.manifest_text()).map_err(|e| Error::io(manifest_path, e))?;
        fs::write(&blob, self.blob_bytes()).map_err(|e| Error::io(&blob, e))?;
        Ok(manifest_path.to_path_buf())
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let blob_file = blob_path(manifest_path);
        let blob = fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;
        Self::parse(&text, &blob, manifest_path)
    }

    pub fn parse(manifest: &str, blob: &[u8], path: &Path) -> Result<Self> {
        let line_err = |line: usize, message: String| Error::InputLine {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = manifest.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
            _ => return Err(line_err(1, format!("expected header `{MANIFEST_HEADER}`"))),
        }
        if blob.len() % 4 != 0 {
            return Err(Error::input(format!(
                "weight blob length {} is not a multiple of 4",
                blob.len()
            )));
        }
        let mut store = ParamStore::new();
        let mut offset = 0usize;
        for (n, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(line_err(n + 1, "expected `<name> <role> <shape>`".into()));
            }
            let role: Role = fields[1].parse().map_err(|e| line_err(n + 1, e))?;
            let shape: Vec<usize> = fields[2]
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| line_err(n + 1, format!("bad shape `{}`: {e}", fields[2])))?;
            let count: usize = shape.iter().product();
            let end = offset + count * 4;
            if end > blob.len() {
                return Err(line_err(
                    n + 1,
                    format!("block `{}` runs past the end of the blob", fields[0]),
                ));
            }
            let data = blob[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            offset = end;
            if store.blocks.contains_key(fields[0]) {
                return Err(line_err(n + 1, format!("duplicate block `{}`", fields[0])));
            }
            store.insert(fields[0], role, shape, data);
        }
        if offset != blob.len() {
            return Err(Error::input(format!(
                "weight blob has {} trailing bytes",
                blob.len() - offset
            )));
        }
        Ok(store)
    }
}

pub fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}
