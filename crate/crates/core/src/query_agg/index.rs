//! Cell → query lists for the cells whose centers fall inside query boxes.

use std::collections::BTreeMap;

use super::query::InstanceQuery;
use crate::geometry::GridSpec;

/// Sparse map from flat half-resolution cell index to the ascending indices of
/// the queries covering that cell. Absent cells have no queries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoxelQueryIndex {
    pub cells: BTreeMap<usize, Vec<usize>>,
}

impl VoxelQueryIndex {
    pub fn get(&self, cell: usize) -> &[usize] {
        self.cells.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Cell `i` lists query `j` iff `i`'s center (in ego coordinates) lies inside
/// `j`'s oriented box, boundary included.
pub fn build_voxel_query_index(queries: &[InstanceQuery], spec_half: &GridSpec) -> VoxelQueryIndex {
    let to_grid = spec_half.ego_to_grid();
    let to_ego = to_grid.inverse();
    let mut index = VoxelQueryIndex::default();
    for (j, q) in queries.iter().enumerate() {
        // lattice bounding range of the box corners, padded by a cell
        let mut lo = [isize::MAX; 3];
        let mut hi = [isize::MIN; 3];
        for c in q.bbox.corners() {
            let u = spec_half.to_cell_space(&to_grid.apply(&c));
            for a in 0..3 {
                if !u[a].is_finite() {
                    continue;
                }
                let f = u[a].floor().clamp(-1e9, 1e9) as isize;
                lo[a] = lo[a].min(f - 1);
                hi[a] = hi[a].max(f + 1);
            }
        }
        let range = |a: usize| {
            let l = lo[a].max(0) as usize;
            let h = hi[a].min(spec_half.dims[a] as isize - 1);
            l..(h.max(-1) + 1) as usize
        };
        for i in range(0) {
            for jj in range(1) {
                for k in range(2) {
                    let p = to_ego.apply(&spec_half.cell_center(i, jj, k));
                    if q.bbox.contains(&p) {
                        index.cells.entry(spec_half.flat_index(i, jj, k)).or_default().push(j);
                    }
                }
            }
        }
    }
    index
}
