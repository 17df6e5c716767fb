//! Candidate-pair enumeration for contact detection.
//!
//! Both strategies visit pairs `(i, j)` with `i < j` in lexicographic order,
//! so force sums accumulate in the same order and agree bitwise.

use alloc::vec::Vec;

use crate::math::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborMode {
    /// O(N²) loop over every pair.
    #[default]
    AllPairs,
    /// Uniform grid binning with cell edge equal to the interaction cutoff.
    CellList,
}

const MAX_CELLS: usize = 1 << 20;

/// Calls `visit(i, j)` for every pair that may be closer than `cutoff`.
///
/// `AllPairs` visits every pair; `CellList` visits a superset of the pairs
/// within `cutoff`. In both cases the visiting order is lexicographic.
pub fn for_each_candidate(positions: &[Vec2], cutoff: f64, mode: NeighborMode, mut visit: impl FnMut(usize, usize)) {
    let n = positions.len();
    match mode {
        NeighborMode::AllPairs => {
            for i in 0..n {
                for j in (i + 1)..n {
                    visit(i, j);
                }
            }
        }
        NeighborMode::CellList => {
            for (i, j) in cell_list_pairs(positions, cutoff) {
                visit(i as usize, j as usize);
            }
        }
    }
}

fn cell_list_pairs(positions: &[Vec2], cutoff: f64) -> Vec<(u32, u32)> {
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in positions {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut cell = cutoff;
    let dims = loop {
        let nx = ((hi[0] - lo[0]) / cell) as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell) as usize + 1;
        if nx.saturating_mul(ny) <= MAX_CELLS {
            break [nx, ny];
        }
        cell *= 2.0;
    };
    let cell_of = |p: &Vec2| -> [usize; 2] {
        [
            (((p[0] - lo[0]) / cell) as usize).min(dims[0] - 1),
            (((p[1] - lo[1]) / cell) as usize).min(dims[1] - 1),
        ]
    };

    // Counting sort of particles into cells.
    let ncells = dims[0] * dims[1];
    let mut start = alloc::vec![0usize; ncells + 1];
    let cells: Vec<[usize; 2]> = positions.iter().map(cell_of).collect();
    for c in &cells {
        start[c[1] * dims[0] + c[0] + 1] += 1;
    }
    for k in 0..ncells {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut members = alloc::vec![0u32; n];
    for (i, c) in cells.iter().enumerate() {
        let k = c[1] * dims[0] + c[0];
        members[fill[k]] = i as u32;
        fill[k] += 1;
    }

    let mut pairs = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let x0 = c[0].saturating_sub(1);
        let y0 = c[1].saturating_sub(1);
        let x1 = (c[0] + 1).min(dims[0] - 1);
        let y1 = (c[1] + 1).min(dims[1] - 1);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let k = cy * dims[0] + cx;
                for &j in &members[start[k]..start[k + 1]] {
                    if (j as usize) > i {
                        pairs.push((i as u32, j));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{norm, sub};

    fn close_pairs(positions: &[Vec2], cutoff: f64, mode: NeighborMode) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for_each_candidate(positions, cutoff, mode, |i, j| {
            if norm(sub(positions[i], positions[j])) < cutoff {
                out.push((i, j));
            }
        });
        out
    }

    #[test]
    fn cell_list_finds_every_close_pair_in_order() {
        let mut positions = Vec::new();
        let mut s = 12345u64;
        for _ in 0..200 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = (s >> 11) as f64 / (1u64 << 53) as f64;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let y = (s >> 11) as f64 / (1u64 << 53) as f64;
            positions.push([x, 0.5 * y]);
        }
        let a = close_pairs(&positions, 0.07, NeighborMode::AllPairs);
        let b = close_pairs(&positions, 0.07, NeighborMode::CellList);
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(cell_list_pairs(&[], 0.1).is_empty());
        assert!(cell_list_pairs(&[[0.0, 0.0]], 0.1).is_empty());
        // All particles at one point still pair up.
        let p = [[1.0, 1.0]; 3];
        assert_eq!(cell_list_pairs(&p, 0.1), alloc::vec![(0, 1), (0, 2), (1, 2)]);
    }
}
