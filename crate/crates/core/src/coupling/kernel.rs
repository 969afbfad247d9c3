use crate::error::{Error, Result};
use crate::fluid::{Boundary, LatticeGrid};

/// Four-point regularised delta function (one axis, lattice units).
pub fn delta4(r: f64) -> f64 {
    let a = r.abs();
    if a < 1.0 {
        (3.0 - 2.0 * a + (1.0 + 4.0 * a - 4.0 * a * a).sqrt()) / 8.0
    } else if a < 2.0 {
        (5.0 - 2.0 * a - (-7.0 + 12.0 * a - 4.0 * a * a).max(0.0).sqrt()) / 8.0
    } else {
        0.0
    }
}

/// Cells touched by one marker and their weights, which sum to one.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    cells: [usize; 16],
    weights: [f64; 16],
    len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells[..self.len]
            .iter()
            .copied()
            .zip(self.weights[..self.len].iter().copied())
    }
}

/// Per-axis cell indices and weights. Wall axes drop cells outside the
/// domain; the caller renormalises.
fn axis(coord: f64, n: usize, boundary: Boundary) -> ([usize; 4], [f64; 4], usize) {
    let base = coord.floor() as i64 - 1;
    let mut idx = [0; 4];
    let mut w = [0.0; 4];
    let mut len = 0;
    for k in 0..4 {
        let c = base + k as i64;
        let wk = delta4(c as f64 - coord);
        if wk == 0.0 {
            continue;
        }
        let cell = match boundary {
            Boundary::Periodic => c.rem_euclid(n as i64) as usize,
            Boundary::Wall => {
                if c < 0 || c >= n as i64 {
                    continue;
                }
                c as usize
            }
        };
        idx[len] = cell;
        w[len] = wk;
        len += 1;
    }
    (idx, w, len)
}

/// Kernel stencil of a marker at physical position `pos`. Weights cut off
/// by walls are redistributed so the stencil still sums to one.
pub fn stencil(grid: &LatticeGrid, index: usize, pos: [f64; 2]) -> Result<Stencil> {
    let lx = grid.nx as f64 * grid.dx;
    let ly = grid.ny as f64 * grid.dx;
    let outside = |p: f64, l: f64, b: Boundary| b == Boundary::Wall && !(p >= 0.0 && p <= l);
    if !pos[0].is_finite()
        || !pos[1].is_finite()
        || outside(pos[0], lx, grid.boundary_x)
        || outside(pos[1], ly, grid.boundary_y)
    {
        return Err(Error::OutOfDomain {
            index,
            x: pos[0],
            y: pos[1],
        });
    }
    // Cell centres sit at (i + 0.5) dx.
    let cx = pos[0] / grid.dx - 0.5;
    let cy = pos[1] / grid.dx - 0.5;
    let (ix, wx, nx) = axis(cx, grid.nx, grid.boundary_x);
    let (iy, wy, ny) = axis(cy, grid.ny, grid.boundary_y);
    let sx: f64 = wx[..nx].iter().sum();
    let sy: f64 = wy[..ny].iter().sum();
    let mut s = Stencil {
        cells: [0; 16],
        weights: [0.0; 16],
        len: 0,
    };
    for b in 0..ny {
        for a in 0..nx {
            s.cells[s.len] = grid.idx(ix[a], iy[b]);
            s.weights[s.len] = (wx[a] / sx) * (wy[b] / sy);
            s.len += 1;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert!((delta4(0.0) - 0.5).abs() < 1e-15);
        assert!((delta4(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(delta4(2.0), 0.0);
        assert_eq!(delta4(-2.5), 0.0);
    }

    proptest! {
        #[test]
        fn kernel_moments(r in 0.0f64..1.0) {
            let ws: Vec<f64> = (-2..=2).map(|k| delta4(k as f64 - r)).collect();
            let sum: f64 = ws.iter().sum();
            let first: f64 = ws.iter().zip(-2..=2).map(|(w, k)| w * (k as f64 - r)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(first.abs() < 1e-12);
        }

        #[test]
        fn stencil_partition_of_unity(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let mut g = LatticeGrid::pool(16, 16, 0.6, 1.0 / 16.0, 0.01).unwrap();
            g.boundary_x = Boundary::Periodic;
            let s = stencil(&g, 0, [x, y]).unwrap();
            let total: f64 = s.iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_is_rejected() {
        let g = LatticeGrid::pool(16, 16, 0.6, 0.1, 0.01).unwrap();
        assert!(matches!(
            stencil(&g, 3, [1.7, 0.5]),
            Err(Error::OutOfDomain { index: 3, .. })
        ));
        assert!(stencil(&g, 0, [1.6, 0.0]).is_ok());
    }
}
