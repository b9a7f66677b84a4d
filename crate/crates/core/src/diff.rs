//! Nodal difference operators shared by the weak-form residuals and the norms.
//!
//! Derivatives are taken over the block of known nodes: centred differences
//! where both neighbours are known, one-sided (inward) differences on the
//! outermost known nodes. For a [`GridFunction`](crate::grid::GridFunction)
//! the known block is the interior, so boundary-adjacent nodes never read the
//! Dirichlet value.

use crate::grid::NodeBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis {
    X,
    Y,
}

/// Difference of `block` along `axis`, in the same layout.
pub(crate) fn derivative(block: NodeBlock<'_>, h: f64, axis: Axis) -> Vec<f64> {
    let (mx, my) = (block.mx, block.my);
    let v = block.values;
    let mut out = vec![0.0; mx * my];
    match axis {
        Axis::X => {
            for j in 0..my {
                let row = &v[j * mx..(j + 1) * mx];
                let dst = &mut out[j * mx..(j + 1) * mx];
                dst[0] = (row[1] - row[0]) / h;
                for i in 1..mx - 1 {
                    dst[i] = (row[i + 1] - row[i - 1]) / (2.0 * h);
                }
                dst[mx - 1] = (row[mx - 1] - row[mx - 2]) / h;
            }
        }
        Axis::Y => {
            for i in 0..mx {
                out[i] = (v[mx + i] - v[i]) / h;
                for j in 1..my - 1 {
                    out[j * mx + i] = (v[(j + 1) * mx + i] - v[(j - 1) * mx + i]) / (2.0 * h);
                }
                let last = (my - 1) * mx + i;
                out[last] = (v[last] - v[last - mx]) / h;
            }
        }
    }
    out
}

/// Gradient and (optionally) mixed derivative of a nodal block.
pub(crate) struct Derivatives {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dxy: Option<Vec<f64>>,
}

pub(crate) fn derivatives(block: NodeBlock<'_>, hx: f64, hy: f64, mixed: bool) -> Derivatives {
    let dx = derivative(block, hx, Axis::X);
    let dy = derivative(block, hy, Axis::Y);
    let dxy = mixed.then(|| derivative(block.with_values(&dy), hx, Axis::X));
    Derivatives { dx, dy, dxy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridFunction};

    #[test]
    fn exact_on_linear_functions() {
        let g = Grid::new(6, 5, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x, y| 3.0 * x - 2.0 * y + 1.0);
        let d = derivatives(u.block(), g.hx(), g.hy(), true);
        assert!(d.dx.iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert!(d.dy.iter().all(|v| (v + 2.0).abs() < 1e-12));
        assert!(d.dxy.unwrap().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn mixed_derivative_of_bilinear() {
        let g = Grid::new(5, 7, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x, y| x * y);
        let d = derivatives(u.block(), g.hx(), g.hy(), true);
        assert!(d.dxy.unwrap().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}
