//! Uniform tensor grid on the unit square with the degenerate weight `x^alpha`.
//!
//! Unknowns live on interior nodes only; Dirichlet nodes are eliminated and
//! carry the value zero. Integrals are evaluated with a midpoint rule on the
//! `(nx + 1) x (ny + 1)` cells: the weight is sampled at the cell centre and
//! nodal data enter through the value of their bilinear interpolant there.
//! The weight is therefore never evaluated on `x = 0`, which keeps the rule
//! well defined for every exponent greater than `-1`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    alpha: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, alpha: f64) -> Result<Self> {
        if nx < 2 {
            return Err(invalid(
                "nx",
                format!("need at least 2 interior nodes, got {nx}"),
            ));
        }
        if ny < 2 {
            return Err(invalid(
                "ny",
                format!("need at least 2 interior nodes, got {ny}"),
            ));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(
                "alpha",
                format!("degeneracy exponent must lie in (0, 1], got {alpha}"),
            ));
        }
        Ok(Self {
            nx,
            ny,
            hx: 1.0 / (nx as f64 + 1.0),
            hy: 1.0 / (ny as f64 + 1.0),
            alpha,
        })
    }

    /// Square grid with `n` interior nodes per direction.
    pub fn square(n: usize, alpha: f64) -> Result<Self> {
        Self::new(n, n, alpha)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of interior nodes (unknowns).
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same node layout with a different degeneracy exponent.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.nx, self.ny, alpha)
    }

    /// x coordinate of interior column `i` (0-based).
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.hx
    }

    /// y coordinate of interior row `j` (0-based).
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.hy
    }

    /// Flat index of interior node `(i, j)`; x runs fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (alpha {}) vs {}x{} (alpha {})",
                self.nx, self.ny, self.alpha, other.nx, other.ny, other.alpha
            )))
        }
    }
}

pub fn build_grid(nx: usize, ny: usize, alpha: f64) -> Result<Grid> {
    Grid::new(nx, ny, alpha)
}

/// Nodal field on the interior nodes of a grid; boundary values are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Sample `f(x, y)` at every interior node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "values",
                format!("expected {} nodal values, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite entry at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &GridFunction) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean norm of the nodal vector.
    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn block(&self) -> NodeBlock<'_> {
        NodeBlock::interior(&self.grid, &self.values)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;

    fn add(self, rhs: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.grid, rhs.grid);
        GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;

    fn sub(self, rhs: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.grid, rhs.grid);
        GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<&GridFunction> for f64 {
    type Output = GridFunction;

    fn mul(self, rhs: &GridFunction) -> GridFunction {
        rhs.scale(self)
    }
}

/// Nodal field on all nodes of the grid, boundary included.
///
/// Used for functions with a non-vanishing trace on the boundary, which a
/// [`GridFunction`] cannot represent.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl TracedFunction {
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let (mx, my) = (grid.nx + 2, grid.ny + 2);
        let mut values = Vec::with_capacity(mx * my);
        for jj in 0..my {
            let y = jj as f64 * grid.hy;
            for ii in 0..mx {
                values.push(f(ii as f64 * grid.hx, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn block(&self) -> NodeBlock<'_> {
        NodeBlock {
            values: &self.values,
            offset: 0,
            mx: self.grid.nx + 2,
            my: self.grid.ny + 2,
        }
    }
}

/// Characteristic function of a subset of the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    grid: Grid,
    indicator: Vec<bool>,
}

impl RegionMask {
    /// Nodes strictly inside the open rectangle `(x0, x1) x (y0, y1)`.
    pub fn rect(grid: Grid, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let ok = |a: f64, b: f64| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if !ok(x0, x1) {
            return Err(invalid(
                "rectangle",
                format!("x-range ({x0}, {x1}) must satisfy 0 <= x0 < x1 <= 1"),
            ));
        }
        if !ok(y0, y1) {
            return Err(invalid(
                "rectangle",
                format!("y-range ({y0}, {y1}) must satisfy 0 <= y0 < y1 <= 1"),
            ));
        }
        let mut indicator = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                let x = grid.x(i);
                indicator.push(x > x0 && x < x1 && y > y0 && y < y1);
            }
        }
        Ok(Self { grid, indicator })
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            indicator: vec![true; grid.len()],
        }
    }

    /// Arbitrary node set.
    pub fn from_indicator(grid: Grid, indicator: Vec<bool>) -> Result<Self> {
        if indicator.len() != grid.len() {
            return Err(invalid(
                "indicator",
                format!("expected {} entries, got {}", grid.len(), indicator.len()),
            ));
        }
        Ok(Self { grid, indicator })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Multiply by the characteristic function.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.grid, u.grid);
        GridFunction {
            grid: u.grid,
            values: u
                .values
                .iter()
                .zip(&self.indicator)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        }
    }

    pub fn union(&self, other: &RegionMask) -> RegionMask {
        RegionMask {
            grid: self.grid,
            indicator: self
                .indicator
                .iter()
                .zip(&other.indicator)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

/// Read-only view of nodal values known on a rectangular block of nodes.
///
/// Global node indices run over `0..=nx+1` and `0..=ny+1`; the block covers
/// `offset..offset+mx` (same in y). Values outside the block read as zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeBlock<'a> {
    pub values: &'a [f64],
    pub offset: usize,
    pub mx: usize,
    pub my: usize,
}

impl<'a> NodeBlock<'a> {
    pub fn interior(grid: &Grid, values: &'a [f64]) -> Self {
        Self {
            values,
            offset: 1,
            mx: grid.nx,
            my: grid.ny,
        }
    }

    #[inline]
    pub fn at(&self, gi: usize, gj: usize) -> f64 {
        let (Some(i), Some(j)) = (gi.checked_sub(self.offset), gj.checked_sub(self.offset)) else {
            return 0.0;
        };
        if i < self.mx && j < self.my {
            self.values[j * self.mx + i]
        } else {
            0.0
        }
    }

    /// Same layout, different data.
    pub fn with_values<'b>(&self, values: &'b [f64]) -> NodeBlock<'b> {
        NodeBlock {
            values,
            offset: self.offset,
            mx: self.mx,
            my: self.my,
        }
    }
}

/// Value of a weighted integral together with the singularity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedIntegral {
    pub value: f64,
    /// Set when the weight exponent is `<= -1` and the integrand carries mass
    /// in the first cell column, where the continuous integral may diverge.
    pub singular_warning: bool,
}

/// Cell-midpoint rule for `∬ w(x, y) a b`, with `a` and `b` read through the
/// bilinear interpolant at cell centres. Returns the value and whether any
/// cell of the first column contributed a nonzero product.
pub(crate) fn cell_quadrature(
    grid: &Grid,
    a: NodeBlock<'_>,
    b: NodeBlock<'_>,
    weight: impl Fn(f64, f64) -> f64,
) -> (f64, bool) {
    let (hx, hy) = (grid.hx, grid.hy);
    let mut total = 0.0;
    let mut first_column = false;
    for cj in 0..=grid.ny {
        let yc = (cj as f64 + 0.5) * hy;
        let mut row = 0.0;
        for ci in 0..=grid.nx {
            let xc = (ci as f64 + 0.5) * hx;
            let av =
                0.25 * (a.at(ci, cj) + a.at(ci + 1, cj) + a.at(ci, cj + 1) + a.at(ci + 1, cj + 1));
            let bv =
                0.25 * (b.at(ci, cj) + b.at(ci + 1, cj) + b.at(ci, cj + 1) + b.at(ci + 1, cj + 1));
            let prod = av * bv;
            if prod != 0.0 {
                if ci == 0 {
                    first_column = true;
                }
                row += weight(xc, yc) * prod;
            }
        }
        total += row;
    }
    (total * hx * hy, first_column)
}

/// Cell-midpoint rule for `∬ w |a|^q`.
pub(crate) fn cell_power_integral(grid: &Grid, a: NodeBlock<'_>, q: f64) -> f64 {
    let mut total = 0.0;
    for cj in 0..=grid.ny {
        for ci in 0..=grid.nx {
            let av =
                0.25 * (a.at(ci, cj) + a.at(ci + 1, cj) + a.at(ci, cj + 1) + a.at(ci + 1, cj + 1));
            if av != 0.0 {
                total += av.abs().powf(q);
            }
        }
    }
    total * grid.hx * grid.hy
}

/// `∬ x^exponent u v dx dy` by the cell-midpoint rule, with the singularity flag.
pub fn weighted_inner_report(
    u: &GridFunction,
    v: &GridFunction,
    exponent: f64,
) -> Result<WeightedIntegral> {
    u.grid.check_same(&v.grid)?;
    let (value, first_column) =
        cell_quadrature(&u.grid, u.block(), v.block(), |x, _| x.powf(exponent));
    let singular_warning = exponent <= -1.0 && first_column;
    if singular_warning {
        log::warn!(
            "weighted integral with exponent {exponent} has mass next to x = 0; \
             the continuous integral may diverge"
        );
    }
    Ok(WeightedIntegral {
        value,
        singular_warning,
    })
}

/// `∬ x^exponent u v dx dy` by the cell-midpoint rule.
pub fn weighted_inner(u: &GridFunction, v: &GridFunction, exponent: f64) -> Result<f64> {
    weighted_inner_report(u, v, exponent).map(|w| w.value)
}

/// Lumped (nodal) weighted inner product `hx hy Σ x_i^exponent u_k v_k`.
///
/// Unlike the cell rule this is positive definite on nodal vectors, so it is
/// the metric used for control spaces.
pub fn nodal_inner(u: &GridFunction, v: &GridFunction, exponent: f64) -> f64 {
    debug_assert_eq!(u.grid, v.grid);
    let g = &u.grid;
    let weights: Vec<f64> = (0..g.nx).map(|i| g.x(i).powf(exponent)).collect();
    let mut total = 0.0;
    for j in 0..g.ny {
        let base = j * g.nx;
        for i in 0..g.nx {
            total += weights[i] * u.values[base + i] * v.values[base + i];
        }
    }
    total * g.hx * g.hy
}
