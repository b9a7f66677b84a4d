//! Discrete degenerate operator `A u = -½ ∂xx u + x^α ∂y u` with homogeneous
//! Dirichlet data, its solver, and discrete weak-form residuals.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diff::{derivative, Axis};
use crate::error::{invalid, Result};
use crate::grid::{cell_quadrature, Grid, GridFunction};
use crate::sparse::{CsrMatrix, Factorization, SolveError, SolverKind};

/// Difference scheme for the advection term `x^α ∂y u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward difference in y (the advection coefficient is nonnegative).
    /// Gives an M-matrix.
    #[default]
    #[serde(alias = "upwind_y")]
    Upwind,
    /// Centred difference in y, second order.
    #[serde(alias = "centered_y")]
    Centered,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Upwind => "upwind",
            Scheme::Centered => "centered",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseOperator {
    grid: Grid,
    scheme: Scheme,
    matrix: CsrMatrix,
    theta: Option<f64>,
}

impl SparseOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    /// Attach the stabilisation parameter used by the `e^{-θy}` residual.
    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(invalid(
                "theta",
                format!("must be finite and >= 0, got {theta}"),
            ));
        }
        self.theta = Some(theta);
        Ok(self)
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_values(self.grid, self.matrix.matvec(u.values()))
            .expect("finite operator applied to finite data")
    }

    pub fn apply_transpose(&self, p: &GridFunction) -> GridFunction {
        GridFunction::from_values(self.grid, self.matrix.matvec_transpose(p.values()))
            .expect("finite operator applied to finite data")
    }

    pub fn factorize(&self, kind: SolverKind) -> Result<DirichletSolver> {
        let start = Instant::now();
        let factorization = Factorization::new(&self.matrix, kind)?;
        log::debug!(
            "factorised {} unknowns ({}) in {:.3}s",
            self.grid.len(),
            if factorization.is_direct() {
                "banded LU"
            } else {
                "ILU(0)"
            },
            start.elapsed().as_secs_f64()
        );
        let norm_inf = (0..self.matrix.n_rows())
            .map(|r| self.matrix.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(DirichletSolver {
            grid: self.grid,
            matrix: self.matrix.clone(),
            factorization,
            norm_inf,
        })
    }
}

/// Assemble the 5-point operator on the interior nodes.
///
/// Rows realise `-½ ∂xx u + x^α ∂y u`; eliminated Dirichlet nodes are zero
/// so no right-hand-side correction is needed.
pub fn assemble(grid: Grid, scheme: Scheme) -> SparseOperator {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let diff = 0.5 / (hx * hx);
    let mut rows = Vec::with_capacity(grid.len());
    for j in 0..ny {
        for i in 0..nx {
            let a = grid.x(i).powf(grid.alpha());
            let mut row = Vec::with_capacity(5);
            let mut diag = 2.0 * diff;
            if i > 0 {
                row.push((grid.index(i - 1, j), -diff));
            }
            if i + 1 < nx {
                row.push((grid.index(i + 1, j), -diff));
            }
            match scheme {
                Scheme::Upwind => {
                    diag += a / hy;
                    if j > 0 {
                        row.push((grid.index(i, j - 1), -a / hy));
                    }
                }
                Scheme::Centered => {
                    let c = a / (2.0 * hy);
                    if j > 0 {
                        row.push((grid.index(i, j - 1), -c));
                    }
                    if j + 1 < ny {
                        row.push((grid.index(i, j + 1), c));
                    }
                }
            }
            row.push((grid.index(i, j), diag));
            rows.push(row);
        }
    }
    SparseOperator {
        grid,
        scheme,
        matrix: CsrMatrix::from_rows(grid.len(), rows),
        theta: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Euclidean residual `‖A u - f‖₂` of the discrete system.
    pub residual_norm: f64,
    /// Krylov iterations; 0 for the direct solve.
    pub iterations: usize,
    /// Seconds spent in the solve (factorisation excluded when reused).
    pub wall_time: f64,
}

/// A factorised operator, reusable for many right-hand sides and for the
/// transposed (adjoint) system. Safe to share read-only between threads.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    grid: Grid,
    matrix: CsrMatrix,
    factorization: Factorization,
    /// `‖A‖_∞`, for the backward-error acceptance test.
    norm_inf: f64,
}

impl DirichletSolver {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn solve(&self, f: &GridFunction, tol: f64) -> Result<(GridFunction, SolveReport)> {
        self.run(f, tol, false)
    }

    /// Solve `Aᵀ p = r`.
    pub fn solve_adjoint(&self, r: &GridFunction, tol: f64) -> Result<(GridFunction, SolveReport)> {
        self.run(r, tol, true)
    }

    fn run(
        &self,
        rhs: &GridFunction,
        tol: f64,
        transpose: bool,
    ) -> Result<(GridFunction, SolveReport)> {
        self.grid.check_same(rhs.grid())?;
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {tol}")));
        }
        let start = Instant::now();
        let b = rhs.values();
        let (x, iterations) = if transpose {
            self.factorization.solve_transpose(b, tol)?
        } else {
            self.factorization.solve(b, tol)?
        };
        let ax = if transpose {
            self.matrix.matvec_transpose(&x)
        } else {
            self.matrix.matvec(&x)
        };
        let residual_norm = ax
            .iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        // normwise backward error: a direct solve's residual scales with
        // ‖A‖‖u‖ ~ h⁻², not with ‖f‖
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = tol * (rhs.norm2() + self.norm_inf * x_norm).max(1.0);
        if !(residual_norm <= bound) {
            return Err(SolveError::NotConverged {
                iterations,
                residual: residual_norm,
                tolerance: bound,
            }
            .into());
        }
        let u = GridFunction::from_values(self.grid, x).map_err(|_| SolveError::Breakdown {
            iterations,
            residual: residual_norm,
        })?;
        Ok((
            u,
            SolveReport {
                residual_norm,
                iterations,
                wall_time: start.elapsed().as_secs_f64(),
            },
        ))
    }
}

/// Solve `A u = f` with the default solver; accepted when
/// `‖A u - f‖₂ <= tol · max(1, ‖f‖₂ + ‖A‖_∞ ‖u‖₂)`.
pub fn solve_dirichlet(
    op: &SparseOperator,
    f: &GridFunction,
    tol: f64,
) -> Result<(GridFunction, SolveReport)> {
    op.grid.check_same(f.grid())?;
    let start = Instant::now();
    let solver = op.factorize(SolverKind::Auto)?;
    let (u, mut report) = solver.solve(f, tol)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((u, report))
}

fn check3(u: &GridFunction, f: &GridFunction, phi: &GridFunction) -> Result<()> {
    u.grid().check_same(f.grid())?;
    u.grid().check_same(phi.grid())
}

/// `∬ (x^α ∂y u) φ + ½ ∂x u ∂x φ - f φ`, discretised with the nodal
/// differences and the cell-midpoint rule. Zero for an exact weak solution.
pub fn weak_form_residual(u: &GridFunction, f: &GridFunction, phi: &GridFunction) -> Result<f64> {
    check3(u, f, phi)?;
    let g = u.grid();
    let alpha = g.alpha();
    let ub = u.block();
    let dux = derivative(ub, g.hx(), Axis::X);
    let duy = derivative(ub, g.hy(), Axis::Y);
    let dpx = derivative(phi.block(), g.hx(), Axis::X);
    let (adv, _) = cell_quadrature(g, ub.with_values(&duy), phi.block(), |x, _| x.powf(alpha));
    let (dif, _) = cell_quadrature(g, ub.with_values(&dux), ub.with_values(&dpx), |_, _| 1.0);
    let (src, _) = cell_quadrature(g, f.block(), phi.block(), |_, _| 1.0);
    Ok(adv + 0.5 * dif - src)
}

/// The same identity tested against `∂y φ`:
/// `∬ (x^α ∂y u)(∂y φ) + ½ ∂x u ∂x(∂y φ) - f ∂y φ`.
pub fn derivative_weak_form_residual(
    u: &GridFunction,
    f: &GridFunction,
    phi: &GridFunction,
) -> Result<f64> {
    check3(u, f, phi)?;
    let g = u.grid();
    let alpha = g.alpha();
    let parts = TestParts::new(u, phi);
    let b = u.block();
    let (adv, _) = cell_quadrature(
        g,
        b.with_values(&parts.duy),
        b.with_values(&parts.dpy),
        |x, _| x.powf(alpha),
    );
    let (dif, _) = cell_quadrature(
        g,
        b.with_values(&parts.dux),
        b.with_values(&parts.dpxy),
        |_, _| 1.0,
    );
    let (src, _) = cell_quadrature(g, f.block(), b.with_values(&parts.dpy), |_, _| 1.0);
    Ok(adv + 0.5 * dif - src)
}

/// The `e^{-θy}`-weighted form:
/// `∬ [(x^α ∂y u)(∂y φ) + ½ ∂x u ∂x(∂y φ) - f ∂y φ] e^{-θy}`.
pub fn theta_weak_form_residual(
    u: &GridFunction,
    f: &GridFunction,
    phi: &GridFunction,
    theta: f64,
) -> Result<f64> {
    check3(u, f, phi)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(invalid(
            "theta",
            format!("must be finite and >= 0, got {theta}"),
        ));
    }
    let g = u.grid();
    let alpha = g.alpha();
    let parts = TestParts::new(u, phi);
    let b = u.block();
    let (adv, _) = cell_quadrature(
        g,
        b.with_values(&parts.duy),
        b.with_values(&parts.dpy),
        |x, y| x.powf(alpha) * (-theta * y).exp(),
    );
    let (dif, _) = cell_quadrature(
        g,
        b.with_values(&parts.dux),
        b.with_values(&parts.dpxy),
        |_, y| (-theta * y).exp(),
    );
    let (src, _) = cell_quadrature(g, f.block(), b.with_values(&parts.dpy), |_, y| {
        (-theta * y).exp()
    });
    Ok(adv + 0.5 * dif - src)
}

struct TestParts {
    dux: Vec<f64>,
    duy: Vec<f64>,
    dpy: Vec<f64>,
    dpxy: Vec<f64>,
}

impl TestParts {
    fn new(u: &GridFunction, phi: &GridFunction) -> Self {
        let g = u.grid();
        let ub = u.block();
        let dpy = derivative(phi.block(), g.hy(), Axis::Y);
        let dpxy = derivative(phi.block().with_values(&dpy), g.hx(), Axis::X);
        Self {
            dux: derivative(ub, g.hx(), Axis::X),
            duy: derivative(ub, g.hy(), Axis::Y),
            dpy,
            dpxy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Manufactured;
    use std::f64::consts::PI;

    #[test]
    fn at_most_five_nonzeros_per_row() {
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let op = assemble(Grid::new(7, 6, 0.5).unwrap(), scheme);
            let m = op.matrix();
            assert_eq!(m.n_rows(), 42);
            assert_eq!(m.n_cols(), 42);
            assert!((0..42).all(|r| m.row_nnz(r) <= 5));
        }
    }

    #[test]
    fn constant_is_annihilated_in_the_interior() {
        let g = Grid::new(8, 8, 0.7).unwrap();
        let one = GridFunction::constant(g, 1.0);
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let au = assemble(g, scheme).apply(&one);
            for j in 1..7 {
                for i in 1..7 {
                    assert!(
                        au.at(i, j).abs() < 1e-9,
                        "{scheme:?} ({i},{j}) = {}",
                        au.at(i, j)
                    );
                }
            }
            // boundary-adjacent rows see the zero Dirichlet value
            assert!(au.at(0, 4).abs() > 1.0);
        }
    }

    #[test]
    fn quadratic_in_x_gives_unit_diffusion() {
        let g = Grid::new(9, 9, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x, _| x * (1.0 - x));
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let au = assemble(g, scheme).apply(&u);
            let rows = match scheme {
                Scheme::Upwind => 1..9,
                Scheme::Centered => 1..8,
            };
            for j in rows {
                for i in 0..9 {
                    assert!((au.at(i, j) - 1.0).abs() < 1e-10, "{scheme:?} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn centered_advection_of_y() {
        let alpha = 0.5;
        let g = Grid::new(9, 9, alpha).unwrap();
        let u = GridFunction::from_fn(g, |_, y| y);
        let au = assemble(g, Scheme::Centered).apply(&u);
        for j in 1..8 {
            for i in 1..8 {
                assert!((au.at(i, j) - g.x(i).powf(alpha)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let g = Grid::new(12, 10, 0.5).unwrap();
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let (u, rep) =
                solve_dirichlet(&assemble(g, scheme), &GridFunction::zeros(g), 1e-10).unwrap();
            assert!(u.is_zero());
            assert_eq!(rep.residual_norm, 0.0);
            assert_eq!(rep.iterations, 0);
        }
    }

    #[test]
    fn direct_and_iterative_agree() {
        let g = Grid::new(20, 20, 1.0).unwrap();
        let f = GridFunction::from_fn(g, |x, y| (PI * x).sin() * (2.0 * PI * y).cos() + x);
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let op = assemble(g, scheme);
            let (ud, _) = op
                .factorize(SolverKind::Direct)
                .unwrap()
                .solve(&f, 1e-12)
                .unwrap();
            let (ui, rep) = op
                .factorize(SolverKind::Iterative)
                .unwrap()
                .solve(&f, 1e-12)
                .unwrap();
            assert!(rep.iterations > 0);
            assert!((&ud - &ui).max_abs() < 1e-8 * ud.max_abs());
        }
    }

    #[test]
    fn adjoint_solve_inverts_transpose() {
        let g = Grid::new(15, 11, 0.5).unwrap();
        let op = assemble(g, Scheme::Centered);
        let r = GridFunction::from_fn(g, |x, y| x - y * y);
        let (p, _) = op
            .factorize(SolverKind::Auto)
            .unwrap()
            .solve_adjoint(&r, 1e-12)
            .unwrap();
        assert!((&op.apply_transpose(&p) - &r).max_abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let g = Grid::new(4, 4, 0.5).unwrap();
        assert!(
            solve_dirichlet(&assemble(g, Scheme::Upwind), &GridFunction::zeros(g), 0.0).is_err()
        );
    }

    #[test]
    fn upwind_maximum_principle() {
        let g = Grid::new(24, 24, 0.5).unwrap();
        let f = GridFunction::from_fn(g, |x, y| {
            -((3.0 * x).sin() * (5.0 * y).cos()).abs() - 0.1 * x
        });
        let (u, _) = solve_dirichlet(&assemble(g, Scheme::Upwind), &f, 1e-12).unwrap();
        assert!(u.values().iter().all(|&v| v <= 1e-12));
    }

    #[test]
    fn residuals_vanish_for_zero_data() {
        let g = Grid::new(10, 10, 0.5).unwrap();
        let z = GridFunction::zeros(g);
        let phi = GridFunction::from_fn(g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        assert_eq!(weak_form_residual(&z, &z, &phi).unwrap(), 0.0);
        assert_eq!(theta_weak_form_residual(&z, &z, &phi, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn theta_zero_matches_derivative_form() {
        let g = Grid::new(16, 16, 0.5).unwrap();
        let m = Manufactured::SinSin;
        let u = GridFunction::from_fn(g, |x, y| m.exact(x, y));
        let f = GridFunction::from_fn(g, |x, y| m.forcing(x, y, 0.5));
        let phi = GridFunction::from_fn(g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin() * x);
        assert_eq!(
            theta_weak_form_residual(&u, &f, &phi, 0.0).unwrap(),
            derivative_weak_form_residual(&u, &f, &phi).unwrap()
        );
    }

    fn manufactured_residuals(n: usize, theta: Option<f64>) -> f64 {
        let alpha = 0.5;
        let g = Grid::new(n, n, alpha).unwrap();
        let m = Manufactured::SinSin;
        let u = GridFunction::from_fn(g, |x, y| m.exact(x, y));
        let f = GridFunction::from_fn(g, |x, y| m.forcing(x, y, alpha));
        let phi = GridFunction::from_fn(g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        match theta {
            None => weak_form_residual(&u, &f, &phi).unwrap(),
            Some(t) => theta_weak_form_residual(&u, &f, &phi, t).unwrap(),
        }
    }

    #[test]
    fn manufactured_residual_converges() {
        for theta in [None, Some(1.0)] {
            let r: Vec<f64> = [16, 32, 64, 128]
                .iter()
                .map(|&n| manufactured_residuals(n, theta).abs())
                .collect();
            for w in r.windows(2) {
                // first order or better
                assert!(w[1] <= 0.6 * w[0], "theta {theta:?}: {r:?}");
            }
        }
    }

    #[test]
    fn residual_is_linear_in_phi() {
        let g = Grid::new(12, 12, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x, y| x * (1.0 - x) * y);
        let f = GridFunction::from_fn(g, |x, y| x + y);
        let p1 = GridFunction::from_fn(g, |x, y| (PI * x).sin() * y);
        let p2 = GridFunction::from_fn(g, |x, y| x * x * (1.0 - y));
        let lhs = weak_form_residual(&u, &f, &(&p1.scale(2.5) + &p2)).unwrap();
        let rhs = 2.5 * weak_form_residual(&u, &f, &p1).unwrap()
            + weak_form_residual(&u, &f, &p2).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}
