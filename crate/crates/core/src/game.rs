//! Two-follower Nash game driven by the degenerate state equation.
//!
//! The state solves `A y = χ_ω g + χ_ω1 f1 + χ_ω2 f2`; follower `i` minimises
//! `J_i = ‖y - y_d^i‖²_{G_i} + ‖f_i‖²_{x^{-α}}` over the ball
//! `‖f_i‖_{x^{-α}} <= M_i` of controls supported in `ω_i`.
//!
//! Control-space integrals use the lumped nodal rule (`hx hy Σ w_k u_k v_k`),
//! which makes the adjoint gradient below the exact Riesz representative of
//! the discrete cost:
//! solve `Aᵀ p = 2 χ_Gi (y - y_d^i)`, then `∇J_i = χ_ωi (x^α p + 2 f_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{FieldKind, FieldSpec};
use crate::grid::{nodal_inner, Grid, GridFunction, RegionMask};
use crate::operator::{assemble, DirichletSolver, Scheme};
use crate::sparse::SolverKind;

/// Follower index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Follower {
    First,
    Second,
}

impl Follower {
    pub fn index(&self) -> usize {
        match self {
            Follower::First => 1,
            Follower::Second => 2,
        }
    }

    pub fn other(&self) -> Follower {
        match self {
            Follower::First => Follower::Second,
            Follower::Second => Follower::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub nx: usize,
    pub ny: usize,
    pub alpha: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Rectangles `[x0, x1, y0, y1]`.
    pub omega: [f64; 4],
    pub omega1: [f64; 4],
    pub omega2: [f64; 4],
    pub g1: [f64; 4],
    pub g2: [f64; 4],
    /// Leader control.
    pub g: FieldSpec,
    pub yd1: FieldSpec,
    pub yd2: FieldSpec,
    pub m1: f64,
    pub m2: f64,
    #[serde(default = "defaults::br_tol")]
    pub br_tol: f64,
    #[serde(default = "defaults::br_max_iters")]
    pub br_max_iters: usize,
    /// Projected-gradient stopping tolerance of each best response.
    #[serde(default = "defaults::inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "defaults::inner_max_iters")]
    pub inner_max_iters: usize,
    #[serde(default = "defaults::deviation_samples")]
    pub deviation_samples: usize,
    /// Certification tolerance, relative: `cert_rel_tol · (1 + J_i*)`.
    #[serde(default = "defaults::cert_rel_tol")]
    pub cert_rel_tol: f64,
    /// Residual tolerance of state and adjoint solves.
    #[serde(default = "defaults::solve_tol")]
    pub solve_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn br_tol() -> f64 {
        1e-8
    }
    pub fn br_max_iters() -> usize {
        200
    }
    pub fn inner_tol() -> f64 {
        1e-11
    }
    pub fn inner_max_iters() -> usize {
        5000
    }
    pub fn deviation_samples() -> usize {
        200
    }
    pub fn cert_rel_tol() -> f64 {
        1e-8
    }
    pub fn solve_tol() -> f64 {
        1e-12
    }
}

impl GameConfig {
    /// The reference configuration shipped with the command-line tool.
    pub fn benchmark() -> Self {
        let omega = [0.1, 0.3, 0.1, 0.9];
        Self {
            nx: 64,
            ny: 64,
            alpha: 0.5,
            scheme: Scheme::Upwind,
            omega,
            omega1: [0.4, 0.6, 0.1, 0.45],
            omega2: [0.4, 0.6, 0.55, 0.9],
            g1: [0.7, 0.9, 0.1, 0.45],
            g2: [0.7, 0.9, 0.55, 0.9],
            g: FieldSpec::new(FieldKind::SinSin).support(omega),
            yd1: FieldSpec::new(FieldKind::SinSin).amplitude(0.1),
            yd2: FieldSpec::new(FieldKind::SinSin).amplitude(-0.1),
            m1: 1.0,
            m2: 1.0,
            br_tol: defaults::br_tol(),
            br_max_iters: defaults::br_max_iters(),
            inner_tol: defaults::inner_tol(),
            inner_max_iters: defaults::inner_max_iters(),
            deviation_samples: defaults::deviation_samples(),
            cert_rel_tol: defaults::cert_rel_tol(),
            solve_tol: defaults::solve_tol(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(invalid(
                    name,
                    format!("ball radius must be finite and >= 0, got {m}"),
                ));
            }
        }
        for (name, t) in [
            ("br_tol", self.br_tol),
            ("inner_tol", self.inner_tol),
            ("cert_rel_tol", self.cert_rel_tol),
            ("solve_tol", self.solve_tol),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {t}")));
            }
        }
        if self.br_max_iters == 0 || self.inner_max_iters == 0 {
            return Err(invalid("br_max_iters", "iteration caps must be positive"));
        }
        Ok(())
    }
}

/// `hx hy Σ x^{-α} u v`: the control-space inner product.
pub fn control_inner(u: &GridFunction, v: &GridFunction) -> f64 {
    nodal_inner(u, v, -u.grid().alpha())
}

pub fn control_norm(u: &GridFunction) -> f64 {
    control_inner(u, u).max(0.0).sqrt()
}

/// Project onto `{f supported in mask, ‖f‖_{x^{-α}} <= M}`: mask, then
/// rescale radially if outside the ball.
pub fn project_ball(f: &GridFunction, radius: f64, mask: &RegionMask) -> GridFunction {
    let masked = mask.apply(f);
    if radius <= 0.0 {
        return GridFunction::zeros(*f.grid());
    }
    let n = control_norm(&masked);
    if n > radius {
        masked.scale(radius / n)
    } else {
        masked
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub control: GridFunction,
    pub iterations: usize,
    /// `‖f - P(f - ∇J)‖` at the returned point.
    pub residual: f64,
    /// Cost after every accepted step, starting with the initial point.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub certified: bool,
    /// `min_v J_i(v, f_other*) - J_i*` over both followers.
    pub margin: f64,
    pub margins: [f64; 2],
    pub tolerances: [f64; 2],
    pub deviations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashResult {
    pub f1_star: GridFunction,
    pub f2_star: GridFunction,
    pub state: GridFunction,
    pub j1: f64,
    pub j2: f64,
    pub br_iterations: usize,
    /// Successive-iterate norms `‖(f1, f2)^{k+1} - (f1, f2)^k‖`.
    pub br_residuals: Vec<f64>,
    pub j1_history: Vec<f64>,
    pub j2_history: Vec<f64>,
    pub inner_iterations: Vec<[usize; 2]>,
    pub converged: bool,
    /// `‖BR_1(f2*) - f1*‖`, `‖BR_2(f1*) - f2*‖` with cold-started best responses.
    pub fixed_point_residuals: [f64; 2],
    pub control_norms: [f64; 2],
    pub certified: bool,
    pub certification_margin: f64,
    pub certificate: Certificate,
    /// Sweep order of the Gauss-Seidel iteration.
    pub order: String,
    pub gradient_convention: String,
}

/// Assembled game: masks, sampled data and one factorisation shared by all
/// state and adjoint solves.
#[derive(Debug, Clone)]
pub struct Game {
    cfg: GameConfig,
    grid: Grid,
    omega: RegionMask,
    controls: [RegionMask; 2],
    observe: [RegionMask; 2],
    leader: GridFunction,
    targets: [GridFunction; 2],
    solver: DirichletSolver,
}

impl Game {
    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg.nx, cfg.ny, cfg.alpha)?;
        let mask = |r: [f64; 4], name: &'static str| -> Result<RegionMask> {
            let m = RegionMask::rect(grid, r[0], r[1], r[2], r[3])?;
            if m.is_empty() {
                return Err(invalid(name, "region contains no interior node"));
            }
            Ok(m)
        };
        let omega = mask(cfg.omega, "omega")?;
        let controls = [mask(cfg.omega1, "omega1")?, mask(cfg.omega2, "omega2")?];
        let observe = [mask(cfg.g1, "g1")?, mask(cfg.g2, "g2")?];
        let leader = cfg.g.sample(grid)?;
        let targets = [cfg.yd1.sample(grid)?, cfg.yd2.sample(grid)?];
        if targets[0] == targets[1] {
            log::warn!("follower targets coincide");
        }
        let solver = assemble(grid, cfg.scheme).factorize(SolverKind::Auto)?;
        Ok(Self {
            cfg,
            grid,
            omega,
            controls,
            observe,
            leader,
            targets,
            solver,
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn control_mask(&self, i: Follower) -> &RegionMask {
        &self.controls[i.index() - 1]
    }

    pub fn radius(&self, i: Follower) -> f64 {
        match i {
            Follower::First => self.cfg.m1,
            Follower::Second => self.cfg.m2,
        }
    }

    pub fn leader(&self) -> &GridFunction {
        &self.leader
    }

    /// State for an arbitrary leader control.
    pub fn state_with(
        &self,
        g: &GridFunction,
        f1: &GridFunction,
        f2: &GridFunction,
    ) -> Result<GridFunction> {
        let mut rhs = self.omega.apply(g);
        rhs.axpy(1.0, &self.controls[0].apply(f1));
        rhs.axpy(1.0, &self.controls[1].apply(f2));
        Ok(self.solver.solve(&rhs, self.cfg.solve_tol)?.0)
    }

    pub fn state(&self, f1: &GridFunction, f2: &GridFunction) -> Result<GridFunction> {
        self.state_with(&self.leader, f1, f2)
    }

    fn mismatch(&self, i: Follower, y: &GridFunction) -> GridFunction {
        self.observe[i.index() - 1].apply(&(y - &self.targets[i.index() - 1]))
    }

    fn cost_from_state(&self, i: Follower, y: &GridFunction, fi: &GridFunction) -> f64 {
        let r = self.mismatch(i, y);
        let fi = self.control_mask(i).apply(fi);
        nodal_inner(&r, &r, 0.0) + control_inner(&fi, &fi)
    }

    pub fn cost(&self, i: Follower, f1: &GridFunction, f2: &GridFunction) -> Result<f64> {
        let y = self.state(f1, f2)?;
        Ok(self.cost_from_state(i, &y, pick(i, f1, f2)))
    }

    pub fn gradient(
        &self,
        i: Follower,
        f1: &GridFunction,
        f2: &GridFunction,
    ) -> Result<GridFunction> {
        let y = self.state(f1, f2)?;
        self.gradient_from_state(i, &y, pick(i, f1, f2))
    }

    fn gradient_from_state(
        &self,
        i: Follower,
        y: &GridFunction,
        fi: &GridFunction,
    ) -> Result<GridFunction> {
        let rhs = self.mismatch(i, y).scale(2.0);
        let (p, _) = self.solver.solve_adjoint(&rhs, self.cfg.solve_tol)?;
        let alpha = self.grid.alpha();
        let weighted = GridFunction::from_values(
            self.grid,
            p.values()
                .iter()
                .enumerate()
                .map(|(k, &pk)| self.grid.x(k % self.grid.nx()).powf(alpha) * pk)
                .collect(),
        )?;
        let mut grad = weighted;
        grad.axpy(2.0, fi);
        Ok(self.control_mask(i).apply(&grad))
    }

    pub fn project(&self, i: Follower, f: &GridFunction) -> GridFunction {
        project_ball(f, self.radius(i), self.control_mask(i))
    }

    fn with_control(
        &self,
        i: Follower,
        fi: &GridFunction,
        other: &GridFunction,
    ) -> Result<GridFunction> {
        match i {
            Follower::First => self.state(fi, other),
            Follower::Second => self.state(other, fi),
        }
    }

    /// Projected gradient with backtracking for `min J_i(·, f_other)` over the ball.
    ///
    /// `J_i` is quadratic, so the sufficient-decrease test
    /// `J(f⁺) <= J(f) + ⟨∇J, d⟩ + ‖d‖²/(2s)` is equivalent to the curvature
    /// test `⟨∇J(f⁺) - ∇J(f), d⟩ <= ‖d‖²/s`, which is evaluated instead: it
    /// stays accurate when the cost decrease falls below round-off.
    pub fn best_response(
        &self,
        i: Follower,
        f_other: &GridFunction,
        warm: Option<&GridFunction>,
    ) -> Result<BestResponse> {
        let mut f = match warm {
            Some(w) => self.project(i, w),
            None => GridFunction::zeros(self.grid),
        };
        let y = self.with_control(i, &f, f_other)?;
        let mut grad = self.gradient_from_state(i, &y, &f)?;
        let mut costs = vec![self.cost_from_state(i, &y, &f)];
        let mut step: f64 = 0.5;
        let mut residual = f64::INFINITY;
        for it in 0..self.cfg.inner_max_iters {
            residual = control_norm(&(&f - &self.project(i, &(&f - &grad))));
            if residual <= self.cfg.inner_tol {
                return Ok(BestResponse {
                    control: f,
                    iterations: it,
                    residual,
                    costs,
                });
            }
            step = (2.0 * step).min(1.0);
            loop {
                let trial = self.project(i, &(&f - &grad.scale(step)));
                let d = &trial - &f;
                let y_trial = self.with_control(i, &trial, f_other)?;
                let g_trial = self.gradient_from_state(i, &y_trial, &trial)?;
                let curvature = control_inner(&(&g_trial - &grad), &d);
                if curvature <= control_inner(&d, &d) / step {
                    costs.push(self.cost_from_state(i, &y_trial, &trial));
                    f = trial;
                    grad = g_trial;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(Error::BestResponseCap {
                        follower: i.index(),
                        iterations: it,
                        residual,
                        last: Box::new(f),
                    });
                }
            }
        }
        Err(Error::BestResponseCap {
            follower: i.index(),
            iterations: self.cfg.inner_max_iters,
            residual,
            last: Box::new(f),
        })
    }

    /// Gauss-Seidel best-response iteration (`f1` then `f2`) followed by
    /// sampled certification.
    pub fn nash_solve(&self) -> Result<NashResult> {
        let zero = GridFunction::zeros(self.grid);
        let (mut f1, mut f2) = (zero.clone(), zero.clone());
        let mut residuals = Vec::new();
        let (mut j1h, mut j2h) = (Vec::new(), Vec::new());
        let mut inner = Vec::new();
        let mut converged = false;
        for _ in 0..self.cfg.br_max_iters {
            let b1 = self.best_response(Follower::First, &f2, Some(&f1))?;
            let b2 = self.best_response(Follower::Second, &b1.control, Some(&f2))?;
            let d1 = control_norm(&(&b1.control - &f1));
            let d2 = control_norm(&(&b2.control - &f2));
            f1 = b1.control;
            f2 = b2.control;
            inner.push([b1.iterations, b2.iterations]);
            let y = self.state(&f1, &f2)?;
            j1h.push(self.cost_from_state(Follower::First, &y, &f1));
            j2h.push(self.cost_from_state(Follower::Second, &y, &f2));
            let r = d1.hypot(d2);
            residuals.push(r);
            if r <= self.cfg.br_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!(
                "best-response iteration stopped after {} sweeps with residual {:.3e}",
                residuals.len(),
                residuals.last().copied().unwrap_or(f64::NAN)
            );
        }
        let state = self.state(&f1, &f2)?;
        let j1 = self.cost_from_state(Follower::First, &state, &f1);
        let j2 = self.cost_from_state(Follower::Second, &state, &f2);
        let fp1 = control_norm(&(&self.best_response(Follower::First, &f2, None)?.control - &f1));
        let fp2 = control_norm(&(&self.best_response(Follower::Second, &f1, None)?.control - &f2));
        let certificate = self.certify(&f1, &f2)?;
        Ok(NashResult {
            control_norms: [control_norm(&f1), control_norm(&f2)],
            f1_star: f1,
            f2_star: f2,
            state,
            j1,
            j2,
            br_iterations: residuals.len(),
            br_residuals: residuals,
            j1_history: j1h,
            j2_history: j2h,
            inner_iterations: inner,
            converged,
            fixed_point_residuals: [fp1, fp2],
            certified: certificate.certified,
            certification_margin: certificate.margin,
            certificate,
            order: "f1_then_f2".into(),
            gradient_convention: "lumped x^-alpha metric; grad = chi_omega_i (x^alpha p + 2 f_i), A^T p = 2 chi_G_i (y - y_d)"
                .into(),
        })
    }

    /// Random unit direction (control norm) supported in the follower's region.
    fn random_direction(&self, i: Follower, rng: &mut ChaCha8Rng) -> GridFunction {
        let mask = self.control_mask(i);
        let values = mask
            .indicator()
            .iter()
            .map(|&inside| {
                let z: f64 = rng.sample(StandardNormal);
                if inside {
                    z
                } else {
                    0.0
                }
            })
            .collect();
        let d = GridFunction::from_values(self.grid, values).expect("finite normals");
        let n = control_norm(&d);
        d.scale(1.0 / n)
    }

    /// Check the Nash inequalities on sampled feasible deviations: for each
    /// follower, `deviation_samples` random directions at uniform radii in
    /// `[0, M_i]`, the same directions on the sphere `M_i`, the zero control,
    /// and projected-gradient probes `P(f* - s ∇J)` for a few steps `s`.
    pub fn certify(&self, f1: &GridFunction, f2: &GridFunction) -> Result<Certificate> {
        let mut margins = [0.0; 2];
        let mut tolerances = [0.0; 2];
        let mut count = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        for i in [Follower::First, Follower::Second] {
            let (fi, other) = match i {
                Follower::First => (f1, f2),
                Follower::Second => (f2, f1),
            };
            let y = self.state(f1, f2)?;
            let star = self.cost_from_state(i, &y, fi);
            let radius = self.radius(i);
            let mut candidates = vec![GridFunction::zeros(self.grid)];
            for _ in 0..self.cfg.deviation_samples {
                let d = self.random_direction(i, &mut rng);
                let u: f64 = rng.gen_range(0.0..=1.0);
                candidates.push(d.scale(u * radius));
                candidates.push(d.scale(radius));
            }
            let grad = self.gradient_from_state(i, &y, fi)?;
            for s in [1e-3, 1e-1, 1.0] {
                candidates.push(self.project(i, &(fi - &grad.scale(s))));
            }
            let deltas = candidates
                .par_iter()
                .map(|v| {
                    let yv = self.with_control(i, v, other)?;
                    Ok(self.cost_from_state(i, &yv, v) - star)
                })
                .collect::<Result<Vec<f64>>>()?;
            let k = i.index() - 1;
            margins[k] = deltas.into_iter().fold(f64::INFINITY, f64::min);
            tolerances[k] = self.cfg.cert_rel_tol * (1.0 + star);
            count += candidates.len();
        }
        let certified = margins[0] >= -tolerances[0] && margins[1] >= -tolerances[1];
        Ok(Certificate {
            certified,
            margin: margins[0].min(margins[1]),
            margins,
            tolerances,
            deviations: count,
        })
    }

    /// Central finite differences of `J_i` along random masked directions
    /// against `⟨∇J_i, d⟩`; returns the relative errors.
    pub fn gradient_check(
        &self,
        i: Follower,
        f1: &GridFunction,
        f2: &GridFunction,
        n_directions: usize,
        step: f64,
        seed: u64,
    ) -> Result<Vec<GradientSample>> {
        let grad = self.gradient(i, f1, f2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs: Vec<GridFunction> = (0..n_directions)
            .map(|_| self.random_direction(i, &mut rng))
            .collect();
        dirs.par_iter()
            .map(|d| {
                let shifted = |s: f64| -> Result<f64> {
                    let mut fi = pick(i, f1, f2).clone();
                    fi.axpy(s, d);
                    match i {
                        Follower::First => self.cost(i, &fi, f2),
                        Follower::Second => self.cost(i, f1, &fi),
                    }
                };
                let fd = (shifted(step)? - shifted(-step)?) / (2.0 * step);
                let adjoint = control_inner(&grad, d);
                let scale = fd.abs().max(adjoint.abs());
                let relative_error = if scale > 0.0 {
                    (fd - adjoint).abs() / scale
                } else {
                    0.0
                };
                Ok(GradientSample {
                    finite_difference: fd,
                    adjoint,
                    relative_error,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub finite_difference: f64,
    pub adjoint: f64,
    pub relative_error: f64,
}

fn pick<'a>(i: Follower, f1: &'a GridFunction, f2: &'a GridFunction) -> &'a GridFunction {
    match i {
        Follower::First => f1,
        Follower::Second => f2,
    }
}

/// Build the game and run [`Game::nash_solve`].
pub fn nash_solve(cfg: &GameConfig) -> Result<NashResult> {
    Game::new(cfg.clone())?.nash_solve()
}
