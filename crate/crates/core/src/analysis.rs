//! Verification campaigns: manufactured-solution convergence, the a priori
//! energy bound, coercivity of the stabilised bilinear form, the strict
//! inclusion example, embedding ratios and sampled weight conditions.
//!
//! Every study returns a [`StudyResult`] whose per-level series line up with
//! `levels`; all randomness is drawn from seeded ChaCha streams.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::derivatives;
use crate::error::{invalid, Result};
use crate::fields::{BumpSum, FieldKind, FieldSpec, Manufactured};
use crate::grid::{cell_quadrature, nodal_inner, Grid, GridFunction, TracedFunction};
use crate::norms::{
    ball_condition, embedding_ratio, l2_weighted_norm, muckenhoupt_ap, norms_of, norms_of_traced,
    BallSampling, L2Convention,
};
use crate::operator::{assemble, Scheme};
use crate::sparse::SolverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }
}

/// Flat table, one row per sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    #[serde(with = "crate::float_serde::rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub name: String,
    pub levels: Vec<usize>,
    /// Named series, one value per level.
    #[serde(with = "crate::float_serde::map_vec")]
    pub metrics: BTreeMap<String, Vec<f64>>,
    /// Orders between consecutive levels (`levels.len() - 1` entries), when meaningful.
    #[serde(with = "crate::float_serde::vec")]
    pub observed_orders: Vec<f64>,
    /// Further order series, keyed by the error they measure.
    #[serde(default, with = "crate::float_serde::map_vec")]
    pub secondary_orders: BTreeMap<String, Vec<f64>>,
    pub verdict: Verdict,
    /// Thresholds the verdict was judged against.
    #[serde(with = "crate::float_serde::map")]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Table>,
}

impl StudyResult {
    fn new(name: &str, levels: Vec<usize>) -> Self {
        Self {
            name: name.to_string(),
            levels,
            metrics: BTreeMap::new(),
            observed_orders: Vec::new(),
            secondary_orders: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            thresholds: BTreeMap::new(),
            notes: Vec::new(),
            samples: None,
        }
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.get(name).map(Vec::as_slice)
    }

    /// Per-level rows of every metric, for tabular output.
    pub fn level_table(&self) -> Table {
        let mut cols = vec!["level"];
        cols.extend(self.metrics.keys().map(String::as_str));
        let mut t = Table::new(&cols);
        for (k, &level) in self.levels.iter().enumerate() {
            let mut row = vec![level as f64];
            row.extend(self.metrics.values().map(|s| s[k]));
            t.push(row);
        }
        t
    }
}

/// Acceptance knobs; the theory asserts bounds exist but gives no values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub upwind_order: f64,
    pub centered_order: f64,
    /// Allowed growth of the energy ratio from coarsest to finest level.
    pub energy_growth: f64,
    /// Allowed relative spread of the `W^{1,1}` norm in the inclusion study.
    pub inclusion_spread: f64,
    /// Level from which the inclusion plateau is judged.
    pub inclusion_from_level: usize,
    pub embedding_growth: f64,
    /// Inflation applied to the sampled Poincaré constant.
    pub poincare_safety: f64,
    /// Accepted deviation of the unit weight's `A_2` constant from 1.
    pub unit_weight_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            upwind_order: 0.9,
            centered_order: 1.5,
            energy_growth: 1.2,
            inclusion_spread: 0.05,
            inclusion_from_level: 32,
            embedding_growth: 1.1,
            poincare_safety: 1.5,
            unit_weight_tol: 1e-9,
        }
    }
}

fn check_levels(levels: &[usize], min: usize) -> Result<()> {
    if levels.len() < min {
        return Err(invalid(
            "levels",
            format!("need at least {min} levels, got {}", levels.len()),
        ));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("levels", "must be strictly increasing"));
    }
    if levels[0] < 2 {
        return Err(invalid(
            "levels",
            "each level needs at least 2 interior nodes",
        ));
    }
    Ok(())
}

fn orders(errors: &[f64], h: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Manufactured-solution refinement study on `n x n` interior grids.
///
/// Orders use the true spacings `h = 1/(n+1)`; the verdict is on the
/// smallest order of the L² error (lumped nodal norm).
pub fn convergence_study(
    scheme: Scheme,
    levels: &[usize],
    manufactured: Manufactured,
    alpha: f64,
    thresholds: &Thresholds,
) -> Result<StudyResult> {
    check_levels(levels, 3)?;
    let rows = levels
        .par_iter()
        .map(|&n| -> Result<[f64; 4]> {
            let grid = Grid::square(n, alpha)?;
            let f = GridFunction::from_fn(grid, |x, y| manufactured.forcing(x, y, alpha));
            let exact = GridFunction::from_fn(grid, |x, y| manufactured.exact(x, y));
            let solver = assemble(grid, scheme).factorize(SolverKind::Auto)?;
            let (u, report) = solver.solve(&f, 1e-12)?;
            let err = &u - &exact;
            Ok([
                grid.hx(),
                err.max_abs(),
                nodal_inner(&err, &err, 0.0).sqrt(),
                report.residual_norm,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (h, max_err, l2_err) = (col(0), col(1), col(2));

    let mut out = StudyResult::new("convergence", levels.to_vec());
    let l2_orders = orders(&l2_err, &h);
    let max_orders = orders(&max_err, &h);
    let threshold = match scheme {
        Scheme::Upwind => thresholds.upwind_order,
        Scheme::Centered => thresholds.centered_order,
    };
    let worst = l2_orders.iter().copied().fold(f64::INFINITY, f64::min);
    out.verdict = Verdict::from_bool(worst >= threshold);
    out.thresholds.insert("min_l2_order".into(), threshold);
    out.thresholds.insert("alpha".into(), alpha);
    out.metrics.insert("h".into(), h);
    out.metrics.insert("max_error".into(), max_err);
    out.metrics.insert("l2_error".into(), l2_err);
    out.secondary_orders.insert("max_error".into(), max_orders);
    out.metrics.insert("solve_residual".into(), col(3));
    out.observed_orders = l2_orders;
    out.notes.push(format!(
        "scheme {}, manufactured {:?}, smallest L2 order {worst:.4}",
        scheme.name(),
        manufactured
    ));
    Ok(out)
}

/// The five sources used for the energy bound by default.
pub fn default_energy_family() -> Vec<FieldSpec> {
    vec![
        FieldSpec::new(FieldKind::PowerSinY),
        FieldSpec::new(FieldKind::SinSin).support([0.5, 1.0, 0.0, 1.0]),
        FieldSpec::new(FieldKind::SinSin),
        FieldSpec::new(FieldKind::Constant),
        FieldSpec {
            cx: 0.3,
            cy: 0.6,
            ..FieldSpec::new(FieldKind::Gaussian)
        },
    ]
}

/// Ratio `‖u_h‖_{W^{1,1}} / ‖f‖_{L²(x^{-α})}` (half-exponent convention) per
/// source and level. Passes when every member's ratio on the finest level
/// is at most `energy_growth` times its ratio on the coarsest.
pub fn energy_estimate_study(
    family: &[FieldSpec],
    levels: &[usize],
    alpha: f64,
    scheme: Scheme,
    thresholds: &Thresholds,
) -> Result<StudyResult> {
    check_levels(levels, 2)?;
    if family.is_empty() {
        return Err(invalid("family", "need at least one source"));
    }
    let per_level = levels
        .par_iter()
        .map(|&n| -> Result<Vec<[f64; 4]>> {
            let grid = Grid::square(n, alpha)?;
            let solver = assemble(grid, scheme).factorize(SolverKind::Auto)?;
            family
                .iter()
                .enumerate()
                .map(|(k, spec)| {
                    let f = spec.sample(grid)?;
                    let fnorm = l2_weighted_norm(&f, L2Convention::HalfExponent).value;
                    if !(fnorm > 0.0) {
                        return Err(invalid(
                            "family",
                            format!("member {k} has zero weighted norm on level {n}"),
                        ));
                    }
                    let (u, _) = solver.solve(&f, 1e-12)?;
                    let w11 = norms_of(&u, false).w11;
                    // largest |u| on the row next to y = 1, where the layer sits
                    let ny = grid.ny();
                    let layer = (0..grid.nx())
                        .map(|i| u.at(i, ny - 1).abs())
                        .fold(0.0, f64::max);
                    Ok([w11 / fnorm, w11, fnorm, layer])
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = StudyResult::new("energy", levels.to_vec());
    let last = levels.len() - 1;
    let mut ok = true;
    for k in 0..family.len() {
        let series = |m: usize| per_level.iter().map(|row| row[k][m]).collect::<Vec<f64>>();
        let ratio = series(0);
        let growth = ratio[last] / ratio[0];
        ok &= growth <= thresholds.energy_growth;
        out.notes.push(format!(
            "member {k} ({:?}): ratio growth {growth:.4}",
            family[k].kind
        ));
        out.metrics.insert(format!("ratio_{k}"), ratio);
        out.metrics.insert(format!("w11_{k}"), series(1));
        out.metrics.insert(format!("f_norm_{k}"), series(2));
        out.metrics.insert(format!("top_row_max_{k}"), series(3));
    }
    out.verdict = Verdict::from_bool(ok);
    out.thresholds
        .insert("ratio_growth".into(), thresholds.energy_growth);
    out.thresholds.insert("alpha".into(), alpha);
    Ok(out)
}

/// `a(v, v) = ∬ [x^α (∂y v)² + ½ ∂x v ∂x∂y v] e^{-θy}` with nodal differences.
pub fn bilinear_form(v: &GridFunction, theta: f64) -> f64 {
    let g = v.grid();
    let alpha = g.alpha();
    let b = v.block();
    let d = derivatives(b, g.hx(), g.hy(), true);
    let dxy = d.dxy.expect("mixed derivative requested");
    let dy = b.with_values(&d.dy);
    let (adv, _) = cell_quadrature(g, dy, dy, |x, y| x.powf(alpha) * (-theta * y).exp());
    let (mix, _) = cell_quadrature(g, b.with_values(&d.dx), b.with_values(&dxy), |_, y| {
        (-theta * y).exp()
    });
    adv + 0.5 * mix
}

/// `δ = min{e^{-θ}, θ e^{-θ}/8, θ e^{-θ}/(8μ)}`.
pub fn coercivity_constant(theta: f64, mu: f64) -> f64 {
    let e = (-theta).exp();
    e.min(theta * e / 8.0).min(theta * e / (8.0 * mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoercivityConfig {
    pub theta: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Interior nodes per direction.
    pub n: usize,
    pub alpha: f64,
    /// Bumps vanish within this distance of the boundary.
    pub margin: f64,
}

impl Default for CoercivityConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            n_samples: 200,
            seed: 0,
            n: 64,
            alpha: 0.5,
            margin: 0.05,
        }
    }
}

/// Coercivity of `a` on random smooth bumps.
///
/// The Poincaré constant `μ_h = max ‖v‖²/‖∂x v‖²` is estimated on the same
/// family and inflated by `poincare_safety` before `δ_h` is formed; each
/// sample's margin `a(v,v) - δ_h ‖v‖²_{W^{1,1}}` must be nonnegative.
pub fn coercivity_check(cfg: &CoercivityConfig, thresholds: &Thresholds) -> Result<StudyResult> {
    if !(cfg.theta > 0.0 && cfg.theta.is_finite()) {
        return Err(invalid(
            "theta",
            format!("must be positive, got {}", cfg.theta),
        ));
    }
    if cfg.n_samples == 0 {
        return Err(invalid("n_samples", "need at least one sample"));
    }
    if !(cfg.margin > 0.0 && cfg.margin < 0.35) {
        return Err(invalid(
            "margin",
            format!("must lie in (0, 0.35), got {}", cfg.margin),
        ));
    }
    let grid = Grid::square(cfg.n, cfg.alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let family = BumpSum::family(&mut rng, cfg.n_samples, cfg.margin);
    let samples: Vec<GridFunction> = family.iter().map(|b| b.sample(grid)).collect();
    coercivity_on(&samples, cfg.theta, thresholds.poincare_safety, cfg.n)
}

/// Coercivity check on an explicit family of test functions.
pub fn coercivity_on(
    samples: &[GridFunction],
    theta: f64,
    safety: f64,
    level: usize,
) -> Result<StudyResult> {
    let stats: Vec<[f64; 4]> = samples
        .par_iter()
        .map(|v| {
            let r = norms_of(v, false);
            let a = bilinear_form(v, theta);
            let poincare = if r.dx_l2 > 0.0 {
                (r.l2 / r.dx_l2).powi(2)
            } else {
                0.0
            };
            [a, r.w11 * r.w11, poincare, r.dx_l2]
        })
        .collect();
    let mu_sample = stats.iter().map(|s| s[2]).fold(0.0, f64::max);
    let mu = safety * mu_sample;
    let delta = if mu > 0.0 {
        coercivity_constant(theta, mu)
    } else {
        coercivity_constant(theta, 1.0)
    };

    let mut table = Table::new(&[
        "sample",
        "a_vv",
        "delta_w11_sq",
        "margin",
        "relative_margin",
        "poincare_ratio",
    ]);
    let mut violations = 0usize;
    let mut min_rel = f64::INFINITY;
    for (k, s) in stats.iter().enumerate() {
        let rhs = delta * s[1];
        let margin = s[0] - rhs;
        let rel = if rhs > 0.0 { margin / rhs } else { 0.0 };
        if margin < 0.0 {
            violations += 1;
            log::warn!(
                "coercivity violated by sample {k}: a(v,v) = {:.6e} < {rhs:.6e}",
                s[0]
            );
        }
        min_rel = min_rel.min(rel);
        table.push(vec![k as f64, s[0], rhs, margin, rel, s[2]]);
    }

    let mut out = StudyResult::new("coercivity", vec![level]);
    out.metrics.insert("mu_sample".into(), vec![mu_sample]);
    out.metrics.insert("mu_h".into(), vec![mu]);
    out.metrics.insert("delta_h".into(), vec![delta]);
    out.metrics
        .insert("violations".into(), vec![violations as f64]);
    out.metrics
        .insert("min_relative_margin".into(), vec![min_rel]);
    out.thresholds.insert("theta".into(), theta);
    out.thresholds.insert("poincare_safety".into(), safety);
    out.verdict = Verdict::from_bool(violations == 0);
    out.samples = Some(table);
    Ok(out)
}

/// `(x² + y)^{1/4}`: in the weighted space for `α = 1/2`, but `∂y u ∉ L²`.
pub fn inclusion_function(x: f64, y: f64) -> f64 {
    (x * x + y).powf(0.25)
}

/// Strict-inclusion demonstration on the traced samples of
/// [`inclusion_function`]: the weighted norm plateaus while the unweighted
/// `‖∂y u‖` keeps growing. A verdict is given only for `α = 1/2` and at
/// least two levels at or above `inclusion_from_level`.
pub fn strict_inclusion_demo(
    levels: &[usize],
    alpha: f64,
    thresholds: &Thresholds,
) -> Result<StudyResult> {
    check_levels(levels, 1)?;
    let reports = levels
        .par_iter()
        .map(|&n| -> Result<_> {
            let grid = Grid::square(n, alpha)?;
            Ok(norms_of_traced(
                &TracedFunction::from_fn(grid, inclusion_function),
                false,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = StudyResult::new("inclusion", levels.to_vec());
    let w11: Vec<f64> = reports.iter().map(|r| r.w11).collect();
    let dy: Vec<f64> = reports.iter().map(|r| r.dy_l2).collect();
    out.metrics.insert("w11".into(), w11.clone());
    out.metrics.insert("dy_l2".into(), dy.clone());
    out.metrics.insert(
        "weighted_dy_l2".into(),
        reports.iter().map(|r| r.weighted_dy_l2).collect(),
    );
    out.metrics
        .insert("dx_l2".into(), reports.iter().map(|r| r.dx_l2).collect());
    out.metrics
        .insert("l2".into(), reports.iter().map(|r| r.l2).collect());
    out.thresholds
        .insert("w11_spread".into(), thresholds.inclusion_spread);
    out.thresholds
        .insert("from_level".into(), thresholds.inclusion_from_level as f64);

    let plateau: Vec<f64> = levels
        .iter()
        .zip(&w11)
        .filter(|(&n, _)| n >= thresholds.inclusion_from_level)
        .map(|(_, &w)| w)
        .collect();
    if alpha != 0.5 {
        out.notes.push(format!(
            "alpha = {alpha}: report only, the example is specific to alpha = 1/2"
        ));
    } else if levels.len() < 2 || plateau.len() < 2 {
        out.notes.push("not enough levels to judge a trend".into());
    } else {
        let lo = plateau.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plateau.iter().copied().fold(0.0, f64::max);
        let spread = (hi - lo) / lo;
        let increasing = dy.windows(2).all(|w| w[1] > w[0]);
        out.notes.push(format!(
            "w11 spread {spread:.4}, dy strictly increasing: {increasing}"
        ));
        out.verdict = Verdict::from_bool(spread <= thresholds.inclusion_spread && increasing);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub n_functions: usize,
    pub exponents: Vec<f64>,
    pub levels: Vec<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub margin: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            n_functions: 100,
            exponents: vec![2.0, 3.0, 4.0],
            levels: vec![64, 128],
            seed: 0,
            alpha: 0.5,
            margin: 0.05,
        }
    }
}

/// Largest `‖u‖_{L^q} / ‖u‖_{W^{1,1}}` over a random bump family, per level
/// and exponent. Passes when, for every `q`, the finest level's maximum is
/// within `embedding_growth` of the coarsest level's.
pub fn embedding_study(cfg: &EmbeddingConfig, thresholds: &Thresholds) -> Result<StudyResult> {
    check_levels(&cfg.levels, 2)?;
    if cfg.n_functions == 0 || cfg.exponents.is_empty() {
        return Err(invalid(
            "n_functions",
            "need at least one function and one exponent",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let family = BumpSum::family(&mut rng, cfg.n_functions, cfg.margin);
    let nq = cfg.exponents.len();
    // ratios[level][member][q]
    let ratios = cfg
        .levels
        .par_iter()
        .map(|&n| -> Result<Vec<Vec<f64>>> {
            let grid = Grid::square(n, cfg.alpha)?;
            family
                .iter()
                .map(|b| {
                    let u = b.sample(grid);
                    cfg.exponents
                        .iter()
                        .map(|&q| embedding_ratio(&u, q))
                        .collect()
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = StudyResult::new("embedding", cfg.levels.clone());
    let mut table = Table::new(&["level", "member", "q", "ratio"]);
    for (l, &n) in cfg.levels.iter().enumerate() {
        for (m, row) in ratios[l].iter().enumerate() {
            for (k, &q) in cfg.exponents.iter().enumerate() {
                table.push(vec![n as f64, m as f64, q, row[k]]);
            }
        }
    }
    let mut ok = true;
    for (k, &q) in cfg.exponents.iter().enumerate() {
        let maxima: Vec<f64> = ratios
            .iter()
            .map(|lvl| lvl.iter().map(|r| r[k]).fold(0.0, f64::max))
            .collect();
        let growth = maxima[maxima.len() - 1] / maxima[0];
        ok &= growth <= thresholds.embedding_growth;
        out.notes
            .push(format!("q = {q}: growth of max ratio {growth:.4}"));
        out.metrics.insert(format!("max_ratio_q{q}"), maxima);
    }
    debug_assert_eq!(table.rows.len(), cfg.levels.len() * cfg.n_functions * nq);
    out.thresholds
        .insert("max_ratio_growth".into(), thresholds.embedding_growth);
    out.verdict = Verdict::from_bool(ok);
    out.samples = Some(table);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuckenhouptConfig {
    pub n_balls: usize,
    pub seed: u64,
    pub min_radius: f64,
    pub alpha: f64,
}

impl Default for MuckenhouptConfig {
    fn default() -> Self {
        Self {
            n_balls: 500,
            seed: 0,
            min_radius: 1.0 / 128.0,
            alpha: 0.5,
        }
    }
}

/// Sampled weight conditions: the unit weight has `A_2` constant 1, `x^{1/2}`
/// has a finite one, `x^{-3}` diverges; the two-weight ball condition with
/// `v ≡ 1`, `w = (1, x^α)` is reported for `(p, q) = (2, 2)` and `(2, 4)`.
pub fn muckenhoupt_study(cfg: &MuckenhouptConfig, thresholds: &Thresholds) -> Result<StudyResult> {
    let sampling = BallSampling {
        n_balls: cfg.n_balls,
        seed: cfg.seed,
        min_radius: cfg.min_radius,
    };
    let unit = muckenhoupt_ap(0.0, 2.0, &sampling)?;
    let sqrt = muckenhoupt_ap(0.5, 2.0, &sampling)?;
    let cube = muckenhoupt_ap(-3.0, 2.0, &sampling)?;
    let l22 = ball_condition(2.0, 2.0, (0.0, cfg.alpha), &sampling)?;
    let l24 = ball_condition(4.0, 2.0, (0.0, cfg.alpha), &sampling)?;

    let mut table = Table::new(&[
        "ball",
        "cx",
        "cy",
        "radius",
        "a2_unit",
        "a2_sqrt",
        "a2_inverse_cube",
    ]);
    for (k, b) in sampling.balls().iter().enumerate() {
        table.push(vec![
            k as f64,
            b.cx,
            b.cy,
            b.radius,
            crate::norms::ap_product(b, 0.0, 2.0),
            crate::norms::ap_product(b, 0.5, 2.0),
            crate::norms::ap_product(b, -3.0, 2.0),
        ]);
    }

    let mut out = StudyResult::new("muckenhoupt", vec![cfg.n_balls]);
    let flag = |d: bool| if d { 1.0 } else { 0.0 };
    out.metrics.insert("a2_unit".into(), vec![unit.constant]);
    out.metrics.insert("a2_sqrt".into(), vec![sqrt.constant]);
    out.metrics
        .insert("a2_sqrt_diverged".into(), vec![flag(sqrt.diverged)]);
    out.metrics
        .insert("a2_inverse_cube".into(), vec![cube.constant]);
    out.metrics
        .insert("a2_inverse_cube_diverged".into(), vec![flag(cube.diverged)]);
    out.metrics
        .insert("ball_condition_p2_q2".into(), vec![l22.value]);
    out.metrics
        .insert("ball_condition_p2_q4".into(), vec![l24.value]);
    out.thresholds
        .insert("unit_weight_tol".into(), thresholds.unit_weight_tol);
    let ok = (unit.constant - 1.0).abs() <= thresholds.unit_weight_tol
        && !sqrt.diverged
        && cube.diverged
        && !l22.diverged
        && !l24.diverged;
    out.verdict = Verdict::from_bool(ok);
    out.samples = Some(table);
    Ok(out)
}
