//! Weighted Sobolev norms, Lebesgue norms and embedding ratios, plus sampled
//! Muckenhoupt-type ball conditions for power weights `x^e`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::derivatives;
use crate::error::{invalid, Result};
use crate::grid::{
    cell_power_integral, cell_quadrature, weighted_inner_report, Grid, GridFunction, NodeBlock,
    TracedFunction,
};
use crate::quad::{gauss_legendre, integrate};

/// Norms of a discrete function in `W^{1,1}(Ω; x^α)` and `V(Ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    /// `‖∂x u‖_{L²}`
    pub dx_l2: f64,
    /// `‖x^{α/2} ∂y u‖_{L²}`
    pub weighted_dy_l2: f64,
    /// Unweighted `‖∂y u‖_{L²}`, outside the `W^{1,1}` norm.
    pub dy_l2: f64,
    /// `‖∂x ∂y u‖_{L²}`
    pub mixed_l2: Option<f64>,
    pub w11: f64,
    pub v_norm: Option<f64>,
}

fn block_norms(grid: &Grid, block: NodeBlock<'_>, include_mixed: bool) -> NormReport {
    let alpha = grid.alpha();
    let d = derivatives(block, grid.hx(), grid.hy(), include_mixed);
    let q = |a: &[f64], w: &dyn Fn(f64, f64) -> f64| {
        let b = block.with_values(a);
        cell_quadrature(grid, b, b, w).0
    };
    let one = |_: f64, _: f64| 1.0;
    let l2_sq = q(block.values, &one);
    let dx_sq = q(&d.dx, &one);
    let wdy_sq = q(&d.dy, &|x, _| x.powf(alpha));
    let dy_sq = q(&d.dy, &one);
    let mixed_sq = d.dxy.as_deref().map(|m| q(m, &one));
    let w11_sq = l2_sq + dx_sq + wdy_sq;
    NormReport {
        l2: l2_sq.sqrt(),
        dx_l2: dx_sq.sqrt(),
        weighted_dy_l2: wdy_sq.sqrt(),
        dy_l2: dy_sq.sqrt(),
        mixed_l2: mixed_sq.map(f64::sqrt),
        w11: w11_sq.sqrt(),
        v_norm: mixed_sq.map(|m| (w11_sq + m).sqrt()),
    }
}

/// Norms of a function vanishing on the boundary.
pub fn norms_of(u: &GridFunction, include_mixed: bool) -> NormReport {
    block_norms(u.grid(), u.block(), include_mixed)
}

/// Norms of a function sampled on all nodes, boundary trace included.
pub fn norms_of_traced(u: &TracedFunction, include_mixed: bool) -> NormReport {
    block_norms(u.grid(), u.block(), include_mixed)
}

/// Which power of `x` weighs `‖f‖_{L²(Ω; x^{-α})}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Convention {
    /// `(∬ x^{-α} f²)^{1/2}`, the form used in the energy estimate.
    #[default]
    HalfExponent,
    /// `(∬ x^{-2α} f²)^{1/2} = ‖x^{-α} f‖_{L²}`.
    FullExponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub value: f64,
    pub convention: L2Convention,
    pub singular_warning: bool,
}

pub fn l2_weighted_norm(f: &GridFunction, convention: L2Convention) -> WeightedNorm {
    let alpha = f.grid().alpha();
    let exponent = match convention {
        L2Convention::HalfExponent => -alpha,
        L2Convention::FullExponent => -2.0 * alpha,
    };
    let w = weighted_inner_report(f, f, exponent).expect("same grid");
    WeightedNorm {
        value: w.value.max(0.0).sqrt(),
        convention,
        singular_warning: w.singular_warning,
    }
}

/// `(∬ |u|^q)^{1/q}`, `q ∈ [1, ∞)`.
pub fn lq_norm(u: &GridFunction, q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(invalid("q", format!("must lie in [1, ∞), got {q}")));
    }
    Ok(cell_power_integral(u.grid(), u.block(), q).powf(1.0 / q))
}

/// `‖u‖_{L^q} / ‖u‖_{W^{1,1}(Ω; x^α)}` for `q ∈ [2, 4]`.
pub fn embedding_ratio(u: &GridFunction, q: f64) -> Result<f64> {
    if !(2.0..=4.0).contains(&q) {
        return Err(invalid(
            "q",
            format!("embedding exponent must lie in [2, 4], got {q}"),
        ));
    }
    let w11 = norms_of(u, false).w11;
    if w11 == 0.0 {
        return Err(invalid("u", "zero function has no embedding ratio"));
    }
    Ok(lq_norm(u, q)? / w11)
}

/// Euclidean disc `B((cx, cy), radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Ball {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn diam(&self) -> f64 {
        2.0 * self.radius
    }

    /// x-extent of `B ∩ Ω`.
    fn x_range(&self) -> (f64, f64) {
        (
            (self.cx - self.radius).max(0.0),
            (self.cx + self.radius).min(1.0),
        )
    }
}

/// Sampling plan for ball families: centres uniform in Ω, radii log-uniform
/// in `[min_radius, diam(Ω)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSampling {
    pub n_balls: usize,
    pub seed: u64,
    pub min_radius: f64,
}

impl BallSampling {
    pub fn new(n_balls: usize, seed: u64) -> Self {
        Self {
            n_balls,
            seed,
            min_radius: 1.0 / 128.0,
        }
    }

    pub fn balls(&self) -> Vec<Ball> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = (self.min_radius.ln(), std::f64::consts::SQRT_2.ln());
        (0..self.n_balls)
            .map(|_| {
                let cx = rng.gen_range(0.0..1.0);
                let cy = rng.gen_range(0.0..1.0);
                let radius = rng.gen_range(lo..hi).exp();
                Ball { cx, cy, radius }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_balls == 0 {
            return Err(invalid("n_balls", "need at least one ball"));
        }
        if !(self.min_radius > 0.0 && self.min_radius < std::f64::consts::SQRT_2) {
            return Err(invalid(
                "min_radius",
                format!("must lie in (0, √2), got {}", self.min_radius),
            ));
        }
        Ok(())
    }
}

/// Sampled products above this are reported as divergent.
pub const OVERFLOW_THRESHOLD: f64 = 1e12;

const GL_POINTS: usize = 24;

/// `∫_a^b x^e dx`, infinite when the integral diverges at `a = 0`.
fn power_integral(a: f64, b: f64, e: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if e == -1.0 {
        if a == 0.0 {
            f64::INFINITY
        } else {
            (b / a).ln()
        }
    } else if a == 0.0 && e < -1.0 {
        f64::INFINITY
    } else {
        (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0)
    }
}

/// `∬_{B∩Ω} x^e dx dy`.
///
/// Exact in x; in y the ball is parametrised by `y = cy + r sin φ` and the
/// φ-interval is split where the chord meets `x = 0` or `x = 1`, so each
/// Gauss-Legendre panel sees a smooth integrand.
pub fn power_moment(ball: &Ball, e: f64) -> f64 {
    let Ball { cx, cy, radius: r } = *ball;
    if e <= -1.0 && r > cx {
        return f64::INFINITY;
    }
    let lo = (-cy / r).clamp(-1.0, 1.0).asin();
    let hi = ((1.0 - cy) / r).clamp(-1.0, 1.0).asin();
    let mut cuts = vec![lo, hi];
    for edge in [cx, 1.0 - cx] {
        if edge < r {
            let phi = (edge / r).acos();
            cuts.extend([phi, -phi]);
        }
    }
    cuts.retain(|p| *p >= lo && *p <= hi);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let rule = gauss_legendre(GL_POINTS);
    let inner = |phi: f64| {
        let s = r * phi.cos();
        power_integral((cx - s).max(0.0), (cx + s).min(1.0), e) * r * phi.cos()
    };
    cuts.windows(2)
        .map(|w| integrate(inner, w[0], w[1], &rule))
        .sum()
}

/// `(avg w)(avg w^{-1/(p-1)})^{p-1}` over `B ∩ Ω` for `w = x^e`, `p > 1`.
pub fn ap_product(ball: &Ball, exponent: f64, p: f64) -> f64 {
    let area = power_moment(ball, 0.0);
    let avg_w = power_moment(ball, exponent) / area;
    let avg_dual = power_moment(ball, -exponent / (p - 1.0)) / area;
    avg_w * avg_dual.powf(p - 1.0)
}

/// `(avg w) / ess inf w` over `B ∩ Ω` (the `p = 1` condition).
pub fn a1_ratio(ball: &Ball, exponent: f64) -> f64 {
    let area = power_moment(ball, 0.0);
    let avg_w = power_moment(ball, exponent) / area;
    let (a, b) = ball.x_range();
    let inf = a.powf(exponent).min(b.powf(exponent));
    avg_w / inf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApEstimate {
    pub p: f64,
    /// Supremum of the sampled products (may be `+∞`).
    #[serde(with = "crate::float_serde::scalar")]
    pub constant: f64,
    pub samples: usize,
    pub diverged: bool,
}

fn sup_over(balls: &[Ball], f: impl Fn(&Ball) -> f64 + Sync + Send) -> f64 {
    let values: Vec<f64> = balls.par_iter().map(f).collect();
    values.into_iter().fold(
        0.0,
        |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) },
    )
}

/// Sampled `A_p` constant of the power weight `x^weight_exponent`, `p > 1`.
pub fn muckenhoupt_ap(weight_exponent: f64, p: f64, sampling: &BallSampling) -> Result<ApEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(
            "p",
            format!("A_p sampling needs p > 1, got {p}; use muckenhoupt_a1"),
        ));
    }
    sampling.validate()?;
    let balls = sampling.balls();
    let constant = sup_over(&balls, |b| ap_product(b, weight_exponent, p));
    Ok(ApEstimate {
        p,
        constant,
        samples: balls.len(),
        diverged: !(constant <= OVERFLOW_THRESHOLD),
    })
}

/// Sampled `A_1` constant of `x^weight_exponent`.
pub fn muckenhoupt_a1(weight_exponent: f64, sampling: &BallSampling) -> Result<ApEstimate> {
    sampling.validate()?;
    let balls = sampling.balls();
    let constant = sup_over(&balls, |b| a1_ratio(b, weight_exponent));
    Ok(ApEstimate {
        p: 1.0,
        constant,
        samples: balls.len(),
        diverged: !(constant <= OVERFLOW_THRESHOLD),
    })
}

/// Left-hand side `|B|^{-1} diam(B) v(B∩Ω)^{1/q} [w^{-1/(p-1)}(B∩Ω)]^{(p-1)/p}`
/// of the two-weight ball condition with `v ≡ 1` and `w = x^w_exponent`.
/// For `p = 1` the bracket is replaced by its limit `ess sup w^{-1}`.
pub fn ball_condition_lhs(ball: &Ball, q: f64, p: f64, w_exponent: f64) -> f64 {
    let v_mass = power_moment(ball, 0.0);
    let dual = if p == 1.0 {
        let (a, b) = ball.x_range();
        let e = -w_exponent;
        if e < 0.0 && a == 0.0 {
            f64::INFINITY
        } else {
            a.powf(e).max(b.powf(e))
        }
    } else {
        power_moment(ball, -w_exponent / (p - 1.0)).powf((p - 1.0) / p)
    };
    ball.diam() / ball.area() * v_mass.powf(1.0 / q) * dual
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConditionEstimate {
    /// Sample supremum over balls and both weights (may be `+∞`).
    #[serde(with = "crate::float_serde::scalar")]
    pub value: f64,
    pub diverged: bool,
    pub samples: usize,
}

/// Sampled supremum `A_pq` of the two-weight ball condition for `v ≡ 1`
/// and the power weights `w_1 = x^{e_1}`, `w_2 = x^{e_2}`.
pub fn ball_condition(
    q: f64,
    p: f64,
    weights: (f64, f64),
    sampling: &BallSampling,
) -> Result<BallConditionEstimate> {
    if !(p >= 1.0 && p <= q && q.is_finite()) {
        return Err(invalid(
            "p, q",
            format!("need 1 <= p <= q < ∞, got p = {p}, q = {q}"),
        ));
    }
    sampling.validate()?;
    let balls = sampling.balls();
    let value = sup_over(&balls, |b| {
        ball_condition_lhs(b, q, p, weights.0).max(ball_condition_lhs(b, q, p, weights.1))
    });
    Ok(BallConditionEstimate {
        value,
        diverged: !(value <= OVERFLOW_THRESHOLD),
        samples: balls.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_polynomial_norm() {
        // ∫₀¹ x²(1-x)² dx = 1/30, so ‖x(1-x)y(1-y)‖_{L²} = 1/30
        let errs: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| {
                let g = Grid::new(n, n, 0.5).unwrap();
                let u = GridFunction::from_fn(g, |x, y| x * (1.0 - x) * y * (1.0 - y));
                let r = norms_of(&u, true);
                assert!(r.w11.is_finite() && r.v_norm.unwrap().is_finite());
                (r.l2 - 1.0 / 30.0).abs()
            })
            .collect();
        assert!(errs[3] < 1e-4, "{errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_function_norms() {
        let g = Grid::new(8, 8, 0.5).unwrap();
        let r = norms_of(&GridFunction::zeros(g), true);
        assert_eq!(r.w11, 0.0);
        assert_eq!(r.v_norm, Some(0.0));
        assert_eq!(
            l2_weighted_norm(&GridFunction::zeros(g), L2Convention::FullExponent).value,
            0.0
        );
        assert_eq!(lq_norm(&GridFunction::zeros(g), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn report_identities() {
        let g = Grid::new(20, 17, 0.3).unwrap();
        let u = GridFunction::from_fn(g, |x, y| (3.0 * x).sin() * (y - 0.4).powi(2) + x * y);
        let r = norms_of(&u, true);
        let sq = r.l2.powi(2) + r.dx_l2.powi(2) + r.weighted_dy_l2.powi(2);
        assert_relative_eq!(r.w11.powi(2), sq, max_relative = 1e-12);
        assert_relative_eq!(
            r.v_norm.unwrap().powi(2),
            r.w11.powi(2) + r.mixed_l2.unwrap().powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn weighted_l2_examples() {
        for alpha in [0.25, 0.5, 1.0] {
            let g = Grid::new(256, 256, alpha).unwrap();
            let f = GridFunction::from_fn(g, |x, _| x.powf(alpha));
            let n = l2_weighted_norm(&f, L2Convention::HalfExponent);
            assert_eq!(n.convention, L2Convention::HalfExponent);
            assert!(
                (n.value - (1.0 / (1.0 + alpha)).sqrt()).abs() < 2e-2,
                "alpha {alpha}: {}",
                n.value
            );
        }
        let g = Grid::new(512, 512, 0.5).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let n = l2_weighted_norm(&one, L2Convention::HalfExponent);
        assert!((n.value - 2f64.sqrt()).abs() < 4e-2, "{}", n.value);
        assert!(!n.singular_warning);
    }

    #[test]
    fn full_exponent_flags_divergence_at_alpha_one() {
        let g = Grid::new(16, 16, 1.0).unwrap();
        let one = GridFunction::constant(g, 1.0);
        assert!(l2_weighted_norm(&one, L2Convention::FullExponent).singular_warning);
        assert!(l2_weighted_norm(&one, L2Convention::HalfExponent).singular_warning);
        let g = Grid::new(16, 16, 0.4).unwrap();
        let one = GridFunction::constant(g, 1.0);
        assert!(!l2_weighted_norm(&one, L2Convention::FullExponent).singular_warning);
    }

    #[test]
    fn lq_examples() {
        let g = Grid::new(256, 256, 0.5).unwrap();
        let one = GridFunction::constant(g, 1.0);
        for q in [1.0, 2.0, 3.5] {
            assert!((lq_norm(&one, q).unwrap() - 1.0).abs() < 1e-2);
        }
        let x = GridFunction::from_fn(g, |x, _| x);
        assert!((lq_norm(&x, 4.0).unwrap() - 0.2f64.powf(0.25)).abs() < 1e-2);
        assert!(lq_norm(&x, 0.5).is_err());
    }

    #[test]
    fn embedding_ratio_contracts() {
        let g = Grid::new(32, 32, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x, y| x * (1.0 - x) * y * (1.0 - y));
        assert!(embedding_ratio(&u, 2.0).unwrap() <= 1.0);
        assert!(embedding_ratio(&u, 5.0).is_err());
        assert!(embedding_ratio(&u, 1.5).is_err());
        assert!(embedding_ratio(&GridFunction::zeros(g), 2.0).is_err());
    }

    #[test]
    fn traced_norms_see_boundary_values() {
        let g = Grid::new(32, 32, 0.5).unwrap();
        let t = TracedFunction::from_fn(g, |_, _| 1.0);
        let r = norms_of_traced(&t, false);
        assert!((r.l2 - 1.0).abs() < 1e-12);
        assert!(r.dx_l2 < 1e-12 && r.dy_l2 < 1e-12);
    }

    #[test]
    fn power_moments_match_closed_forms() {
        // ball well inside Ω: area πr², ∬ x = cx πr²
        let b = Ball {
            cx: 0.5,
            cy: 0.5,
            radius: 0.2,
        };
        assert_relative_eq!(power_moment(&b, 0.0), b.area(), max_relative = 1e-12);
        assert_relative_eq!(power_moment(&b, 1.0), 0.5 * b.area(), max_relative = 1e-12);
        // big ball covering Ω
        let big = Ball {
            cx: 0.5,
            cy: 0.5,
            radius: 1.0,
        };
        assert_relative_eq!(power_moment(&big, 0.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(power_moment(&big, -0.5), 2.0, max_relative = 1e-10);
        // half disc against x = 0
        let edge = Ball {
            cx: 0.0,
            cy: 0.5,
            radius: 0.3,
        };
        assert_relative_eq!(
            power_moment(&edge, 0.0),
            0.5 * edge.area(),
            max_relative = 1e-12
        );
        // ∬_{half disc} x = 2r³/3
        assert_relative_eq!(
            power_moment(&edge, 1.0),
            2.0 * 0.027 / 3.0,
            max_relative = 1e-10
        );
        assert!(power_moment(&edge, -1.0).is_infinite());
    }

    #[test]
    fn unit_weight_has_unit_constant() {
        for p in [1.5, 2.0, 3.0] {
            let est = muckenhoupt_ap(0.0, p, &BallSampling::new(200, 11)).unwrap();
            assert!(
                (est.constant - 1.0).abs() < 1e-10,
                "p={p}: {}",
                est.constant
            );
            assert!(!est.diverged);
        }
        let a1 = muckenhoupt_a1(0.0, &BallSampling::new(50, 1)).unwrap();
        assert!((a1.constant - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ap_requires_p_above_one() {
        assert!(muckenhoupt_ap(0.5, 1.0, &BallSampling::new(10, 1)).is_err());
        assert!(muckenhoupt_ap(0.5, 2.0, &BallSampling::new(0, 1)).is_err());
    }

    #[test]
    fn ball_condition_shrinks_with_radius() {
        let mut prev = f64::INFINITY;
        for k in 1..8 {
            let r = 0.1 / 4f64.powi(k);
            let b = Ball {
                cx: 0.5,
                cy: 0.5,
                radius: r,
            };
            let v =
                ball_condition_lhs(&b, 4.0, 2.0, 0.0).max(ball_condition_lhs(&b, 4.0, 2.0, 0.5));
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-2);
        assert!(ball_condition(2.0, 3.0, (0.0, 0.5), &BallSampling::new(5, 1)).is_err());
    }
}
