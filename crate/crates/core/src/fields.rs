//! Analytic fields sampled onto grids: manufactured solutions, named sources
//! for configuration files, and random smooth bump families.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Grid, GridFunction, RegionMask};

/// Manufactured exact solutions of `-½ u_xx + x^α u_y = f` with zero boundary data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manufactured {
    /// `sin(πx) sin(πy)`
    #[default]
    SinSin,
    /// `x(1-x) y(1-y)`
    Polynomial,
}

impl Manufactured {
    pub fn exact(&self, x: f64, y: f64) -> f64 {
        match self {
            Manufactured::SinSin => (PI * x).sin() * (PI * y).sin(),
            Manufactured::Polynomial => x * (1.0 - x) * y * (1.0 - y),
        }
    }

    pub fn forcing(&self, x: f64, y: f64, alpha: f64) -> f64 {
        let xa = x.powf(alpha);
        match self {
            Manufactured::SinSin => {
                0.5 * PI * PI * (PI * x).sin() * (PI * y).sin()
                    + xa * PI * (PI * x).sin() * (PI * y).cos()
            }
            Manufactured::Polynomial => y * (1.0 - y) + xa * x * (1.0 - x) * (1.0 - 2.0 * y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Zero,
    Constant,
    /// `sin(kx π x) sin(ky π y)`
    SinSin,
    /// `x^α sin(π y)`
    PowerSinY,
    /// `x(1-x) y(1-y)`
    Polynomial,
    /// `exp(-((x-cx)² + (y-cy)²) / width²)`
    Gaussian,
    /// Source term of the `sin(πx) sin(πy)` manufactured solution.
    ForcingSinSin,
    /// Source term of the `x(1-x) y(1-y)` manufactured solution.
    ForcingPolynomial,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_width() -> f64 {
    0.15
}

/// Named field, optionally restricted to a rectangle `[x0, x1, y0, y1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub kx: f64,
    #[serde(default = "one")]
    pub ky: f64,
    #[serde(default = "half")]
    pub cx: f64,
    #[serde(default = "half")]
    pub cy: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 4]>,
}

impl FieldSpec {
    pub fn new(kind: FieldKind) -> Self {
        Self {
            kind,
            amplitude: 1.0,
            kx: 1.0,
            ky: 1.0,
            cx: 0.5,
            cy: 0.5,
            width: default_width(),
            support: None,
        }
    }

    pub fn amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn support(mut self, rect: [f64; 4]) -> Self {
        self.support = Some(rect);
        self
    }

    pub fn eval(&self, x: f64, y: f64, alpha: f64) -> f64 {
        let shape = match self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Constant => 1.0,
            FieldKind::SinSin => (self.kx * PI * x).sin() * (self.ky * PI * y).sin(),
            FieldKind::PowerSinY => x.powf(alpha) * (PI * y).sin(),
            FieldKind::Polynomial => x * (1.0 - x) * y * (1.0 - y),
            FieldKind::Gaussian => {
                let r2 = (x - self.cx).powi(2) + (y - self.cy).powi(2);
                (-r2 / (self.width * self.width)).exp()
            }
            FieldKind::ForcingSinSin => Manufactured::SinSin.forcing(x, y, alpha),
            FieldKind::ForcingPolynomial => Manufactured::Polynomial.forcing(x, y, alpha),
        };
        self.amplitude * shape
    }

    pub fn sample(&self, grid: Grid) -> Result<GridFunction> {
        let alpha = grid.alpha();
        let u = GridFunction::from_fn(grid, |x, y| self.eval(x, y, alpha));
        GridFunction::from_values(grid, u.into_values()).and_then(|u| match self.support {
            Some([x0, x1, y0, y1]) => Ok(RegionMask::rect(grid, x0, x1, y0, y1)?.apply(&u)),
            None => Ok(u),
        })
    }
}

/// `C∞` bump `amp · exp(1 - 1/(1 - ρ²))` on the ellipse `ρ < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub amplitude: f64,
}

impl SmoothBump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let rho2 = ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2);
        if rho2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - rho2)).exp()
        }
    }
}

/// Superposition of a few bumps, all supported in `[margin, 1 - margin]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSum {
    pub bumps: Vec<SmoothBump>,
}

impl BumpSum {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, margin: f64) -> Self {
        let count = rng.gen_range(1..=3);
        let bumps = (0..count)
            .map(|_| {
                let rx = rng.gen_range(0.1..0.5 - margin);
                let ry = rng.gen_range(0.1..0.5 - margin);
                let cx = rng.gen_range(margin + rx..1.0 - margin - rx);
                let cy = rng.gen_range(margin + ry..1.0 - margin - ry);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                SmoothBump {
                    cx,
                    cy,
                    rx,
                    ry,
                    amplitude: sign * rng.gen_range(0.5..1.5),
                }
            })
            .collect();
        Self { bumps }
    }

    pub fn family<R: Rng + ?Sized>(rng: &mut R, count: usize, margin: f64) -> Vec<Self> {
        (0..count).map(|_| Self::random(rng, margin)).collect()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.bumps.iter().map(|b| b.eval(x, y)).sum()
    }

    pub fn sample(&self, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x, y| self.eval(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central second differences of the exact solution reproduce the forcing.
    #[test]
    fn forcing_matches_exact_solution() {
        let h = 1e-4;
        for m in [Manufactured::SinSin, Manufactured::Polynomial] {
            for &(x, y) in &[(0.3, 0.7), (0.81, 0.12), (0.5, 0.5)] {
                let uxx = (m.exact(x + h, y) - 2.0 * m.exact(x, y) + m.exact(x - h, y)) / (h * h);
                let uy = (m.exact(x, y + h) - m.exact(x, y - h)) / (2.0 * h);
                let alpha = 0.7;
                let f = -0.5 * uxx + x.powf(alpha) * uy;
                assert!(
                    (f - m.forcing(x, y, alpha)).abs() < 1e-5,
                    "{m:?} at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn bumps_vanish_near_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for b in BumpSum::family(&mut rng, 50, 0.05) {
            for t in [0.0, 0.02, 0.049, 0.951, 0.99, 1.0] {
                for s in [0.1, 0.5, 0.9] {
                    assert_eq!(b.eval(t, s), 0.0);
                    assert_eq!(b.eval(s, t), 0.0);
                }
            }
        }
    }

    #[test]
    fn support_masks_field() {
        let g = Grid::new(9, 9, 0.5).unwrap();
        let f = FieldSpec::new(FieldKind::Constant)
            .support([0.5, 1.0, 0.0, 1.0])
            .sample(g)
            .unwrap();
        assert_eq!(f.at(0, 3), 0.0);
        assert_eq!(f.at(8, 3), 1.0);
    }
}
