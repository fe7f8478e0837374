//! Analytic benchmark fields with exact gradient and Laplacian.
//!
//! These serve as ground truth when scoring a stencil: the approximated
//! operator values are compared against the exact ones at the central node.

use crate::node_gen::Point2;

/// An analytic test field. Parameters are stored per field so variants can
/// be explored, but the labeling pipeline always uses [`default_fields`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestField {
    /// f(x, y) = x^n y^m
    Monomial { n: u32, m: u32 },
    /// f(x, y) = sin(kx x) sin(ky y)
    Sinusoidal { kx: f64, ky: f64 },
    /// f(x, y) = exp(-(x^2 + y^2) / (2 sigma)), sigma > 0
    Exponential { sigma: f64 },
}

/// The three fields used to label stencils: Monomial(2,3), Sinusoidal(2,1),
/// Exponential(1).
pub fn default_fields() -> [TestField; 3] {
    [
        TestField::Monomial { n: 2, m: 3 },
        TestField::Sinusoidal { kx: 2.0, ky: 1.0 },
        TestField::Exponential { sigma: 1.0 },
    ]
}

fn powu(base: f64, e: u32) -> f64 {
    base.powi(e as i32)
}

impl TestField {
    pub fn value(&self, p: Point2) -> f64 {
        match *self {
            TestField::Monomial { n, m } => powu(p.x, n) * powu(p.y, m),
            TestField::Sinusoidal { kx, ky } => (kx * p.x).sin() * (ky * p.y).sin(),
            TestField::Exponential { sigma } => (-(p.x * p.x + p.y * p.y) / (2.0 * sigma)).exp(),
        }
    }

    pub fn gradient(&self, p: Point2) -> (f64, f64) {
        match *self {
            TestField::Monomial { n, m } => {
                let gx = if n == 0 {
                    0.0
                } else {
                    n as f64 * powu(p.x, n - 1) * powu(p.y, m)
                };
                let gy = if m == 0 {
                    0.0
                } else {
                    m as f64 * powu(p.x, n) * powu(p.y, m - 1)
                };
                (gx, gy)
            }
            TestField::Sinusoidal { kx, ky } => (
                kx * (kx * p.x).cos() * (ky * p.y).sin(),
                ky * (kx * p.x).sin() * (ky * p.y).cos(),
            ),
            TestField::Exponential { sigma } => {
                let f = self.value(p);
                (-p.x / sigma * f, -p.y / sigma * f)
            }
        }
    }

    pub fn laplacian(&self, p: Point2) -> f64 {
        match *self {
            TestField::Monomial { n, m } => {
                let tx = if n < 2 {
                    0.0
                } else {
                    (n * (n - 1)) as f64 * powu(p.x, n - 2) * powu(p.y, m)
                };
                let ty = if m < 2 {
                    0.0
                } else {
                    (m * (m - 1)) as f64 * powu(p.x, n) * powu(p.y, m - 2)
                };
                tx + ty
            }
            TestField::Sinusoidal { kx, ky } => -(kx * kx + ky * ky) * self.value(p),
            TestField::Exponential { sigma } => {
                let r2 = p.x * p.x + p.y * p.y;
                (r2 / (sigma * sigma) - 2.0 / sigma) * self.value(p)
            }
        }
    }
}
