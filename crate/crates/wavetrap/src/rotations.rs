//! The ordered Givens product R_θ = R₂R₃⋯R_m and its generators.
//!
//! R_i rotates the (e₁, e_i) plane by θ_i. The generators
//! A_j = R_θ⁻¹ ∂R_θ/∂θ_j are formed from the factored product
//! A_j = (R_{j+1}⋯R_m)ᵀ G_j (R_{j+1}⋯R_m), where G_j = E_{j1} − E_{1j} is the
//! constant logarithmic derivative of R_j. Indices in this module are
//! 1-based in the mathematical sense (e₁ is column 0).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An m×m real matrix.
pub type SquareMatrix = DMatrix<f64>;

/// The angles (θ₂, …, θ_m).
#[derive(Clone, Debug, PartialEq)]
pub struct Angles(Vec<f64>);

impl Angles {
    pub fn new(theta: Vec<f64>) -> Self {
        Self(theta)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m.saturating_sub(1)])
    }

    /// Target dimension m.
    pub fn m(&self) -> usize {
        self.0.len() + 1
    }

    /// θ_i for 2 ≤ i ≤ m.
    pub fn get(&self, i: usize) -> f64 {
        self.0[i - 2]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.0[i - 2] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Smallest cos θ_i, or 1 when m = 1.
    pub fn min_cos(&self) -> f64 {
        self.0.iter().map(|t| t.cos()).fold(1.0, f64::min)
    }

    /// Fails with the first index whose cosine drops below `floor`.
    pub fn check_regime(&self, floor: f64) -> Result<()> {
        for (k, t) in self.0.iter().enumerate() {
            if t.cos() < floor {
                return Err(Error::RegimeViolation { index: k + 2, cos: t.cos() });
            }
        }
        Ok(())
    }

    /// Euclidean distance between angle vectors.
    pub fn distance(&self, other: &Angles) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

fn check_index(i: usize, m: usize) -> Result<()> {
    if i < 2 || i > m {
        return Err(Error::InvalidParameter(format!("rotation index {i} outside 2..={m}")));
    }
    Ok(())
}

/// R_i(angle): identity except cos/−sin/sin/cos in rows and columns 1, i.
pub fn givens(i: usize, angle: f64, m: usize) -> Result<SquareMatrix> {
    check_index(i, m)?;
    let (s, c) = angle.sin_cos();
    let mut r = DMatrix::identity(m, m);
    r[(0, 0)] = c;
    r[(0, i - 1)] = -s;
    r[(i - 1, 0)] = s;
    r[(i - 1, i - 1)] = c;
    Ok(r)
}

/// ∂R_i/∂angle.
fn givens_derivative(i: usize, angle: f64, m: usize) -> SquareMatrix {
    let (s, c) = angle.sin_cos();
    let mut r = DMatrix::zeros(m, m);
    r[(0, 0)] = -s;
    r[(0, i - 1)] = -c;
    r[(i - 1, 0)] = c;
    r[(i - 1, i - 1)] = -s;
    r
}

/// G_i = E_{i1} − E_{1i}, the generator of R_i.
fn givens_generator(i: usize, m: usize) -> SquareMatrix {
    let mut g = DMatrix::zeros(m, m);
    g[(i - 1, 0)] = 1.0;
    g[(0, i - 1)] = -1.0;
    g
}

fn factor(theta: &Angles, i: usize) -> SquareMatrix {
    givens(i, theta.get(i), theta.m()).expect("index within 2..=m")
}

/// Product R_from ⋯ R_m (identity when from > m).
fn tail_product(theta: &Angles, from: usize) -> SquareMatrix {
    let m = theta.m();
    (from..=m).fold(SquareMatrix::identity(m, m), |acc, i| acc * factor(theta, i))
}

/// R_θ = R₂R₃⋯R_m.
pub fn compose_r(theta: &Angles) -> SquareMatrix {
    tail_product(theta, 2)
}

/// φ_{k,l} = Π_{n=k}^{l} cos θ_n, equal to 1 when k > l.
pub fn cos_product(theta: &Angles, k: usize, l: usize) -> f64 {
    (k..=l).map(|n| theta.get(n).cos()).product()
}

/// Entry-wise closed form of R_θ.
pub fn closed_form_r(theta: &Angles) -> SquareMatrix {
    let m = theta.m();
    let sin = |k: usize| theta.get(k).sin();
    DMatrix::from_fn(m, m, |row, col| {
        let (k, l) = (row + 1, col + 1);
        match (k, l) {
            (1, 1) => cos_product(theta, 2, m),
            (k, 1) => sin(k) * cos_product(theta, k + 1, m),
            (1, l) => -sin(l) * cos_product(theta, 2, l - 1),
            (k, l) if k == l => theta.get(k).cos(),
            (k, l) if k < l => -sin(k) * sin(l) * cos_product(theta, k + 1, l - 1),
            _ => 0.0,
        }
    })
}

/// A_j from the factored product (R_{j+1}⋯R_m)ᵀ G_j (R_{j+1}⋯R_m).
pub fn generator_a(theta: &Angles, j: usize) -> Result<SquareMatrix> {
    let m = theta.m();
    check_index(j, m)?;
    let tail = tail_product(theta, j + 1);
    Ok(tail.transpose() * givens_generator(j, m) * tail)
}

/// ∂R_θ/∂θ_j with the j-th factor differentiated analytically.
pub fn d_compose_r(theta: &Angles, j: usize) -> Result<SquareMatrix> {
    let m = theta.m();
    check_index(j, m)?;
    let head = (2..j).fold(SquareMatrix::identity(m, m), |acc, i| acc * factor(theta, i));
    Ok(head * givens_derivative(j, theta.get(j), m) * tail_product(theta, j + 1))
}

/// R_θ⁻¹ ∂R_θ/∂θ_j evaluated directly.
pub fn generator_a_direct(theta: &Angles, j: usize) -> Result<SquareMatrix> {
    Ok(compose_r(theta).transpose() * d_compose_r(theta, j)?)
}

/// (∂R_θ⁻¹/∂θ_j) R_θ evaluated directly. Differentiating R_θ⁻¹R_θ = I shows
/// this equals −A_j.
pub fn inverse_derivative_form(theta: &Angles, j: usize) -> Result<SquareMatrix> {
    Ok(d_compose_r(theta, j)?.transpose() * compose_r(theta))
}

/// Largest singular value.
pub fn operator_norm(a: &SquareMatrix) -> f64 {
    a.clone().singular_values().max()
}
