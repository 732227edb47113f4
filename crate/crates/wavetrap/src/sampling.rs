//! Reproducible random inputs: directions, admissible angles and smooth
//! fields defined independently of the grid, so the same seed yields the same
//! functions at every resolution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::Normal;

use crate::rotations::Angles;
use crate::weighted_space::{HState, ScalarField, WeightedGrid};

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Normal::new(0.0, 1.0).expect("unit normal"))
}

/// Uniformly distributed point on S^{m−1}.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, m: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| standard_normal(rng));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Angles with every cos θ_i ≥ `min_cos`.
pub fn random_angles<R: Rng + ?Sized>(rng: &mut R, m: usize, min_cos: f64) -> Angles {
    let bound = min_cos.clamp(-1.0, 1.0).acos();
    Angles::new((1..m).map(|_| rng.gen_range(-bound..=bound)).collect())
}

/// A smooth function Σ c_k T_k(y) with c_k uniform in [−1,1]·decay^k.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevSeries {
    pub coefficients: Vec<f64>,
}

impl ChebyshevSeries {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, terms: usize, decay: f64) -> Self {
        let coefficients = (0..terms).map(|k| rng.gen_range(-1.0..=1.0) * decay.powi(k as i32)).collect();
        Self { coefficients }
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, y: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = c + 2.0 * y * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coefficients.first().copied().unwrap_or(0.0) + y * b1 - b2
    }

    pub fn sample(&self, grid: &WeightedGrid) -> ScalarField {
        grid.sample(|y| self.eval(y))
    }
}

/// Default shape for random smooth fields.
pub const SERIES_TERMS: usize = 12;
pub const SERIES_DECAY: f64 = 0.6;

/// A random smooth scalar field on the grid.
pub fn random_smooth_field<R: Rng + ?Sized>(rng: &mut R, grid: &WeightedGrid) -> ScalarField {
    ChebyshevSeries::random(rng, SERIES_TERMS, SERIES_DECAY).sample(grid)
}

/// A random smooth state with m components, scaled to ‖q‖_H = `norm`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, grid: &WeightedGrid, m: usize, norm: f64) -> HState {
    let n = grid.n();
    let mut q1 = DMatrix::zeros(n, m);
    let mut q2 = DMatrix::zeros(n, m);
    for k in 0..m {
        q1.set_column(k, &random_smooth_field(rng, grid));
        q2.set_column(k, &random_smooth_field(rng, grid));
    }
    let q = HState::new(q1, q2);
    let current = grid.h_norm(&q);
    q.scale(norm / current)
}
