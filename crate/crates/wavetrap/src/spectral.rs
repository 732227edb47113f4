//! Linearization around κ(d,·)e₁: the scalar operators L̄_d (coordinate 1)
//! and L̃_d (coordinates 2..m), their nonnegative modes, the adjoint modes
//! that define the projectors, and the quadratic forms on the stable parts.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solitons::{damping_coefficient, kappa, kappa0, kappa_field, linear_coefficient};
use crate::weighted_space::{HState, ScalarField, WeightedGrid};

/// A scalar element (r₁, r₂) of H.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarPair {
    pub first: ScalarField,
    pub second: ScalarField,
}

impl ScalarPair {
    pub fn new(first: ScalarField, second: ScalarField) -> Self {
        Self { first, second }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(ScalarField::zeros(n), ScalarField::zeros(n))
    }

    /// Coordinate k of a vector state.
    pub fn from_state(q: &HState, k: usize) -> Self {
        Self::new(q.q1.column(k).into_owned(), q.q2.column(k).into_owned())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(&self.first * c, &self.second * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.first + &other.first, &self.second + &other.second)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.first - &other.first, &self.second - &other.second)
    }

    pub fn amax(&self) -> f64 {
        self.first.amax().max(self.second.amax())
    }
}

/// φ on scalar pairs.
pub fn phi_pair(grid: &WeightedGrid, q: &ScalarPair, r: &ScalarPair) -> f64 {
    grid.phi_scalar(&q.first, &q.second, &r.first, &r.second)
}

/// ‖r‖_H on scalar pairs.
pub fn h_norm_pair(grid: &WeightedGrid, r: &ScalarPair) -> f64 {
    phi_pair(grid, r, r).max(0.0).sqrt()
}

/// ψ̄ = pκ^{p−1} − 2(p+1)/(p−1)².
pub fn psi_bar(d: f64, y: f64, p: f64) -> Result<f64> {
    Ok(p * kappa(d, y, p)?.powf(p - 1.0) - linear_coefficient(p))
}

/// ψ̃ = κ^{p−1} − 2(p+1)/(p−1)².
pub fn psi_tilde(d: f64, y: f64, p: f64) -> Result<f64> {
    Ok(kappa(d, y, p)?.powf(p - 1.0) - linear_coefficient(p))
}

/// The two scalar blocks of the linearization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Coordinate along the soliton direction, potential ψ̄.
    Bar,
    /// Transverse coordinates, potential ψ̃.
    Tilde,
}

/// ψ̄ or ψ̃ at the nodes.
pub fn psi_field(grid: &WeightedGrid, d: f64, branch: Branch) -> Result<ScalarField> {
    let p = grid.p();
    let k = kappa_field(grid, d)?;
    let factor = match branch {
        Branch::Bar => p,
        Branch::Tilde => 1.0,
    };
    Ok(k.map(|v| factor * v.powf(p - 1.0) - linear_coefficient(p)))
}

/// (r₂, 𝓛r₁ + ψr₁ − ((p+3)/(p−1))r₂ − 2y r₂′) for a given potential.
fn apply_with_potential(grid: &WeightedGrid, psi: &ScalarField, r: &ScalarPair) -> ScalarPair {
    let c = damping_coefficient(grid.p());
    let dr2 = grid.derivative(&r.second);
    let lr1 = grid.apply_l(&r.first);
    let second = ScalarField::from_fn(grid.n(), |i, _| {
        let y = grid.nodes()[i];
        lr1[i] + psi[i] * r.first[i] - c * r.second[i] - 2.0 * y * dr2[i]
    });
    ScalarPair::new(r.second.clone(), second)
}

/// L̄_d r.
pub fn apply_lbar(grid: &WeightedGrid, d: f64, r: &ScalarPair) -> Result<ScalarPair> {
    Ok(apply_with_potential(grid, &psi_field(grid, d, Branch::Bar)?, r))
}

/// L̃_d r.
pub fn apply_ltilde(grid: &WeightedGrid, d: f64, r: &ScalarPair) -> Result<ScalarPair> {
    Ok(apply_with_potential(grid, &psi_field(grid, d, Branch::Tilde)?, r))
}

/// The adjoint of L̄_d or L̃_d with respect to φ:
/// (R(r₂), −𝓛r₁ + r₁ + ((p+3)/(p−1))r₂ + 2y r₂′ − (8/(p−1)) r₂/(1−y²)),
/// where R(r₂) solves −𝓛R + R = 𝓛r₂ + ψr₂.
pub fn apply_adjoint(grid: &WeightedGrid, d: f64, branch: Branch, r: &ScalarPair) -> Result<ScalarPair> {
    let p = grid.p();
    let psi = psi_field(grid, d, branch)?;
    let rhs = grid.apply_l(&r.second) + psi.component_mul(&r.second);
    let first = grid.solve_resolvent(&rhs)?;
    let c = damping_coefficient(p);
    let dr2 = grid.derivative(&r.second);
    let singular = grid.over_one_minus_y2(&r.second);
    let lr1 = grid.apply_l(&r.first);
    let second = ScalarField::from_fn(grid.n(), |i, _| {
        let y = grid.nodes()[i];
        -lr1[i] + r.first[i] + c * r.second[i] + 2.0 * y * dr2[i] - 8.0 / (p - 1.0) * singular[i]
    });
    Ok(ScalarPair::new(first, second))
}

/// The full vector linearization L_d applied to q, written out
/// coordinate-free: (q₂, 𝓛q₁ + ψ̄q₁,₁e₁ + ψ̃Σ_{j≥2}q₁,ⱼeⱼ − ((p+3)/(p−1))q₂ − 2y∂_y q₂).
pub fn apply_linearized(grid: &WeightedGrid, d: f64, q: &HState) -> Result<HState> {
    let psi_b = psi_field(grid, d, Branch::Bar)?;
    let psi_t = psi_field(grid, d, Branch::Tilde)?;
    let c = damping_coefficient(grid.p());
    let lq = grid.apply_l_field(&q.q1);
    let dq2 = grid.derivative_field(&q.q2);
    let second = DMatrix::from_fn(q.n(), q.m(), |i, k| {
        let y = grid.nodes()[i];
        let psi = if k == 0 { psi_b[i] } else { psi_t[i] };
        lq[(i, k)] + psi * q.q1[(i, k)] - c * q.q2[(i, k)] - 2.0 * y * dq2[(i, k)]
    });
    Ok(HState::new(q.q2.clone(), second))
}

/// F̄_λ^d: λ = 1 gives (1−d²)^{p/(p−1)}(1+dy)^{−(p+1)/(p−1)}(1, 1);
/// λ = 0 gives (1−d²)^{1/(p−1)}((y+d)(1+dy)^{−(p+1)/(p−1)}, 0).
pub fn f_bar(grid: &WeightedGrid, d: f64, lambda: u8) -> Result<ScalarPair> {
    check_d(d)?;
    let p = grid.p();
    let e = (p + 1.0) / (p - 1.0);
    match lambda {
        1 => {
            let pre = (1.0 - d * d).powf(p / (p - 1.0));
            let v = grid.sample(|y| pre * (1.0 + d * y).powf(-e));
            Ok(ScalarPair::new(v.clone(), v))
        }
        0 => {
            let pre = (1.0 - d * d).powf(1.0 / (p - 1.0));
            let v = grid.sample(|y| pre * (y + d) * (1.0 + d * y).powf(-e));
            Ok(ScalarPair::new(v, ScalarField::zeros(grid.n())))
        }
        _ => Err(invalid_lambda(lambda)),
    }
}

/// F̃₀^d = (κ(d,·), 0).
pub fn f_tilde(grid: &WeightedGrid, d: f64) -> Result<ScalarPair> {
    Ok(ScalarPair::new(kappa_field(grid, d)?, ScalarField::zeros(grid.n())))
}

fn check_d(d: f64) -> Result<()> {
    if !(d.abs() < 1.0) {
        return Err(Error::Domain { name: "d", value: d, domain: "(-1, 1)" });
    }
    Ok(())
}

fn invalid_lambda(lambda: u8) -> Error {
    Error::InvalidParameter(format!("eigenvalue {lambda} is not 0 or 1"))
}

/// Power of (1±d) in front of the second component of W̄_λ^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WBarPrefactor {
    /// (1−d²)^{1/(p−1)}: the normalization that makes φ(W̄_λ^d, F̄_λ^d) = 1.
    Symmetric,
    /// (1−d)^{1/(p−1)}: gives φ(W̄_λ^d, F̄_λ^d) = (1+d)^{−1/(p−1)}.
    OneSided,
}

/// 1/c̄_λ = 2(2/(p−1)+λ)∫(y²/(1−y²))^{1−λ}ρ dy by quadrature.
pub fn c_bar_inverse(grid: &WeightedGrid, lambda: u8) -> Result<f64> {
    let a = grid.weight_exponent();
    let ones = ScalarField::from_element(grid.n(), 1.0);
    let integral = match lambda {
        1 => grid.integrate_rho(&ones),
        0 => {
            let y = grid.nodes().clone();
            grid.integrate_rho_over_one_minus_y2(&y, &y)
        }
        _ => return Err(invalid_lambda(lambda)),
    };
    Ok(2.0 * (a + f64::from(lambda)) * integral)
}

/// 1/c̃₀ = (4κ₀²/(p−1))∫ρ/(1−y²) dy by quadrature.
pub fn c_tilde_inverse(grid: &WeightedGrid) -> f64 {
    let p = grid.p();
    let ones = ScalarField::from_element(grid.n(), 1.0);
    4.0 * kappa0(p).powi(2) / (p - 1.0) * grid.integrate_rho_over_one_minus_y2(&ones, &ones)
}

/// First component of an adjoint mode: the solution of
/// −𝓛r + r = (λ − (p+3)/(p−1))r₂ − 2y r₂′ + (8/(p−1)) r₂/(1−y²).
fn adjoint_first_component(grid: &WeightedGrid, lambda: f64, r2: &ScalarField) -> Result<ScalarField> {
    let p = grid.p();
    let c = damping_coefficient(p);
    let dr2 = grid.derivative(r2);
    let singular = grid.over_one_minus_y2(r2);
    let rhs = ScalarField::from_fn(grid.n(), |i, _| {
        let y = grid.nodes()[i];
        (lambda - c) * r2[i] - 2.0 * y * dr2[i] + 8.0 / (p - 1.0) * singular[i]
    });
    grid.solve_resolvent(&rhs)
}

/// W̄_λ^d with an explicit choice of the (1±d) prefactor.
pub fn w_bar_with(grid: &WeightedGrid, d: f64, lambda: u8, prefactor: WBarPrefactor) -> Result<(ScalarPair, f64)> {
    check_d(d)?;
    let p = grid.p();
    let c_norm = 1.0 / c_bar_inverse(grid, lambda)?;
    let base = match prefactor {
        WBarPrefactor::Symmetric => 1.0 - d * d,
        WBarPrefactor::OneSided => 1.0 - d,
    };
    let pre = c_norm * base.powf(1.0 / (p - 1.0));
    let e = (p + 1.0) / (p - 1.0);
    let second = match lambda {
        1 => grid.sample(|y| pre * (1.0 - y * y) * (1.0 + d * y).powf(-e)),
        _ => grid.sample(|y| pre * (y + d) * (1.0 + d * y).powf(-e)),
    };
    let first = adjoint_first_component(grid, f64::from(lambda), &second)?;
    Ok((ScalarPair::new(first, second), c_norm))
}

/// W̄_λ^d, the adjoint mode dual to F̄_λ^d.
pub fn w_bar(grid: &WeightedGrid, d: f64, lambda: u8) -> Result<ScalarPair> {
    Ok(w_bar_with(grid, d, lambda, WBarPrefactor::Symmetric)?.0)
}

/// W̃₀^d, the adjoint mode dual to F̃₀^d.
pub fn w_tilde(grid: &WeightedGrid, d: f64) -> Result<ScalarPair> {
    let second = kappa_field(grid, d)? / c_tilde_inverse(grid);
    let first = adjoint_first_component(grid, 0.0, &second)?;
    Ok(ScalarPair::new(first, second))
}

/// One nonnegative mode with its adjoint partner.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub d: f64,
    pub lambda: u8,
    pub f: ScalarPair,
    pub w: ScalarPair,
    pub c_norm: f64,
}

/// Biorthogonality tolerance checked at construction.
pub const BIORTHOGONALITY_TOLERANCE: f64 = 1e-6;

impl EigenData {
    pub fn bar(grid: &WeightedGrid, d: f64, lambda: u8) -> Result<Self> {
        let f = f_bar(grid, d, lambda)?;
        let (w, c_norm) = w_bar_with(grid, d, lambda, WBarPrefactor::Symmetric)?;
        Self { d, lambda, f, w, c_norm }.checked(grid)
    }

    pub fn tilde(grid: &WeightedGrid, d: f64) -> Result<Self> {
        let f = f_tilde(grid, d)?;
        let w = w_tilde(grid, d)?;
        Self { d, lambda: 0, f, w, c_norm: 1.0 / c_tilde_inverse(grid) }.checked(grid)
    }

    fn checked(self, grid: &WeightedGrid) -> Result<Self> {
        let pairing = phi_pair(grid, &self.w, &self.f);
        if !((pairing - 1.0).abs() <= BIORTHOGONALITY_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "adjoint mode normalization {pairing} at d = {}, lambda = {}",
                self.d, self.lambda
            )));
        }
        Ok(self)
    }

    /// φ(W, r).
    pub fn project(&self, grid: &WeightedGrid, r: &ScalarPair) -> f64 {
        phi_pair(grid, &self.w, r)
    }
}

/// Everything needed to split states at a fixed d.
#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub d: f64,
    pub bar0: EigenData,
    pub bar1: EigenData,
    pub tilde0: EigenData,
    psi_bar: ScalarField,
    psi_tilde: ScalarField,
}

/// Bar-branch decomposition r = α₀F̄₀ + α₁F̄₁ + r₋.
#[derive(Clone, Debug)]
pub struct BarDecomposition {
    pub alpha0: f64,
    pub alpha1: f64,
    pub remainder: ScalarPair,
}

/// Tilde-branch decomposition r = α₀F̃₀ + r₋.
#[derive(Clone, Debug)]
pub struct TildeDecomposition {
    pub alpha0: f64,
    pub remainder: ScalarPair,
}

impl SpectralFrame {
    pub fn new(grid: &WeightedGrid, d: f64) -> Result<Self> {
        Ok(Self {
            d,
            bar0: EigenData::bar(grid, d, 0)?,
            bar1: EigenData::bar(grid, d, 1)?,
            tilde0: EigenData::tilde(grid, d)?,
            psi_bar: psi_field(grid, d, Branch::Bar)?,
            psi_tilde: psi_field(grid, d, Branch::Tilde)?,
        })
    }

    /// π̄_λ^d(r).
    pub fn project_bar(&self, grid: &WeightedGrid, lambda: u8, r: &ScalarPair) -> Result<f64> {
        match lambda {
            0 => Ok(self.bar0.project(grid, r)),
            1 => Ok(self.bar1.project(grid, r)),
            _ => Err(invalid_lambda(lambda)),
        }
    }

    /// π̃₀^d(r).
    pub fn project_tilde(&self, grid: &WeightedGrid, r: &ScalarPair) -> f64 {
        self.tilde0.project(grid, r)
    }

    pub fn decompose_bar(&self, grid: &WeightedGrid, r: &ScalarPair) -> BarDecomposition {
        let alpha0 = self.bar0.project(grid, r);
        let alpha1 = self.bar1.project(grid, r);
        let remainder = r.sub(&self.bar0.f.scale(alpha0)).sub(&self.bar1.f.scale(alpha1));
        BarDecomposition { alpha0, alpha1, remainder }
    }

    pub fn decompose_tilde(&self, grid: &WeightedGrid, r: &ScalarPair) -> TildeDecomposition {
        let alpha0 = self.tilde0.project(grid, r);
        let remainder = r.sub(&self.tilde0.f.scale(alpha0));
        TildeDecomposition { alpha0, remainder }
    }

    fn form(grid: &WeightedGrid, psi: &ScalarField, q: &ScalarPair, r: &ScalarPair) -> f64 {
        let dq = grid.derivative(&q.first);
        let dr = grid.derivative(&r.first);
        (0..grid.n())
            .map(|i| {
                let y = grid.nodes()[i];
                grid.weights()[i]
                    * (-psi[i] * q.first[i] * r.first[i]
                        + dq[i] * dr[i] * (1.0 - y * y)
                        + q.second[i] * r.second[i])
            })
            .sum()
    }

    /// φ̄_d(q, r) = ∫(−ψ̄q₁r₁ + q₁′r₁′(1−y²) + q₂r₂)ρ.
    pub fn form_bar(&self, grid: &WeightedGrid, q: &ScalarPair, r: &ScalarPair) -> f64 {
        Self::form(grid, &self.psi_bar, q, r)
    }

    /// φ̃_d(q, r) = ∫(−ψ̃q₁r₁ + q₁′r₁′(1−y²) + q₂r₂)ρ.
    pub fn form_tilde(&self, grid: &WeightedGrid, q: &ScalarPair, r: &ScalarPair) -> f64 {
        Self::form(grid, &self.psi_tilde, q, r)
    }

    pub fn psi_bar_field(&self) -> &ScalarField {
        &self.psi_bar
    }

    pub fn psi_tilde_field(&self) -> &ScalarField {
        &self.psi_tilde
    }
}

/// Extremes of a ratio sample, folded into the constant C₀ with
/// 1/C₀ ≤ ratio ≤ C₀.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FittedBounds {
    pub min: f64,
    pub max: f64,
}

impl FittedBounds {
    pub fn from_ratios<I: IntoIterator<Item = f64>>(ratios: I) -> Self {
        ratios.into_iter().fold(Self { min: f64::INFINITY, max: f64::NEG_INFINITY }, |acc, r| Self {
            min: acc.min.min(r),
            max: acc.max.max(r),
        })
    }

    pub fn constant(&self) -> f64 {
        self.max.max(1.0 / self.min)
    }
}

/// Rejects negative form values on a stable subspace.
pub fn require_coercive(value: f64) -> Result<f64> {
    if value < 0.0 {
        return Err(Error::Coercivity { value });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_smooth_field, ChebyshevSeries};
    use crate::solitons::dy_kappa;
    use crate::weighted_space::{jacobi_mass, Params};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(p: f64, n: usize) -> WeightedGrid {
        WeightedGrid::new(Params::new(p, 3, n).unwrap()).unwrap()
    }

    fn random_pair(rng: &mut ChaCha8Rng, g: &WeightedGrid) -> ScalarPair {
        ScalarPair::new(random_smooth_field(rng, g), random_smooth_field(rng, g))
    }

    #[test]
    fn potentials_at_zero_velocity() {
        for &p in &[2.0, 3.0, 5.0] {
            let expected = 2.0 * (p + 1.0) / (p - 1.0);
            for &y in &[-0.8, 0.0, 0.6] {
                assert!((psi_bar(0.0, y, p).unwrap() - expected).abs() < 1e-12);
                assert!(psi_tilde(0.0, y, p).unwrap().abs() < 1e-12);
                let d = 0.4;
                let gap = psi_bar(d, y, p).unwrap() - psi_tilde(d, y, p).unwrap();
                assert!((gap - (p - 1.0) * kappa(d, y, p).unwrap().powf(p - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigenfunctions_at_zero_velocity() {
        let g = grid(3.0, 32);
        let f0 = f_bar(&g, 0.0, 0).unwrap();
        assert!((&f0.first - g.nodes()).amax() < 1e-15 && f0.second.amax() == 0.0);
        let f1 = f_bar(&g, 0.0, 1).unwrap();
        assert!(f1.first.iter().chain(f1.second.iter()).all(|v| (v - 1.0).abs() < 1e-15));
        let ft = f_tilde(&g, 0.0).unwrap();
        assert!(ft.first.iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-15));
        assert!(f_bar(&g, 0.0, 2).is_err());
        assert!(f_bar(&g, 1.0, 0).is_err());
    }

    #[test]
    fn eigen_residuals() {
        let g = grid(3.0, 128);
        for &d in &[-0.9, -0.5, 0.0, 0.3, 0.9] {
            for lambda in [0u8, 1] {
                let f = f_bar(&g, d, lambda).unwrap();
                let res = apply_lbar(&g, d, &f).unwrap().sub(&f.scale(f64::from(lambda)));
                assert!(h_norm_pair(&g, &res) <= 1e-7, "d={d} lambda={lambda}");
            }
            let ft = f_tilde(&g, d).unwrap();
            assert!(h_norm_pair(&g, &apply_ltilde(&g, d, &ft).unwrap()) <= 1e-7, "d={d}");
        }
    }

    #[test]
    fn d_kappa_is_a_multiple_of_the_zero_mode() {
        let g = grid(3.0, 32);
        let p = 3.0;
        for &d in &[-0.7, 0.2, 0.85] {
            let f0 = f_bar(&g, d, 0).unwrap();
            let factor = -2.0 * kappa0(p) / ((p - 1.0) * (1.0 - d * d));
            for (i, &y) in g.nodes().iter().enumerate() {
                let dk = crate::solitons::d_kappa(d, y, p).unwrap();
                assert!((dk - factor * f0.first[i]).abs() < 1e-12 * (1.0 + dk.abs()));
            }
        }
    }

    #[test]
    fn normalizing_constants_match_beta_values() {
        for &p in &[2.0, 3.0, 5.0] {
            let g = grid(p, 64);
            let a = 2.0 / (p - 1.0);
            let one = 2.0 * (a + 1.0) * jacobi_mass(a);
            let zero = 2.0 * a * (jacobi_mass(a - 1.0) - jacobi_mass(a));
            assert!((c_bar_inverse(&g, 1).unwrap() - one).abs() < 1e-12 * one);
            assert!((c_bar_inverse(&g, 0).unwrap() - zero).abs() < 1e-12 * zero);
            let tilde = 4.0 * kappa0(p).powi(2) / (p - 1.0) * jacobi_mass(a - 1.0);
            assert!((c_tilde_inverse(&g) - tilde).abs() < 1e-12 * tilde);
        }
        let g = grid(3.0, 64);
        assert!((c_bar_inverse(&g, 1).unwrap() - 16.0 / 3.0).abs() < 1e-13);
        assert!((c_tilde_inverse(&g) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn biorthogonality() {
        for &p in &[2.0, 3.0, 5.0] {
            let g = grid(p, 128);
            for &d in &[-0.9, -0.3, 0.0, 0.6, 0.9] {
                let frame = SpectralFrame::new(&g, d).unwrap();
                let modes = [&frame.bar0, &frame.bar1];
                for (i, w) in modes.iter().enumerate() {
                    for (j, f) in modes.iter().enumerate() {
                        let expected = if i == j { 1.0 } else { 0.0 };
                        let got = phi_pair(&g, &w.w, &f.f);
                        assert!((got - expected).abs() <= 1e-6, "p={p} d={d} ({i},{j}) {got}");
                    }
                }
                let t = phi_pair(&g, &frame.tilde0.w, &frame.tilde0.f);
                assert!((t - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn one_sided_prefactor_misses_normalization() {
        let g = grid(3.0, 128);
        for &d in &[-0.6, 0.5] {
            for lambda in [0u8, 1] {
                let f = f_bar(&g, d, lambda).unwrap();
                let (w, _) = w_bar_with(&g, d, lambda, WBarPrefactor::OneSided).unwrap();
                let expected = (1.0 + d).powf(-0.5);
                assert!((phi_pair(&g, &w, &f) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adjoint_modes_are_eigenvectors() {
        let g = grid(3.0, 96);
        for &d in &[0.0, 0.5] {
            for lambda in [0u8, 1] {
                let w = w_bar(&g, d, lambda).unwrap();
                let image = apply_adjoint(&g, d, Branch::Bar, &w).unwrap();
                let res = image.sub(&w.scale(f64::from(lambda)));
                assert!(h_norm_pair(&g, &res) < 1e-10 * h_norm_pair(&g, &w), "d={d} lambda={lambda}");
            }
            let w = w_tilde(&g, d).unwrap();
            let res = apply_adjoint(&g, d, Branch::Tilde, &w).unwrap();
            assert!(h_norm_pair(&g, &res) < 1e-10 * h_norm_pair(&g, &w), "d={d}");
        }
    }

    #[test]
    fn adjoint_identity_on_smooth_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &p in &[2.0, 3.0, 5.0] {
            let g = grid(p, 64);
            for branch in [Branch::Bar, Branch::Tilde] {
                let q = random_pair(&mut rng, &g);
                let r = random_pair(&mut rng, &g);
                let d = 0.35;
                let lq = match branch {
                    Branch::Bar => apply_lbar(&g, d, &q).unwrap(),
                    Branch::Tilde => apply_ltilde(&g, d, &q).unwrap(),
                };
                let lhs = phi_pair(&g, &lq, &r);
                let rhs = phi_pair(&g, &q, &apply_adjoint(&g, d, branch, &r).unwrap());
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "p={p} {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn linearization_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(3.0, 48);
        let q = crate::sampling::random_state(&mut rng, &g, 4, 1.0);
        let d = -0.4;
        let full = apply_linearized(&g, d, &q).unwrap();
        for k in 0..4 {
            let pair = ScalarPair::from_state(&q, k);
            let block = if k == 0 { apply_lbar(&g, d, &pair) } else { apply_ltilde(&g, d, &pair) }.unwrap();
            assert_eq!(block.first, full.q1.column(k).into_owned());
            assert_eq!(block.second, full.q2.column(k).into_owned());
        }
    }

    #[test]
    fn decomposition_examples() {
        let g = grid(3.0, 128);
        let frame = SpectralFrame::new(&g, 0.4).unwrap();
        let dec = frame.decompose_bar(&g, &frame.bar1.f);
        assert!(dec.alpha0.abs() < 1e-10 && (dec.alpha1 - 1.0).abs() < 1e-10 && dec.remainder.amax() < 1e-10);
        let zero = frame.decompose_bar(&g, &ScalarPair::zeros(128));
        assert_eq!((zero.alpha0, zero.alpha1, zero.remainder.amax()), (0.0, 0.0, 0.0));
        let t = frame.decompose_tilde(&g, &frame.tilde0.f);
        assert!((t.alpha0 - 1.0).abs() < 1e-10 && t.remainder.amax() < 1e-10);
    }

    #[test]
    fn kappa_derivative_used_by_potentials_is_consistent() {
        let (d, y, p) = (0.3, -0.2, 3.0);
        let h = 1e-6;
        let fd = (kappa(d, y + h, p).unwrap() - kappa(d, y - h, p).unwrap()) / (2.0 * h);
        assert!((fd - dy_kappa(d, y, p).unwrap()).abs() < 1e-8);
    }

    fn series() -> impl Strategy<Value = ChebyshevSeries> {
        proptest::collection::vec(-1.0f64..1.0, 10).prop_map(|c| ChebyshevSeries {
            coefficients: c.iter().enumerate().map(|(k, v)| v * 0.6f64.powi(k as i32)).collect(),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn decomposition_reassembles_and_remainder_is_orthogonal(
            a in series(), b in series(), d in -0.9f64..0.9
        ) {
            let g = grid(3.0, 96);
            let frame = SpectralFrame::new(&g, d).unwrap();
            let r = ScalarPair::new(a.sample(&g), b.sample(&g));
            let dec = frame.decompose_bar(&g, &r);
            let back = dec.remainder.add(&frame.bar0.f.scale(dec.alpha0)).add(&frame.bar1.f.scale(dec.alpha1));
            prop_assert!(back.sub(&r).amax() <= 1e-10 * (1.0 + r.amax()));
            let scale = 1.0 + h_norm_pair(&g, &r);
            prop_assert!(frame.project_bar(&g, 0, &dec.remainder).unwrap().abs() <= 1e-8 * scale);
            prop_assert!(frame.project_bar(&g, 1, &dec.remainder).unwrap().abs() <= 1e-8 * scale);
            prop_assert!(frame.form_bar(&g, &dec.remainder, &dec.remainder) > 0.0);
            let t = frame.decompose_tilde(&g, &r);
            prop_assert!(frame.project_tilde(&g, &t.remainder).abs() <= 1e-8 * scale);
            prop_assert!(frame.form_tilde(&g, &t.remainder, &t.remainder) > 0.0);
        }

        #[test]
        fn forms_are_symmetric(a in series(), b in series(), c in series(), e in series()) {
            let g = grid(3.0, 48);
            let frame = SpectralFrame::new(&g, 0.2).unwrap();
            let q = ScalarPair::new(a.sample(&g), b.sample(&g));
            let r = ScalarPair::new(c.sample(&g), e.sample(&g));
            let (x, y) = (frame.form_bar(&g, &q, &r), frame.form_bar(&g, &r, &q));
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            let (x, y) = (frame.form_tilde(&g, &q, &r), frame.form_tilde(&g, &r, &q));
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
