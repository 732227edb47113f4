//! The stationary family κ(d,y)Ω, its ξ-transform and energy, and the
//! ODE oracle for stationary profiles written in polar form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::weighted_space::{HState, ScalarField, VectorField, WeightedGrid};

/// κ₀ = (2(p+1)/(p−1)²)^{1/(p−1)}.
pub fn kappa0(p: f64) -> f64 {
    linear_coefficient(p).powf(1.0 / (p - 1.0))
}

/// 2(p+1)/(p−1)², the coefficient of the zeroth-order linear term.
pub fn linear_coefficient(p: f64) -> f64 {
    2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0))
}

/// (p+3)/(p−1), the damping coefficient of ∂_s w.
pub fn damping_coefficient(p: f64) -> f64 {
    (p + 3.0) / (p - 1.0)
}

fn check_d(d: f64) -> Result<()> {
    if !(d.abs() < 1.0) {
        return Err(Error::Domain { name: "d", value: d, domain: "(-1, 1)" });
    }
    Ok(())
}

/// κ(d,y) = κ₀(1−d²)^{1/(p−1)}/(1+dy)^{2/(p−1)}.
pub fn kappa(d: f64, y: f64, p: f64) -> Result<f64> {
    check_d(d)?;
    Ok(kappa0(p) * (1.0 - d * d).powf(1.0 / (p - 1.0)) / (1.0 + d * y).powf(2.0 / (p - 1.0)))
}

/// ∂κ/∂d.
pub fn d_kappa(d: f64, y: f64, p: f64) -> Result<f64> {
    let k = kappa(d, y, p)?;
    Ok(-2.0 / (p - 1.0) * (y + d) / ((1.0 - d * d) * (1.0 + d * y)) * k)
}

/// ∂κ/∂y.
pub fn dy_kappa(d: f64, y: f64, p: f64) -> Result<f64> {
    let k = kappa(d, y, p)?;
    Ok(-2.0 / (p - 1.0) * d / (1.0 + d * y) * k)
}

/// κ(d,·) at the grid nodes.
pub fn kappa_field(grid: &WeightedGrid, d: f64) -> Result<ScalarField> {
    check_d(d)?;
    let p = grid.p();
    Ok(grid.sample(|y| kappa(d, y, p).expect("d checked")))
}

/// k̄(ξ) = κ₀/cosh^{2/(p−1)}ξ.
pub fn kbar(xi: f64, p: f64) -> f64 {
    kappa0(p) / xi.cosh().powf(2.0 / (p - 1.0))
}

/// The point (d, Ω) of the stationary family.
#[derive(Clone, Debug, PartialEq)]
pub struct SolitonParams {
    pub d: f64,
    pub omega: DVector<f64>,
}

impl SolitonParams {
    pub fn new(d: f64, omega: DVector<f64>) -> Result<Self> {
        check_d(d)?;
        if ((omega.norm() - 1.0).abs() > 1e-12) || omega.is_empty() {
            return Err(Error::InvalidParameter(format!("|omega| = {} is not 1", omega.norm())));
        }
        Ok(Self { d, omega })
    }

    /// The state (κ(d,·)Ω, 0).
    pub fn state(&self, grid: &WeightedGrid) -> Result<HState> {
        let k = kappa_field(grid, self.d)?;
        let q1 = &k * self.omega.transpose();
        Ok(HState::new(q1, DMatrix::zeros(grid.n(), self.omega.len())))
    }
}

/// (ξ nodes, w̄) with ξ = artanh y and w̄ = w(1−y²)^{1/(p−1)}.
pub fn xi_transform(w: &VectorField, nodes: &DVector<f64>, p: f64) -> Result<(Vec<f64>, VectorField)> {
    let mut out = w.clone();
    let mut xi = Vec::with_capacity(nodes.len());
    for (i, &y) in nodes.iter().enumerate() {
        if !(y.abs() < 1.0) {
            return Err(Error::Domain { name: "y", value: y, domain: "(-1, 1)" });
        }
        xi.push(y.atanh());
        out.row_mut(i).scale_mut((1.0 - y * y).powf(1.0 / (p - 1.0)));
    }
    Ok((xi, out))
}

/// Inverse of [`xi_transform`]: y = tanh ξ, w = w̄ (1−y²)^{−1/(p−1)}.
pub fn xi_inverse(xi: &[f64], wbar: &VectorField, p: f64) -> (DVector<f64>, VectorField) {
    let mut out = wbar.clone();
    let nodes = DVector::from_iterator(xi.len(), xi.iter().map(|x| x.tanh()));
    for (i, &y) in nodes.iter().enumerate() {
        out.row_mut(i).scale_mut((1.0 - y * y).powf(-1.0 / (p - 1.0)));
    }
    (nodes, out)
}

/// 𝓛w − (2(p+1)/(p−1)²)w + |w|^{p−1}w at the nodes.
pub fn stationary_residual(w: &VectorField, grid: &WeightedGrid) -> VectorField {
    let p = grid.p();
    let mut out = grid.apply_l_field(w) - w * linear_coefficient(p);
    for i in 0..w.nrows() {
        let amp = w.row(i).norm().powf(p - 1.0);
        for k in 0..w.ncols() {
            out[(i, k)] += amp * w[(i, k)];
        }
    }
    out
}

/// The Lyapunov functional
/// ∫(½|ws|² + ½|w_y|²(1−y²) + ((p+1)/(p−1)²)|w|² − |w|^{p+1}/(p+1))ρ.
pub fn energy(q: &HState, grid: &WeightedGrid) -> f64 {
    let p = grid.p();
    let half_lin = 0.5 * linear_coefficient(p);
    let dw = grid.derivative_field(&q.q1);
    let nodes = grid.nodes();
    let weights = grid.weights();
    (0..grid.n())
        .map(|i| {
            let y = nodes[i];
            let w2 = q.q1.row(i).norm_squared();
            let density = 0.5 * q.q2.row(i).norm_squared()
                + 0.5 * dw.row(i).norm_squared() * (1.0 - y * y)
                + half_lin * w2
                - w2.powf(0.5 * (p + 1.0)) / (p + 1.0);
            weights[i] * density
        })
        .sum()
}

/// E(κ₀e₁, 0) = κ₀²/(p−1)·∫ρ, computed in closed form.
pub fn soliton_energy(p: f64) -> f64 {
    let a = 2.0 / (p - 1.0);
    kappa0(p).powi(2) / (p - 1.0) * crate::weighted_space::jacobi_mass(a)
}

/// State of the polar profile equation ρ'' − μ/ρ³ − c₀ρ + ρ^p = 0,
/// c₀ = 4/(p−1)².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeState {
    /// |w̄|.
    pub rho_val: f64,
    pub rho_deriv: f64,
    /// H = |Ω'|² = μ/ρ⁴.
    pub h_val: f64,
    /// μ = H(0)ρ(0)⁴.
    pub mu: f64,
}

impl OdeState {
    pub fn new(rho_val: f64, rho_deriv: f64, mu: f64) -> Self {
        Self { rho_val, rho_deriv, h_val: mu / rho_val.powi(4), mu }
    }

    /// 𝓔 = ½ρ'² + μ/(2ρ²) − (c₀/2)ρ² + ρ^{p+1}/(p+1).
    pub fn first_integral(&self, p: f64) -> f64 {
        let c0 = 4.0 / ((p - 1.0) * (p - 1.0));
        let r = self.rho_val;
        0.5 * self.rho_deriv * self.rho_deriv + 0.5 * self.mu / (r * r) - 0.5 * c0 * r * r
            + r.powf(p + 1.0) / (p + 1.0)
    }
}

/// Tolerances for the adaptive integrator.
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-15, h_max: 0.05 }
    }
}

/// Accepted steps of an ODE integration.
#[derive(Clone, Debug)]
pub struct OdeTrajectory {
    pub xi: Vec<f64>,
    pub states: Vec<OdeState>,
    /// max |𝓔(ξ) − 𝓔(0)|.
    pub first_integral_drift: f64,
    pub min_rho: f64,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_BSTAR: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) integration of a planar system from 0 to
/// `x_end` (either sign). Returns accepted (x, y) pairs.
pub fn dormand_prince<F>(f: F, y0: [f64; 2], x_end: f64, opts: OdeOptions) -> Result<Vec<(f64, [f64; 2])>>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let dir = x_end.signum();
    let mut x = 0.0;
    let mut y = y0;
    let mut h = dir * opts.h_max.min(1e-3);
    let mut out = vec![(x, y)];
    let mut rejects = 0usize;
    while dir * (x_end - x) > 0.0 {
        if dir * (x + h - x_end) > 0.0 {
            h = x_end - x;
        }
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for c in 0..2 {
                    ys[c] += h * DP_A[s][j] * kj[c];
                }
            }
            k[s] = f(x + DP_C[s] * h, ys);
        }
        let mut y5 = y;
        let mut err = 0.0;
        for c in 0..2 {
            let mut e = 0.0;
            for s in 0..7 {
                y5[c] += h * DP_B[s] * k[s][c];
                e += h * (DP_B[s] - DP_BSTAR[s]) * k[s][c];
            }
            let scale = opts.atol + opts.rtol * y[c].abs().max(y5[c].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / 2.0).sqrt();
        if !err.is_finite() {
            return Err(Error::Integration { at: x, reason: "non-finite stage values".into() });
        }
        if err <= 1.0 {
            x += h;
            y = y5;
            out.push((x, y));
            rejects = 0;
        } else {
            rejects += 1;
            if rejects > 50 {
                return Err(Error::Integration { at: x, reason: "step size underflow".into() });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = dir * (h.abs() * factor).min(opts.h_max);
        if h.abs() < 1e-14 {
            return Err(Error::Integration { at: x, reason: "step size underflow".into() });
        }
    }
    Ok(out)
}

/// Integrates ρ'' = μ/ρ³ + c₀ρ − ρ^p from ξ = 0 to `xi_max` (either sign).
pub fn classify_ode_integrate(initial: OdeState, xi_max: f64, p: f64, opts: OdeOptions) -> Result<OdeTrajectory> {
    if !(initial.rho_val > 0.0) {
        return Err(Error::Domain { name: "rho", value: initial.rho_val, domain: "(0, inf)" });
    }
    let c0 = 4.0 / ((p - 1.0) * (p - 1.0));
    let mu = initial.mu;
    let rhs = |_x: f64, y: [f64; 2]| {
        let r = y[0];
        let r3 = if mu > 0.0 { mu / (r * r * r) } else { 0.0 };
        [y[1], r3 + c0 * r - r.abs().powf(p - 1.0) * r]
    };
    let steps = dormand_prince(rhs, [initial.rho_val, initial.rho_deriv], xi_max, opts)?;
    let e0 = initial.first_integral(p);
    let mut drift: f64 = 0.0;
    let mut min_rho = f64::INFINITY;
    let mut xi = Vec::with_capacity(steps.len());
    let mut states = Vec::with_capacity(steps.len());
    for (x, y) in steps {
        if mu > 0.0 && !(y[0] > 0.0) {
            return Err(Error::Integration { at: x, reason: "rho reached zero".into() });
        }
        let st = OdeState { rho_val: y[0], rho_deriv: y[1], h_val: mu / y[0].powi(4), mu };
        drift = drift.max((st.first_integral(p) - e0).abs());
        min_rho = min_rho.min(y[0]);
        xi.push(x);
        states.push(st);
    }
    Ok(OdeTrajectory { xi, states, first_integral_drift: drift, min_rho })
}

/// Result of the nearest-soliton search.
#[derive(Clone, Debug)]
pub struct ManifoldProjection {
    pub distance: f64,
    pub best: SolitonParams,
}

struct FlatSobolev<'a> {
    grid: &'a WeightedGrid,
}

impl FlatSobolev<'_> {
    fn inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let df = self.grid.derivative(f);
        let dg = self.grid.derivative(g);
        self.grid.integrate_flat(f, g) + self.grid.integrate_flat(&df, &dg)
    }
}

/// Upper bound on inf over (d, Ω) of
/// sqrt(‖w − κ(d)Ω‖²_{H¹(−1,1)} + ‖∂_s w‖²_{L²(−1,1)}).
///
/// For fixed d the best Ω is the normalized H¹ projection of w on κ(d);
/// λ = artanh d is scanned on [−3, 3] and refined by Gauss–Newton.
pub fn project_to_manifold_distance(q: &HState, grid: &WeightedGrid) -> Result<ManifoldProjection> {
    let m = q.m();
    let h1 = FlatSobolev { grid };
    let velocity: f64 = (0..m)
        .map(|k| {
            let c = q.q2.column(k).into_owned();
            grid.integrate_flat(&c, &c)
        })
        .sum();
    let columns: Vec<ScalarField> = (0..m).map(|k| q.q1.column(k).into_owned()).collect();

    let best_omega = |kap: &ScalarField| -> DVector<f64> {
        let v = DVector::from_iterator(m, columns.iter().map(|c| h1.inner(c, kap)));
        let norm = v.norm();
        if norm > 0.0 {
            v / norm
        } else {
            let mut e = DVector::zeros(m);
            e[0] = 1.0;
            e
        }
    };
    let residual_sq = |lam: f64| -> Result<(f64, DVector<f64>)> {
        let kap = kappa_field(grid, lam.tanh())?;
        let omega = best_omega(&kap);
        let total: f64 = columns
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let r = c - &kap * omega[k];
                h1.inner(&r, &r)
            })
            .sum();
        Ok((total, omega))
    };

    let mut best_lam = 0.0;
    let mut best_val = f64::INFINITY;
    for i in 0..=120 {
        let lam = -3.0 + 0.05 * i as f64;
        let (v, _) = residual_sq(lam)?;
        if v < best_val {
            best_val = v;
            best_lam = lam;
        }
    }

    // Gauss–Newton in λ with Ω re-optimized each step.
    let mut lam = best_lam;
    for _ in 0..60 {
        let d = lam.tanh();
        let kap = kappa_field(grid, d)?;
        let omega = best_omega(&kap);
        let p = grid.p();
        let dk = grid.sample(|y| (1.0 - d * d) * d_kappa(d, y, p).expect("|d| < 1"));
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, c) in columns.iter().enumerate() {
            let r = c - &kap * omega[k];
            let j = &dk * omega[k];
            num += h1.inner(&r, &j);
            den += h1.inner(&j, &j);
        }
        if den <= 0.0 {
            break;
        }
        let step = (num / den).clamp(-0.5, 0.5);
        let trial = (lam + step).clamp(-3.0, 3.0);
        let (v, _) = residual_sq(trial)?;
        if v <= best_val {
            best_val = v;
            lam = trial;
        } else {
            break;
        }
        if step.abs() < 1e-15 {
            break;
        }
    }
    let (val, omega) = residual_sq(lam)?;
    Ok(ManifoldProjection {
        distance: (val.max(0.0) + velocity).sqrt(),
        best: SolitonParams { d: lam.tanh(), omega },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighted_space::Params;
    use proptest::prelude::*;

    fn grid(p: f64, n: usize) -> WeightedGrid {
        WeightedGrid::new(Params::new(p, 3, n).unwrap()).unwrap()
    }

    fn unit(m: usize, seed: u64) -> DVector<f64> {
        let v = DVector::from_fn(m, |i, _| ((i as f64 + 1.0) * (seed as f64 + 0.5)).sin());
        v.normalize()
    }

    #[test]
    fn kappa0_values() {
        assert!((kappa0(3.0) - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((kappa0(2.0) - 6.0).abs() < 1e-14);
        assert!((kappa0(5.0) - 0.75_f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0.0, 0.3, 3.0).unwrap(), kappa0(3.0));
        let v = kappa(0.5, 0.0, 3.0).unwrap();
        assert!((v - 2.0_f64.sqrt() * 0.75_f64.sqrt()).abs() < 1e-15);
        assert!(kappa(1.0, 0.0, 3.0).is_err());
        assert_eq!(d_kappa(0.0, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn d_kappa_is_multiple_of_f0() {
        for p in [2.0, 3.0, 5.0] {
            for &(d, y) in &[(0.3f64, -0.7f64), (-0.6, 0.2), (0.85, 0.95)] {
                let f0 = (1.0 - d * d).powf(1.0 / (p - 1.0)) * (y + d) / (1.0 + d * y).powf((p + 1.0) / (p - 1.0));
                let ratio = d_kappa(d, y, p).unwrap() / f0;
                let expected = -2.0 * kappa0(p) / ((p - 1.0) * (1.0 - d * d));
                assert!((ratio - expected).abs() < 1e-12 * expected.abs());
            }
        }
    }

    #[test]
    fn kbar_limits() {
        assert_eq!(kbar(0.0, 3.0), kappa0(3.0));
        assert!(kbar(40.0, 3.0) < 1e-15);
        assert!(kbar(1.0, 3.0) > kbar(2.0, 3.0));
        assert!((kbar(-1.5, 5.0) - kbar(1.5, 5.0)).abs() < 1e-16);
    }

    #[test]
    fn xi_transform_maps_family_to_translates() {
        let g = grid(3.0, 64);
        for p in [2.0, 3.0, 5.0] {
            let d: f64 = 0.4;
            let k = grid(p, 64);
            let w = kappa_field(&k, d).unwrap() * unit(3, 1).transpose();
            let (xi, wbar) = xi_transform(&w, k.nodes(), p).unwrap();
            let xi0 = d.atanh();
            for (i, x) in xi.iter().enumerate() {
                let expected = kbar(x + xi0, p);
                let got = wbar.row(i).norm();
                assert!((got - expected).abs() <= 1e-10 * expected.max(1e-3));
            }
            let (nodes, back) = xi_inverse(&xi, &wbar, p);
            assert!((nodes - k.nodes()).amax() < 1e-12);
            assert!((back - &w).amax() < 1e-12);
        }
        let zero = DMatrix::zeros(64, 3);
        assert_eq!(xi_transform(&zero, g.nodes(), 3.0).unwrap().1, zero);
    }

    #[test]
    fn stationary_residual_examples() {
        let g = grid(3.0, 128);
        let zero = DMatrix::zeros(128, 3);
        assert_eq!(stationary_residual(&zero, &g).amax(), 0.0);
        let c = DMatrix::from_fn(128, 3, |_, k| kappa0(3.0) * unit(3, 2)[k]);
        assert!(stationary_residual(&c, &g).amax() < 1e-12);
        let w = kappa_field(&g, 0.7).unwrap() * unit(3, 3).transpose();
        assert!(stationary_residual(&w, &g).amax() <= 1e-8);
    }

    #[test]
    fn energy_examples() {
        let g = grid(3.0, 64);
        assert_eq!(energy(&HState::zeros(64, 3), &g), 0.0);
        let sol = SolitonParams::new(0.0, unit(3, 0)).unwrap().state(&g).unwrap();
        assert!((energy(&sol, &g) - 4.0 / 3.0).abs() < 1e-13);
        assert!((soliton_energy(3.0) - 4.0 / 3.0).abs() < 1e-14);
        let moving = SolitonParams::new(-0.6, unit(3, 5)).unwrap().state(&g).unwrap();
        assert!((energy(&moving, &g) - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dormand_prince_exponential() {
        let steps = dormand_prince(|_, y| [y[1], y[0]], [1.0, 1.0], 2.0, OdeOptions::default()).unwrap();
        let (x, y) = *steps.last().unwrap();
        assert_eq!(x, 2.0);
        assert!((y[0] - 2.0_f64.exp()).abs() < 1e-10);
        let back = dormand_prince(|_, y| [y[1], y[0]], [1.0, 1.0], -1.0, OdeOptions::default()).unwrap();
        assert!((back.last().unwrap().1[0] - (-1.0_f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn ode_zero_mu_reproduces_kbar() {
        let p = 3.0;
        let xi0 = 0.4;
        let h = 1e-6;
        let dk = (kbar(xi0 + h, p) - kbar(xi0 - h, p)) / (2.0 * h);
        let init = OdeState::new(kbar(xi0, p), dk, 0.0);
        for end in [10.0, -10.0] {
            let t = classify_ode_integrate(init, end, p, OdeOptions::default()).unwrap();
            let err = t.xi.iter().zip(&t.states).map(|(x, s)| (s.rho_val - kbar(x + xi0, p)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn ode_positive_mu_stays_away_from_zero() {
        for mu in [0.1, 1.0] {
            let t = classify_ode_integrate(OdeState::new(kappa0(3.0), 0.0, mu), 50.0, 3.0, OdeOptions::default()).unwrap();
            assert!(t.min_rho > 0.01);
            assert!(t.first_integral_drift <= 1e-8, "{}", t.first_integral_drift);
        }
    }

    #[test]
    fn manifold_projection_examples() {
        let g = grid(3.0, 64);
        let omega = unit(3, 7);
        let sol = SolitonParams::new(0.3, omega.clone()).unwrap().state(&g).unwrap();
        let proj = project_to_manifold_distance(&sol, &g).unwrap();
        assert!(proj.distance <= 1e-10, "{}", proj.distance);
        assert!((proj.best.d - 0.3).abs() < 1e-10);
        assert!((proj.best.omega - omega).norm() < 1e-10);

        let zero = project_to_manifold_distance(&HState::zeros(64, 3), &g).unwrap();
        assert!(zero.distance > 0.1);

        let mut pert = sol.clone();
        let bump = g.sample(|y| 1e-3 * (1.0 - y * y) * (2.0 * y).cos() / 2.0);
        pert.q1.set_column(1, &(pert.q1.column(1) + &bump));
        let near = project_to_manifold_distance(&pert, &g).unwrap();
        let h1 = FlatSobolev { grid: &g }.inner(&bump, &bump).sqrt();
        assert!(near.distance <= h1 * (1.0 + 1e-9), "{} vs {}", near.distance, h1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn kappa_symmetry_and_fd(d in -0.95f64..0.95, y in -0.99f64..0.99) {
            for p in [2.0, 3.0, 5.0] {
                let a = kappa(d, y, p).unwrap();
                prop_assert!(a > 0.0);
                prop_assert!((a - kappa(-d, -y, p).unwrap()).abs() <= 1e-14 * a);
                let h = 1e-5;
                let fd = (kappa(d + h, y, p).unwrap() - kappa(d - h, y, p).unwrap()) / (2.0 * h);
                let exact = d_kappa(d, y, p).unwrap();
                prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()) / (1.0 - d * d).powi(3));
            }
        }

        #[test]
        fn first_integral_conserved(r0 in 0.3f64..2.0, v0 in -0.5f64..0.5, mu in 0.0f64..1.0) {
            let t = classify_ode_integrate(OdeState::new(r0, v0, mu), 5.0, 3.0, OdeOptions::default());
            if let Ok(t) = t {
                prop_assert!(t.first_integral_drift <= 1e-8);
            }
        }
    }
}
