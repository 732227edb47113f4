//! Collocation grid on (−1,1) for the weight ρ(y) = (1−y²)^{2/(p−1)}.
//!
//! Nodes are the Gauss–Jacobi points for ρ, so ρ-weighted integrals of
//! products of two interpolants are exact. The degenerate operator
//! 𝓛w = (1−y²)w'' − 2(a+1)y w' (with a = 2/(p−1)) maps polynomials to
//! polynomials of the same degree, and the discrete 𝓛 is symmetric in the
//! discrete L²_ρ pairing.
//!
//! Integrands carrying an extra 1/(1−y²) factor are integrated with an
//! auxiliary Gauss–Jacobi rule of exponent a−1 after interpolation.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, LU};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Node values of one scalar function.
pub type ScalarField = DVector<f64>;

/// Node values of an m-component function: row i is the value at node i,
/// column k is component k.
pub type VectorField = DMatrix<f64>;

const MOMENT_TOLERANCE: f64 = 1e-12;

/// Problem parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    /// Nonlinearity power.
    pub p: f64,
    /// Target dimension.
    pub m: usize,
    /// Number of collocation nodes.
    pub n: usize,
}

impl Params {
    pub fn new(p: f64, m: usize, n: usize) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
        }
        if m < 2 {
            return Err(Error::InvalidParameter(format!("m must be at least 2, got {m}")));
        }
        if n < 16 {
            return Err(Error::InvalidParameter(format!("n must be at least 16, got {n}")));
        }
        Ok(Self { p, m, n })
    }

    /// a = 2/(p−1), the exponent of the weight.
    pub fn weight_exponent(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }
}

/// A pair (q₁, q₂) of m-component fields: q₁ in H₀, q₂ in L²_ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct HState {
    pub q1: VectorField,
    pub q2: VectorField,
}

impl HState {
    pub fn new(q1: VectorField, q2: VectorField) -> Self {
        assert_eq!(q1.shape(), q2.shape(), "HState components must have equal shape");
        Self { q1, q2 }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self::new(DMatrix::zeros(n, m), DMatrix::zeros(n, m))
    }

    pub fn n(&self) -> usize {
        self.q1.nrows()
    }

    pub fn m(&self) -> usize {
        self.q1.ncols()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(&self.q1 * c, &self.q2 * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.q1 + &other.q1, &self.q2 + &other.q2)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.q1 - &other.q1, &self.q2 - &other.q2)
    }

    /// Applies a constant m×m matrix to every node value.
    pub fn rotate(&self, r: &DMatrix<f64>) -> Self {
        Self::new(&self.q1 * r.transpose(), &self.q2 * r.transpose())
    }

    pub fn is_finite(&self) -> bool {
        self.q1.iter().chain(self.q2.iter()).all(|v| v.is_finite())
    }
}

/// ρ(y) = (1−y²)^{2/(p−1)}.
pub fn rho(y: f64, p: f64) -> Result<f64> {
    if !(y.abs() < 1.0) {
        return Err(Error::Domain { name: "y", value: y, domain: "(-1, 1)" });
    }
    Ok((1.0 - y * y).powf(2.0 / (p - 1.0)))
}

/// ∫_{−1}^{1} (1−y²)^β dy = B(1/2, β+1).
pub fn jacobi_mass(beta: f64) -> f64 {
    (ln_gamma(0.5) + ln_gamma(beta + 1.0) - ln_gamma(beta + 1.5)).exp()
}

/// ∫_{−1}^{1} y^{2j}(1−y²)^β dy for j = 0..count.
pub fn jacobi_even_moments(beta: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut m = jacobi_mass(beta);
    for j in 0..count {
        if j > 0 {
            let jf = j as f64;
            m *= (2.0 * jf - 1.0) / (2.0 * jf + 2.0 * beta + 1.0);
        }
        out.push(m);
    }
    out
}

/// Gauss rule for the symmetric Jacobi weight (1−y²)^β together with
/// barycentric interpolation weights on its nodes.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: DVector<f64>,
    pub weights: DVector<f64>,
    pub bary: DVector<f64>,
}

fn recurrence_coefficient(k: usize, beta: f64) -> f64 {
    let kf = k as f64;
    if k == 1 {
        (1.0 / (2.0 * beta + 3.0)).sqrt()
    } else {
        (kf * (kf + 2.0 * beta) / ((2.0 * kf + 2.0 * beta + 1.0) * (2.0 * kf + 2.0 * beta - 1.0)))
            .sqrt()
    }
}

/// Orthonormal p_n(x) and p_n'(x), plus Σ_{k<n} p_k(x)².
fn orthonormal_eval(x: f64, n: usize, b: &[f64], p0: f64) -> (f64, f64, f64) {
    let (mut pm, mut p) = (0.0, p0);
    let (mut dpm, mut dp) = (0.0, 0.0);
    let mut christoffel = p0 * p0;
    for k in 0..n {
        let bk = if k == 0 { 0.0 } else { b[k] };
        let pn = (x * p - bk * pm) / b[k + 1];
        let dpn = (p + x * dp - bk * dpm) / b[k + 1];
        pm = p;
        p = pn;
        dpm = dp;
        dp = dpn;
        if k + 1 < n {
            christoffel += p * p;
        }
    }
    (p, dp, christoffel)
}

/// Gauss–Jacobi rule with n nodes for (1−y²)^β, β > −1.
///
/// Golub–Welsch eigenvalues seed a Newton polish on the three-term
/// recurrence; weights come from the Christoffel sum. Every even moment up to
/// degree 2n−2 is checked against the closed-form recursion.
pub fn gauss_jacobi(n: usize, beta: f64) -> Result<GaussRule> {
    if n < 2 || !(beta > -1.0) {
        return Err(Error::InvalidParameter(format!("gauss_jacobi(n={n}, beta={beta})")));
    }
    let mu0 = jacobi_mass(beta);
    let b: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { recurrence_coefficient(k, beta) }).collect();

    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j {
            b[j]
        } else if j + 1 == i {
            b[i]
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    x.sort_by(|u, v| u.total_cmp(v));

    let p0 = 1.0 / mu0.sqrt();
    for xi in x.iter_mut() {
        for _ in 0..10 {
            let (pn, dpn, _) = orthonormal_eval(*xi, n, &b, p0);
            let step = pn / dpn;
            *xi -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
    }
    for i in 0..n / 2 {
        let half = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = -half;
        x[n - 1 - i] = half;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }

    let mut weights = Vec::with_capacity(n);
    let mut bary = Vec::with_capacity(n);
    for &xi in &x {
        let (_, dpn, christoffel) = orthonormal_eval(xi, n, &b, p0);
        weights.push(1.0 / christoffel);
        bary.push(1.0 / dpn);
    }
    let scale = bary.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let rule = GaussRule {
        nodes: DVector::from_vec(x),
        weights: DVector::from_vec(weights),
        bary: DVector::from_vec(bary) / scale,
    };
    validate_moments(&rule, beta)?;
    Ok(rule)
}

fn validate_moments(rule: &GaussRule, beta: f64) -> Result<()> {
    let n = rule.nodes.len();
    let exact = jacobi_even_moments(beta, n);
    let mass = exact[0];
    let mut power: Vec<f64> = vec![1.0; n];
    for degree in 0..2 * n {
        let q: f64 = rule.weights.iter().zip(&power).map(|(w, v)| w * v).sum();
        let error = if degree % 2 == 0 {
            (q - exact[degree / 2]).abs() / exact[degree / 2]
        } else {
            q.abs() / mass
        };
        if !(error <= MOMENT_TOLERANCE) {
            return Err(Error::QuadratureValidation { degree, error });
        }
        for (v, x) in power.iter_mut().zip(rule.nodes.iter()) {
            *v *= x;
        }
    }
    Ok(())
}

/// Barycentric interpolation matrix from `nodes` (weights `bary`) to `targets`.
pub fn interpolation_matrix(nodes: &DVector<f64>, bary: &DVector<f64>, targets: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut out = DMatrix::zeros(targets.len(), n);
    for (k, &z) in targets.iter().enumerate() {
        if let Some(j) = nodes.iter().position(|&x| x == z) {
            out[(k, j)] = 1.0;
            continue;
        }
        let mut total = 0.0;
        for j in 0..n {
            let t = bary[j] / (z - nodes[j]);
            out[(k, j)] = t;
            total += t;
        }
        for j in 0..n {
            out[(k, j)] /= total;
        }
    }
    out
}

/// Neumaier-compensated sum.
fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sets each diagonal entry to minus the compensated sum of its row.
fn fix_row_sums(mat: &mut DMatrix<f64>) {
    for i in 0..mat.nrows() {
        let off = compensated_sum((0..mat.ncols()).filter(|&j| j != i).map(|j| mat[(i, j)]));
        mat[(i, i)] = -off;
    }
}

fn differentiation_matrix(nodes: &DVector<f64>, bary: &DVector<f64>) -> DMatrix<f64> {
    let n = nodes.len();
    let mut d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (bary[j] / bary[i]) / (nodes[i] - nodes[j])
        }
    });
    fix_row_sums(&mut d);
    d
}

/// 𝓛 = (1−y²)D² − 2(a+1)yD with the explicit off-diagonal formula
/// D²_ij = 2D_ij(D_ii − 1/(x_i − x_j)) and diagonals fixed so that constants
/// are annihilated exactly. Only valid on Gauss–Jacobi(a) nodes.
fn operator_matrix(nodes: &DVector<f64>, diff: &DMatrix<f64>, a: f64) -> DMatrix<f64> {
    let n = nodes.len();
    let mut lop = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let y = nodes[i];
        // At a root of the degree-n Jacobi polynomial, D_ii = (a+1)y/(1−y²).
        let dii = (a + 1.0) * y / (1.0 - y * y);
        let d2 = 2.0 * diff[(i, j)] * (dii - 1.0 / (nodes[i] - nodes[j]));
        (1.0 - y * y) * d2 - 2.0 * (a + 1.0) * y * diff[(i, j)]
    });
    fix_row_sums(&mut lop);
    lop
}

/// An auxiliary Gauss rule plus the interpolation map from the main nodes.
#[derive(Clone, Debug)]
pub struct AuxRule {
    pub rule: GaussRule,
    pub interp: DMatrix<f64>,
}

impl AuxRule {
    fn new(main: &GaussRule, beta: f64) -> Result<Self> {
        let rule = gauss_jacobi(main.nodes.len(), beta)?;
        let targets: Vec<f64> = rule.nodes.iter().copied().collect();
        let interp = interpolation_matrix(&main.nodes, &main.bary, &targets);
        Ok(Self { rule, interp })
    }

    /// Σ v_k (If)(z_k)(Ig)(z_k): exact for products of two interpolants.
    pub fn pair(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let fi = &self.interp * f;
        let gi = &self.interp * g;
        self.rule.weights.iter().zip(fi.iter().zip(gi.iter())).map(|(w, (a, b))| w * a * b).sum()
    }
}

/// Collocation grid, quadrature, differentiation and the resolvent of 𝓛.
#[derive(Clone, Debug)]
pub struct WeightedGrid {
    params: Params,
    main: GaussRule,
    diff: DMatrix<f64>,
    lop: DMatrix<f64>,
    resolvent: LU<f64, Dyn, Dyn>,
    resolvent_condition: f64,
    singular: AuxRule,
    flat: AuxRule,
    over_one_minus_y2: DMatrix<f64>,
}

impl WeightedGrid {
    /// Builds and validates the grid.
    pub fn new(params: Params) -> Result<Self> {
        let params = Params::new(params.p, params.m, params.n)?;
        let a = params.weight_exponent();
        let main = gauss_jacobi(params.n, a)?;
        let n = params.n;
        let diff = differentiation_matrix(&main.nodes, &main.bary);
        let lop = operator_matrix(&main.nodes, &diff, a);

        let system = DMatrix::identity(n, n) - &lop;
        let norm1 = |m: &DMatrix<f64>| {
            (0..m.ncols()).map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        let system_norm = norm1(&system);
        let resolvent = system.lu();
        let inverse = resolvent
            .solve(&DMatrix::identity(n, n))
            .ok_or(Error::LinearSolve { condition: f64::INFINITY })?;
        let resolvent_condition = system_norm * norm1(&inverse);

        let singular = AuxRule::new(&main, a - 1.0)?;
        let flat = AuxRule::new(&main, 0.0)?;

        // S r = nodal L²_ρ projection of r/(1−y²) onto the interpolation space.
        let weighted = DMatrix::from_fn(n, n, |k, j| singular.rule.weights[k] * singular.interp[(k, j)]);
        let mut over_one_minus_y2 = singular.interp.transpose() * weighted;
        for i in 0..n {
            let wi = main.weights[i];
            over_one_minus_y2.row_mut(i).scale_mut(1.0 / wi);
        }

        Ok(Self { params, main, diff, lop, resolvent, resolvent_condition, singular, flat, over_one_minus_y2 })
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn p(&self) -> f64 {
        self.params.p
    }

    /// a = 2/(p−1).
    pub fn weight_exponent(&self) -> f64 {
        self.params.weight_exponent()
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.main.nodes
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.main.weights
    }

    pub fn bary(&self) -> &DVector<f64> {
        &self.main.bary
    }

    pub fn diff(&self) -> &DMatrix<f64> {
        &self.diff
    }

    pub fn l_matrix(&self) -> &DMatrix<f64> {
        &self.lop
    }

    pub fn singular_rule(&self) -> &AuxRule {
        &self.singular
    }

    pub fn flat_rule(&self) -> &AuxRule {
        &self.flat
    }

    /// 1-norm condition estimate of −𝓛+1.
    pub fn resolvent_condition(&self) -> f64 {
        self.resolvent_condition
    }

    /// Evaluates a function of y at every node.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        self.main.nodes.map(f)
    }

    /// 1 − y² at the nodes.
    pub fn one_minus_y2(&self) -> ScalarField {
        self.sample(|y| 1.0 - y * y)
    }

    /// Σ wᵢ fᵢ.
    pub fn integrate_rho(&self, f: &ScalarField) -> f64 {
        self.main.weights.dot(f)
    }

    /// Σ wᵢ fᵢ gᵢ.
    pub fn inner_rho(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        self.main.weights.iter().zip(f.iter().zip(g.iter())).map(|(w, (a, b))| w * a * b).sum()
    }

    pub fn derivative(&self, f: &ScalarField) -> ScalarField {
        &self.diff * f
    }

    pub fn derivative_field(&self, f: &VectorField) -> VectorField {
        &self.diff * f
    }

    /// 𝓛r at the nodes, evaluated as Σ_j L_ij (r_j − r_i). Rows of L sum to
    /// zero, so this form annihilates constants exactly and avoids cancelling
    /// the large entries near the endpoints.
    pub fn apply_l(&self, r: &ScalarField) -> ScalarField {
        let n = r.len();
        ScalarField::from_fn(n, |i, _| {
            (0..n).filter(|&j| j != i).map(|j| self.lop[(i, j)] * (r[j] - r[i])).sum()
        })
    }

    pub fn apply_l_field(&self, r: &VectorField) -> VectorField {
        let mut out = VectorField::zeros(r.nrows(), r.ncols());
        for k in 0..r.ncols() {
            out.set_column(k, &self.apply_l(&r.column(k).into_owned()));
        }
        out
    }

    /// Solves (−𝓛+1)r = g.
    pub fn solve_resolvent(&self, g: &ScalarField) -> Result<ScalarField> {
        let r = self
            .resolvent
            .solve(g)
            .ok_or(Error::LinearSolve { condition: self.resolvent_condition })?;
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(Error::LinearSolve { condition: self.resolvent_condition })
        }
    }

    /// Nodal representative of r/(1−y²): its L²_ρ projection onto the
    /// interpolation space.
    pub fn over_one_minus_y2(&self, r: &ScalarField) -> ScalarField {
        &self.over_one_minus_y2 * r
    }

    /// ∫ f g ρ/(1−y²) dy for the interpolants of f and g.
    pub fn integrate_rho_over_one_minus_y2(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        self.singular.pair(f, g)
    }

    /// Unweighted ∫_{−1}^{1} f g dy for the interpolants of f and g.
    pub fn integrate_flat(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        self.flat.pair(f, g)
    }

    /// Barycentric interpolation of node values at arbitrary points.
    pub fn interpolate(&self, values: &ScalarField, targets: &[f64]) -> Vec<f64> {
        let im = interpolation_matrix(&self.main.nodes, &self.main.bary, targets);
        (im * values).iter().copied().collect()
    }

    /// Scalar H₀ quadratic form ∫(r'² (1−y²) + r²)ρ.
    fn h0_scalar_sq(&self, r: &ScalarField) -> f64 {
        let dr = self.derivative(r);
        (0..self.n())
            .map(|i| {
                let y = self.main.nodes[i];
                self.main.weights[i] * (dr[i] * dr[i] * (1.0 - y * y) + r[i] * r[i])
            })
            .sum()
    }

    /// φ for scalar pairs: ∫(q₁r₁ + q₁'r₁'(1−y²) + q₂r₂)ρ.
    pub fn phi_scalar(&self, q1: &ScalarField, q2: &ScalarField, r1: &ScalarField, r2: &ScalarField) -> f64 {
        let dq = self.derivative(q1);
        let dr = self.derivative(r1);
        (0..self.n())
            .map(|i| {
                let y = self.main.nodes[i];
                self.main.weights[i] * (q1[i] * r1[i] + dq[i] * dr[i] * (1.0 - y * y) + q2[i] * r2[i])
            })
            .sum()
    }

    /// sqrt ∫(|r'|²(1−y²) + |r|²)ρ summed over components.
    pub fn h0_norm(&self, r: &VectorField) -> f64 {
        (0..r.ncols()).map(|k| self.h0_scalar_sq(&r.column(k).into_owned())).sum::<f64>().sqrt()
    }

    /// ‖q‖_H.
    pub fn h_norm(&self, q: &HState) -> f64 {
        self.phi_inner(q, q).max(0.0).sqrt()
    }

    /// φ(q, r) = ∫(q₁·r₁ + q₁'·r₁'(1−y²) + q₂·r₂)ρ.
    pub fn phi_inner(&self, q: &HState, r: &HState) -> f64 {
        (0..q.m())
            .map(|k| {
                self.phi_scalar(
                    &q.q1.column(k).into_owned(),
                    &q.q2.column(k).into_owned(),
                    &r.q1.column(k).into_owned(),
                    &r.q2.column(k).into_owned(),
                )
            })
            .sum()
    }
}
