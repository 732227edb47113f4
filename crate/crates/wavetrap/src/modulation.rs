//! Modulation around the soliton family: the map Φ whose zero fixes (d, θ),
//! the α coefficients of the remainder q, the parameter-dynamics monitors and
//! the trapping experiment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolution::{simulate_selfsim, stable_dt, Control, SelfSimOptions, SelfSimState};
use crate::rotations::{compose_r, cos_product, Angles};
use crate::solitons::{energy, kappa0, kappa_field};
use crate::spectral::{phi_pair, require_coercive, FittedBounds, ScalarPair, SpectralFrame};
use crate::weighted_space::{HState, ScalarField, VectorField, WeightedGrid};

/// Experiments stay in the regime cos θ_i ≥ 1/2.
pub const REGIME_MIN_COS: f64 = 0.5;
/// Modulation inputs are expected to satisfy cos θ̂_i ≥ 3/4.
pub const INPUT_MIN_COS: f64 = 0.75;

/// A point (d, θ) of the soliton family.
#[derive(Clone, Debug, PartialEq)]
pub struct SolitonFrame {
    pub d: f64,
    pub theta: Angles,
}

impl SolitonFrame {
    pub fn new(d: f64, theta: Angles) -> Result<Self> {
        if !(d.abs() < 1.0) {
            return Err(Error::Domain { name: "d", value: d, domain: "(-1, 1)" });
        }
        Ok(Self { d, theta })
    }

    pub fn m(&self) -> usize {
        self.theta.m()
    }

    /// λ = artanh d.
    pub fn lambda(&self) -> f64 {
        self.d.atanh()
    }

    /// |artanh d − artanh d'| + |θ − θ'|.
    pub fn displacement(&self, other: &SolitonFrame) -> f64 {
        (self.lambda() - other.lambda()).abs() + self.theta.distance(&other.theta)
    }

    /// R_θ(κ(d)e₁, 0).
    pub fn soliton(&self, grid: &WeightedGrid) -> Result<HState> {
        let m = self.m();
        let mut e1 = DVector::zeros(m);
        e1[0] = 1.0;
        let q1 = kappa_field(grid, self.d)? * e1.transpose();
        Ok(HState::new(q1, DMatrix::zeros(grid.n(), m)).rotate(&compose_r(&self.theta)))
    }

    /// R_θ[(κ(d)e₁, 0) + q].
    pub fn assemble(&self, grid: &WeightedGrid, q: &HState) -> Result<HState> {
        let base = self.soliton(grid)?;
        Ok(base.add(&q.rotate(&compose_r(&self.theta))))
    }

    fn unknowns(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.m());
        x[0] = self.d;
        for (k, t) in self.theta.as_slice().iter().enumerate() {
            x[k + 1] = *t;
        }
        x
    }

    fn from_unknowns(x: &DVector<f64>) -> Result<Self> {
        Self::new(x[0], Angles::new(x.iter().skip(1).copied().collect()))
    }
}

/// V = R_θ⁻¹v.
fn unrotate(v: &HState, theta: &Angles) -> HState {
    v.rotate(&compose_r(theta).transpose())
}

fn phi_with(v: &HState, frame: &SolitonFrame, spec: &SpectralFrame, grid: &WeightedGrid) -> Result<DVector<f64>> {
    let big_v = unrotate(v, &frame.theta);
    let k = kappa_field(grid, frame.d)?;
    let m = frame.m();
    let mut out = DVector::zeros(m);
    let first = ScalarPair::from_state(&big_v, 0);
    out[0] = spec.bar0.project(grid, &ScalarPair::new(&first.first - k, first.second));
    for j in 1..m {
        out[j] = spec.tilde0.project(grid, &ScalarPair::from_state(&big_v, j));
    }
    Ok(out)
}

/// Φ(v, d, θ) = (Φ̄, Φ̃₂, …, Φ̃_m): the W̄₀ and W̃₀ projections of
/// R_θ⁻¹v − (κ(d)e₁, 0), coordinate 1 and coordinates 2..m respectively.
pub fn phi(v: &HState, frame: &SolitonFrame, grid: &WeightedGrid) -> Result<DVector<f64>> {
    let spec = SpectralFrame::new(grid, frame.d)?;
    phi_with(v, frame, &spec, grid)
}

/// Central-difference Jacobian of Φ in (d, θ₂, …, θ_m).
pub fn phi_jacobian(v: &HState, frame: &SolitonFrame, grid: &WeightedGrid, step: f64) -> Result<DMatrix<f64>> {
    let m = frame.m();
    let x = frame.unknowns();
    let spec = SpectralFrame::new(grid, frame.d)?;
    let mut jac = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[col] += step;
        minus[col] -= step;
        let (fp, fm) = (SolitonFrame::from_unknowns(&plus)?, SolitonFrame::from_unknowns(&minus)?);
        let (gp, gm) = if col == 0 {
            (phi(v, &fp, grid)?, phi(v, &fm, grid)?)
        } else {
            (phi_with(v, &fp, &spec, grid)?, phi_with(v, &fm, &spec, grid)?)
        };
        jac.set_column(col, &((gp - gm) / (2.0 * step)));
    }
    Ok(jac)
}

/// Dominant diagonal of the Jacobian at an exact soliton:
/// 2κ₀/((p−1)(1−d²)) for d and −Π_{k>i} cos θ_k for θ_i.
pub fn analytic_jacobian_diagonal(frame: &SolitonFrame, p: f64) -> DVector<f64> {
    let m = frame.m();
    let mut diag = DVector::zeros(m);
    diag[0] = 2.0 * kappa0(p) / ((p - 1.0) * (1.0 - frame.d * frame.d));
    for i in 2..=m {
        diag[i - 1] = -cos_product(&frame.theta, i + 1, m);
    }
    diag
}

/// Newton controls for [`modulate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulationOptions {
    pub fd_step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Required min cos θ̂_i of the guess.
    pub input_min_cos: f64,
    /// Required min cos θ_i of the result.
    pub regime_min_cos: f64,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            tolerance: 1e-11,
            max_iterations: 50,
            input_min_cos: INPUT_MIN_COS,
            regime_min_cos: REGIME_MIN_COS,
        }
    }
}

/// A state written as R_θ[(κ(d)e₁, 0) + q] with Φ = 0.
#[derive(Clone, Debug)]
pub struct ModulatedState {
    pub frame: SolitonFrame,
    pub q: HState,
    pub alpha_1_1: f64,
    /// α₋,₁ … α₋,m.
    pub alpha_minus: Vec<f64>,
    /// Φ at the returned frame.
    pub residual: DVector<f64>,
    pub iterations: usize,
}

impl ModulatedState {
    /// Σ_k α₋,k.
    pub fn alpha_minus_sum(&self) -> f64 {
        self.alpha_minus.iter().sum()
    }

    /// Σ_k α₋,k².
    pub fn alpha_minus_squares(&self) -> f64 {
        self.alpha_minus.iter().map(|a| a * a).sum()
    }
}

/// Solves Φ(v, d, θ) = 0 by damped Newton starting from `guess`. The first
/// step uses the analytic diagonal; later steps a finite-difference Jacobian.
pub fn modulate(v: &HState, guess: &SolitonFrame, grid: &WeightedGrid, opts: ModulationOptions) -> Result<ModulatedState> {
    guess.theta.check_regime(opts.input_min_cos)?;
    if v.m() != guess.m() {
        return Err(Error::InvalidParameter(format!("state has {} components, frame {}", v.m(), guess.m())));
    }
    let p = grid.p();
    let mut frame = guess.clone();
    let mut f = phi(v, &frame, grid)?;
    let mut iterations = 0;
    let mut polish = 2;
    loop {
        let converged = f.norm() <= opts.tolerance;
        if converged && polish == 0 {
            break;
        }
        if iterations >= opts.max_iterations {
            if converged {
                break;
            }
            return Err(Error::NewtonStalled { iterations, residual: f.norm() });
        }
        let jac = if iterations == 0 {
            DMatrix::from_diagonal(&analytic_jacobian_diagonal(&frame, p))
        } else {
            phi_jacobian(v, &frame, grid, opts.fd_step)?
        };
        let step = jac
            .lu()
            .solve(&(-&f))
            .ok_or(Error::LinearSolve { condition: f64::INFINITY })?;
        let x = frame.unknowns();
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..30 {
            let trial = &x + &step * t;
            if trial[0].abs() < 1.0 {
                let cand = SolitonFrame::from_unknowns(&trial)?;
                let fc = phi(v, &cand, grid)?;
                if fc.norm() < f.norm() {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, fc)) => {
                frame = cand;
                f = fc;
            }
            None if converged => break,
            None => return Err(Error::NewtonStalled { iterations, residual: f.norm() }),
        }
        if converged {
            polish -= 1;
        }
    }
    frame.theta.check_regime(opts.regime_min_cos)?;
    let q = unrotate(v, &frame.theta).sub(&frame.soliton_unrotated(grid)?);
    let ms = ModulatedState { frame, q, alpha_1_1: 0.0, alpha_minus: Vec::new(), residual: f, iterations };
    extract_alphas(ms, grid)
}

impl SolitonFrame {
    fn soliton_unrotated(&self, grid: &WeightedGrid) -> Result<HState> {
        SolitonFrame::new(self.d, Angles::zeros(self.m()))?.soliton(grid)
    }
}

/// α₁,₁ = π̄₁(q·₁); α₋,₁ = √φ̄(q₋, q₋) on the bar remainder of coordinate 1;
/// α₋,j = √φ̃(q₋, q₋) on the tilde remainder of coordinate j.
pub fn extract_alphas(mut ms: ModulatedState, grid: &WeightedGrid) -> Result<ModulatedState> {
    let spec = SpectralFrame::new(grid, ms.frame.d)?;
    let (a11, alpha_minus) = alphas_with(&ms.q, &spec, grid)?;
    ms.alpha_1_1 = a11;
    ms.alpha_minus = alpha_minus;
    Ok(ms)
}

fn alphas_with(q: &HState, spec: &SpectralFrame, grid: &WeightedGrid) -> Result<(f64, Vec<f64>)> {
    let bar = spec.decompose_bar(grid, &ScalarPair::from_state(q, 0));
    let mut alpha_minus = vec![require_coercive(spec.form_bar(grid, &bar.remainder, &bar.remainder))?.sqrt()];
    for j in 1..q.m() {
        let tilde = spec.decompose_tilde(grid, &ScalarPair::from_state(q, j));
        alpha_minus.push(require_coercive(spec.form_tilde(grid, &tilde.remainder, &tilde.remainder))?.sqrt());
    }
    Ok((bar.alpha1, alpha_minus))
}

/// Removes the π̄₀, π̄₁ components of coordinate 1 and the π̃₀ components of
/// coordinates 2..m.
pub fn project_to_remainder(q: &HState, d: f64, grid: &WeightedGrid) -> Result<HState> {
    let spec = SpectralFrame::new(grid, d)?;
    let mut out = q.clone();
    let bar = spec.decompose_bar(grid, &ScalarPair::from_state(q, 0));
    out.q1.set_column(0, &bar.remainder.first);
    out.q2.set_column(0, &bar.remainder.second);
    for j in 1..q.m() {
        let t = spec.decompose_tilde(grid, &ScalarPair::from_state(q, j));
        out.q1.set_column(j, &t.remainder.first);
        out.q2.set_column(j, &t.remainder.second);
    }
    Ok(out)
}

/// |π̄₀(q·₁)| + Σ_j |π̃₀(q·j)|.
pub fn orthogonality_residual(q: &HState, d: f64, grid: &WeightedGrid) -> Result<f64> {
    let spec = SpectralFrame::new(grid, d)?;
    let mut total = spec.bar0.project(grid, &ScalarPair::from_state(q, 0)).abs();
    for j in 1..q.m() {
        total += phi_pair(grid, &spec.tilde0.w, &ScalarPair::from_state(q, j)).abs();
    }
    Ok(total)
}

/// (1+z)^β − 1 − βz − β(β−1)z²/2 without cancellation for small z.
fn cubic_tail(z: f64, beta: f64) -> f64 {
    if z.abs() < 0.1 {
        let mut coef = beta * (beta - 1.0) * (beta - 2.0) / 6.0;
        let mut power = z * z * z;
        let mut sum = 0.0;
        for k in 3..60 {
            let term = coef * power;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || coef == 0.0 {
                break;
            }
            coef *= (beta - k as f64) / (k as f64 + 1.0);
            power *= z;
        }
        sum
    } else {
        (1.0 + z).powf(beta) - 1.0 - beta * z - 0.5 * beta * (beta - 1.0) * z * z
    }
}

/// 𝓕 = |κe₁+q|^{p+1}/(p+1) − κ^{p+1}/(p+1) − κ^p q₁ − (p/2)κ^{p−1}q₁² − (κ^{p−1}/2)Σ_{j≥2}q_j²,
/// rewritten as κ^{p+1}/(p+1)·G(z) + ((p−1)/2)κ^{p−2}q₁|q|² + ((p−1)/8)κ^{p−3}|q|⁴
/// with z = (2κq₁ + |q|²)/κ² and G the cubic tail of (1+z)^{(p+1)/2}.
pub fn nonlinear_remainder(kappa: f64, q: &[f64], p: f64) -> f64 {
    let q2: f64 = q.iter().map(|v| v * v).sum();
    let z = (2.0 * kappa * q[0] + q2) / (kappa * kappa);
    kappa.powf(p + 1.0) / (p + 1.0) * cubic_tail(z, 0.5 * (p + 1.0))
        + 0.5 * (p - 1.0) * kappa.powf(p - 2.0) * q[0] * q2
        + 0.125 * (p - 1.0) * kappa.powf(p - 3.0) * q2 * q2
}

/// R₋ = −∫𝓕_d(q₁)ρ.
pub fn r_minus(q1: &VectorField, d: f64, grid: &WeightedGrid) -> Result<f64> {
    let k = kappa_field(grid, d)?;
    let p = grid.p();
    let values = ScalarField::from_fn(grid.n(), |i, _| {
        let row: Vec<f64> = q1.row(i).iter().copied().collect();
        nonlinear_remainder(k[i], &row, p)
    });
    Ok(-grid.integrate_rho(&values))
}

/// One monitored sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRecord {
    pub s: f64,
    pub energy: f64,
    pub q_norm: f64,
    pub d: f64,
    pub lambda: f64,
    pub theta: Vec<f64>,
    pub alpha_1_1: f64,
    pub alpha_minus: Vec<f64>,
    /// a = α₁,₁².
    pub a: f64,
    /// b = Σ_k α₋,k² + R₋.
    pub b: f64,
    pub r_minus: f64,
    /// Σ_k ∫ q₂,k² ρ/(1−y²).
    pub dissipation: f64,
    /// |π̄₀(q·₁)| + Σ_j |π̃₀(q·j)|.
    pub orthogonality: f64,
}

impl MonitorRecord {
    pub fn from_modulated(ms: &ModulatedState, s: f64, energy: f64, grid: &WeightedGrid) -> Result<Self> {
        let r_minus = r_minus(&ms.q.q1, ms.frame.d, grid)?;
        let dissipation = (0..ms.q.m())
            .map(|k| {
                let col = ms.q.q2.column(k).into_owned();
                grid.integrate_rho_over_one_minus_y2(&col, &col)
            })
            .sum();
        Ok(Self {
            s,
            energy,
            q_norm: grid.h_norm(&ms.q),
            d: ms.frame.d,
            lambda: ms.frame.lambda(),
            theta: ms.frame.theta.as_slice().to_vec(),
            alpha_1_1: ms.alpha_1_1,
            alpha_minus: ms.alpha_minus.clone(),
            a: ms.alpha_1_1 * ms.alpha_1_1,
            b: ms.alpha_minus_squares() + r_minus,
            r_minus,
            dissipation,
            orthogonality: orthogonality_residual(&ms.q, ms.frame.d, grid)?,
        })
    }

    pub fn alpha_minus_squares(&self) -> f64 {
        self.alpha_minus.iter().map(|a| a * a).sum()
    }

    /// 0.99Σα₋² − 0.01a ≤ b ≤ 1.01Σα₋² + 0.01a.
    pub fn sandwich_holds(&self) -> bool {
        let s = self.alpha_minus_squares();
        0.99 * s - 0.01 * self.a <= self.b && self.b <= 1.01 * s + 0.01 * self.a
    }
}

/// Time-aligned monitor records.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorSeries {
    pub p: f64,
    pub m: usize,
    pub records: Vec<MonitorRecord>,
}

/// A ratio sampled along a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioSeries {
    /// (s, ratio) at the monitored samples.
    pub values: Vec<(f64, f64)>,
    pub bounds: FittedBounds,
    /// max over the second half divided by max over the first half.
    pub drift: f64,
}

impl RatioSeries {
    fn new(values: Vec<(f64, f64)>) -> Self {
        let bounds = FittedBounds::from_ratios(values.iter().map(|v| v.1));
        let half = values.len() / 2;
        let max = |sl: &[(f64, f64)]| sl.iter().map(|v| v.1).fold(0.0, f64::max);
        let (early, late) = (max(&values[..half]), max(&values[half..]));
        let drift = if values.len() < 2 {
            1.0
        } else if early > 0.0 {
            late / early
        } else if late > 0.0 {
            f64::INFINITY
        } else {
            1.0
        };
        Self { values, bounds, drift }
    }

    /// Largest ratio, zero when empty.
    pub fn max(&self) -> f64 {
        self.values.iter().map(|v| v.1).fold(0.0, f64::max)
    }
}

/// Parameter-dynamics diagnostics along a monitored run.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorDiagnostics {
    /// Σ|θ_i′| / ‖q‖².
    pub theta: RatioSeries,
    /// |λ′| / ‖q‖².
    pub lambda: RatioSeries,
    /// |α₁,₁′ − α₁,₁| / ‖q‖².
    pub alpha: RatioSeries,
    /// |R₋| / ‖q‖^{1+min(p,2)}.
    pub r_minus: RatioSeries,
    /// |α₁,₁| / (Σα₋ + tiny).
    pub barrier: RatioSeries,
    /// ‖q‖_H / (|α₁,₁| + Σα₋).
    pub norm_equivalence: FittedBounds,
    pub sandwich_violations: usize,
    /// Samples with ‖q‖ above the noise floor.
    pub monitored: usize,
}

/// Centered-difference monitors on samples with ‖q‖ ≥ `noise_floor`.
pub fn monitor_dynamics(series: &MonitorSeries, noise_floor: f64) -> MonitorDiagnostics {
    let r = &series.records;
    let p_bar = series.p.min(2.0);
    let (mut theta, mut lambda, mut alpha, mut rm, mut barrier, mut equiv) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut monitored = 0;
    for i in 0..r.len() {
        let rec = &r[i];
        if rec.q_norm < noise_floor {
            continue;
        }
        monitored += 1;
        let q2 = rec.q_norm * rec.q_norm;
        rm.push((rec.s, rec.r_minus.abs() / rec.q_norm.powf(1.0 + p_bar)));
        let minus: f64 = rec.alpha_minus.iter().sum();
        barrier.push((rec.s, rec.alpha_1_1.abs() / (minus + 1e-300)));
        equiv.push(rec.q_norm / (rec.alpha_1_1.abs() + minus));
        if i == 0 || i + 1 == r.len() {
            continue;
        }
        let (prev, next) = (&r[i - 1], &r[i + 1]);
        let h = next.s - prev.s;
        let dtheta: f64 = prev.theta.iter().zip(&next.theta).map(|(a, b)| ((b - a) / h).abs()).sum();
        theta.push((rec.s, dtheta / q2));
        lambda.push((rec.s, ((next.lambda - prev.lambda) / h).abs() / q2));
        let dalpha = (next.alpha_1_1 - prev.alpha_1_1) / h;
        alpha.push((rec.s, (dalpha - rec.alpha_1_1).abs() / q2));
    }
    MonitorDiagnostics {
        theta: RatioSeries::new(theta),
        lambda: RatioSeries::new(lambda),
        alpha: RatioSeries::new(alpha),
        r_minus: RatioSeries::new(rm),
        barrier: RatioSeries::new(barrier),
        norm_equivalence: FittedBounds::from_ratios(equiv),
        sandwich_violations: r.iter().filter(|rec| !rec.sandwich_holds()).count(),
        monitored,
    }
}

/// Controls for [`trapping_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrappingConfig {
    pub frame: SolitonFrame,
    pub eps_star: f64,
    pub s_len: f64,
    /// RK4 step; None selects the stable step of the grid.
    pub dt: Option<f64>,
    /// Re-modulation cadence in s.
    pub sample_every: f64,
    /// The product K₀K₁; escape once ‖q‖_H > 2K₀K₁ε*.
    pub k0k1: f64,
    /// Bisect on the F̄₁ coefficient to cancel the unstable direction.
    pub shooting: bool,
    pub max_bisections: usize,
    /// Monitors and orthogonality checks use samples with ‖q‖ above this.
    pub noise_floor: f64,
    pub modulation: ModulationOptions,
}

impl TrappingConfig {
    pub fn new(frame: SolitonFrame, eps_star: f64, s_len: f64) -> Self {
        Self {
            frame,
            eps_star,
            s_len,
            dt: None,
            sample_every: 0.1,
            k0k1: 8.0,
            shooting: true,
            max_bisections: 80,
            noise_floor: 1e-5,
            modulation: ModulationOptions::default(),
        }
    }
}

/// Why a run left the trapping regime.
#[derive(Clone, Debug, PartialEq)]
pub enum EscapeCause {
    Regime { index: usize, cos: f64 },
    NormGrowth { q_norm: f64 },
    Modulation(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Trapped,
    Escaped { at: f64, cause: EscapeCause },
}

/// Result of a trapping experiment.
#[derive(Clone, Debug)]
pub struct TrappingReport {
    pub series: MonitorSeries,
    pub verdict: Verdict,
    /// Coefficient β of the added β·F̄₁ component.
    pub shooting_coefficient: f64,
    pub runs: usize,
    /// (start, end, decay factor) of the best s-window of length 10.
    pub decay_window: Option<(f64, f64, f64)>,
    /// −slope of log‖q‖ over the decay window.
    pub mu_hat: Option<f64>,
    /// Frame at the smallest ‖q‖.
    pub final_frame: SolitonFrame,
    pub displacement: f64,
    /// displacement / ε*.
    pub k_fit: f64,
    pub initial_energy: f64,
    pub soliton_energy: f64,
    /// Largest orthogonality residual relative to ‖q‖ above the noise floor.
    pub orthogonality_ratio: f64,
}

impl TrappingReport {
    /// E(w(s*)) ≥ E(κ₀, 0).
    pub fn energy_condition(&self) -> bool {
        self.initial_energy >= self.soliton_energy
    }
}

struct RunResult {
    records: Vec<MonitorRecord>,
    verdict: Verdict,
    /// Sign of α₁,₁ at escape, or at the last sample of a trapped run.
    direction: f64,
}

impl RunResult {
    fn last(&self) -> Option<&MonitorRecord> {
        self.records.last()
    }

    /// Trapped runs beat escaped ones; among trapped runs the smaller final
    /// ‖q‖ wins, among escaped runs the later escape.
    fn better_than(&self, other: &RunResult) -> bool {
        let trapped = |r: &RunResult| r.verdict == Verdict::Trapped;
        match (trapped(self), trapped(other)) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.last().map_or(f64::INFINITY, |r| r.q_norm) < other.last().map_or(f64::INFINITY, |r| r.q_norm),
            (false, false) => self.last().map_or(0.0, |r| r.s) > other.last().map_or(0.0, |r| r.s),
        }
    }
}

fn run_once(initial: &HState, cfg: &TrappingConfig, grid: &WeightedGrid, dt: f64) -> Result<RunResult> {
    let threshold = if cfg.eps_star > 0.0 { 2.0 * cfg.k0k1 * cfg.eps_star } else { f64::INFINITY };
    let mut frame = cfg.frame.clone();
    let mut records = Vec::new();
    let mut verdict = Verdict::Trapped;
    let mut direction = 0.0;
    let mut last_alpha: f64 = 0.0;
    let opts = SelfSimOptions { dt, s_len: cfg.s_len, sample_every: cfg.sample_every, max_norm: 1e6 };
    let mut mod_opts = cfg.modulation;
    mod_opts.input_min_cos = mod_opts.regime_min_cos;
    let start = SelfSimState::from_hstate(initial, 0.0);
    let result = simulate_selfsim(&start, grid, opts, |state| {
        let v = state.to_hstate();
        let ms = match modulate(&v, &frame, grid, mod_opts) {
            Ok(ms) => ms,
            Err(Error::RegimeViolation { index, cos }) => {
                verdict = Verdict::Escaped { at: state.s, cause: EscapeCause::Regime { index, cos } };
                direction = last_alpha.signum();
                return Ok(Control::Stop);
            }
            Err(e) => {
                verdict = Verdict::Escaped { at: state.s, cause: EscapeCause::Modulation(e.to_string()) };
                direction = last_alpha.signum();
                return Ok(Control::Stop);
            }
        };
        frame = ms.frame.clone();
        last_alpha = ms.alpha_1_1;
        let rec = MonitorRecord::from_modulated(&ms, state.s, energy(&v, grid), grid)?;
        let q_norm = rec.q_norm;
        records.push(rec);
        if q_norm > threshold {
            verdict = Verdict::Escaped { at: state.s, cause: EscapeCause::NormGrowth { q_norm } };
            direction = ms.alpha_1_1.signum();
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    });
    if let Err(Error::Instability { at, reason }) = result {
        verdict = Verdict::Escaped { at, cause: EscapeCause::Modulation(reason) };
        direction = last_alpha.signum();
    } else {
        result?;
    }
    if verdict == Verdict::Trapped {
        direction = if last_alpha == 0.0 { 0.0 } else { last_alpha.signum() };
    }
    Ok(RunResult { records, verdict, direction })
}

/// Best window [s, s+10] by decay factor ‖q(s)‖/‖q(s+10)‖, with the fitted
/// rate −d log‖q‖/ds over it.
pub fn decay_fit(records: &[MonitorRecord], window: f64) -> Option<((f64, f64, f64), f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..records.len() {
        let target = records[i].s + window;
        let Some(j) = (i..records.len()).find(|&j| records[j].s >= target - 1e-9) else { break };
        if records[j].q_norm <= 0.0 || records[i].q_norm <= 0.0 {
            continue;
        }
        let factor = records[i].q_norm / records[j].q_norm;
        if best.is_none_or(|b| factor > b.2) {
            best = Some((i, j, factor));
        }
    }
    let (i, j, factor) = best?;
    let xs: Vec<f64> = records[i..=j].iter().map(|r| r.s).collect();
    let ys: Vec<f64> = records[i..=j].iter().map(|r| r.q_norm.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(((records[i].s, records[j].s, factor), -sxy / sxx))
}

/// Evolves R_θ*[(κ(d*)e₁, 0) + ε*·perturbation/‖perturbation‖ + β(F̄₁, 0…)]
/// and re-modulates along the way. With shooting on, β is bisected between
/// values whose runs escape with opposite signs of α₁,₁.
pub fn trapping_experiment(perturbation: &HState, cfg: &TrappingConfig, grid: &WeightedGrid) -> Result<TrappingReport> {
    let m = cfg.frame.m();
    if perturbation.m() != m || perturbation.n() != grid.n() {
        return Err(Error::InvalidParameter("perturbation does not match the grid".into()));
    }
    if !(cfg.eps_star >= 0.0) || !(cfg.s_len > 0.0) {
        return Err(Error::InvalidParameter(format!("eps_star = {}, s_len = {}", cfg.eps_star, cfg.s_len)));
    }
    let norm = grid.h_norm(perturbation);
    let q0 = if cfg.eps_star == 0.0 {
        perturbation.scale(0.0)
    } else if norm > 0.0 {
        perturbation.scale(cfg.eps_star / norm)
    } else {
        return Err(Error::InvalidParameter("zero perturbation with positive eps_star".into()));
    };
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => stable_dt(grid),
    };
    let spec = SpectralFrame::new(grid, cfg.frame.d)?;
    let mut unstable = HState::zeros(grid.n(), m);
    unstable.q1.set_column(0, &spec.bar1.f.first);
    unstable.q2.set_column(0, &spec.bar1.f.second);
    let initial = |beta: f64| cfg.frame.assemble(grid, &q0.add(&unstable.scale(beta)));

    let mut runs = 1;
    let mut beta = 0.0;
    let mut best = run_once(&initial(0.0)?, cfg, grid, dt)?;
    if cfg.shooting && best.direction != 0.0 {
        let sign0 = best.direction;
        let (mut lo, mut hi) = (0.0, None);
        let mut step = cfg.eps_star * 1e-2;
        for _ in 0..20 {
            let trial = -sign0 * step;
            let res = run_once(&initial(trial)?, cfg, grid, dt)?;
            runs += 1;
            let direction = res.direction;
            if res.better_than(&best) {
                best = res;
                beta = trial;
            }
            if direction != sign0 {
                hi = Some(trial);
                break;
            }
            lo = trial;
            step *= 4.0;
        }
        if let Some(mut hi) = hi {
            // Runs from `lo` leave along sign0, runs from `hi` along −sign0.
            for _ in 0..cfg.max_bisections {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let res = run_once(&initial(mid)?, cfg, grid, dt)?;
                runs += 1;
                let direction = res.direction;
                if res.better_than(&best) {
                    best = res;
                    beta = mid;
                }
                if direction == 0.0 {
                    break;
                }
                if direction == sign0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }

    let records = best.records;
    let (decay_window, mu_hat) = match decay_fit(&records, 10.0) {
        Some((w, mu)) => (Some(w), Some(mu)),
        None => (None, None),
    };
    let min_rec = records
        .iter()
        .min_by(|a, b| a.q_norm.total_cmp(&b.q_norm))
        .ok_or_else(|| Error::InvalidParameter("no samples recorded".into()))?;
    let final_frame = SolitonFrame::new(min_rec.d, Angles::new(min_rec.theta.clone()))?;
    let displacement = final_frame.displacement(&cfg.frame);
    let k_fit = if cfg.eps_star > 0.0 { displacement / cfg.eps_star } else { 0.0 };
    let orthogonality_ratio = records
        .iter()
        .filter(|r| r.q_norm >= cfg.noise_floor)
        .map(|r| r.orthogonality / r.q_norm)
        .fold(0.0, f64::max);
    let initial_energy = records.first().map_or(f64::NAN, |r| r.energy);
    let soliton_energy = energy(&cfg.frame.soliton(grid)?, grid);
    Ok(TrappingReport {
        series: MonitorSeries { p: grid.p(), m, records },
        verdict: best.verdict,
        shooting_coefficient: beta,
        runs,
        decay_window,
        mu_hat,
        final_frame,
        displacement,
        k_fit,
        initial_energy,
        soliton_energy,
        orthogonality_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_angles, random_state};
    use crate::weighted_space::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(p: f64, m: usize, n: usize) -> WeightedGrid {
        WeightedGrid::new(Params::new(p, m, n).unwrap()).unwrap()
    }

    fn remainder_state(rng: &mut ChaCha8Rng, g: &WeightedGrid, m: usize, d: f64, norm: f64) -> HState {
        let q = project_to_remainder(&random_state(rng, g, m, 1.0), d, g).unwrap();
        let h = g.h_norm(&q);
        q.scale(norm / h)
    }

    #[test]
    fn phi_vanishes_on_solitons_and_remainders() {
        let g = grid(3.0, 3, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &d in &[-0.5, 0.0, 0.4] {
            let frame = SolitonFrame::new(d, random_angles(&mut rng, 3, 0.75)).unwrap();
            let v = frame.soliton(&g).unwrap();
            assert!(phi(&v, &frame, &g).unwrap().amax() < 1e-13);
            let q = remainder_state(&mut rng, &g, 3, d, 1e-2);
            let v = frame.assemble(&g, &q).unwrap();
            assert!(phi(&v, &frame, &g).unwrap().amax() < 1e-12);
        }
    }

    #[test]
    fn jacobian_diagonal_matches_at_solitons() {
        let g = grid(3.0, 4, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame = SolitonFrame::new(0.3, random_angles(&mut rng, 4, 0.75)).unwrap();
        let v = frame.soliton(&g).unwrap();
        let jac = phi_jacobian(&v, &frame, &g, 1e-6).unwrap();
        let diag = analytic_jacobian_diagonal(&frame, 3.0);
        for i in 0..4 {
            assert!((jac[(i, i)] - diag[i]).abs() < 1e-7, "{i}: {} vs {}", jac[(i, i)], diag[i]);
        }
    }

    #[test]
    fn modulation_recovers_exact_frame() {
        let g = grid(3.0, 3, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = SolitonFrame::new(-0.2, random_angles(&mut rng, 3, 0.8)).unwrap();
        let v = truth.soliton(&g).unwrap();
        let mut guess = truth.clone();
        guess.d += 1e-3;
        guess.theta.set(2, guess.theta.get(2) - 1e-3);
        let ms = modulate(&v, &guess, &g, ModulationOptions::default()).unwrap();
        assert!(ms.frame.displacement(&truth) < 1e-10);
        assert!(g.h_norm(&ms.q) < 1e-10);
        assert!(ms.alpha_1_1.abs() < 1e-10 && ms.alpha_minus_sum() < 1e-9);
    }

    #[test]
    fn unstable_component_is_measured_by_alpha() {
        let g = grid(3.0, 3, 64);
        let d = 0.25;
        let frame = SolitonFrame::new(d, Angles::new(vec![0.2, -0.1])).unwrap();
        let spec = SpectralFrame::new(&g, d).unwrap();
        let mut q = HState::zeros(g.n(), 3);
        q.q1.set_column(0, &(&spec.bar1.f.first * 1e-3));
        q.q2.set_column(0, &(&spec.bar1.f.second * 1e-3));
        let v = frame.assemble(&g, &q).unwrap();
        let ms = modulate(&v, &frame, &g, ModulationOptions::default()).unwrap();
        assert!(ms.residual.norm() < 1e-10);
        assert!((ms.alpha_1_1 - 1e-3).abs() < 1e-12);
        assert!(ms.alpha_minus_sum() < 1e-10);
        assert!(ms.frame.displacement(&frame) < 1e-12);
    }

    #[test]
    fn modulation_is_idempotent_and_rotation_equivariant() {
        let g = grid(3.0, 3, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = SolitonFrame::new(0.1, random_angles(&mut rng, 3, 0.8)).unwrap();
        let q = random_state(&mut rng, &g, 3, 1e-3);
        let v = frame.assemble(&g, &q).unwrap();
        let ms = modulate(&v, &frame, &g, ModulationOptions::default()).unwrap();
        let again = modulate(&ms.frame.assemble(&g, &ms.q).unwrap(), &ms.frame, &g, ModulationOptions::default()).unwrap();
        assert!(again.frame.displacement(&ms.frame) < 1e-10);
        assert!(g.h_norm(&again.q.sub(&ms.q)) < 1e-10);
        // Rotations are isometries of H.
        assert!((g.h_norm(&v.rotate(&compose_r(&frame.theta))) - g.h_norm(&v)).abs() < 1e-12);
        assert!((g.h_norm(&ms.q.rotate(&compose_r(&ms.frame.theta))) - g.h_norm(&ms.q)).abs() < 1e-12);
    }

    #[test]
    fn remainder_state_has_positive_alpha_minus() {
        let g = grid(3.0, 3, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = remainder_state(&mut rng, &g, 3, 0.0, 1e-2);
        let frame = SolitonFrame::new(0.0, Angles::zeros(3)).unwrap();
        let ms = extract_alphas(
            ModulatedState { frame, q, alpha_1_1: 0.0, alpha_minus: vec![], residual: DVector::zeros(3), iterations: 0 },
            &g,
        )
        .unwrap();
        assert!(ms.alpha_1_1.abs() < 1e-14);
        assert!(ms.alpha_minus.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn nonlinear_remainder_matches_cubic_closed_form() {
        for &(k, q) in &[(1.3, [1e-3, 2e-3, -1e-3]), (0.7, [0.2, -0.3, 0.1]), (2.0, [-1.5, 0.4, 0.0])] {
            let q2: f64 = q.iter().map(|v| v * v).sum();
            let closed = k * q[0] * q2 + 0.25 * q2 * q2;
            assert!((nonlinear_remainder(k, &q, 3.0) - closed).abs() <= 1e-14 * closed.abs().max(1e-30));
        }
        // Direct formula for p = 5 at moderate q.
        let (k, q, p) = (1.1f64, [0.3, -0.2, 0.1], 5.0);
        let q2: f64 = q.iter().map(|v| v * v).sum();
        let full = ((k + q[0]).powi(2) + q[1] * q[1] + q[2] * q[2]).powf(0.5 * (p + 1.0)) / (p + 1.0);
        let direct = full - k.powf(p + 1.0) / (p + 1.0) - k.powf(p) * q[0] - 0.5 * p * k.powf(p - 1.0) * q[0] * q[0]
            - 0.5 * k.powf(p - 1.0) * (q2 - q[0] * q[0]);
        assert!((nonlinear_remainder(k, &q, p) - direct).abs() < 1e-13);
    }

    #[test]
    fn energy_expansion_identity() {
        for &p in &[3.0, 5.0] {
            let g = grid(p, 3, 96);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let d = 0.3;
            let spec = SpectralFrame::new(&g, d).unwrap();
            let frame = SolitonFrame::new(d, Angles::zeros(3)).unwrap();
            let base = frame.soliton(&g).unwrap();
            let q = random_state(&mut rng, &g, 3, 5e-2);
            let quad = spec.form_bar(&g, &ScalarPair::from_state(&q, 0), &ScalarPair::from_state(&q, 0))
                + (1..3)
                    .map(|j| spec.form_tilde(&g, &ScalarPair::from_state(&q, j), &ScalarPair::from_state(&q, j)))
                    .sum::<f64>();
            let lhs = energy(&base.add(&q), &g) - energy(&base, &g) - 0.5 * quad;
            let rhs = r_minus(&q.q1, d, &g).unwrap();
            assert!((lhs - rhs).abs() < 1e-9, "p={p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn r_minus_scales_superquadratically() {
        let g = grid(3.0, 3, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = random_state(&mut rng, &g, 3, 1.0);
        assert_eq!(r_minus(&q.q1.scale(0.0), 0.2, &g).unwrap(), 0.0);
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&e| r_minus(&q.q1.scale(e), 0.2, &g).unwrap().abs() / e.powi(3))
            .collect();
        assert!(ratios[2] > 0.0 && ratios[0] / ratios[2] < 1.5 && ratios[2] / ratios[0] < 1.5, "{ratios:?}");
    }

    #[test]
    fn stationary_trajectory_has_zero_monitors() {
        let g = grid(3.0, 3, 48);
        let frame = SolitonFrame::new(0.0, Angles::zeros(3)).unwrap();
        let pert = HState::zeros(g.n(), 3);
        let mut cfg = TrappingConfig::new(frame.clone(), 0.0, 1.0);
        cfg.noise_floor = 0.0;
        let report = trapping_experiment(&pert, &cfg, &g).unwrap();
        assert_eq!(report.verdict, Verdict::Trapped);
        assert!(report.series.records.iter().all(|r| r.q_norm < 1e-12 && r.theta.iter().all(|t| t.abs() < 1e-12)));
        assert!(report.displacement < 1e-12, "{}", report.displacement);
    }

    #[test]
    fn small_remainder_perturbation_is_trapped() {
        let g = grid(3.0, 3, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let frame = SolitonFrame::new(0.0, Angles::zeros(3)).unwrap();
        let pert = remainder_state(&mut rng, &g, 3, 0.0, 1.0);
        let report = trapping_experiment(&pert, &TrappingConfig::new(frame, 1e-3, 8.0), &g).unwrap();
        assert_eq!(report.verdict, Verdict::Trapped);
        let first = report.series.records.first().unwrap().q_norm;
        let min = report.series.records.iter().map(|r| r.q_norm).fold(f64::INFINITY, f64::min);
        assert!(min < 0.1 * first, "{first} -> {min}");
        assert!(report.series.records.iter().all(|r| r.sandwich_holds()));
    }
}
