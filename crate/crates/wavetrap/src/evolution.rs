//! Time integration in physical variables (x, t) and self-similar variables
//! (y, s), the change of variables between them, and blow-up time fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solitons::{damping_coefficient, energy, kappa0, linear_coefficient};
use crate::weighted_space::{HState, VectorField, WeightedGrid};

/// A uniform grid on [left, left + (nx−1)dx].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGrid {
    pub left: f64,
    pub dx: f64,
    pub nx: usize,
}

impl UniformGrid {
    pub fn new(left: f64, right: f64, nx: usize) -> Result<Self> {
        if nx < 4 || !(right > left) {
            return Err(Error::InvalidParameter(format!("uniform grid [{left}, {right}] with {nx} points")));
        }
        Ok(Self { left, dx: (right - left) / (nx - 1) as f64, nx })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.left + i as f64 * self.dx
    }
}

/// u and ∂_t u on a uniform grid at time t.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalState {
    pub grid: UniformGrid,
    pub u: VectorField,
    pub ut: VectorField,
    pub t: f64,
}

impl PhysicalState {
    pub fn new(grid: UniformGrid, u: VectorField, ut: VectorField, t: f64) -> Result<Self> {
        if u.nrows() != grid.nx || ut.shape() != u.shape() {
            return Err(Error::InvalidParameter("state does not match the grid".into()));
        }
        Ok(Self { grid, u, ut, t })
    }

    /// Pointwise amplitude |u(x_i)|.
    pub fn amplitude(&self, i: usize) -> f64 {
        self.u.row(i).norm()
    }
}

/// Half-open index range of nodes that are still advanced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveRange {
    pub lo: usize,
    pub hi: usize,
}

/// ∂²_x u + |u|^{p−1}u on the active range. Reflecting ghost nodes at the
/// ends of the grid; frozen neighbours elsewhere.
fn acceleration(u: &VectorField, grid: UniformGrid, p: f64, range: ActiveRange) -> VectorField {
    let (nx, m) = (u.nrows(), u.ncols());
    let inv = 1.0 / (grid.dx * grid.dx);
    let mut acc = DMatrix::zeros(nx, m);
    for i in range.lo..range.hi {
        let left = if i == 0 { 1 } else { i - 1 };
        let right = if i + 1 == nx { nx - 2 } else { i + 1 };
        let amp = u.row(i).norm().powf(p - 1.0);
        for k in 0..m {
            acc[(i, k)] = (u[(left, k)] - 2.0 * u[(i, k)] + u[(right, k)]) * inv + amp * u[(i, k)];
        }
    }
    acc
}

/// One velocity-Verlet step of ∂²_t u = ∂²_x u + |u|^{p−1}u restricted to
/// the active range. Requires dt ≤ CFL·dx.
pub fn physical_step(state: &PhysicalState, dt: f64, p: f64, range: ActiveRange) -> PhysicalState {
    let g = state.grid;
    let a0 = acceleration(&state.u, g, p, range);
    let mut u = state.u.clone();
    let mut ut = state.ut.clone();
    for i in range.lo..range.hi {
        for k in 0..u.ncols() {
            ut[(i, k)] += 0.5 * dt * a0[(i, k)];
            u[(i, k)] += dt * ut[(i, k)];
        }
    }
    let a1 = acceleration(&u, g, p, range);
    for i in range.lo..range.hi {
        for k in 0..u.ncols() {
            ut[(i, k)] += 0.5 * dt * a1[(i, k)];
        }
    }
    PhysicalState { grid: g, u, ut, t: state.t + dt }
}

/// ½∫(|u_t|² + |u_x|²)dx by the trapezoid rule and one-sided differences.
pub fn linear_energy(state: &PhysicalState) -> f64 {
    let g = state.grid;
    let kinetic: f64 = (0..g.nx)
        .map(|i| {
            let w = if i == 0 || i + 1 == g.nx { 0.5 } else { 1.0 };
            w * state.ut.row(i).norm_squared()
        })
        .sum();
    let potential: f64 = (0..g.nx - 1).map(|i| (state.u.row(i + 1) - state.u.row(i)).norm_squared()).sum();
    0.5 * (kinetic * g.dx + potential / g.dx)
}

/// Physical solver controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalOptions {
    pub cfl: f64,
    /// dt ≤ η (κ₀/max|u|)^{(p−1)/2}: a fixed fraction of the ODE blow-up scale.
    pub eta: f64,
    pub t_max: f64,
    /// Stop once max|u| on the active range reaches this amplitude.
    pub blowup_amplitude: f64,
    /// Only nodes with |x − center| ≤ radius − t are advanced.
    pub cone: Option<(f64, f64)>,
    /// A snapshot is stored when max|u| grows by this factor...
    pub snapshot_growth: f64,
    /// ...or when this much time has passed since the last one.
    pub snapshot_dt: f64,
}

impl Default for PhysicalOptions {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            eta: 5e-4,
            t_max: 10.0,
            blowup_amplitude: 1e6,
            cone: None,
            snapshot_growth: 1.05,
            snapshot_dt: 0.02,
        }
    }
}

/// Why a physical run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum PhysicalOutcome {
    BlowupDetected { t: f64, amplitude: f64 },
    ReachedEnd,
    ConeClosed,
    StepFailure { t: f64 },
}

/// A stored time slice restricted to the active range.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Index of the first stored node.
    pub offset: usize,
    pub u: VectorField,
    pub ut: VectorField,
    pub linear_energy: f64,
}

#[derive(Clone, Debug)]
pub struct PhysicalTrajectory {
    pub grid: UniformGrid,
    pub p: f64,
    pub snapshots: Vec<Snapshot>,
    pub outcome: PhysicalOutcome,
    pub steps: usize,
}

fn active_range(grid: UniformGrid, cone: Option<(f64, f64)>, t: f64) -> ActiveRange {
    match cone {
        None => ActiveRange { lo: 0, hi: grid.nx },
        Some((center, radius)) => {
            let r = radius - t;
            let lo = ((center - r - grid.left) / grid.dx).ceil().max(0.0) as usize;
            let hi_f = ((center + r - grid.left) / grid.dx).floor();
            let hi = if hi_f < 0.0 { 0 } else { (hi_f as usize + 1).min(grid.nx) };
            ActiveRange { lo: lo.min(hi), hi }
        }
    }
}

fn snapshot(state: &PhysicalState, range: ActiveRange) -> Snapshot {
    let len = range.hi - range.lo;
    Snapshot {
        t: state.t,
        offset: range.lo,
        u: state.u.rows(range.lo, len).into_owned(),
        ut: state.ut.rows(range.lo, len).into_owned(),
        linear_energy: linear_energy(state),
    }
}

/// Integrates until blow-up detection, t_max, or the cone closes.
pub fn simulate_physical(initial: &PhysicalState, p: f64, opts: PhysicalOptions) -> Result<PhysicalTrajectory> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must exceed 1")));
    }
    let k0 = kappa0(p);
    let mut state = initial.clone();
    let mut range = active_range(state.grid, opts.cone, state.t);
    let mut snapshots = vec![snapshot(&state, range)];
    let max_amp = |s: &PhysicalState, r: ActiveRange| (r.lo..r.hi).map(|i| s.amplitude(i)).fold(0.0, f64::max);
    let mut last_amp = max_amp(&state, range);
    let mut steps = 0;
    let outcome = loop {
        if range.hi <= range.lo + 2 {
            break PhysicalOutcome::ConeClosed;
        }
        let amp = max_amp(&state, range);
        if !amp.is_finite() {
            break PhysicalOutcome::StepFailure { t: state.t };
        }
        if amp >= opts.blowup_amplitude {
            break PhysicalOutcome::BlowupDetected { t: state.t, amplitude: amp };
        }
        if state.t >= opts.t_max {
            break PhysicalOutcome::ReachedEnd;
        }
        let scale = if amp > 0.0 { opts.eta * (k0 / amp).powf(0.5 * (p - 1.0)) } else { f64::INFINITY };
        let dt = (opts.cfl * state.grid.dx).min(scale).min(opts.t_max - state.t);
        if !(dt > 1e-15 * state.t.abs().max(1.0)) {
            break PhysicalOutcome::StepFailure { t: state.t };
        }
        state = physical_step(&state, dt, p, range);
        steps += 1;
        range = active_range(state.grid, opts.cone, state.t);
        let amp = max_amp(&state, range);
        let since = state.t - snapshots.last().map_or(f64::NEG_INFINITY, |s| s.t);
        if amp >= opts.snapshot_growth * last_amp || since >= opts.snapshot_dt {
            snapshots.push(snapshot(&state, range));
            last_amp = last_amp.max(amp);
        }
    };
    if snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(snapshot(&state, range));
    }
    Ok(PhysicalTrajectory { grid: initial.grid, p, snapshots, outcome, steps })
}

/// Space-independent solution κ₀Ω(T−t)^{−2/(p−1)} and its time derivative.
pub fn ode_blowup_profile(t: f64, blowup_time: f64, p: f64) -> (f64, f64) {
    let a = 2.0 / (p - 1.0);
    let tau = blowup_time - t;
    let u = kappa0(p) * tau.powf(-a);
    (u, a * u / tau)
}

/// Fitted blow-up time at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupEstimate {
    pub x0: f64,
    pub t_est: f64,
    /// RMS residual of log|u| against log κ − (2/(p−1))log(T−t).
    pub fit_quality: f64,
    /// max |T(x0 ± h) − T(x0)|/h from neighbouring fits.
    pub noncharacteristic_slope: f64,
}

/// Amplitude window used by [`estimate_blowup`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupFitOptions {
    /// Samples with |u(x0)| below this multiple of the initial amplitude are skipped.
    pub min_growth: f64,
    /// Samples above this amplitude are skipped (resolution limit).
    pub max_amplitude: f64,
    /// Offset h for the slope of T(·).
    pub probe_offset: f64,
}

impl Default for BlowupFitOptions {
    fn default() -> Self {
        Self { min_growth: 2.0, max_amplitude: 1e6, probe_offset: 0.05 }
    }
}

/// |u(x, t)| by linear interpolation, None outside the stored slice.
fn amplitude_at(traj: &PhysicalTrajectory, snap: &Snapshot, x: f64) -> Option<f64> {
    let g = traj.grid;
    let pos = (x - g.left) / g.dx - snap.offset as f64;
    if pos < 0.0 || pos > (snap.u.nrows() - 1) as f64 {
        return None;
    }
    if snap.u.nrows() == 1 {
        return Some(snap.u.row(0).norm());
    }
    let i = (pos.floor() as usize).min(snap.u.nrows().saturating_sub(2));
    let frac = pos - i as f64;
    let row = snap.u.row(i) * (1.0 - frac) + snap.u.row(i + 1) * frac;
    Some(row.norm())
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// RMS residual of log A = c − a log(T − t) with c fitted, for a given T.
fn log_fit_residual(ts: &[f64], logs: &[f64], a: f64, big_t: f64) -> f64 {
    let shifted: Vec<f64> = ts.iter().zip(logs).map(|(t, l)| l + a * (big_t - t).ln()).collect();
    let c = shifted.iter().sum::<f64>() / shifted.len() as f64;
    (shifted.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / shifted.len() as f64).sqrt()
}

fn fit_point(traj: &PhysicalTrajectory, x0: f64, opts: BlowupFitOptions) -> Result<(f64, f64)> {
    let p = traj.p;
    let a = 2.0 / (p - 1.0);
    let first = traj
        .snapshots
        .first()
        .and_then(|s| amplitude_at(traj, s, x0))
        .ok_or_else(|| Error::NoBlowup(format!("x0 = {x0} outside the computed region")))?;
    let mut ts = Vec::new();
    let mut amps = Vec::new();
    for s in &traj.snapshots {
        if let Some(amp) = amplitude_at(traj, s, x0) {
            if amp >= opts.min_growth * first && amp <= opts.max_amplitude && amp.is_finite() {
                ts.push(s.t);
                amps.push(amp);
            }
        }
    }
    if ts.len() < 4 {
        return Err(Error::NoBlowup(format!("only {} samples show growth at x0 = {x0}", ts.len())));
    }
    // |u|^{−1/a} is affine in t for a self-similar profile.
    let z: Vec<f64> = amps.iter().map(|v| v.powf(-1.0 / a)).collect();
    let (intercept, slope) = linear_fit(&ts, &z);
    if !(slope < 0.0) {
        return Err(Error::NoBlowup(format!("amplitude at x0 = {x0} does not approach a singularity")));
    }
    let t_lin = -intercept / slope;
    let last = *ts.last().expect("nonempty");
    let logs: Vec<f64> = amps.iter().map(|v| v.ln()).collect();
    let gap = (t_lin - last).max(1e-12);
    let (mut lo, mut hi) = (last + 1e-3 * gap, t_lin + 2.0 * gap);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if log_fit_residual(&ts, &logs, a, m1) < log_fit_residual(&ts, &logs, a, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let t_est = 0.5 * (lo + hi);
    Ok((t_est, log_fit_residual(&ts, &logs, a, t_est)))
}

/// Fits T(x0) from the growth of |u(x0, t)| and the local slope of T(·).
pub fn estimate_blowup(traj: &PhysicalTrajectory, x0: f64, opts: BlowupFitOptions) -> Result<BlowupEstimate> {
    let (t_est, fit_quality) = fit_point(traj, x0, opts)?;
    let h = opts.probe_offset;
    let mut slope: f64 = 0.0;
    for x in [x0 - h, x0 + h] {
        if let Ok((t, _)) = fit_point(traj, x, opts) {
            slope = slope.max((t - t_est).abs() / h);
        }
    }
    Ok(BlowupEstimate { x0, t_est, fit_quality, noncharacteristic_slope: slope })
}

/// w and ∂_s w on the y-grid at self-similar time s.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfSimState {
    pub w: VectorField,
    pub ws: VectorField,
    pub s: f64,
}

impl SelfSimState {
    pub fn new(w: VectorField, ws: VectorField, s: f64) -> Self {
        Self { w, ws, s }
    }

    pub fn from_hstate(q: &HState, s: f64) -> Self {
        Self::new(q.q1.clone(), q.q2.clone(), s)
    }

    pub fn to_hstate(&self) -> HState {
        HState::new(self.w.clone(), self.ws.clone())
    }
}

/// A transformed snapshot; `mask[i]` is false where y_i fell outside the
/// computed region (values there are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct SelfSimSample {
    pub state: SelfSimState,
    pub mask: Vec<bool>,
}

impl SelfSimSample {
    pub fn complete(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }
}

/// Four-point Lagrange weights for value and derivative at fractional position t ∈ [0,1]
/// between nodes 1 and 2 of a stencil at −1, 0, 1, 2.
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let nodes = [-1.0, 0.0, 1.0, 2.0];
    let mut value = [0.0; 4];
    let mut deriv = [0.0; 4];
    for j in 0..4 {
        let denom: f64 = (0..4).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
        let others: Vec<f64> = (0..4).filter(|&k| k != j).map(|k| nodes[k]).collect();
        value[j] = others.iter().map(|o| t - o).product::<f64>() / denom;
        deriv[j] = ((t - others[1]) * (t - others[2]) + (t - others[0]) * (t - others[2]) + (t - others[0]) * (t - others[1]))
            / denom;
    }
    (value, deriv)
}

/// Maps snapshots to self-similar variables around (x0, T):
/// y = (x−x0)/(T−t), s = −log(T−t), w = (T−t)^{2/(p−1)}u,
/// ∂_s w = (T−t)^{2/(p−1)}[−(2/(p−1))u + (T−t)(u_t − y u_x)].
pub fn to_selfsim(traj: &PhysicalTrajectory, x0: f64, t_blowup: f64, grid: &WeightedGrid) -> Result<Vec<SelfSimSample>> {
    let p = traj.p;
    let a = 2.0 / (p - 1.0);
    let g = traj.grid;
    let n = grid.n();
    let mut out = Vec::new();
    for snap in &traj.snapshots {
        let tau = t_blowup - snap.t;
        if !(tau > 0.0) {
            continue;
        }
        let m = snap.u.ncols();
        let mut w = DMatrix::zeros(n, m);
        let mut ws = DMatrix::zeros(n, m);
        let mut mask = vec![false; n];
        let len = snap.u.nrows();
        for (i, &y) in grid.nodes().iter().enumerate() {
            let pos = (x0 + y * tau - g.left) / g.dx - snap.offset as f64;
            let base = pos.floor();
            if base < 1.0 || base + 2.0 > (len - 1) as f64 {
                continue;
            }
            let b = base as usize;
            let (cv, cd) = cubic_weights(pos - base);
            mask[i] = true;
            for k in 0..m {
                let (mut u, mut ux, mut ut) = (0.0, 0.0, 0.0);
                for j in 0..4 {
                    let row = b + j - 1;
                    u += cv[j] * snap.u[(row, k)];
                    ux += cd[j] * snap.u[(row, k)] / g.dx;
                    ut += cv[j] * snap.ut[(row, k)];
                }
                let scale = tau.powf(a);
                w[(i, k)] = scale * u;
                ws[(i, k)] = scale * (-a * u + tau * (ut - y * ux));
            }
        }
        out.push(SelfSimSample { state: SelfSimState::new(w, ws, -tau.ln()), mask });
    }
    Ok(out)
}

/// ∂²_s w = 𝓛w − (2(p+1)/(p−1)²)w + |w|^{p−1}w − ((p+3)/(p−1))∂_s w − 2y∂_y∂_s w.
pub fn selfsim_rhs(state: &SelfSimState, grid: &WeightedGrid) -> VectorField {
    let p = grid.p();
    let c0 = linear_coefficient(p);
    let c = damping_coefficient(p);
    let lw = grid.apply_l_field(&state.w);
    let dws = grid.derivative_field(&state.ws);
    let mut out = lw;
    for i in 0..state.w.nrows() {
        let y = grid.nodes()[i];
        let amp = state.w.row(i).norm().powf(p - 1.0);
        for k in 0..state.w.ncols() {
            out[(i, k)] += (amp - c0) * state.w[(i, k)] - c * state.ws[(i, k)] - 2.0 * y * dws[(i, k)];
        }
    }
    out
}

/// Largest eigenvalue modulus of the linearization at κ₀e₁ on this grid.
pub fn linear_spectral_radius(grid: &WeightedGrid) -> f64 {
    let n = grid.n();
    let p = grid.p();
    let psi = p * kappa0(p).powf(p - 1.0) - linear_coefficient(p);
    let c = damping_coefficient(p);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        let y = grid.nodes()[i];
        for j in 0..n {
            a[(n + i, j)] = grid.l_matrix()[(i, j)];
            a[(n + i, n + j)] = -2.0 * y * grid.diff()[(i, j)];
        }
        a[(n + i, i)] += psi;
        a[(n + i, n + i)] -= c;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// RK4 step size with |λ|dt = 1.8. The outermost eigenvalues sit at angles
/// where 2.5 is already unstable.
pub fn stable_dt(grid: &WeightedGrid) -> f64 {
    1.8 / linear_spectral_radius(grid)
}

/// Self-similar solver controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfSimOptions {
    pub dt: f64,
    pub s_len: f64,
    /// Spacing of stored samples and observer calls.
    pub sample_every: f64,
    /// Abort when ‖(w, ∂_s w)‖_H exceeds this.
    pub max_norm: f64,
}

/// Returned by the sample observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct SelfSimRun {
    pub samples: Vec<SelfSimState>,
    /// (s, E) after every step, starting with the initial state.
    pub energy: Vec<(f64, f64)>,
    pub stopped_early: bool,
}

impl SelfSimRun {
    /// Largest step-to-step increase of E (zero if E never increases).
    pub fn max_energy_increase(&self) -> f64 {
        self.energy.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max)
    }
}

fn rk4_step(state: &SelfSimState, dt: f64, grid: &WeightedGrid) -> SelfSimState {
    let k1w = state.ws.clone();
    let k1v = selfsim_rhs(state, grid);
    let mid1 = SelfSimState::new(&state.w + &k1w * (0.5 * dt), &state.ws + &k1v * (0.5 * dt), state.s + 0.5 * dt);
    let k2w = mid1.ws.clone();
    let k2v = selfsim_rhs(&mid1, grid);
    let mid2 = SelfSimState::new(&state.w + &k2w * (0.5 * dt), &state.ws + &k2v * (0.5 * dt), state.s + 0.5 * dt);
    let k3w = mid2.ws.clone();
    let k3v = selfsim_rhs(&mid2, grid);
    let end = SelfSimState::new(&state.w + &k3w * dt, &state.ws + &k3v * dt, state.s + dt);
    let k4w = end.ws.clone();
    let k4v = selfsim_rhs(&end, grid);
    let w = &state.w + (k1w + &k2w * 2.0 + &k3w * 2.0 + k4w) * (dt / 6.0);
    let ws = &state.ws + (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (dt / 6.0);
    SelfSimState::new(w, ws, state.s + dt)
}

/// Integrates the self-similar equation with RK4, calling `observer` at
/// every stored sample (including the initial state).
pub fn simulate_selfsim<F>(initial: &SelfSimState, grid: &WeightedGrid, opts: SelfSimOptions, mut observer: F) -> Result<SelfSimRun>
where
    F: FnMut(&SelfSimState) -> Result<Control>,
{
    if !(opts.dt > 0.0) || !(opts.s_len >= 0.0) || !(opts.sample_every > 0.0) {
        return Err(Error::InvalidParameter(format!("{opts:?}")));
    }
    let steps = (opts.s_len / opts.dt).round() as usize;
    let stride = ((opts.sample_every / opts.dt).round() as usize).max(1);
    let mut state = initial.clone();
    let mut run = SelfSimRun {
        samples: vec![state.clone()],
        energy: vec![(state.s, energy(&state.to_hstate(), grid))],
        stopped_early: false,
    };
    if observer(&state)? == Control::Stop {
        run.stopped_early = true;
        return Ok(run);
    }
    for k in 1..=steps {
        state = rk4_step(&state, opts.dt, grid);
        state.s = initial.s + k as f64 * opts.dt;
        let q = state.to_hstate();
        if !q.is_finite() || grid.h_norm(&q) > opts.max_norm {
            return Err(Error::Instability { at: state.s, reason: format!("norm exceeded {:.3e}", opts.max_norm) });
        }
        run.energy.push((state.s, energy(&q, grid)));
        if k % stride == 0 || k == steps {
            run.samples.push(state.clone());
            if observer(&state)? == Control::Stop {
                run.stopped_early = true;
                break;
            }
        }
    }
    Ok(run)
}

/// Convenience wrapper without an observer.
pub fn simulate_selfsim_plain(initial: &SelfSimState, grid: &WeightedGrid, opts: SelfSimOptions) -> Result<SelfSimRun> {
    simulate_selfsim(initial, grid, opts, |_| Ok(Control::Continue))
}

/// Uniform state u ≡ value·Ω with velocity rate·Ω.
pub fn uniform_state(grid: UniformGrid, omega: &DVector<f64>, value: f64, rate: f64, t: f64) -> PhysicalState {
    let u = DMatrix::from_fn(grid.nx, omega.len(), |_, k| value * omega[k]);
    let ut = DMatrix::from_fn(grid.nx, omega.len(), |_, k| rate * omega[k]);
    PhysicalState { grid, u, ut, t }
}

/// The boosted self-similar solution u = κ₀(1−d²)^{1/(p−1)}((T−t) + d(x−x0))^{−2/(p−1)}Ω,
/// which blows up on the line T(x) = T + d(x − x0).
pub fn traveling_state(grid: UniformGrid, omega: &DVector<f64>, d: f64, x0: f64, blowup_time: f64, p: f64, t: f64) -> PhysicalState {
    let a = 2.0 / (p - 1.0);
    let c = kappa0(p) * (1.0 - d * d).powf(1.0 / (p - 1.0));
    let mut u = DMatrix::zeros(grid.nx, omega.len());
    let mut ut = DMatrix::zeros(grid.nx, omega.len());
    for i in 0..grid.nx {
        let z = (blowup_time - t) + d * (grid.x(i) - x0);
        let val = c * z.powf(-a);
        for k in 0..omega.len() {
            u[(i, k)] = val * omega[k];
            ut[(i, k)] = a * val / z * omega[k];
        }
    }
    PhysicalState { grid, u, ut, t }
}
