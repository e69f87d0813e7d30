//! Solvers for the threshold-slip Stokes problem in velocity-pressure form:
//! the Uzawa projection iteration for a frozen slip bound, the slip-trace
//! map `phi -> |u_tau|`, and the fixed-point loop whose limit solves the
//! problem with the bound evaluated at the solution's own tangential speed.

use std::sync::Arc;

use crate::error::SolverError;
use crate::fem::{ConstraintMode, SaddleProblem};
use crate::sparse::dot;

/// Slip-bound function `g` with declared constants; construction validates
/// the bounds and the Lipschitz constant by dense sampling.
#[derive(Clone)]
pub enum SlipBound {
    Constant {
        g0: f64,
    },
    /// `g(t) = g0 + slope * min(t, t_cap)`
    LinearSaturating {
        g0: f64,
        slope: f64,
        t_cap: f64,
    },
    /// `g(t) = g0 + amplitude * exp(-rate * t)`
    ExpDecay {
        g0: f64,
        amplitude: f64,
        rate: f64,
    },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        g_min: f64,
        g_max: f64,
        lipschitz: f64,
    },
}

impl std::fmt::Debug for SlipBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlipBound::Constant { g0 } => write!(f, "SlipBound::Constant({g0})"),
            SlipBound::LinearSaturating { g0, slope, t_cap } => {
                write!(f, "SlipBound::LinearSaturating({g0}, {slope}, {t_cap})")
            }
            SlipBound::ExpDecay {
                g0,
                amplitude,
                rate,
            } => write!(f, "SlipBound::ExpDecay({g0}, {amplitude}, {rate})"),
            SlipBound::Custom {
                g_min,
                g_max,
                lipschitz,
                ..
            } => write!(f, "SlipBound::Custom[{g_min}, {g_max}], L = {lipschitz}"),
        }
    }
}

impl SlipBound {
    pub fn g(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            SlipBound::Constant { g0 } => *g0,
            SlipBound::LinearSaturating { g0, slope, t_cap } => g0 + slope * t.min(*t_cap),
            SlipBound::ExpDecay {
                g0,
                amplitude,
                rate,
            } => g0 + amplitude * (-rate * t).exp(),
            SlipBound::Custom { f, .. } => f(t),
        }
    }

    pub fn g_min(&self) -> f64 {
        match self {
            SlipBound::Constant { g0 } => *g0,
            SlipBound::LinearSaturating { g0, slope, t_cap } => (g0 + slope * t_cap).min(*g0),
            SlipBound::ExpDecay { g0, .. } => *g0,
            SlipBound::Custom { g_min, .. } => *g_min,
        }
    }

    pub fn g_max(&self) -> f64 {
        match self {
            SlipBound::Constant { g0 } => *g0,
            SlipBound::LinearSaturating { g0, slope, t_cap } => (g0 + slope * t_cap).max(*g0),
            SlipBound::ExpDecay { g0, amplitude, .. } => g0 + amplitude,
            SlipBound::Custom { g_max, .. } => *g_max,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SlipBound::Constant { .. } => 0.0,
            SlipBound::LinearSaturating { slope, .. } => slope.abs(),
            SlipBound::ExpDecay {
                amplitude, rate, ..
            } => amplitude * rate,
            SlipBound::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Verifies positivity, the declared bounds, and the declared Lipschitz
    /// constant on a dense sample of `[0, t_max]`.
    pub fn validated(self, t_max: f64) -> Result<Self, SolverError> {
        if !(self.g_min() > 0.0) {
            return Err(SolverError::InvalidSlipBound(format!(
                "g_min must be positive, got {}",
                self.g_min()
            )));
        }
        if self.g_max() < self.g_min() || self.lipschitz() < 0.0 {
            return Err(SolverError::InvalidSlipBound(
                "inconsistent declared constants".into(),
            ));
        }
        let n = 2000usize;
        let dt = t_max / n as f64;
        let mut prev = self.g(0.0);
        for i in 0..=n {
            let t = i as f64 * dt;
            let v = self.g(t);
            if !(v >= self.g_min() - 1e-12 && v <= self.g_max() + 1e-12) {
                return Err(SolverError::InvalidSlipBound(format!(
                    "g({t}) = {v} escapes [{}, {}]",
                    self.g_min(),
                    self.g_max()
                )));
            }
            if i > 0 {
                let quotient = (v - prev).abs() / dt;
                if quotient > self.lipschitz() * (1.0 + 1e-9) + 1e-12 {
                    return Err(SolverError::InvalidSlipBound(format!(
                        "difference quotient {quotient} near t = {t} exceeds declared L = {}",
                        self.lipschitz()
                    )));
                }
            }
            prev = v;
        }
        Ok(self)
    }
}

/// Converged discrete flow: full velocity dof vector, nodal pressure, and
/// the slip-boundary traces and multipliers at active slip nodes.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub u_tau: Vec<f64>,
    pub sigma_tau: Vec<f64>,
    pub sigma_nu: Option<Vec<f64>>,
    /// Multiplier of the pressure mean-zero constraint.
    pub lambda: f64,
    pub uzawa_iters: usize,
    /// `a(u,u)/2 - (f,u) + j(phi, u_tau)` at the returned iterate.
    pub energy: f64,
    /// Complementarity gap per Uzawa iteration (diagnostic).
    pub gap_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct UzawaOptions {
    /// Step size; defaults to the reciprocal dual-operator norm.
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    /// Warm start for the slip multiplier.
    pub sigma0: Option<Vec<f64>>,
}

impl Default for UzawaOptions {
    fn default() -> Self {
        UzawaOptions {
            rho: None,
            tol: 1e-10,
            max_iters: 5000,
            sigma0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Relaxation weight on the slip-trace update; `None` selects 1 when
    /// the contraction estimate is below one and 0.5 otherwise.
    pub damping: Option<f64>,
    pub uzawa: UzawaOptions,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-8,
            max_iters: 200,
            damping: None,
            uzawa: UzawaOptions::default(),
        }
    }
}

/// One outer fixed-point step record.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointStep {
    /// `|| phi_{k+1} - phi_k ||` in the weighted boundary norm.
    pub fp_diff: f64,
    pub uzawa_iters: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IterationHistory {
    pub steps: Vec<FixedPointStep>,
}

/// Uzawa projection iteration for the saddle problem with slip bounds
/// `g(phi_j)` frozen at the given `phi`. Works on both the strong (rotated)
/// and weak (multiplier) treatment of impermeability; the two differ only
/// in the factorized system behind the dual trace operator.
pub(crate) fn uzawa_solve(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi: &[f64],
    opts: &UzawaOptions,
) -> Result<FlowState, SolverError> {
    let m = problem.n_active();
    assert_eq!(phi.len(), m, "phi must hold one value per active slip node");
    if let Some((index, &value)) = phi.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(SolverError::NonPositivePhi { index, value });
    }
    let bounds: Vec<f64> = phi.iter().map(|&t| g.g(t)).collect();
    let weights = problem.cs.active_weights();
    let clamp = |s: f64, b: f64| s.max(-b).min(b);

    let mut sigma: Vec<f64> = match &opts.sigma0 {
        Some(s0) => {
            assert_eq!(s0.len(), m);
            s0.iter().zip(&bounds).map(|(&s, &b)| clamp(s, b)).collect()
        }
        None => vec![0.0; m],
    };
    let mut rho = opts.rho.unwrap_or(problem.rho_default);
    let mut u_tau = problem.u_tau_of_sigma(&sigma);
    let mut gap_trace = Vec::new();
    let mut iters = 0;
    let mut converged = m == 0;
    let mut last_residual = 0.0;
    let mut increases = 0usize;

    while iters < opts.max_iters && !converged {
        iters += 1;
        let mut delta_w: f64 = 0.0;
        let mut sigma_new = vec![0.0; m];
        for j in 0..m {
            sigma_new[j] = clamp(sigma[j] - rho * u_tau[j], bounds[j]);
            delta_w = delta_w.max(weights[j] * (sigma_new[j] - sigma[j]).abs());
        }
        let u_tau_new = problem.u_tau_of_sigma(&sigma_new);
        let gap: f64 = (0..m)
            .map(|j| weights[j] * (sigma_new[j] * u_tau_new[j] + bounds[j] * u_tau_new[j].abs()))
            .sum();
        // halve the step when the complementarity gap grows twice in a row
        if let Some(&prev) = gap_trace.last() {
            if gap > prev {
                increases += 1;
                if increases >= 2 {
                    rho *= 0.5;
                    increases = 0;
                }
            } else {
                increases = 0;
            }
        }
        gap_trace.push(gap);
        sigma = sigma_new;
        u_tau = u_tau_new;
        last_residual = delta_w.max(gap);
        if delta_w <= opts.tol && gap <= opts.tol {
            converged = true;
        }
    }
    if !converged {
        return Err(SolverError::NoConvergence {
            iterations: iters,
            residual: last_residual,
        });
    }

    let raw = problem.solve_with_sigma(&sigma);
    let u_tau = problem.cs.t_red.mul_vec(&raw.y);
    let friction: f64 = (0..m)
        .map(|j| weights[j] * bounds[j] * u_tau[j].abs())
        .sum();
    let a_y = problem.cs.a_red.mul_vec(&raw.y);
    let energy = 0.5 * dot(&raw.y, &a_y) - dot(&problem.cs.f_red, &raw.y) + friction;

    Ok(FlowState {
        velocity: problem.cs.expand_velocity(&raw.y),
        pressure: raw.pressure,
        u_tau,
        sigma_tau: sigma,
        sigma_nu: raw.sigma_nu,
        lambda: raw.lambda,
        uzawa_iters: iters,
        energy,
        gap_trace,
    })
}

/// Solves the auxiliary problem with slip bound frozen at `phi` (strong
/// impermeability).
pub fn solve_aux(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi: &[f64],
    opts: &UzawaOptions,
) -> Result<FlowState, SolverError> {
    assert_eq!(
        problem.cs.mode,
        ConstraintMode::StrongImperm,
        "solve_aux expects the strong-impermeability system"
    );
    uzawa_solve(problem, g, phi, opts)
}

/// The slip-trace map: nodal `|u_tau|` of the auxiliary solution.
pub fn psi(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi: &[f64],
    opts: &UzawaOptions,
) -> Result<Vec<f64>, SolverError> {
    Ok(solve_aux(problem, g, phi, opts)?
        .u_tau
        .iter()
        .map(|t| t.abs())
        .collect())
}

/// Weighted boundary norm `(sum W_j v_j^2)^{1/2}`, the lumped L2(S) norm.
pub fn boundary_norm(weights: &[f64], v: &[f64]) -> f64 {
    weights
        .iter()
        .zip(v)
        .map(|(w, x)| w * x * x)
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn run_fixed_point<F>(
    weights: &[f64],
    contraction_estimate: f64,
    phi0: &[f64],
    opts: &FixedPointOptions,
    mut solve: F,
) -> Result<(FlowState, IterationHistory), SolverError>
where
    F: FnMut(&[f64], Option<&[f64]>) -> Result<FlowState, SolverError>,
{
    let theta = opts.damping.unwrap_or(if contraction_estimate >= 1.0 {
        0.5
    } else {
        1.0
    });
    let mut phi = phi0.to_vec();
    let mut warm: Option<Vec<f64>> = None;
    let mut history = IterationHistory::default();
    for _ in 0..opts.max_iters {
        let state = solve(&phi, warm.as_deref())?;
        let psi_vals: Vec<f64> = state.u_tau.iter().map(|t| t.abs()).collect();
        let phi_next: Vec<f64> = phi
            .iter()
            .zip(&psi_vals)
            .map(|(&p, &q)| (1.0 - theta) * p + theta * q)
            .collect();
        let diff: Vec<f64> = phi_next.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let d = boundary_norm(weights, &diff);
        history.steps.push(FixedPointStep {
            fp_diff: d,
            uzawa_iters: state.uzawa_iters,
            energy: state.energy,
        });
        if d <= opts.tol * (1.0 + boundary_norm(weights, &phi)) {
            return Ok((state, history));
        }
        warm = Some(state.sigma_tau.clone());
        phi = phi_next;
    }
    let residual = history.steps.last().map(|s| s.fp_diff).unwrap_or(f64::NAN);
    Err(SolverError::NoConvergence {
        iterations: history.steps.len(),
        residual,
    })
}

/// Successive approximations on `phi -> |u_tau(phi)|`; the returned state
/// solves the slip problem with the bound evaluated at its own trace.
pub fn fixed_point(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi0: &[f64],
    opts: &FixedPointOptions,
) -> Result<(FlowState, IterationHistory), SolverError> {
    assert_eq!(problem.cs.mode, ConstraintMode::StrongImperm);
    let weights = problem.cs.active_weights();
    let contraction = g.lipschitz() / problem.rho_default.max(1e-300);
    run_fixed_point(&weights, contraction, phi0, opts, |phi, warm| {
        let mut uz = opts.uzawa.clone();
        uz.sigma0 = warm.map(|w| w.to_vec());
        uzawa_solve(problem, g, phi, &uz)
    })
}

/// Pointwise residuals of the discrete threshold-slip conditions.
#[derive(Debug, Clone, Copy)]
pub struct ViResidual {
    /// `max_j max(0, |sigma_j| - g(phi_j))`
    pub bound_violation: f64,
    /// `sum_j W_j (sigma_j u_tau_j + g(phi_j) |u_tau_j|)`
    pub complementarity_gap: f64,
    /// Worst slack `g(phi_j) - |sigma_j|` over sliding nodes
    /// (`|u_tau_j| > 10 tol`); zero when no node slides.
    pub saturation_defect: f64,
}

pub fn vi_residual(
    state: &FlowState,
    g: &SlipBound,
    phi: &[f64],
    weights: &[f64],
    tol: f64,
) -> ViResidual {
    let mut bound_violation: f64 = 0.0;
    let mut gap = 0.0;
    let mut saturation: f64 = 0.0;
    for j in 0..phi.len() {
        let bound = g.g(phi[j]);
        let s = state.sigma_tau[j];
        let u = state.u_tau[j];
        bound_violation = bound_violation.max((s.abs() - bound).max(0.0));
        gap += weights[j] * (s * u + bound * u.abs());
        if u.abs() > 10.0 * tol {
            saturation = saturation.max(bound - s.abs());
        }
    }
    ViResidual {
        bound_violation,
        complementarity_gap: gap,
        saturation_defect: saturation,
    }
}

/// Plain Stokes solve on an already-constrained system (no slip forcing);
/// the reference for the stick limit and the Dirichlet convergence study.
pub fn linear_stokes(problem: &SaddleProblem) -> FlowState {
    let raw = problem.solve_with_sigma(&vec![0.0; problem.n_active()]);
    let u_tau = problem.cs.t_red.mul_vec(&raw.y);
    let a_y = problem.cs.a_red.mul_vec(&raw.y);
    let energy = 0.5 * dot(&raw.y, &a_y) - dot(&problem.cs.f_red, &raw.y);
    FlowState {
        velocity: problem.cs.expand_velocity(&raw.y),
        pressure: raw.pressure,
        sigma_tau: vec![0.0; problem.n_active()],
        sigma_nu: raw.sigma_nu,
        lambda: raw.lambda,
        uzawa_iters: 0,
        energy,
        gap_trace: Vec::new(),
        u_tau,
    }
}

/// Discrete trace-norm estimate: square root of the largest eigenvalue of
/// `T^T W T x = lambda A x` on the strong-mode velocity space, by power
/// iteration with sparse Cholesky solves of A (eigenvalue tolerance 1e-8,
/// at most 500 sweeps).
pub fn estimate_trace_norm(cs: &crate::fem::ConstrainedSystem) -> Result<f64, SolverError> {
    assert_eq!(cs.mode, ConstraintMode::StrongImperm);
    let n = cs.n_red;
    let triplets: Vec<(usize, usize, f64)> = cs.a_red.iter().collect();
    let chol = crate::sparse::SparseSpd::factor(n, &triplets)?;
    let weights = cs.active_weights();
    let apply_m = |x: &[f64]| -> Vec<f64> {
        let tx = cs.t_red.mul_vec(x);
        let wtx: Vec<f64> = tx.iter().zip(&weights).map(|(t, w)| w * t).collect();
        cs.t_red.mul_transpose_vec(&wtx)
    };
    // start from A^{-1} T^T W 1: generic overlap with the top eigenvector
    let wt1: Vec<f64> = weights.clone();
    let mut v = chol.solve(&cs.t_red.mul_transpose_vec(&wt1));
    let a_norm = |x: &[f64]| cs.a_red.bilinear(x, x).max(0.0).sqrt();
    let s = a_norm(&v);
    if s == 0.0 {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= s);
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..500 {
        let mv = apply_m(&v);
        let lambda = dot(&v, &mv);
        if (lambda - lambda_prev).abs() <= 1e-8 * lambda.abs().max(1e-300) {
            return Ok(lambda.max(0.0).sqrt());
        }
        lambda_prev = lambda;
        let mut z = chol.solve(&mv);
        let nz = a_norm(&z);
        if nz == 0.0 {
            return Ok(0.0);
        }
        z.iter_mut().for_each(|x| *x /= nz);
        v = z;
    }
    Err(SolverError::NoConvergence {
        iterations: 500,
        residual: lambda_prev,
    })
}

#[derive(Debug, Clone)]
pub struct SmoothedNewtonOptions {
    /// Cascade of smoothing widths for `|t| ~ sqrt(t^2 + eps^2)`.
    pub eps_levels: Vec<f64>,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SmoothedNewtonOptions {
    fn default() -> Self {
        SmoothedNewtonOptions {
            eps_levels: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
            newton_tol: 1e-13,
            max_newton: 60,
        }
    }
}

/// Cross-check solver: Newton on the eps-smoothed friction term, cascading
/// eps toward zero. Independent of the Uzawa path (no dual operator, fresh
/// factorization per step); meant for verification runs, not production.
pub fn solve_aux_smoothed(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi: &[f64],
    opts: &SmoothedNewtonOptions,
) -> Result<FlowState, SolverError> {
    let cs = &problem.cs;
    assert_eq!(cs.mode, ConstraintMode::StrongImperm);
    let m = cs.n_active();
    assert_eq!(phi.len(), m);
    let bounds: Vec<f64> = phi.iter().map(|&t| g.g(t)).collect();
    let weights = cs.active_weights();
    let n_red = cs.n_red;
    let n_p = cs.n_pressure;
    let off_p = n_red;
    let off_l = n_red + n_p;
    let n_total = off_l + 1;

    let mut base: Vec<(usize, usize, f64)> = Vec::new();
    for (r, c, v) in cs.a_red.iter() {
        base.push((r, c, v));
    }
    for (r, c, v) in cs.b_red.iter() {
        base.push((c, off_p + r, -v));
        base.push((off_p + r, c, -v));
    }
    for (kp, &mv) in cs.pressure_weights.iter().enumerate() {
        base.push((off_p + kp, off_l, mv));
        base.push((off_l, off_p + kp, mv));
    }

    // tangential reduced dof per active node (single-entry rows in strong
    // mode)
    let tau_dof: Vec<usize> = (0..m)
        .map(|j| cs.t_red.row(j).next().expect("tangential row").0)
        .collect();

    let residual = |z: &[f64], eps: f64| -> Vec<f64> {
        let y = &z[..n_red];
        let p = &z[off_p..off_p + n_p];
        let lam = z[off_l];
        let mut r = vec![0.0; n_total];
        let ay = cs.a_red.mul_vec(y);
        let btp = cs.b_red.mul_transpose_vec(p);
        for i in 0..n_red {
            r[i] = ay[i] - btp[i] - cs.f_red[i];
        }
        for j in 0..m {
            let u = y[tau_dof[j]];
            r[tau_dof[j]] += weights[j] * bounds[j] * u / (u * u + eps * eps).sqrt();
        }
        let by = cs.b_red.mul_vec(y);
        for k in 0..n_p {
            r[off_p + k] = -by[k] + cs.pressure_weights[k] * lam;
        }
        r[off_l] = dot(&cs.pressure_weights, p);
        r
    };

    let scale = 1.0 + crate::sparse::norm_inf(&cs.f_red);
    let mut z = vec![0.0; n_total];
    for &eps in &opts.eps_levels {
        let mut converged = false;
        for _ in 0..opts.max_newton {
            let r = residual(&z, eps);
            let rn = crate::sparse::norm_inf(&r);
            if rn <= opts.newton_tol * scale {
                converged = true;
                break;
            }
            let mut jac = base.clone();
            for j in 0..m {
                let u = z[tau_dof[j]];
                let denom = (u * u + eps * eps).sqrt();
                let d = weights[j] * bounds[j] * eps * eps / (denom * denom * denom);
                jac.push((tau_dof[j], tau_dof[j], d));
            }
            let lu = crate::sparse::SparseLu::factor(n_total, &jac)?;
            let step = lu.solve(&r);
            // backtrack on the residual norm; the smoothed problem is
            // convex, so full steps almost always pass
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(zi, si)| zi - t * si).collect();
                if crate::sparse::norm_inf(&residual(&trial, eps)) < rn {
                    z = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !converged {
            let rn = crate::sparse::norm_inf(&residual(&z, eps));
            if rn > 1e-9 * scale {
                return Err(SolverError::NoConvergence {
                    iterations: opts.max_newton,
                    residual: rn,
                });
            }
        }
    }

    let eps_last = *opts.eps_levels.last().expect("nonempty cascade");
    let y = z[..n_red].to_vec();
    let pressure = z[off_p..off_p + n_p].to_vec();
    let u_tau = cs.t_red.mul_vec(&y);
    let sigma_tau: Vec<f64> = (0..m)
        .map(|j| {
            let u = u_tau[j];
            -bounds[j] * u / (u * u + eps_last * eps_last).sqrt()
        })
        .collect();
    let friction: f64 = (0..m)
        .map(|j| weights[j] * bounds[j] * u_tau[j].abs())
        .sum();
    let a_y = cs.a_red.mul_vec(&y);
    let energy = 0.5 * dot(&y, &a_y) - dot(&cs.f_red, &y) + friction;
    Ok(FlowState {
        velocity: cs.expand_velocity(&y),
        pressure,
        u_tau,
        sigma_tau,
        sigma_nu: None,
        lambda: z[off_l],
        uzawa_iters: 0,
        energy,
        gap_trace: Vec::new(),
    })
}
