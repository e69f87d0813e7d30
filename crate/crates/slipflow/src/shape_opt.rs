//! Shape optimization over control-point boundary profiles and the
//! shape-stability experiments.
//!
//! The state problem is nonsmooth (threshold slip), so the optimizer is a
//! derivative-free projected compass search: probe one step along each
//! control coordinate, clip into the value box, reject probes that fail
//! admissibility, accept strict improvement, shrink otherwise.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{GeometryError, SolverError};
use crate::fem::{
    assemble, build_space, constrain, AssembledSystem, ConstraintMode, FemSpace, SaddleProblem,
};
use crate::four_field::{solve_four_field, MultiplierSet};
use crate::geometry::{
    build_mesh, validate_shape, AdmissibleSetParams, BoundaryShape, CubicSpline, ShapeProfile,
};
use crate::slip_solver::{fixed_point, FixedPointOptions, FlowState, SlipBound};

pub type TargetFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cost functional evaluated on solver outputs.
#[derive(Clone)]
pub enum CostSpec {
    /// `J = int |grad u|^2 = u^T A u`
    Dissipation,
    /// `J = weight * sum_j W_j (sigma_tau_j - target(x_j))^2`
    StressTracking { target: TargetFn, weight: f64 },
    /// `J = weight * sum_j W_j (u_tau_j - target(x_j))^2`
    TraceTracking { target: TargetFn, weight: f64 },
}

impl std::fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostSpec::Dissipation => f.write_str("CostSpec::Dissipation"),
            CostSpec::StressTracking { weight, .. } => {
                write!(f, "CostSpec::StressTracking(weight = {weight})")
            }
            CostSpec::TraceTracking { weight, .. } => {
                write!(f, "CostSpec::TraceTracking(weight = {weight})")
            }
        }
    }
}

impl CostSpec {
    pub fn needs_four_field(&self) -> bool {
        matches!(self, CostSpec::StressTracking { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Velocity-pressure with strong impermeability.
    VelocityPressure,
    /// Four-field with boundary-stress multipliers.
    FourField,
}

/// Fixed discretization and solver settings for one optimization run.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub nx: usize,
    pub ny: usize,
    pub force: [f64; 2],
    pub slip: SlipBound,
    pub formulation: Formulation,
    pub fixed_point: FixedPointOptions,
}

/// Clamped-spline profile through `m >= 4` control values at uniform
/// abscissae, validated against the admissible set.
pub fn shape_from_controls(
    controls: &[f64],
    params: &AdmissibleSetParams,
) -> Result<BoundaryShape, GeometryError> {
    let m = controls.len();
    if m < 4 {
        return Err(GeometryError::TooFewControls(m));
    }
    let x: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let spline = CubicSpline::not_a_knot(x, controls.to_vec())
        .expect("uniform abscissae with m >= 4 form a valid spline");
    validate_shape(ShapeProfile::Spline(spline), params)
}

/// Solver outputs of a single cost evaluation.
#[derive(Debug)]
pub struct CostEval {
    pub j: f64,
    pub state: FlowState,
    pub multipliers: Option<MultiplierSet>,
    pub space: FemSpace,
    pub system: AssembledSystem,
    pub fp_steps: usize,
    pub uzawa_total: usize,
}

type ShapeSolve = (
    FlowState,
    Option<MultiplierSet>,
    FemSpace,
    AssembledSystem,
    usize,
    usize,
);

pub(crate) fn solve_on_shape(
    shape: &BoundaryShape,
    cfg: &EvalConfig,
) -> Result<ShapeSolve, SolverError> {
    let mesh = build_mesh(shape, cfg.nx, cfg.ny)?;
    let space = build_space(shape, mesh);
    let force = cfg.force;
    let system = assemble(&space, move |_| force);
    let mode = match cfg.formulation {
        Formulation::VelocityPressure => ConstraintMode::StrongImperm,
        Formulation::FourField => ConstraintMode::WeakImperm,
    };
    let problem = SaddleProblem::new(constrain(&space, &system, mode))?;
    let phi0 = vec![0.0; problem.n_active()];
    let (state, mult, history) = match cfg.formulation {
        Formulation::VelocityPressure => {
            let (state, history) = fixed_point(&problem, &cfg.slip, &phi0, &cfg.fixed_point)?;
            (state, None, history)
        }
        Formulation::FourField => {
            let (state, mult, history) =
                solve_four_field(&problem, &cfg.slip, &phi0, &cfg.fixed_point)?;
            (state, Some(mult), history)
        }
    };
    let uzawa_total = history.steps.iter().map(|s| s.uzawa_iters).sum();
    Ok((state, mult, space, system, history.steps.len(), uzawa_total))
}

/// Solves the state problem on the shape's mesh and evaluates the cost.
pub fn evaluate_cost(
    shape: &BoundaryShape,
    cost: &CostSpec,
    cfg: &EvalConfig,
) -> Result<CostEval, SolverError> {
    assert!(
        !(cost.needs_four_field() && cfg.formulation == Formulation::VelocityPressure),
        "stress tracking requires the four-field formulation"
    );
    let (state, multipliers, space, system, fp_steps, uzawa_total) = solve_on_shape(shape, cfg)?;
    let weights: Vec<f64> = space
        .s_nodes
        .iter()
        .filter(|s| !s.corner)
        .map(|s| s.weight)
        .collect();
    let xs: Vec<f64> = space
        .s_nodes
        .iter()
        .filter(|s| !s.corner)
        .map(|s| s.x1)
        .collect();
    let j = match cost {
        CostSpec::Dissipation => system.a.bilinear(&state.velocity, &state.velocity),
        CostSpec::StressTracking { target, weight } => {
            weight
                * weights
                    .iter()
                    .zip(&xs)
                    .zip(&state.sigma_tau)
                    .map(|((w, x), s)| w * (s - target(*x)).powi(2))
                    .sum::<f64>()
        }
        CostSpec::TraceTracking { target, weight } => {
            weight
                * weights
                    .iter()
                    .zip(&xs)
                    .zip(&state.u_tau)
                    .map(|((w, x), u)| w * (u - target(*x)).powi(2))
                    .sum::<f64>()
        }
    };
    Ok(CostEval {
        j,
        state,
        multipliers,
        space,
        system,
        fp_steps,
        uzawa_total,
    })
}

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub initial: Vec<f64>,
    pub step0: f64,
    pub shrink: f64,
    /// Number of solver evaluations allowed after the initial point.
    pub budget: usize,
}

/// One recorded evaluation (probes that fail admissibility are kept with
/// the infinity sentinel).
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub controls: Vec<f64>,
    pub feasible: bool,
    pub j: f64,
    pub step: f64,
    pub fp_steps: usize,
    pub uzawa_total: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OptRun {
    pub evals: Vec<EvalRecord>,
    pub best_controls: Vec<f64>,
    pub best_j: f64,
    /// Step size after each shrink event.
    pub step_trace: Vec<f64>,
}

impl OptRun {
    /// Running minimum of J over the recorded evaluations.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.evals
            .iter()
            .map(|e| {
                best = best.min(e.j);
                best
            })
            .collect()
    }
}

/// Projected compass search over control vectors. Probes are evaluated in
/// parallel but reduced in fixed coordinate order (+ before -, coordinate 0
/// first), so runs are deterministic for a given configuration.
pub fn optimize(
    cost: &CostSpec,
    params: &AdmissibleSetParams,
    opts: &OptimizerOptions,
    cfg: &EvalConfig,
) -> Result<OptRun, SolverError> {
    let m = opts.initial.len();
    let shape0 = shape_from_controls(&opts.initial, params)
        .map_err(|e| SolverError::InfeasibleStart(e.to_string()))?;
    let initial_eval = evaluate_cost(&shape0, cost, cfg)?;

    let mut run = OptRun {
        evals: vec![EvalRecord {
            controls: opts.initial.clone(),
            feasible: true,
            j: initial_eval.j,
            step: opts.step0,
            fp_steps: initial_eval.fp_steps,
            uzawa_total: initial_eval.uzawa_total,
        }],
        best_controls: opts.initial.clone(),
        best_j: initial_eval.j,
        step_trace: vec![opts.step0],
    };

    let mut step = opts.step0;
    let mut used = 0usize;
    while used < opts.budget && step >= 1e-4 {
        // fixed probe order: per coordinate, + then -
        let mut probes: Vec<(Vec<f64>, Option<BoundaryShape>)> = Vec::new();
        for coord in 0..m {
            for sign in [1.0, -1.0] {
                let mut c = run.best_controls.clone();
                c[coord] = (c[coord] + sign * step)
                    .max(params.alpha_min)
                    .min(params.alpha_max);
                let shape = shape_from_controls(&c, params).ok();
                probes.push((c, shape));
            }
        }
        // truncate to the remaining budget, counting solver evaluations only
        let mut feasible_seen = 0usize;
        let mut cut = probes.len();
        for (i, (_, shape)) in probes.iter().enumerate() {
            if shape.is_some() {
                feasible_seen += 1;
                if feasible_seen > opts.budget - used {
                    cut = i;
                    break;
                }
            }
        }
        probes.truncate(cut);
        if probes.is_empty() {
            break;
        }

        let results: Vec<Option<Result<CostEval, SolverError>>> =
            crate::threads::pool().install(|| {
                probes
                    .par_iter()
                    .map(|(_, shape)| shape.as_ref().map(|s| evaluate_cost(s, cost, cfg)))
                    .collect()
            });

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for ((controls, shape), result) in probes.iter().zip(results) {
            match result {
                Some(Ok(eval)) => {
                    used += 1;
                    run.evals.push(EvalRecord {
                        controls: controls.clone(),
                        feasible: true,
                        j: eval.j,
                        step,
                        fp_steps: eval.fp_steps,
                        uzawa_total: eval.uzawa_total,
                    });
                    if accepted.is_none() && eval.j < run.best_j {
                        accepted = Some((controls.clone(), eval.j));
                    }
                }
                // admissibility or solver failure: infeasible sentinel
                Some(Err(_)) | None => {
                    if shape.is_some() {
                        used += 1;
                    }
                    run.evals.push(EvalRecord {
                        controls: controls.clone(),
                        feasible: false,
                        j: f64::INFINITY,
                        step,
                        fp_steps: 0,
                        uzawa_total: 0,
                    });
                }
            }
        }

        match accepted {
            Some((controls, j)) => {
                run.best_controls = controls;
                run.best_j = j;
            }
            None => {
                step *= opts.shrink;
                run.step_trace.push(step);
            }
        }
    }
    Ok(run)
}

pub type TestField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Fixed smooth test fields used to probe multiplier convergence in the
/// stability experiments.
pub fn stability_test_fields() -> Vec<TestField> {
    use std::f64::consts::PI;
    vec![
        Arc::new(|_| [1.0, 0.0]),
        Arc::new(|_| [0.0, 1.0]),
        Arc::new(move |x: [f64; 2]| [(PI * x[0]).sin(), (PI * x[1]).cos()]),
        Arc::new(|x: [f64; 2]| [x[0] * x[1], x[0] - x[1]]),
        Arc::new(move |x: [f64; 2]| [(2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).sin()]),
    ]
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub delta: f64,
    /// Velocity difference to the base solve in the base-mesh energy norm
    /// (dof vectors compared in reference coordinates).
    pub e_u: f64,
    pub e_p: f64,
    /// `|<sigma_nu(delta), v_nu> - <sigma_nu(0), v_nu>|` per test field.
    pub pairing_nu: Vec<f64>,
    pub pairing_tau: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    pub base_u_norm: f64,
    pub base_p_norm: f64,
}

struct PairingData {
    nu: Vec<f64>,
    tau: Vec<f64>,
}

fn boundary_pairings(
    shape: &BoundaryShape,
    space: &FemSpace,
    state: &FlowState,
    mult: Option<&MultiplierSet>,
) -> PairingData {
    let fields = stability_test_fields();
    let active: Vec<_> = space.s_nodes.iter().filter(|s| !s.corner).collect();
    let mut nu = vec![0.0; fields.len()];
    let mut tau = vec![0.0; fields.len()];
    for (i, field) in fields.iter().enumerate() {
        for (j, sn) in active.iter().enumerate() {
            let x = [sn.x1, shape.alpha(sn.x1)];
            let v = field(x);
            let v_nu = v[0] * sn.frame.normal[0] + v[1] * sn.frame.normal[1];
            let v_tau = v[0] * sn.frame.tangent[0] + v[1] * sn.frame.tangent[1];
            if let Some(m) = mult {
                nu[i] += sn.weight * m.sigma_nu[j] * v_nu;
            }
            tau[i] += sn.weight * state.sigma_tau[j] * v_tau;
        }
    }
    PairingData { nu, tau }
}

/// Solves on the perturbed shapes `alpha + delta beta`, compares against
/// the base solve in reference coordinates (the meshes share one dof
/// layout), and records boundary-pairing differences.
pub fn stability_experiment(
    shape: &BoundaryShape,
    beta: &ShapeProfile,
    deltas: &[f64],
    cfg: &EvalConfig,
) -> Result<StabilityTable, SolverError> {
    let params = *shape.params();
    let perturbed = |delta: f64| -> Result<BoundaryShape, GeometryError> {
        let base = shape.profile().clone();
        let b = beta.clone();
        let profile = ShapeProfile::analytic(
            move |x| base.value(x) + delta * b.value(x),
            {
                let base = shape.profile().clone();
                let b = beta.clone();
                move |x| base.slope(x) + delta * b.slope(x)
            },
            {
                let base = shape.profile().clone();
                let b = beta.clone();
                move |x| base.curvature(x) + delta * b.curvature(x)
            },
        );
        validate_shape(profile, &params)
    };

    // all perturbations must be admissible up front
    for &d in deltas {
        perturbed(d)?;
    }

    let (base_state, base_mult, base_space, base_system, _, _) = solve_on_shape(shape, cfg)?;
    let base_pairings = boundary_pairings(shape, &base_space, &base_state, base_mult.as_ref());
    let base_u_norm = base_system.h1_seminorm(&base_state.velocity);
    let base_p_norm = base_system.l2_pressure(&base_state.pressure);

    let solves: Vec<Result<StabilityRow, SolverError>> = crate::threads::pool().install(|| {
        deltas
            .par_iter()
            .map(|&delta| {
                if delta == 0.0 {
                    return Ok(StabilityRow {
                        delta,
                        e_u: 0.0,
                        e_p: 0.0,
                        pairing_nu: vec![0.0; base_pairings.nu.len()],
                        pairing_tau: vec![0.0; base_pairings.tau.len()],
                    });
                }
                let shape_d = perturbed(delta)?;
                let (state, mult, space, _, _, _) = solve_on_shape(&shape_d, cfg)?;
                let du: Vec<f64> = state
                    .velocity
                    .iter()
                    .zip(&base_state.velocity)
                    .map(|(a, b)| a - b)
                    .collect();
                let dp: Vec<f64> = state
                    .pressure
                    .iter()
                    .zip(&base_state.pressure)
                    .map(|(a, b)| a - b)
                    .collect();
                let pairings = boundary_pairings(&shape_d, &space, &state, mult.as_ref());
                Ok(StabilityRow {
                    delta,
                    e_u: base_system.h1_seminorm(&du),
                    e_p: base_system.l2_pressure(&dp),
                    pairing_nu: pairings
                        .nu
                        .iter()
                        .zip(&base_pairings.nu)
                        .map(|(a, b)| (a - b).abs())
                        .collect(),
                    pairing_tau: pairings
                        .tau
                        .iter()
                        .zip(&base_pairings.tau)
                        .map(|(a, b)| (a - b).abs())
                        .collect(),
                })
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(deltas.len());
    for r in solves {
        rows.push(r?);
    }
    Ok(StabilityTable {
        rows,
        base_u_norm,
        base_p_norm,
    })
}
