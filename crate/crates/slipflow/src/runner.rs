//! Configuration-driven experiment runner: executes one task, writes the
//! resolved config echo, task artifacts (CSV/VTK), and a one-row summary.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{
    echo, BetaSpec, CostKind, ForceSpec, FormulationSpec, RunConfig, ShapeSpec, Task,
};
use crate::error::{Error, SolverError};
use crate::fem::{
    assemble, build_space, constrain, AssembledSystem, ConstraintMode, FemSpace, SaddleProblem,
};
use crate::four_field::{solve_four_field, solve_four_field_aux, MultiplierSet};
use crate::geometry::{
    build_mesh, validate_shape, AdmissibleSetParams, BoundaryShape, CubicSpline, ShapeProfile,
};
use crate::io::{fmt_f64, read_shape_file, write_csv, write_shape_file, write_solution_vtk};
use crate::mms::{self, MmsCase};
use crate::shape_opt::{
    optimize, shape_from_controls, stability_experiment, CostSpec, EvalConfig, Formulation,
    OptimizerOptions, TargetFn,
};
use crate::slip_solver::{
    fixed_point, solve_aux, vi_residual, FixedPointOptions, FlowState, IterationHistory, SlipBound,
    UzawaOptions,
};
use crate::sparse::{dot, norm_inf};

#[derive(Debug)]
pub enum RunStatus {
    Success,
    NoConvergence(String),
    Failed(String),
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::NoConvergence(_) => 2,
            RunStatus::Failed(_) => 1,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Success => "ok",
            RunStatus::NoConvergence(_) => "no_convergence",
            RunStatus::Failed(_) => "error",
        }
    }

    pub fn message(&self) -> Option<&str> {
        match self {
            RunStatus::Success => None,
            RunStatus::NoConvergence(m) | RunStatus::Failed(m) => Some(m),
        }
    }
}

pub fn admissible_params(config: &RunConfig) -> AdmissibleSetParams {
    AdmissibleSetParams {
        alpha_min: config.alpha_min,
        alpha_max: config.alpha_max,
        c1: config.c1_bound,
        c2: config.c2_bound,
        omega: config.omega,
    }
}

/// Builds the validated boundary shape named by the config; shape files
/// override the configured channel height with their own.
pub fn build_shape(config: &RunConfig) -> Result<BoundaryShape, Error> {
    let params = admissible_params(config);
    let shape = match &config.shape {
        ShapeSpec::Constant(c) => validate_shape(ShapeProfile::constant(*c), &params)?,
        ShapeSpec::Sine { base, amp, freq } => {
            validate_shape(ShapeProfile::sine(*base, *amp, *freq), &params)?
        }
        ShapeSpec::Controls(controls) => shape_from_controls(controls, &params)?,
        ShapeSpec::File(path) => {
            let (omega, pairs) = read_shape_file(Path::new(path))?;
            let params = AdmissibleSetParams { omega, ..params };
            let (xs, vals): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let spline = CubicSpline::not_a_knot(xs, vals).ok_or_else(|| {
                Error::Config(crate::error::ConfigError::InvalidValue {
                    key: "shape file".into(),
                    message: "need at least 4 strictly increasing control abscissae".into(),
                })
            })?;
            validate_shape(ShapeProfile::Spline(spline), &params)?
        }
    };
    Ok(shape)
}

type ForceFn = Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

fn force_field(config: &RunConfig, shape: &BoundaryShape) -> Result<ForceFn, Error> {
    match config.force {
        ForceSpec::Constant(fx, fy) => Ok(Box::new(move |_| [fx, fy])),
        ForceSpec::Mms => {
            let ShapeSpec::Constant(alpha0) = config.shape else {
                return Err(Error::Config(crate::error::ConfigError::InvalidValue {
                    key: "force".into(),
                    message: "manufactured forcing needs a constant profile".into(),
                }));
            };
            let case = MmsCase {
                alpha0,
                omega: shape.omega(),
            };
            Ok(Box::new(move |x| case.forcing(x)))
        }
    }
}

fn fixed_point_options(config: &RunConfig) -> FixedPointOptions {
    FixedPointOptions {
        tol: config.tol_fp,
        max_iters: config.max_it,
        damping: None,
        uzawa: UzawaOptions {
            rho: config.rho,
            tol: config.tol_uz,
            max_iters: config.max_uzawa,
            sigma0: None,
        },
    }
}

struct Prepared {
    space: FemSpace,
    system: AssembledSystem,
    problem: SaddleProblem,
    slip: SlipBound,
    phi: Vec<f64>,
}

fn prepare(
    config: &RunConfig,
    shape: &BoundaryShape,
    mode: ConstraintMode,
) -> Result<Prepared, Error> {
    let mesh = build_mesh(shape, config.nx, config.ny)?;
    let space = build_space(shape, mesh);
    let force = force_field(config, shape)?;
    let system = assemble(&space, &force);
    let problem = SaddleProblem::new(constrain(&space, &system, mode))?;
    let slip = config.slip.build(config.t_max)?;
    let phi = vec![config.phi0; problem.n_active()];
    Ok(Prepared {
        space,
        system,
        problem,
        slip,
        phi,
    })
}

fn write_boundary_csv(path: &Path, prep: &Prepared, state: &FlowState) -> Result<(), Error> {
    let mut rows = Vec::new();
    let mut active_idx = 0usize;
    for sn in &prep.space.s_nodes {
        let (u_tau, sigma_tau, phi) = if sn.corner {
            (0.0, 0.0, 0.0)
        } else {
            let j = active_idx;
            active_idx += 1;
            (state.u_tau[j], state.sigma_tau[j], prep.phi[j])
        };
        rows.push(vec![
            fmt_f64(sn.x1),
            fmt_f64(u_tau),
            fmt_f64(sigma_tau),
            fmt_f64(prep.slip.g(phi)),
            fmt_f64(sn.weight),
        ]);
    }
    write_csv(path, &["x1", "u_tau", "sigma_tau", "g_of_phi", "w"], &rows)
}

fn write_boundary_stress_csv(
    path: &Path,
    prep: &Prepared,
    state: &FlowState,
    mult: &MultiplierSet,
) -> Result<(), Error> {
    let mut rows = Vec::new();
    let mut j = 0usize;
    for sn in &prep.space.s_nodes {
        let (nu, tau, u, b) = if sn.corner {
            (0.0, 0.0, 0.0, prep.slip.g(0.0))
        } else {
            let r = (
                mult.sigma_nu[j],
                mult.sigma_tau[j],
                state.u_tau[j],
                mult.bound[j],
            );
            j += 1;
            r
        };
        rows.push(vec![
            fmt_f64(sn.x1),
            fmt_f64(nu),
            fmt_f64(tau),
            fmt_f64(u),
            fmt_f64(b),
        ]);
    }
    write_csv(
        path,
        &["x1", "sigma_nu", "sigma_tau", "u_tau", "g_bound"],
        &rows,
    )
}

fn write_history_csv(path: &Path, history: &IterationHistory) -> Result<(), Error> {
    let rows: Vec<Vec<String>> = history
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            vec![
                k.to_string(),
                fmt_f64(s.fp_diff),
                s.uzawa_iters.to_string(),
                fmt_f64(s.energy),
            ]
        })
        .collect();
    write_csv(path, &["k", "fp_diff", "uzawa_iters", "energy"], &rows)
}

fn write_summary(out: &Path, status: &RunStatus, metrics: &[(&str, String)]) -> Result<(), Error> {
    let mut header = vec!["status"];
    header.extend(metrics.iter().map(|(k, _)| *k));
    let mut row = vec![status.label().to_string()];
    row.extend(metrics.iter().map(|(_, v)| v.clone()));
    write_csv(&out.join("summary.csv"), &header, &[row])
}

/// Residual of the first four-field equation against seeded random test
/// vectors, relative to the data scale.
fn saddle_consistency(prep: &Prepared, state: &FlowState, mult: &MultiplierSet, seed: u64) -> f64 {
    let cs = &prep.problem.cs;
    let y = cs.restrict_functional(&state.velocity);
    let mut r = cs.a_red.mul_vec(&y);
    let btp = cs.b_red.mul_transpose_vec(&state.pressure);
    let weights = cs.active_weights();
    let wsig: Vec<f64> = mult
        .sigma_tau
        .iter()
        .zip(&weights)
        .map(|(s, w)| s * w)
        .collect();
    let tts = cs.t_red.mul_transpose_vec(&wsig);
    let wnu: Vec<f64> = mult
        .sigma_nu
        .iter()
        .zip(&weights)
        .map(|(s, w)| s * w)
        .collect();
    let nts = cs
        .n_red_mat
        .as_ref()
        .map(|n| n.mul_transpose_vec(&wnu))
        .unwrap_or_else(|| vec![0.0; cs.n_red]);
    for i in 0..cs.n_red {
        r[i] -= btp[i] + tts[i] + nts[i] + cs.f_red[i];
    }
    let scale = 1.0 + norm_inf(&cs.f_red);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v: Vec<f64> = (0..cs.n_red).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dot(&v, &v).sqrt();
        worst = worst.max((dot(&v, &r) / (norm * scale)).abs());
    }
    worst
}

fn solver_status(err: &SolverError) -> RunStatus {
    match err {
        SolverError::NoConvergence { .. } => RunStatus::NoConvergence(err.to_string()),
        other => RunStatus::Failed(other.to_string()),
    }
}

/// Executes the configured task, writing all artifacts under `out_dir`.
pub fn execute(config: &RunConfig, out_dir: &Path) -> RunStatus {
    match execute_inner(config, out_dir) {
        Ok(status) => status,
        Err(Error::Solver(e)) => {
            let status = solver_status(&e);
            let _ = write_summary(out_dir, &status, &[]);
            status
        }
        Err(e) => {
            let status = RunStatus::Failed(e.to_string());
            let _ = write_summary(out_dir, &status, &[]);
            status
        }
    }
}

fn execute_inner(config: &RunConfig, out_dir: &Path) -> Result<RunStatus, Error> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.echo"), echo(config))?;
    let shape = build_shape(config)?;

    match config.task {
        Task::SolveP => {
            let prep = prepare(config, &shape, ConstraintMode::StrongImperm)?;
            let uz = UzawaOptions {
                rho: config.rho,
                tol: config.tol_uz,
                max_iters: config.max_uzawa,
                sigma0: None,
            };
            let state =
                solve_aux(&prep.problem, &prep.slip, &prep.phi, &uz).map_err(Error::Solver)?;
            let res = vi_residual(
                &state,
                &prep.slip,
                &prep.phi,
                &prep.problem.cs.active_weights(),
                config.tol_uz,
            );
            write_solution_vtk(
                &out_dir.join("solution.vtk"),
                &prep.space,
                &state.velocity,
                &state.pressure,
            )?;
            write_boundary_csv(&out_dir.join("boundary.csv"), &prep, &state)?;
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("energy", fmt_f64(state.energy)),
                    ("u_h1", fmt_f64(prep.system.h1_seminorm(&state.velocity))),
                    ("p_l2", fmt_f64(prep.system.l2_pressure(&state.pressure))),
                    ("uzawa_iters", state.uzawa_iters.to_string()),
                    ("bound_violation", fmt_f64(res.bound_violation)),
                    ("comp_gap", fmt_f64(res.complementarity_gap)),
                    ("saturation_defect", fmt_f64(res.saturation_defect)),
                ],
            )?;
            Ok(status)
        }
        Task::SolveM => {
            let prep = prepare(config, &shape, ConstraintMode::WeakImperm)?;
            let uz = UzawaOptions {
                rho: config.rho,
                tol: config.tol_uz,
                max_iters: config.max_uzawa,
                sigma0: None,
            };
            let (state, mult) = solve_four_field_aux(&prep.problem, &prep.slip, &prep.phi, &uz)
                .map_err(Error::Solver)?;
            write_solution_vtk(
                &out_dir.join("solution.vtk"),
                &prep.space,
                &state.velocity,
                &state.pressure,
            )?;
            write_boundary_stress_csv(&out_dir.join("boundary_stress.csv"), &prep, &state, &mult)?;
            let consistency = saddle_consistency(&prep, &state, &mult, config.seed);
            let imperm = prep
                .problem
                .cs
                .n_red_mat
                .as_ref()
                .map(|n| {
                    norm_inf(&n.mul_vec(&prep.problem.cs.restrict_functional(&state.velocity)))
                })
                .unwrap_or(0.0);
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("energy", fmt_f64(state.energy)),
                    ("u_h1", fmt_f64(prep.system.h1_seminorm(&state.velocity))),
                    ("p_l2", fmt_f64(prep.system.l2_pressure(&state.pressure))),
                    ("uzawa_iters", state.uzawa_iters.to_string()),
                    ("saddle_residual_random", fmt_f64(consistency)),
                    ("impermeability_residual", fmt_f64(imperm)),
                    ("sigma_bound_violation", fmt_f64(mult.bound_violation())),
                ],
            )?;
            Ok(status)
        }
        Task::FixedPointP => {
            let prep = prepare(config, &shape, ConstraintMode::StrongImperm)?;
            let opts = fixed_point_options(config);
            let (state, history) =
                fixed_point(&prep.problem, &prep.slip, &prep.phi, &opts).map_err(Error::Solver)?;
            write_history_csv(&out_dir.join("history.csv"), &history)?;
            write_solution_vtk(
                &out_dir.join("solution.vtk"),
                &prep.space,
                &state.velocity,
                &state.pressure,
            )?;
            // boundary file reports g at the converged trace
            let phi_star: Vec<f64> = state.u_tau.iter().map(|t| t.abs()).collect();
            let prep_report = Prepared {
                phi: phi_star,
                ..prep
            };
            write_boundary_csv(&out_dir.join("boundary.csv"), &prep_report, &state)?;
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("fp_steps", history.steps.len().to_string()),
                    (
                        "fp_diff_last",
                        fmt_f64(history.steps.last().map(|s| s.fp_diff).unwrap_or(0.0)),
                    ),
                    ("energy", fmt_f64(state.energy)),
                    (
                        "u_h1",
                        fmt_f64(prep_report.system.h1_seminorm(&state.velocity)),
                    ),
                    (
                        "p_l2",
                        fmt_f64(prep_report.system.l2_pressure(&state.pressure)),
                    ),
                    (
                        "uzawa_total",
                        history
                            .steps
                            .iter()
                            .map(|s| s.uzawa_iters)
                            .sum::<usize>()
                            .to_string(),
                    ),
                ],
            )?;
            Ok(status)
        }
        Task::FixedPointM => {
            let prep = prepare(config, &shape, ConstraintMode::WeakImperm)?;
            let opts = fixed_point_options(config);
            let (state, mult, history) =
                solve_four_field(&prep.problem, &prep.slip, &prep.phi, &opts)
                    .map_err(Error::Solver)?;
            write_history_csv(&out_dir.join("history.csv"), &history)?;
            write_solution_vtk(
                &out_dir.join("solution.vtk"),
                &prep.space,
                &state.velocity,
                &state.pressure,
            )?;
            write_boundary_stress_csv(&out_dir.join("boundary_stress.csv"), &prep, &state, &mult)?;
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("fp_steps", history.steps.len().to_string()),
                    (
                        "fp_diff_last",
                        fmt_f64(history.steps.last().map(|s| s.fp_diff).unwrap_or(0.0)),
                    ),
                    ("energy", fmt_f64(state.energy)),
                    ("u_h1", fmt_f64(prep.system.h1_seminorm(&state.velocity))),
                    ("p_l2", fmt_f64(prep.system.l2_pressure(&state.pressure))),
                    ("sigma_bound_violation", fmt_f64(mult.bound_violation())),
                ],
            )?;
            Ok(status)
        }
        Task::Optimize => {
            let params = admissible_params(config);
            let m = config.m_controls;
            let initial: Vec<f64> = (0..m)
                .map(|i| shape.alpha(i as f64 / (m - 1) as f64))
                .collect();
            let cost = cost_spec(config);
            let formulation = match config.formulation {
                FormulationSpec::P if !cost.needs_four_field() => Formulation::VelocityPressure,
                _ => Formulation::FourField,
            };
            let ForceSpec::Constant(fx, fy) = config.force else {
                return Err(Error::Config(crate::error::ConfigError::InvalidValue {
                    key: "force".into(),
                    message: "optimization needs a constant body force".into(),
                }));
            };
            let cfg = EvalConfig {
                nx: config.nx,
                ny: config.ny,
                force: [fx, fy],
                slip: config.slip.build(config.t_max)?,
                formulation,
                fixed_point: fixed_point_options(config),
            };
            let opts = OptimizerOptions {
                initial,
                step0: config.step0,
                shrink: config.shrink,
                budget: config.budget,
            };
            let run = optimize(&cost, &params, &opts, &cfg).map_err(Error::Solver)?;
            let mut header: Vec<String> = vec!["eval_id".into()];
            header.extend((0..m).map(|i| format!("c{i}")));
            header.push("feasible".into());
            header.push("J".into());
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let rows: Vec<Vec<String>> = run
                .evals
                .iter()
                .enumerate()
                .map(|(id, e)| {
                    let mut row = vec![id.to_string()];
                    row.extend(e.controls.iter().map(|c| fmt_f64(*c)));
                    row.push(if e.feasible { "1" } else { "0" }.to_string());
                    row.push(if e.j.is_finite() {
                        fmt_f64(e.j)
                    } else {
                        "inf".to_string()
                    });
                    row
                })
                .collect();
            write_csv(&out_dir.join("optrun.csv"), &header_refs, &rows)?;
            let controls: Vec<(f64, f64)> = run
                .best_controls
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64 / (m - 1) as f64, v))
                .collect();
            write_shape_file(&out_dir.join("best_shape.txt"), config.omega, &controls)?;
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("evaluations", run.evals.len().to_string()),
                    ("initial_j", fmt_f64(run.evals[0].j)),
                    ("best_j", fmt_f64(run.best_j)),
                    (
                        "final_step",
                        fmt_f64(*run.step_trace.last().unwrap_or(&config.step0)),
                    ),
                ],
            )?;
            Ok(status)
        }
        Task::Stability => {
            let beta = match config.beta {
                BetaSpec::Sine { amp, freq } => ShapeProfile::sine(0.0, amp, freq),
                BetaSpec::Constant(c) => ShapeProfile::constant(c),
            };
            let ForceSpec::Constant(fx, fy) = config.force else {
                return Err(Error::Config(crate::error::ConfigError::InvalidValue {
                    key: "force".into(),
                    message: "stability runs need a constant body force".into(),
                }));
            };
            let cfg = EvalConfig {
                nx: config.nx,
                ny: config.ny,
                force: [fx, fy],
                slip: config.slip.build(config.t_max)?,
                formulation: match config.formulation {
                    FormulationSpec::P => Formulation::VelocityPressure,
                    FormulationSpec::M => Formulation::FourField,
                },
                fixed_point: fixed_point_options(config),
            };
            let table =
                stability_experiment(&shape, &beta, &config.deltas, &cfg).map_err(Error::Solver)?;
            let n_fields = crate::shape_opt::stability_test_fields().len();
            let mut header: Vec<String> = vec!["delta".into(), "e_u".into(), "e_p".into()];
            header.extend((1..=n_fields).map(|i| format!("pair_nu_{i}")));
            header.extend((1..=n_fields).map(|i| format!("pair_tau_{i}")));
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![fmt_f64(r.delta), fmt_f64(r.e_u), fmt_f64(r.e_p)];
                    for i in 0..n_fields {
                        row.push(fmt_f64(r.pairing_nu.get(i).copied().unwrap_or(0.0)));
                    }
                    for i in 0..n_fields {
                        row.push(fmt_f64(r.pairing_tau.get(i).copied().unwrap_or(0.0)));
                    }
                    row
                })
                .collect();
            write_csv(&out_dir.join("stability.csv"), &header_refs, &rows)?;
            let status = RunStatus::Success;
            let first = table.rows.first();
            let last = table.rows.last();
            write_summary(
                out_dir,
                &status,
                &[
                    ("deltas", table.rows.len().to_string()),
                    ("e_u_first", fmt_f64(first.map(|r| r.e_u).unwrap_or(0.0))),
                    ("e_u_last", fmt_f64(last.map(|r| r.e_u).unwrap_or(0.0))),
                    (
                        "e_u_last_rel",
                        fmt_f64(last.map(|r| r.e_u).unwrap_or(0.0) / table.base_u_norm.max(1e-300)),
                    ),
                    ("e_p_first", fmt_f64(first.map(|r| r.e_p).unwrap_or(0.0))),
                    ("e_p_last", fmt_f64(last.map(|r| r.e_p).unwrap_or(0.0))),
                ],
            )?;
            Ok(status)
        }
        Task::ConvergenceStudy => {
            let ShapeSpec::Constant(alpha0) = config.shape else {
                unreachable!("validated at parse time");
            };
            let rows = mms::convergence_study(alpha0, config.omega, &config.n_list)?;
            let mut csv_rows = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                let (rate_u, rate_p) = if i == 0 {
                    (0.0, 0.0)
                } else {
                    let prev = &rows[i - 1];
                    let dn = (r.n as f64 / prev.n as f64).ln();
                    (
                        (prev.h1_error / r.h1_error).ln() / dn,
                        (prev.l2_error / r.l2_error).ln() / dn,
                    )
                };
                csv_rows.push(vec![
                    r.n.to_string(),
                    fmt_f64(r.h1_error),
                    fmt_f64(r.l2_error),
                    fmt_f64(rate_u),
                    fmt_f64(rate_p),
                ]);
            }
            write_csv(
                &out_dir.join("convergence.csv"),
                &["n", "h1_err", "l2_err", "rate_u", "rate_p"],
                &csv_rows,
            )?;
            let rate_u = mms::observed_rate(&rows, |r| r.h1_error);
            let rate_p = mms::observed_rate(&rows, |r| r.l2_error);
            let status = RunStatus::Success;
            write_summary(
                out_dir,
                &status,
                &[
                    ("rate_u", fmt_f64(rate_u)),
                    ("rate_p", fmt_f64(rate_p)),
                    (
                        "h1_err_last",
                        fmt_f64(rows.last().map(|r| r.h1_error).unwrap_or(0.0)),
                    ),
                    (
                        "l2_err_last",
                        fmt_f64(rows.last().map(|r| r.l2_error).unwrap_or(0.0)),
                    ),
                ],
            )?;
            Ok(status)
        }
    }
}

fn cost_spec(config: &RunConfig) -> CostSpec {
    match config.cost {
        CostKind::Dissipation => CostSpec::Dissipation,
        CostKind::TraceTracking(t) => {
            let target: TargetFn = std::sync::Arc::new(move |_| t);
            CostSpec::TraceTracking {
                target,
                weight: 1.0,
            }
        }
        CostKind::StressTracking(t) => {
            let target: TargetFn = std::sync::Arc::new(move |_| t);
            CostSpec::StressTracking {
                target,
                weight: 1.0,
            }
        }
    }
}

/// Parses and fully validates a config, including shape admissibility.
pub fn validate_config(text: &str) -> Result<RunConfig, Error> {
    let config = crate::config::parse_config(text)?;
    build_shape(&config)?;
    Ok(config)
}
