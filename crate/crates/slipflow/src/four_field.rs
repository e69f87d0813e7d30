//! Four-field formulation: velocity, pressure, normal stress, and shear
//! stress, with impermeability released into a Lagrange multiplier. The
//! slip inequality is handled by the same Uzawa clamp as the strong-mode
//! solver, so the two paths differ only in how impermeability enters.

use crate::error::SolverError;
use crate::fem::{AssembledSystem, ConstraintMode, FemSpace, SaddleProblem};
use crate::slip_solver::{
    run_fixed_point, uzawa_solve, FixedPointOptions, FlowState, IterationHistory, SlipBound,
    UzawaOptions,
};
use crate::sparse::norm_inf;

/// Boundary-stress multipliers at active slip nodes, with the slip bounds
/// they were clamped to.
#[derive(Debug, Clone)]
pub struct MultiplierSet {
    pub sigma_nu: Vec<f64>,
    pub sigma_tau: Vec<f64>,
    pub bound: Vec<f64>,
}

impl MultiplierSet {
    pub fn bound_violation(&self) -> f64 {
        self.sigma_tau
            .iter()
            .zip(&self.bound)
            .map(|(s, b)| (s.abs() - b).max(0.0))
            .fold(0.0, f64::max)
    }
}

fn split_state(state: FlowState, g: &SlipBound, phi: &[f64]) -> (FlowState, MultiplierSet) {
    let bound: Vec<f64> = phi.iter().map(|&t| g.g(t)).collect();
    let mult = MultiplierSet {
        sigma_nu: state.sigma_nu.clone().unwrap_or_default(),
        sigma_tau: state.sigma_tau.clone(),
        bound,
    };
    (state, mult)
}

/// Solves the four-field problem with slip bound frozen at `phi`. Expects
/// the weak-impermeability system, whose inner solve carries the normal
/// stress as an exact equality multiplier.
pub fn solve_four_field_aux(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi: &[f64],
    opts: &UzawaOptions,
) -> Result<(FlowState, MultiplierSet), SolverError> {
    assert_eq!(
        problem.cs.mode,
        ConstraintMode::WeakImperm,
        "the four-field solver expects the weak-impermeability system"
    );
    let state = uzawa_solve(problem, g, phi, opts)?;
    Ok(split_state(state, g, phi))
}

/// Fixed point over the slip bound in four-field form; at convergence the
/// bound vector equals `g(|u_tau|)` at the solution's own trace.
pub fn solve_four_field(
    problem: &SaddleProblem,
    g: &SlipBound,
    phi0: &[f64],
    opts: &FixedPointOptions,
) -> Result<(FlowState, MultiplierSet, IterationHistory), SolverError> {
    assert_eq!(problem.cs.mode, ConstraintMode::WeakImperm);
    let weights = problem.cs.active_weights();
    let contraction = g.lipschitz() / problem.rho_default.max(1e-300);
    let (mut state, history) = run_fixed_point(&weights, contraction, phi0, opts, |phi, warm| {
        let mut uz = opts.uzawa.clone();
        uz.sigma0 = warm.map(|w| w.to_vec());
        uzawa_solve(problem, g, phi, &uz)
    })?;
    // final clamp into the bound at the solution's own trace; moves sigma
    // by at most L * tol_fp
    let phi_star: Vec<f64> = state.u_tau.iter().map(|t| t.abs()).collect();
    for (s, &t) in state.sigma_tau.iter_mut().zip(&phi_star) {
        let b = g.g(t);
        *s = s.max(-b).min(b);
    }
    let (state, mult) = split_state(state, g, &phi_star);
    Ok((state, mult, history))
}

/// Differences between a velocity-pressure solution and a four-field one on
/// the same space and data.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport {
    /// H1 seminorm of the velocity difference.
    pub du_h1: f64,
    /// L2 norm of the pressure difference.
    pub dp_l2: f64,
    /// Max difference of the shear multipliers at slip nodes.
    pub dsigma_tau_inf: f64,
}

pub fn check_equivalence(
    sol_p: &FlowState,
    sol_m: &(FlowState, MultiplierSet),
    system: &AssembledSystem,
) -> Result<EquivalenceReport, SolverError> {
    let (state_m, mult) = sol_m;
    if sol_p.velocity.len() != state_m.velocity.len() {
        return Err(SolverError::SpaceMismatch {
            left: sol_p.velocity.len(),
            right: state_m.velocity.len(),
        });
    }
    let du: Vec<f64> = sol_p
        .velocity
        .iter()
        .zip(&state_m.velocity)
        .map(|(a, b)| a - b)
        .collect();
    let dp: Vec<f64> = sol_p
        .pressure
        .iter()
        .zip(&state_m.pressure)
        .map(|(a, b)| a - b)
        .collect();
    let dsig: Vec<f64> = sol_p
        .sigma_tau
        .iter()
        .zip(&mult.sigma_tau)
        .map(|(a, b)| a - b)
        .collect();
    Ok(EquivalenceReport {
        du_h1: system.h1_seminorm(&du),
        dp_l2: system.l2_pressure(&dp),
        dsigma_tau_inf: norm_inf(&dsig),
    })
}

/// One-sided recovery of `-p + (du/dnu)_nu` at the active slip vertices:
/// the P2 velocity gradient evaluated at the vertex, averaged over the
/// triangles containing it, composed with the exact frame. Consistency
/// check for the normal-stress multiplier, O(h) accurate.
pub fn recover_normal_stress(space: &FemSpace, state: &FlowState) -> Vec<f64> {
    let mesh = &space.mesh;
    let mut out = Vec::new();
    for sn in space.s_nodes.iter().filter(|s| !s.corner) {
        let vertex = sn.node;
        let mut acc = 0.0;
        let mut count = 0usize;
        for t in 0..mesh.triangles.len() {
            let verts = mesh.triangles[t];
            let Some(local) = verts.iter().position(|&v| v == vertex) else {
                continue;
            };
            let nodes = space.triangle_nodes(t);
            let pa = mesh.vertices[verts[0]];
            let pb = mesh.vertices[verts[1]];
            let pc = mesh.vertices[verts[2]];
            let jm = [
                [pb[0] - pa[0], pc[0] - pa[0]],
                [pb[1] - pa[1], pc[1] - pa[1]],
            ];
            let det = jm[0][0] * jm[1][1] - jm[0][1] * jm[1][0];
            let mut l = [0.0; 3];
            l[local] = 1.0;
            let refs = p2_ref_grads_at(l);
            // jacobian grad[i][j] = d u_i / d x_j at the vertex
            let mut grad = [[0.0; 2]; 2];
            for (k, &node) in nodes.iter().enumerate() {
                let g = refs[k];
                let gx = (jm[1][1] * g[0] - jm[1][0] * g[1]) / det;
                let gy = (-jm[0][1] * g[0] + jm[0][0] * g[1]) / det;
                for comp in 0..2 {
                    let u = state.velocity[2 * node + comp];
                    grad[comp][0] += u * gx;
                    grad[comp][1] += u * gy;
                }
            }
            let nu = sn.frame.normal;
            let dudn = [
                grad[0][0] * nu[0] + grad[0][1] * nu[1],
                grad[1][0] * nu[0] + grad[1][1] * nu[1],
            ];
            acc += dudn[0] * nu[0] + dudn[1] * nu[1];
            count += 1;
        }
        let dnorm = if count > 0 { acc / count as f64 } else { 0.0 };
        out.push(-state.pressure[vertex] + dnorm);
    }
    out
}

fn p2_ref_grads_at(l: [f64; 3]) -> [[f64; 2]; 6] {
    [
        [-(4.0 * l[0] - 1.0), -(4.0 * l[0] - 1.0)],
        [4.0 * l[1] - 1.0, 0.0],
        [0.0, 4.0 * l[2] - 1.0],
        [4.0 * (l[0] - l[1]), -4.0 * l[1]],
        [4.0 * l[2], 4.0 * l[1]],
        [-4.0 * l[2], 4.0 * (l[0] - l[2])],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, build_space, constrain};
    use crate::geometry::{build_mesh, validate_shape, AdmissibleSetParams, ShapeProfile};
    use crate::slip_solver::{fixed_point, solve_aux};

    fn spaces(
        n: usize,
        force: [f64; 2],
    ) -> (FemSpace, AssembledSystem, SaddleProblem, SaddleProblem) {
        let shape = validate_shape(
            ShapeProfile::sine(0.5, 0.05, 1.0),
            &AdmissibleSetParams::default(),
        )
        .unwrap();
        let mesh = build_mesh(&shape, n, n).unwrap();
        let space = build_space(&shape, mesh);
        let system = assemble(&space, move |_| force);
        let strong =
            SaddleProblem::new(constrain(&space, &system, ConstraintMode::StrongImperm)).unwrap();
        let weak =
            SaddleProblem::new(constrain(&space, &system, ConstraintMode::WeakImperm)).unwrap();
        (space, system, strong, weak)
    }

    #[test]
    fn zero_force_gives_all_zero_fields() {
        let (_, _, _, weak) = spaces(4, [0.0, 0.0]);
        let g = SlipBound::Constant { g0: 1.0 };
        let phi = vec![0.0; weak.n_active()];
        let (state, mult) =
            solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        assert!(norm_inf(&state.velocity) < 1e-14);
        assert!(norm_inf(&state.pressure) < 1e-12);
        assert!(norm_inf(&mult.sigma_nu) < 1e-12);
        assert!(norm_inf(&mult.sigma_tau) < 1e-14);
    }

    #[test]
    fn agrees_with_strong_mode_solver() {
        let (_, system, strong, weak) = spaces(8, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.05 };
        let phi = vec![0.0; weak.n_active()];
        let p = solve_aux(&strong, &g, &phi, &UzawaOptions::default()).unwrap();
        let m = solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        let report = check_equivalence(&p, &m, &system).unwrap();
        assert!(report.du_h1 < 1e-8, "du_h1 = {}", report.du_h1);
        assert!(report.dp_l2 < 1e-8, "dp_l2 = {}", report.dp_l2);
    }

    #[test]
    fn fixed_points_agree_across_formulations() {
        let (_, system, strong, weak) = spaces(8, [1.0, 0.0]);
        let g = SlipBound::LinearSaturating {
            g0: 1.0,
            slope: 0.05,
            t_cap: 1.0,
        };
        let phi0 = vec![0.0; weak.n_active()];
        let opts = FixedPointOptions::default();
        let (state_p, _) = fixed_point(&strong, &g, &phi0, &opts).unwrap();
        let (state_m, mult, _) = solve_four_field(&weak, &g, &phi0, &opts).unwrap();
        assert_eq!(mult.bound_violation(), 0.0);
        let report = check_equivalence(&state_p, &(state_m, mult), &system).unwrap();
        assert!(report.du_h1 < 1e-6, "du_h1 = {}", report.du_h1);
        assert!(report.dp_l2 < 1e-6, "dp_l2 = {}", report.dp_l2);
    }

    #[test]
    fn constant_bound_fixed_point_equals_aux() {
        let (_, _, _, weak) = spaces(6, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.04 };
        let phi = vec![3.0; weak.n_active()];
        let (aux_state, _) =
            solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        let (fp_state, _, _) =
            solve_four_field(&weak, &g, &phi, &FixedPointOptions::default()).unwrap();
        let du: Vec<f64> = aux_state
            .velocity
            .iter()
            .zip(&fp_state.velocity)
            .map(|(a, b)| a - b)
            .collect();
        // both runs stop at the Uzawa tolerance; the states agree to the
        // induced solver accuracy, not bitwise
        assert!(norm_inf(&du) < 1e-8, "du = {}", norm_inf(&du));
    }

    #[test]
    fn impermeability_through_multiplier() {
        let (_, _, _, weak) = spaces(8, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.5 };
        let phi = vec![0.0; weak.n_active()];
        let (state, _) = solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        let n_mat = weak.cs.n_red_mat.as_ref().unwrap();
        let y = weak.cs.restrict_functional(&state.velocity);
        // restrict_functional transposes the expansion; for the weak map
        // (identity on free dofs) this recovers the reduced vector
        let nu = n_mat.mul_vec(&y);
        assert!(norm_inf(&nu) < 1e-10);
    }

    #[test]
    fn complementarity_sign_for_extreme_multipliers() {
        let (_, _, _, weak) = spaces(8, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.02 };
        let phi = vec![0.0; weak.n_active()];
        let (state, mult) =
            solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        let w = weak.cs.active_weights();
        for sign in [1.0, -1.0] {
            let pairing: f64 = (0..weak.n_active())
                .map(|j| w[j] * (sign * mult.bound[j] + mult.sigma_tau[j]) * state.u_tau[j])
                .sum();
            assert!(pairing <= 1e-8, "pairing = {pairing} for sign {sign}");
        }
    }

    #[test]
    fn identical_inputs_give_zero_differences() {
        let (_, system, _, weak) = spaces(6, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.03 };
        let phi = vec![0.0; weak.n_active()];
        let (state, mult) =
            solve_four_field_aux(&weak, &g, &phi, &UzawaOptions::default()).unwrap();
        let report = check_equivalence(&state, &(state.clone(), mult), &system).unwrap();
        assert_eq!(report.du_h1, 0.0);
        assert_eq!(report.dp_l2, 0.0);
        assert_eq!(report.dsigma_tau_inf, 0.0);
    }

    #[test]
    fn space_mismatch_detected() {
        let (_, system, strong, _) = spaces(4, [1.0, 0.0]);
        let (_, _, _, weak8) = spaces(8, [1.0, 0.0]);
        let g = SlipBound::Constant { g0: 0.5 };
        let p = solve_aux(
            &strong,
            &g,
            &vec![0.0; strong.n_active()],
            &UzawaOptions::default(),
        )
        .unwrap();
        let m = solve_four_field_aux(
            &weak8,
            &g,
            &vec![0.0; weak8.n_active()],
            &UzawaOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            check_equivalence(&p, &m, &system),
            Err(SolverError::SpaceMismatch { .. })
        ));
    }
}
