//! Shared fixtures for the integration and acceptance suites: the solve
//! corpus (shapes x forces x slip bounds) and an independent dense oracle
//! for the slip problem based on active-set enumeration.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use slipflow::fem::{
    assemble, build_space, constrain, AssembledSystem, ConstrainedSystem, ConstraintMode, FemSpace,
    SaddleProblem,
};
use slipflow::geometry::{
    build_mesh, validate_shape, AdmissibleSetParams, BoundaryShape, ShapeProfile,
};
use slipflow::slip_solver::SlipBound;

pub fn corpus_shapes() -> Vec<(&'static str, BoundaryShape)> {
    let params = AdmissibleSetParams::default();
    vec![
        (
            "flat",
            validate_shape(ShapeProfile::constant(0.5), &params).unwrap(),
        ),
        (
            "sine",
            validate_shape(ShapeProfile::sine(0.5, 0.05, 1.0), &params).unwrap(),
        ),
        (
            "ramp",
            validate_shape(
                ShapeProfile::analytic(
                    |x| 0.45 + 0.1 * x * x * (3.0 - 2.0 * x),
                    |x| 0.6 * x * (1.0 - x),
                    |x| 0.6 * (1.0 - 2.0 * x),
                ),
                &params,
            )
            .unwrap(),
        ),
    ]
}

pub fn corpus_forces() -> Vec<(&'static str, [f64; 2])> {
    vec![("shear", [1.0, 0.0]), ("mixed", [0.5, -1.0])]
}

pub fn corpus_bounds() -> Vec<(&'static str, SlipBound)> {
    vec![
        ("const", SlipBound::Constant { g0: 0.03 }),
        (
            "linear",
            SlipBound::LinearSaturating {
                g0: 0.02,
                slope: 0.05,
                t_cap: 1.0,
            },
        ),
    ]
}

pub struct Case {
    pub label: String,
    pub shape: BoundaryShape,
    pub force: [f64; 2],
    pub bound: SlipBound,
}

pub fn corpus() -> Vec<Case> {
    let mut cases = Vec::new();
    for (sname, shape) in corpus_shapes() {
        for (fname, force) in corpus_forces() {
            for (gname, bound) in corpus_bounds() {
                cases.push(Case {
                    label: format!("{sname}/{fname}/{gname}"),
                    shape: shape.clone(),
                    force,
                    bound: bound.clone(),
                });
            }
        }
    }
    cases
}

pub struct Discretization {
    pub space: FemSpace,
    pub system: AssembledSystem,
    pub strong: SaddleProblem,
}

pub fn discretize(shape: &BoundaryShape, force: [f64; 2], n: usize) -> Discretization {
    let mesh = build_mesh(shape, n, n).unwrap();
    let space = build_space(shape, mesh);
    let system = assemble(&space, move |_| force);
    let strong =
        SaddleProblem::new(constrain(&space, &system, ConstraintMode::StrongImperm)).unwrap();
    Discretization {
        space,
        system,
        strong,
    }
}

/// Independent reference solver for the frozen-bound slip problem:
/// enumerate the stick/slide pattern of every slip node, solve the
/// resulting equality-constrained quadratic problem densely, and keep the
/// pattern whose multipliers and slip directions satisfy the sign
/// conditions. Exact up to dense linear-algebra roundoff; no Uzawa, no
/// smoothing, no sparsity.
pub fn enumeration_oracle(cs: &ConstrainedSystem, bounds: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(cs.mode, ConstraintMode::StrongImperm);
    let m = cs.n_active();
    assert_eq!(bounds.len(), m);
    assert!(m <= 8, "pattern enumeration is exponential in slip nodes");
    let n_red = cs.n_red;
    let n_p = cs.n_pressure;
    let weights = cs.active_weights();

    // tangential reduced dof per active node (single entry in strong mode)
    let tau_dof: Vec<usize> = (0..m).map(|j| cs.t_red.row(j).next().unwrap().0).collect();

    // base blocks
    let mut a = DMatrix::<f64>::zeros(n_red, n_red);
    for (r, c, v) in cs.a_red.iter() {
        a[(r, c)] += v;
    }
    let mut b = DMatrix::<f64>::zeros(n_p, n_red);
    for (r, c, v) in cs.b_red.iter() {
        b[(r, c)] += v;
    }

    // pattern digit: 0 = stick, 1 = slide with u_tau > 0 (sigma = -g),
    // 2 = slide with u_tau < 0 (sigma = +g)
    let tol = 1e-9;
    let patterns = 3usize.pow(m as u32);
    for code in 0..patterns {
        let mut digits = Vec::with_capacity(m);
        let mut rest = code;
        for _ in 0..m {
            digits.push(rest % 3);
            rest /= 3;
        }
        let stick: Vec<usize> = (0..m).filter(|&j| digits[j] == 0).collect();
        let n_total = n_red + n_p + 1 + stick.len();
        let mut k = DMatrix::<f64>::zeros(n_total, n_total);
        let mut rhs = DVector::<f64>::zeros(n_total);
        k.view_mut((0, 0), (n_red, n_red)).copy_from(&a);
        for r in 0..n_p {
            for c in 0..n_red {
                let v = b[(r, c)];
                k[(c, n_red + r)] = -v;
                k[(n_red + r, c)] = -v;
            }
        }
        let off_l = n_red + n_p;
        for (kp, &mv) in cs.pressure_weights.iter().enumerate() {
            k[(n_red + kp, off_l)] = mv;
            k[(off_l, n_red + kp)] = mv;
        }
        for (s, &j) in stick.iter().enumerate() {
            let row = off_l + 1 + s;
            k[(row, tau_dof[j])] = 1.0;
            k[(tau_dof[j], row)] = 1.0;
        }
        for i in 0..n_red {
            rhs[i] = cs.f_red[i];
        }
        for j in 0..m {
            match digits[j] {
                1 => rhs[tau_dof[j]] -= weights[j] * bounds[j], // sigma = -g
                2 => rhs[tau_dof[j]] += weights[j] * bounds[j], // sigma = +g
                _ => {}
            }
        }
        let lu = k.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };

        // KKT feasibility of this pattern
        let mut ok = true;
        for (s, &j) in stick.iter().enumerate() {
            // the stick multiplier is the tangential reaction; admissible
            // while |sigma| = |mu| / W <= g
            let mu = sol[off_l + 1 + s];
            if mu.abs() > weights[j] * bounds[j] * (1.0 + 1e-9) + tol {
                ok = false;
                break;
            }
        }
        if ok {
            for j in 0..m {
                let u = sol[tau_dof[j]];
                match digits[j] {
                    1 if u < -tol => ok = false,
                    2 if u > tol => ok = false,
                    _ => {}
                }
            }
        }
        if ok {
            let y: Vec<f64> = (0..n_red).map(|i| sol[i]).collect();
            return Some(cs.expand_velocity(&y));
        }
    }
    None
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
