//! Manufactured-solution verification of the Stokes discretization on the
//! constant-profile channel with full no-slip boundary conditions.
//!
//! The velocity is the curl of the polynomial bump stream function
//! `q(x1) q(s)` with `q(s) = s^2 (1-s)^2` and `s` the normalized channel
//! height, so it vanishes to second order on the whole boundary and is
//! exactly divergence free; the pressure is a mean-zero trigonometric
//! field. The forcing is assembled from the exact Laplacian and pressure
//! gradient.

use crate::fem::quadrature::TRI_12;
use crate::fem::{assemble, build_space, constrain, ConstraintMode, FemSpace, SaddleProblem};
use crate::geometry::{build_mesh, validate_shape, AdmissibleSetParams, ShapeProfile};
use crate::slip_solver::linear_stokes;

fn q(s: f64) -> f64 {
    s * s * (1.0 - s) * (1.0 - s)
}
fn dq(s: f64) -> f64 {
    2.0 * s - 6.0 * s * s + 4.0 * s * s * s
}
fn d2q(s: f64) -> f64 {
    2.0 - 12.0 * s + 12.0 * s * s
}
fn d3q(s: f64) -> f64 {
    -12.0 + 24.0 * s
}

/// Exact solution data on the channel `(0,1) x (alpha0, omega)`.
#[derive(Debug, Clone, Copy)]
pub struct MmsCase {
    pub alpha0: f64,
    pub omega: f64,
}

impl MmsCase {
    fn height(&self) -> f64 {
        self.omega - self.alpha0
    }

    fn s(&self, x2: f64) -> f64 {
        (x2 - self.alpha0) / self.height()
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let h = self.height();
        let s = self.s(x[1]);
        [q(x[0]) * dq(s) / h, -dq(x[0]) * q(s)]
    }

    /// Velocity Jacobian: `grad[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let h = self.height();
        let s = self.s(x[1]);
        [
            [dq(x[0]) * dq(s) / h, q(x[0]) * d2q(s) / (h * h)],
            [-d2q(x[0]) * q(s), -dq(x[0]) * dq(s) / h],
        ]
    }

    pub fn pressure(&self, x: [f64; 2]) -> f64 {
        use std::f64::consts::PI;
        let s = self.s(x[1]);
        (PI * x[0]).sin() * (PI * s).cos()
    }

    /// `f = -Laplace(u) + grad(p)`
    pub fn forcing(&self, x: [f64; 2]) -> [f64; 2] {
        use std::f64::consts::PI;
        let h = self.height();
        let s = self.s(x[1]);
        let lap_u = [
            d2q(x[0]) * dq(s) / h + q(x[0]) * d3q(s) / (h * h * h),
            -d3q(x[0]) * q(s) - dq(x[0]) * d2q(s) / (h * h),
        ];
        let grad_p = [
            PI * (PI * x[0]).cos() * (PI * s).cos(),
            -PI * (PI * x[0]).sin() * (PI * s).sin() / h,
        ];
        [-lap_u[0] + grad_p[0], -lap_u[1] + grad_p[1]]
    }
}

/// H1-seminorm velocity error and mean-aligned L2 pressure error against
/// the exact fields, integrated with the degree-6 rule.
pub fn errors(space: &FemSpace, velocity: &[f64], pressure: &[f64], case: &MmsCase) -> (f64, f64) {
    let mesh = &space.mesh;
    let mut err_grad2 = 0.0;
    let mut err_p2 = 0.0;
    let mut p_diff_mean = 0.0;
    let mut area = 0.0;

    // first pass for the mean of (p_h - p)
    for t in 0..mesh.triangles.len() {
        let [va, vb, vc] = mesh.triangles[t];
        let pa = mesh.vertices[va];
        let pb = mesh.vertices[vb];
        let pc = mesh.vertices[vc];
        let tri_area = mesh.triangle_area(t);
        area += tri_area;
        for (l, wq) in TRI_12 {
            let w = wq * tri_area;
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let ph = l[0] * pressure[va] + l[1] * pressure[vb] + l[2] * pressure[vc];
            p_diff_mean += w * (ph - case.pressure(x));
        }
    }
    p_diff_mean /= area;

    for t in 0..mesh.triangles.len() {
        let nodes = space.triangle_nodes(t);
        let [va, vb, vc] = mesh.triangles[t];
        let pa = mesh.vertices[va];
        let pb = mesh.vertices[vb];
        let pc = mesh.vertices[vc];
        let jm = [
            [pb[0] - pa[0], pc[0] - pa[0]],
            [pb[1] - pa[1], pc[1] - pa[1]],
        ];
        let det = jm[0][0] * jm[1][1] - jm[0][1] * jm[1][0];
        let tri_area = 0.5 * det;
        for (l, wq) in TRI_12 {
            let w = wq * tri_area;
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let refs = p2_ref_grads(l);
            let mut grad_h = [[0.0; 2]; 2];
            for (k, &node) in nodes.iter().enumerate() {
                let g = refs[k];
                let gx = (jm[1][1] * g[0] - jm[1][0] * g[1]) / det;
                let gy = (-jm[0][1] * g[0] + jm[0][0] * g[1]) / det;
                for comp in 0..2 {
                    let u = velocity[2 * node + comp];
                    grad_h[comp][0] += u * gx;
                    grad_h[comp][1] += u * gy;
                }
            }
            let grad = case.velocity_gradient(x);
            for comp in 0..2 {
                for d in 0..2 {
                    let e = grad_h[comp][d] - grad[comp][d];
                    err_grad2 += w * e * e;
                }
            }
            let ph = l[0] * pressure[va] + l[1] * pressure[vb] + l[2] * pressure[vc];
            let ep = ph - case.pressure(x) - p_diff_mean;
            err_p2 += w * ep * ep;
        }
    }
    (err_grad2.sqrt(), err_p2.sqrt())
}

fn p2_ref_grads(l: [f64; 3]) -> [[f64; 2]; 6] {
    [
        [-(4.0 * l[0] - 1.0), -(4.0 * l[0] - 1.0)],
        [4.0 * l[1] - 1.0, 0.0],
        [0.0, 4.0 * l[2] - 1.0],
        [4.0 * (l[0] - l[1]), -4.0 * l[1]],
        [4.0 * l[2], 4.0 * l[1]],
        [-4.0 * l[2], 4.0 * (l[0] - l[2])],
    ]
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h1_error: f64,
    pub l2_error: f64,
}

/// Solves the fully clamped Stokes problem with manufactured forcing on a
/// sequence of meshes and returns the error table.
pub fn convergence_study(
    alpha0: f64,
    omega: f64,
    n_list: &[usize],
) -> Result<Vec<ConvergenceRow>, crate::error::Error> {
    let mut params = AdmissibleSetParams {
        omega,
        ..AdmissibleSetParams::default()
    };
    params.alpha_min = params.alpha_min.min(alpha0 / 2.0);
    params.alpha_max = params.alpha_max.max((alpha0 + omega) / 2.0);
    let shape = validate_shape(ShapeProfile::constant(alpha0), &params)?;
    let case = MmsCase { alpha0, omega };
    let mut rows = Vec::new();
    for &n in n_list {
        let mesh = build_mesh(&shape, n, n)?;
        let space = build_space(&shape, mesh);
        let system = assemble(&space, |x| case.forcing(x));
        let cs = constrain(&space, &system, ConstraintMode::DirichletEverywhere);
        let problem = SaddleProblem::new(cs).map_err(crate::error::Error::Solver)?;
        let state = linear_stokes(&problem);
        let (h1, l2) = errors(&space, &state.velocity, &state.pressure, &case);
        rows.push(ConvergenceRow {
            n,
            h1_error: h1,
            l2_error: l2,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(error)` against `log(1/n)`.
pub fn observed_rate(rows: &[ConvergenceRow], pick: impl Fn(&ConvergenceRow) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((1.0 / r.n as f64).ln(), pick(r).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
