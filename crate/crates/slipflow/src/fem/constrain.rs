//! Constraint handling and factorized saddle-point systems.
//!
//! Strong mode rotates the two velocity components at each slip node into
//! the local (normal, tangent) frame and eliminates the normal one; weak
//! mode keeps both components and couples the normal trace to a Lagrange
//! multiplier row. Both carry the pressure mean-zero constraint through a
//! single scalar multiplier, so the divergence equation is enforced against
//! mean-zero pressure test functions exactly as in the weak formulation.

use crate::error::SolverError;
use crate::fem::{AssembledSystem, FemSpace};
use crate::sparse::{dot, CooMat, CsrMat, SparseLu};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// No-slip on Gamma eliminated; slip nodes rotated, normal dof removed.
    StrongImperm,
    /// Only Gamma eliminated; impermeability via the sigma^nu multiplier.
    WeakImperm,
    /// Every boundary velocity dof removed (full no-slip Stokes).
    DirichletEverywhere,
    /// Strong mode with the tangential slip dofs pinned as well; the
    /// reference solve for the stick (large slip bound) limit.
    StrongStick,
}

/// How one full velocity dof appears in the reduced vector.
#[derive(Debug, Clone, Copy)]
enum DofMap {
    Fixed,
    Scaled { reduced: usize, coeff: f64 },
}

/// One active slip node (non-corner) of a constrained system.
#[derive(Debug, Clone, Copy)]
pub struct ActiveNode {
    /// Index into `FemSpace::s_nodes`.
    pub s_index: usize,
    pub x1: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub mode: ConstraintMode,
    pub n_red: usize,
    pub n_pressure: usize,
    map: Vec<DofMap>,
    pub a_red: CsrMat,
    pub b_red: CsrMat,
    pub f_red: Vec<f64>,
    /// Tangential trace on active slip nodes, over reduced dofs.
    pub t_red: CsrMat,
    /// Normal trace on active slip nodes (weak mode only).
    pub n_red_mat: Option<CsrMat>,
    pub active: Vec<ActiveNode>,
    pub pressure_weights: Vec<f64>,
}

impl ConstrainedSystem {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn active_weights(&self) -> Vec<f64> {
        self.active.iter().map(|a| a.weight).collect()
    }

    /// Expands a reduced velocity vector to the full dof vector (no-slip
    /// zeros reinstated, rotated slip dofs mapped back to components).
    pub fn expand_velocity(&self, reduced: &[f64]) -> Vec<f64> {
        debug_assert_eq!(reduced.len(), self.n_red);
        self.map
            .iter()
            .map(|m| match *m {
                DofMap::Fixed => 0.0,
                DofMap::Scaled { reduced: r, coeff } => coeff * reduced[r],
            })
            .collect()
    }

    /// Restriction of a full-space linear functional to reduced dofs.
    pub fn restrict_functional(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_red];
        for (dof, m) in self.map.iter().enumerate() {
            if let DofMap::Scaled { reduced, coeff } = *m {
                out[reduced] += coeff * full[dof];
            }
        }
        out
    }
}

/// Applies the chosen constraint mode to an assembled system.
pub fn constrain(
    space: &FemSpace,
    system: &AssembledSystem,
    mode: ConstraintMode,
) -> ConstrainedSystem {
    let nv = space.n_vel_dofs;
    let mut fixed_nodes: Vec<bool> = vec![false; space.n_vnodes];
    for &g in &space.gamma_nodes {
        fixed_nodes[g] = true;
    }
    if matches!(mode, ConstraintMode::DirichletEverywhere) {
        for sn in &space.s_nodes {
            fixed_nodes[sn.node] = true;
        }
        for be in &space.mesh.boundary {
            fixed_nodes[space.edge_node(be.edge)] = true;
        }
    }
    if matches!(mode, ConstraintMode::StrongStick) {
        for sn in &space.s_nodes {
            fixed_nodes[sn.node] = true;
        }
    }

    let rotated = matches!(mode, ConstraintMode::StrongImperm);
    let mut slip_of_node: Vec<Option<usize>> = vec![None; space.n_vnodes];
    let mut active = Vec::new();
    for (si, sn) in space.s_nodes.iter().enumerate() {
        if !sn.corner && !fixed_nodes[sn.node] {
            slip_of_node[sn.node] = Some(si);
            active.push(ActiveNode {
                s_index: si,
                x1: sn.x1,
                weight: sn.weight,
            });
        }
    }

    let mut map = vec![DofMap::Fixed; nv];
    let mut n_red = 0usize;
    for node in 0..space.n_vnodes {
        if fixed_nodes[node] {
            continue;
        }
        match (rotated, slip_of_node[node]) {
            (true, Some(si)) => {
                let tangent = space.s_nodes[si].frame.tangent;
                let r = n_red;
                n_red += 1;
                map[2 * node] = DofMap::Scaled {
                    reduced: r,
                    coeff: tangent[0],
                };
                map[2 * node + 1] = DofMap::Scaled {
                    reduced: r,
                    coeff: tangent[1],
                };
            }
            _ => {
                for c in 0..2 {
                    map[2 * node + c] = DofMap::Scaled {
                        reduced: n_red,
                        coeff: 1.0,
                    };
                    n_red += 1;
                }
            }
        }
    }

    let entry = |m: &DofMap| -> Option<(usize, f64)> {
        match *m {
            DofMap::Fixed => None,
            DofMap::Scaled { reduced, coeff } => Some((reduced, coeff)),
        }
    };

    let mut a_red = CooMat::new(n_red, n_red);
    for (r, c, v) in system.a.iter() {
        if let (Some((rr, cr)), Some((cc, ccf))) = (entry(&map[r]), entry(&map[c])) {
            a_red.push(rr, cc, cr * ccf * v);
        }
    }
    let mut b_red = CooMat::new(space.n_pressure, n_red);
    for (r, c, v) in system.b.iter() {
        if let Some((cc, cf)) = entry(&map[c]) {
            b_red.push(r, cc, cf * v);
        }
    }
    let mut f_red = vec![0.0; n_red];
    for dof in 0..nv {
        if let Some((r, cf)) = entry(&map[dof]) {
            f_red[r] += cf * system.load[dof];
        }
    }

    let mut t_red = CooMat::new(active.len(), n_red);
    for (row, an) in active.iter().enumerate() {
        for (c, v) in system.t_mat.row(an.s_index) {
            if let Some((cc, cf)) = entry(&map[c]) {
                t_red.push(row, cc, cf * v);
            }
        }
    }
    let n_red_mat = if matches!(mode, ConstraintMode::WeakImperm) {
        let mut n_m = CooMat::new(active.len(), n_red);
        for (row, an) in active.iter().enumerate() {
            for (c, v) in system.n_mat.row(an.s_index) {
                if let Some((cc, cf)) = entry(&map[c]) {
                    n_m.push(row, cc, cf * v);
                }
            }
        }
        Some(n_m.to_csr())
    } else {
        None
    };

    ConstrainedSystem {
        mode,
        n_red,
        n_pressure: space.n_pressure,
        map,
        a_red: a_red.to_csr(),
        b_red: b_red.to_csr(),
        f_red,
        t_red: t_red.to_csr(),
        n_red_mat,
        active,
        pressure_weights: system.pressure_weights.clone(),
    }
}

/// Velocity/pressure/multiplier solution of one linear saddle solve.
#[derive(Debug, Clone)]
pub struct RawFlow {
    pub y: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Normal-stress multiplier at active nodes (weak mode only).
    pub sigma_nu: Option<Vec<f64>>,
    /// Multiplier of the pressure mean-zero constraint.
    pub lambda: f64,
}

/// Factorized bordered saddle system
/// `[[A, -B^T, -N^T W, 0], [-B, 0, 0, m], [-W N, 0, 0, 0], [0, m^T, 0, 0]]`
/// together with the precomputed dual operator of the slip trace: the
/// tangential trace of the solution is affine in the slip multiplier,
/// `u_tau(sigma) = u0 + H sigma`, with H obtained column by column from the
/// factorization. Uzawa sweeps then cost dense `m x m` work per iteration
/// and one back-substitution at the end.
pub struct SaddleProblem {
    pub cs: ConstrainedSystem,
    lu: SparseLu,
    n_total: usize,
    off_p: usize,
    off_s: Option<usize>,
    off_lambda: usize,
    dual_u0: Vec<f64>,
    dual_h: Vec<f64>,
    /// Default Uzawa step: reciprocal of the dual operator norm in the
    /// W-weighted inner product.
    pub rho_default: f64,
}

impl SaddleProblem {
    pub fn new(cs: ConstrainedSystem) -> Result<Self, SolverError> {
        let n_red = cs.n_red;
        let n_p = cs.n_pressure;
        let m = cs.n_active();
        let has_nu = cs.n_red_mat.is_some();
        let off_p = n_red;
        let off_s = if has_nu { Some(n_red + n_p) } else { None };
        let off_lambda = n_red + n_p + if has_nu { m } else { 0 };
        let n_total = off_lambda + 1;

        let mut k = Vec::new();
        for (r, c, v) in cs.a_red.iter() {
            k.push((r, c, v));
        }
        for (r, c, v) in cs.b_red.iter() {
            k.push((c, off_p + r, -v));
            k.push((off_p + r, c, -v));
        }
        if let (Some(off_s), Some(n_mat)) = (off_s, cs.n_red_mat.as_ref()) {
            for (r, c, v) in n_mat.iter() {
                let w = cs.active[r].weight;
                k.push((c, off_s + r, -w * v));
                k.push((off_s + r, c, -w * v));
            }
        }
        for (kp, &mv) in cs.pressure_weights.iter().enumerate() {
            k.push((off_p + kp, off_lambda, mv));
            k.push((off_lambda, off_p + kp, mv));
        }

        let lu = SparseLu::factor(n_total, &k)?;

        let mut problem = SaddleProblem {
            cs,
            lu,
            n_total,
            off_p,
            off_s,
            off_lambda,
            dual_u0: Vec::new(),
            dual_h: Vec::new(),
            rho_default: 1.0,
        };

        let base = problem.solve_velocity_rhs(&problem.cs.f_red.clone());
        problem.dual_u0 = problem.cs.t_red.mul_vec(&base.y);
        let m = problem.cs.n_active();
        let mut h = vec![0.0; m * m];
        for j in 0..m {
            let mut rhs = vec![0.0; problem.cs.n_red];
            let wj = problem.cs.active[j].weight;
            for (c, v) in problem.cs.t_red.row(j) {
                rhs[c] += wj * v;
            }
            let col = problem.solve_velocity_rhs(&rhs);
            let tcol = problem.cs.t_red.mul_vec(&col.y);
            for i in 0..m {
                h[i * m + j] = tcol[i];
            }
        }
        problem.dual_h = h;
        problem.rho_default = match problem.dual_norm_estimate() {
            Some(lam) if lam > 0.0 => 1.0 / lam,
            _ => 1.0,
        };
        Ok(problem)
    }

    pub fn n_active(&self) -> usize {
        self.cs.n_active()
    }

    /// Largest eigenvalue of the dual operator H in the W inner product,
    /// by power iteration on the precomputed dense matrix.
    fn dual_norm_estimate(&self) -> Option<f64> {
        let m = self.cs.n_active();
        if m == 0 {
            return None;
        }
        let w = self.cs.active_weights();
        let wnorm = |v: &[f64]| {
            v.iter()
                .zip(&w)
                .map(|(x, wi)| wi * x * x)
                .sum::<f64>()
                .sqrt()
        };
        let mut v = vec![1.0; m];
        let s = wnorm(&v);
        if s == 0.0 {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= s);
        let mut lambda = 0.0;
        for _ in 0..300 {
            let hv = self.dual_apply(&v);
            let new_lambda: f64 = hv
                .iter()
                .zip(&v)
                .zip(&w)
                .map(|((h, x), wi)| wi * h * x)
                .sum();
            let n = wnorm(&hv);
            if n == 0.0 {
                return Some(0.0);
            }
            v = hv.iter().map(|x| x / n).collect();
            if (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs().max(1e-300) {
                return Some(new_lambda);
            }
            lambda = new_lambda;
        }
        Some(lambda)
    }

    fn dual_apply(&self, sigma: &[f64]) -> Vec<f64> {
        let m = self.cs.n_active();
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = dot(&self.dual_h[i * m..(i + 1) * m], sigma);
        }
        out
    }

    /// Tangential trace of the solution for a given slip multiplier,
    /// through the precomputed affine dual map.
    pub fn u_tau_of_sigma(&self, sigma: &[f64]) -> Vec<f64> {
        let hv = self.dual_apply(sigma);
        self.dual_u0.iter().zip(hv).map(|(u, h)| u + h).collect()
    }

    fn solve_raw(&self, rhs: &[f64]) -> RawFlow {
        let sol = self.lu.solve(rhs);
        let y = sol[..self.cs.n_red].to_vec();
        let pressure = sol[self.off_p..self.off_p + self.cs.n_pressure].to_vec();
        let sigma_nu = self.off_s.map(|o| sol[o..o + self.cs.n_active()].to_vec());
        RawFlow {
            y,
            pressure,
            sigma_nu,
            lambda: sol[self.off_lambda],
        }
    }

    /// Solves with an arbitrary reduced velocity right-hand side and zero
    /// constraint data.
    pub fn solve_velocity_rhs(&self, rhs_vel: &[f64]) -> RawFlow {
        let mut rhs = vec![0.0; self.n_total];
        rhs[..self.cs.n_red].copy_from_slice(rhs_vel);
        self.solve_raw(&rhs)
    }

    /// Solves the slip-forced saddle problem: body load plus the boundary
    /// term `(sigma, v_tau)` on the right-hand side.
    pub fn solve_with_sigma(&self, sigma: &[f64]) -> RawFlow {
        debug_assert_eq!(sigma.len(), self.cs.n_active());
        let mut rhs_vel = self.cs.f_red.clone();
        for (j, &s) in sigma.iter().enumerate() {
            let wj = self.cs.active[j].weight;
            for (c, v) in self.cs.t_red.row(j) {
                rhs_vel[c] += wj * v * s;
            }
        }
        self.solve_velocity_rhs(&rhs_vel)
    }

    /// Residual of the divergence constraint against mean-zero pressures:
    /// `B u - lambda m` must vanish; the raw `B u` equals `lambda m` by the
    /// bordered construction.
    pub fn divergence_residual(&self, y: &[f64], lambda: f64) -> f64 {
        let bu = self.cs.b_red.mul_vec(y);
        bu.iter()
            .zip(&self.cs.pressure_weights)
            .map(|(b, m)| (b - lambda * m).abs())
            .fold(0.0, f64::max)
    }
}
