//! Taylor-Hood (P2/P1) finite elements on the structured channel mesh:
//! degree-of-freedom layout, assembly of the Stokes forms, boundary trace
//! operators on the slip side, and the constrained saddle-point systems.

pub mod constrain;
pub mod quadrature;

pub use constrain::constrain;
pub use constrain::{ConstrainedSystem, ConstraintMode, RawFlow, SaddleProblem};

use crate::geometry::{boundary_frame, BoundaryShape, BoundaryTag, Frame, Mesh};
use crate::sparse::{dot, CooMat, CsrMat};
use quadrature::{GAUSS_3, TRI_6};

/// A velocity node on the slip boundary S: the P1 (vertex) nodes of the
/// boundary polyline, in left-to-right order. Corner nodes belong to the
/// no-slip boundary and carry no slip unknowns.
#[derive(Debug, Clone, Copy)]
pub struct SNode {
    /// P2 node id (equals the mesh vertex id).
    pub node: usize,
    pub x1: f64,
    pub frame: Frame,
    /// Lumped arclength weight from the 3-point Gauss rule per slip edge.
    pub weight: f64,
    pub corner: bool,
}

/// P2 vector velocity / P1 pressure space on a channel mesh.
#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: Mesh,
    pub n_vertices: usize,
    pub n_edges: usize,
    /// P2 scalar nodes: vertices then edge midpoints.
    pub n_vnodes: usize,
    pub n_vel_dofs: usize,
    pub n_pressure: usize,
    /// All P2 node coordinates (vertices then midedges).
    pub node_coords: Vec<[f64; 2]>,
    /// Sorted P2 node ids on the no-slip boundary (vertices and midedges of
    /// left/right/top edges, plus the two slip-corner vertices).
    pub gamma_nodes: Vec<usize>,
    /// Slip-boundary vertex nodes, by increasing x1 (length nx + 1).
    pub s_nodes: Vec<SNode>,
}

impl FemSpace {
    #[inline]
    pub fn vdof(&self, node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    /// Midedge P2 node id for a mesh edge.
    #[inline]
    pub fn edge_node(&self, edge: usize) -> usize {
        self.n_vertices + edge
    }

    /// The 6 P2 nodes of a triangle: vertices then midedges (v0v1, v1v2, v2v0).
    pub fn triangle_nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.mesh.triangles[t];
        let [e0, e1, e2] = self.mesh.triangle_edges[t];
        [
            a,
            b,
            c,
            self.edge_node(e0),
            self.edge_node(e1),
            self.edge_node(e2),
        ]
    }

    pub fn active_snode_indices(&self) -> Vec<usize> {
        (0..self.s_nodes.len())
            .filter(|&j| !self.s_nodes[j].corner)
            .collect()
    }
}

/// Builds the DOF layout; slip-node frames use the exact profile slope at
/// the node abscissae (the mesh edge stays straight).
pub fn build_space(shape: &BoundaryShape, mesh: Mesh) -> FemSpace {
    let n_vertices = mesh.vertices.len();
    let n_edges = mesh.edges.len();
    let n_vnodes = n_vertices + n_edges;
    let nx = mesh.nx;

    let mut node_coords = Vec::with_capacity(n_vnodes);
    node_coords.extend_from_slice(&mesh.vertices);
    for &[p, q] in &mesh.edges {
        let a = mesh.vertices[p];
        let b = mesh.vertices[q];
        node_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }

    let mut gamma = Vec::new();
    for be in &mesh.boundary {
        if be.tag == BoundaryTag::Slip {
            continue;
        }
        let [p, q] = mesh.edges[be.edge];
        gamma.push(p);
        gamma.push(q);
        gamma.push(n_vertices + be.edge);
    }
    // slip corners are no-slip nodes
    gamma.push(mesh.vertex_id(0, 0));
    gamma.push(mesh.vertex_id(nx, 0));
    gamma.sort_unstable();
    gamma.dedup();

    let mut s_nodes: Vec<SNode> = (0..=nx)
        .map(|i| {
            let x1 = i as f64 / nx as f64;
            SNode {
                node: mesh.vertex_id(i, 0),
                x1,
                frame: boundary_frame(shape, x1),
                weight: 0.0,
                corner: i == 0 || i == nx,
            }
        })
        .collect();

    // lump the arclength measure onto the boundary hat functions
    for be in &mesh.boundary {
        let Some([xa, xb]) = be.span else { continue };
        let h = xb - xa;
        let i0 = (xa * nx as f64).round() as usize;
        for (t, wq) in GAUSS_3 {
            let x = xa + 0.5 * (t + 1.0) * h;
            let ds = wq * 0.5 * h * (1.0 + shape.alpha_prime(x).powi(2)).sqrt();
            s_nodes[i0].weight += ds * (xb - x) / h;
            s_nodes[i0 + 1].weight += ds * (x - xa) / h;
        }
    }

    FemSpace {
        n_vertices,
        n_edges,
        n_vnodes,
        n_vel_dofs: 2 * n_vnodes,
        n_pressure: n_vertices,
        node_coords,
        gamma_nodes: gamma,
        s_nodes,
        mesh,
    }
}

/// Assembled Stokes operators on the unconstrained space.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Gradient-gradient form, `n_vel x n_vel`, symmetric PSD.
    pub a: CsrMat,
    /// Divergence form tested with P1 pressures, `n_pressure x n_vel`.
    pub b: CsrMat,
    /// Body-force load vector.
    pub load: Vec<f64>,
    /// Normal trace at slip nodes, one row per `SNode`.
    pub n_mat: CsrMat,
    /// Tangential trace at slip nodes, one row per `SNode`.
    pub t_mat: CsrMat,
    /// Diagonal boundary mass (lumped arclength weights), per `SNode`.
    pub w_diag: Vec<f64>,
    /// P1 mass matrix, for pressure L2 norms.
    pub pressure_mass: CsrMat,
    /// Integrals of the P1 basis functions (the mean-value functional).
    pub pressure_weights: Vec<f64>,
    pub domain_area: f64,
}

impl AssembledSystem {
    pub fn h1_seminorm(&self, u_full: &[f64]) -> f64 {
        self.a.bilinear(u_full, u_full).max(0.0).sqrt()
    }

    pub fn l2_pressure(&self, p: &[f64]) -> f64 {
        self.pressure_mass.bilinear(p, p).max(0.0).sqrt()
    }

    pub fn l2_force(&self, f: impl Fn([f64; 2]) -> [f64; 2], space: &FemSpace) -> f64 {
        let mut acc = 0.0;
        for t in 0..space.mesh.triangles.len() {
            let [a, b, c] = space.mesh.triangles[t];
            let pa = space.mesh.vertices[a];
            let pb = space.mesh.vertices[b];
            let pc = space.mesh.vertices[c];
            let area = space.mesh.triangle_area(t);
            for (l, w) in TRI_6 {
                let x = [
                    l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                    l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
                ];
                let f = f(x);
                acc += w * area * (f[0] * f[0] + f[1] * f[1]);
            }
        }
        acc.sqrt()
    }

    /// Weighted L2(S) norm of a vector of active-slip-node values.
    pub fn boundary_norm(&self, weights: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), v.len());
        weights
            .iter()
            .zip(v)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }
}

const P2_NODES: usize = 6;

fn p2_values(l: [f64; 3]) -> [f64; P2_NODES] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

fn p2_ref_grads(l: [f64; 3]) -> [[f64; 2]; P2_NODES] {
    [
        [-(4.0 * l[0] - 1.0), -(4.0 * l[0] - 1.0)],
        [4.0 * l[1] - 1.0, 0.0],
        [0.0, 4.0 * l[2] - 1.0],
        [4.0 * (l[0] - l[1]), -4.0 * l[1]],
        [4.0 * l[2], 4.0 * l[1]],
        [-4.0 * l[2], 4.0 * (l[0] - l[2])],
    ]
}

/// Assembles A, B, the load, trace operators, the boundary mass, and the
/// pressure mass with the 6-point triangle rule.
pub fn assemble(space: &FemSpace, body_force: impl Fn([f64; 2]) -> [f64; 2]) -> AssembledSystem {
    let mesh = &space.mesh;
    let nv = space.n_vel_dofs;
    let np = space.n_pressure;
    let mut a = CooMat::new(nv, nv);
    let mut b = CooMat::new(np, nv);
    let mut load = vec![0.0; nv];
    let mut mass_p = CooMat::new(np, np);
    let mut m_weights = vec![0.0; np];
    let mut area_total = 0.0;

    for t in 0..mesh.triangles.len() {
        let nodes = space.triangle_nodes(t);
        let [va, vb, vc] = mesh.triangles[t];
        let pa = mesh.vertices[va];
        let pb = mesh.vertices[vb];
        let pc = mesh.vertices[vc];
        let j = [
            [pb[0] - pa[0], pc[0] - pa[0]],
            [pb[1] - pa[1], pc[1] - pa[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let area = 0.5 * det;
        area_total += area;

        let mut k_local = [[0.0; P2_NODES]; P2_NODES];
        let mut b_local = [[[0.0; 2]; P2_NODES]; 3];
        let mut f_local = [[0.0; 2]; P2_NODES];
        let mut mp_local = [[0.0; 3]; 3];

        for (l, wq) in TRI_6 {
            let w = wq * area;
            let vals = p2_values(l);
            let refs = p2_ref_grads(l);
            let mut grads = [[0.0; 2]; P2_NODES];
            for i in 0..P2_NODES {
                let g = refs[i];
                grads[i] = [
                    (j[1][1] * g[0] - j[1][0] * g[1]) / det,
                    (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
                ];
            }
            for i in 0..P2_NODES {
                for kk in 0..P2_NODES {
                    k_local[i][kk] += w * (grads[i][0] * grads[kk][0] + grads[i][1] * grads[kk][1]);
                }
            }
            // b(v, q) = int q div v
            for kp in 0..3 {
                for i in 0..P2_NODES {
                    b_local[kp][i][0] += w * l[kp] * grads[i][0];
                    b_local[kp][i][1] += w * l[kp] * grads[i][1];
                }
            }
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let f = body_force(x);
            for i in 0..P2_NODES {
                f_local[i][0] += w * vals[i] * f[0];
                f_local[i][1] += w * vals[i] * f[1];
            }
            for kp in 0..3 {
                for lp in 0..3 {
                    mp_local[kp][lp] += w * l[kp] * l[lp];
                }
            }
        }

        for i in 0..P2_NODES {
            for kk in 0..P2_NODES {
                let v = k_local[i][kk];
                if v != 0.0 {
                    for c in 0..2 {
                        a.push(space.vdof(nodes[i], c), space.vdof(nodes[kk], c), v);
                    }
                }
            }
            for c in 0..2 {
                load[space.vdof(nodes[i], c)] += f_local[i][c];
            }
        }
        let pverts = [va, vb, vc];
        for kp in 0..3 {
            for i in 0..P2_NODES {
                for c in 0..2 {
                    b.push(pverts[kp], space.vdof(nodes[i], c), b_local[kp][i][c]);
                }
            }
            for lp in 0..3 {
                mass_p.push(pverts[kp], pverts[lp], mp_local[kp][lp]);
            }
            m_weights[pverts[kp]] += area / 3.0;
        }
    }

    let ns = space.s_nodes.len();
    let mut n_mat = CooMat::new(ns, nv);
    let mut t_mat = CooMat::new(ns, nv);
    let mut w_diag = vec![0.0; ns];
    for (row, sn) in space.s_nodes.iter().enumerate() {
        n_mat.push(row, space.vdof(sn.node, 0), sn.frame.normal[0]);
        n_mat.push(row, space.vdof(sn.node, 1), sn.frame.normal[1]);
        t_mat.push(row, space.vdof(sn.node, 0), sn.frame.tangent[0]);
        t_mat.push(row, space.vdof(sn.node, 1), sn.frame.tangent[1]);
        w_diag[row] = sn.weight;
    }

    AssembledSystem {
        a: a.to_csr(),
        b: b.to_csr(),
        load,
        n_mat: n_mat.to_csr(),
        t_mat: t_mat.to_csr(),
        w_diag,
        pressure_mass: mass_p.to_csr(),
        pressure_weights: m_weights,
        domain_area: area_total,
    }
}

/// L2 difference of two pressures after removing the (area-weighted) mean
/// of the difference; used when comparing against manufactured pressures.
pub fn l2_pressure_diff_zero_mean(system: &AssembledSystem, p: &[f64], q: &[f64]) -> f64 {
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let mean = dot(&system.pressure_weights, &diff) / system.domain_area;
    let centered: Vec<f64> = diff.iter().map(|d| d - mean).collect();
    system.l2_pressure(&centered)
}
