//! Structured triangulation of the channel domain via the vertical map.
//!
//! Nodes sit at `x1 = i/nx`, `x2 = alpha(x1) + (j/ny)(omega - alpha(x1))`;
//! every quad is split along the same diagonal. Meshes built for different
//! profiles with equal (nx, ny) are therefore topologically identical,
//! which is what makes pullback comparisons between shapes well defined.

use std::collections::HashMap;

use super::BoundaryShape;
use crate::error::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Bottom boundary: the graph of alpha (slip side).
    Slip,
    Left,
    Right,
    Top,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub tag: BoundaryTag,
    /// Parameter interval [x1_a, x1_b] covered by a slip edge.
    pub span: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Unique undirected edges as sorted vertex pairs, in first-seen order.
    pub edges: Vec<[usize; 2]>,
    /// For each triangle, edge ids of (v0v1, v1v2, v2v0).
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
}

impl Mesh {
    #[inline]
    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Vertex ids on the slip boundary, left to right (includes corners).
    pub fn slip_vertices(&self) -> Vec<usize> {
        (0..=self.nx).collect()
    }

    /// Number of triangles sharing each edge; interior edges must have 2.
    pub fn edge_valence(&self) -> Vec<u8> {
        let mut valence = vec![0u8; self.edges.len()];
        for te in &self.triangle_edges {
            for &e in te {
                valence[e] += 1;
            }
        }
        valence
    }
}

/// Maps the structured grid over the profile: `(nx+1)(ny+1)` vertices,
/// `2 nx ny` triangles, `nx` slip edges on the bottom.
pub fn build_mesh(shape: &BoundaryShape, nx: usize, ny: usize) -> Result<Mesh, GeometryError> {
    if nx < 2 || ny < 2 {
        return Err(GeometryError::MeshTooCoarse { nx, ny });
    }
    let omega = shape.omega();
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let s = j as f64 / ny as f64;
        for i in 0..=nx {
            let x1 = i as f64 / nx as f64;
            let a = shape.alpha(x1);
            vertices.push([x1, a + s * (omega - a)]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = vid(i, j);
            let b = vid(i + 1, j);
            let c = vid(i + 1, j + 1);
            let d = vid(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut ids = [0usize; 3];
        for (k, (p, q)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
            .into_iter()
            .enumerate()
        {
            let key = [p.min(q), p.max(q)];
            let id = *edge_index.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
            ids[k] = id;
        }
        triangle_edges.push(ids);
    }

    let mesh = Mesh {
        nx,
        ny,
        vertices,
        triangles,
        edges,
        triangle_edges,
        boundary: Vec::new(),
    };

    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        if area <= 0.0 {
            return Err(GeometryError::DegenerateCell { index: t, area });
        }
    }

    let valence = mesh.edge_valence();
    let mut boundary = Vec::new();
    for (e, &[p, q]) in mesh.edges.iter().enumerate() {
        if valence[e] != 1 {
            continue;
        }
        let (pi, pj) = (p % (nx + 1), p / (nx + 1));
        let (qi, qj) = (q % (nx + 1), q / (nx + 1));
        let (tag, span) = if pj == 0 && qj == 0 {
            let i0 = pi.min(qi);
            let i1 = pi.max(qi);
            (
                BoundaryTag::Slip,
                Some([i0 as f64 / nx as f64, i1 as f64 / nx as f64]),
            )
        } else if pi == 0 && qi == 0 {
            (BoundaryTag::Left, None)
        } else if pi == nx && qi == nx {
            (BoundaryTag::Right, None)
        } else if pj == ny && qj == ny {
            (BoundaryTag::Top, None)
        } else {
            // structured grids cannot produce an unclassifiable boundary edge
            unreachable!("boundary edge {e} is on no side of the structured grid");
        };
        boundary.push(BoundaryEdge { edge: e, tag, span });
    }

    Ok(Mesh { boundary, ..mesh })
}
