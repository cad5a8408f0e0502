//! P1 finite elements on a structured right-triangle mesh.
//!
//! Nodes are numbered `b * (n1 + 1) + a` for grid position `(a, b)`. Each
//! rectangular cell is split along its `(+1, +1)` diagonal into the triangles
//! `[(a,b), (a+1,b), (a+1,b+1)]` and `[(a,b), (a+1,b+1), (a,b+1)]`.

use super::sparse::{BandedLu, MultiCsr};
use super::{BoundarySpec, EdgeCondition, Rectangle};
use crate::coeff::VectorField;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Value arrays stored in [`FemData::matrices`].
pub const MASS: usize = 0;
pub const DIFFUSION: usize = 1;
pub const ADVECTION: usize = 2;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n1: usize,
    pub n2: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Mesh {
    pub fn new(domain: &Rectangle, n1: usize, n2: usize) -> Self {
        Mesh { n1, n2, hx: domain.lx / n1 as f64, hy: domain.ly / n2 as f64 }
    }

    pub fn num_nodes(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    #[inline]
    pub fn node(&self, a: usize, b: usize) -> usize {
        b * (self.n1 + 1) + a
    }

    #[inline]
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let a = node % (self.n1 + 1);
        let b = node / (self.n1 + 1);
        (a as f64 * self.hx, b as f64 * self.hy)
    }

    /// All triangles as node triples (counter-clockwise).
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::with_capacity(2 * self.n1 * self.n2);
        for b in 0..self.n2 {
            for a in 0..self.n1 {
                let p00 = self.node(a, b);
                let p10 = self.node(a + 1, b);
                let p11 = self.node(a + 1, b + 1);
                let p01 = self.node(a, b + 1);
                out.push([p00, p10, p11]);
                out.push([p00, p11, p01]);
            }
        }
        out
    }

    /// Triangle containing `(x, y)` and its barycentric coordinates.
    pub fn locate(&self, x: f64, y: f64) -> ([usize; 3], [f64; 3]) {
        let a = ((x / self.hx).floor().max(0.0) as usize).min(self.n1 - 1);
        let b = ((y / self.hy).floor().max(0.0) as usize).min(self.n2 - 1);
        let u = x / self.hx - a as f64;
        let v = y / self.hy - b as f64;
        let p00 = self.node(a, b);
        let p10 = self.node(a + 1, b);
        let p11 = self.node(a + 1, b + 1);
        let p01 = self.node(a, b + 1);
        if v <= u {
            ([p00, p10, p11], [1.0 - u, u - v, v])
        } else {
            ([p00, p11, p01], [1.0 - v, u, v - u])
        }
    }
}

/// Gradients of the three barycentric functions and the triangle area.
pub fn p1_gradients(p: [(f64, f64); 3]) -> ([[f64; 2]; 3], f64) {
    let (x1, y1) = p[0];
    let (x2, y2) = p[1];
    let (x3, y3) = p[2];
    let det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    let g = [
        [(y2 - y3) / det, (x3 - x2) / det],
        [(y3 - y1) / det, (x1 - x3) / det],
        [(y1 - y2) / det, (x2 - x1) / det],
    ];
    (g, 0.5 * det.abs())
}

#[derive(Debug, Clone)]
pub struct FemData<T> {
    pub mesh: Mesh,
    /// Mass, diffusion (`∫ ∇φ_j·∇φ_i`) and advection (`∫ (q·∇φ_j) φ_i`) on one pattern.
    pub matrices: MultiCsr<T>,
    pub has_advection: bool,
    /// Prescribed value per node (`None` on free nodes).
    pub dirichlet: Vec<Option<T>>,
    /// Free node list, ascending.
    pub free: Vec<usize>,
    /// Node to free index (`usize::MAX` for Dirichlet nodes).
    pub free_index: Vec<usize>,
    /// Nodal vector with prescribed values on Dirichlet nodes and zero elsewhere.
    pub lift: Vec<T>,
    /// Half-bandwidth of the free system.
    pub bandwidth: usize,
    /// Factored free-free mass block.
    pub mass_free_lu: BandedLu<T>,
    /// Factored full mass matrix, used by the L2 projection.
    pub mass_full_lu: BandedLu<T>,
}

fn dirichlet_values(mesh: &Mesh, bc: &BoundarySpec) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; mesh.num_nodes()];
    let mut set = |node: usize, cond: &EdgeCondition| -> Result<()> {
        if let EdgeCondition::DirichletConstant(g) = cond {
            match out[node] {
                Some(prev) if prev != *g => {
                    return Err(Error::Config(format!(
                        "conflicting Dirichlet values {prev} and {g} at corner node {node}"
                    )))
                }
                _ => out[node] = Some(*g),
            }
        }
        Ok(())
    };
    for b in 0..=mesh.n2 {
        set(mesh.node(0, b), &bc.left)?;
        set(mesh.node(mesh.n1, b), &bc.right)?;
    }
    for a in 0..=mesh.n1 {
        set(mesh.node(a, 0), &bc.bottom)?;
        set(mesh.node(a, mesh.n2), &bc.top)?;
    }
    Ok(out)
}

impl<T: Scalar> FemData<T> {
    pub fn assemble(
        domain: &Rectangle,
        n1: usize,
        n2: usize,
        advection: Option<&VectorField>,
        bc: &BoundarySpec,
    ) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::Config(format!("Fem cell counts must be >= 2, got {n1} x {n2}")));
        }
        let mesh = Mesh::new(domain, n1, n2);
        let nn = mesh.num_nodes();
        let mut triplets: Vec<(usize, usize, Vec<f64>)> = Vec::with_capacity(18 * n1 * n2);
        for tri in mesh.triangles() {
            let pts = [mesh.coords(tri[0]), mesh.coords(tri[1]), mesh.coords(tri[2])];
            let (grad, area) = p1_gradients(pts);
            let q = match advection {
                Some(f) => {
                    let cx = (pts[0].0 + pts[1].0 + pts[2].0) / 3.0;
                    let cy = (pts[0].1 + pts[1].1 + pts[2].1) / 3.0;
                    let q = f.eval(cx, cy);
                    if !q[0].is_finite() || !q[1].is_finite() {
                        return Err(Error::Numerical(format!("non-finite advection at ({cx}, {cy})")));
                    }
                    q
                }
                None => [0.0, 0.0],
            };
            for i in 0..3 {
                for j in 0..3 {
                    let m = if i == j { area / 6.0 } else { area / 12.0 };
                    let kd = area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                    let ka = area / 3.0 * (q[0] * grad[j][0] + q[1] * grad[j][1]);
                    triplets.push((tri[i], tri[j], vec![m, kd, ka]));
                }
            }
        }
        let matrices = MultiCsr::<T>::from_triplets(nn, 3, &triplets);

        let dir = dirichlet_values(&mesh, bc)?;
        let free: Vec<usize> = (0..nn).filter(|&n| dir[n].is_none()).collect();
        if free.is_empty() {
            return Err(Error::Config("every node is a Dirichlet node".into()));
        }
        let mut free_index = vec![usize::MAX; nn];
        for (k, &n) in free.iter().enumerate() {
            free_index[n] = k;
        }
        let lift: Vec<T> = dir.iter().map(|d| T::of(d.unwrap_or(0.0))).collect();
        let dirichlet: Vec<Option<T>> = dir.iter().map(|d| d.map(T::of)).collect();

        let mut bandwidth = 0;
        for &n in &free {
            for e in matrices.row(n) {
                let c = matrices.col[e];
                if free_index[c] != usize::MAX {
                    bandwidth = bandwidth.max(free_index[n].abs_diff(free_index[c]));
                }
            }
        }
        let full_bw = mesh.n1 + 2;

        let mut mass_free_lu = BandedLu::zeros(free.len(), bandwidth, bandwidth);
        let mut mass_full_lu = BandedLu::zeros(nn, full_bw, full_bw);
        for r in 0..nn {
            for e in matrices.row(r) {
                let c = matrices.col[e];
                let m = matrices.values[MASS][e];
                mass_full_lu.add(r, c, m);
                if free_index[r] != usize::MAX && free_index[c] != usize::MAX {
                    mass_free_lu.add(free_index[r], free_index[c], m);
                }
            }
        }
        mass_free_lu.factor()?;
        mass_full_lu.factor()?;

        Ok(FemData {
            mesh,
            matrices,
            has_advection: advection.is_some(),
            dirichlet,
            free,
            free_index,
            lift,
            bandwidth,
            mass_free_lu,
            mass_full_lu,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    #[inline]
    pub fn is_free(&self, node: usize) -> bool {
        self.free_index[node] != usize::MAX
    }

    /// `K(t) = theta (K_diff + K_adv) + shift M` entry for CSR position `e`.
    #[inline]
    pub fn combined(&self, e: usize, theta: T, shift: T) -> T {
        let v = &self.matrices.values;
        theta * (v[DIFFUSION][e] + v[ADVECTION][e]) + shift * v[MASS][e]
    }

    /// Free-system matrix `M_ff + dt K_ff(t)` factored, plus the lift load
    /// `-dt K_fD g`.
    pub fn factor_resolvent(&self, theta: T, shift: T, dt: T) -> Result<(BandedLu<T>, Vec<T>)> {
        let nf = self.free.len();
        let mut lu = BandedLu::zeros(nf, self.bandwidth, self.bandwidth);
        let mut load = vec![T::zero(); nf];
        for (rf, &r) in self.free.iter().enumerate() {
            for e in self.matrices.row(r) {
                let c = self.matrices.col[e];
                let k = self.combined(e, theta, shift);
                let cf = self.free_index[c];
                if cf != usize::MAX {
                    lu.add(rf, cf, self.matrices.values[MASS][e] + dt * k);
                } else {
                    load[rf] -= dt * k * self.lift[c];
                }
            }
        }
        lu.factor()?;
        Ok((lu, load))
    }

    /// `(M v)_f` for free rows, free columns only.
    pub fn mass_free_rows(&self, v: &[T]) -> Vec<T> {
        self.free
            .iter()
            .map(|&r| {
                self.matrices
                    .row(r)
                    .filter(|&e| self.is_free(self.matrices.col[e]))
                    .map(|e| self.matrices.values[MASS][e] * v[self.matrices.col[e]])
                    .sum()
            })
            .collect()
    }

    /// `v^T M v` over all nodes.
    pub fn mass_norm_sq(&self, v: &[T]) -> T {
        let mv = self.matrices.matvec(MASS, v);
        mv.iter().zip(v).map(|(a, b)| *a * *b).sum()
    }
}
