//! Dirichlet problems for −Δv + qv = 0 and −div(a∇u) = 0 on the Ω-grid, Neumann traces,
//! and the dense Dirichlet-to-Neumann matrices Λ_q and 𝒩_a.
//!
//! Both equations share one seven-point flux assembly: unit face coefficients for the
//! Schrödinger operator, harmonic means of a for the conductivity operator. With a ≡ 1
//! the two assemblies coincide entry for entry.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CalError, Result};
use crate::field::{BoundaryField, ScalarField};
use crate::geometry::Grid;
use crate::linalg::{InteriorSolver, Operator};

/// Solutions larger than this multiple of the data are treated as resonant.
pub const GROWTH_LIMIT: f64 = 1e10;
const BLOCK: usize = 64;

/// Solves (−Δ_h + q)v = 0 with v = φ on ∂Ω.
pub fn solve_schrodinger(grid: &Grid, q: &ScalarField, phi: &BoundaryField) -> Result<ScalarField> {
    solve_schrodinger_with_source(grid, q, None, phi).map(|(v, _)| v)
}

/// Solves (−Δ_h + q)v = f at interior nodes with v = φ on ∂Ω; also returns the relative
/// residual of the linear solve.
pub fn solve_schrodinger_with_source(
    grid: &Grid,
    q: &ScalarField,
    source: Option<&ScalarField>,
    phi: &BoundaryField,
) -> Result<(ScalarField, f64)> {
    q.check_grid(grid)?;
    phi.check_grid(grid)?;
    if q.values.iter().any(|v| !v.is_finite()) {
        return Err(CalError::NonFinite("potential".into()));
    }
    let op = Operator::laplacian(grid, &q.values);
    solve_dirichlet(grid, op, source, phi)
}

/// Solves −div_h(a ∇_h u) = 0 with u = φ on ∂Ω.
pub fn solve_conductivity(grid: &Grid, a: &ScalarField, phi: &BoundaryField) -> Result<ScalarField> {
    let ar = real_positive(grid, a)?;
    phi.check_grid(grid)?;
    solve_dirichlet(grid, Operator::conductivity(grid, &ar), None, phi).map(|(u, _)| u)
}

pub(crate) fn real_positive(grid: &Grid, a: &ScalarField) -> Result<Vec<f64>> {
    a.check_grid(grid)?;
    if a.values.iter().any(|v| v.im != 0.0) {
        return Err(CalError::InvalidArgument("conductivity must be real".into()));
    }
    let min = a.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || a.values.iter().any(|v| !v.re.is_finite()) {
        return Err(CalError::NonPositiveConductivity(min));
    }
    Ok(a.values.iter().map(|v| v.re).collect())
}

fn solve_dirichlet(
    grid: &Grid,
    op: Operator,
    source: Option<&ScalarField>,
    phi: &BoundaryField,
) -> Result<(ScalarField, f64)> {
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(CalError::NonFinite("Dirichlet data".into()));
    }
    let mut full = vec![C64::new(0.0, 0.0); grid.n_nodes()];
    for (b, node) in grid.boundary.iter().enumerate() {
        full[node.node] = phi.values[b];
    }
    let mut rhs = op.rhs_from_dirichlet(&full);
    let mut scale = phi.max_abs();
    if let Some(f) = source {
        f.check_grid(grid)?;
        let h2 = grid.h * grid.h;
        for (p, g) in grid.interior_nodes().enumerate() {
            rhs[p] += f.values[g] * h2;
        }
        // A source of size |f| drives solutions of size about |f|·L².
        scale = scale.max(f.max_abs() * grid.l * grid.l);
    }
    let solver = InteriorSolver::new(op)?;
    let (x, res) = solver.solve(&rhs)?;
    let umax = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if umax > GROWTH_LIMIT * scale {
        return Err(CalError::NonSolvable(format!(
            "solution grew to {umax:e} from data of size {scale:e}"
        )));
    }
    for (p, g) in grid.interior_nodes().enumerate() {
        full[g] = x[p];
    }
    Ok((ScalarField { m: grid.m, l: grid.l, values: full }, res))
}

/// One-sided second-order derivative along the outward normal,
/// (3v_b − 4v_{b−ν} + v_{b−2ν}) / (2h), at every boundary node.
pub fn neumann_trace(v: &ScalarField, grid: &Grid) -> BoundaryField {
    BoundaryField {
        values: (0..grid.n_boundary())
            .map(|b| normal_derivative(grid, b, |g| v.values[g]))
            .collect(),
    }
}

pub(crate) fn normal_derivative(grid: &Grid, b: usize, val: impl Fn(usize) -> C64) -> C64 {
    let node = &grid.boundary[b];
    let st = [grid.m * grid.m, grid.m, 1][node.axis];
    let g = node.node;
    let (g1, g2) = if node.sign > 0.0 { (g - st, g - 2 * st) } else { (g + st, g + 2 * st) };
    (val(g) * 3.0 - val(g1) * 4.0 + val(g2)) / (2.0 * grid.h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DnKind {
    Schrodinger,
    Conductivity,
}

/// Dense DN matrix over the nodal boundary basis, row-major.
#[derive(Clone, Debug)]
pub struct DnMap {
    pub n: usize,
    pub matrix: Vec<C64>,
    pub kind: DnKind,
    /// sha256 of the coefficient field (q or a) and the grid size.
    pub coeff_hash: String,
}

impl DnMap {
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix[i * self.n + j]
    }

    pub fn apply(&self, f: &BoundaryField) -> Result<BoundaryField> {
        if f.values.len() != self.n {
            return Err(CalError::DimensionMismatch { expected: self.n, got: f.values.len() });
        }
        let values = self
            .matrix
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(&f.values).map(|(a, b)| a * b).sum())
            .collect();
        Ok(BoundaryField { values })
    }

    pub fn max_abs_diff(&self, other: &DnMap) -> Result<f64> {
        if self.n != other.n {
            return Err(CalError::DimensionMismatch { expected: self.n, got: other.n });
        }
        Ok(self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// max |(WΛ − ΛᵀW)_{ij}| with W the boundary area weights.
    pub fn weighted_symmetry_defect(&self, grid: &Grid) -> f64 {
        let w = |i: usize| grid.boundary[i].weight;
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.get(i, j) * w(i) - self.get(j, i) * w(j)).norm());
            }
        }
        d
    }
}

pub fn hash_field(grid: &Grid, f: &ScalarField) -> String {
    let mut h = Sha256::new();
    h.update((grid.m as u64).to_le_bytes());
    h.update(grid.l.to_le_bytes());
    for v in &f.values {
        h.update(v.re.to_le_bytes());
        h.update(v.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn dn_map_schrodinger(grid: &Grid, q: &ScalarField) -> Result<DnMap> {
    q.check_grid(grid)?;
    if q.values.iter().any(|v| !v.is_finite()) {
        return Err(CalError::NonFinite("potential".into()));
    }
    let op = Operator::laplacian(grid, &q.values);
    let cols = dn_columns(grid, op, None)?;
    Ok(DnMap { n: grid.n_boundary(), matrix: cols, kind: DnKind::Schrodinger, coeff_hash: hash_field(grid, q) })
}

pub fn dn_map_conductivity(grid: &Grid, a: &ScalarField) -> Result<DnMap> {
    let ar = real_positive(grid, a)?;
    let op = Operator::conductivity(grid, &ar);
    let cols = dn_columns(grid, op, Some(&ar))?;
    Ok(DnMap { n: grid.n_boundary(), matrix: cols, kind: DnKind::Conductivity, coeff_hash: hash_field(grid, a) })
}

/// One solve per boundary basis vector, in blocks, returning the row-major matrix.
fn dn_columns(grid: &Grid, op: Operator, flux_scale: Option<&[f64]>) -> Result<Vec<C64>> {
    let nb = grid.n_boundary();
    let ni = grid.n_interior();
    let mut by_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (p, node, c) in op.dirichlet_couplings() {
        let b = grid.boundary_index(node).expect("coupling to a boundary node");
        by_node[b].push((p, c));
    }
    let interior_pos: Vec<usize> = {
        let mut v = vec![usize::MAX; grid.n_nodes()];
        for (p, g) in grid.interior_nodes().enumerate() {
            v[g] = p;
        }
        v
    };
    let real = op.is_real();
    let solver = InteriorSolver::new(op).map_err(|e| CalError::DnColumn { column: 0, reason: e.to_string() })?;
    let mut out = vec![C64::new(0.0, 0.0); nb * nb];
    let mut start = 0;
    while start < nb {
        let w = BLOCK.min(nb - start);
        let mut sols: Vec<Vec<C64>> = Vec::with_capacity(w);
        if real {
            let mut blk = Mat::<f64>::zeros(ni, w);
            for c in 0..w {
                for &(p, coef) in &by_node[start + c] {
                    blk[(p, c)] += coef;
                }
            }
            solver.solve_real_block(&mut blk)?;
            for c in 0..w {
                sols.push((0..ni).map(|r| C64::new(blk[(r, c)], 0.0)).collect());
            }
        } else {
            for c in 0..w {
                let mut rhs = vec![C64::new(0.0, 0.0); ni];
                for &(p, coef) in &by_node[start + c] {
                    rhs[p] += coef;
                }
                let (x, _) = solver
                    .solve(&rhs)
                    .map_err(|e| CalError::DnColumn { column: start + c, reason: e.to_string() })?;
                sols.push(x);
            }
        }
        for (c, x) in sols.iter().enumerate() {
            let j = start + c;
            if real {
                let mut rhs = vec![C64::new(0.0, 0.0); ni];
                for &(p, coef) in &by_node[j] {
                    rhs[p] += coef;
                }
                let res = solver.op.relative_residual(x, &rhs);
                if !(res <= crate::linalg::RESIDUAL_LIMIT) || x.iter().any(|v| !v.is_finite()) {
                    return Err(CalError::DnColumn { column: j, reason: format!("relative residual {res:e}") });
                }
            }
            let umax = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if umax > GROWTH_LIMIT {
                return Err(CalError::DnColumn { column: j, reason: format!("solution grew to {umax:e}") });
            }
            let jnode = grid.boundary[j].node;
            let val = |g: usize| {
                let p = interior_pos[g];
                if p != usize::MAX {
                    x[p]
                } else if g == jnode {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            };
            for i in 0..nb {
                let mut d = normal_derivative(grid, i, val);
                if let Some(a) = flux_scale {
                    d *= a[grid.boundary[i].node];
                }
                out[i * nb + j] = d;
            }
        }
        start += w;
    }
    Ok(out)
}
