//! Liouville reduction of the conductivity equation to Schrödinger form.
//!
//! With v = a^{1/2}u the equation −div(a∇u) = 0 becomes −Δv + qv = 0 for
//! q = a^{−1/2}Δa^{1/2}, and the DN maps are related by
//!
//! Λ_q = D 𝒩_a D + diag(ν·∇a / (2a)),   D = diag(a^{−1/2}) on ∂Ω,
//!
//! since u has Dirichlet data a^{−1/2}φ when v has data φ.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{CalError, Result};
use crate::field::{BoundaryField, ScalarField};
use crate::forward::{dn_map_conductivity, dn_map_schrodinger, real_positive, DnKind, DnMap};
use crate::geometry::{Grid, Vec3};

/// 2f₀ − 5f₁ + 4f₂ − f₃ written in differences, so it vanishes exactly on constants.
fn one_sided(f0: f64, f1: f64, f2: f64, f3: f64) -> f64 {
    2.0 * (f0 - f1) - 3.0 * (f1 - f2) + (f2 - f3)
}

/// Second derivative along one axis at index t; one-sided at the two ends of the line.
fn second_diff(f: impl Fn(usize) -> f64, t: usize, m: usize, h2: f64) -> f64 {
    if t == 0 {
        one_sided(f(0), f(1), f(2), f(3)) / h2
    } else if t == m - 1 {
        one_sided(f(m - 1), f(m - 2), f(m - 3), f(m - 4)) / h2
    } else {
        (f(t - 1) - 2.0 * f(t) + f(t + 1)) / h2
    }
}

/// Nodewise Δ_h of a real field, centred inside and one-sided second order at ∂Ω.
pub fn laplacian_all_nodes(grid: &Grid, s: &[f64]) -> Vec<f64> {
    let m = grid.m;
    let h2 = grid.h * grid.h;
    let st = [m * m, m, 1];
    (0..grid.n_nodes())
        .map(|g| {
            let ijk = grid.ijk(g);
            (0..3)
                .map(|ax| {
                    let base = g - ijk[ax] * st[ax];
                    second_diff(|t| s[base + t * st[ax]], ijk[ax], m, h2)
                })
                .sum()
        })
        .collect()
}

/// q = a^{−1/2} Δ_h a^{1/2}.
pub fn potential_of(a: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    let ar = real_positive(grid, a)?;
    let s: Vec<f64> = ar.iter().map(|v| v.sqrt()).collect();
    let lap = laplacian_all_nodes(grid, &s);
    Ok(ScalarField {
        m: grid.m,
        l: grid.l,
        values: lap.iter().zip(&s).map(|(d, s)| C64::new(d / s, 0.0)).collect(),
    })
}

/// Maps 𝒩_a to Λ_q given a and ∇a at the boundary nodes.
pub fn dn_transform(n_a: &DnMap, a_b: &BoundaryField, grad_a_b: &[Vec3], grid: &Grid) -> Result<DnMap> {
    let n = n_a.n;
    for len in [a_b.values.len(), grad_a_b.len(), grid.n_boundary()] {
        if len != n {
            return Err(CalError::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut d = Vec::with_capacity(n);
    for v in &a_b.values {
        if v.im != 0.0 || !(v.re > 0.0) {
            return Err(CalError::NonPositiveConductivity(v.re));
        }
        d.push(v.re.powf(-0.5));
    }
    let mut matrix = n_a.matrix.clone();
    for i in 0..n {
        for j in 0..n {
            matrix[i * n + j] *= d[i] * d[j];
        }
        let nu = grid.boundary[i].normal();
        let dn = nu[0] * grad_a_b[i][0] + nu[1] * grad_a_b[i][1] + nu[2] * grad_a_b[i][2];
        matrix[i * n + i] += dn / (2.0 * a_b.values[i].re);
    }
    Ok(DnMap { n, matrix, kind: DnKind::Schrodinger, coeff_hash: n_a.coeff_hash.clone() })
}

/// ∇a at the boundary nodes: centred along tangential axes, one-sided second order along
/// axes where the node sits on a face.
pub fn boundary_gradient(a: &ScalarField, grid: &Grid) -> Result<Vec<Vec3>> {
    let ar = real_positive(grid, a)?;
    let m = grid.m;
    let st = [m * m, m, 1];
    let h = grid.h;
    Ok(grid
        .boundary
        .iter()
        .map(|b| {
            let g = b.node;
            let mut d = [0.0; 3];
            for ax in 0..3 {
                let s = st[ax];
                d[ax] = match b.ijk[ax] {
                    0 => (-3.0 * ar[g] + 4.0 * ar[g + s] - ar[g + 2 * s]) / (2.0 * h),
                    t if t == m - 1 => (3.0 * ar[g] - 4.0 * ar[g - s] + ar[g - 2 * s]) / (2.0 * h),
                    _ => (ar[g + s] - ar[g - s]) / (2.0 * h),
                };
            }
            d
        })
        .collect())
}

/// ‖dn_transform(𝒩_a) − Λ_q‖_max with q = potential_of(a) and ∇a from `boundary_gradient`.
pub fn liouville_defect(a: &ScalarField, grid: &Grid) -> Result<f64> {
    let n_a = dn_map_conductivity(grid, a)?;
    let q = potential_of(a, grid)?;
    let lq = dn_map_schrodinger(grid, &q)?;
    let t = dn_transform(&n_a, &a.trace(grid), &boundary_gradient(a, grid)?, grid)?;
    t.max_abs_diff(&lq)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessGap {
    /// max over interior nodes of |(−Δ_h + q₂) y|, y = a₁^{1/2} − a₂^{1/2}.
    pub interior_residual: f64,
    /// max over ∂Ω of |y|.
    pub boundary_norm: f64,
    /// max over all nodes of |q₁ − q₂|.
    pub potential_mismatch: f64,
}

pub fn uniqueness_gap(a1: &ScalarField, a2: &ScalarField, grid: &Grid) -> Result<UniquenessGap> {
    let r1 = real_positive(grid, a1)?;
    let r2 = real_positive(grid, a2)?;
    let q1 = potential_of(a1, grid)?;
    let q2 = potential_of(a2, grid)?;
    let y: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a.sqrt() - b.sqrt()).collect();
    let lap = laplacian_all_nodes(grid, &y);
    let interior_residual = grid
        .interior_nodes()
        .map(|g| (-lap[g] + q2.values[g].re * y[g]).abs())
        .fold(0.0, f64::max);
    let boundary_norm = grid.boundary.iter().map(|b| y[b.node].abs()).fold(0.0, f64::max);
    let potential_mismatch = q1
        .values
        .iter()
        .zip(&q2.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(UniquenessGap { interior_residual, boundary_norm, potential_mismatch })
}
