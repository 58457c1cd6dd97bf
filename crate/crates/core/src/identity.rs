//! Boundary pairing of DN-map differences, Fourier sampling of q_A − q_B with CGO probes,
//! lattice reconstruction, and the shadowed-face term used for partial data.
//!
//! Pairing convention: for Dirichlet data f₁, f₂,
//!
//! Σ_b w_b ((Λ_A − Λ_B) f₁)_b (f₂)_b  ≈  ∫_Ω (q_A − q_B) u_A ṽ dx,
//!
//! where u_A solves the q_A problem with data f₁ and ṽ the q_B problem with data f₂. The sign
//! is positive and neither factor is conjugated.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::cgo::{born_cgo, build_cgo, cgo_traces, CgoKind, CgoSolution};
use crate::error::{invalid, CalError, Result};
use crate::field::{BoundaryField, ScalarField};
use crate::forward::{neumann_trace, solve_schrodinger, solve_schrodinger_with_source, DnMap};
use crate::geometry::{dot, face_split, norm, Frame, Grid, Vec3};

pub fn alessandrini_pair(la: &DnMap, lb: &DnMap, f1: &BoundaryField, f2: &BoundaryField, grid: &Grid) -> Result<C64> {
    let n = grid.n_boundary();
    for len in [la.n, lb.n, f1.values.len(), f2.values.len()] {
        if len != n {
            return Err(CalError::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let ra = &la.matrix[i * n..(i + 1) * n];
        let rb = &lb.matrix[i * n..(i + 1) * n];
        let d: C64 = ra.iter().zip(rb).zip(&f1.values).map(|((a, b), f)| (a - b) * f).sum();
        acc += d * f2.values[i] * grid.boundary[i].weight;
    }
    Ok(acc)
}

/// ∫_Ω (q_A − q_B) u_A ṽ dx with u_A, ṽ computed by the forward solver from f₁, f₂.
pub fn volume_pairing(
    qa: &ScalarField,
    qb: &ScalarField,
    f1: &BoundaryField,
    f2: &BoundaryField,
    grid: &Grid,
) -> Result<C64> {
    let ua = solve_schrodinger(grid, qa, f1)?;
    let vb = solve_schrodinger(grid, qb, f2)?;
    Ok((0..grid.n_nodes())
        .map(|g| (qa.values[g] - qb.values[g]) * ua.values[g] * vb.values[g] * grid.volume_weight(g))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Probes built from the potentials themselves.
    Faithful,
    /// Probes with w ≡ 0.
    Born,
}

#[derive(Clone, Copy, Debug)]
pub struct ProbeOptions {
    pub mode: ProbeMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { mode: ProbeMode::Faithful, tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierSample {
    pub xi: Vec3,
    pub rho: f64,
    pub value: C64,
    pub w1_l2: f64,
    pub w2_l2: f64,
    pub iterations: [usize; 2],
    pub cgo_residuals: [f64; 2],
}

fn probe(q: &ScalarField, frame: &Frame, kind: CgoKind, grid: &Grid, opts: &ProbeOptions) -> Result<CgoSolution> {
    match opts.mode {
        ProbeMode::Faithful => build_cgo(q, frame, kind, grid, opts.tol, opts.max_iter),
        ProbeMode::Born => born_cgo(frame, kind, grid),
    }
}

/// Estimate of ∫_Ω (q_A − q_B) e^{−iξ·x} dx.
#[allow(clippy::too_many_arguments)]
pub fn fourier_sample(
    la: &DnMap,
    lb: &DnMap,
    qa: &ScalarField,
    qb: &ScalarField,
    xi: Vec3,
    rho: f64,
    grid: &Grid,
    opts: &ProbeOptions,
) -> Result<FourierSample> {
    let frame = Frame::new(xi, rho)?;
    let v1 = probe(qa, &frame, CgoKind::Type1, grid, opts)?;
    let v2 = probe(qb, &frame, CgoKind::Type2, grid, opts)?;
    let f1 = cgo_traces(&v1, grid)?.dirichlet;
    let f2 = cgo_traces(&v2, grid)?.dirichlet;
    let value = alessandrini_pair(la, lb, &f1, &f2, grid)?;
    Ok(FourierSample {
        xi,
        rho,
        value,
        w1_l2: v1.w_l2,
        w2_l2: v2.w_l2,
        iterations: [v1.iterations, v2.iterations],
        cgo_residuals: [v1.residual, v2.residual],
    })
}

/// Trapezoid quadrature of ∫_Ω q e^{−iξ·x} dx.
pub fn exact_fourier(q: &ScalarField, xi: Vec3, grid: &Grid) -> C64 {
    (0..grid.n_nodes())
        .map(|g| q.values[g] * C64::from_polar(grid.volume_weight(g), -dot(xi, grid.pos(g))))
        .sum()
}

pub fn lattice_points(xi_max: i32) -> Vec<[i32; 3]> {
    let r = -xi_max..=xi_max;
    r.clone()
        .flat_map(|a| r.clone().flat_map(move |b| (-xi_max..=xi_max).map(move |c| [a, b, c])))
        .collect()
}

pub fn lattice_xi(k: [i32; 3], grid: &Grid) -> Vec3 {
    let s = std::f64::consts::PI / grid.l;
    [k[0] as f64 * s, k[1] as f64 * s, k[2] as f64 * s]
}

/// Re Σ_k q̂(ξ_k) e^{iξ_k·x} / (2L)³ on the Ω-grid.
pub fn inverse_lattice(points: &[[i32; 3]], values: &[C64], grid: &Grid) -> ScalarField {
    let vol = (2.0 * grid.l).powi(3);
    let xis: Vec<Vec3> = points.iter().map(|k| lattice_xi(*k, grid)).collect();
    ScalarField::from_fn(grid, |x| {
        let s: f64 = xis.iter().zip(values).map(|(xi, v)| (v * C64::from_polar(1.0, dot(*xi, x))).re).sum();
        C64::new(s / vol, 0.0)
    })
}

/// Averages each sample with the conjugate of its mirror −k. Missing entries fall back to
/// the mirror alone, or to zero.
pub fn hermitian_average(points: &[[i32; 3]], values: &[Option<C64>]) -> Vec<C64> {
    let pos = |k: [i32; 3]| points.iter().position(|p| *p == k);
    points
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let mirror = pos([-k[0], -k[1], -k[2]]).and_then(|j| values[j]).map(|v| v.conj());
            match (values[i], mirror) {
                (Some(a), Some(b)) => (a + b) * 0.5,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => C64::new(0.0, 0.0),
            }
        })
        .collect()
}

pub fn relative_l2(a: &ScalarField, b: &ScalarField, grid: &Grid) -> f64 {
    let d = ScalarField { values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(), ..a.clone() };
    let nb = b.l2_norm(grid);
    if nb == 0.0 {
        d.l2_norm(grid)
    } else {
        d.l2_norm(grid) / nb
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeSample {
    pub k: [i32; 3],
    pub xi: Vec3,
    pub raw: Option<C64>,
    pub symmetric: C64,
    pub exact: C64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub q_rec: ScalarField,
    pub samples: Vec<LatticeSample>,
    pub failed: Vec<([i32; 3], String)>,
    /// max |q̂(k) − conj q̂(−k)| over pairs where both were sampled.
    pub hermitian_defect: f64,
    /// Relative L² error against q_A − q_B.
    pub error: f64,
    /// Same inversion fed with exact samples of q_A − q_B.
    pub truncation_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn reconstruct_potential(
    la: &DnMap,
    lb: &DnMap,
    qa: &ScalarField,
    qb: &ScalarField,
    xi_max: i32,
    rho: f64,
    grid: &Grid,
    opts: &ProbeOptions,
) -> Result<Reconstruction> {
    if xi_max < 0 {
        return invalid("ξ_max must be non-negative");
    }
    let target = ScalarField { values: qa.values.iter().zip(&qb.values).map(|(a, b)| a - b).collect(), ..qa.clone() };
    let points = lattice_points(xi_max);
    let mut raw = Vec::with_capacity(points.len());
    let mut failed = Vec::new();
    for k in &points {
        match fourier_sample(la, lb, qa, qb, lattice_xi(*k, grid), rho, grid, opts) {
            Ok(s) => raw.push(Some(s.value)),
            Err(e) => {
                failed.push((*k, e.to_string()));
                raw.push(None);
            }
        }
    }
    let mut hermitian_defect: f64 = 0.0;
    for (i, k) in points.iter().enumerate() {
        let j = points.iter().position(|p| *p == [-k[0], -k[1], -k[2]]).unwrap();
        if let (Some(a), Some(b)) = (raw[i], raw[j]) {
            hermitian_defect = hermitian_defect.max((a - b.conj()).norm());
        }
    }
    let sym = hermitian_average(&points, &raw);
    let exact: Vec<C64> = points.iter().map(|k| exact_fourier(&target, lattice_xi(*k, grid), grid)).collect();
    let q_rec = inverse_lattice(&points, &sym, grid);
    let q_trunc = inverse_lattice(&points, &exact, grid);
    let error = relative_l2(&q_rec, &target, grid);
    let truncation_error = relative_l2(&q_trunc, &target, grid);
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, k)| LatticeSample { k: *k, xi: lattice_xi(*k, grid), raw: raw[i], symmetric: sym[i], exact: exact[i] })
        .collect();
    Ok(Reconstruction { q_rec, samples, failed, hermitian_defect, error, truncation_error })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowReport {
    /// Σ_U w ∂_νv · v₂.
    pub value_u: C64,
    /// Σ_V w ∂_νv · v₂.
    pub value_v: C64,
    /// Full-boundary sum.
    pub value_full: C64,
    /// (Σ_U w e^{−2ρη₁·x}|∂_νv|²)^{1/2}.
    pub weighted_flux_u: f64,
    /// (Σ_U w |v₂ e^{ρη₁·x}|²)^{1/2}, the companion factor in the Cauchy–Schwarz bound.
    pub probe_norm_u: f64,
    pub u_nodes: usize,
    pub v_nodes: usize,
    pub rho: f64,
}

/// Solves (−Δ_h + q₂)v = (q₁ − q₂)v₁ with v = 0 on ∂Ω, v₁ the type-1 probe for q₁, and pairs
/// ∂_νv with the type-2 probe v₂ for q₂ over U = {ν·η ≥ 2ε}.
#[allow(clippy::too_many_arguments)]
pub fn shadow_term(
    q1: &ScalarField,
    q2: &ScalarField,
    frame: &Frame,
    eta: Vec3,
    eps: f64,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<ShadowReport> {
    let d = [frame.eta1[0] - eta[0], frame.eta1[1] - eta[1], frame.eta1[2] - eta[2]];
    if !(norm(d) < eps) {
        return invalid(format!("|η₁ − η| = {} is not below ε = {eps}", norm(d)));
    }
    let split = face_split(grid, eta, eps)?;
    let v1 = build_cgo(q1, frame, CgoKind::Type1, grid, tol, max_iter)?;
    let v2 = build_cgo(q2, frame, CgoKind::Type2, grid, tol, max_iter)?;
    let src = ScalarField {
        values: (0..grid.n_nodes()).map(|g| (q1.values[g] - q2.values[g]) * v1.v.values[g]).collect(),
        ..q1.clone()
    };
    let (v, _) = solve_schrodinger_with_source(grid, q2, Some(&src), &BoundaryField::zeros(grid))?;
    let dv = neumann_trace(&v, grid);
    let f2 = v2.v.trace(grid);
    let value_u = dv.weighted_pairing(&f2, grid, Some(&split.u));
    let value_v = dv.weighted_pairing(&f2, grid, Some(&split.v));
    let value_full = dv.weighted_pairing(&f2, grid, None);
    let (mut fu, mut pu) = (0.0, 0.0);
    for &b in &split.u {
        let node = &grid.boundary[b];
        let e = frame.rho * dot(frame.eta1, grid.pos(node.node));
        fu += node.weight * (-2.0 * e).exp() * dv.values[b].norm_sqr();
        pu += node.weight * (f2.values[b] * e.exp()).norm_sqr();
    }
    Ok(ShadowReport {
        value_u,
        value_v,
        value_full,
        weighted_flux_u: fu.sqrt(),
        probe_norm_u: pu.sqrt(),
        u_nodes: split.u.len(),
        v_nodes: split.v.len(),
        rho: frame.rho,
    })
}
