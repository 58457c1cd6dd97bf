//! Complex geometric optics solutions of (−Δ + q)v = 0,
//!
//! type 1:  v = e^{ρη₁·x}(e^{iρη₂·x}e^{−iξ·x} + w),
//! type 2:  v = e^{−ρη₁·x}(e^{−iρη₂·x} + w),
//!
//! with the remainder w the fixed point of w ↦ 𝒦_ρ[F_ρ − q̃w]. 𝒦_ρ solves
//! −Δz − 2ρη₁·∇z − ρ²z = F on the periodic box Q by dividing Fourier coefficients in the
//! basis φ_α(S*y) = (2R)^{−3/2} e^{iπy₁/2R} e^{iπα·y/R}, where y = Sx and S maps η₁ to e₁.
//! The coefficient of φ_α is divided by
//!
//! d_α = (π²/R²)|α + e₁/2|² − ρ² − (2iπρ/R)(α₁ + 1/2),   |d_α| ≥ πρ/R.
//!
//! Type 2 is handled as type 1 for the frame (0, −η₁, −η₂).
//!
//! The iteration runs on the nodes of the rotated Q-grid that fall inside Ω. The remainder is
//! carried to Ω-grid nodes by trilinear interpolation of its envelope w·e^{−ik·x}, where
//! e^{ik·x} is the oscillatory factor of the kind, and multiplied back by the exact factor.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{invalid, CalError, Result};
use crate::field::{BoundaryField, ScalarField};
use crate::geometry::{dot, mat_vec, rotation_to_e1, scale, Frame, Grid, Mat3, Vec3};
use crate::linalg::Fft3;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CgoKind {
    Type1,
    Type2,
}

impl CgoKind {
    fn sign(self) -> f64 {
        match self {
            CgoKind::Type1 => 1.0,
            CgoKind::Type2 => -1.0,
        }
    }
}

/// Lattice index of FFT bin `j`; `None` for the Nyquist bin, which is left out.
pub fn alpha_of_bin(j: usize, big_m: usize) -> Option<i64> {
    let half = big_m / 2;
    if j < half {
        Some(j as i64)
    } else if j == half {
        None
    } else {
        Some(j as i64 - big_m as i64)
    }
}

pub fn denominator(alpha: [i64; 3], r: f64, rho: f64) -> C64 {
    let a0 = alpha[0] as f64 + 0.5;
    let sq = a0 * a0 + (alpha[1] * alpha[1] + alpha[2] * alpha[2]) as f64;
    C64::new(PI * PI / (r * r) * sq - rho * rho, -2.0 * PI * rho / r * a0)
}

/// Truncated Fourier lattice |α|_∞ ≤ M/2 − 1 with the denominators d_α in FFT bin order.
pub struct FourierLattice {
    pub big_m: usize,
    pub r: f64,
    pub rho: f64,
    pub alpha_max: i64,
    /// d_α per FFT bin; zero on bins containing a Nyquist index.
    pub denominators: Vec<C64>,
}

impl FourierLattice {
    pub fn new(r: f64, big_m: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return invalid(format!("ρ must be positive, got {rho}"));
        }
        let mut denominators = vec![ZERO; big_m.pow(3)];
        for a in 0..big_m {
            for b in 0..big_m {
                for c in 0..big_m {
                    if let (Some(x), Some(y), Some(z)) =
                        (alpha_of_bin(a, big_m), alpha_of_bin(b, big_m), alpha_of_bin(c, big_m))
                    {
                        let d = denominator([x, y, z], r, rho);
                        // Lower bound on the Fourier multiplier; cannot fail for real ρ > 0.
                        assert!(d.norm() >= PI * rho / r * (1.0 - 1e-14), "denominator floor violated");
                        denominators[(a * big_m + b) * big_m + c] = d;
                    }
                }
            }
        }
        Ok(FourierLattice { big_m, r, rho, alpha_max: big_m as i64 / 2 - 1, denominators })
    }

    pub fn min_abs(&self) -> f64 {
        self.denominators.iter().filter(|d| **d != ZERO).map(|d| d.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn floor(&self) -> f64 {
        PI * self.rho / self.r
    }
}

/// Reusable periodic solver for one (R, M, ρ).
pub struct PeriodicSolver {
    pub lattice: FourierLattice,
    fft: Fft3,
    /// e^{iπy₁/2R} per first-axis index.
    carrier: Vec<C64>,
    inv_d: Vec<C64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicReport {
    /// ‖d·ẑ − F̂‖/‖F̂‖ over the retained modes, recomputed from z in physical space.
    pub spectral_residual: f64,
    pub norm_z: f64,
    pub norm_f: f64,
    /// ‖z‖·πρ/R divided by ‖F‖; at most 1.
    pub bound_ratio: f64,
}

impl PeriodicSolver {
    pub fn new(r: f64, big_m: usize, rho: f64) -> Result<Self> {
        let lattice = FourierLattice::new(r, big_m, rho)?;
        let h = 2.0 * r / big_m as f64;
        let carrier = (0..big_m)
            .map(|a| {
                let y1 = -r + a as f64 * h;
                C64::from_polar(1.0, PI * y1 / (2.0 * r))
            })
            .collect();
        let inv_d = lattice.denominators.iter().map(|d| if *d == ZERO { ZERO } else { 1.0 / d }).collect();
        Ok(PeriodicSolver { lattice, fft: Fft3::new(big_m), carrier, inv_d })
    }

    fn demodulate(&self, f: &[C64]) -> Vec<C64> {
        let m2 = self.lattice.big_m.pow(2);
        f.iter().enumerate().map(|(g, v)| v * self.carrier[g / m2].conj()).collect()
    }

    /// z = 𝒦 F on the whole Q-grid.
    pub fn solve(&self, f: &[C64]) -> Vec<C64> {
        let m2 = self.lattice.big_m.pow(2);
        let mut g = self.demodulate(f);
        self.fft.forward(&mut g);
        for (v, d) in g.iter_mut().zip(&self.inv_d) {
            *v *= d;
        }
        self.fft.inverse(&mut g);
        for (i, v) in g.iter_mut().enumerate() {
            *v *= self.carrier[i / m2];
        }
        g
    }

    pub fn report(&self, f: &[C64], z: &[C64]) -> PeriodicReport {
        let mut fh = self.demodulate(f);
        let mut zh = self.demodulate(z);
        self.fft.forward(&mut fh);
        self.fft.forward(&mut zh);
        let (mut num, mut den) = (0.0, 0.0);
        for ((a, b), d) in zh.iter().zip(&fh).zip(&self.lattice.denominators) {
            if *d != ZERO {
                num += (a * d - b).norm_sqr();
                den += b.norm_sqr();
            }
        }
        let h3 = (2.0 * self.lattice.r / self.lattice.big_m as f64).powi(3);
        let norm_z = (h3 * z.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
        let norm_f = (h3 * f.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
        PeriodicReport {
            spectral_residual: if den == 0.0 { num.sqrt() } else { (num / den).sqrt() },
            norm_z,
            norm_f,
            bound_ratio: if norm_f == 0.0 { 0.0 } else { norm_z * self.lattice.floor() / norm_f },
        }
    }
}

/// Solves −Δz − 2ρ∂_{y₁}z − ρ²z = F for F given on the rotated Q-grid (y = Sx, Sη₁ = e₁).
pub fn periodic_solve(f: &[C64], rho: f64, eta1: Vec3, grid: &Grid) -> Result<(Vec<C64>, PeriodicReport)> {
    if !(rho > 0.0) {
        return invalid(format!("ρ must be positive, got {rho}"));
    }
    rotation_to_e1(eta1)?;
    if f.len() != grid.big_m.pow(3) {
        return Err(CalError::DimensionMismatch { expected: grid.big_m.pow(3), got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(CalError::NonFinite("periodic right-hand side".into()));
    }
    let s = PeriodicSolver::new(grid.r, grid.big_m, rho)?;
    let z = s.solve(f);
    let rep = s.report(f, &z);
    Ok((z, rep))
}

/// Smallest FFT-friendly even M with M ≥ max(32, 8Rρ/π).
pub fn recommended_big_m(r: f64, rho: f64) -> usize {
    let target = (8.0 * r * rho / PI).ceil().max(32.0) as usize;
    (target..)
        .find(|&n| {
            if n % 2 != 0 {
                return false;
            }
            let mut k = n;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .unwrap()
}

/// Geometry of the rotated Q-grid for one frame and kind.
struct RotatedGrid {
    big_m: usize,
    r: f64,
    big_h: f64,
    s: Mat3,
}

impl RotatedGrid {
    fn y(&self, g: usize) -> Vec3 {
        let m = self.big_m;
        let (a, b, c) = (g / (m * m), (g / m) % m, g % m);
        [-self.r + a as f64 * self.big_h, -self.r + b as f64 * self.big_h, -self.r + c as f64 * self.big_h]
    }

    fn x(&self, g: usize) -> Vec3 {
        // S is a symmetric reflection, so S* = S.
        mat_vec(&self.s, self.y(g))
    }

    /// Trilinear interpolation of a Q-grid array at physical point x.
    fn interpolate(&self, data: &[C64], x: Vec3) -> C64 {
        let y = mat_vec(&self.s, x);
        let m = self.big_m;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (y[a] + self.r) / self.big_h;
            let i = (s.floor() as i64).clamp(0, m as i64 - 2) as usize;
            base[a] = i;
            t[a] = s - i as f64;
        }
        let mut acc = ZERO;
        for c in 0..8 {
            let d = [(c >> 2) & 1, (c >> 1) & 1, c & 1];
            let w: f64 = (0..3).map(|a| if d[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
            acc += data[((base[0] + d[0]) * m + base[1] + d[1]) * m + base[2] + d[2]] * w;
        }
        acc
    }
}

#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub kind: CgoKind,
    pub frame: Frame,
    pub v: ScalarField,
    pub w: ScalarField,
    /// ‖w‖_{L²(Ω)} on the Q-grid nodes inside Ω.
    pub w_l2: f64,
    /// Discrete H² surrogate: L² of values plus all second differences, same nodes.
    pub w_h2: f64,
    /// ‖(−Δ_h + q)v‖ / (ρ²‖v‖) over interior Ω nodes.
    pub residual: f64,
    pub iterations: usize,
    /// ‖w_{k+1} − w_k‖_{L²(Ω)} per iteration.
    pub history: Vec<f64>,
    /// ‖w − 𝒦[F − q̃w]‖_{L²(Ω)} at the returned w.
    pub fixed_point_residual: f64,
    /// w_l2 ≤ 1, i.e. the fixed point lies in the unit ball.
    pub in_unit_ball: bool,
    /// Remainder on the rotated Q-grid.
    pub remainder_q: Vec<C64>,
    pub rotation: Mat3,
}

struct Setup {
    rg: RotatedGrid,
    mask: Vec<bool>,
    qt: Vec<C64>,
    f: Vec<C64>,
    /// Effective (η₁, oscillation vector k) after folding the kind into the frame.
    eta1: Vec3,
    k: Vec3,
}

fn setup(q: &ScalarField, frame: &Frame, kind: CgoKind, grid: &Grid) -> Result<Setup> {
    q.check_grid(grid)?;
    let sg = kind.sign();
    let eta1 = scale(frame.eta1, sg);
    let (k, xi_sq) = match kind {
        CgoKind::Type1 => {
            let e2 = scale(frame.eta2, frame.rho);
            ([e2[0] - frame.xi[0], e2[1] - frame.xi[1], e2[2] - frame.xi[2]], frame.xi_sq())
        }
        CgoKind::Type2 => (scale(frame.eta2, -frame.rho), 0.0),
    };
    let s = rotation_to_e1(eta1)?;
    let big_m = grid.big_m;
    let rg = RotatedGrid { big_m, r: grid.r, big_h: grid.big_h(), s };
    for c in 0..8 {
        let x = [0, 1, 2].map(|a| if (c >> a) & 1 == 1 { grid.l } else { -grid.l });
        let y = mat_vec(&s, x);
        if y.iter().any(|v| v.abs() >= grid.r - rg.big_h) {
            return invalid(format!("rotated Ω does not fit in Q with one cell to spare (corner {x:?})"));
        }
    }
    let n = big_m.pow(3);
    let mut mask = vec![false; n];
    let mut qt = vec![ZERO; n];
    let mut f = vec![ZERO; n];
    for g in 0..n {
        let x = rg.x(g);
        if x.iter().all(|v| v.abs() <= grid.l) {
            mask[g] = true;
            let qv = q.interpolate(grid, x).unwrap_or(ZERO);
            qt[g] = qv;
            f[g] = -(qv + xi_sq) * C64::from_polar(1.0, dot(k, x));
        }
    }
    Ok(Setup { rg, mask, qt, f, eta1, k })
}

fn masked_l2(mask: &[bool], h3: f64, a: &[C64], b: Option<&[C64]>) -> f64 {
    let s: f64 = match b {
        Some(b) => a.iter().zip(b).zip(mask).filter(|(_, m)| **m).map(|((x, y), _)| (x - y).norm_sqr()).sum(),
        None => a.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| x.norm_sqr()).sum(),
    };
    (h3 * s).sqrt()
}

fn h2_surrogate(mask: &[bool], big_m: usize, big_h: f64, w: &[C64]) -> f64 {
    let m = big_m;
    let st = [m * m, m, 1];
    let h2 = big_h * big_h;
    let mut acc = 0.0;
    for g in 0..w.len() {
        if !mask[g] {
            continue;
        }
        let ijk = [g / (m * m), (g / m) % m, g % m];
        if ijk.iter().any(|&t| t == 0 || t == m - 1) {
            continue;
        }
        let mut s = w[g].norm_sqr();
        for a in 0..3 {
            s += ((w[g + st[a]] - w[g] * 2.0 + w[g - st[a]]) / h2).norm_sqr();
            for b in a + 1..3 {
                let d = (w[g + st[a] + st[b]] - w[g + st[a] - st[b]] - w[g - st[a] + st[b]] + w[g - st[a] - st[b]])
                    / (4.0 * h2);
                s += 2.0 * d.norm_sqr();
            }
        }
        acc += s;
    }
    (acc * big_h.powi(3)).sqrt()
}

/// Builds v on the Ω-grid from a Q-grid remainder.
fn assemble(grid: &Grid, su: &Setup, frame: &Frame, wq: &[C64]) -> (ScalarField, ScalarField) {
    let k = su.k;
    let envelope: Vec<C64> = wq
        .iter()
        .enumerate()
        .map(|(g, v)| if *v == ZERO { ZERO } else { v * C64::from_polar(1.0, -dot(k, su.rg.x(g))) })
        .collect();
    let zero_w = wq.iter().all(|v| *v == ZERO);
    let n = grid.n_nodes();
    let mut v = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for g in 0..n {
        let x = grid.pos(g);
        let e = C64::from_polar(1.0, dot(k, x));
        let wx = if zero_w { ZERO } else { su.rg.interpolate(&envelope, x) * e };
        w.push(wx);
        v.push((e + wx) * (frame.rho * dot(su.eta1, x)).exp());
    }
    (ScalarField { m: grid.m, l: grid.l, values: v }, ScalarField { m: grid.m, l: grid.l, values: w })
}

/// ‖(−Δ_h + q)v‖ / (ρ²‖v‖) over interior nodes.
pub fn fd_residual(grid: &Grid, q: &ScalarField, v: &ScalarField, rho: f64) -> f64 {
    let m = grid.m;
    let st = [m * m, m, 1];
    let h2 = grid.h * grid.h;
    let (mut num, mut den) = (0.0, 0.0);
    for g in grid.interior_nodes() {
        let mut lap = -v.values[g] * 6.0;
        for s in st {
            lap += v.values[g + s] + v.values[g - s];
        }
        num += (-lap / h2 + q.values[g] * v.values[g]).norm_sqr();
        den += v.values[g].norm_sqr();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt() / (rho * rho)
    }
}

pub fn build_cgo(
    q: &ScalarField,
    frame: &Frame,
    kind: CgoKind,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<CgoSolution> {
    let su = setup(q, frame, kind, grid)?;
    let h3 = su.rg.big_h.powi(3);
    let n = su.f.len();
    let mut wq = vec![ZERO; n];
    let mut history = Vec::new();
    let mut fixed_point_residual = 0.0;
    let trivial = su.f.iter().all(|v| *v == ZERO) && su.qt.iter().all(|v| *v == ZERO);
    if !trivial {
        let solver = PeriodicSolver::new(grid.r, grid.big_m, frame.rho)?;
        let step = |w: &[C64]| -> Vec<C64> {
            let g: Vec<C64> = su.f.iter().zip(&su.qt).zip(w).map(|((f, q), w)| f - q * w).collect();
            solver.solve(&g)
        };
        let mut rising = 0;
        let mut converged = false;
        for _ in 0..max_iter {
            let next = step(&wq);
            let diff = masked_l2(&su.mask, h3, &next, Some(&wq));
            wq = next;
            if let Some(&prev) = history.last() {
                if prev > 0.0 && diff / prev >= 1.0 {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            history.push(diff);
            if diff <= tol {
                converged = true;
                break;
            }
            if rising >= 3 {
                let ratios = history.windows(2).map(|p| p[1] / p[0]).collect();
                return Err(CalError::NoContraction { rho: frame.rho, ratios });
            }
        }
        if !converged {
            return Err(CalError::MaxIter { max_iter, last_diff: history.last().copied().unwrap_or(f64::NAN) });
        }
        fixed_point_residual = masked_l2(&su.mask, h3, &step(&wq), Some(&wq));
    }
    Ok(finish(grid, q, su, frame, kind, wq, history, fixed_point_residual))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    grid: &Grid,
    q: &ScalarField,
    su: Setup,
    frame: &Frame,
    kind: CgoKind,
    wq: Vec<C64>,
    history: Vec<f64>,
    fixed_point_residual: f64,
) -> CgoSolution {
    let h3 = su.rg.big_h.powi(3);
    let (v, w) = assemble(grid, &su, frame, &wq);
    let w_l2 = masked_l2(&su.mask, h3, &wq, None);
    let w_h2 = h2_surrogate(&su.mask, grid.big_m, su.rg.big_h, &wq);
    let residual = fd_residual(grid, q, &v, frame.rho);
    CgoSolution {
        kind,
        frame: *frame,
        v,
        w,
        w_l2,
        w_h2,
        residual,
        iterations: history.len(),
        history,
        fixed_point_residual,
        in_unit_ball: w_l2 <= 1.0,
        remainder_q: wq,
        rotation: su.rg.s,
    }
}

/// The CGO ansatz with w ≡ 0, which needs no knowledge of q.
pub fn born_cgo(frame: &Frame, kind: CgoKind, grid: &Grid) -> Result<CgoSolution> {
    let zero = ScalarField::zeros(grid);
    let su = setup(&zero, frame, kind, grid)?;
    let wq = vec![ZERO; su.f.len()];
    Ok(finish(grid, &zero, su, frame, kind, wq, Vec::new(), 0.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub rho: f64,
    pub w_l2: f64,
    pub w_h2: f64,
    pub iterations: usize,
    pub residual: f64,
    pub in_unit_ball: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of log‖w‖ against log ρ; `None` when every ‖w‖ is exactly zero.
    pub l2_slope: Option<f64>,
    pub h2_slope: Option<f64>,
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if y.iter().all(|v| *v == 0.0) || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

pub fn decay_study(
    q: &ScalarField,
    xi: Vec3,
    rho_list: &[f64],
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<DecayTable> {
    if rho_list.len() < 3 || rho_list.windows(2).any(|p| p[1] <= p[0]) {
        return invalid("ρ list must be increasing with at least three entries");
    }
    let mut rows = Vec::new();
    for &rho in rho_list {
        let frame = Frame::new(xi, rho)?;
        let s = build_cgo(q, &frame, CgoKind::Type1, grid, tol, max_iter)?;
        rows.push(DecayRow {
            rho,
            w_l2: s.w_l2,
            w_h2: s.w_h2,
            iterations: s.iterations,
            residual: s.residual,
            in_unit_ball: s.in_unit_ball,
        });
    }
    let rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.w_l2).collect();
    let h2: Vec<f64> = rows.iter().map(|r| r.w_h2).collect();
    Ok(DecayTable { l2_slope: loglog_slope(&rhos, &l2), h2_slope: loglog_slope(&rhos, &h2), rows })
}

#[derive(Clone, Debug)]
pub struct CgoTraces {
    pub dirichlet: BoundaryField,
    /// Boundary values of the bracketed factor (oscillation + w), without the real exponential.
    pub factor: BoundaryField,
}

pub fn cgo_traces(sol: &CgoSolution, grid: &Grid) -> Result<CgoTraces> {
    sol.v.check_grid(grid)?;
    let dirichlet = sol.v.trace(grid);
    let sg = sol.kind.sign();
    let factor = BoundaryField {
        values: grid
            .boundary
            .iter()
            .zip(&dirichlet.values)
            .map(|(b, v)| v * (-sg * sol.frame.rho * dot(sol.frame.eta1, grid.pos(b.node))).exp())
            .collect(),
    };
    Ok(CgoTraces { dirichlet, factor })
}

/// Checks the factorisation v = e^{±ρη₁·x}(oscillation + w) nodewise; returns the max relative defect.
pub fn factorisation_defect(sol: &CgoSolution, grid: &Grid) -> f64 {
    let sg = sol.kind.sign();
    let f = &sol.frame;
    let k = match sol.kind {
        CgoKind::Type1 => {
            let e2 = scale(f.eta2, f.rho);
            [e2[0] - f.xi[0], e2[1] - f.xi[1], e2[2] - f.xi[2]]
        }
        CgoKind::Type2 => scale(f.eta2, -f.rho),
    };
    (0..grid.n_nodes())
        .map(|g| {
            let x = grid.pos(g);
            let amp = (sg * f.rho * dot(f.eta1, x)).exp();
            let want = (C64::from_polar(1.0, dot(k, x)) + sol.w.values[g]) * amp;
            (sol.v.values[g] - want).norm() / want.norm().max(amp)
        })
        .fold(0.0, f64::max)
}
