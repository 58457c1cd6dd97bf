//! Seven-point operators on the interior unknowns, their sparse direct or iterative
//! solution, and a 3-D FFT built from 1-D rustfft passes.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CalError, Result};
use crate::geometry::Grid;

/// Grids up to this size are factorised; larger ones go to Krylov solvers.
pub const DIRECT_MAX_M: usize = 33;
pub const ITER_TOL: f64 = 1e-10;
pub const RESIDUAL_LIMIT: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// h² times the discrete operator  u ↦ −div_h(c ∇_h u) + q u  restricted to interior nodes.
///
/// `coef[a][g]` is the coefficient on the edge from node g to its +e_a neighbour.
#[derive(Clone)]
pub struct Operator {
    pub m: usize,
    pub h: f64,
    pub coef: [Vec<f64>; 3],
    /// q at interior nodes, in unknown order.
    pub q: Vec<C64>,
}

impl Operator {
    pub fn laplacian(grid: &Grid, q: &[C64]) -> Self {
        let nn = grid.n_nodes();
        let q = grid.interior_nodes().map(|g| q[g]).collect();
        Operator {
            m: grid.m,
            h: grid.h,
            coef: [vec![1.0; nn], vec![1.0; nn], vec![1.0; nn]],
            q,
        }
    }

    /// Flux form with harmonic-mean face coefficients.
    pub fn conductivity(grid: &Grid, a: &[f64]) -> Self {
        let m = grid.m;
        let nn = grid.n_nodes();
        let strides = [m * m, m, 1];
        let mut coef = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
        for g in 0..nn {
            let ijk = grid.ijk(g);
            for ax in 0..3 {
                if ijk[ax] + 1 < m {
                    let (x, y) = (a[g], a[g + strides[ax]]);
                    coef[ax][g] = 2.0 * x * y / (x + y);
                }
            }
        }
        Operator {
            m,
            h: grid.h,
            coef,
            q: vec![ZERO; grid.n_interior()],
        }
    }

    pub fn n(&self) -> usize {
        self.m - 2
    }

    pub fn size(&self) -> usize {
        self.n().pow(3)
    }

    pub fn is_real(&self) -> bool {
        self.q.iter().all(|v| v.im == 0.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.q.iter().all(|v| v.im == 0.0 && v.re >= 0.0)
    }

    fn strides(&self) -> [usize; 3] {
        [self.m * self.m, self.m, 1]
    }

    /// Visits (row, column, value) of the matrix and (row, boundary node, value) of the
    /// coupling to Dirichlet data, which enters the right-hand side with a plus sign.
    fn for_each_entry(&self, mut inner: impl FnMut(usize, usize, C64), mut outer: impl FnMut(usize, usize, f64)) {
        let m = self.m;
        let n = self.n();
        let h2 = self.h * self.h;
        let st = self.strides();
        let id = |i: usize, j: usize, k: usize| ((i - 1) * n + (j - 1)) * n + (k - 1);
        for i in 1..m - 1 {
            for j in 1..m - 1 {
                for k in 1..m - 1 {
                    let g = (i * m + j) * m + k;
                    let p = id(i, j, k);
                    let ijk = [i, j, k];
                    let mut diag = self.q[p] * h2;
                    for ax in 0..3 {
                        for up in [false, true] {
                            let (nb, c) = if up {
                                (g + st[ax], self.coef[ax][g])
                            } else {
                                (g - st[ax], self.coef[ax][g - st[ax]])
                            };
                            diag += c;
                            let t = if up { ijk[ax] + 1 } else { ijk[ax] - 1 };
                            if t == 0 || t == m - 1 {
                                outer(p, nb, c);
                            } else {
                                let mut nijk = ijk;
                                nijk[ax] = t;
                                inner(p, id(nijk[0], nijk[1], nijk[2]), C64::new(-c, 0.0));
                            }
                        }
                    }
                    inner(p, p, diag);
                }
            }
        }
    }

    /// Couplings (interior unknown, boundary node, coefficient) to Dirichlet data.
    pub fn dirichlet_couplings(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        self.for_each_entry(|_, _, _| {}, |p, nb, c| out.push((p, nb, c)));
        out
    }

    /// Right-hand side for Dirichlet data given on all nodes (only boundary entries are read).
    pub fn rhs_from_dirichlet(&self, node_values: &[C64]) -> Vec<C64> {
        let mut b = vec![ZERO; self.size()];
        self.for_each_entry(|_, _, _| {}, |p, nb, c| b[p] += node_values[nb] * c);
        b
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.size()];
        self.for_each_entry(|p, c, v| out[p] += v * u[c], |_, _, _| {});
        out
    }

    fn diagonal(&self) -> Vec<C64> {
        let mut d = vec![ZERO; self.size()];
        self.for_each_entry(|p, c, v| if p == c { d[p] = v }, |_, _, _| {});
        d
    }

    fn real_matrix(&self) -> SparseColMat<usize, f64> {
        let mut t = Vec::with_capacity(7 * self.size());
        self.for_each_entry(|p, c, v| t.push(Triplet::new(p, c, v.re)), |_, _, _| {});
        let n = self.size();
        SparseColMat::try_new_from_triplets(n, n, &t).expect("valid triplets")
    }

    fn complex_matrix(&self) -> SparseColMat<usize, C64> {
        let mut t = Vec::with_capacity(7 * self.size());
        self.for_each_entry(|p, c, v| t.push(Triplet::new(p, c, v)), |_, _, _| {});
        let n = self.size();
        SparseColMat::try_new_from_triplets(n, n, &t).expect("valid triplets")
    }

    pub fn relative_residual(&self, u: &[C64], b: &[C64]) -> f64 {
        let au = self.apply(u);
        let num: f64 = au.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

enum Factor {
    RealLlt(Llt<usize, f64>),
    RealLu(Lu<usize, f64>),
    ComplexLu(Lu<usize, C64>),
    Iterative,
}

pub struct InteriorSolver {
    pub op: Operator,
    factor: Factor,
    diag: Vec<C64>,
}

impl InteriorSolver {
    pub fn new(op: Operator) -> Result<Self> {
        let direct = op.m <= DIRECT_MAX_M;
        Self::with_mode(op, direct)
    }

    pub fn with_mode(op: Operator, direct: bool) -> Result<Self> {
        let diag = op.diagonal();
        let factor = if !direct {
            Factor::Iterative
        } else if op.is_real() {
            let a = op.real_matrix();
            match a.sp_cholesky(Side::Lower) {
                Ok(l) => Factor::RealLlt(l),
                Err(_) => Factor::RealLu(
                    a.sp_lu()
                        .map_err(|e| CalError::NonSolvable(format!("sparse LU failed: {e:?}")))?,
                ),
            }
        } else {
            Factor::ComplexLu(
                op.complex_matrix()
                    .sp_lu()
                    .map_err(|e| CalError::NonSolvable(format!("sparse LU failed: {e:?}")))?,
            )
        };
        Ok(InteriorSolver { op, factor, diag })
    }

    pub fn is_direct(&self) -> bool {
        !matches!(self.factor, Factor::Iterative)
    }

    /// Solves in place for a block of real right-hand sides (columns). Real operators only.
    pub fn solve_real_block(&self, block: &mut Mat<f64>) -> Result<()> {
        match &self.factor {
            Factor::RealLlt(f) => f.solve_in_place(block.as_mut()),
            Factor::RealLu(f) => f.solve_in_place(block.as_mut()),
            _ => {
                for c in 0..block.ncols() {
                    let b: Vec<C64> = (0..block.nrows()).map(|r| C64::new(block[(r, c)], 0.0)).collect();
                    let x = self.solve_unchecked(&b)?;
                    for (r, v) in x.iter().enumerate() {
                        block[(r, c)] = v.re;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_unchecked(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = b.len();
        match &self.factor {
            Factor::RealLlt(_) | Factor::RealLu(_) => {
                let mut blk = Mat::<f64>::zeros(n, 2);
                for (r, v) in b.iter().enumerate() {
                    blk[(r, 0)] = v.re;
                    blk[(r, 1)] = v.im;
                }
                self.solve_real_block(&mut blk)?;
                Ok((0..n).map(|r| C64::new(blk[(r, 0)], blk[(r, 1)])).collect())
            }
            Factor::ComplexLu(f) => {
                let mut blk = Mat::<C64>::zeros(n, 1);
                for (r, v) in b.iter().enumerate() {
                    blk[(r, 0)] = *v;
                }
                f.solve_in_place(blk.as_mut());
                Ok((0..n).map(|r| blk[(r, 0)]).collect())
            }
            Factor::Iterative => {
                if self.op.is_nonnegative() {
                    let re: Vec<f64> = b.iter().map(|v| v.re).collect();
                    let im: Vec<f64> = b.iter().map(|v| v.im).collect();
                    let xr = self.pcg(&re)?;
                    let xi = self.pcg(&im)?;
                    Ok(xr.into_iter().zip(xi).map(|(r, i)| C64::new(r, i)).collect())
                } else {
                    self.bicgstab(b)
                }
            }
        }
    }

    /// Solves and checks the relative residual against [`RESIDUAL_LIMIT`].
    pub fn solve(&self, b: &[C64]) -> Result<(Vec<C64>, f64)> {
        let x = self.solve_unchecked(b)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CalError::NonSolvable("non-finite solution".into()));
        }
        let res = self.op.relative_residual(&x, b);
        if !(res <= RESIDUAL_LIMIT) {
            return Err(CalError::NonSolvable(format!("relative residual {res:e}")));
        }
        Ok((x, res))
    }

    fn pcg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let apply = |u: &[f64]| -> Vec<f64> {
            let uc: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
            self.op.apply(&uc).into_iter().map(|v| v.re).collect()
        };
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d.re).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..20 * n.max(100) {
            let ap = apply(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(CalError::NonSolvable("operator is not positive definite".into()));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= ITER_TOL * bnorm {
                return Ok(x);
            }
            z = r.iter().zip(&self.diag).map(|(a, d)| a / d.re).collect();
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(CalError::NonSolvable("conjugate gradients did not converge".into()))
    }

    fn bicgstab(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = b.len();
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let dotu = |a: &[C64], c: &[C64]| a.iter().zip(c).map(|(x, y)| x.conj() * y).sum::<C64>();
        let prec = |v: &[C64]| -> Vec<C64> { v.iter().zip(&self.diag).map(|(a, d)| a / d).collect() };
        let bnorm = norm(b);
        let mut x = vec![ZERO; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        let mut v = vec![ZERO; n];
        let mut p = vec![ZERO; n];
        for _ in 0..20 * n.max(100) {
            let rho_new = dotu(&r0, &r);
            if rho_new.norm() == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let y = prec(&p);
            v = self.op.apply(&y);
            alpha = rho / dotu(&r0, &v);
            let s: Vec<C64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
            if norm(&s) <= ITER_TOL * bnorm {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                return Ok(x);
            }
            let z = prec(&s);
            let t = self.op.apply(&z);
            let tt = dotu(&t, &t);
            omega = if tt.norm() == 0.0 { ZERO } else { dotu(&t, &s) / tt };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= ITER_TOL * bnorm {
                return Ok(x);
            }
            if omega.norm() == 0.0 {
                break;
            }
        }
        Err(CalError::NonSolvable("BiCGSTAB did not converge".into()))
    }
}

/// In-place 3-D FFT on an M³ array in (i, j, k) order with k fastest.
pub struct Fft3 {
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    fn pass(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        // Contiguous axis.
        for line in data.chunks_exact_mut(m) {
            fft.process_with_scratch(line, &mut scratch);
        }
        let mut buf = vec![ZERO; m];
        for (stride, count_outer, inner) in [(m, m, m), (m * m, 1, m * m)] {
            for o in 0..count_outer {
                let base0 = o * m * stride;
                for t in 0..inner.min(stride) {
                    let base = base0 + t;
                    for s in 0..m {
                        buf[s] = data[base + s * stride];
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    for s in 0..m {
                        data[base + s * stride] = buf[s];
                    }
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.pass(data, &self.fwd);
    }

    /// Inverse transform including the 1/M³ normalisation.
    pub fn inverse(&self, data: &mut [C64]) {
        self.pass(data, &self.inv);
        let s = 1.0 / (self.m as f64).powi(3);
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    #[test]
    fn fft_round_trip_and_single_mode() {
        let m = 8;
        let f = Fft3::new(m);
        let mut d: Vec<C64> = (0..m * m * m)
            .map(|g| {
                let (i, j, k) = (g / 64, (g / 8) % 8, g % 8);
                let ph = 2.0 * std::f64::consts::PI * (i as f64 + 2.0 * j as f64 + 3.0 * k as f64) / m as f64;
                C64::new(ph.cos(), ph.sin())
            })
            .collect();
        let orig = d.clone();
        f.forward(&mut d);
        let peak = (1 * m + 2) * m + 3;
        assert!((d[peak] - C64::new(512.0, 0.0)).norm() < 1e-9);
        let rest: f64 = d.iter().enumerate().filter(|(g, _)| *g != peak).map(|(_, v)| v.norm()).sum();
        assert!(rest < 1e-8);
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn direct_and_iterative_agree() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let q: Vec<C64> = (0..g.n_nodes()).map(|n| C64::new(1.0 + g.pos(n)[0], 0.0)).collect();
        let phi: Vec<C64> = (0..g.n_nodes()).map(|n| C64::new(g.pos(n)[1], g.pos(n)[2])).collect();
        let op = Operator::laplacian(&g, &q);
        let b = op.rhs_from_dirichlet(&phi);
        let (x1, r1) = InteriorSolver::with_mode(op.clone(), true).unwrap().solve(&b).unwrap();
        let (x2, r2) = InteriorSolver::with_mode(op.clone(), false).unwrap().solve(&b).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-9);
        let d = x1.iter().zip(&x2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");

        let qc: Vec<C64> = q.iter().map(|v| v + C64::new(0.0, 0.5)).collect();
        let op = Operator::laplacian(&g, &qc);
        let b = op.rhs_from_dirichlet(&phi);
        let (x1, _) = InteriorSolver::with_mode(op.clone(), true).unwrap().solve(&b).unwrap();
        let (x2, _) = InteriorSolver::with_mode(op, false).unwrap().solve(&b).unwrap();
        let d = x1.iter().zip(&x2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");
    }
}
