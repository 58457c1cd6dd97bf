//! Discrete checks of the directional Poincaré inequality, the conjugated identity-based
//! inequality for P = Δ + 2ρη₁·∇ + ρ², and the weighted Carleman estimate.
//!
//! Volume sums run over interior nodes with weight h³ (test functions vanish on ∂Ω).
//! Boundary sums are taken face by face: an edge or corner node contributes once per face
//! containing it, with that face's normal and trapezoid weight. Edge and corner contributions
//! are also reported on their own.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{invalid, CalError, Result};
use crate::field::ScalarField;
use crate::geometry::{dot, Grid, Vec3};
use crate::rng::Lcg64;

/// Largest admissible exponent 2ρ·L√3 of the weight e^{−2ρx·η₁}.
pub const WEIGHT_EXPONENT_CAP: f64 = 700.0;

fn check_zero_trace(w: &ScalarField, grid: &Grid) -> Result<()> {
    w.check_grid(grid)?;
    let bmax = grid.boundary.iter().map(|b| w.values[b.node].norm()).fold(0.0, f64::max);
    if bmax > 1e-12 * w.max_abs().max(f64::MIN_POSITIVE) {
        return Err(CalError::NonzeroTrace(bmax));
    }
    Ok(())
}

/// Radius of the smallest ball about the origin containing Ω.
pub fn ball_radius(grid: &Grid) -> f64 {
    grid.l * 3f64.sqrt()
}

/// Centred difference η·∇_h at an interior node.
fn directional(vals: &[C64], grid: &Grid, g: usize, eta: Vec3) -> C64 {
    let st = [grid.m * grid.m, grid.m, 1];
    (0..3).map(|a| (vals[g + st[a]] - vals[g - st[a]]) * (eta[a] / (2.0 * grid.h))).sum()
}

fn laplacian(vals: &[C64], grid: &Grid, g: usize) -> C64 {
    let st = [grid.m * grid.m, grid.m, 1];
    let mut s = -vals[g] * 6.0;
    for d in st {
        s += vals[g + d] + vals[g - d];
    }
    s / (grid.h * grid.h)
}

/// One (node, face) incidence: outward normal axis/sign, trapezoid weight on that face.
struct FaceTerm {
    node: usize,
    axis: usize,
    sign: f64,
    weight: f64,
    edge: bool,
}

fn face_terms(grid: &Grid) -> Vec<FaceTerm> {
    let last = grid.m - 1;
    let h = grid.h;
    let tw = |t: usize| if t == 0 || t == last { 0.5 * h } else { h };
    let mut out = Vec::new();
    for b in &grid.boundary {
        for ax in 0..3 {
            let t = b.ijk[ax];
            if t == 0 || t == last {
                let (u, v) = match ax {
                    0 => (b.ijk[1], b.ijk[2]),
                    1 => (b.ijk[0], b.ijk[2]),
                    _ => (b.ijk[0], b.ijk[1]),
                };
                out.push(FaceTerm {
                    node: b.node,
                    axis: ax,
                    sign: if t == 0 { -1.0 } else { 1.0 },
                    weight: tw(u) * tw(v),
                    edge: b.faces > 1,
                });
            }
        }
    }
    out
}

fn face_normal_derivative(vals: &[C64], grid: &Grid, f: &FaceTerm) -> C64 {
    let st = [grid.m * grid.m, grid.m, 1][f.axis];
    let g = f.node;
    let (g1, g2) = if f.sign > 0.0 { (g - st, g - 2 * st) } else { (g + st, g + 2 * st) };
    (vals[g] * 3.0 - vals[g1] * 4.0 + vals[g2]) / (2.0 * grid.h)
}

/// (Σ|w|²h³, 4R²·Σ|η₁·∇_h w|²h³) over interior nodes with R = L√3.
pub fn poincare_ratio(w: &ScalarField, eta1: Vec3, grid: &Grid) -> Result<(f64, f64)> {
    check_zero_trace(w, grid)?;
    let h3 = grid.h.powi(3);
    let r = ball_radius(grid);
    let (mut lhs, mut grad) = (0.0, 0.0);
    for g in grid.interior_nodes() {
        lhs += w.values[g].norm_sqr() * h3;
        grad += directional(&w.values, grid, g, eta1).norm_sqr() * h3;
    }
    Ok((lhs, 4.0 * r * r * grad))
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundarySplit {
    pub total: f64,
    /// Part coming from edge and corner nodes.
    pub edges: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugatedReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Σ_{ν·η₁ ≥ 0} w_f |∂_νw|² |η₁·ν|.
    pub shadowed: BoundarySplit,
    /// Σ_{ν·η₁ ≤ 0} w_f |∂_νw|² |η₁·ν|.
    pub illuminated: BoundarySplit,
    /// 2ρ Σ Δ_h w (η₁·∇_h w) h³.
    pub i1_volume: f64,
    /// ρ Σ w_f |∂_νw|² (η₁·ν).
    pub i1_boundary: f64,
    /// 2ρ³ Σ w (η₁·∇_h w) h³.
    pub i2_volume: f64,
}

impl ConjugatedReport {
    /// max(0, lhs − rhs) / max(rhs, tiny).
    pub fn defect(&self) -> f64 {
        (self.lhs - self.rhs).max(0.0) / self.rhs.max(f64::MIN_POSITIVE)
    }
}

fn check_rho(rho: f64, grid: &Grid) -> Result<()> {
    if !(rho > 0.0) {
        return invalid(format!("ρ must be positive, got {rho}"));
    }
    if 2.0 * rho * ball_radius(grid) > WEIGHT_EXPONENT_CAP {
        return invalid(format!("ρ = {rho} overflows the weight e^(2ρL√3); cap is 2ρL√3 ≤ {WEIGHT_EXPONENT_CAP}"));
    }
    Ok(())
}

/// Both sides of ρ²‖η₁·∇w‖² + 2ρ∫₊|∂_νw|²|η₁·ν| ≤ ‖Pw‖² + 2ρ∫₋|∂_νw|²|η₁·ν|, w = e^{−ρx·η₁}v.
pub fn conjugated_inequality(v: &ScalarField, rho: f64, eta1: Vec3, grid: &Grid) -> Result<ConjugatedReport> {
    check_zero_trace(v, grid)?;
    check_rho(rho, grid)?;
    if !v.is_real() {
        return invalid("the conjugated inequality is evaluated for real v");
    }
    let w: Vec<C64> = (0..grid.n_nodes()).map(|g| v.values[g] * (-rho * dot(eta1, grid.pos(g))).exp()).collect();
    let h3 = grid.h.powi(3);
    let (mut grad2, mut pw2, mut i1v, mut i2v) = (0.0, 0.0, 0.0, 0.0);
    for g in grid.interior_nodes() {
        let d = directional(&w, grid, g, eta1).re;
        let lap = laplacian(&w, grid, g).re;
        let pw = lap + 2.0 * rho * d + rho * rho * w[g].re;
        grad2 += d * d * h3;
        pw2 += pw * pw * h3;
        i1v += 2.0 * rho * lap * d * h3;
        i2v += 2.0 * rho.powi(3) * w[g].re * d * h3;
    }
    let mut sh = BoundarySplit { total: 0.0, edges: 0.0 };
    let mut il = BoundarySplit { total: 0.0, edges: 0.0 };
    let mut i1b = 0.0;
    for f in face_terms(grid) {
        let c = eta1[f.axis] * f.sign;
        let dn = face_normal_derivative(&w, grid, &f).norm_sqr();
        let t = f.weight * dn * c.abs();
        i1b += rho * f.weight * dn * c;
        for (side, on) in [(&mut sh, c >= 0.0), (&mut il, c <= 0.0)] {
            if on {
                side.total += t;
                if f.edge {
                    side.edges += t;
                }
            }
        }
    }
    Ok(ConjugatedReport {
        lhs: rho * rho * grad2 + 2.0 * rho * sh.total,
        rhs: pw2 + 2.0 * rho * il.total,
        shadowed: sh,
        illuminated: il,
        i1_volume: i1v,
        i1_boundary: i1b,
        i2_volume: i2v,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlemanReport {
    pub lhs: f64,
    pub rhs: f64,
    pub c_used: f64,
    pub rho2: f64,
    /// lhs ≤ C·rhs.
    pub holds: bool,
    /// ρ < ρ₂: the estimate is evaluated but not covered by the threshold.
    pub below_threshold: bool,
    pub shadowed: BoundarySplit,
    pub illuminated: BoundarySplit,
}

/// Constants of the weighted estimate: C₀ for q = 0 and the threshold offset ρ₁.
///
/// For q ≠ 0 the estimate is checked with 4C₀ above ρ₂ = 2√C₀‖q‖_∞ + ρ₁: above that threshold
/// the q = 0 estimate absorbs the term 2C₀‖q‖²_∞ of the potential at the cost of a factor 4.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CarlemanConstants {
    pub c0: f64,
    pub rho1: f64,
}

impl CarlemanConstants {
    pub fn c_for(&self, q_sup: f64) -> f64 {
        if q_sup == 0.0 {
            self.c0
        } else {
            4.0 * self.c0
        }
    }

    pub fn rho2(&self, q_sup: f64) -> f64 {
        2.0 * self.c0.sqrt() * q_sup + self.rho1
    }
}

pub fn carleman_estimate(
    v: &ScalarField,
    q: &ScalarField,
    rho: f64,
    eta1: Vec3,
    grid: &Grid,
    consts: &CarlemanConstants,
) -> Result<CarlemanReport> {
    check_zero_trace(v, grid)?;
    q.check_grid(grid)?;
    check_rho(rho, grid)?;
    let q_sup = q.max_abs();
    let weight = |g: usize| (-2.0 * rho * dot(eta1, grid.pos(g))).exp();
    let h3 = grid.h.powi(3);
    let (mut a, mut d) = (0.0, 0.0);
    for g in grid.interior_nodes() {
        let wg = weight(g);
        a += wg * v.values[g].norm_sqr() * h3;
        let r = -laplacian(&v.values, grid, g) + q.values[g] * v.values[g];
        d += wg * r.norm_sqr() * h3;
    }
    let mut sh = BoundarySplit { total: 0.0, edges: 0.0 };
    let mut il = BoundarySplit { total: 0.0, edges: 0.0 };
    for f in face_terms(grid) {
        let c = eta1[f.axis] * f.sign;
        let t = f.weight * weight(f.node) * face_normal_derivative(&v.values, grid, &f).norm_sqr() * c.abs();
        for (side, on) in [(&mut sh, c >= 0.0), (&mut il, c <= 0.0)] {
            if on {
                side.total += t;
                if f.edge {
                    side.edges += t;
                }
            }
        }
    }
    let lhs = rho * rho * a + rho * sh.total;
    let rhs = d + rho * il.total;
    let c_used = consts.c_for(q_sup);
    let rho2 = consts.rho2(q_sup);
    Ok(CarlemanReport {
        lhs,
        rhs,
        c_used,
        rho2,
        holds: lhs <= c_used * rhs,
        below_threshold: rho < rho2,
        shadowed: sh,
        illuminated: il,
    })
}

/// Π_i sin(π(x_i + L)/2L), zero on ∂Ω.
pub fn sine_mode(grid: &Grid) -> ScalarField {
    let pi = std::f64::consts::PI;
    let mut f = ScalarField::from_real_fn(grid, |x| {
        x.iter().map(|t| (pi * (t + grid.l) / (2.0 * grid.l)).sin()).product()
    });
    for b in &grid.boundary {
        f.values[b.node] = C64::new(0.0, 0.0);
    }
    f
}

/// Seeded smooth test functions A·Π(L² − x_i²)·exp(−|x − c|²/2s²), zero on ∂Ω.
///
/// Per sample the generator draws, in order: c₁, c₂, c₃ uniform in [−L/2, L/2],
/// s uniform in [0.2L, 0.8L], A uniform in [0.5, 2].
pub fn zero_trace_corpus(grid: &Grid, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = Lcg64::new(seed);
    let l = grid.l;
    (0..count)
        .map(|_| {
            let c = [rng.range(-l / 2.0, l / 2.0), rng.range(-l / 2.0, l / 2.0), rng.range(-l / 2.0, l / 2.0)];
            let s = rng.range(0.2 * l, 0.8 * l);
            let amp = rng.range(0.5, 2.0);
            let mut f = ScalarField::from_real_fn(grid, |x| {
                let r2: f64 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum();
                amp * (0..3).map(|i| l * l - x[i] * x[i]).product::<f64>() * (-r2 / (2.0 * s * s)).exp()
            });
            for b in &grid.boundary {
                f.values[b.node] = C64::new(0.0, 0.0);
            }
            f
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub c0: f64,
    /// Largest lhs/rhs observed for q = 0.
    pub max_ratio: f64,
    /// 2·(4R²) + 1 with R = L√3, the constant obtained by chaining the two inequalities.
    pub chained_constant: f64,
    pub samples: usize,
    pub rhos: Vec<f64>,
}

impl Calibration {
    /// C₀ with ρ₁ set to the smallest calibrated ρ.
    pub fn constants(&self) -> CarlemanConstants {
        CarlemanConstants { c0: self.c0, rho1: self.rhos.iter().cloned().fold(f64::INFINITY, f64::min) }
    }
}

/// Smallest power of two C₀ with lhs ≤ C₀·rhs for q = 0 over the corpus and ρ values.
pub fn calibrate(grid: &Grid, corpus: &[ScalarField], rhos: &[f64], eta1: Vec3) -> Result<Calibration> {
    let zero = ScalarField::zeros(grid);
    let probe = CarlemanConstants { c0: 1.0, rho1: 0.0 };
    let mut max_ratio: f64 = 0.0;
    for v in corpus {
        for &rho in rhos {
            let r = carleman_estimate(v, &zero, rho, eta1, grid, &probe)?;
            if r.rhs > 0.0 {
                max_ratio = max_ratio.max(r.lhs / r.rhs);
            }
        }
    }
    let mut c0 = 1.0;
    while c0 < max_ratio {
        c0 *= 2.0;
    }
    let rb = ball_radius(grid);
    Ok(Calibration {
        c0,
        max_ratio,
        chained_constant: 2.0 * 4.0 * rb * rb + 1.0,
        samples: corpus.len(),
        rhos: rhos.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    #[test]
    fn zero_function() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let z = ScalarField::zeros(&g);
        assert_eq!(poincare_ratio(&z, [1.0, 0.0, 0.0], &g).unwrap(), (0.0, 0.0));
        let c = conjugated_inequality(&z, 4.0, [1.0, 0.0, 0.0], &g).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let k = CarlemanConstants { c0: 2.0, rho1: 0.0 };
        let r = carleman_estimate(&z, &z, 4.0, [1.0, 0.0, 0.0], &g, &k).unwrap();
        assert_eq!((r.lhs, r.rhs, r.c_used), (0.0, 0.0, 2.0));
    }

    #[test]
    fn nonzero_trace_is_rejected() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let one = ScalarField::from_real_fn(&g, |_| 1.0);
        assert!(matches!(poincare_ratio(&one, [1.0, 0.0, 0.0], &g), Err(CalError::NonzeroTrace(_))));
    }

    #[test]
    fn sine_mode_ratio() {
        // Continuum ratio (2L/π)²; the interior centred sums approach it at first order.
        let exact = (2.0 / std::f64::consts::PI).powi(2);
        let err = |m: usize| {
            let g = make_grid(2.0, 1.0, m, 16).unwrap();
            let (lhs, rhs) = poincare_ratio(&sine_mode(&g), [1.0, 0.0, 0.0], &g).unwrap();
            assert!(lhs <= rhs);
            (lhs / (rhs / 12.0) - exact).abs() / exact
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e2 < 0.05 && e1 / e2 > 1.8, "{e1} {e2}");
    }

    #[test]
    fn corpus_is_deterministic() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let a = zero_trace_corpus(&g, 3, 11);
        let b = zero_trace_corpus(&g, 3, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|f| f.max_abs() > 0.0));
    }

    #[test]
    fn rho_cap() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let w = sine_mode(&g);
        assert!(conjugated_inequality(&w, 250.0, [1.0, 0.0, 0.0], &g).is_err());
    }
}
