use num_complex::Complex64 as C64;

use crate::error::{invalid, CalError, Result};
use crate::geometry::{Grid, Vec3};

/// Complex values on every node of the Ω-grid, in flat node order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub m: usize,
    pub l: f64,
    pub values: Vec<C64>,
}

/// Complex values on the boundary nodes, in boundary order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField {
    pub values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            m: grid.m,
            l: grid.l,
            values: vec![C64::new(0.0, 0.0); grid.n_nodes()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(CalError::DimensionMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CalError::NonFinite("field values".into()));
        }
        Ok(ScalarField {
            m: grid.m,
            l: grid.l,
            values,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Vec3) -> C64) -> Self {
        ScalarField {
            m: grid.m,
            l: grid.l,
            values: (0..grid.n_nodes()).map(|g| f(grid.pos(g))).collect(),
        }
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(Vec3) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.m != grid.m || self.values.len() != grid.n_nodes() {
            return Err(CalError::DimensionMismatch {
                expected: grid.n_nodes(),
                got: self.values.len(),
            });
        }
        if self.l != grid.l {
            return invalid(format!("field has L = {}, grid has L = {}", self.l, grid.l));
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self, grid: &Grid) -> BoundaryField {
        BoundaryField {
            values: grid.boundary.iter().map(|b| self.values[b.node]).collect(),
        }
    }

    /// Trapezoid L² norm over Ω.
    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(g, v)| v.norm_sqr() * grid.volume_weight(g))
            .sum::<f64>()
            .sqrt()
    }

    /// Trapezoid quadrature of the field over Ω.
    pub fn integrate(&self, grid: &Grid) -> C64 {
        self.values
            .iter()
            .enumerate()
            .map(|(g, v)| v * grid.volume_weight(g))
            .sum()
    }

    /// Trilinear interpolation at a point of the closed cube; `None` outside it.
    pub fn interpolate(&self, grid: &Grid, x: Vec3) -> Option<C64> {
        let m = grid.m;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] + grid.l) / grid.h;
            if !(s >= -1e-12 && s <= (m - 1) as f64 + 1e-12) {
                return None;
            }
            let i = (s.floor().max(0.0) as usize).min(m - 2);
            base[a] = i;
            t[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..8 {
            let d = [(c >> 2) & 1, (c >> 1) & 1, c & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if d[a] == 1 { t[a] } else { 1.0 - t[a] };
            }
            if w != 0.0 {
                let g = grid.flat(base[0] + d[0], base[1] + d[1], base[2] + d[2]);
                acc += self.values[g] * w;
            }
        }
        Some(acc)
    }
}

impl BoundaryField {
    pub fn zeros(grid: &Grid) -> Self {
        BoundaryField {
            values: vec![C64::new(0.0, 0.0); grid.n_boundary()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Vec3) -> C64) -> Self {
        BoundaryField {
            values: grid.boundary.iter().map(|b| f(grid.pos(b.node))).collect(),
        }
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(Vec3) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.n_boundary() {
            return Err(CalError::DimensionMismatch {
                expected: grid.n_boundary(),
                got: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Σ_b weight_b · self_b · other_b over the given boundary positions (no conjugation).
    pub fn weighted_pairing(&self, other: &BoundaryField, grid: &Grid, subset: Option<&[usize]>) -> C64 {
        let term = |b: usize| self.values[b] * other.values[b] * grid.boundary[b].weight;
        match subset {
            Some(s) => s.iter().map(|&b| term(b)).sum(),
            None => (0..self.values.len()).map(term).sum(),
        }
    }
}
