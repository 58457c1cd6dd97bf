//! Grids on the cube Ω = (−L, L)³ inside the periodic box Q = (−R, R)³, boundary
//! metadata, reconstruction frames and the boundary split used for partial data.
//!
//! Node ordering: node (i, j, k) sits at x = (x_i, x_j, x_k) with x_i = −L + i·h and has
//! flat index (i·m + j)·m + k, so k runs fastest. Boundary nodes are listed face by face
//! in the order −x, +x, −y, +y, −z, +z, lexicographically inside each face, and a node
//! shared by several faces is listed once, under the first face that contains it.

use serde::Serialize;

use crate::error::{invalid, CalError, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn mat_vec(s: &Mat3, x: Vec3) -> Vec3 {
    [dot(s[0], x), dot(s[1], x), dot(s[2], x)]
}

pub fn mat_t_vec(s: &Mat3, y: Vec3) -> Vec3 {
    [
        s[0][0] * y[0] + s[1][0] * y[1] + s[2][0] * y[2],
        s[0][1] * y[0] + s[1][1] * y[1] + s[2][1] * y[2],
        s[0][2] * y[0] + s[1][2] * y[1] + s[2][2] * y[2],
    ]
}

/// One node of ∂Ω.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryNode {
    /// Flat index into the Ω-grid.
    pub node: usize,
    pub ijk: [usize; 3],
    /// Axis of the face the node was assigned to.
    pub axis: usize,
    /// +1.0 on the upper face of `axis`, −1.0 on the lower one.
    pub sign: f64,
    /// Trapezoid weight summed over every face containing the node.
    pub weight: f64,
    /// Number of faces containing the node (1 face interior, 2 edge, 3 corner).
    pub faces: u8,
}

impl BoundaryNode {
    pub fn normal(&self) -> Vec3 {
        let mut n = [0.0; 3];
        n[self.axis] = self.sign;
        n
    }

    pub fn is_edge(&self) -> bool {
        self.faces > 1
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub r: f64,
    pub l: f64,
    pub m: usize,
    pub big_m: usize,
    pub h: f64,
    pub boundary: Vec<BoundaryNode>,
    /// Flat node index to boundary position, `usize::MAX` for interior nodes.
    boundary_pos: Vec<usize>,
}

#[derive(Serialize)]
pub struct GridManifest {
    pub r: f64,
    pub l: f64,
    pub m: usize,
    pub big_m: usize,
    pub h: f64,
    pub boundary_nodes: usize,
    pub node_order: &'static str,
    pub boundary_order: &'static str,
}

pub const NODE_ORDER: &str = "flat = (i*m + j)*m + k, x_i = -L + i*h";
pub const BOUNDARY_ORDER: &str =
    "faces -x,+x,-y,+y,-z,+z; lexicographic within a face; shared nodes listed under the first face";

pub fn make_grid(r: f64, l: f64, m: usize, big_m: usize) -> Result<Grid> {
    if !(r.is_finite() && l.is_finite()) || l <= 0.0 {
        return invalid(format!("need finite R and L > 0, got R = {r}, L = {l}"));
    }
    if l >= r {
        return Err(CalError::DomainNotInside { l, r });
    }
    if m < 9 {
        return invalid(format!("m must be at least 9, got {m}"));
    }
    if big_m < 16 || big_m % 2 != 0 {
        return invalid(format!("M must be even and at least 16, got {big_m}"));
    }
    let h = 2.0 * l / (m - 1) as f64;
    let last = m - 1;
    let mut boundary_pos = vec![usize::MAX; m * m * m];
    let mut boundary = Vec::with_capacity(m * m * m - (m - 2).pow(3));

    // Per-face trapezoid weight: h per tangential direction, halved at the face rim.
    let tangent_w = |t: usize| if t == 0 || t == last { 0.5 * h } else { h };

    for face in 0..6 {
        let axis = face / 2;
        let fixed = if face % 2 == 0 { 0 } else { last };
        let (ta, tb) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..m {
            for b in 0..m {
                let mut ijk = [0usize; 3];
                ijk[axis] = fixed;
                ijk[ta] = a;
                ijk[tb] = b;
                let g = (ijk[0] * m + ijk[1]) * m + ijk[2];
                if boundary_pos[g] != usize::MAX {
                    continue;
                }
                let mut weight = 0.0;
                let mut faces = 0u8;
                for ax in 0..3 {
                    if ijk[ax] == 0 || ijk[ax] == last {
                        let (u, v) = match ax {
                            0 => (ijk[1], ijk[2]),
                            1 => (ijk[0], ijk[2]),
                            _ => (ijk[0], ijk[1]),
                        };
                        weight += tangent_w(u) * tangent_w(v);
                        faces += 1;
                    }
                }
                boundary_pos[g] = boundary.len();
                boundary.push(BoundaryNode {
                    node: g,
                    ijk,
                    axis,
                    sign: if fixed == 0 { -1.0 } else { 1.0 },
                    weight,
                    faces,
                });
            }
        }
    }

    Ok(Grid {
        r,
        l,
        m,
        big_m,
        h,
        boundary,
        boundary_pos,
    })
}

impl Grid {
    pub fn n_nodes(&self) -> usize {
        self.m * self.m * self.m
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.m - 2
    }

    pub fn n_interior(&self) -> usize {
        self.n().pow(3)
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h
    }

    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.m + j) * self.m + k
    }

    pub fn ijk(&self, g: usize) -> [usize; 3] {
        let m = self.m;
        [g / (m * m), (g / m) % m, g % m]
    }

    pub fn pos(&self, g: usize) -> Vec3 {
        let [i, j, k] = self.ijk(g);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn is_boundary(&self, g: usize) -> bool {
        self.boundary_pos[g] != usize::MAX
    }

    pub fn boundary_index(&self, g: usize) -> Option<usize> {
        let b = self.boundary_pos[g];
        (b != usize::MAX).then_some(b)
    }

    /// Position of an interior node in the interior unknown vector.
    pub fn interior_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n();
        ((i - 1) * n + (j - 1)) * n + (k - 1)
    }

    /// Flat indices of interior nodes, in unknown order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let m = self.m;
        (1..m - 1).flat_map(move |i| {
            (1..m - 1).flat_map(move |j| (1..m - 1).map(move |k| (i * m + j) * m + k))
        })
    }

    pub fn total_boundary_weight(&self) -> f64 {
        self.boundary.iter().map(|b| b.weight).sum()
    }

    /// Trapezoid volume weight of node (i, j, k).
    pub fn volume_weight(&self, g: usize) -> f64 {
        let last = self.m - 1;
        self.ijk(g)
            .iter()
            .map(|&t| if t == 0 || t == last { 0.5 * self.h } else { self.h })
            .product()
    }

    /// Q-grid spacing.
    pub fn big_h(&self) -> f64 {
        2.0 * self.r / self.big_m as f64
    }

    pub fn manifest(&self) -> GridManifest {
        GridManifest {
            r: self.r,
            l: self.l,
            m: self.m,
            big_m: self.big_m,
            h: self.h,
            boundary_nodes: self.n_boundary(),
            node_order: NODE_ORDER,
            boundary_order: BOUNDARY_ORDER,
        }
    }
}

/// Deterministic completion of ξ to an orthogonal triple.
///
/// η₁ is ξ × e_k normalised, with k the axis of smallest |ξ_k| (lowest index on ties),
/// and η₂ = ξ/|ξ| × η₁. For ξ = 0 the pair is (e₁, e₂). With this rule ξ = e₁ gives
/// η₁ = e₃ and η₂ = −e₂.
pub fn orthonormal_frame(xi: Vec3) -> (Vec3, Vec3) {
    let nx = norm(xi);
    if nx == 0.0 {
        return ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    }
    let mut k = 0;
    for ax in 1..3 {
        if xi[ax].abs() < xi[k].abs() {
            k = ax;
        }
    }
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let c = cross(xi, e);
    let eta1 = scale(c, 1.0 / norm(c));
    let xh = scale(xi, 1.0 / nx);
    let mut eta2 = cross(xh, eta1);
    // Renormalise against roundoff in the unit inputs.
    let n2 = norm(eta2);
    eta2 = scale(eta2, 1.0 / n2);
    (eta1, eta2)
}

/// Householder reflection S with S·η = e₁ (identity when η = e₁). S is symmetric, so Sᵀ = S.
pub fn rotation_to_e1(eta: Vec3) -> Result<Mat3> {
    let n = norm(eta);
    if !n.is_finite() || (n - 1.0).abs() > 1e-8 {
        return invalid(format!("rotation_to_e1 needs a unit vector, |η| = {n}"));
    }
    let e = scale(eta, 1.0 / n);
    let mut s = [[0.0; 3]; 3];
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let tail = e[1] * e[1] + e[2] * e[2];
    if tail == 0.0 && e[0] > 0.0 {
        return Ok(s);
    }
    // v = η − e₁, with v₁ rewritten to avoid cancellation when η₁ is close to 1.
    let v0 = if e[0] > 0.0 {
        -tail / (1.0 + e[0])
    } else {
        e[0] - 1.0
    };
    let v = [v0, e[1], e[2]];
    let vv = dot(v, v);
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] -= 2.0 * v[i] * v[j] / vv;
        }
    }
    Ok(s)
}

/// A reconstruction frame (ξ, η₁, η₂, ρ).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Frame {
    pub xi: Vec3,
    pub eta1: Vec3,
    pub eta2: Vec3,
    pub rho: f64,
}

impl Frame {
    /// Frame with η₁, η₂ from [`orthonormal_frame`].
    pub fn new(xi: Vec3, rho: f64) -> Result<Self> {
        let (eta1, eta2) = orthonormal_frame(xi);
        Self::with_directions(xi, eta1, eta2, rho)
    }

    pub fn with_directions(xi: Vec3, eta1: Vec3, eta2: Vec3, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return invalid(format!("ρ must be positive, got {rho}"));
        }
        let tol = 1e-12;
        let xn = norm(xi).max(1.0);
        if (norm(eta1) - 1.0).abs() > tol || (norm(eta2) - 1.0).abs() > tol {
            return invalid("η₁ and η₂ must be unit vectors");
        }
        if dot(xi, eta1).abs() > tol * xn
            || dot(xi, eta2).abs() > tol * xn
            || dot(eta1, eta2).abs() > tol
        {
            return invalid("ξ, η₁, η₂ must be mutually orthogonal");
        }
        Ok(Frame {
            xi,
            eta1,
            eta2,
            rho,
        })
    }

    pub fn xi_sq(&self) -> f64 {
        dot(self.xi, self.xi)
    }
}

/// Boundary split for a direction η: V = {ν·η < 2ε} and its complement U, plus the
/// illuminated face {ν·η ≤ 0} and the shadowed face {ν·η ≥ 0}. Sets hold boundary positions.
#[derive(Clone, Debug, Serialize)]
pub struct FaceSplit {
    pub v: Vec<usize>,
    pub u: Vec<usize>,
    pub illuminated: Vec<usize>,
    pub shadowed: Vec<usize>,
}

pub fn face_split(grid: &Grid, eta: Vec3, eps: f64) -> Result<FaceSplit> {
    if !(eps > 0.0 && eps < 0.5) {
        return invalid(format!("ε must lie in (0, 1/2), got {eps}"));
    }
    let mut out = FaceSplit {
        v: Vec::new(),
        u: Vec::new(),
        illuminated: Vec::new(),
        shadowed: Vec::new(),
    };
    for (b, node) in grid.boundary.iter().enumerate() {
        let c = dot(node.normal(), eta);
        if c < 2.0 * eps {
            out.v.push(b);
        } else {
            out.u.push(b);
        }
        if c <= 0.0 {
            out.illuminated.push(b);
        }
        if c >= 0.0 {
            out.shadowed.push(b);
        }
    }
    Ok(out)
}
