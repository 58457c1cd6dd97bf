use std::f64::consts::PI;
use std::sync::OnceLock;

use calkit::cgo::{denominator, periodic_solve};
use calkit::field::{BoundaryField, ScalarField};
use calkit::forward::{dn_map_schrodinger, DnMap};
use calkit::geometry::{dot, face_split, make_grid, mat_vec, norm, orthonormal_frame, rotation_to_e1, Grid, Vec3};
use calkit::identity::alessandrini_pair;
use calkit::io::{field_from_str, field_to_string};
use calkit::rng::Lcg64;
use calkit::C64;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-10.0f64..10.0)
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3().prop_filter("nonzero", |v| norm(*v) > 1e-3).prop_map(|v| {
        let n = norm(v);
        [v[0] / n, v[1] / n, v[2] / n]
    })
}

fn complexes(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), n)
}

struct Maps {
    grid: Grid,
    la: DnMap,
    lb: DnMap,
}

fn maps() -> &'static Maps {
    static M: OnceLock<Maps> = OnceLock::new();
    M.get_or_init(|| {
        let grid = make_grid(2.0, 1.0, 9, 16).unwrap();
        let qa = ScalarField::from_real_fn(&grid, |x| (-4.0 * dot(x, x)).exp());
        let qb = ScalarField::zeros(&grid);
        let la = dn_map_schrodinger(&grid, &qa).unwrap();
        let lb = dn_map_schrodinger(&grid, &qb).unwrap();
        Maps { grid, la, lb }
    })
}

proptest! {
    #[test]
    fn frame_is_orthonormal(xi in vec3()) {
        let (e1, e2) = orthonormal_frame(xi);
        let s = norm(xi).max(1.0);
        prop_assert!((norm(e1) - 1.0).abs() < 1e-12);
        prop_assert!((norm(e2) - 1.0).abs() < 1e-12);
        prop_assert!(dot(e1, e2).abs() < 1e-12);
        prop_assert!(dot(xi, e1).abs() < 1e-12 * s);
        prop_assert!(dot(xi, e2).abs() < 1e-12 * s);
    }

    #[test]
    fn reflection_maps_to_e1(eta in unit(), x in vec3()) {
        let s = rotation_to_e1(eta).unwrap();
        let y = mat_vec(&s, eta);
        prop_assert!((y[0] - 1.0).abs() < 1e-12 && y[1].abs() < 1e-12 && y[2].abs() < 1e-12);
        // Orthogonal: lengths are preserved.
        prop_assert!((norm(mat_vec(&s, x)) - norm(x)).abs() < 1e-12 * norm(x).max(1.0));
    }

    #[test]
    fn face_split_partitions_boundary(eta in unit(), eps in 0.01f64..0.49) {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let sp = face_split(&g, eta, eps).unwrap();
        let n = g.n_boundary();
        let mut seen = vec![0u8; n];
        for &b in sp.u.iter().chain(&sp.v) {
            seen[b] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let mut lit = vec![false; n];
        for &b in sp.illuminated.iter().chain(&sp.shadowed) {
            lit[b] = true;
        }
        prop_assert!(lit.iter().all(|&c| c));
        for &b in &sp.u {
            prop_assert!(dot(g.boundary[b].normal(), eta) >= 2.0 * eps);
        }
    }

    #[test]
    fn denominator_floor(a in prop::array::uniform3(-40i64..40), rho in 0.1f64..200.0, r in 1.1f64..5.0) {
        prop_assert!(denominator(a, r, rho).norm() >= PI * rho / r * (1.0 - 1e-12));
    }

    #[test]
    fn periodic_solve_linear_and_bounded(f in complexes(16 * 16 * 16), g in complexes(16 * 16 * 16),
                                         c in -3.0f64..3.0, rho in 0.5f64..20.0, eta in unit()) {
        let grid = make_grid(2.0, 1.0, 9, 16).unwrap();
        let (zf, rep) = periodic_solve(&f, rho, eta, &grid).unwrap();
        let (zg, _) = periodic_solve(&g, rho, eta, &grid).unwrap();
        let fg: Vec<C64> = f.iter().zip(&g).map(|(a, b)| a * c + b).collect();
        let (z, _) = periodic_solve(&fg, rho, eta, &grid).unwrap();
        let scale = zf.iter().chain(&zg).map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for i in 0..z.len() {
            prop_assert!((z[i] - (zf[i] * c + zg[i])).norm() <= 1e-10 * scale * (1.0 + c.abs()));
        }
        prop_assert!(rep.bound_ratio <= 1.0 + 1e-12);
        prop_assert!(rep.spectral_residual < 1e-10);
    }

    #[test]
    fn pairing_is_bilinear(f in complexes(386), g in complexes(386), h in complexes(386),
                           a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let m = maps();
        prop_assert_eq!(m.grid.n_boundary(), 386);
        let bf = |v: &Vec<C64>| BoundaryField { values: v.clone() };
        let comb: Vec<C64> = f.iter().zip(&g).map(|(x, y)| x * C64::new(a, b) + y).collect();
        let lhs = alessandrini_pair(&m.la, &m.lb, &bf(&comb), &bf(&h), &m.grid).unwrap();
        let pf = alessandrini_pair(&m.la, &m.lb, &bf(&f), &bf(&h), &m.grid).unwrap();
        let pg = alessandrini_pair(&m.la, &m.lb, &bf(&g), &bf(&h), &m.grid).unwrap();
        let rhs = pf * C64::new(a, b) + pg;
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + pf.norm() + pg.norm()));
        // Same maps give zero.
        prop_assert_eq!(alessandrini_pair(&m.la, &m.la, &bf(&f), &bf(&h), &m.grid).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn field_text_round_trips(v in complexes(9 * 9 * 9)) {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let f = ScalarField::from_values(&g, v).unwrap();
        let back = field_from_str(&field_to_string(&f)).unwrap();
        prop_assert_eq!(back.values, f.values);
    }

    #[test]
    fn lcg_uniform_in_unit_interval(seed in any::<u64>()) {
        let mut r = Lcg64::new(seed);
        let mut s = Lcg64::new(seed);
        for _ in 0..100 {
            let u = r.uniform();
            prop_assert!((0.0..1.0).contains(&u));
            prop_assert_eq!(u.to_bits(), s.uniform().to_bits());
        }
    }
}
