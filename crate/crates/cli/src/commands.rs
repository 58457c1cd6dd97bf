//! One function per command. Each reads its keys from the merged config and fills a `Run`.

use calkit::carleman::{
    calibrate, carleman_estimate, conjugated_inequality, poincare_ratio, sine_mode, zero_trace_corpus,
};
use calkit::cgo::{build_cgo, decay_study, loglog_slope, CgoKind};
use calkit::field::{BoundaryField, ScalarField};
use calkit::forward::{dn_map_conductivity, dn_map_schrodinger, solve_conductivity, solve_schrodinger, DnMap};
use calkit::geometry::{make_grid, Frame, Grid, Vec3};
use calkit::identity::{reconstruct_potential, shadow_term, ProbeMode, ProbeOptions};
use calkit::io::{dn_to_csv, field_to_string};
use calkit::liouville::{liouville_defect, potential_of};
use serde_json::json;

use crate::config::Config;
use crate::output::{num, Failure, Run, Table};

pub struct Ctx<'a> {
    pub command: &'a str,
    pub cfg: &'a Config,
    pub config_sha256: &'a str,
    pub seed: u64,
}

type Res = std::result::Result<Run, Failure>;

fn f(x: f64) -> String {
    num(x)
}

fn tol_opts(cfg: &Config) -> Result<(f64, usize), Failure> {
    Ok((cfg.get_or("tol", 1e-10)?, cfg.get_or("max_iter", 50usize)?))
}

fn regrid(g: &Grid, m: usize) -> Result<Grid, Failure> {
    Ok(make_grid(g.r, g.l, m, g.big_m)?)
}

fn max_err(u: &ScalarField, exact: impl Fn(Vec3) -> f64, g: &Grid) -> f64 {
    (0..g.n_nodes()).map(|n| (u.values[n].re - exact(g.pos(n))).abs() + u.values[n].im.abs()).fold(0.0, f64::max)
}

/// Manufactured solutions: returns (solution, L∞ error) on `g`.
fn manufactured(case: &str, c: f64, g: &Grid) -> Result<(ScalarField, f64), Failure> {
    let zero = ScalarField::zeros(g);
    let run = |q: &ScalarField, u: &dyn Fn(Vec3) -> f64| -> Result<(ScalarField, f64), Failure> {
        let s = solve_schrodinger(g, q, &BoundaryField::from_real_fn(g, u))?;
        let e = max_err(&s, u, g);
        Ok((s, e))
    };
    match case {
        "linear" => run(&zero, &|x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2]),
        "quadratic" => run(&zero, &|x| x[0] * x[0] - x[1] * x[1]),
        "exp" => {
            let q = ScalarField::from_real_fn(g, |_| c);
            run(&q, &|x| (c.sqrt() * x[0]).exp())
        }
        "conductivity_exp" => {
            let a = ScalarField::from_real_fn(g, |x| x[0].exp());
            let u = |x: Vec3| (-x[0]).exp();
            let s = solve_conductivity(g, &a, &BoundaryField::from_real_fn(g, u))?;
            let e = max_err(&s, u, g);
            Ok((s, e))
        }
        other => Err(Failure::Usage(format!("unknown forward case {other:?}"))),
    }
}

/// Exact-to-roundoff errors have no meaningful refinement ratio.
const EXACT_ERROR: f64 = 1e-10;

pub fn forward(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let cases: Vec<String> = cfg
        .str_or("cases", "linear,quadratic,exp,conductivity_exp")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let c: f64 = cfg.get_or("c", 1.0)?;
    if !(c > 0.0) {
        return Err(Failure::Usage("c must be positive".into()));
    }
    let refine: bool = cfg.get_or("refine", true)?;
    let (lo, hi): (f64, f64) = (cfg.get_or("ratio_min", 3.2)?, cfg.get_or("ratio_max", 4.8)?);
    let fine = regrid(&g, 2 * g.m - 1)?;
    let mut run = Run::new();
    let mut t = Table::new(&["case", "m", "m_fine", "linf_error", "linf_error_fine", "ratio"]);
    for case in &cases {
        let (sol, e1) = manufactured(case, c, &g)?;
        run.file(&format!("forward_{case}.field"), field_to_string(&sol).into_bytes());
        if refine {
            let (_, e2) = manufactured(case, c, &fine)?;
            let exact = e1 <= EXACT_ERROR && e2 <= EXACT_ERROR;
            let ratio = e1 / e2;
            t.row(&[case.clone(), g.m.to_string(), fine.m.to_string(), f(e1), f(e2), f(ratio)]);
            run.check(
                exact || (lo..=hi).contains(&ratio),
                format!("{case}: refinement ratio {ratio} outside [{lo}, {hi}]"),
            );
        } else {
            t.row(&[case.clone(), g.m.to_string(), String::new(), f(e1), String::new(), String::new()]);
        }
    }
    run.file("forward.csv", t.into_bytes());
    run.metric("grid", g.manifest());
    Ok(run)
}

/// Invertibility is judged by the solver itself, not by an eigenvalue computation.
const SOLVABILITY_TEST: &str =
    "operational: factorisation or iteration succeeds, residual small, solution norm at most 1e10 times the data";

fn dn_sidecar(ctx: &Ctx, g: &Grid, map: &DnMap) -> Vec<u8> {
    let v = json!({
        "command": ctx.command,
        "config_sha256": ctx.config_sha256,
        "grid": g.manifest(),
        "kind": map.kind,
        "coeff_hash": map.coeff_hash,
        "n": map.n,
        "layout": "row-major, re,im per entry",
        "solvability": SOLVABILITY_TEST,
    });
    serde_json::to_vec_pretty(&v).unwrap_or_default()
}

pub fn dnmap(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let map = match cfg.str_or("kind", "schrodinger") {
        "schrodinger" => dn_map_schrodinger(&g, &cfg.potential("q", "zero", &g)?)?,
        "conductivity" => dn_map_conductivity(&g, &cfg.conductivity("a", "const:1", &g)?)?,
        other => return Err(Failure::Usage(format!("unknown DN map kind {other:?}"))),
    };
    let mut run = Run::new();
    run.file("dn.csv", dn_to_csv(&map).into_bytes());
    run.file("dn.json", dn_sidecar(ctx, &g, &map));
    run.metric("symmetry_defect", map.weighted_symmetry_defect(&g));
    run.metric("n_boundary", map.n);
    run.metric("solvability", SOLVABILITY_TEST);
    Ok(run)
}

pub fn liouville(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g0 = cfg.grid()?;
    let ms: Vec<usize> = cfg
        .list_f64("m_list", &[9.0, 17.0])?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let ratio_min: f64 = cfg.get_or("ratio_min", 1.5)?;
    let is_const = cfg.str_or("a", "bump").starts_with("const:");
    let mut run = Run::new();
    let mut t = Table::new(&["m", "h", "defect", "ratio"]);
    let mut prev: Option<f64> = None;
    for (i, &m) in ms.iter().enumerate() {
        let g = regrid(&g0, m)?;
        let a = cfg.conductivity("a", "bump", &g)?;
        if i == 0 {
            run.file("potential.field", field_to_string(&potential_of(&a, &g)?).into_bytes());
        }
        let d = liouville_defect(&a, &g)?;
        let ratio = prev.map(|p| p / d);
        t.row(&[m.to_string(), f(g.h), f(d), ratio.map(f).unwrap_or_default()]);
        if is_const {
            run.check(d <= 1e-10, format!("m={m}: constant conductivity defect {d} above 1e-10"));
        } else if let Some(r) = ratio {
            run.check(r >= ratio_min, format!("m={m}: refinement ratio {r} below {ratio_min}"));
        }
        prev = Some(d);
    }
    run.file("liouville.csv", t.into_bytes());
    Ok(run)
}

fn kind_of(s: &str) -> Result<CgoKind, Failure> {
    match s {
        "type1" => Ok(CgoKind::Type1),
        "type2" => Ok(CgoKind::Type2),
        other => Err(Failure::Usage(format!("unknown CGO kind {other:?}"))),
    }
}

fn frame(cfg: &Config, rho: f64) -> Result<Frame, Failure> {
    let xi = cfg.vec3("xi", [0.0; 3])?;
    Ok(match (cfg.values.contains_key("eta1"), cfg.values.contains_key("eta2")) {
        (false, false) => Frame::new(xi, rho)?,
        _ => Frame::with_directions(xi, cfg.vec3("eta1", [1.0, 0.0, 0.0])?, cfg.vec3("eta2", [0.0, 1.0, 0.0])?, rho)?,
    })
}

pub fn cgo(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let q = cfg.potential("q", "bump", &g)?;
    let rho: f64 = cfg.get_or("rho", 8.0)?;
    let kind = kind_of(cfg.str_or("kind", "type1"))?;
    let (tol, max_iter) = tol_opts(cfg)?;
    let fr = frame(cfg, rho)?;
    let s = build_cgo(&q, &fr, kind, &g, tol, max_iter)?;
    let mut run = Run::new();
    run.file("cgo_v.field", field_to_string(&s.v).into_bytes());
    run.file("cgo_w.field", field_to_string(&s.w).into_bytes());
    let mut t = Table::new(&["iteration", "relative_change"]);
    for (i, d) in s.history.iter().enumerate() {
        t.row(&[(i + 1).to_string(), f(*d)]);
    }
    run.file("cgo_history.csv", t.into_bytes());
    let record = json!({
        "kind": s.kind,
        "frame": s.frame,
        "rho": rho,
        "iterations": s.iterations,
        "w_l2": s.w_l2,
        "w_h2": s.w_h2,
        "residual": s.residual,
        "fixed_point_residual": s.fixed_point_residual,
        "in_unit_ball": s.in_unit_ball,
        "big_m": g.big_m,
    });
    run.file("cgo.json", serde_json::to_vec_pretty(&record).unwrap_or_default());
    if !s.in_unit_ball {
        run.warnings.push(format!("‖w‖_L2 = {} exceeds 1", s.w_l2));
    }
    run.metric("cgo", record);
    Ok(run)
}

pub fn decay(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let q = cfg.potential("q", "bump", &g)?;
    let rhos = cfg.list_f64("rho_list", &[4.0, 8.0, 16.0, 32.0])?;
    let (tol, max_iter) = tol_opts(cfg)?;
    let (lo, hi): (f64, f64) = (cfg.get_or("slope_min", -1.3)?, cfg.get_or("slope_max", -0.7)?);
    let it_limit: usize = cfg.get_or("iteration_limit", 25usize)?;
    let table = decay_study(&q, cfg.vec3("xi", [0.0; 3])?, &rhos, &g, tol, max_iter)?;
    let mut t = Table::new(&["rho", "w_l2", "w_h2", "iterations", "residual", "in_unit_ball"]);
    let mut run = Run::new();
    for r in &table.rows {
        t.row(&[f(r.rho), f(r.w_l2), f(r.w_h2), r.iterations.to_string(), f(r.residual), r.in_unit_ball.to_string()]);
        run.check(r.iterations <= it_limit, format!("ρ = {}: {} iterations exceed {it_limit}", r.rho, r.iterations));
    }
    run.file("decay.csv", t.into_bytes());
    match table.l2_slope {
        Some(s) => run.check((lo..=hi).contains(&s), format!("L² slope {s} outside [{lo}, {hi}]")),
        None => run.check(false, "L² slope undefined"),
    }
    run.metric("l2_slope", table.l2_slope);
    run.metric("h2_slope", table.h2_slope);
    Ok(run)
}

pub fn reconstruct(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let qa = cfg.potential("qa", "bump", &g)?;
    let qb = cfg.potential("qb", "zero", &g)?;
    let xi_max: i32 = cfg.get_or("xi_max", 1)?;
    let rho: f64 = cfg.get_or("rho", 4.0)?;
    let (tol, max_iter) = tol_opts(cfg)?;
    let mode = match cfg.str_or("mode", "faithful") {
        "faithful" => ProbeMode::Faithful,
        "born" => ProbeMode::Born,
        other => return Err(Failure::Usage(format!("unknown probe mode {other:?}"))),
    };
    let la = dn_map_schrodinger(&g, &qa)?;
    let lb = dn_map_schrodinger(&g, &qb)?;
    let rec = reconstruct_potential(&la, &lb, &qa, &qb, xi_max, rho, &g, &ProbeOptions { mode, tol, max_iter })?;
    let mut run = Run::new();
    run.file("q_rec.field", field_to_string(&rec.q_rec).into_bytes());
    let mut t = Table::new(&[
        "k1", "k2", "k3", "xi1", "xi2", "xi3", "re_qhat", "im_qhat", "re_exact", "im_exact", "rho", "sampled",
    ]);
    for s in &rec.samples {
        let mut row: Vec<String> = s.k.iter().map(|v| v.to_string()).collect();
        row.extend(s.xi.iter().map(|v| f(*v)));
        row.extend([f(s.symmetric.re), f(s.symmetric.im), f(s.exact.re), f(s.exact.im), f(rho)]);
        row.push(s.raw.is_some().to_string());
        t.row(&row);
    }
    run.file("samples.csv", t.into_bytes());
    let mut e = Table::new(&["rho", "xi_max", "relative_l2_error", "truncation_error", "hermitian_defect", "failed"]);
    e.row(&[
        f(rho),
        xi_max.to_string(),
        f(rec.error),
        f(rec.truncation_error),
        f(rec.hermitian_defect),
        rec.failed.len().to_string(),
    ]);
    run.file("error.csv", e.into_bytes());
    run.check(rec.failed.is_empty(), format!("{} lattice samples failed", rec.failed.len()));
    if let Some(limit) = cfg.get::<f64>("max_error")? {
        run.check(rec.error <= limit, format!("relative error {} above {limit}", rec.error));
    }
    run.metric("mode", mode);
    run.metric("error", rec.error);
    run.metric("truncation_error", rec.truncation_error);
    run.metric("hermitian_defect", rec.hermitian_defect);
    run.metric(
        "failed",
        rec.failed.iter().map(|(k, m)| json!({"k": k, "error": m})).collect::<Vec<_>>(),
    );
    run.metric("lattice", json!({"xi_max": xi_max, "spacing": std::f64::consts::PI / g.l, "points": rec.samples.len()}));
    Ok(run)
}

pub fn shadow(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let q1 = cfg.potential("q1", "bump", &g)?;
    let q2 = cfg.potential("q2", "zero", &g)?;
    let eta = cfg.vec3("eta", [1.0, 0.0, 0.0])?;
    let eps: f64 = cfg.get_or("eps", 0.1)?;
    let rhos = cfg.list_f64("rho_list", &[4.0, 8.0, 16.0, 32.0])?;
    let (tol, max_iter) = tol_opts(cfg)?;
    let slope_max: f64 = cfg.get_or("slope_max", -0.4)?;
    let same = q1 == q2;
    let mut run = Run::new();
    let mut t = Table::new(&["rho", "abs_u", "re_u", "im_u", "re_v", "im_v", "weighted_flux_u", "probe_norm_u"]);
    let mut mags = Vec::new();
    for &rho in &rhos {
        let r = shadow_term(&q1, &q2, &frame(cfg, rho)?, eta, eps, &g, tol, max_iter)?;
        let a = r.value_u.norm();
        t.row(&[
            f(rho),
            f(a),
            f(r.value_u.re),
            f(r.value_u.im),
            f(r.value_v.re),
            f(r.value_v.im),
            f(r.weighted_flux_u),
            f(r.probe_norm_u),
        ]);
        if same {
            run.check(a == 0.0, format!("ρ = {rho}: equal potentials gave |value| = {a}"));
        }
        mags.push(a);
    }
    run.file("shadow.csv", t.into_bytes());
    if !same && rhos.len() >= 2 {
        let s = loglog_slope(&rhos, &mags);
        match s {
            Some(s) => run.check(s <= slope_max, format!("slope {s} above {slope_max}")),
            None => run.check(false, "slope undefined"),
        }
        run.metric("slope", s);
    }
    Ok(run)
}

fn eta1_of(cfg: &Config) -> Result<Vec3, Failure> {
    let e = cfg.vec3("eta1", [1.0, 0.0, 0.0])?;
    let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Failure::Usage(format!("eta1 must be a unit vector, |eta1| = {n}")));
    }
    Ok(e)
}

pub fn carleman(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let q = cfg.potential("q", "bump", &g)?;
    let eta1 = eta1_of(cfg)?;
    let calib_rhos = cfg.list_f64("calib_rho", &[2.0, 4.0, 8.0])?;
    let calib_n: usize = cfg.get_or("calib_samples", 100usize)?;
    let n: usize = cfg.get_or("samples", 100usize)?;
    let cal = calibrate(&g, &zero_trace_corpus(&g, calib_n, ctx.seed), &calib_rhos, eta1)?;
    let consts = cal.constants();
    let q_sup = q.max_abs();
    let rho2 = consts.rho2(q_sup);
    let rhos = match cfg.values.contains_key("rho") {
        true => cfg.list_f64("rho", &[])?,
        false => vec![rho2 + 1.0],
    };
    let corpus = zero_trace_corpus(&g, n, ctx.seed.wrapping_add(1));
    let mut run = Run::new();
    let mut t = Table::new(&["test_id", "rho", "lhs", "rhs", "margin", "pass"]);
    let mut violations = 0usize;
    for &rho in &rhos {
        if rho < rho2 {
            run.check(false, format!("ρ = {rho} is below ρ₂ = {rho2}; the estimate is evaluated but not covered"));
        }
        for (i, v) in corpus.iter().enumerate() {
            let r = carleman_estimate(v, &q, rho, eta1, &g, &consts)?;
            if !r.holds {
                violations += 1;
            }
            t.row(&[i.to_string(), f(rho), f(r.lhs), f(r.rhs), f(r.c_used * r.rhs - r.lhs), r.holds.to_string()]);
        }
    }
    run.file("carleman.csv", t.into_bytes());
    run.check(violations == 0, format!("{violations} violations"));
    run.metric("calibration", &cal);
    run.metric("c_used", consts.c_for(q_sup));
    run.metric("rho1", consts.rho1);
    run.metric("rho2", rho2);
    run.metric("q_sup", q_sup);
    run.metric("violations", violations);
    Ok(run)
}

pub fn poincare(ctx: &Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let eta1 = eta1_of(cfg)?;
    let n: usize = cfg.get_or("samples", 20usize)?;
    let conj_rhos = cfg.list_f64("conj_rho", &[2.0, 4.0, 8.0])?;
    let rel_slack: f64 = cfg.get_or("slack", 1e-3)?;
    let mut tests: Vec<(String, ScalarField)> = vec![("sine".into(), sine_mode(&g))];
    for (i, v) in zero_trace_corpus(&g, n, ctx.seed).into_iter().enumerate() {
        tests.push((i.to_string(), v));
    }
    let mut run = Run::new();
    let mut t = Table::new(&["test_id", "rho", "lhs", "rhs", "margin", "pass"]);
    let mut c = Table::new(&[
        "test_id", "rho", "lhs", "rhs", "defect", "shadowed", "illuminated", "edge_share", "i1_volume", "i1_boundary",
        "i2_volume", "pass",
    ]);
    let mut violations = 0usize;
    for (id, v) in &tests {
        let (lhs, rhs) = poincare_ratio(v, eta1, &g)?;
        let ok = lhs <= rhs;
        violations += usize::from(!ok);
        t.row(&[id.clone(), String::new(), f(lhs), f(rhs), f(rhs - lhs), ok.to_string()]);
        for &rho in &conj_rhos {
            let r = conjugated_inequality(v, rho, eta1, &g)?;
            let ok = r.lhs <= r.rhs * (1.0 + rel_slack);
            violations += usize::from(!ok);
            let bt = r.shadowed.total + r.illuminated.total;
            let edges = if bt > 0.0 { (r.shadowed.edges + r.illuminated.edges) / bt } else { 0.0 };
            c.row(&[
                id.clone(),
                f(rho),
                f(r.lhs),
                f(r.rhs),
                f(r.defect()),
                f(r.shadowed.total),
                f(r.illuminated.total),
                f(edges),
                f(r.i1_volume),
                f(r.i1_boundary),
                f(r.i2_volume),
                ok.to_string(),
            ]);
        }
    }
    run.file("poincare.csv", t.into_bytes());
    run.file("conjugated.csv", c.into_bytes());
    run.check(violations == 0, format!("{violations} violations"));
    run.metric("violations", violations);
    run.metric("constant", 4.0 * 3.0 * g.l * g.l);
    Ok(run)
}
