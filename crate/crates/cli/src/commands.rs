use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistprop::hardy::{
    envelope_fit, hardy_certify, matrix_hardy_certify, uniqueness_experiment, Classification, DecayEnvelope,
    ExperimentData, LiftGrids,
};
use twistprop::kernels::{gaussian_twisted_compose, kernel_domain, oscillator_envelope, envelope_grid, schrodinger_kernel_orig};
use twistprop::lie::{group_multiply, is_mw, mw_lift, parse_algebra, validate_algebra, GroupPoint, LieAlgebra2Step};
use twistprop::linalg::{c, loglog_slope, max_abs_c, sym_defect, RMat};
use twistprop::propagate::{
    heat_bound_fit, heat_group, kernel_time, propagate_group_with, GaussianSlices, HeatBox, PropagatorSpec,
    RegularizationSchedule, SliceMethod,
};
use twistprop::symplectic::{build_frame, generator, pfaffian, GeneratorKind, SymplecticFrame};
use twistprop::twisted::{sample, Axis, FieldSpace, Grid, MuGrid, SampledField, TwistForm};

use crate::config::{DataKind, ExperimentConfig, Method};
use crate::report::{matrix_block, num, vec_str, Artifacts, Table};
use crate::CliError;

/// Largest group grid the heat and Hardy commands will sample.
const NODE_CAP: usize = 4_000_000;

/// Everything a subcommand needs: the parsed config, its algebra, and the sink.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub alg: LieAlgebra2Step,
    pub out: Artifacts,
}

impl Context {
    pub fn load(config: &Path, out: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let (mut cfg, alg_path) = ExperimentConfig::load(config)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let text = std::fs::read_to_string(&alg_path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", alg_path.display())))?;
        let alg = parse_algebra(&text).map_err(|e| CliError::Config(format!("{}: {e}", alg_path.display())))?;
        let out = Artifacts::new(out, &cfg.hash())?;
        Ok(Self { cfg, alg, out })
    }

    fn a(&self) -> Result<RMat, CliError> {
        let a = self.cfg.a_matrix(self.alg.m())?;
        let d = sym_defect(&a);
        if d > 1e-12 {
            return Err(CliError::Config(format!("A is not symmetric (defect {d:.3e})")));
        }
        Ok(a)
    }

    fn witness(&self) -> Option<Vec<f64>> {
        is_mw(&self.alg, 64, self.cfg.seed).witness
    }

    fn require_mw(&self) -> Result<Vec<f64>, CliError> {
        self.witness().ok_or_else(|| {
            CliError::NotApplicable(
                "the algebra is not Moore-Wolf (J_mu is degenerate for every sampled mu); only the uniqueness command lifts it".into(),
            )
        })
    }

    fn mus(&self, listed: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CliError> {
        let w = self.require_mw()?;
        if listed.is_empty() {
            return Ok(vec![w]);
        }
        for mu in listed {
            if mu.len() != self.alg.l() {
                return Err(CliError::Config(format!("mu {mu:?} must have l = {} entries", self.alg.l())));
            }
        }
        Ok(listed.to_vec())
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Completed, but a hypothesis of the underlying theorem does not hold.
    NotApplicable(String),
}

pub fn validate(ctx: &mut Context) -> Result<Status, CliError> {
    let alg = &ctx.alg;
    let rep = validate_algebra(alg);
    let mw = is_mw(alg, 64, ctx.cfg.seed);
    let mut s = String::new();
    let _ = writeln!(s, "m: {}", alg.m());
    let _ = writeln!(s, "l: {}", alg.l());
    let _ = writeln!(s, "slice_rank: {}", rep.slice_rank);
    let _ = writeln!(s, "valid: {}", rep.ok());
    for v in &rep.violations {
        let _ = writeln!(s, "violation: {v}");
    }
    for n in &rep.notes {
        let _ = writeln!(s, "note: {n}");
    }
    let _ = writeln!(s, "is_mw: {}", mw.is_mw);
    let _ = writeln!(s, "max_abs_det: {}", num(mw.max_abs_det));
    if let Some(w) = &mw.witness {
        let _ = writeln!(s, "witness: {}", vec_str(w));
    } else {
        let lift = mw_lift(alg);
        let lm = is_mw(&lift.algebra, 64, ctx.cfg.seed);
        let _ = writeln!(s, "lift_m: {}", lift.algebra.m());
        let _ = writeln!(s, "lift_l: {}", lift.algebra.l());
        let _ = writeln!(s, "lift_is_mw: {}", lm.is_mw);
    }
    ctx.a()?;
    let sc = &ctx.cfg.schedule;
    RegularizationSchedule::new(sc.eps, sc.eps_prime, sc.eps0).map_err(|e| CliError::Config(e.to_string()))?;
    ctx.out.text("validate.txt", &s)?;
    print!("{s}");
    if rep.ok() {
        Ok(Status::Ok)
    } else {
        Ok(Status::NotApplicable(rep.violations.join("; ")))
    }
}

pub fn frame(ctx: &mut Context) -> Result<Status, CliError> {
    let mus = ctx.mus(&ctx.cfg.frame.mu.clone())?;
    let a = ctx.a()?;
    let mut blocks = String::new();
    let mut table = Table::new(&["mu", "pf", "transform", "pf_squared", "det_r", "homogeneity"]);
    for mu in &mus {
        let fr = build_frame(&ctx.alg, mu)?;
        let d = fr.defects();
        let _ = writeln!(blocks, "## mu={} pf={}", vec_str(mu), num(fr.pf));
        for (name, m) in [
            ("J_mu", &fr.jmu),
            ("R", &fr.r),
            ("R_inv", &fr.r_inv),
            ("A(mu)", &fr.a_of_mu(&a)),
            ("B(mu)", &fr.b_of_mu()),
        ] {
            blocks.push_str(&matrix_block(name, m));
        }
        table.row(vec![vec_str(mu), num(fr.pf), num(d.transform), num(d.pf_squared), num(d.det_r), num(d.homogeneity)]);
        println!("mu {}: max frame defect {:.3e}", vec_str(mu), d.max());
    }
    ctx.out.text("frames.txt", &blocks)?;
    ctx.out.csv("frame_defects.csv", &table.to_csv())?;
    Ok(Status::Ok)
}

pub fn kernel(ctx: &mut Context) -> Result<Status, CliError> {
    let mus = ctx.mus(&ctx.cfg.kernel.mu.clone())?;
    let a = ctx.a()?;
    let t = ctx.cfg.kernel.t.unwrap_or(ctx.cfg.times.t);
    let sc = &ctx.cfg.schedule;
    let sched = RegularizationSchedule::new(sc.eps, sc.eps_prime, sc.eps0).map_err(|e| CliError::Config(e.to_string()))?;
    let mut table = Table::new(&[
        "mu",
        "kappa",
        "kappa_kernel_time",
        "degenerate",
        "in_domain",
        "damped_c_fit",
        "damped_growth",
        "damped_passed",
    ]);
    let mut outside: Option<(f64, f64)> = None;
    for (i, mu) in mus.iter().enumerate() {
        let fr = build_frame(&ctx.alg, mu)?;
        let s = generator(&a, &fr, GeneratorKind::SMu)?;
        let dom = kernel_domain(&s, f64::INFINITY);
        let kappa = dom.kappa / (4.0 * PI);
        let inside = !dom.degenerate && t != 0.0 && kernel_time(t).abs() < dom.kappa;
        let d = generator(&RMat::identity(fr.m(), fr.m()), &fr, GeneratorKind::DMu)?;
        let grid = envelope_grid(sched.eps, &fr, 24)?;
        let env = oscillator_envelope(
            ctx.cfg.times.t_big,
            sched.eps,
            sched.eps_prime,
            &d,
            &fr,
            &grid,
            &[0.0, 0.5, 1.0],
            ctx.cfg.envelope.ceiling,
        )?;
        table.row(vec![
            vec_str(mu),
            num(kappa),
            num(dom.kappa),
            dom.degenerate.to_string(),
            inside.to_string(),
            num(env.c_fit),
            num(env.growth),
            env.passed.to_string(),
        ]);
        println!("mu {}: kappa = {kappa:.6e}", vec_str(mu));
        if !inside {
            outside.get_or_insert((t, kappa));
            continue;
        }
        let k = schrodinger_kernel_orig(kernel_time(t), &a, &fr)?;
        ctx.out.csv(&format!("kernel_{i}.csv"), &k.to_csv(&format!("t={t:e}"), mu))?;
    }
    ctx.out.csv("kernel_domain.csv", &table.to_csv())?;
    match outside {
        Some((t, kappa)) => Err(CliError::Numerical(format!(
            "time {t} outside the kernel domain |t| < kappa = {kappa:.6e}"
        ))),
        None => Ok(Status::Ok),
    }
}

/// Central inversion aliases unless every period `1/dmu` exceeds the u-box
/// width; the forward transform of sampled data also needs `|mu| < 1/(2 du)`.
fn aliasing_warning(mu: &MuGrid, u: &[(f64, f64)], sampled: bool) -> Option<String> {
    for a in 0..mu.l() {
        let (half, du) = u[a.min(u.len() - 1)];
        let period = 1.0 / mu.spacing(a);
        if period < 2.0 * half {
            return Some(format!(
                "warning: central period 1/dmu = {period:.4} is below the u-box width {:.4}; the inversion aliases",
                2.0 * half
            ));
        }
        if sampled && mu.half_width[a] >= 0.5 / du {
            return Some(format!(
                "warning: |mu| reaches {:.4}, beyond the u-grid Nyquist frequency {:.4}; the slices alias",
                mu.half_width[a],
                0.5 / du
            ));
        }
    }
    None
}

fn group_grid(ctx: &Context) -> Result<Grid, CliError> {
    Ok(Grid::group(&ctx.cfg.x_grid(ctx.alg.m())?, &ctx.cfg.u_grid(ctx.alg.l())?))
}

pub fn propagate(ctx: &mut Context) -> Result<Status, CliError> {
    ctx.require_mw()?;
    let a = ctx.a()?;
    let m = ctx.alg.m();
    let opts = ctx.cfg.propagate.clone();
    let center = if opts.center.is_empty() { vec![0.0; m] } else { opts.center.clone() };
    if center.len() != m {
        return Err(CliError::Config(format!("propagate.center must have m = {m} entries")));
    }
    let gc = opts.grid.as_ref().unwrap_or(&ctx.cfg.grid);
    let g = Grid::group(&gc.x(m)?, &gc.u(ctx.alg.l())?);
    let (w, wu) = (opts.width, opts.u_width);
    let f = sample(
        |p| {
            let x2: f64 = p[..m].iter().zip(&center).map(|(v, c0)| (v - c0) * (v - c0)).sum();
            let u2: f64 = p[m..].iter().map(|v| v * v).sum();
            c((-x2 / (2.0 * w * w) - u2 / (2.0 * wu * wu)).exp(), 0.0)
        },
        &g,
        FieldSpace::Group { m },
    );
    let mu_grid = opts.mu_grid.as_ref().unwrap_or(&ctx.cfg.mu_grid).grid(ctx.alg.l())?;
    let times = if opts.times.is_empty() { vec![ctx.cfg.times.t] } else { opts.times.clone() };
    let method = match opts.method {
        Method::Kernel => SliceMethod::Kernel,
        Method::Oracle => SliceMethod::Oracle,
    };
    let env = &ctx.cfg.envelope;
    let mut notes = String::new();
    let du = 2.0 * gc.u_half_width / gc.u_points as f64;
    if let Some(w) = aliasing_warning(&mu_grid, &[(gc.u_half_width, du)], true) {
        eprintln!("{w}");
        let _ = writeln!(notes, "{w}");
    }
    let mut table = Table::new(&["t", "norm", "c_min", "growth"]);
    for (k, &t) in times.iter().enumerate() {
        let out = if t == 0.0 {
            f.clone()
        } else {
            propagate_group_with(&f, &PropagatorSpec::new(a.clone(), t)?, &ctx.alg, &mu_grid, method)?
        };
        if !out.is_finite() {
            return Err(CliError::Numerical(format!("propagated field at t = {t} is not finite")));
        }
        let fit = envelope_fit(&out, env.a, env.delta, env.ceiling);
        table.row(vec![num(t), num(out.l2_norm()), num(fit.c_min), num(fit.growth)]);
        println!("t = {t}: norm {:.6e}", out.l2_norm());
        if opts.dump_fields {
            ctx.out.csv(&format!("field_{k}.csv"), &out.to_csv())?;
        }
    }
    ctx.out.csv("norms.csv", &table.to_csv())?;
    ctx.out.text("propagate.txt", &notes)?;
    Ok(Status::Ok)
}

pub fn heat(ctx: &mut Context) -> Result<Status, CliError> {
    ctx.require_mw()?;
    let (m, l) = (ctx.alg.m(), ctx.alg.l());
    let opts = ctx.cfg.heat.clone();
    let ss = if opts.s.is_empty() { vec![ctx.cfg.times.s] } else { opts.s.clone() };
    let scales: &[usize] = if opts.box_doubling { &[1, 2] } else { &[1] };
    let mut table = Table::new(&["s", "box_scale", "c_upper", "c_lower", "mass", "min_ratio"]);
    let mut summary = String::from("# heat kernel of the sub-Laplacian (A = I)\n");
    for &s in &ss {
        let mut ups = Vec::new();
        let mut los = Vec::new();
        for &scale in scales {
            let hb = HeatBox::for_time(s, m, l, scale)?;
            let nodes = hb.x_grid.len() * hb.u_grid.len();
            if nodes > NODE_CAP {
                return Err(CliError::Numerical(format!("heat grid has {nodes} nodes, above the cap of {NODE_CAP}")));
            }
            let h = heat_group(s, &ctx.alg, &hb)?;
            let fit = heat_bound_fit(&h, s, m, opts.eps, opts.k_up, opts.k_lo);
            if !(fit.c_upper.is_finite() && fit.c_lower.is_finite()) {
                return Err(CliError::Numerical(format!("heat bound fit at s = {s} is not finite")));
            }
            table.row(vec![num(s), scale.to_string(), num(fit.c_upper), num(fit.c_lower), num(fit.mass), num(fit.min_ratio)]);
            ups.push(fit.c_upper);
            los.push(fit.c_lower);
        }
        let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
        let _ = writeln!(summary, "s={s:e} upper_spread={} lower_spread={}", num(spread(&ups)), num(spread(&los)));
    }
    let _ = writeln!(summary, "eps: {}", num(opts.eps));
    let _ = writeln!(summary, "k_up: {}", num(opts.k_up));
    let _ = writeln!(summary, "k_lo: {}", num(opts.k_lo));
    ctx.out.csv("heat_bounds.csv", &table.to_csv())?;
    ctx.out.text("heat.txt", &summary)?;
    print!("{}", table.to_csv());
    Ok(Status::Ok)
}

fn gaussian(grid: &Grid, width: f64) -> SampledField {
    sample(
        |p| c((-p.iter().map(|v| v * v).sum::<f64>() / (4.0 * width)).exp(), 0.0),
        grid,
        FieldSpace::Euclidean,
    )
}

pub fn hardy(ctx: &mut Context) -> Result<Status, CliError> {
    let h = ctx.cfg.hardy.clone();
    let env = &ctx.cfg.envelope;
    let a = ctx.a()?;
    let m = ctx.alg.m();
    let scalar = hardy_certify(&gaussian(&Grid::uniform(1, h.half_width, h.points)?, h.width), h.alpha, h.beta)?;
    let mut s = String::from("## scalar\n");
    s.push_str(&scalar.to_text());
    let mut verdicts = vec![scalar.classification];
    let nodes = (h.matrix_points as f64).powi(m as i32);
    s.push_str("## matrix\n");
    if nodes <= NODE_CAP as f64 {
        let grid = Grid::uniform(m, h.half_width, h.matrix_points)?;
        let v = matrix_hardy_certify(&gaussian(&grid, h.width), &a, env.a, env.b)?;
        s.push_str(&v.to_text());
        verdicts.push(v.classification);
    } else {
        let _ = writeln!(s, "skipped: a grid of {} points per axis in {m} dimensions exceeds {NODE_CAP} nodes", h.matrix_points);
    }
    ctx.out.text("hardy.txt", &s)?;
    print!("{s}");
    if verdicts.contains(&Classification::NotApplicable) {
        Ok(Status::NotApplicable("a decay hypothesis fails on the test data".into()))
    } else {
        Ok(Status::Ok)
    }
}

pub fn uniqueness(ctx: &mut Context) -> Result<Status, CliError> {
    let cfg = ctx.cfg.clone();
    let a = ctx.a()?;
    let (m, l) = (ctx.alg.m(), ctx.alg.l());
    let opts = &cfg.uniqueness;
    let env = &cfg.envelope;
    let mw = ctx.witness().is_some();
    let data = match opts.data {
        DataKind::Heat => {
            if !mw {
                return Err(CliError::NotApplicable("heat data needs a Moore-Wolf algebra; use gaussian data".into()));
            }
            let mut slices = GaussianSlices::heat(cfg.times.s, &ctx.alg, &cfg.mu(l)?)?;
            if opts.evolve != 0.0 {
                slices = slices.propagate(&PropagatorSpec::new(a.clone(), opts.evolve)?)?;
            }
            ExperimentData::Gaussian { slices, x_grid: cfg.x_grid(m)?, u_grid: cfg.u_grid(l)? }
        }
        DataKind::Gaussian => {
            let w = opts.width.unwrap_or(env.a);
            let f = sample(
                |p| {
                    let x2: f64 = p[..m].iter().map(|v| v * v).sum();
                    let u2: f64 = p[m..].iter().map(|v| v * v).sum();
                    c((-x2 / (4.0 * w) - u2 / 2.0).exp(), 0.0)
                },
                &group_grid(ctx)?,
                FieldSpace::Group { m },
            );
            let lift = if mw {
                None
            } else {
                let ax = Axis::new(opts.lift_half_width, opts.lift_points)?;
                Some(LiftGrids {
                    xi: ax.clone(),
                    s: ax,
                    mu_grid: MuGrid::symmetric(l + 1, opts.lift_mu_half_width, opts.lift_mu_points, cfg.mu_grid.exclusion)?,
                })
            };
            ExperimentData::Field { f, mu_grid: cfg.mu(l)?, lift }
        }
    };
    let ug = &cfg.grid;
    let u = (ug.u_half_width, 2.0 * ug.u_half_width / ug.u_points as f64);
    let warning = match &data {
        ExperimentData::Field { mu_grid, lift: Some(lg), .. } => {
            let mut axes = vec![u; l];
            axes.push((lg.s.half_width, lg.s.spacing()));
            aliasing_warning(&lg.mu_grid, &axes, true).or_else(|| aliasing_warning(mu_grid, &[u], true))
        }
        ExperimentData::Field { mu_grid, .. } => aliasing_warning(mu_grid, &[u], true),
        ExperimentData::Gaussian { slices, .. } => aliasing_warning(&slices.mu_grid, &[u], false),
    };
    let env0 = DecayEnvelope::rate(env.a, env.delta)?;
    let env_t = DecayEnvelope::rate(env.b, env.delta)?;
    let r = uniqueness_experiment(&ctx.alg, &data, &a, cfg.times.t_big, env0, env_t, env.ceiling)?;
    let mut s = r.to_text();
    if let Some(w) = warning {
        eprintln!("{w}");
        let _ = writeln!(s, "{w}");
    }
    if r.case2 {
        let _ = writeln!(
            s,
            "note: b < a, so the roles were swapped: e^{{iTL}}f was taken as data and evolved over -T; a, b and T above are the swapped values"
        );
    }
    ctx.out.text("uniqueness.txt", &s)?;
    ctx.out.csv("uniqueness.csv", &r.to_csv())?;
    print!("{s}");
    if r.classification == Classification::NotApplicable {
        Ok(Status::NotApplicable(format!("decay hypothesis failed: {}", r.failed.join("; "))))
    } else {
        Ok(Status::Ok)
    }
}

type Check = fn(&Context, &mut ChaCha8Rng) -> Result<String, String>;

fn check_text_round_trip(ctx: &Context, _: &mut ChaCha8Rng) -> Result<String, String> {
    let back = parse_algebra(&ctx.alg.to_text()).map_err(|e| e.to_string())?;
    if back == ctx.alg {
        Ok("parse(to_text) is the identity".into())
    } else {
        Err("algebra changed on a text round trip".into())
    }
}

fn check_associativity(ctx: &Context, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let alg = &ctx.alg;
    let mut point = || {
        GroupPoint::new(
            (0..alg.m()).map(|_| rng.random_range(-3.0..3.0)).collect(),
            (0..alg.l()).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
    };
    let mut worst = 0.0_f64;
    for _ in 0..32 {
        let (p, q, r) = (point(), point(), point());
        let mul = |a: &GroupPoint, b: &GroupPoint| group_multiply(alg, a, b).map_err(|e| e.to_string());
        let lhs = mul(&mul(&p, &q)?, &r)?;
        let rhs = mul(&p, &mul(&q, &r)?)?;
        for (x, y) in lhs.x.iter().chain(&lhs.u).zip(rhs.x.iter().chain(&rhs.u)) {
            worst = worst.max((x - y).abs());
        }
    }
    if worst < 1e-10 {
        Ok(format!("max defect {worst:.2e}"))
    } else {
        Err(format!("max defect {worst:.2e}"))
    }
}

fn check_pfaffian(_: &Context, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut m = RMat::zeros(6, 6);
    for i in 0..6 {
        for j in i + 1..6 {
            let v = rng.random_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    let pf = pfaffian(&m).map_err(|e| e.to_string())?;
    let det = m.determinant();
    let err = (pf * pf - det).abs() / det.abs().max(1e-300);
    if err < 1e-10 {
        Ok(format!("relative defect {err:.2e}"))
    } else {
        Err(format!("relative defect {err:.2e}"))
    }
}

fn check_frames(ctx: &Context, rng: &mut ChaCha8Rng) -> Result<String, String> {
    if ctx.witness().is_none() {
        return Ok("skipped: algebra is not Moore-Wolf".into());
    }
    let mut worst = 0.0_f64;
    for _ in 0..8 {
        let mu: Vec<f64> = (0..ctx.alg.l()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let Ok(fr) = build_frame(&ctx.alg, &mu) else { continue };
        worst = worst.max(fr.defects().max());
    }
    if worst < 1e-9 {
        Ok(format!("max defect {worst:.2e}"))
    } else {
        Err(format!("max defect {worst:.2e}"))
    }
}

fn h1_frame(mu: f64) -> Result<SymplecticFrame, String> {
    build_frame(&LieAlgebra2Step::heisenberg(1), &[mu]).map_err(|e| e.to_string())
}

fn check_kernel_semigroup(_: &Context, rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mu = rng.random_range(0.5..2.0);
    let fr = h1_frame(mu)?;
    let a = RMat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
    let (t, s) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
    let k = |t: f64| schrodinger_kernel_orig(t, &a, &fr).map_err(|e| e.to_string());
    let comp = gaussian_twisted_compose(&k(t)?, &k(s)?, &TwistForm::of_frame(&fr)).map_err(|e| e.to_string())?;
    let want = k(t + s)?;
    let err = ((comp.prefactor - want.prefactor).norm() / want.prefactor.norm())
        .max(max_abs_c(&(&comp.q - &want.q)) / max_abs_c(&want.q));
    if err < 1e-6 {
        Ok(format!("relative defect {err:.2e}"))
    } else {
        Err(format!("relative defect {err:.2e}"))
    }
}

fn check_hardy_threshold(_: &Context, _: &mut ChaCha8Rng) -> Result<String, String> {
    let grid = Grid::uniform(1, 20.0, 256).map_err(|e| e.to_string())?;
    let g = gaussian(&grid, 1.0);
    let at = hardy_certify(&g, 1.0, 1.0).map_err(|e| e.to_string())?;
    let above = hardy_certify(&g, 2.0, 1.0).map_err(|e| e.to_string())?;
    if at.classification == Classification::GaussianExtremal && above.classification == Classification::Unconstrained {
        Ok(format!("equality residual {:.2e}", at.gaussian_fit_residual.unwrap_or(f64::NAN)))
    } else {
        Err(format!("{:?} at equality, {:?} above", at.classification, above.classification))
    }
}

fn check_slopes(_: &Context, _: &mut ChaCha8Rng) -> Result<String, String> {
    let x: Vec<f64> = (1..=8).map(|k| 0.1 * k as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
    let slope = loglog_slope(&x, &y);
    if (slope - 2.0).abs() < 1e-12 {
        Ok(format!("slope {slope}"))
    } else {
        Err(format!("slope {slope}"))
    }
}

fn check_lift(_: &Context, _: &mut ChaCha8Rng) -> Result<String, String> {
    let free = LieAlgebra2Step::free(3);
    let lifted = is_mw(&mw_lift(&free).algebra, 64, 1).is_mw;
    if !is_mw(&free, 64, 1).is_mw && lifted {
        Ok("free(3) is not Moore-Wolf, its lift is".into())
    } else {
        Err("lift did not restore the Moore-Wolf property".into())
    }
}

fn check_config_round_trip(ctx: &Context, _: &mut ChaCha8Rng) -> Result<String, String> {
    let back = ExperimentConfig::parse(&ctx.cfg.to_toml()).map_err(|e| e.to_string())?;
    if back == ctx.cfg {
        Ok("parse(to_toml) is the identity".into())
    } else {
        Err("config changed on a round trip".into())
    }
}

const CHECKS: &[(&str, Check)] = &[
    ("algebra_text_round_trip", check_text_round_trip),
    ("group_law_associative", check_associativity),
    ("pfaffian_squared", check_pfaffian),
    ("frame_identities", check_frames),
    ("kernel_semigroup", check_kernel_semigroup),
    ("hardy_threshold", check_hardy_threshold),
    ("slope_fit", check_slopes),
    ("lift_restores_mw", check_lift),
    ("config_round_trip", check_config_round_trip),
];

pub fn selftest(ctx: &mut Context) -> Result<Status, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut s = String::new();
    let mut failed = 0;
    for (name, check) in CHECKS {
        let line = match check(ctx, &mut rng) {
            Ok(msg) => format!("{name}: pass: {msg}"),
            Err(msg) => {
                failed += 1;
                format!("{name}: FAIL: {msg}")
            }
        };
        println!("{line}");
        let _ = writeln!(s, "{line}");
    }
    ctx.out.text("selftest.txt", &s)?;
    if failed == 0 {
        Ok(Status::Ok)
    } else {
        Err(CliError::Numerical(format!("{failed} of {} selftest checks failed", CHECKS.len())))
    }
}
