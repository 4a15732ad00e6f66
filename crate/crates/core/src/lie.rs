//! Step-2 nilpotent Lie algebras in a fixed split basis `V_1..V_m, U_1..U_l`,
//! the group law in exponential coordinates, and the lift to an MW algebra.

use crate::error::{Error, Result};
use crate::linalg::RMat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;

/// Tolerance on `|det J_mu|` at `|mu| = 1` used by the genericity tests.
pub const GENERIC_TOL: f64 = 1e-10;

/// Structure constants `c[s][j][k]`, the coefficient of `U_s` in `[V_j, V_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra2Step {
    m: usize,
    l: usize,
    c: Vec<f64>,
}

impl LieAlgebra2Step {
    /// Builds an algebra from a dense `l x m x m` tensor.
    pub fn new(m: usize, l: usize, c: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if m == 0 || l == 0 {
            return Err(Error::DimensionMismatch("m and l must be positive".into()));
        }
        if c.len() != l || c.iter().any(|s| s.len() != m || s.iter().any(|r| r.len() != m)) {
            return Err(Error::DimensionMismatch(format!(
                "structure tensor must be {l} x {m} x {m}"
            )));
        }
        let flat = c.into_iter().flatten().flatten().collect();
        Ok(Self { m, l, c: flat })
    }

    /// Builds an algebra from the entries `(s, j, k, value)` with `j < k`;
    /// the antisymmetric partner is filled in.
    pub fn from_brackets(m: usize, l: usize, entries: &[(usize, usize, usize, f64)]) -> Result<Self> {
        if m == 0 || l == 0 {
            return Err(Error::DimensionMismatch("m and l must be positive".into()));
        }
        let mut alg = Self { m, l, c: vec![0.0; l * m * m] };
        for &(s, j, k, v) in entries {
            if s >= l || j >= m || k >= m {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({s}, {j}, {k}) out of range for m = {m}, l = {l}"
                )));
            }
            if j >= k {
                return Err(Error::InvalidInput(format!("entry ({s}, {j}, {k}) needs j < k")));
            }
            *alg.at_mut(s, j, k) = v;
            *alg.at_mut(s, k, j) = -v;
        }
        Ok(alg)
    }

    /// The Heisenberg algebra `H_n`: `[V_j, V_{n+j}] = U`.
    pub fn heisenberg(n: usize) -> Self {
        let entries: Vec<_> = (0..n).map(|j| (0, j, n + j, 1.0)).collect();
        Self::from_brackets(2 * n, 1, &entries).expect("valid Heisenberg data")
    }

    /// The free step-2 algebra on `g` generators, one central direction per pair `j < k`.
    pub fn free(g: usize) -> Self {
        let mut entries = Vec::new();
        let mut s = 0;
        for j in 0..g {
            for k in j + 1..g {
                entries.push((s, j, k, 1.0));
                s += 1;
            }
        }
        Self::from_brackets(g, s.max(1), &entries).expect("valid free algebra data")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn c(&self, s: usize, j: usize, k: usize) -> f64 {
        self.c[(s * self.m + j) * self.m + k]
    }

    fn at_mut(&mut self, s: usize, j: usize, k: usize) -> &mut f64 {
        &mut self.c[(s * self.m + j) * self.m + k]
    }

    /// `[x, y]_s = sum_{jk} c[s][j][k] x_j y_k`.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..self.l)
            .map(|s| {
                let mut acc = 0.0;
                for j in 0..self.m {
                    for k in 0..self.m {
                        acc += self.c(s, j, k) * x[j] * y[k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Serialises to the line-based algebra file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("m = {}\nl = {}\n", self.m, self.l);
        for s in 0..self.l {
            for j in 0..self.m {
                for k in j + 1..self.m {
                    let v = self.c(s, j, k);
                    if v != 0.0 {
                        let _ = writeln!(out, "bracket {s} {j} {k} {v:?}");
                    }
                }
            }
        }
        out
    }
}

/// Parses the algebra file format.
///
/// ```text
/// # Heisenberg group
/// m = 2
/// l = 1
/// bracket 0 0 1 1.0     # [V_0, V_1] = 1.0 U_0
/// ```
///
/// Indices are zero-based, `bracket s j k value` requires `j < k`, and
/// `#` starts a comment. Every error cites its line number.
pub fn parse_algebra(text: &str) -> Result<LieAlgebra2Step> {
    let mut m = None;
    let mut l = None;
    let mut entries = Vec::new();
    let mut lines_of_entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line, msg };
        if let Some((key, value)) = body.split_once('=') {
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| err(format!("expected a positive integer, found {:?}", value.trim())))?;
            if value == 0 {
                return Err(err("dimension must be positive".into()));
            }
            match key.trim() {
                "m" if m.is_none() => m = Some(value),
                "l" if l.is_none() => l = Some(value),
                "m" | "l" => return Err(err(format!("duplicate key {:?}", key.trim()))),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
            continue;
        }
        let mut words = body.split_whitespace();
        if words.next() != Some("bracket") {
            return Err(err(format!("expected `m =`, `l =` or `bracket`, found {body:?}")));
        }
        let fields: Vec<&str> = words.collect();
        if fields.len() != 4 {
            return Err(err("bracket needs four fields: s j k value".into()));
        }
        let idx = |w: &str| w.parse::<usize>().map_err(|_| err(format!("bad index {w:?}")));
        let (s, j, k) = (idx(fields[0])?, idx(fields[1])?, idx(fields[2])?);
        let v: f64 = fields[3].parse().map_err(|_| err(format!("bad value {:?}", fields[3])))?;
        if !v.is_finite() {
            return Err(err("value must be finite".into()));
        }
        if j >= k {
            return Err(err(format!("bracket {s} {j} {k}: need j < k")));
        }
        entries.push((s, j, k, v));
        lines_of_entries.push(line);
    }
    let last = text.lines().count().max(1);
    let m = m.ok_or(Error::Parse { line: last, msg: "missing `m =`".into() })?;
    let l = l.ok_or(Error::Parse { line: last, msg: "missing `l =`".into() })?;
    for (&(s, j, k, _), &line) in entries.iter().zip(&lines_of_entries) {
        if s >= l || k >= m {
            return Err(Error::Parse {
                line,
                msg: format!("bracket {s} {j} {k} out of range for m = {m}, l = {l}"),
            });
        }
    }
    LieAlgebra2Step::from_brackets(m, l, &entries)
}

/// Outcome of [`validate_algebra`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    /// Rank of the `l x m^2` matrix of flattened bracket slices.
    pub slice_rank: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_algebra(alg: &LieAlgebra2Step) -> ValidationReport {
    let (m, l) = (alg.m, alg.l);
    let mut violations = Vec::new();
    let mut worst = 0.0_f64;
    for s in 0..l {
        for j in 0..m {
            for k in 0..m {
                worst = worst.max((alg.c(s, j, k) + alg.c(s, k, j)).abs());
            }
        }
    }
    if worst > 1e-12 {
        violations.push(format!("antisymmetry: max |c[s][j][k] + c[s][k][j]| = {worst:.3e}"));
    }
    if alg.c.iter().all(|&v| v == 0.0) {
        violations.push("non-abelian: all structure constants vanish".into());
    }
    let flat = RMat::from_row_slice(l, m * m, &alg.c);
    let sv = flat.svd(false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &x| a.max(x));
    let rank = sv.iter().filter(|&&x| x > 1e-10 * top.max(1e-300)).count();
    if rank < l {
        violations.push(format!("surjectivity: [g1, g1] has dimension {rank} < l = {l}"));
    }
    ValidationReport {
        violations,
        notes: vec!["Jacobi identity holds automatically: all double brackets vanish in step 2".into()],
        slice_rank: rank,
    }
}

/// A point `(x, u)` of the group in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Self {
        Self { x, u }
    }

    pub fn identity(alg: &LieAlgebra2Step) -> Self {
        Self { x: vec![0.0; alg.m], u: vec![0.0; alg.l] }
    }

    pub fn inverse(&self) -> Self {
        Self { x: self.x.iter().map(|v| -v).collect(), u: self.u.iter().map(|v| -v).collect() }
    }
}

fn check_point(alg: &LieAlgebra2Step, p: &GroupPoint) -> Result<()> {
    if p.x.len() != alg.m || p.u.len() != alg.l {
        return Err(Error::DimensionMismatch(format!(
            "point has shape ({}, {}), algebra ({}, {})",
            p.x.len(),
            p.u.len(),
            alg.m,
            alg.l
        )));
    }
    Ok(())
}

/// `(x, u)(y, v) = (x + y, u + v + [x, y]/2)`.
pub fn group_multiply(alg: &LieAlgebra2Step, p: &GroupPoint, q: &GroupPoint) -> Result<GroupPoint> {
    check_point(alg, p)?;
    check_point(alg, q)?;
    let br = alg.bracket(&p.x, &q.x);
    Ok(GroupPoint {
        x: p.x.iter().zip(&q.x).map(|(a, b)| a + b).collect(),
        u: (0..alg.l).map(|s| p.u[s] + q.u[s] + 0.5 * br[s]).collect(),
    })
}

/// `(x, u) -> (t x, t^2 u)`.
pub fn dilate(alg: &LieAlgebra2Step, t: f64, p: &GroupPoint) -> Result<GroupPoint> {
    check_point(alg, p)?;
    if t == 0.0 {
        return Err(Error::InvalidInput("dilation factor must be nonzero".into()));
    }
    Ok(GroupPoint {
        x: p.x.iter().map(|v| t * v).collect(),
        u: p.u.iter().map(|v| t * t * v).collect(),
    })
}

/// `(|x|^4 + 16 |u|^2)^(1/4)`.
pub fn homogeneous_norm(p: &GroupPoint) -> f64 {
    let x2: f64 = p.x.iter().map(|v| v * v).sum();
    let u2: f64 = p.u.iter().map(|v| v * v).sum();
    (x2 * x2 + 16.0 * u2).powf(0.25)
}

/// Smallest `C` with `(1-eps)|x|^2 + |u|/C <= ||p||^2 <= (1+eps)|x|^2 + C|u|`
/// over the given points.
pub fn norm_sandwich_constant(eps: f64, points: &[GroupPoint]) -> f64 {
    let mut cmax = 1.0_f64;
    for p in points {
        let x2: f64 = p.x.iter().map(|v| v * v).sum();
        let u = p.u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2 = homogeneous_norm(p).powi(2);
        if u > 0.0 {
            let up = n2 - (1.0 + eps) * x2;
            if up > 0.0 {
                cmax = cmax.max(up / u);
            }
            let room = n2 - (1.0 - eps) * x2;
            if room > 0.0 {
                cmax = cmax.max(u / room);
            } else {
                return f64::INFINITY;
            }
        }
    }
    cmax
}

/// A linear form `mu` on the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralForm {
    pub mu: Vec<f64>,
}

impl CentralForm {
    pub fn new(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn norm(&self) -> f64 {
        self.mu.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Membership in the generic cone: `|det J_mu| > tol |mu|^m`.
    pub fn is_generic(&self, alg: &LieAlgebra2Step) -> bool {
        let det = j_matrix(alg, &self.mu).determinant().abs();
        det > GENERIC_TOL * self.norm().powi(alg.m as i32) && det > 0.0
    }
}

/// `(J_mu)_{jk} = sum_s mu_s c[s][j][k]`.
pub fn j_matrix(alg: &LieAlgebra2Step, mu: &[f64]) -> RMat {
    assert_eq!(mu.len(), alg.l, "mu has the wrong length");
    RMat::from_fn(alg.m, alg.m, |j, k| (0..alg.l).map(|s| mu[s] * alg.c(s, j, k)).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MwReport {
    pub is_mw: bool,
    pub witness: Option<Vec<f64>>,
    /// Largest `|det J_mu|` seen over the unit-sphere samples.
    pub max_abs_det: f64,
}

/// Monte-Carlo test for the Moore-Wolf property. `det J_mu` is a polynomial
/// in `mu`, so one nondegenerate sample certifies genericity.
pub fn is_mw(alg: &LieAlgebra2Step, trials: usize, seed: u64) -> MwReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_det = 0.0_f64;
    if alg.m % 2 == 1 {
        return MwReport { is_mw: false, witness: None, max_abs_det };
    }
    for _ in 0..trials {
        let mut mu: Vec<f64> = (0..alg.l).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            continue;
        }
        mu.iter_mut().for_each(|v| *v /= n);
        let det = j_matrix(alg, &mu).determinant().abs();
        max_abs_det = max_abs_det.max(det);
        if det > GENERIC_TOL {
            return MwReport { is_mw: true, witness: Some(mu), max_abs_det };
        }
    }
    MwReport { is_mw: false, witness: None, max_abs_det }
}

/// The lifted algebra `h = (g1 x g1*) + (g2 x R)` together with its coordinate layout:
/// `h1 = (x, xi)`, `h2 = (u, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MwLift {
    pub algebra: LieAlgebra2Step,
    pub base_m: usize,
    pub base_l: usize,
}

impl MwLift {
    pub fn x_range(&self) -> std::ops::Range<usize> {
        0..self.base_m
    }

    pub fn xi_range(&self) -> std::ops::Range<usize> {
        self.base_m..2 * self.base_m
    }

    pub fn u_range(&self) -> std::ops::Range<usize> {
        0..self.base_l
    }

    /// Index of the extra central coordinate `s`.
    pub fn s_index(&self) -> usize {
        self.base_l
    }

    /// `(x, u) -> ((x, 0), (u, 0))`.
    pub fn embed(&self, p: &GroupPoint) -> GroupPoint {
        let mut x = p.x.clone();
        x.resize(2 * self.base_m, 0.0);
        let mut u = p.u.clone();
        u.push(0.0);
        GroupPoint { x, u }
    }

    /// The subgroup element `(xi; s) = ((0, xi), (0, s))`.
    pub fn subgroup_point(&self, xi: &[f64], s: f64) -> GroupPoint {
        let mut x = vec![0.0; self.base_m];
        x.extend_from_slice(xi);
        let mut u = vec![0.0; self.base_l];
        u.push(s);
        GroupPoint { x, u }
    }
}

/// Lift with bracket `[(V, xi), (V', xi')] = ([V, V'], xi'(V) - xi(V'))`.
pub fn mw_lift(alg: &LieAlgebra2Step) -> MwLift {
    let (m, l) = (alg.m, alg.l);
    let mut entries = Vec::new();
    for s in 0..l {
        for j in 0..m {
            for k in j + 1..m {
                let v = alg.c(s, j, k);
                if v != 0.0 {
                    entries.push((s, j, k, v));
                }
            }
        }
    }
    // xi'(V) - xi(V') for basis pairs: [V_j, xi_j] = +1 on the new slice.
    for j in 0..m {
        entries.push((l, j, m + j, 1.0));
    }
    let algebra = LieAlgebra2Step::from_brackets(2 * m, l + 1, &entries).expect("lift data is valid");
    MwLift { algebra, base_m: m, base_l: l }
}
