//! Feasible domains, their self-concordant barriers and the normal-barrier
//! lift onto the conic hull `K = {(x, b) : b > 0, x/b ∈ X}`.
//!
//! The lifted barrier is `Ψ(x, b) = 400 (ψ(x/b) − 2ν ln b)`. It is
//! logarithmically homogeneous of degree `ν̄ = 800 ν`:
//! `Ψ(τ z) = Ψ(z) − ν̄ ln τ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BcoError, Result};
use crate::numerics::{dot, norm2, SymMatrix};

/// Multiplier in front of the lifted barrier.
pub const LIFT_SCALE: f64 = 400.0;

/// Relative slack below which a point is treated as on the boundary.
const INTERIOR_TOL: f64 = 1e-12;

/// Serializable description of a domain, as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        radius: f64,
        dim: usize,
    },
    Polytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Ball { radius, dim } => Domain::ball(*dim, *radius),
            DomainSpec::Polytope { a, b } => Domain::polytope(a.clone(), b.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Ball { radius: f64 },
    Polytope { a: Vec<Vec<f64>>, b: Vec<f64> },
}

/// Compact convex domain containing the origin in its interior.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    outer_radius: f64,
    diameter: f64,
}

/// Result of a membership query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    /// Strictly interior (slack above the usable tolerance).
    pub interior: bool,
    /// Closed-set membership (`slack ≥ 0`).
    pub inside: bool,
    /// `r² − ‖x‖²` for a ball, `min_i (b_i − a_iᵀx)` for a polytope.
    pub slack: f64,
}

impl Domain {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(BcoError::Config(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(BcoError::Config("dimension must be at least 1".into()));
        }
        Ok(Domain {
            kind: DomainKind::Ball { radius },
            dim,
            outer_radius: radius,
            diameter: 2.0 * radius,
        })
    }

    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let m = a.len();
        if m == 0 || m != b.len() {
            return Err(BcoError::Config(format!(
                "polytope needs matching A rows and b entries (got {m} and {})",
                b.len()
            )));
        }
        let dim = a[0].len();
        if dim == 0 || a.iter().any(|row| row.len() != dim) {
            return Err(BcoError::Config(
                "polytope rows must share one positive dimension".into(),
            ));
        }
        if let Some((i, bi)) = b.iter().enumerate().find(|(_, &bi)| !(bi > 0.0)) {
            return Err(BcoError::Config(format!(
                "origin is not strictly feasible: b[{i}] = {bi}"
            )));
        }
        // Every signed axis must be cut off by some constraint.
        for k in 0..dim {
            for sign in [1.0, -1.0] {
                if !a.iter().any(|row| sign * row[k] > 0.0) {
                    let dir = if sign > 0.0 { "+" } else { "-" };
                    return Err(BcoError::Config(format!(
                        "polytope is unbounded along {dir}e{k}"
                    )));
                }
            }
        }
        let mut domain = Domain {
            kind: DomainKind::Polytope { a, b },
            dim,
            outer_radius: f64::NAN,
            diameter: f64::NAN,
        };
        let vertices = domain.vertices();
        if vertices.len() <= dim {
            return Err(BcoError::Config(
                "polytope is unbounded or degenerate".into(),
            ));
        }
        let mut outer = 0.0_f64;
        let mut diam = 0.0_f64;
        for (i, v) in vertices.iter().enumerate() {
            outer = outer.max(norm2(v));
            for w in &vertices[i + 1..] {
                diam = diam.max(norm2(&crate::numerics::sub(v, w)));
            }
        }
        domain.outer_radius = outer;
        domain.diameter = diam;
        Ok(domain)
    }

    /// Axis-aligned box `[lo_k, hi_k]` as a polytope.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let d = lo.len();
        let mut a = Vec::with_capacity(2 * d);
        let mut b = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut up = vec![0.0; d];
            up[k] = 1.0;
            a.push(up);
            b.push(hi[k]);
            let mut down = vec![0.0; d];
            down[k] = -1.0;
            a.push(down);
            b.push(-lo[k]);
        }
        Self::polytope(a, b)
    }

    /// The cube `[-1, 1]^d`.
    pub fn unit_box(dim: usize) -> Result<Self> {
        Self::boxed(&vec![-1.0; dim], &vec![1.0; dim])
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `max_{x∈X} ‖x‖₂`.
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Number of linear constraints (zero for a ball).
    pub fn constraint_count(&self) -> usize {
        match &self.kind {
            DomainKind::Ball { .. } => 0,
            DomainKind::Polytope { b, .. } => b.len(),
        }
    }

    /// Rescaled copy with `max ‖x‖₂ = 1`.
    pub fn normalized(&self) -> Domain {
        let s = self.outer_radius;
        match &self.kind {
            DomainKind::Ball { .. } => Domain {
                kind: DomainKind::Ball { radius: 1.0 },
                dim: self.dim,
                outer_radius: 1.0,
                diameter: 2.0,
            },
            DomainKind::Polytope { a, b } => Domain {
                kind: DomainKind::Polytope {
                    a: a.clone(),
                    b: b.iter().map(|v| v / s).collect(),
                },
                dim: self.dim,
                outer_radius: 1.0,
                diameter: self.diameter / s,
            },
        }
    }

    pub fn to_spec(&self) -> DomainSpec {
        match &self.kind {
            DomainKind::Ball { radius } => DomainSpec::Ball {
                radius: *radius,
                dim: self.dim,
            },
            DomainKind::Polytope { a, b } => DomainSpec::Polytope {
                a: a.clone(),
                b: b.clone(),
            },
        }
    }

    fn slack_scale(&self) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => radius * radius,
            DomainKind::Polytope { b, .. } => b.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Membership {
        let slack = match &self.kind {
            DomainKind::Ball { radius } => radius * radius - dot(x, x),
            DomainKind::Polytope { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| bi - dot(row, x))
                .fold(f64::INFINITY, f64::min),
        };
        Membership {
            interior: slack > INTERIOR_TOL * (1.0 + self.slack_scale()),
            inside: slack >= 0.0,
            slack,
        }
    }

    pub(crate) fn require_interior(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(BcoError::Invariant(format!(
                "point has dimension {}, domain has {}",
                x.len(),
                self.dim
            )));
        }
        let m = self.contains(x);
        if m.interior && x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(BcoError::DomainViolation { slack: m.slack })
        }
    }

    /// Largest `s ≥ 0` with `p + s·dir ∈ X`, for `p` inside the domain.
    pub fn ray_exit(&self, p: &[f64], dir: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => {
                let a = dot(dir, dir);
                if a == 0.0 {
                    return f64::INFINITY;
                }
                let bq = dot(p, dir);
                let c = dot(p, p) - radius * radius;
                let disc = (bq * bq - a * c).max(0.0);
                (-bq + disc.sqrt()) / a
            }
            DomainKind::Polytope { a, b } => a
                .iter()
                .zip(b)
                .filter_map(|(row, bi)| {
                    let rate = dot(row, dir);
                    (rate > 0.0).then(|| ((bi - dot(row, p)) / rate).max(0.0))
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Uniform sample from the domain.
    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec<f64> {
        match &self.kind {
            DomainKind::Ball { radius } => {
                let dir = crate::rng::unit_vector(rng, self.dim);
                let r = radius * rng.gen::<f64>().powf(1.0 / self.dim as f64);
                dir.iter().map(|v| v * r).collect()
            }
            DomainKind::Polytope { .. } => {
                let r = self.outer_radius;
                loop {
                    let x: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-r..=r)).collect();
                    if self.contains(&x).inside {
                        return x;
                    }
                }
            }
        }
    }

    /// Uniform sample shrunk toward the origin so that it is strictly interior.
    pub fn sample_interior(&self, rng: &mut impl Rng, shrink: f64) -> Vec<f64> {
        self.sample_uniform(rng)
            .into_iter()
            .map(|v| v * shrink)
            .collect()
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::Ball { radius } => {
                let n = norm2(x);
                if n <= *radius {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / n).collect()
                }
            }
            DomainKind::Polytope { a, b } => {
                if self.contains(x).inside {
                    return x.to_vec();
                }
                dykstra_halfspaces(a, b, x)
            }
        }
    }

    /// Vertices of a polytope by enumerating `d`-subsets of active constraints.
    /// Empty for a ball.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let DomainKind::Polytope { a, b } = &self.kind else {
            return Vec::new();
        };
        let d = self.dim;
        let m = a.len();
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..d).collect();
        if m < d {
            return out;
        }
        let scale = b.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
        loop {
            let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &a[i]).collect();
            let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
            if let Some(v) = solve_square(&rows, &rhs) {
                let feasible = a
                    .iter()
                    .zip(b)
                    .all(|(row, bi)| dot(row, &v) <= bi + 1e-9 * scale);
                if feasible
                    && !out
                        .iter()
                        .any(|w| norm2(&crate::numerics::sub(w, &v)) < 1e-9 * scale)
                {
                    out.push(v);
                }
            }
            // next combination
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < m - d + k {
                    idx[k] += 1;
                    for j in (k + 1)..d {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(rows: &[&Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .zip(rhs)
        .map(|(r, &v)| {
            let mut row = (*r).clone();
            row.push(v);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = m[r][n];
        for c in (r + 1)..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Some(x)
}

/// Dykstra's alternating projections onto an intersection of halfspaces.
fn dykstra_halfspaces(a: &[Vec<f64>], b: &[f64], x0: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mut x = x0.to_vec();
    let mut corrections = vec![vec![0.0; x0.len()]; m];
    for _ in 0..20_000 {
        let prev = x.clone();
        for i in 0..m {
            let y: Vec<f64> = x.iter().zip(&corrections[i]).map(|(v, c)| v + c).collect();
            let viol = dot(&a[i], &y) - b[i];
            let proj = if viol > 0.0 {
                let nn = dot(&a[i], &a[i]);
                y.iter()
                    .zip(&a[i])
                    .map(|(v, ai)| v - viol / nn * ai)
                    .collect()
            } else {
                y.clone()
            };
            corrections[i] = y.iter().zip(&proj).map(|(v, p)| v - p).collect();
            x = proj;
        }
        if norm2(&crate::numerics::sub(&x, &prev)) < 1e-15 {
            break;
        }
    }
    x
}

/// Value, gradient and Hessian of a barrier at one point.
#[derive(Clone, Debug)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
}

/// A `ν`-self-concordant barrier on a domain.
#[derive(Clone, Debug)]
pub struct Barrier {
    domain: Domain,
    nu: f64,
}

/// `ψ(x) = −ln(r² − ‖x‖²)`, a 1-self-concordant barrier for the ball.
pub fn ball_barrier(dim: usize, radius: f64) -> Result<Barrier> {
    Ok(Barrier {
        domain: Domain::ball(dim, radius)?,
        nu: 1.0,
    })
}

/// Log barrier `ψ(x) = −Σ ln(b_i − a_iᵀx)` with `ν = m`.
pub fn polytope_barrier(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Barrier> {
    let domain = Domain::polytope(a, b)?;
    let nu = domain.constraint_count() as f64;
    Ok(Barrier { domain, nu })
}

impl Barrier {
    /// The canonical barrier for `domain`.
    pub fn for_domain(domain: Domain) -> Barrier {
        let nu = match domain.kind() {
            DomainKind::Ball { .. } => 1.0,
            DomainKind::Polytope { b, .. } => b.len() as f64,
        };
        Barrier { domain, nu }
    }

    /// Same barrier with a different declared parameter. Used to build
    /// deliberately wrong instances for falsification checks.
    pub fn with_declared_nu(&self, nu: f64) -> Barrier {
        Barrier {
            domain: self.domain.clone(),
            nu,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.domain.require_interior(x)?;
        Ok(match self.domain.kind() {
            DomainKind::Ball { radius } => -(radius * radius - dot(x, x)).ln(),
            DomainKind::Polytope { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| -(bi - dot(row, x)).ln())
                .sum(),
        })
    }

    /// Exact value, gradient and Hessian.
    pub fn oracle(&self, x: &[f64]) -> Result<BarrierEval> {
        self.domain.require_interior(x)?;
        let d = self.dim();
        Ok(match self.domain.kind() {
            DomainKind::Ball { radius } => {
                let q = radius * radius - dot(x, x);
                let grad = x.iter().map(|v| 2.0 * v / q).collect();
                let mut hess = SymMatrix::outer(x, 4.0 / (q * q));
                hess.add_diag(2.0 / q);
                BarrierEval {
                    value: -q.ln(),
                    grad,
                    hess,
                }
            }
            DomainKind::Polytope { a, b } => {
                let mut value = 0.0;
                let mut grad = vec![0.0; d];
                let mut hess = SymMatrix::zeros(d);
                for (row, bi) in a.iter().zip(b) {
                    let s = bi - dot(row, x);
                    value -= s.ln();
                    for k in 0..d {
                        grad[k] += row[k] / s;
                    }
                    hess.add_assign(&SymMatrix::outer(row, 1.0 / (s * s)), 1.0);
                }
                BarrierEval { value, grad, hess }
            }
        })
    }
}

/// `Ψ(x, b) = 400 (ψ(x/b) − 2ν ln b)` on the conic hull of the lifted domain.
#[derive(Clone, Debug)]
pub struct NormalBarrier {
    base: Barrier,
    nu_bar: f64,
}

pub fn lift_normal(barrier: &Barrier) -> NormalBarrier {
    NormalBarrier {
        base: barrier.clone(),
        nu_bar: 2.0 * LIFT_SCALE * barrier.nu(),
    }
}

impl NormalBarrier {
    pub fn base(&self) -> &Barrier {
        &self.base
    }

    /// `ν̄ = 800 ν`.
    pub fn nu_bar(&self) -> f64 {
        self.nu_bar
    }

    /// Dimension of the unlifted domain.
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], f64)> {
        let d = self.dim();
        if z.len() != d + 1 {
            return Err(BcoError::Invariant(format!(
                "lifted point has length {}, expected {}",
                z.len(),
                d + 1
            )));
        }
        let b = z[d];
        if !(b > 0.0) {
            return Err(BcoError::DomainViolation { slack: b });
        }
        Ok((&z[..d], b))
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        let (x, b) = self.split(z)?;
        let inner: Vec<f64> = x.iter().map(|v| v / b).collect();
        let psi = self.base.value(&inner)?;
        Ok(LIFT_SCALE * (psi - 2.0 * self.base.nu() * b.ln()))
    }

    /// Value, gradient and Hessian in `ℝ^{d+1}` by the chain rule through
    /// `(x, b) ↦ x / b`. With `p = x/b`, `g = ∇ψ(p)`, `M = ∇²ψ(p)`:
    ///
    /// ```text
    /// ∇ₓΨ   = 400 g / b
    /// ∂_bΨ  = −400 (gᵀp + 2ν) / b
    /// ∇ₓₓΨ  = 400 M / b²
    /// ∇ₓ_bΨ = −400 (M p + g) / b²
    /// ∂_bbΨ = 400 (pᵀM p + 2 gᵀp + 2ν) / b²
    /// ```
    pub fn oracle(&self, z: &[f64]) -> Result<BarrierEval> {
        let (x, b) = self.split(z)?;
        let d = self.dim();
        let nu = self.base.nu();
        let p: Vec<f64> = x.iter().map(|v| v / b).collect();
        let inner = self.base.oracle(&p)?;
        let g = &inner.grad;
        let m = &inner.hess;
        let gp = dot(g, &p);
        let mp = m.matvec(&p);
        let pmp = dot(&p, &mp);

        let s = LIFT_SCALE;
        let mut grad = Vec::with_capacity(d + 1);
        grad.extend(g.iter().map(|gi| s * gi / b));
        grad.push(-s * (gp + 2.0 * nu) / b);

        let b2 = b * b;
        let mut hess = SymMatrix::zeros(d + 1);
        for i in 0..d {
            for j in i..d {
                hess.set(i, j, s * m.get(i, j) / b2);
            }
            hess.set(i, d, -s * (mp[i] + g[i]) / b2);
        }
        hess.set(d, d, s * (pmp + 2.0 * gp + 2.0 * nu) / b2);

        Ok(BarrierEval {
            value: s * (inner.value - 2.0 * nu * b.ln()),
            grad,
            hess,
        })
    }
}

/// Minkowski gauge `π_pole(y) = inf{t ≥ 0 : pole + (y − pole)/t ∈ X}`,
/// located by bisection on membership to `1e-10`.
pub fn minkowski(domain: &Domain, pole: &[f64], y: &[f64]) -> Result<f64> {
    domain.require_interior(pole)?;
    let dir = crate::numerics::sub(y, pole);
    if norm2(&dir) == 0.0 {
        return Ok(0.0);
    }
    let member = |t: f64| -> bool {
        let p: Vec<f64> = pole.iter().zip(&dir).map(|(c, v)| c + v / t).collect();
        domain.contains(&p).inside
    };
    // Membership is monotone in t: feasible for t ≥ π, infeasible below.
    if !member(1.0) {
        return Err(BcoError::DomainViolation {
            slack: domain.contains(y).slack,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || !member(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
