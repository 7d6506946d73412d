//! Operator catalog: resolvents of set-valued monotone operators, cocoercive
//! maps, monotone Lipschitzian maps, the joint coupling and linear maps.
//!
//! Every operator is built from a serializable [`Descriptor`] and keeps it,
//! so problem files round-trip. Constants (cocoercivity, Lipschitz) are
//! computed once at build time from exact symmetric eigen- and singular
//! value decompositions. Evaluation is pure and allocation-light.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blockspace::{BlockVec, SpaceLayout};
use crate::error::{Error, Result};

/// Relative tolerance used for symmetry, definiteness and feasibility checks.
const STRUCT_TOL: f64 = 1e-10;

/// A catalog entry as it appears in problem files, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Descriptor {
    /// Normal cone of the box `[lo, hi]`; bounds may be infinite.
    NormalConeBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Normal cone of the affine set `{x : Mx = d}`.
    NormalConeAffine { m: Vec<Vec<f64>>, d: Vec<f64> },
    /// Normal cone of `{x : <a, x> <= b}`.
    NormalConeHalfspace { a: Vec<f64>, b: f64 },
    /// The operator whose graph is `{0} x H`; its resolvent is identically 0.
    ZeroInverse,
    /// The zero map. As a cocoercive operator it carries a nominal constant.
    #[serde(alias = "zero")]
    ZeroOperator {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    /// Subdifferential of `weight * ||x||_1`.
    SubdiffL1 { weight: f64 },
    /// Subdifferential of `x -> 1/2 <x, Px> - <c, x>` with `P` symmetric psd.
    ProxQuadratic { p: Vec<Vec<f64>>, c: Vec<f64> },
    /// Gradient `x -> Px - c` of the same quadratic.
    GradientQuadratic {
        p: Vec<Vec<f64>>,
        c: Vec<f64>,
        /// Constant used only when `P = 0`, where any value is admissible.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    /// `x -> Mx + b` with `M + M^T` positive semidefinite.
    AffineMonotone { m: Vec<Vec<f64>>, b: Vec<f64> },
    /// `x -> Sx` where `S` is the skew part of `m`.
    RotationMonotone { m: Vec<Vec<f64>> },
}

impl Descriptor {
    pub fn name(&self) -> &'static str {
        match self {
            Descriptor::NormalConeBox { .. } => "normal_cone_box",
            Descriptor::NormalConeAffine { .. } => "normal_cone_affine",
            Descriptor::NormalConeHalfspace { .. } => "normal_cone_halfspace",
            Descriptor::ZeroInverse => "zero_inverse",
            Descriptor::ZeroOperator { .. } => "zero_operator",
            Descriptor::SubdiffL1 { .. } => "subdiff_l1",
            Descriptor::ProxQuadratic { .. } => "prox_quadratic",
            Descriptor::GradientQuadratic { .. } => "gradient_quadratic",
            Descriptor::AffineMonotone { .. } => "affine_monotone",
            Descriptor::RotationMonotone { .. } => "rotation_monotone",
        }
    }

    pub fn zero() -> Self {
        Descriptor::ZeroOperator { alpha: None }
    }

    pub fn zero_with_alpha(alpha: f64) -> Self {
        Descriptor::ZeroOperator { alpha: Some(alpha) }
    }
}

/// Row-major dense matrix with the two products the solver needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidParameter("matrix has no rows".into()));
        }
        let c = rows[0].len();
        if c == 0 {
            return Err(Error::InvalidParameter("matrix has no columns".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension {
                    context: format!("matrix row {j}"),
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix data".into(),
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { rows, cols, data }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `out += coeff * M x`.
    pub fn mul_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            *o += coeff * s;
        }
    }

    /// `out += coeff * M^T v`.
    pub fn tmul_acc(&self, coeff: f64, v: &[f64], out: &mut [f64]) {
        for (i, vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let w = coeff * vi;
            for (o, a) in out.iter_mut().zip(row) {
                *o += w * a;
            }
        }
    }

    fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn square(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<Dense> {
    let m = Dense::from_rows(rows)?;
    if m.rows != dim || m.cols != dim {
        return Err(Error::Dimension {
            context: format!("{what} matrix ({}x{})", m.rows, m.cols),
            expected: dim,
            got: if m.rows != dim { m.rows } else { m.cols },
        });
    }
    Ok(m)
}

fn vector(v: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    if v.len() != dim {
        return Err(Error::Dimension {
            context: what.into(),
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter(format!("{what} contains NaN")));
    }
    Ok(v.to_vec())
}

/// Eigendecomposition of a symmetric psd matrix, checked.
struct SymPsd {
    vecs: Dense,
    vals: Vec<f64>,
}

fn sym_psd(p: &Dense) -> Result<SymPsd> {
    let scale = p.max_abs().max(1.0);
    for i in 0..p.rows {
        for j in 0..i {
            let (a, b) = (p.data[i * p.cols + j], p.data[j * p.cols + i]);
            if (a - b).abs() > STRUCT_TOL * scale {
                return Err(Error::InvalidParameter(format!(
                    "quadratic matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let m = p.to_nalgebra();
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -STRUCT_TOL * scale {
        return Err(Error::IndefiniteQuadratic(min));
    }
    Ok(SymPsd {
        vecs: Dense::from_nalgebra(&eig.eigenvectors),
        vals: eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
    })
}

fn check_monotone(m: &Dense) -> Result<()> {
    let a = m.to_nalgebra();
    let sym = (&a + a.transpose()) * 0.5;
    let min = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -STRUCT_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotMonotone(min));
    }
    Ok(())
}

fn spectral_norm(m: &Dense) -> f64 {
    if m.is_zero() {
        return 0.0;
    }
    m.to_nalgebra()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "resolvent parameter must be positive, got {gamma}"
        )))
    }
}

fn check_len(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: context.into(),
            expected,
            got,
        })
    }
}

#[derive(Debug, Clone)]
enum Resolvent {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    // x - M^+ (Mx - d)
    Affine {
        m: Dense,
        pinv: Dense,
        d: Vec<f64>,
    },
    Halfspace {
        a: Vec<f64>,
        b: f64,
        a_sq: f64,
    },
    ZeroInverse,
    Identity,
    L1 {
        weight: f64,
    },
    // (I + gP)^{-1} (x + g c) through P = V diag(vals) V^T
    Quadratic {
        vecs: Dense,
        vals: Vec<f64>,
        c: Vec<f64>,
    },
    // (I + gM)^{-1} (x - g b), solved per call
    Linear {
        m: DMatrix<f64>,
        b: Vec<f64>,
    },
}

/// A maximally monotone operator accessed only through `J_{γA} = (Id + γA)^{-1}`.
#[derive(Debug, Clone)]
pub struct ResolventOp {
    dim: usize,
    desc: Descriptor,
    kind: Resolvent,
}

impl ResolventOp {
    pub fn build(desc: &Descriptor, dim: usize) -> Result<Self> {
        let kind = match desc {
            Descriptor::NormalConeBox { lo, hi } => {
                let lo = vector(lo, dim, "box lower bound")?;
                let hi = vector(hi, dim, "box upper bound")?;
                if lo.iter().zip(&hi).any(|(l, h)| l > h) {
                    return Err(Error::InvalidParameter("empty box: lo > hi".into()));
                }
                Resolvent::Box { lo, hi }
            }
            Descriptor::NormalConeAffine { m, d } => {
                let m = Dense::from_rows(m)?;
                check_len("affine set matrix columns", dim, m.cols)?;
                let d = vector(d, m.rows, "affine set right-hand side")?;
                let mn = m.to_nalgebra();
                let pinv = mn
                    .clone()
                    .pseudo_inverse(1e-12 * m.max_abs().max(1.0))
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let dv = DVector::from_column_slice(&d);
                let resid = (&mn * (&pinv * &dv) - &dv).norm();
                if resid > 1e-9 * (1.0 + dv.norm()) {
                    return Err(Error::InvalidParameter(format!(
                        "affine set is empty (consistency residual {resid:e})"
                    )));
                }
                Resolvent::Affine {
                    m,
                    pinv: Dense::from_nalgebra(&pinv),
                    d,
                }
            }
            Descriptor::NormalConeHalfspace { a, b } => {
                let a = vector(a, dim, "half-space normal")?;
                let a_sq: f64 = a.iter().map(|v| v * v).sum();
                if a_sq == 0.0 {
                    return Err(Error::InvalidParameter("half-space normal is zero".into()));
                }
                Resolvent::Halfspace { a, b: *b, a_sq }
            }
            Descriptor::ZeroInverse => Resolvent::ZeroInverse,
            Descriptor::ZeroOperator { .. } => Resolvent::Identity,
            Descriptor::SubdiffL1 { weight } => {
                if !(*weight >= 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidParameter(format!("l1 weight {weight}")));
                }
                Resolvent::L1 { weight: *weight }
            }
            Descriptor::ProxQuadratic { p, c } | Descriptor::GradientQuadratic { p, c, .. } => {
                let p = square(p, dim, "quadratic")?;
                let c = vector(c, dim, "quadratic linear term")?;
                let eig = sym_psd(&p)?;
                Resolvent::Quadratic {
                    vecs: eig.vecs,
                    vals: eig.vals,
                    c,
                }
            }
            Descriptor::AffineMonotone { m, b } => {
                let m = square(m, dim, "affine")?;
                check_monotone(&m)?;
                Resolvent::Linear {
                    m: m.to_nalgebra(),
                    b: vector(b, dim, "affine offset")?,
                }
            }
            Descriptor::RotationMonotone { m } => {
                let m = square(m, dim, "rotation")?.to_nalgebra();
                Resolvent::Linear {
                    m: (&m - m.transpose()) * 0.5,
                    b: vec![0.0; dim],
                }
            }
        };
        Ok(Self {
            dim,
            desc: desc.clone(),
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    pub fn is_zero_inverse(&self) -> bool {
        matches!(self.kind, Resolvent::ZeroInverse)
    }

    pub fn resolvent(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.resolvent_into(gamma, x, &mut out)?;
        Ok(out)
    }

    /// Writes `J_{γA} x` into `out`.
    pub fn resolvent_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_gamma(gamma)?;
        check_len("resolvent input", self.dim, x.len())?;
        check_len("resolvent output", self.dim, out.len())?;
        match &self.kind {
            Resolvent::Box { lo, hi } => {
                for j in 0..self.dim {
                    out[j] = x[j].max(lo[j]).min(hi[j]);
                }
            }
            Resolvent::Affine { m, pinv, d } => {
                let mut r: Vec<f64> = d.iter().map(|v| -v).collect();
                m.mul_acc(1.0, x, &mut r);
                out.copy_from_slice(x);
                pinv.mul_acc(-1.0, &r, out);
            }
            Resolvent::Halfspace { a, b, a_sq } => {
                let s: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                out.copy_from_slice(x);
                if s > *b {
                    let t = (s - b) / a_sq;
                    for (o, aj) in out.iter_mut().zip(a) {
                        *o -= t * aj;
                    }
                }
            }
            Resolvent::ZeroInverse => out.fill(0.0),
            Resolvent::Identity => out.copy_from_slice(x),
            Resolvent::L1 { weight } => {
                let t = gamma * weight;
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v.signum() * (v.abs() - t).max(0.0);
                }
            }
            Resolvent::Quadratic { vecs, vals, c } => {
                let w: Vec<f64> = x.iter().zip(c).map(|(a, b)| a + gamma * b).collect();
                // coordinates in the eigenbasis: V^T w
                let mut coords = vec![0.0; self.dim];
                vecs.tmul_acc(1.0, &w, &mut coords);
                for (cj, lj) in coords.iter_mut().zip(vals) {
                    *cj /= 1.0 + gamma * lj;
                }
                out.fill(0.0);
                vecs.mul_acc(1.0, &coords, out);
            }
            Resolvent::Linear { m, b } => {
                let lhs = DMatrix::identity(self.dim, self.dim) + m * gamma;
                let rhs =
                    DVector::from_iterator(self.dim, x.iter().zip(b).map(|(a, c)| a - gamma * c));
                let sol = lhs
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::InvalidParameter("singular affine resolvent".into()))?;
                out.copy_from_slice(sol.as_slice());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Single {
    Zero,
    // x -> Mx + b
    Affine { m: Dense, b: Vec<f64> },
}

impl Single {
    fn apply_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        if let Single::Affine { m, b } = self {
            m.mul_acc(coeff, x, out);
            for (o, bj) in out.iter_mut().zip(b) {
                *o += coeff * bj;
            }
        }
    }
}

/// A single-valued operator `C` with `<x-y, Cx-Cy> >= alpha ||Cx-Cy||^2`.
#[derive(Debug, Clone)]
pub struct CocoerciveOp {
    dim: usize,
    alpha: f64,
    desc: Descriptor,
    kind: Single,
}

impl CocoerciveOp {
    pub fn build(desc: &Descriptor, dim: usize) -> Result<Self> {
        let positive = |a: f64| -> Result<f64> {
            if a > 0.0 && a.is_finite() {
                Ok(a)
            } else {
                Err(Error::InvalidParameter(format!(
                    "cocoercivity constant must be positive and finite, got {a}"
                )))
            }
        };
        let (alpha, kind) = match desc {
            Descriptor::ZeroOperator { alpha } => (positive(alpha.unwrap_or(1.0))?, Single::Zero),
            Descriptor::GradientQuadratic { p, c, .. } | Descriptor::ProxQuadratic { p, c } => {
                let alpha = match desc {
                    Descriptor::GradientQuadratic { alpha, .. } => *alpha,
                    _ => None,
                };
                let pm = square(p, dim, "quadratic")?;
                let c = vector(c, dim, "quadratic linear term")?;
                let eig = sym_psd(&pm)?;
                let lmax = eig.vals.iter().copied().fold(0.0, f64::max);
                let a = if lmax > 0.0 {
                    1.0 / lmax
                } else {
                    positive(alpha.unwrap_or(1.0))?
                };
                let b = c.iter().map(|v| -v).collect();
                (a, Single::Affine { m: pm, b })
            }
            other => {
                return Err(Error::UnknownDescriptor(format!(
                    "`{}` is not a cocoercive operator",
                    other.name()
                )))
            }
        };
        Ok(Self {
            dim,
            alpha,
            desc: desc.clone(),
            kind,
        })
    }

    /// The zero map with a declared nominal constant.
    pub fn zero(dim: usize, alpha: f64) -> Result<Self> {
        Self::build(&Descriptor::zero_with_alpha(alpha), dim)
    }

    #[cfg(test)]
    pub(crate) fn with_alpha_unchecked(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Single::Zero)
    }

    /// `out += coeff * C x`; a no-op for the zero map.
    pub fn apply_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        self.kind.apply_acc(coeff, x, out);
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("cocoercive operator input", self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        self.apply_acc(1.0, x, &mut out);
        Ok(out)
    }
}

/// A monotone map with Lipschitz constant `lip`.
#[derive(Debug, Clone)]
pub struct LipMonotoneOp {
    dim: usize,
    lip: f64,
    desc: Descriptor,
    kind: Single,
}

impl LipMonotoneOp {
    pub fn build(desc: &Descriptor, dim: usize) -> Result<Self> {
        let (lip, kind) = match desc {
            Descriptor::ZeroOperator { .. } => (0.0, Single::Zero),
            Descriptor::AffineMonotone { m, b } => {
                let m = square(m, dim, "affine")?;
                check_monotone(&m)?;
                (
                    spectral_norm(&m),
                    Single::Affine {
                        m,
                        b: vector(b, dim, "affine offset")?,
                    },
                )
            }
            Descriptor::RotationMonotone { m } => {
                let m = square(m, dim, "rotation")?;
                let mut skew = m.clone();
                for i in 0..dim {
                    for j in 0..dim {
                        skew.data[i * dim + j] = 0.5 * (m.data[i * dim + j] - m.data[j * dim + i]);
                    }
                }
                (
                    spectral_norm(&skew),
                    Single::Affine {
                        m: skew,
                        b: vec![0.0; dim],
                    },
                )
            }
            Descriptor::GradientQuadratic { p, c, .. } | Descriptor::ProxQuadratic { p, c } => {
                let pm = square(p, dim, "quadratic")?;
                let c = vector(c, dim, "quadratic linear term")?;
                let eig = sym_psd(&pm)?;
                let lmax = eig.vals.iter().copied().fold(0.0, f64::max);
                (
                    lmax,
                    Single::Affine {
                        m: pm,
                        b: c.iter().map(|v| -v).collect(),
                    },
                )
            }
            other => {
                return Err(Error::UnknownDescriptor(format!(
                    "`{}` is not a monotone Lipschitzian operator",
                    other.name()
                )))
            }
        };
        Ok(Self {
            dim,
            lip,
            desc: desc.clone(),
            kind,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            lip: 0.0,
            desc: Descriptor::zero(),
            kind: Single::Zero,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Single::Zero)
    }

    /// `out += coeff * Q x`; a no-op for the zero map.
    pub fn apply_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        self.kind.apply_acc(coeff, x, out);
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("Lipschitz operator input", self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        self.apply_acc(1.0, x, &mut out);
        Ok(out)
    }
}

/// The joint coupling `R = (R_i)` acting on all primal blocks at once.
#[derive(Debug, Clone)]
pub struct CouplingOp {
    layout: Arc<SpaceLayout>,
    op: LipMonotoneOp,
}

impl CouplingOp {
    pub fn build(desc: &Descriptor, layout: &Arc<SpaceLayout>) -> Result<Self> {
        Ok(Self {
            layout: Arc::clone(layout),
            op: LipMonotoneOp::build(desc, layout.total_dim())?,
        })
    }

    pub fn zero(layout: &Arc<SpaceLayout>) -> Self {
        Self {
            layout: Arc::clone(layout),
            op: LipMonotoneOp::zero(layout.total_dim()),
        }
    }

    pub fn chi(&self) -> f64 {
        self.op.lip()
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn descriptor(&self) -> &Descriptor {
        self.op.descriptor()
    }

    pub fn is_zero(&self) -> bool {
        self.op.is_zero()
    }

    /// `R x` as a block vector over the primal layout.
    pub fn apply(&self, x: &BlockVec) -> Result<BlockVec> {
        check_len(
            "coupling input",
            self.layout.total_dim(),
            x.as_slice().len(),
        )?;
        let mut out = BlockVec::zeros(&self.layout);
        self.op.apply_acc(1.0, x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `out += coeff * R x` on flat buffers.
    pub fn apply_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        self.op.apply_acc(coeff, x, out);
    }
}

/// A bounded linear map between two blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOp {
    Identity(usize),
    Dense(Dense),
}

impl LinearOp {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Dense::from_rows(rows).map(LinearOp::Dense)
    }

    pub fn in_dim(&self) -> usize {
        match self {
            LinearOp::Identity(n) => *n,
            LinearOp::Dense(m) => m.cols,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LinearOp::Identity(n) => *n,
            LinearOp::Dense(m) => m.rows,
        }
    }

    /// `out += coeff * L x`.
    pub fn apply_acc(&self, coeff: f64, x: &[f64], out: &mut [f64]) {
        match self {
            LinearOp::Identity(_) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += coeff * v;
                }
            }
            LinearOp::Dense(m) => m.mul_acc(coeff, x, out),
        }
    }

    /// `out += coeff * L^* v`.
    pub fn adjoint_acc(&self, coeff: f64, v: &[f64], out: &mut [f64]) {
        match self {
            LinearOp::Identity(_) => {
                for (o, w) in out.iter_mut().zip(v) {
                    *o += coeff * w;
                }
            }
            LinearOp::Dense(m) => m.tmul_acc(coeff, v, out),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("linear map input", self.in_dim(), x.len())?;
        let mut out = vec![0.0; self.out_dim()];
        self.apply_acc(1.0, x, &mut out);
        Ok(out)
    }

    pub fn adjoint_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint input", self.out_dim(), v.len())?;
        let mut out = vec![0.0; self.in_dim()];
        self.adjoint_acc(1.0, v, &mut out);
        Ok(out)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        match self {
            LinearOp::Identity(n) => (0..*n)
                .map(|i| (0..*n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            LinearOp::Dense(m) => m.to_rows(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            LinearOp::Identity(_) => 1.0,
            LinearOp::Dense(m) => spectral_norm(m),
        }
    }
}
