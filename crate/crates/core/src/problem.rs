//! Problem data: block operators, linear couplings and offsets, with
//! validation and the Kuhn–Tucker residual.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::blockspace::{BlockVec, SpaceLayout};
use crate::error::{Error, Result};
use crate::operators::{
    CocoerciveOp, CouplingOp, Descriptor, LinearOp, LipMonotoneOp, ResolventOp,
};

/// A structured monotone inclusion with primal blocks `i` and dual blocks `k`.
///
/// Primal block `i` carries `A_i` (resolvent access), `C_i` (cocoercive),
/// `Q_i` (monotone Lipschitzian) and the offset `s*_i`; `R` couples all
/// primal blocks. Dual block `k` carries `B_k = Bm + Bc + Bl`,
/// `D_k = Dm + Dc + Dl` and the offset `r_k`. `L[(k, i)]` maps block `i`
/// into block `k`; absent entries are zero maps.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub h: Arc<SpaceLayout>,
    pub g: Arc<SpaceLayout>,
    pub a: Vec<ResolventOp>,
    pub c: Vec<CocoerciveOp>,
    pub q: Vec<LipMonotoneOp>,
    pub coupling: CouplingOp,
    pub bm: Vec<ResolventOp>,
    pub bc: Vec<CocoerciveOp>,
    pub bl: Vec<LipMonotoneOp>,
    pub dm: Vec<ResolventOp>,
    pub dc: Vec<CocoerciveOp>,
    pub dl: Vec<LipMonotoneOp>,
    pub l: BTreeMap<(usize, usize), LinearOp>,
    pub sstar: BlockVec,
    pub r: BlockVec,
}

impl ProblemSpec {
    /// Every operator zero (resolvents are the identity), no linear maps,
    /// zero offsets. Callers overwrite the slots they need.
    pub fn zeros(h: &Arc<SpaceLayout>, g: &Arc<SpaceLayout>) -> Result<Self> {
        let zero = Descriptor::zero();
        let res = |l: &SpaceLayout| -> Result<Vec<ResolventOp>> {
            (0..l.len())
                .map(|b| ResolventOp::build(&zero, l.dim(b)))
                .collect()
        };
        let coc = |l: &SpaceLayout| -> Result<Vec<CocoerciveOp>> {
            (0..l.len())
                .map(|b| CocoerciveOp::build(&zero, l.dim(b)))
                .collect()
        };
        let lip = |l: &SpaceLayout| -> Vec<LipMonotoneOp> {
            (0..l.len())
                .map(|b| LipMonotoneOp::zero(l.dim(b)))
                .collect()
        };
        Ok(Self {
            h: Arc::clone(h),
            g: Arc::clone(g),
            a: res(h)?,
            c: coc(h)?,
            q: lip(h),
            coupling: CouplingOp::zero(h),
            bm: res(g)?,
            bc: coc(g)?,
            bl: lip(g),
            dm: res(g)?,
            dc: coc(g)?,
            dl: lip(g),
            l: BTreeMap::new(),
            sstar: BlockVec::zeros(h),
            r: BlockVec::zeros(g),
        })
    }

    pub fn n_primal(&self) -> usize {
        self.h.len()
    }

    pub fn n_dual(&self) -> usize {
        self.g.len()
    }

    /// Every violation of dimensional consistency or constant ranges.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut v = Vec::new();
        let (h, g) = (&self.h, &self.g);
        if h.is_empty() || g.is_empty() {
            v.push("no blocks: both the primal and the dual side need at least one block".into());
        }

        fn check_count(v: &mut Vec<String>, name: &str, got: usize, want: usize) {
            if got != want {
                v.push(format!("{name}: {got} operators for {want} blocks"));
            }
        }
        check_count(&mut v, "A", self.a.len(), h.len());
        check_count(&mut v, "C", self.c.len(), h.len());
        check_count(&mut v, "Q", self.q.len(), h.len());
        for (name, n) in [
            ("Bm", self.bm.len()),
            ("Bc", self.bc.len()),
            ("Bl", self.bl.len()),
            ("Dm", self.dm.len()),
            ("Dc", self.dc.len()),
            ("Dl", self.dl.len()),
        ] {
            check_count(&mut v, name, n, g.len());
        }

        let mut dims = |name: &str, layout: &SpaceLayout, ds: Vec<usize>| {
            for (b, d) in ds.into_iter().enumerate().take(layout.len()) {
                if d != layout.dim(b) {
                    v.push(format!(
                        "{name}[{}]: dimension {d}, block has {}",
                        layout.label(b),
                        layout.dim(b)
                    ));
                }
            }
        };
        dims("A", h, self.a.iter().map(ResolventOp::dim).collect());
        dims("C", h, self.c.iter().map(CocoerciveOp::dim).collect());
        dims("Q", h, self.q.iter().map(LipMonotoneOp::dim).collect());
        dims("Bm", g, self.bm.iter().map(ResolventOp::dim).collect());
        dims("Bc", g, self.bc.iter().map(CocoerciveOp::dim).collect());
        dims("Bl", g, self.bl.iter().map(LipMonotoneOp::dim).collect());
        dims("Dm", g, self.dm.iter().map(ResolventOp::dim).collect());
        dims("Dc", g, self.dc.iter().map(CocoerciveOp::dim).collect());
        dims("Dl", g, self.dl.iter().map(LipMonotoneOp::dim).collect());

        let cocoercive = [("C", h, &self.c), ("Bc", g, &self.bc), ("Dc", g, &self.dc)];
        for (name, layout, ops) in cocoercive {
            for (b, op) in ops.iter().enumerate().take(layout.len()) {
                if !(op.alpha() > 0.0 && op.alpha().is_finite()) {
                    v.push(format!(
                        "{name}[{}]: cocoercivity constant {} is not in (0, inf)",
                        layout.label(b),
                        op.alpha()
                    ));
                }
            }
        }
        let lipschitz = [("Q", h, &self.q), ("Bl", g, &self.bl), ("Dl", g, &self.dl)];
        for (name, layout, ops) in lipschitz {
            for (b, op) in ops.iter().enumerate().take(layout.len()) {
                if !(op.lip() >= 0.0 && op.lip().is_finite()) {
                    v.push(format!(
                        "{name}[{}]: Lipschitz constant {} is not in [0, inf)",
                        layout.label(b),
                        op.lip()
                    ));
                }
            }
        }
        if **self.coupling.layout() != **h {
            v.push("R: coupling layout differs from the primal layout".into());
        }
        if !(self.coupling.chi() >= 0.0 && self.coupling.chi().is_finite()) {
            v.push(format!(
                "R: constant {} is not in [0, inf)",
                self.coupling.chi()
            ));
        }

        for (&(k, i), op) in &self.l {
            if k >= g.len() || i >= h.len() {
                v.push(format!("L({k},{i}): block index out of range"));
                continue;
            }
            if op.in_dim() != h.dim(i) || op.out_dim() != g.dim(k) {
                v.push(format!(
                    "L({},{}): shape {}x{}, expected {}x{}",
                    g.label(k),
                    h.label(i),
                    op.out_dim(),
                    op.in_dim(),
                    g.dim(k),
                    h.dim(i)
                ));
            }
        }
        if **self.sstar.layout() != **h {
            v.push("s*: layout differs from the primal layout".into());
        }
        if **self.r.layout() != **g {
            v.push("r: layout differs from the dual layout".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn check(&self) -> Result<()> {
        self.validate().map_err(Error::Invalid)
    }

    /// Smallest cocoercivity constant over all `C_i`, `Bc_k`, `Dc_k`.
    pub fn alpha_min(&self) -> f64 {
        self.c
            .iter()
            .chain(&self.bc)
            .chain(&self.dc)
            .map(CocoerciveOp::alpha)
            .fold(f64::INFINITY, f64::min)
    }

    /// `out += coeff * Σ_i L_ki x_i` for the flat primal vector `x`.
    pub fn l_row_acc(&self, k: usize, coeff: f64, x: &[f64], out: &mut [f64]) {
        for (&(_, i), op) in self.l.range((k, 0)..(k + 1, 0)) {
            op.apply_acc(coeff, &x[self.h.range(i)], out);
        }
    }

    /// `out += coeff * Σ_k L*_ki v_k` for the flat dual vector `v`.
    pub fn l_col_adjoint_acc(&self, i: usize, coeff: f64, v: &[f64], out: &mut [f64]) {
        for (&(k, j), op) in &self.l {
            if j == i {
                op.adjoint_acc(coeff, &v[self.g.range(k)], out);
            }
        }
    }
}

/// A primal–dual pair `(x, v*)` offered as a Kuhn–Tucker point.
#[derive(Debug, Clone, PartialEq)]
pub struct KtCandidate {
    pub x: BlockVec,
    pub vstar: BlockVec,
}

fn check_probe(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "probe parameter must be positive, got {gamma}"
        )))
    }
}

fn check_layouts(spec: &ProblemSpec, x: &BlockVec, duals: &[&BlockVec]) -> Result<()> {
    if **x.layout() != *spec.h {
        return Err(Error::LayoutMismatch(
            "primal vector does not match the problem".into(),
        ));
    }
    for d in duals {
        if **d.layout() != *spec.g {
            return Err(Error::LayoutMismatch(
                "dual vector does not match the problem".into(),
            ));
        }
    }
    Ok(())
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Resolvent residual `‖u − J_{γM}(u + γ(v − Cu − Lu))‖` of `v ∈ (M + C + L)u`.
fn dual_inclusion_residual(
    m: &ResolventOp,
    c: &CocoerciveOp,
    l: &LipMonotoneOp,
    gamma: f64,
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let mut arg: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + gamma * b).collect();
    c.apply_acc(-gamma, u, &mut arg);
    l.apply_acc(-gamma, u, &mut arg);
    Ok(norm_diff(u, &m.resolvent(gamma, &arg)?))
}

/// Sum of the resolvent residuals of every row of the saddle system at
/// `(x, y, z, v*)`.
pub(crate) fn system_residual(
    spec: &ProblemSpec,
    x: &BlockVec,
    y: &BlockVec,
    z: &BlockVec,
    v: &BlockVec,
    gamma: f64,
) -> Result<f64> {
    check_probe(gamma)?;
    check_layouts(spec, x, &[y, z, v])?;
    let (xs, vs) = (x.as_slice(), v.as_slice());
    let rx = spec.coupling.apply(x)?;
    let mut total = 0.0;
    for i in 0..spec.n_primal() {
        let xi = x.block(i);
        let mut arg: Vec<f64> = xi
            .iter()
            .zip(spec.sstar.block(i))
            .zip(rx.block(i))
            .map(|((a, s), r)| a + gamma * (s - r))
            .collect();
        spec.l_col_adjoint_acc(i, -gamma, vs, &mut arg);
        spec.c[i].apply_acc(-gamma, xi, &mut arg);
        spec.q[i].apply_acc(-gamma, xi, &mut arg);
        total += norm_diff(xi, &spec.a[i].resolvent(gamma, &arg)?);
    }
    for k in 0..spec.n_dual() {
        let (yk, zk, vk) = (y.block(k), z.block(k), v.block(k));
        // y_k + z_k − (Σ_i L_ki x_i − r_k)
        let mut gap: Vec<f64> = yk
            .iter()
            .zip(zk)
            .zip(spec.r.block(k))
            .map(|((a, b), r)| a + b + r)
            .collect();
        spec.l_row_acc(k, -1.0, xs, &mut gap);
        total += gap.iter().map(|t| t * t).sum::<f64>().sqrt();
        total += dual_inclusion_residual(&spec.bm[k], &spec.bc[k], &spec.bl[k], gamma, yk, vk)?;
        total += dual_inclusion_residual(&spec.dm[k], &spec.dc[k], &spec.dl[k], gamma, zk, vk)?;
    }
    Ok(total)
}

/// Iterations of the forward–backward map used to split `Lx − r` when no
/// auxiliary `(y, z)` is supplied.
const SPLIT_ITERS: usize = 100;

/// Derives `(y, z)` from `(x, v*)`: `z_k` is the forward–backward fixed point
/// of `v*_k ∈ D_k z_k` started at 0 (exact after one step when `Dm = {0}^{-1}`),
/// and `y_k = (Lx − r)_k − z_k`.
pub fn split_aux(
    spec: &ProblemSpec,
    cand: &KtCandidate,
    gamma: f64,
) -> Result<(BlockVec, BlockVec)> {
    check_probe(gamma)?;
    check_layouts(spec, &cand.x, &[&cand.vstar])?;
    let mut y = BlockVec::zeros(&spec.g);
    let mut z = BlockVec::zeros(&spec.g);
    for k in 0..spec.n_dual() {
        let vk = cand.vstar.block(k);
        let mut zk = vec![0.0; spec.g.dim(k)];
        for _ in 0..SPLIT_ITERS {
            let mut arg: Vec<f64> = zk.iter().zip(vk).map(|(a, b)| a + gamma * b).collect();
            spec.dc[k].apply_acc(-gamma, &zk, &mut arg);
            spec.dl[k].apply_acc(-gamma, &zk, &mut arg);
            let next = spec.dm[k].resolvent(gamma, &arg)?;
            let done = next == zk;
            zk = next;
            if done {
                break;
            }
        }
        let yk = y.block_mut(k);
        for (t, r) in yk.iter_mut().zip(spec.r.block(k)) {
            *t = -r;
        }
        spec.l_row_acc(k, 1.0, cand.x.as_slice(), yk);
        for (t, s) in yk.iter_mut().zip(&zk) {
            *t -= s;
        }
        z.block_mut(k).copy_from_slice(&zk);
    }
    Ok((y, z))
}

/// Resolvent fixed-point residual of the Kuhn–Tucker system at `cand`.
///
/// With `aux = Some((y, z))` the parallel-sum split is taken as given;
/// otherwise it is derived by [`split_aux`]. Vanishes exactly at
/// Kuhn–Tucker points extended by a consistent split.
pub fn kt_residual(
    spec: &ProblemSpec,
    cand: &KtCandidate,
    gamma_probe: f64,
    aux: Option<(&BlockVec, &BlockVec)>,
) -> Result<f64> {
    check_probe(gamma_probe)?;
    match aux {
        Some((y, z)) => system_residual(spec, &cand.x, y, z, &cand.vstar, gamma_probe),
        None => {
            let (y, z) = split_aux(spec, cand, gamma_probe)?;
            system_residual(spec, &cand.x, &y, &z, &cand.vstar, gamma_probe)
        }
    }
}
