//! Block-iterative, asynchronous outer-approximation solvers.
//!
//! Each iteration evaluates the resolvents of the active blocks at lagged
//! states, assembles a graph point of the set-valued part of the saddle
//! operator, and moves the state towards the half-space it defines. The
//! weak variant relaxes the projection onto that half-space; the strong
//! variant projects an anchor point onto the intersection of the half-space
//! with the Haugazeau half-space and converges strongly to the projection of
//! the anchor onto the zero set.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::blockspace::{dist_sq, dot, BlockVec, StateX};
use crate::error::{Error, Result};
use crate::problem::{kt_residual, ProblemSpec};
use crate::saddle::{candidate, saddle_residual, GraphPoint};
use crate::schedule::{HistoryBuffer, Schedule, Side};

/// Step sizes and relaxation, constant across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub sigma: f64,
    pub eps: f64,
    pub alpha: f64,
    /// Per primal block.
    pub gamma: Vec<f64>,
    /// Per dual block.
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub sigk: Vec<f64>,
    pub lambda: f64,
}

struct Bounds {
    gamma: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    worst: f64,
}

fn bounds(spec: &ProblemSpec, sigma: f64) -> Bounds {
    let chi = spec.coupling.chi();
    let gamma: Vec<f64> = spec
        .q
        .iter()
        .map(|q| 1.0 / (q.lip() + chi + sigma))
        .collect();
    let mu: Vec<f64> = spec.bl.iter().map(|b| 1.0 / (b.lip() + sigma)).collect();
    let nu: Vec<f64> = spec.dl.iter().map(|d| 1.0 / (d.lip() + sigma)).collect();
    let worst = spec
        .q
        .iter()
        .map(|q| q.lip() + chi)
        .chain(spec.bl.iter().map(|b| b.lip()))
        .chain(spec.dl.iter().map(|d| d.lip()))
        .fold(0.0, f64::max)
        + sigma;
    Bounds {
        gamma,
        mu,
        nu,
        worst,
    }
}

impl StepParams {
    /// Step sizes at their upper bounds for `sigma` (default `1/(2α)`),
    /// `σ_k = 1`, relaxation `lambda` (default 1.8), and the largest
    /// admissible `ε` shrunk by 0.9.
    pub fn build(spec: &ProblemSpec, sigma: Option<f64>, lambda: Option<f64>) -> Result<Self> {
        let alpha = spec.alpha_min();
        let sigma = sigma.unwrap_or(1.0 / (2.0 * alpha));
        let lambda = lambda.unwrap_or(1.8);
        let b = bounds(spec, sigma);
        let sigk = vec![1.0; spec.n_dual()];
        let eps = 0.9
            * [1.0, 1.0 / b.worst, lambda, 2.0 - lambda]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
        let p = Self {
            sigma,
            eps,
            alpha,
            gamma: b.gamma,
            mu: b.mu,
            nu: b.nu,
            sigk,
            lambda,
        };
        p.check(spec)?;
        Ok(p)
    }

    pub fn defaults(spec: &ProblemSpec) -> Result<Self> {
        Self::build(spec, None, None)
    }

    /// Checks every range condition on `σ`, `ε` and the step sizes.
    pub fn check(&self, spec: &ProblemSpec) -> Result<()> {
        let mut v = Vec::new();
        if !(self.alpha > 0.0) {
            v.push(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.sigma > 1.0 / (4.0 * self.alpha)) {
            v.push(format!(
                "sigma = {} must exceed 1/(4 alpha) = {}",
                self.sigma,
                1.0 / (4.0 * self.alpha)
            ));
        }
        let b = bounds(spec, self.sigma);
        if !(self.eps > 0.0 && 1.0 / self.eps > b.worst) {
            v.push(format!(
                "eps = {} must satisfy 0 < eps < {}",
                self.eps,
                1.0 / b.worst
            ));
        }
        let mut range = |name: &str, vals: &[f64], hi: &dyn Fn(usize) -> f64| {
            for (j, x) in vals.iter().enumerate() {
                if !(*x >= self.eps && *x <= hi(j)) {
                    v.push(format!(
                        "{name}[{j}] = {x} outside [{}, {}]",
                        self.eps,
                        hi(j)
                    ));
                }
            }
        };
        if self.gamma.len() != spec.n_primal()
            || self.mu.len() != spec.n_dual()
            || self.nu.len() != spec.n_dual()
            || self.sigk.len() != spec.n_dual()
        {
            return Err(Error::InvalidParameter(
                "step size vectors do not match the block counts".into(),
            ));
        }
        range("gamma", &self.gamma, &|j| b.gamma[j]);
        range("mu", &self.mu, &|j| b.mu[j]);
        range("nu", &self.nu, &|j| b.nu[j]);
        range("sigma_k", &self.sigk, &|_| 1.0 / self.eps);
        range("lambda", &[self.lambda], &|_| 2.0 - self.eps);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}

/// `(κ, λ)` for the projection of an anchor onto the intersection of two
/// half-spaces, from `Δ`, `τ = ‖t*‖²`, `ς = ‖x₀ − xₙ‖²` and `χ = <x₀ − xₙ, t*>`.
pub fn xi_select(delta: f64, tau: f64, varsigma: f64, chi: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) || !(tau > 0.0) {
        return Err(Error::Precondition(format!(
            "xi_select needs delta > 0 and tau > 0, got {delta}, {tau}"
        )));
    }
    let rho = tau * varsigma - chi * chi;
    // rho is nonnegative by Cauchy-Schwarz; negative values are rounding
    if rho <= 0.0 {
        Ok((1.0, delta / tau))
    } else if chi * delta >= rho {
        Ok((0.0, (delta + chi) / tau))
    } else {
        Ok((1.0 - chi * delta / rho, varsigma * delta / rho))
    }
}

/// Projection of `x0` onto `{x : <x, t*> <= η} ∩ {x : <x − xn, x0 − xn> <= 0}`.
pub fn haugazeau_project(x0: &[f64], xn: &[f64], tstar: &[f64], eta: f64) -> Result<Vec<f64>> {
    if x0.len() != xn.len() || xn.len() != tstar.len() {
        return Err(Error::Dimension {
            context: "haugazeau_project".into(),
            expected: x0.len(),
            got: if xn.len() != x0.len() {
                xn.len()
            } else {
                tstar.len()
            },
        });
    }
    let delta = dot(xn, tstar) - eta;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "xn must violate the cut, got delta = {delta}"
        )));
    }
    let tau = dot(tstar, tstar);
    let varsigma = dist_sq(x0, xn);
    let chi: f64 = x0
        .iter()
        .zip(xn)
        .zip(tstar)
        .map(|((a, b), t)| (a - b) * t)
        .sum();
    let (kappa, lambda) = xi_select(delta, tau, varsigma, chi)?;
    Ok(x0
        .iter()
        .zip(xn)
        .zip(tstar)
        .map(|((a, b), t)| (1.0 - kappa) * a + kappa * b - lambda * t)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Weak,
    Strong,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Variant::Weak),
            "strong" => Ok(Variant::Strong),
            other => Err(Error::Parse(format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Weak => "weak",
            Variant::Strong => "strong",
        })
    }
}

/// The scalars of the state update of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Update {
    /// `Δ <= 0`: the state is held.
    Hold,
    Relaxed {
        tau: f64,
        theta: f64,
    },
    Anchored {
        tau: f64,
        varsigma: f64,
        chi: f64,
        kappa: f64,
        lambda: f64,
    },
}

/// Everything computed in one iteration. Entries of inactive blocks are
/// carried from the previous record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub active_i: Vec<usize>,
    pub active_k: Vec<usize>,
    /// Iteration read by each block at its latest activation.
    pub lag_i: Vec<usize>,
    pub lag_k: Vec<usize>,
    pub x_lag: BlockVec,
    pub lstar: BlockVec,
    pub a: BlockVec,
    pub astar: BlockVec,
    pub xi: Vec<f64>,
    pub pstar: BlockVec,
    pub y_lag: BlockVec,
    pub z_lag: BlockVec,
    pub ustar: BlockVec,
    pub wstar: BlockVec,
    pub b: BlockVec,
    pub d: BlockVec,
    pub estar: BlockVec,
    pub qstar: BlockVec,
    pub tstar: BlockVec,
    pub eta: Vec<f64>,
    pub e: BlockVec,
    pub delta: f64,
    pub update: Update,
}

impl IterationRecord {
    /// `(a, b, d, e*)` together with its image under the set-valued part.
    pub fn graph_point(&self, spec: &ProblemSpec) -> GraphPoint {
        let mut pstar = self.direction();
        for i in 0..spec.n_primal() {
            spec.c[i].apply_acc(-1.0, self.x_lag.block(i), pstar.x.block_mut(i));
        }
        for k in 0..spec.n_dual() {
            spec.bc[k].apply_acc(-1.0, self.y_lag.block(k), pstar.y.block_mut(k));
            spec.dc[k].apply_acc(-1.0, self.z_lag.block(k), pstar.z.block_mut(k));
        }
        GraphPoint {
            p: StateX {
                x: self.a.clone(),
                y: self.b.clone(),
                z: self.d.clone(),
                vstar: self.estar.clone(),
            },
            pstar,
        }
    }

    /// Point at which the cocoercive part was evaluated.
    pub fn forward_point(&self) -> StateX {
        StateX {
            x: self.x_lag.clone(),
            y: self.y_lag.clone(),
            z: self.z_lag.clone(),
            vstar: self.estar.clone(),
        }
    }

    /// The cut normal `t* = (p*, q*, t*, e)`.
    pub fn direction(&self) -> StateX {
        StateX {
            x: self.pstar.clone(),
            y: self.qstar.clone(),
            z: self.tstar.clone(),
            vstar: self.e.clone(),
        }
    }

    /// `(a, b, d, e*)`.
    pub fn resolvent_point(&self) -> StateX {
        StateX {
            x: self.a.clone(),
            y: self.b.clone(),
            z: self.d.clone(),
            vstar: self.estar.clone(),
        }
    }
}

struct PrimalOut {
    x_lag: Vec<f64>,
    lstar: Vec<f64>,
    a: Vec<f64>,
    astar: Vec<f64>,
    xi: f64,
}

struct DualOut {
    y_lag: Vec<f64>,
    z_lag: Vec<f64>,
    ustar: Vec<f64>,
    wstar: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    estar: Vec<f64>,
    qstar: Vec<f64>,
    tstar: Vec<f64>,
    eta: f64,
}

fn primal_block(spec: &ProblemSpec, gamma: f64, i: usize, s: &StateX) -> Result<PrimalOut> {
    let xi_lag = s.x.block(i);
    let dim = xi_lag.len();
    let mut lstar = vec![0.0; dim];
    spec.q[i].apply_acc(1.0, xi_lag, &mut lstar);
    if !spec.coupling.is_zero() {
        let mut rx = vec![0.0; spec.h.total_dim()];
        spec.coupling.apply_acc(1.0, s.x.as_slice(), &mut rx);
        for (l, r) in lstar.iter_mut().zip(&rx[spec.h.range(i)]) {
            *l += r;
        }
    }
    spec.l_col_adjoint_acc(i, 1.0, s.vstar.as_slice(), &mut lstar);

    let mut w: Vec<f64> = spec
        .sstar
        .block(i)
        .iter()
        .zip(&lstar)
        .map(|(s, l)| s - l)
        .collect();
    spec.c[i].apply_acc(-1.0, xi_lag, &mut w);
    let arg: Vec<f64> = xi_lag.iter().zip(&w).map(|(x, w)| x + gamma * w).collect();
    let a = spec.a[i].resolvent(gamma, &arg)?;

    let mut astar: Vec<f64> = xi_lag
        .iter()
        .zip(&a)
        .zip(&lstar)
        .map(|((x, a), l)| (x - a) / gamma - l)
        .collect();
    spec.q[i].apply_acc(1.0, &a, &mut astar);
    let xi = dist_sq(&a, xi_lag);
    Ok(PrimalOut {
        x_lag: xi_lag.to_vec(),
        lstar,
        a,
        astar,
        xi,
    })
}

fn dual_block(
    spec: &ProblemSpec,
    mu: f64,
    nu: f64,
    sig: f64,
    k: usize,
    s: &StateX,
) -> Result<DualOut> {
    let (y, z, v) = (s.y.block(k), s.z.block(k), s.vstar.block(k));
    let mut ustar = v.to_vec();
    spec.bl[k].apply_acc(-1.0, y, &mut ustar);
    let mut wstar = v.to_vec();
    spec.dl[k].apply_acc(-1.0, z, &mut wstar);

    let mut wb = ustar.clone();
    spec.bc[k].apply_acc(-1.0, y, &mut wb);
    let arg: Vec<f64> = y.iter().zip(&wb).map(|(y, w)| y + mu * w).collect();
    let b = spec.bm[k].resolvent(mu, &arg)?;

    let mut wd = wstar.clone();
    spec.dc[k].apply_acc(-1.0, z, &mut wd);
    let arg: Vec<f64> = z.iter().zip(&wd).map(|(z, w)| z + nu * w).collect();
    let d = spec.dm[k].resolvent(nu, &arg)?;

    let mut lx = vec![0.0; y.len()];
    spec.l_row_acc(k, 1.0, s.x.as_slice(), &mut lx);
    let estar: Vec<f64> = (0..y.len())
        .map(|j| sig * (lx[j] - y[j] - z[j] - spec.r.block(k)[j]) + v[j])
        .collect();

    let mut qstar: Vec<f64> = (0..y.len())
        .map(|j| (y[j] - b[j]) / mu + ustar[j])
        .collect();
    spec.bl[k].apply_acc(1.0, &b, &mut qstar);
    for (q, e) in qstar.iter_mut().zip(&estar) {
        *q -= e;
    }
    let mut tstar: Vec<f64> = (0..z.len())
        .map(|j| (z[j] - d[j]) / nu + wstar[j])
        .collect();
    spec.dl[k].apply_acc(1.0, &d, &mut tstar);
    for (t, e) in tstar.iter_mut().zip(&estar) {
        *t -= e;
    }
    let eta = dist_sq(&b, y) + dist_sq(&d, z);
    Ok(DualOut {
        y_lag: y.to_vec(),
        z_lag: z.to_vec(),
        ustar,
        wstar,
        b,
        d,
        estar,
        qstar,
        tstar,
        eta,
    })
}

#[cfg(feature = "parallel")]
fn map_blocks<T: Send>(ids: &[usize], f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    use rayon::prelude::*;
    ids.par_iter().map(|&j| f(j)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T>(ids: &[usize], f: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    ids.iter().map(|&j| f(j)).collect()
}

fn lagged(history: &HistoryBuffer, m: usize) -> Result<&StateX> {
    history
        .get(m)
        .ok_or_else(|| Error::Precondition(format!("state of iteration {m} is not in the history")))
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Block computations, carrying and the `Δ` reduction shared by both variants.
fn evaluate(
    spec: &ProblemSpec,
    sched: &mut Schedule,
    params: &StepParams,
    history: &HistoryBuffer,
    n: usize,
    prev: Option<&IterationRecord>,
) -> Result<(StateX, IterationRecord)> {
    let (latest, xn) = history
        .latest()
        .ok_or_else(|| Error::Precondition("empty history".into()))?;
    if latest != n {
        return Err(Error::Precondition(format!(
            "history ends at {latest}, iteration is {n}"
        )));
    }
    let xn = xn.clone();
    let (active_i, active_k) = sched.blocks_at(n);
    let mut rec = match prev {
        Some(p) => p.clone(),
        None => {
            if active_i.len() != spec.n_primal() || active_k.len() != spec.n_dual() {
                return Err(Error::Precondition(
                    "the first iteration must activate every block".into(),
                ));
            }
            let (h, g) = (&spec.h, &spec.g);
            IterationRecord {
                n,
                active_i: vec![],
                active_k: vec![],
                lag_i: vec![0; h.len()],
                lag_k: vec![0; g.len()],
                x_lag: BlockVec::zeros(h),
                lstar: BlockVec::zeros(h),
                a: BlockVec::zeros(h),
                astar: BlockVec::zeros(h),
                xi: vec![0.0; h.len()],
                pstar: BlockVec::zeros(h),
                y_lag: BlockVec::zeros(g),
                z_lag: BlockVec::zeros(g),
                ustar: BlockVec::zeros(g),
                wstar: BlockVec::zeros(g),
                b: BlockVec::zeros(g),
                d: BlockVec::zeros(g),
                estar: BlockVec::zeros(g),
                qstar: BlockVec::zeros(g),
                tstar: BlockVec::zeros(g),
                eta: vec![0.0; g.len()],
                e: BlockVec::zeros(g),
                delta: 0.0,
                update: Update::Hold,
            }
        }
    };
    rec.n = n;

    let lag_i: Vec<usize> = active_i
        .iter()
        .map(|&i| sched.lag_at(Side::Primal(i), n))
        .collect();
    let lag_k: Vec<usize> = active_k
        .iter()
        .map(|&k| sched.lag_at(Side::Dual(k), n))
        .collect();
    let primal = map_blocks(&(0..active_i.len()).collect::<Vec<_>>(), |j| {
        let i = active_i[j];
        primal_block(spec, params.gamma[i], i, lagged(history, lag_i[j])?)
    })?;
    let dual = map_blocks(&(0..active_k.len()).collect::<Vec<_>>(), |j| {
        let k = active_k[j];
        dual_block(
            spec,
            params.mu[k],
            params.nu[k],
            params.sigk[k],
            k,
            lagged(history, lag_k[j])?,
        )
    })?;

    for ((&i, &m), out) in active_i.iter().zip(&lag_i).zip(primal) {
        if !(finite(&out.a) && finite(&out.astar) && out.xi.is_finite()) {
            return Err(Error::NonFinite {
                block: spec.h.label(i).to_string(),
                iteration: n,
            });
        }
        rec.lag_i[i] = m;
        rec.x_lag.block_mut(i).copy_from_slice(&out.x_lag);
        rec.lstar.block_mut(i).copy_from_slice(&out.lstar);
        rec.a.block_mut(i).copy_from_slice(&out.a);
        rec.astar.block_mut(i).copy_from_slice(&out.astar);
        rec.xi[i] = out.xi;
    }
    for ((&k, &m), out) in active_k.iter().zip(&lag_k).zip(dual) {
        if !(finite(&out.b)
            && finite(&out.d)
            && finite(&out.estar)
            && finite(&out.qstar)
            && finite(&out.tstar))
        {
            return Err(Error::NonFinite {
                block: spec.g.label(k).to_string(),
                iteration: n,
            });
        }
        rec.lag_k[k] = m;
        rec.y_lag.block_mut(k).copy_from_slice(&out.y_lag);
        rec.z_lag.block_mut(k).copy_from_slice(&out.z_lag);
        rec.ustar.block_mut(k).copy_from_slice(&out.ustar);
        rec.wstar.block_mut(k).copy_from_slice(&out.wstar);
        rec.b.block_mut(k).copy_from_slice(&out.b);
        rec.d.block_mut(k).copy_from_slice(&out.d);
        rec.estar.block_mut(k).copy_from_slice(&out.estar);
        rec.qstar.block_mut(k).copy_from_slice(&out.qstar);
        rec.tstar.block_mut(k).copy_from_slice(&out.tstar);
        rec.eta[k] = out.eta;
    }
    rec.active_i = active_i;
    rec.active_k = active_k;

    // e_k for every k from the current a
    for k in 0..spec.n_dual() {
        let ek: Vec<f64> = spec
            .r
            .block(k)
            .iter()
            .zip(rec.b.block(k))
            .zip(rec.d.block(k))
            .map(|((r, b), d)| r + b + d)
            .collect();
        let out = rec.e.block_mut(k);
        out.copy_from_slice(&ek);
        spec.l_row_acc(k, -1.0, rec.a.as_slice(), out);
    }
    // p*_i = a*_i + R_i a + Σ_k L*_ki e*_k
    let mut ra = vec![0.0; spec.h.total_dim()];
    spec.coupling.apply_acc(1.0, rec.a.as_slice(), &mut ra);
    for i in 0..spec.n_primal() {
        let mut p: Vec<f64> = rec.astar.block(i).to_vec();
        if !spec.coupling.is_zero() {
            for (pj, rj) in p.iter_mut().zip(&ra[spec.h.range(i)]) {
                *pj += rj;
            }
        }
        spec.l_col_adjoint_acc(i, 1.0, rec.estar.as_slice(), &mut p);
        rec.pstar.block_mut(i).copy_from_slice(&p);
    }
    if !(rec.e.is_finite() && rec.pstar.is_finite()) {
        return Err(Error::NonFinite {
            block: "coupling".into(),
            iteration: n,
        });
    }

    let mut delta =
        -(rec.xi.iter().sum::<f64>() + rec.eta.iter().sum::<f64>()) / (4.0 * params.alpha);
    for i in 0..spec.n_primal() {
        let xa: Vec<f64> =
            xn.x.block(i)
                .iter()
                .zip(rec.a.block(i))
                .map(|(x, a)| x - a)
                .collect();
        delta += dot(&xa, rec.pstar.block(i));
    }
    for k in 0..spec.n_dual() {
        let yb: Vec<f64> =
            xn.y.block(k)
                .iter()
                .zip(rec.b.block(k))
                .map(|(y, b)| y - b)
                .collect();
        let zd: Vec<f64> =
            xn.z.block(k)
                .iter()
                .zip(rec.d.block(k))
                .map(|(z, d)| z - d)
                .collect();
        let ve: Vec<f64> = xn
            .vstar
            .block(k)
            .iter()
            .zip(rec.estar.block(k))
            .map(|(v, e)| v - e)
            .collect();
        delta +=
            dot(&yb, rec.qstar.block(k)) + dot(&zd, rec.tstar.block(k)) + dot(rec.e.block(k), &ve);
    }
    if !delta.is_finite() {
        return Err(Error::NonFinite {
            block: "delta".into(),
            iteration: n,
        });
    }
    rec.delta = delta;
    rec.update = Update::Hold;
    Ok((xn, rec))
}

fn direction_norm_sq(rec: &IterationRecord, n: usize) -> Result<f64> {
    let tau = dot(rec.pstar.as_slice(), rec.pstar.as_slice())
        + dot(rec.qstar.as_slice(), rec.qstar.as_slice())
        + dot(rec.tstar.as_slice(), rec.tstar.as_slice())
        + dot(rec.e.as_slice(), rec.e.as_slice());
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!(
            "iteration {n}: positive delta with a vanishing cut normal; the zero set is empty"
        )));
    }
    Ok(tau)
}

/// One iteration of the relaxed projection method. The history must end at
/// iteration `n`; `prev` is the record of iteration `n − 1` (`None` at 0).
pub fn step_weak(
    spec: &ProblemSpec,
    sched: &mut Schedule,
    params: &StepParams,
    history: &HistoryBuffer,
    n: usize,
    prev: Option<&IterationRecord>,
) -> Result<(StateX, IterationRecord)> {
    let (mut next, mut rec) = evaluate(spec, sched, params, history, n, prev)?;
    if rec.delta > 0.0 {
        let tau = direction_norm_sq(&rec, n)?;
        let theta = params.lambda * rec.delta / tau;
        next.x.axpy(-theta, &rec.pstar)?;
        next.y.axpy(-theta, &rec.qstar)?;
        next.z.axpy(-theta, &rec.tstar)?;
        next.vstar.axpy(-theta, &rec.e)?;
        rec.update = Update::Relaxed { tau, theta };
    }
    Ok((next, rec))
}

/// One iteration of the anchored (Haugazeau) variant with anchor `x0`.
pub fn step_strong(
    spec: &ProblemSpec,
    sched: &mut Schedule,
    params: &StepParams,
    history: &HistoryBuffer,
    n: usize,
    prev: Option<&IterationRecord>,
    x0: &StateX,
) -> Result<(StateX, IterationRecord)> {
    let (xn, mut rec) = evaluate(spec, sched, params, history, n, prev)?;
    if !(rec.delta > 0.0) {
        return Ok((xn, rec));
    }
    let tau = direction_norm_sq(&rec, n)?;
    let varsigma = x0.dist_sq(&xn)?;
    let pairs = [
        (&x0.x, &xn.x, &rec.pstar),
        (&x0.y, &xn.y, &rec.qstar),
        (&x0.z, &xn.z, &rec.tstar),
        (&x0.vstar, &xn.vstar, &rec.e),
    ];
    let mut chi = 0.0;
    for (a, b, t) in pairs {
        for ((p, q), s) in a.as_slice().iter().zip(b.as_slice()).zip(t.as_slice()) {
            chi += (p - q) * s;
        }
    }
    let (kappa, lambda) = xi_select(rec.delta, tau, varsigma, chi)?;
    let mut next = xn.clone();
    let outs = [&mut next.x, &mut next.y, &mut next.z, &mut next.vstar];
    for (out, (a, b, t)) in outs.into_iter().zip(pairs) {
        for (((o, p), q), s) in out
            .as_mut_slice()
            .iter_mut()
            .zip(a.as_slice())
            .zip(b.as_slice())
            .zip(t.as_slice())
        {
            *o = (1.0 - kappa) * p + kappa * q - lambda * s;
        }
    }
    rec.update = Update::Anchored {
        tau,
        varsigma,
        chi,
        kappa,
        lambda,
    };
    Ok((next, rec))
}

/// Iteration driver owning the schedule, history and last record.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    spec: &'a ProblemSpec,
    sched: Schedule,
    params: StepParams,
    variant: Variant,
    history: HistoryBuffer,
    anchor: StateX,
    n: usize,
    record: Option<IterationRecord>,
}

impl<'a> Solver<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        mut sched: Schedule,
        params: StepParams,
        init: StateX,
        variant: Variant,
    ) -> Result<Self> {
        spec.check()?;
        params.check(spec)?;
        sched.check_start()?;
        if **init.h_layout() != *spec.h || **init.g_layout() != *spec.g {
            return Err(Error::LayoutMismatch(
                "initial state does not match the problem".into(),
            ));
        }
        if !init.is_finite() {
            return Err(Error::InvalidParameter(
                "initial state is not finite".into(),
            ));
        }
        let mut history = HistoryBuffer::new(sched.max_lag());
        history.push(0, init.clone())?;
        Ok(Self {
            spec,
            sched,
            params,
            variant,
            history,
            anchor: init,
            n: 0,
            record: None,
        })
    }

    /// Performs iteration `n` and publishes state `n + 1`.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let prev = self.record.as_ref();
        let (next, rec) = match self.variant {
            Variant::Weak => step_weak(
                self.spec,
                &mut self.sched,
                &self.params,
                &self.history,
                self.n,
                prev,
            )?,
            Variant::Strong => step_strong(
                self.spec,
                &mut self.sched,
                &self.params,
                &self.history,
                self.n,
                prev,
                &self.anchor,
            )?,
        };
        if !next.is_finite() {
            return Err(Error::NonFinite {
                block: "state".into(),
                iteration: self.n,
            });
        }
        self.n += 1;
        self.history.push(self.n, next)?;
        Ok(self.record.insert(rec))
    }

    /// Current iterate `x_n`.
    pub fn state(&self) -> &StateX {
        self.history.latest().expect("history is never empty").1
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn record(&self) -> Option<&IterationRecord> {
        self.record.as_ref()
    }

    pub fn params(&self) -> &StepParams {
        &self.params
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }
}

/// Which residual ends a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Kt,
    Saddle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    pub tol: f64,
    pub max_iter: usize,
    pub criterion: Criterion,
    pub gamma_probe: f64,
    /// Trace every this many iterations (the last one is always traced).
    pub record_every: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            criterion: Criterion::Kt,
            gamma_probe: 1.0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationCap,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::IterationCap => "iteration cap",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub delta: f64,
    pub update: Update,
    pub kt_residual: f64,
    pub saddle_residual: f64,
    pub active_i: Vec<usize>,
    pub active_k: Vec<usize>,
}

pub const TRACE_HEADER: &str =
    "n,delta,theta_or_kappa_lambda,kt_residual,saddle_residual,active_I,active_K";

fn join(ids: &[usize]) -> String {
    ids.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

impl TraceRow {
    /// One CSV line; a held step reads as `θ = 0` (weak) or `κ = 1, λ = 0` (strong).
    pub fn csv_line(&self, variant: Variant) -> String {
        let step = match self.update {
            Update::Hold => match variant {
                Variant::Weak => format!("{:.16e}", 0.0),
                Variant::Strong => format!("{:.16e};{:.16e}", 1.0, 0.0),
            },
            Update::Relaxed { theta, .. } => format!("{theta:.16e}"),
            Update::Anchored { kappa, lambda, .. } => format!("{kappa:.16e};{lambda:.16e}"),
        };
        format!(
            "{},{:.16e},{},{:.16e},{:.16e},{},{}",
            self.n,
            self.delta,
            step,
            self.kt_residual,
            self.saddle_residual,
            join(&self.active_i),
            join(&self.active_k)
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub state: StateX,
    pub iterations: usize,
    pub stop: StopReason,
    pub variant: Variant,
    pub kt_residual: f64,
    pub saddle_residual: f64,
    pub trace: Vec<TraceRow>,
    pub last_record: Option<IterationRecord>,
}

impl SolveReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.trace.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for row in &self.trace {
            let _ = writeln!(s, "{}", row.csv_line(self.variant));
        }
        s
    }
}

/// Residuals of a state: the Kuhn–Tucker residual of `(x, v*)` with the
/// split of `Lx − r` derived from `v*`, and the saddle residual of the state.
pub fn residuals(spec: &ProblemSpec, state: &StateX, gamma_probe: f64) -> Result<(f64, f64)> {
    Ok((
        kt_residual(spec, &candidate(state), gamma_probe, None)?,
        saddle_residual(spec, state, gamma_probe)?,
    ))
}

/// Iterates until the chosen residual drops below `stop.tol` or
/// `stop.max_iter` iterations have run.
pub fn run(
    spec: &ProblemSpec,
    sched: Schedule,
    params: StepParams,
    init: StateX,
    variant: Variant,
    stop: &StopRule,
) -> Result<SolveReport> {
    if !(stop.tol > 0.0) || stop.max_iter == 0 || stop.record_every == 0 {
        return Err(Error::InvalidParameter(
            "stop rule needs tol > 0, max_iter >= 1 and record_every >= 1".into(),
        ));
    }
    let mut solver = Solver::new(spec, sched, params, init, variant)?;
    let mut trace = Vec::new();
    let mut reason = StopReason::IterationCap;
    let (mut kt, mut sr) = (f64::NAN, f64::NAN);
    while solver.iteration() < stop.max_iter {
        let (n, delta, update, active_i, active_k) = {
            let rec = solver.step()?;
            (
                rec.n,
                rec.delta,
                rec.update,
                rec.active_i.clone(),
                rec.active_k.clone(),
            )
        };
        let state = solver.state();
        let done_by = match stop.criterion {
            Criterion::Kt => kt_residual(spec, &candidate(state), stop.gamma_probe, None)?,
            Criterion::Saddle => saddle_residual(spec, state, stop.gamma_probe)?,
        };
        let converged = done_by < stop.tol;
        let last = converged || solver.iteration() == stop.max_iter;
        if last || n % stop.record_every == 0 {
            (kt, sr) = residuals(spec, state, stop.gamma_probe)?;
            trace.push(TraceRow {
                n,
                delta,
                update,
                kt_residual: kt,
                saddle_residual: sr,
                active_i,
                active_k,
            });
        }
        if converged {
            reason = StopReason::Converged;
            break;
        }
    }
    Ok(SolveReport {
        state: solver.state().clone(),
        iterations: solver.iteration(),
        stop: reason,
        variant,
        kt_residual: kt,
        saddle_residual: sr,
        trace,
        last_record: solver.record().cloned(),
    })
}
