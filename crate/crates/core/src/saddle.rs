//! The saddle operator on `X = H ⊕ G ⊕ G ⊕ G`, split as a set-valued part
//! `M` plus the cocoercive part `C`, and the half-spaces cut out by graph
//! points of `M`.

use crate::blockspace::StateX;
use crate::error::{Error, Result};
use crate::problem::{system_residual, ProblemSpec};

/// A pair `(p, p*)` with `p* ∈ M p`, as produced by the solver's resolvent
/// steps.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    pub p: StateX,
    pub pstar: StateX,
}

/// The half-space `{s : <s, t*> <= η}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceCut {
    pub tstar: StateX,
    pub eta: f64,
}

impl HalfSpaceCut {
    /// `<s, t*> − η`; positive exactly when `s` lies outside the half-space.
    pub fn delta_at(&self, s: &StateX) -> Result<f64> {
        Ok(s.inner(&self.tstar)? - self.eta)
    }
}

fn check_state(spec: &ProblemSpec, s: &StateX) -> Result<()> {
    if **s.h_layout() != *spec.h || **s.g_layout() != *spec.g {
        return Err(Error::LayoutMismatch(
            "state does not match the problem".into(),
        ));
    }
    Ok(())
}

/// `C(x, y, z, v*) = ((C_i x_i), (Bc_k y_k), (Dc_k z_k), 0)`.
pub fn apply_c(spec: &ProblemSpec, state: &StateX) -> Result<StateX> {
    check_state(spec, state)?;
    let mut out = StateX::zeros(&spec.h, &spec.g);
    for i in 0..spec.n_primal() {
        spec.c[i].apply_acc(1.0, state.x.block(i), out.x.block_mut(i));
    }
    for k in 0..spec.n_dual() {
        spec.bc[k].apply_acc(1.0, state.y.block(k), out.y.block_mut(k));
        spec.dc[k].apply_acc(1.0, state.z.block(k), out.z.block_mut(k));
    }
    Ok(out)
}

/// Cut through the graph point `gp` with forward evaluation point `q`:
/// `t* = p* + Cq`, `η = (4α)^{-1}‖p − q‖² + <p, t*>`.
pub fn build_cut(
    spec: &ProblemSpec,
    gp: &GraphPoint,
    q: &StateX,
    alpha: f64,
) -> Result<HalfSpaceCut> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let mut tstar = apply_c(spec, q)?;
    tstar.axpy(1.0, &gp.pstar)?;
    let eta = gp.p.dist_sq(q)? / (4.0 * alpha) + gp.p.inner(&tstar)?;
    Ok(HalfSpaceCut { tstar, eta })
}

/// Resolvent fixed-point residual of `0 ∈ S(x, y, z, v*)`, row by row.
pub fn saddle_residual(spec: &ProblemSpec, state: &StateX, gamma_probe: f64) -> Result<f64> {
    check_state(spec, state)?;
    system_residual(
        spec,
        &state.x,
        &state.y,
        &state.z,
        &state.vstar,
        gamma_probe,
    )
}

/// Convenience for the primal–dual pair carried by a state.
pub fn candidate(state: &StateX) -> crate::problem::KtCandidate {
    crate::problem::KtCandidate {
        x: state.x.clone(),
        vstar: state.vstar.clone(),
    }
}
