//! Browser bindings for three interactive views: the path of the solver on
//! the box-constrained quadratic DP1, one anchored projection step in the
//! plane, and residual curves on the shipped fixtures.

use saddlesplit::fixtures;
use saddlesplit::solver::{
    haugazeau_project, run, xi_select, Solver, StepParams, StopRule, Variant,
};
use saddlesplit::{LagPolicy, Policy, ProblemSpec, Schedule, StateX};
use wasm_bindgen::prelude::*;

fn schedule(
    spec: &ProblemSpec,
    policy: &str,
    p: usize,
    t: usize,
    seed: u64,
) -> Result<Schedule, String> {
    let policy = match policy {
        "full" => Policy::Full,
        "round_robin" => Policy::RoundRobin,
        "random_covering" => Policy::RandomCovering { seed },
        other => return Err(format!("unknown policy `{other}`")),
    };
    let lag = if t == 0 {
        LagPolicy::Zero
    } else {
        LagPolicy::Random { seed }
    };
    Schedule::new(spec.n_primal(), spec.n_dual(), p, t, policy, lag).map_err(|e| e.to_string())
}

fn variant(strong: bool) -> Variant {
    if strong {
        Variant::Strong
    } else {
        Variant::Weak
    }
}

/// Primal iterates of DP1 started at `start`, flattened as `[x, y, x, y, …]`.
#[allow(clippy::too_many_arguments)]
pub fn trajectory(
    c: [f64; 2],
    start: [f64; 2],
    policy: &str,
    p: usize,
    t: usize,
    seed: u64,
    strong: bool,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let spec = fixtures::dp1(c);
    let mut init = StateX::zeros(&spec.h, &spec.g);
    init.x.as_mut_slice().copy_from_slice(&start);
    let params = StepParams::defaults(&spec).map_err(|e| e.to_string())?;
    let sched = schedule(&spec, policy, p, t, seed)?;
    let mut solver =
        Solver::new(&spec, sched, params, init, variant(strong)).map_err(|e| e.to_string())?;
    let mut out = start.to_vec();
    for _ in 0..steps {
        solver.step().map_err(|e| e.to_string())?;
        out.extend_from_slice(solver.state().x.as_slice());
    }
    Ok(out)
}

/// Projection of `x0` onto `{<x, t> <= η} ∩ {<x − xn, x0 − xn> <= 0}` in the
/// plane, returned as `[p1, p2, κ, λ]`.
pub fn anchored_step(
    x0: [f64; 2],
    xn: [f64; 2],
    t: [f64; 2],
    eta: f64,
) -> Result<Vec<f64>, String> {
    let p = haugazeau_project(&x0, &xn, &t, eta).map_err(|e| e.to_string())?;
    let delta = xn[0] * t[0] + xn[1] * t[1] - eta;
    let tau = t[0] * t[0] + t[1] * t[1];
    let d = [x0[0] - xn[0], x0[1] - xn[1]];
    let (kappa, lambda) = xi_select(
        delta,
        tau,
        d[0] * d[0] + d[1] * d[1],
        d[0] * t[0] + d[1] * t[1],
    )
    .map_err(|e| e.to_string())?;
    Ok(vec![p[0], p[1], kappa, lambda])
}

fn fixture(name: &str) -> Result<ProblemSpec, String> {
    Ok(match name {
        "dp1" => fixtures::dp1([2.0, 0.6]),
        "vi_parallelogram" => fixtures::vi_parallelogram(),
        "lasso" => fixtures::lasso(),
        "inf_conv" => fixtures::inf_conv(),
        "coupled_theta" => fixtures::coupled_theta(),
        "no_kt_point" => fixtures::no_kt_point(),
        other => return Err(format!("unknown fixture `{other}`")),
    })
}

/// Kuhn–Tucker residual after every iteration of a run from zero.
pub fn residual_curve(
    name: &str,
    policy: &str,
    p: usize,
    t: usize,
    seed: u64,
    strong: bool,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let spec = fixture(name)?;
    let rep = run(
        &spec,
        schedule(&spec, policy, p, t, seed)?,
        StepParams::defaults(&spec).map_err(|e| e.to_string())?,
        StateX::zeros(&spec.h, &spec.g),
        variant(strong),
        &StopRule {
            tol: 1e-14,
            max_iter: steps.max(1),
            ..StopRule::default()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(rep.trace.iter().map(|r| r.kt_residual).collect())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn dp1_trajectory(
    c1: f64,
    c2: f64,
    sx: f64,
    sy: f64,
    policy: &str,
    p: u32,
    t: u32,
    seed: u32,
    strong: bool,
    steps: u32,
) -> Result<Vec<f64>, JsError> {
    trajectory(
        [c1, c2],
        [sx, sy],
        policy,
        p as usize,
        t as usize,
        seed.into(),
        strong,
        steps as usize,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn haugazeau_demo(x0: &[f64], xn: &[f64], t: &[f64], eta: f64) -> Result<Vec<f64>, JsError> {
    let two = |v: &[f64]| -> Result<[f64; 2], JsError> {
        v.try_into()
            .map_err(|_| JsError::new("expected two coordinates"))
    };
    anchored_step(two(x0)?, two(xn)?, two(t)?, eta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn convergence_curve(
    name: &str,
    policy: &str,
    p: u32,
    t: u32,
    seed: u32,
    strong: bool,
    steps: u32,
) -> Result<Vec<f64>, JsError> {
    residual_curve(
        name,
        policy,
        p as usize,
        t as usize,
        seed.into(),
        strong,
        steps as usize,
    )
    .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_ends_at_the_solution() {
        let xs = trajectory([2.0, 0.6], [-1.0, 2.0], "full", 0, 0, 1, false, 300).unwrap();
        assert_eq!(xs.len(), 2 * 301);
        assert_eq!(&xs[..2], &[-1.0, 2.0]);
        let end = &xs[xs.len() - 2..];
        assert!(
            (end[0] - 1.0).abs() < 1e-6 && (end[1] - 0.3).abs() < 1e-6,
            "{end:?}"
        );
    }

    #[test]
    fn anchored_step_in_the_plane() {
        let out = anchored_step([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], 1.0).unwrap();
        assert!(
            (out[0] - 1.0).abs() < 1e-12 && out[1].abs() < 1e-12,
            "{out:?}"
        );
        assert!(anchored_step([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], 5.0).is_err());
    }

    #[test]
    fn curves_decrease_on_solvable_fixtures() {
        for name in ["dp1", "lasso", "vi_parallelogram"] {
            let c = residual_curve(name, "random_covering", 2, 3, 4, false, 2000).unwrap();
            assert!(c.last().unwrap() < &1e-8, "{name}");
        }
        assert!(residual_curve("nope", "full", 0, 0, 0, false, 10).is_err());
        assert!(residual_curve("dp1", "sideways", 0, 0, 0, false, 10).is_err());
    }
}
