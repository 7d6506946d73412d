//! Independent oracles and run helpers shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlesplit::fixtures::{self, InfConvData, LassoData};
use saddlesplit::problem::{kt_residual, KtCandidate};
use saddlesplit::solver::{Solver, StepParams, Variant};
use saddlesplit::{LagPolicy, Policy, ProblemSpec, Schedule, StateX};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(spec: &ProblemSpec, rng: &mut ChaCha8Rng, scale: f64) -> StateX {
    let n = spec.h.total_dim() + 3 * spec.g.total_dim();
    let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    StateX::from_flat(&spec.h, &spec.g, &flat).unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One schedule configuration: `(policy name, P, lag name, T)`.
pub type Combo = (&'static str, usize, &'static str, usize);

pub const COMBOS: [Combo; 6] = [
    ("full", 0, "zero", 0),
    ("round_robin", 2, "zero", 0),
    ("full", 0, "fixed", 3),
    ("round_robin", 2, "fixed", 3),
    ("random_covering", 3, "random", 5),
    ("random_covering", 2, "random", 3),
];

pub fn schedule(spec: &ProblemSpec, c: Combo, seed: u64) -> Schedule {
    let policy = match c.0 {
        "full" => Policy::Full,
        "round_robin" => Policy::RoundRobin,
        _ => Policy::RandomCovering { seed },
    };
    let lag = match c.2 {
        "zero" => LagPolicy::Zero,
        "fixed" => LagPolicy::Fixed(c.3),
        _ => LagPolicy::Random { seed: seed + 1 },
    };
    Schedule::new(spec.n_primal(), spec.n_dual(), c.1, c.3, policy, lag).unwrap()
}

/// Per-iteration diagnostics of a run driven step by step.
pub struct Tracked {
    pub states: Vec<StateX>,
    /// `max(‖x_n − a_n‖, ‖y_n − b_n‖, ‖z_n − d_n‖, ‖v*_n − e*_n‖)` per step.
    pub gaps: Vec<f64>,
    /// `‖x_{ϑ(n)} − x_n‖` over the primal and dual inputs actually read.
    pub lag_gaps: Vec<f64>,
    pub converged_at: Option<usize>,
}

impl Tracked {
    pub fn last(&self) -> &StateX {
        self.states.last().unwrap()
    }
}

fn gap(before: &StateX, rec: &saddlesplit::solver::IterationRecord) -> f64 {
    [
        dist(before.x.as_slice(), rec.a.as_slice()),
        dist(before.y.as_slice(), rec.b.as_slice()),
        dist(before.z.as_slice(), rec.d.as_slice()),
        dist(before.vstar.as_slice(), rec.estar.as_slice()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Steps until the Kuhn–Tucker residual drops below `tol` (then stops
/// unless `extra` further steps are asked for) or `max_iter` is reached.
pub fn track(
    spec: &ProblemSpec,
    sched: Schedule,
    variant: Variant,
    init: StateX,
    tol: f64,
    max_iter: usize,
    extra: usize,
) -> Tracked {
    let params = StepParams::defaults(spec).unwrap();
    let mut solver = Solver::new(spec, sched, params, init.clone(), variant).unwrap();
    let mut t = Tracked {
        states: vec![init],
        gaps: Vec::new(),
        lag_gaps: Vec::new(),
        converged_at: None,
    };
    let mut stop_at = max_iter;
    while solver.iteration() < stop_at {
        let before = solver.state().clone();
        let rec = solver.step().unwrap();
        t.gaps.push(gap(&before, rec));
        t.lag_gaps.push(
            [
                dist(before.x.as_slice(), rec.x_lag.as_slice()),
                dist(before.y.as_slice(), rec.y_lag.as_slice()),
                dist(before.z.as_slice(), rec.z_lag.as_slice()),
            ]
            .into_iter()
            .fold(0.0, f64::max),
        );
        let s = solver.state().clone();
        if t.converged_at.is_none() {
            let cand = KtCandidate {
                x: s.x.clone(),
                vstar: s.vstar.clone(),
            };
            if kt_residual(spec, &cand, 1.0, None).unwrap() < tol {
                t.converged_at = Some(solver.iteration());
                stop_at = (solver.iteration() + extra).min(max_iter);
            }
        }
        t.states.push(s);
    }
    t
}

/// Largest eigenvalue of `MᵀM` by power iteration.
pub fn spectral_norm_sq(m: &[Vec<f64>]) -> f64 {
    let p = m[0].len();
    let mut v = vec![1.0; p];
    let mut lam = 0.0;
    for _ in 0..10_000 {
        let mv: Vec<f64> = m.iter().map(|r| dot(r, &v)).collect();
        let w: Vec<f64> = (0..p)
            .map(|j| m.iter().zip(&mv).map(|(r, s)| r[j] * s).sum())
            .collect();
        lam = norm(&w) / norm(&v);
        let nw = norm(&w);
        v = w.iter().map(|x| x / nw).collect();
    }
    lam
}

/// Proximal gradient on `½|Mx − b|² + τ|x|₁`, 10⁵ steps of size `1/‖M‖²`.
pub fn ista(d: &LassoData) -> Vec<f64> {
    let step = 1.0 / spectral_norm_sq(&d.m);
    let p = d.m[0].len();
    let mut x = vec![0.0; p];
    for _ in 0..100_000 {
        let r: Vec<f64> =
            d.m.iter()
                .zip(&d.b)
                .map(|(row, b)| dot(row, &x) - b)
                .collect();
        for j in 0..p {
            let g: f64 = d.m.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum();
            let u = x[j] - step * g;
            x[j] = u.signum() * (u.abs() - step * d.tau).max(0.0);
        }
    }
    x
}

/// `(x, y, z, v)` of the infimal-convolution fixture from the closed form:
/// `(g + ψ)(y) = ½a(y − m')² + const` with `a = a1 + a2`, `m' = a2 m / a`, and
/// the infimal convolution of curvatures `a`, `c` has curvature `ac/(a + c)`.
pub fn inf_conv_solution(d: InfConvData) -> [f64; 4] {
    let a = d.a1 + d.a2;
    let mp = d.a2 * d.m / a;
    let hc = a * d.c / (a + d.c);
    let x = (d.s + hc * (mp + d.n)) / (1.0 + hc);
    let v = hc * (x - mp - d.n);
    [x, mp + v / a, d.n + v / d.c, v]
}

pub fn inf_conv_zero(spec: &ProblemSpec) -> StateX {
    let [x, y, z, v] = inf_conv_solution(fixtures::INF_CONV);
    StateX::from_flat(&spec.h, &spec.g, &[x, y, z, v]).unwrap()
}

/// Normal equations of the coupled quadratic, solved by Cramer's rule.
pub fn coupled_solution(kappa: f64, s: [f64; 2]) -> [f64; 2] {
    let (a, b) = (2.0 + kappa, 1.0 - kappa);
    let det = a * a - b * b;
    [(a * s[0] - b * s[1]) / det, (a * s[1] - b * s[0]) / det]
}

/// Projection onto the parallelogram `{(1 − s + t, s + t) : s ∈ [0,1], t ∈ [0,½]}`
/// by projected gradient in the parameters.
fn proj_parallelogram(p: [f64; 2]) -> [f64; 2] {
    let (mut s, mut t) = (0.5, 0.25);
    for _ in 0..20_000 {
        let r = [1.0 - s + t - p[0], s + t - p[1]];
        let gs = -r[0] + r[1];
        let gt = r[0] + r[1];
        s = (s - 0.25 * gs).clamp(0.0, 1.0);
        t = (t - 0.25 * gt).clamp(0.0, 0.5);
    }
    [1.0 - s + t, s + t]
}

/// Projected fixed-point iteration `y ← P(y − ½(y − w))` for the VI fixture.
pub fn vi_oracle() -> [f64; 2] {
    let w = [1.2, 0.0];
    let mut y = [0.5, 0.5];
    for _ in 0..200 {
        y = proj_parallelogram([y[0] - 0.5 * (y[0] - w[0]), y[1] - 0.5 * (y[1] - w[1])]);
    }
    y
}

/// Projection of `x0` onto `{<x, t> ≤ η} ∩ {<x − xn, x0 − xn> ≤ 0}` by
/// enumerating active sets; `None` when the intersection is empty.
pub fn qp_two_halfspaces(x0: &[f64], xn: &[f64], t: &[f64], eta: f64) -> Option<Vec<f64>> {
    let g: Vec<f64> = x0.iter().zip(xn).map(|(a, b)| a - b).collect();
    let cons = [(t.to_vec(), eta), (g.clone(), dot(xn, &g))];
    let feasible = |x: &[f64]| {
        cons.iter()
            .all(|(a, b)| dot(a, x) <= b + 1e-9 * (1.0 + b.abs()))
    };
    let mut cands: Vec<Vec<f64>> = vec![x0.to_vec()];
    for (a, b) in &cons {
        let aa = dot(a, a);
        if aa > 0.0 {
            let s = (dot(a, x0) - b) / aa;
            cands.push(x0.iter().zip(a).map(|(x, a)| x - s * a).collect());
        }
    }
    let (a1, b1) = &cons[0];
    let (a2, b2) = &cons[1];
    let (g11, g12, g22) = (dot(a1, a1), dot(a1, a2), dot(a2, a2));
    let det = g11 * g22 - g12 * g12;
    if det.abs() > 1e-12 * g11 * g22 {
        let r1 = dot(a1, x0) - b1;
        let r2 = dot(a2, x0) - b2;
        let l1 = (g22 * r1 - g12 * r2) / det;
        let l2 = (g11 * r2 - g12 * r1) / det;
        cands.push(
            (0..x0.len())
                .map(|j| x0[j] - l1 * a1[j] - l2 * a2[j])
                .collect(),
        );
    }
    cands
        .into_iter()
        .filter(|c| feasible(c))
        .min_by(|a, b| dist(a, x0).total_cmp(&dist(b, x0)))
}
