//! Embeddings of two application classes into [`ProblemSpec`].
//!
//! * Variational inequalities over `Σ_i L_i(E_i ∩ F_i)` for
//!   `B = Bm + Bc + Bl`: each `E_i` enters as `A_i = N_{E_i}`, each `F_i`
//!   as a dual block with identity coupling, and `B` as one extra dual
//!   block `k̄` fed by all `L_i`.
//! * Composite minimization of `Σ f_i + φ_i + Θ + Σ_k ((g_k + ψ_k) □ h_k)(Σ_i L_ki x_i)`
//!   with subdifferentials and gradients placed in the matching slots.
//!
//! Slots without a cocoercive part receive the zero map with a nominal
//! constant equal to the smallest genuine cocoercivity constant of the
//! application, so the cut penalty `(4α)^{-1}` is the application's own.
//! Qualification conditions (normal-cone additivity, closedness of
//! epigraph sums) are assumed, not checked.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::blockspace::{BlockVec, SpaceLayout};
use crate::error::{Error, Result};
use crate::operators::{
    CocoerciveOp, CouplingOp, Descriptor, LinearOp, LipMonotoneOp, ResolventOp,
};
use crate::problem::ProblemSpec;

/// Variational inequality data. `e[i]`, `f[i]` are set descriptors (their
/// resolvents are projections); `l[i]` maps block `i` into the image space.
#[derive(Debug, Clone)]
pub struct ViSpec {
    pub primal: Arc<SpaceLayout>,
    pub image_label: String,
    pub image_dim: usize,
    pub e: Vec<Descriptor>,
    pub f: Vec<Descriptor>,
    pub l: Vec<LinearOp>,
    pub bm: Descriptor,
    pub bc: Descriptor,
    pub bl: Descriptor,
}

/// Composite minimization data. Every function is given by the descriptor
/// of its subdifferential (`f`, `g`, `h`) or gradient (`phi`, `psi`, `theta`).
#[derive(Debug, Clone)]
pub struct MinSpec {
    pub primal: Arc<SpaceLayout>,
    pub dual: Arc<SpaceLayout>,
    pub f: Vec<Descriptor>,
    pub phi: Vec<Descriptor>,
    pub theta: Descriptor,
    pub g: Vec<Descriptor>,
    pub psi: Vec<Descriptor>,
    pub h: Vec<Descriptor>,
    pub l: BTreeMap<(usize, usize), LinearOp>,
}

fn count(name: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: format!("number of `{name}` entries"),
            expected: want,
            got,
        })
    }
}

/// Smallest constant among the genuine (non-zero) cocoercive operators, or 1.
fn nominal_alpha(ops: &[&CocoerciveOp]) -> f64 {
    let m = ops
        .iter()
        .filter(|c| !c.is_zero())
        .map(|c| c.alpha())
        .fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Replaces every zero cocoercive slot by the zero map with constant `alpha`.
fn fill_nominal(spec: &mut ProblemSpec, alpha: f64) -> Result<()> {
    for (layout, ops) in [
        (&spec.h, &mut spec.c),
        (&spec.g, &mut spec.bc),
        (&spec.g, &mut spec.dc),
    ] {
        for (b, op) in ops.iter_mut().enumerate() {
            if op.is_zero() {
                *op = CocoerciveOp::zero(layout.dim(b), alpha)?;
            }
        }
    }
    Ok(())
}

/// Index of the dual block carrying `B` in [`vi_to_problem`] output.
pub fn vi_image_block(vi: &ViSpec) -> usize {
    vi.primal.len()
}

pub fn vi_to_problem(vi: &ViSpec) -> Result<ProblemSpec> {
    let n = vi.primal.len();
    count("E", vi.e.len(), n)?;
    count("F", vi.f.len(), n)?;
    count("L", vi.l.len(), n)?;
    let h = Arc::clone(&vi.primal);
    let mut blocks: Vec<(String, usize)> =
        (0..n).map(|i| (h.label(i).to_string(), h.dim(i))).collect();
    blocks.push((vi.image_label.clone(), vi.image_dim));
    let g = SpaceLayout::shared(blocks)?;
    let kbar = n;

    let mut spec = ProblemSpec::zeros(&h, &g)?;
    for i in 0..n {
        spec.a[i] = ResolventOp::build(&vi.e[i], h.dim(i))?;
        spec.bm[i] = ResolventOp::build(&vi.f[i], h.dim(i))?;
        spec.l.insert((i, i), LinearOp::Identity(h.dim(i)));
        let li = &vi.l[i];
        if li.in_dim() != h.dim(i) || li.out_dim() != vi.image_dim {
            return Err(Error::Dimension {
                context: format!("L for block `{}`", h.label(i)),
                expected: vi.image_dim * h.dim(i),
                got: li.out_dim() * li.in_dim(),
            });
        }
        spec.l.insert((kbar, i), li.clone());
    }
    spec.bm[kbar] = ResolventOp::build(&vi.bm, vi.image_dim)?;
    spec.bc[kbar] = CocoerciveOp::build(&vi.bc, vi.image_dim)?;
    spec.bl[kbar] = LipMonotoneOp::build(&vi.bl, vi.image_dim)?;
    for k in 0..g.len() {
        spec.dm[k] = ResolventOp::build(&Descriptor::ZeroInverse, g.dim(k))?;
    }
    // β^c itself, even when B has no cocoercive part (then its nominal value)
    let beta = spec.bc[kbar].alpha();
    fill_nominal(&mut spec, beta)?;
    spec.check()?;
    Ok(spec)
}

/// `Σ_i L_i x_i`, the point of the image space carried by primal `x`.
pub fn vi_image(vi: &ViSpec, x: &BlockVec) -> Vec<f64> {
    let mut out = vec![0.0; vi.image_dim];
    for (i, li) in vi.l.iter().enumerate() {
        li.apply_acc(1.0, x.block(i), &mut out);
    }
    out
}

pub fn min_to_problem(m: &MinSpec) -> Result<ProblemSpec> {
    let (h, g) = (&m.primal, &m.dual);
    count("f", m.f.len(), h.len())?;
    count("phi", m.phi.len(), h.len())?;
    count("g", m.g.len(), g.len())?;
    count("psi", m.psi.len(), g.len())?;
    count("h", m.h.len(), g.len())?;
    let mut spec = ProblemSpec::zeros(h, g)?;
    for i in 0..h.len() {
        spec.a[i] = ResolventOp::build(&m.f[i], h.dim(i))?;
        spec.c[i] = CocoerciveOp::build(&m.phi[i], h.dim(i))?;
    }
    spec.coupling = CouplingOp::build(&m.theta, h)?;
    for k in 0..g.len() {
        spec.bm[k] = ResolventOp::build(&m.g[k], g.dim(k))?;
        spec.bc[k] = CocoerciveOp::build(&m.psi[k], g.dim(k))?;
        spec.dm[k] = ResolventOp::build(&m.h[k], g.dim(k))?;
    }
    spec.l = m.l.clone();
    let alpha = nominal_alpha(&spec.c.iter().chain(&spec.bc).collect::<Vec<_>>());
    fill_nominal(&mut spec, alpha)?;
    spec.check()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::StateX;
    use crate::schedule::Schedule;
    use crate::solver::{run, StepParams, StopReason, StopRule, Variant};

    fn eye(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn unconstrained_linear_vi_returns_zero() {
        let h = SpaceLayout::shared([("x", 3usize)]).unwrap();
        let vi = ViSpec {
            primal: h,
            image_label: "image".into(),
            image_dim: 3,
            e: vec![Descriptor::zero()],
            f: vec![Descriptor::zero()],
            l: vec![LinearOp::Identity(3)],
            bm: Descriptor::zero(),
            bc: Descriptor::GradientQuadratic {
                p: eye(3),
                c: vec![0.0; 3],
                alpha: None,
            },
            bl: Descriptor::zero(),
        };
        let spec = vi_to_problem(&vi).unwrap();
        let init = StateX::from_flat(
            &spec.h,
            &spec.g,
            &(0..21).map(|j| (j as f64 * 0.37).sin()).collect::<Vec<_>>(),
        )
        .unwrap();
        let rep = run(
            &spec,
            Schedule::synchronous(1, 2).unwrap(),
            StepParams::defaults(&spec).unwrap(),
            init,
            Variant::Weak,
            &StopRule {
                max_iter: 20_000,
                ..StopRule::default()
            },
        )
        .unwrap();
        assert_eq!(rep.stop, StopReason::Converged);
        assert!(
            rep.state.x.as_slice().iter().all(|v| v.abs() < 1e-7),
            "{:?}",
            rep.state.x
        );
    }

    #[test]
    fn affine_box_instance_validates_with_zero_row_pattern() {
        // E_i = T^{-1}{d_i}, F_i = nonnegative orthant, B^m a normal cone
        let h = SpaceLayout::shared([("x1", 2usize), ("x2", 2)]).unwrap();
        let t = vec![vec![1.0, 2.0]];
        let vi = ViSpec {
            primal: h,
            image_label: "image".into(),
            image_dim: 2,
            e: vec![
                Descriptor::NormalConeAffine {
                    m: t.clone(),
                    d: vec![1.0],
                },
                Descriptor::NormalConeAffine { m: t, d: vec![3.0] },
            ],
            f: vec![
                Descriptor::NormalConeBox {
                    lo: vec![0.0; 2],
                    hi: vec![f64::INFINITY; 2]
                };
                2
            ],
            l: vec![LinearOp::Identity(2), LinearOp::Identity(2)],
            bm: Descriptor::NormalConeBox {
                lo: vec![-5.0; 2],
                hi: vec![5.0; 2],
            },
            bc: Descriptor::zero(),
            bl: Descriptor::zero(),
        };
        let spec = vi_to_problem(&vi).unwrap();
        assert!(spec.validate().is_ok());
        assert_eq!(spec.n_dual(), 3);
        for k in 0..2 {
            for i in 0..2 {
                assert_eq!(spec.l.contains_key(&(k, i)), k == i);
            }
        }
        assert!(spec.l.contains_key(&(2, 0)) && spec.l.contains_key(&(2, 1)));
        assert_eq!(spec.alpha_min(), 1.0);
        assert!(spec.dm.iter().all(ResolventOp::is_zero_inverse));
    }

    #[test]
    fn trivial_minimization_stops_at_once() {
        let h = SpaceLayout::shared([("x", 2usize)]).unwrap();
        let g = SpaceLayout::shared([("k", 2usize)]).unwrap();
        let mut l = BTreeMap::new();
        l.insert((0, 0), LinearOp::Identity(2));
        let m = MinSpec {
            primal: h,
            dual: g,
            f: vec![Descriptor::zero()],
            phi: vec![Descriptor::zero()],
            theta: Descriptor::zero(),
            g: vec![Descriptor::zero()],
            psi: vec![Descriptor::zero()],
            h: vec![Descriptor::zero()],
            l,
        };
        let spec = min_to_problem(&m).unwrap();
        let rep = run(
            &spec,
            Schedule::synchronous(1, 1).unwrap(),
            StepParams::defaults(&spec).unwrap(),
            StateX::zeros(&spec.h, &spec.g),
            Variant::Weak,
            &StopRule::default(),
        )
        .unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.stop, StopReason::Converged);
        assert!(rep.last_record.unwrap().delta <= 0.0);
    }

    #[test]
    fn nominal_constant_follows_genuine_ones() {
        let h = SpaceLayout::shared([("x", 1usize)]).unwrap();
        let g = SpaceLayout::shared([("k", 1usize)]).unwrap();
        let m = MinSpec {
            primal: h,
            dual: g,
            f: vec![Descriptor::zero()],
            phi: vec![Descriptor::GradientQuadratic {
                p: vec![vec![4.0]],
                c: vec![0.0],
                alpha: None,
            }],
            theta: Descriptor::zero(),
            g: vec![Descriptor::zero()],
            psi: vec![Descriptor::GradientQuadratic {
                p: vec![vec![2.0]],
                c: vec![0.0],
                alpha: None,
            }],
            h: vec![Descriptor::ZeroInverse],
            l: BTreeMap::new(),
        };
        let spec = min_to_problem(&m).unwrap();
        assert_eq!(spec.alpha_min(), 0.25);
        assert_eq!(spec.dc[0].alpha(), 0.25);
    }

    #[test]
    fn generic_step_reduces_to_the_vi_iteration() {
        use crate::schedule::HistoryBuffer;
        use crate::solver::step_weak;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let h = SpaceLayout::shared([("x1", 2usize), ("x2", 2)]).unwrap();
        let vi = ViSpec {
            primal: h,
            image_label: "image".into(),
            image_dim: 2,
            e: vec![
                Descriptor::NormalConeAffine {
                    m: vec![vec![1.0, 1.0]],
                    d: vec![1.0],
                },
                Descriptor::NormalConeAffine {
                    m: vec![vec![1.0, -1.0]],
                    d: vec![0.0],
                },
            ],
            f: vec![
                Descriptor::NormalConeBox {
                    lo: vec![0.0; 2],
                    hi: vec![f64::INFINITY; 2],
                },
                Descriptor::NormalConeBox {
                    lo: vec![0.0; 2],
                    hi: vec![0.5; 2],
                },
            ],
            l: vec![
                LinearOp::Identity(2),
                LinearOp::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0]]).unwrap(),
            ],
            bm: Descriptor::NormalConeHalfspace {
                a: vec![1.0, 1.0],
                b: 3.0,
            },
            bc: Descriptor::GradientQuadratic {
                p: eye(2),
                c: vec![1.2, 0.0],
                alpha: None,
            },
            bl: Descriptor::RotationMonotone {
                m: vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
            },
        };
        let spec = vi_to_problem(&vi).unwrap();
        let params = StepParams::defaults(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = spec.h.total_dim() + 3 * spec.g.total_dim();
            let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = StateX::from_flat(&spec.h, &spec.g, &flat).unwrap();
            let mut hist = HistoryBuffer::new(0);
            hist.push(0, s.clone()).unwrap();
            let mut sched = Schedule::synchronous(2, 3).unwrap();
            let (_, rec) = step_weak(&spec, &mut sched, &params, &hist, 0, None).unwrap();
            let kbar = vi_image_block(&vi);
            for k in 0..spec.n_dual() {
                assert!(rec.d.block(k).iter().all(|d| *d == 0.0));
                let (z, v, es) = (s.z.block(k), s.vstar.block(k), rec.estar.block(k));
                let nu = params.nu[k];
                for j in 0..z.len() {
                    assert_eq!(rec.tstar.block(k)[j], z[j] / nu + v[j] - es[j]);
                }
                let mu = params.mu[k];
                let arg: Vec<f64> = if k == kbar {
                    let mut w = v.to_vec();
                    spec.bl[k].apply_acc(-1.0, s.y.block(k), &mut w);
                    spec.bc[k].apply_acc(-1.0, s.y.block(k), &mut w);
                    s.y.block(k)
                        .iter()
                        .zip(&w)
                        .map(|(y, w)| y + mu * w)
                        .collect()
                } else {
                    s.y.block(k)
                        .iter()
                        .zip(v)
                        .map(|(y, v)| y + mu * v)
                        .collect()
                };
                assert_eq!(
                    rec.b.block(k),
                    spec.bm[k].resolvent(mu, &arg).unwrap().as_slice()
                );
                let e: Vec<f64> = if k == kbar {
                    let mut e = rec.b.block(k).to_vec();
                    for (i, li) in vi.l.iter().enumerate() {
                        li.apply_acc(-1.0, rec.a.block(i), &mut e);
                    }
                    e
                } else {
                    rec.b
                        .block(k)
                        .iter()
                        .zip(rec.a.block(k))
                        .map(|(b, a)| b - a)
                        .collect()
                };
                for (got, want) in rec.e.block(k).iter().zip(&e) {
                    assert!((got - want).abs() <= 1e-14 * (1.0 + want.abs()));
                }
            }
        }
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let h = SpaceLayout::shared([("x", 1usize)]).unwrap();
        let vi = ViSpec {
            primal: h,
            image_label: "image".into(),
            image_dim: 1,
            e: vec![],
            f: vec![Descriptor::zero()],
            l: vec![LinearOp::Identity(1)],
            bm: Descriptor::zero(),
            bc: Descriptor::zero(),
            bl: Descriptor::zero(),
        };
        assert!(vi_to_problem(&vi).is_err());
    }
}
