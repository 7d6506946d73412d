//! Small instances with known solutions, shared by tests, the CLI examples
//! and the browser demo. Solutions quoted here are closed forms; numerical
//! oracles live with the tests.

use std::collections::BTreeMap;

use crate::blockspace::{SpaceLayout, StateX};
use crate::frontends::{min_to_problem, vi_to_problem, MinSpec, ViSpec};
use crate::operators::{CocoerciveOp, Descriptor, LinearOp, LipMonotoneOp, ResolventOp};
use crate::problem::ProblemSpec;

fn eye(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `min |x|² − <c, x>` over `[0, 1]²`, written with one primal and one dual
/// block: `A = N_box`, `C x = x − c`, `Bc y = y`, `Dm = {0}⁻¹`, `L = Id`.
/// Unique zero: `x = y = v* = proj(c/2)`, `z = 0`.
pub fn dp1(c: [f64; 2]) -> ProblemSpec {
    let h = SpaceLayout::shared([("x1", 2usize)]).expect("static layout");
    let g = SpaceLayout::shared([("k1", 2usize)]).expect("static layout");
    let mut s = ProblemSpec::zeros(&h, &g).expect("zero problem");
    let box01 = Descriptor::NormalConeBox {
        lo: vec![0.0; 2],
        hi: vec![1.0; 2],
    };
    s.a[0] = ResolventOp::build(&box01, 2).expect("box");
    let quad = |c: &[f64]| Descriptor::GradientQuadratic {
        p: eye(2),
        c: c.to_vec(),
        alpha: None,
    };
    s.c[0] = CocoerciveOp::build(&quad(&c), 2).expect("quadratic");
    s.bc[0] = CocoerciveOp::build(&quad(&[0.0; 2]), 2).expect("quadratic");
    s.dm[0] = ResolventOp::build(&Descriptor::ZeroInverse, 2).expect("zero_inverse");
    s.l.insert((0, 0), LinearOp::Identity(2));
    s
}

pub fn dp1_solution(c: [f64; 2]) -> [f64; 2] {
    c.map(|ci| (ci / 2.0).clamp(0.0, 1.0))
}

pub fn dp1_zero(spec: &ProblemSpec, c: [f64; 2]) -> StateX {
    let [a, b] = dp1_solution(c);
    StateX::from_flat(&spec.h, &spec.g, &[a, b, a, b, 0.0, 0.0, a, b]).expect("dp1 layout")
}

/// The coupled system
/// `0 ∈ B1(x1 + x2) + B2(x1 − x2)`, `0 ∈ B1(x1 + x2) − B2(x1 − x2)` on ℝ²
/// with `B1 = {0}⁻¹` and `B2` the constant map 1. The primal problem is
/// solved by every `(t, −t)`, yet no Kuhn–Tucker point exists.
pub fn no_kt_point() -> ProblemSpec {
    let h = SpaceLayout::shared([("x1", 1usize), ("x2", 1)]).expect("static layout");
    let g = SpaceLayout::shared([("sum", 1usize), ("diff", 1)]).expect("static layout");
    let mut s = ProblemSpec::zeros(&h, &g).expect("zero problem");
    s.bm[0] = ResolventOp::build(&Descriptor::ZeroInverse, 1).expect("zero_inverse");
    s.bl[1] = LipMonotoneOp::build(
        &Descriptor::AffineMonotone {
            m: vec![vec![0.0]],
            b: vec![1.0],
        },
        1,
    )
    .expect("constant map");
    for k in 0..2 {
        s.dm[k] = ResolventOp::build(&Descriptor::ZeroInverse, 1).expect("zero_inverse");
    }
    s.l.insert((0, 0), LinearOp::Identity(1));
    s.l.insert((0, 1), LinearOp::Identity(1));
    s.l.insert((1, 0), LinearOp::Identity(1));
    s.l.insert((1, 1), LinearOp::from_rows(&[vec![-1.0]]).expect("1x1"));
    s
}

/// Projection VI over the parallelogram `E1∩F1 + E2∩F2`, with
/// `E1∩F1` the segment `[(1,0), (0,1)]` and `E2∩F2` the segment
/// `[(0,0), (½,½)]`, for `B y = y − w`, `w = (1.2, 0)`. The image solution is
/// `proj(w) = (1.1, 0.1)`, attained only by `x1 = (1, 0)`, `x2 = (0.1, 0.1)`.
pub fn vi_parallelogram_spec() -> ViSpec {
    ViSpec {
        primal: SpaceLayout::shared([("x1", 2usize), ("x2", 2)]).expect("static layout"),
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
        l: vec![LinearOp::Identity(2), LinearOp::Identity(2)],
        bm: Descriptor::zero(),
        bc: Descriptor::GradientQuadratic {
            p: eye(2),
            c: vec![1.2, 0.0],
            alpha: None,
        },
        bl: Descriptor::zero(),
    }
}

pub const VI_PARALLELOGRAM_IMAGE: [f64; 2] = [1.1, 0.1];
pub const VI_PARALLELOGRAM_X: [f64; 4] = [1.0, 0.0, 0.1, 0.1];

pub fn vi_parallelogram() -> ProblemSpec {
    vi_to_problem(&vi_parallelogram_spec()).expect("well-formed VI")
}

/// A zero of the saddle operator of [`vi_parallelogram`]: the multiplier on
/// the image block is `B(1.1, 0.1) = (−0.1, 0.1)`, the one on `F1` is the
/// normal `(0, −0.2)` at the vertex `(1, 0)`, the one on `F2` vanishes.
pub fn vi_parallelogram_zero(spec: &ProblemSpec) -> StateX {
    let x = VI_PARALLELOGRAM_X;
    let y = [x[0], x[1], x[2], x[3], 1.1, 0.1];
    let v = [0.0, -0.2, 0.0, 0.0, -0.1, 0.1];
    let flat: Vec<f64> = x
        .iter()
        .chain(&y)
        .chain(&[0.0; 6])
        .chain(&v)
        .copied()
        .collect();
    StateX::from_flat(&spec.h, &spec.g, &flat).expect("vi layout")
}

/// Data of `min ½|Mx − b|² + τ|x|₁` with a full column rank 6×4 `M`.
pub struct LassoData {
    pub m: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub tau: f64,
}

pub fn lasso_data() -> LassoData {
    LassoData {
        m: vec![
            vec![1.0, 0.2, 0.0, -0.3],
            vec![0.1, 0.9, 0.4, 0.0],
            vec![0.0, -0.2, 1.1, 0.3],
            vec![0.5, 0.0, 0.2, 0.8],
            vec![-0.3, 0.6, 0.0, 0.4],
            vec![0.2, 0.1, -0.5, 0.6],
        ],
        b: vec![1.0, -0.5, 0.8, 0.3, -1.2, 0.6],
        tau: 0.15,
    }
}

/// `f = τ|·|₁`, `g = ½|· − b|²`, `h = ι_{0}` (so `g □ h = g`), `L = M`.
pub fn lasso_spec(d: &LassoData) -> MinSpec {
    let (n, p) = (d.m.len(), d.m[0].len());
    let mut l = BTreeMap::new();
    l.insert(
        (0, 0),
        LinearOp::from_rows(&d.m).expect("rectangular matrix"),
    );
    MinSpec {
        primal: SpaceLayout::shared([("x", p)]).expect("static layout"),
        dual: SpaceLayout::shared([("residual", n)]).expect("static layout"),
        f: vec![Descriptor::SubdiffL1 { weight: d.tau }],
        phi: vec![Descriptor::zero()],
        theta: Descriptor::zero(),
        g: vec![Descriptor::ProxQuadratic {
            p: eye(n),
            c: d.b.clone(),
        }],
        psi: vec![Descriptor::zero()],
        h: vec![Descriptor::ZeroInverse],
        l,
    }
}

pub fn lasso() -> ProblemSpec {
    min_to_problem(&lasso_spec(&lasso_data())).expect("well-formed lasso")
}

/// Scalars of the infimal-convolution fixture
/// `min ½(x − s)² + ((g + ψ) □ h)(x)` with `g = ½a1 y²`,
/// `ψ = ½a2 (y − m)²`, `h = ½c (z − n)²`.
#[derive(Debug, Clone, Copy)]
pub struct InfConvData {
    pub a1: f64,
    pub a2: f64,
    pub m: f64,
    pub c: f64,
    pub n: f64,
    pub s: f64,
}

pub const INF_CONV: InfConvData = InfConvData {
    a1: 1.0,
    a2: 2.0,
    m: 0.5,
    c: 3.0,
    n: -0.2,
    s: 2.0,
};

pub fn inf_conv_spec(d: InfConvData) -> MinSpec {
    let mut l = BTreeMap::new();
    l.insert((0, 0), LinearOp::Identity(1));
    MinSpec {
        primal: SpaceLayout::shared([("x", 1usize)]).expect("static layout"),
        dual: SpaceLayout::shared([("k", 1usize)]).expect("static layout"),
        f: vec![Descriptor::zero()],
        phi: vec![Descriptor::GradientQuadratic {
            p: vec![vec![1.0]],
            c: vec![d.s],
            alpha: None,
        }],
        theta: Descriptor::zero(),
        g: vec![Descriptor::ProxQuadratic {
            p: vec![vec![d.a1]],
            c: vec![0.0],
        }],
        psi: vec![Descriptor::GradientQuadratic {
            p: vec![vec![d.a2]],
            c: vec![d.a2 * d.m],
            alpha: None,
        }],
        h: vec![Descriptor::ProxQuadratic {
            p: vec![vec![d.c]],
            c: vec![d.c * d.n],
        }],
        l,
    }
}

pub fn inf_conv() -> ProblemSpec {
    min_to_problem(&inf_conv_spec(INF_CONV)).expect("well-formed inf-conv")
}

/// `min Σ ½(x_i − s_i)² + (κ/2)(x1 − x2)² + ½(x1 + x2)²` with the middle term
/// entering as the coupling `R = ∇Θ` (`χ = 2κ`).
pub fn coupled_theta_spec(kappa: f64, s: [f64; 2]) -> MinSpec {
    let mut l = BTreeMap::new();
    l.insert((0, 0), LinearOp::Identity(1));
    l.insert((0, 1), LinearOp::Identity(1));
    MinSpec {
        primal: SpaceLayout::shared([("x1", 1usize), ("x2", 1)]).expect("static layout"),
        dual: SpaceLayout::shared([("sum", 1usize)]).expect("static layout"),
        f: vec![Descriptor::zero(), Descriptor::zero()],
        phi: s
            .iter()
            .map(|si| Descriptor::GradientQuadratic {
                p: vec![vec![1.0]],
                c: vec![*si],
                alpha: None,
            })
            .collect(),
        theta: Descriptor::GradientQuadratic {
            p: vec![vec![kappa, -kappa], vec![-kappa, kappa]],
            c: vec![0.0; 2],
            alpha: None,
        },
        g: vec![Descriptor::ProxQuadratic {
            p: vec![vec![1.0]],
            c: vec![0.0],
        }],
        psi: vec![Descriptor::zero()],
        h: vec![Descriptor::ZeroInverse],
        l,
    }
}

pub const COUPLED_KAPPA: f64 = 1.5;
pub const COUPLED_S: [f64; 2] = [1.0, -0.5];

pub fn coupled_theta() -> ProblemSpec {
    min_to_problem(&coupled_theta_spec(COUPLED_KAPPA, COUPLED_S))
        .expect("well-formed coupled problem")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::saddle_residual;

    #[test]
    fn every_fixture_validates() {
        for s in [
            dp1([2.0, 0.6]),
            no_kt_point(),
            vi_parallelogram(),
            lasso(),
            inf_conv(),
            coupled_theta(),
        ] {
            assert!(s.validate().is_ok(), "{:?}", s.validate());
        }
        assert_eq!(coupled_theta().coupling.chi(), 2.0 * COUPLED_KAPPA);
    }

    #[test]
    fn quoted_zeros_are_zeros() {
        let s = dp1([2.0, 0.6]);
        assert!(saddle_residual(&s, &dp1_zero(&s, [2.0, 0.6]), 1.0).unwrap() < 1e-12);
        let s = vi_parallelogram();
        assert!(saddle_residual(&s, &vi_parallelogram_zero(&s), 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn no_kt_point_primal_points_have_no_multiplier() {
        // (t, −t) solves the primal inclusion; the multiplier would need
        // v1 + v2 = 0, v1 − v2 = 0 and v2 = 1 at once
        let s = no_kt_point();
        assert_eq!(s.bl[1].apply(&[-4.0]).unwrap(), vec![1.0]);
        assert_eq!(s.bm[0].resolvent(1.0, &[3.0]).unwrap(), vec![0.0]);
    }
}
