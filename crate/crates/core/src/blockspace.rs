//! Vector algebra over indexed direct sums of finite-dimensional real spaces.
//!
//! A [`SpaceLayout`] names the blocks of a direct sum and their dimensions;
//! a [`BlockVec`] stores one element of that sum in a single flat buffer.
//! [`StateX`] is the quadruple `(x, y, z, v*)` iterated by the solvers.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Ordered list of labelled blocks with their dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    labels: Vec<String>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl SpaceLayout {
    pub fn new<S: Into<String>>(blocks: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut dims = Vec::new();
        let mut offsets = Vec::new();
        let mut total = 0;
        for (label, dim) in blocks {
            let label = label.into();
            if dim == 0 {
                return Err(Error::InvalidParameter(format!(
                    "block `{label}` has dimension 0"
                )));
            }
            if labels.contains(&label) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate block label `{label}`"
                )));
            }
            labels.push(label);
            dims.push(dim);
            offsets.push(total);
            total += dim;
        }
        Ok(Self {
            labels,
            dims,
            offsets,
            total,
        })
    }

    /// Convenience for a layout wrapped in an `Arc`, the form every vector holds.
    pub fn shared<S: Into<String>>(
        blocks: impl IntoIterator<Item = (S, usize)>,
    ) -> Result<Arc<Self>> {
        Self::new(blocks).map(Arc::new)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn label(&self, block: usize) -> &str {
        &self.labels[block]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        let start = self.offsets[block];
        start..start + self.dims[block]
    }
}

fn same_layout(a: &Arc<SpaceLayout>, b: &Arc<SpaceLayout>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// An element of a direct sum, stored contiguously block after block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVec {
    layout: Arc<SpaceLayout>,
    data: Vec<f64>,
}

impl BlockVec {
    pub fn zeros(layout: &Arc<SpaceLayout>) -> Self {
        Self {
            layout: Arc::clone(layout),
            data: vec![0.0; layout.total_dim()],
        }
    }

    pub fn from_vec(layout: &Arc<SpaceLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::Dimension {
                context: "block vector data".into(),
                expected: layout.total_dim(),
                got: data.len(),
            });
        }
        Ok(Self {
            layout: Arc::clone(layout),
            data,
        })
    }

    /// Assembles a vector from one slice per block, in layout order.
    pub fn from_blocks(layout: &Arc<SpaceLayout>, blocks: &[&[f64]]) -> Result<Self> {
        if blocks.len() != layout.len() {
            return Err(Error::Dimension {
                context: "number of blocks".into(),
                expected: layout.len(),
                got: blocks.len(),
            });
        }
        let mut data = Vec::with_capacity(layout.total_dim());
        for (b, block) in blocks.iter().enumerate() {
            if block.len() != layout.dim(b) {
                return Err(Error::Dimension {
                    context: format!("block `{}`", layout.label(b)),
                    expected: layout.dim(b),
                    got: block.len(),
                });
            }
            data.extend_from_slice(block);
        }
        Ok(Self {
            layout: Arc::clone(layout),
            data,
        })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, b: usize) -> &[f64] {
        &self.data[self.layout.range(b)]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [f64] {
        let r = self.layout.range(b);
        &mut self.data[r]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.layout.len()).map(move |b| self.block(b))
    }

    fn check(&self, other: &BlockVec) -> Result<()> {
        if same_layout(&self.layout, &other.layout) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout.labels, other.layout.labels
            )))
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &BlockVec) -> Result<()> {
        self.check(other)?;
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Scalar product of two block vectors over the same layout.
pub fn inner(u: &BlockVec, v: &BlockVec) -> Result<f64> {
    u.check(v)?;
    Ok(dot(&u.data, &v.data))
}

pub fn norm_sq(u: &BlockVec) -> f64 {
    dot(&u.data, &u.data)
}

/// Componentwise `Σ coeffs[j] * vecs[j]`.
pub fn lincomb(coeffs: &[f64], vecs: &[&BlockVec]) -> Result<BlockVec> {
    if vecs.is_empty() {
        return Err(Error::InvalidParameter("empty linear combination".into()));
    }
    if coeffs.len() != vecs.len() {
        return Err(Error::Dimension {
            context: "linear combination coefficients".into(),
            expected: vecs.len(),
            got: coeffs.len(),
        });
    }
    let mut out = BlockVec::zeros(vecs[0].layout());
    for (c, v) in coeffs.iter().zip(vecs) {
        out.axpy(*c, v)?;
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The quadruple `(x, y, z, v*)` in `H ⊕ G ⊕ G ⊕ G`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateX {
    pub x: BlockVec,
    pub y: BlockVec,
    pub z: BlockVec,
    pub vstar: BlockVec,
}

impl StateX {
    pub fn zeros(h: &Arc<SpaceLayout>, g: &Arc<SpaceLayout>) -> Self {
        Self {
            x: BlockVec::zeros(h),
            y: BlockVec::zeros(g),
            z: BlockVec::zeros(g),
            vstar: BlockVec::zeros(g),
        }
    }

    pub fn new(x: BlockVec, y: BlockVec, z: BlockVec, vstar: BlockVec) -> Result<Self> {
        y.check(&z)?;
        y.check(&vstar)?;
        Ok(Self { x, y, z, vstar })
    }

    pub fn h_layout(&self) -> &Arc<SpaceLayout> {
        self.x.layout()
    }

    pub fn g_layout(&self) -> &Arc<SpaceLayout> {
        self.y.layout()
    }

    pub fn parts(&self) -> [&BlockVec; 4] {
        [&self.x, &self.y, &self.z, &self.vstar]
    }

    fn parts_mut(&mut self) -> [&mut BlockVec; 4] {
        [&mut self.x, &mut self.y, &mut self.z, &mut self.vstar]
    }

    pub fn total_dim(&self) -> usize {
        self.x.as_slice().len() + 3 * self.y.as_slice().len()
    }

    pub fn inner(&self, other: &StateX) -> Result<f64> {
        let mut s = 0.0;
        for (a, b) in self.parts().into_iter().zip(other.parts()) {
            s += inner(a, b)?;
        }
        Ok(s)
    }

    pub fn norm_sq(&self) -> f64 {
        self.parts().into_iter().map(norm_sq).sum()
    }

    pub fn axpy(&mut self, alpha: f64, other: &StateX) -> Result<()> {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn dist_sq(&self, other: &StateX) -> Result<f64> {
        let mut s = 0.0;
        for (a, b) in self.parts().into_iter().zip(other.parts()) {
            a.check(b)?;
            s += dist_sq(a.as_slice(), b.as_slice());
        }
        Ok(s)
    }

    /// Concatenation `x ‖ y ‖ z ‖ v*` as one flat vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for p in self.parts() {
            out.extend_from_slice(p.as_slice());
        }
        out
    }

    pub fn from_flat(h: &Arc<SpaceLayout>, g: &Arc<SpaceLayout>, flat: &[f64]) -> Result<Self> {
        let (nh, ng) = (h.total_dim(), g.total_dim());
        if flat.len() != nh + 3 * ng {
            return Err(Error::Dimension {
                context: "flat state".into(),
                expected: nh + 3 * ng,
                got: flat.len(),
            });
        }
        Ok(Self {
            x: BlockVec::from_vec(h, flat[..nh].to_vec())?,
            y: BlockVec::from_vec(g, flat[nh..nh + ng].to_vec())?,
            z: BlockVec::from_vec(g, flat[nh + ng..nh + 2 * ng].to_vec())?,
            vstar: BlockVec::from_vec(g, flat[nh + 2 * ng..].to_vec())?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize) -> Arc<SpaceLayout> {
        SpaceLayout::shared([("a", n)]).unwrap()
    }

    #[test]
    fn inner_of_small_vectors() {
        let l = line(2);
        let u = BlockVec::from_vec(&l, vec![1.0, 2.0]).unwrap();
        let v = BlockVec::from_vec(&l, vec![3.0, 4.0]).unwrap();
        assert_eq!(inner(&u, &v).unwrap(), 11.0);
        assert_eq!(inner(&BlockVec::zeros(&l), &v).unwrap(), 0.0);
    }

    #[test]
    fn norm_sq_values() {
        let l = line(2);
        assert_eq!(
            norm_sq(&BlockVec::from_vec(&l, vec![3.0, 4.0]).unwrap()),
            25.0
        );
        assert_eq!(norm_sq(&BlockVec::zeros(&l)), 0.0);
    }

    #[test]
    fn lincomb_cases() {
        let l = line(2);
        let u = BlockVec::from_vec(&l, vec![1.0, 0.0]).unwrap();
        let v = BlockVec::from_vec(&l, vec![0.0, 1.0]).unwrap();
        assert_eq!(lincomb(&[1.0, 0.0], &[&u, &v]).unwrap(), u);
        assert_eq!(
            lincomb(&[1.0, -1.0], &[&u, &u]).unwrap(),
            BlockVec::zeros(&l)
        );
        assert_eq!(
            lincomb(&[2.0, -1.0], &[&u, &v]).unwrap().as_slice(),
            &[2.0, -1.0]
        );
        assert!(lincomb(&[], &[]).is_err());
        assert!(lincomb(&[1.0], &[&u, &v]).is_err());
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let a = BlockVec::zeros(&line(2));
        let b = BlockVec::zeros(&SpaceLayout::shared([("b", 2)]).unwrap());
        assert!(matches!(inner(&a, &b), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn layout_rejects_bad_blocks() {
        assert!(SpaceLayout::new([("a", 0usize)]).is_err());
        assert!(SpaceLayout::new([("a", 1usize), ("a", 2)]).is_err());
        let l = SpaceLayout::new([("a", 2usize), ("b", 3)]).unwrap();
        assert_eq!(l.total_dim(), 5);
        assert_eq!(l.range(1), 2..5);
        assert_eq!(l.index_of("b"), Some(1));
    }

    #[test]
    fn state_flat_round_trip() {
        let h = SpaceLayout::shared([("x1", 2usize)]).unwrap();
        let g = SpaceLayout::shared([("k1", 1usize), ("k2", 2)]).unwrap();
        let flat: Vec<f64> = (0..11).map(f64::from).collect();
        let s = StateX::from_flat(&h, &g, &flat).unwrap();
        assert_eq!(s.vstar.block(1), &[9.0, 10.0]);
        assert_eq!(s.to_flat(), flat);
    }

    fn vecs(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    }

    proptest! {
        #[test]
        fn inner_matches_reverse_order_sum((a, b) in vecs(5)) {
            let l = line(5);
            let u = BlockVec::from_vec(&l, a.clone()).unwrap();
            let v = BlockVec::from_vec(&l, b.clone()).unwrap();
            let mut reverse = 0.0;
            for j in (0..5).rev() {
                reverse += a[j] * b[j];
            }
            let scale = a.iter().zip(&b).map(|(x, y)| (x * y).abs()).sum::<f64>().max(1.0);
            prop_assert!((inner(&u, &v).unwrap() - reverse).abs() <= 1e-14 * scale);
            prop_assert_eq!(inner(&u, &v).unwrap(), inner(&v, &u).unwrap());
        }

        #[test]
        fn norm_sq_is_self_inner(a in prop::collection::vec(-10.0..10.0f64, 3)) {
            let u = BlockVec::from_vec(&line(3), a).unwrap();
            prop_assert_eq!(norm_sq(&u), inner(&u, &u).unwrap());
            prop_assert!(norm_sq(&u) >= 0.0);
        }

        #[test]
        fn cauchy_schwarz((a, b) in vecs(6)) {
            let l = line(6);
            let u = BlockVec::from_vec(&l, a).unwrap();
            let v = BlockVec::from_vec(&l, b).unwrap();
            let ip = inner(&u, &v).unwrap();
            prop_assert!(ip * ip <= norm_sq(&u) * norm_sq(&v) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn blocks_reassemble((a, b) in vecs(6)) {
            let l = SpaceLayout::shared([("p", 1usize), ("q", 3), ("r", 2)]).unwrap();
            let u = BlockVec::from_vec(&l, a.clone()).unwrap();
            let parts: Vec<&[f64]> = u.blocks().collect();
            prop_assert_eq!(BlockVec::from_blocks(&l, &parts).unwrap(), u.clone());

            // permuting blocks consistently leaves the scalar product unchanged
            let v = BlockVec::from_vec(&l, b).unwrap();
            let perm = SpaceLayout::shared([("r", 2usize), ("p", 1), ("q", 3)]).unwrap();
            let pu = BlockVec::from_blocks(&perm, &[u.block(2), u.block(0), u.block(1)]).unwrap();
            let pv = BlockVec::from_blocks(&perm, &[v.block(2), v.block(0), v.block(1)]).unwrap();
            let lhs = inner(&u, &v).unwrap();
            prop_assert!((lhs - inner(&pu, &pv).unwrap()).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
