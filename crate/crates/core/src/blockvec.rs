//! Block-partitioned vectors.
//!
//! Every iterate, gradient and best response in the crate is a flat `f64`
//! buffer with a [`BlockLayout`] sidecar describing how it splits into the
//! players' blocks. Block indices are zero-based.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of the `n` blocks `d_1, ..., d_n` and their offsets into the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLayout("at least one block is required".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidLayout(format!("block {pos} has zero dimension")));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self { dims, offsets, total })
    }

    /// `n` scalar blocks.
    pub fn scalar(n: usize) -> Result<Self> {
        Self::new(vec![1; n])
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_dim(&self, i: usize) -> Result<usize> {
        self.check_block(i)?;
        Ok(self.dims[i])
    }

    pub fn range(&self, i: usize) -> Result<Range<usize>> {
        self.check_block(i)?;
        Ok(self.offsets[i]..self.offsets[i] + self.dims[i])
    }

    pub(crate) fn check_block(&self, i: usize) -> Result<()> {
        if i >= self.dims.len() {
            Err(Error::BlockIndex { index: i, blocks: self.dims.len() })
        } else {
            Ok(())
        }
    }
}

/// A point of `R^d` split into blocks according to a shared [`BlockLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: Arc<BlockLayout>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn new(layout: Arc<BlockLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::Dimension { expected: layout.total_dim(), got: data.len() });
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        let data = vec![0.0; layout.total_dim()];
        Self { layout, data }
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
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

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    /// The contiguous slice holding block `i`.
    pub fn block(&self, i: usize) -> Result<&[f64]> {
        let r = self.layout.range(i)?;
        Ok(&self.data[r])
    }

    pub fn block_mut(&mut self, i: usize) -> Result<&mut [f64]> {
        let r = self.layout.range(i)?;
        Ok(&mut self.data[r])
    }

    /// Overwrites block `i` with `values`, leaving every other block untouched.
    pub fn set_block(&mut self, i: usize, values: &[f64]) -> Result<()> {
        let dst = self.block_mut(i)?;
        if dst.len() != values.len() {
            return Err(Error::Dimension { expected: dst.len(), got: values.len() });
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    /// Copy of `self` with block `i` replaced by `values`, i.e. `(values, x_{-i})`.
    pub fn with_block(&self, i: usize, values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_block(i, values)?;
        Ok(out)
    }

    /// In-place `x_i += coeff * g`.
    pub fn axpy_block(&mut self, i: usize, coeff: f64, g: &[f64]) -> Result<()> {
        let dst = self.block_mut(i)?;
        if dst.len() != g.len() {
            return Err(Error::Dimension { expected: dst.len(), got: g.len() });
        }
        for (d, &v) in dst.iter_mut().zip(g) {
            *d += coeff * v;
        }
        Ok(())
    }

    /// Returns a copy with `x_i += coeff * g`.
    pub fn block_axpy(&self, i: usize, coeff: f64, g: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.axpy_block(i, coeff, g)?;
        Ok(out)
    }

    /// Whole-vector `self += coeff * other`.
    pub fn axpy(&mut self, coeff: f64, other: &BlockVector) -> Result<()> {
        if other.data.len() != self.data.len() {
            return Err(Error::Dimension { expected: self.data.len(), got: other.data.len() });
        }
        for (d, &v) in self.data.iter_mut().zip(&other.data) {
            *d += coeff * v;
        }
        Ok(())
    }

    /// Euclidean norm together with the squared norm of every block.
    pub fn norms(&self) -> Norms {
        let blocks: Vec<f64> = (0..self.num_blocks())
            .map(|i| {
                let r = self.layout.range(i).expect("index within layout");
                self.data[r].iter().map(|v| v * v).sum()
            })
            .collect();
        let sq: f64 = blocks.iter().sum();
        Norms { norm: sq.sqrt(), block_sq: blocks }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norms {
    pub norm: f64,
    pub block_sq: Vec<f64>,
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bv(dims: &[usize], data: &[f64]) -> BlockVector {
        let layout = Arc::new(BlockLayout::new(dims.to_vec()).unwrap());
        BlockVector::new(layout, data.to_vec()).unwrap()
    }

    #[test]
    fn layout_rejects_empty_and_zero_blocks() {
        assert!(BlockLayout::new(vec![]).is_err());
        assert!(BlockLayout::new(vec![2, 0]).is_err());
        let l = BlockLayout::new(vec![2, 1, 3]).unwrap();
        assert_eq!(l.total_dim(), 6);
        assert_eq!(l.range(2).unwrap(), 3..6);
    }

    #[test]
    fn block_view_examples() {
        assert_eq!(bv(&[1, 1], &[3.0, -2.0]).block(1).unwrap(), &[-2.0]);
        assert_eq!(bv(&[2, 1], &[1.0, 2.0, 3.0]).block(0).unwrap(), &[1.0, 2.0]);
        assert_eq!(bv(&[1, 1, 1], &[0.0; 3]).block(2).unwrap(), &[0.0]);
        assert!(matches!(
            bv(&[1, 1], &[0.0, 0.0]).block(2),
            Err(Error::BlockIndex { index: 2, blocks: 2 })
        ));
    }

    #[test]
    fn data_length_must_match_layout() {
        let layout = Arc::new(BlockLayout::new(vec![2, 2]).unwrap());
        assert!(BlockVector::new(layout, vec![1.0; 3]).is_err());
    }

    #[test]
    fn block_axpy_examples() {
        // scalar oracle: 0 + (-0.5) * 2 = -1
        let v = bv(&[1, 1], &[0.0, 5.0]).block_axpy(0, -0.5, &[2.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.0 + (-0.5) * 2.0, 5.0]);
        assert_eq!(v.as_slice(), &[-1.0, 5.0]);

        let v = bv(&[2], &[1.0, 1.0]).block_axpy(0, 1.0, &[-1.0, -1.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0]);

        let orig = bv(&[2, 1], &[0.3, -7.0, 2.5]);
        assert_eq!(orig.block_axpy(1, 0.0, &[123.0]).unwrap(), orig);

        assert!(orig.block_axpy(0, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn norms_examples() {
        let n = bv(&[1, 1], &[3.0, 4.0]).norms();
        assert_eq!(n.norm, 5.0);
        assert_eq!(n.block_sq, vec![9.0, 16.0]);

        let n = bv(&[1, 2], &[0.0; 3]).norms();
        assert_eq!(n.norm, 0.0);
        assert_eq!(n.block_sq, vec![0.0, 0.0]);

        let n = bv(&[2, 2], &[1.0; 4]).norms();
        assert_eq!(n.norm, 2.0);
        assert_eq!(n.block_sq, vec![2.0, 2.0]);
    }

    fn layout_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
        prop::collection::vec(1usize..4, 1..5).prop_flat_map(|dims| {
            let total: usize = dims.iter().sum();
            (Just(dims), prop::collection::vec(-1e3f64..1e3, total))
        })
    }

    proptest! {
        #[test]
        fn norm_squared_is_sum_of_block_norms((dims, data) in layout_and_data()) {
            let n = bv(&dims, &data).norms();
            let total: f64 = n.block_sq.iter().sum();
            let sq = n.norm * n.norm;
            prop_assert!((sq - total).abs() <= 1e-12 * sq.max(1e-300));
        }

        #[test]
        fn axpy_is_linear_in_coeff(
            (dims, data) in layout_and_data(),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            seed in 0usize..100,
        ) {
            let v = bv(&dims, &data);
            let i = seed % dims.len();
            let g: Vec<f64> = (0..dims[i]).map(|k| (k as f64 + 1.0) * 0.37 - 0.5).collect();
            let twice = v.block_axpy(i, a, &g).unwrap().block_axpy(i, b, &g).unwrap();
            let once = v.block_axpy(i, a + b, &g).unwrap();
            for (x, y) in twice.as_slice().iter().zip(once.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
            // other blocks untouched bitwise
            for j in (0..dims.len()).filter(|&j| j != i) {
                prop_assert_eq!(twice.block(j).unwrap(), v.block(j).unwrap());
            }
        }

        #[test]
        fn set_block_leaves_others_untouched((dims, data) in layout_and_data(), seed in 0usize..100) {
            let v = bv(&dims, &data);
            let i = seed % dims.len();
            let read = v.block(i).unwrap().to_vec();
            let w = v.with_block(i, &read).unwrap();
            prop_assert_eq!(w, v);
        }
    }
}
