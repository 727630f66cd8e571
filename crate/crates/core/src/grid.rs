//! Dense 2-D image container and elementwise arithmetic.
//!
//! Every signal in the solver (latent image, counts, splitting variables,
//! scaled duals) lives in an [`Image`]: a row-major grid of `f64` values.

use crate::error::{Error, Result};

/// Row/column address into an [`Image`]. Also used as a kernel anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelIndex {
    pub row: usize,
    pub col: usize,
}

impl PixelIndex {
    pub fn new(row: usize, col: usize) -> Self {
        PixelIndex { row, col }
    }
}

/// Binary pixelwise operation selector for [`Image::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// Summary norms of an image: `l1 = Σ|aᵢ|`, `l2_squared = Σaᵢ²`, `max = maxᵢ aᵢ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2_squared: f64,
    pub max: f64,
}

/// Dense 2-D grid of real intensities, stored row-major (lexicographic order).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major data, validating length and finiteness.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter {
                name: "image dims",
                message: format!("dimensions must be positive, got {height}x{width}"),
            });
        }
        if data.len() != height * width {
            return Err(Error::InvalidParameter {
                name: "image data",
                message: format!(
                    "data length {} does not equal {}x{}",
                    data.len(),
                    height,
                    width
                ),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::DomainViolation {
                context: "image construction",
                message: "data contains non-finite values".into(),
            });
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// All-zero image. Panics on zero dimensions (programmer error).
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0)
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "dimensions must be positive");
        Image {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds from nested rows; rows must be nonempty and equal-length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidParameter {
                name: "rows",
                message: "rows must be nonempty".into(),
            });
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidParameter {
                name: "rows",
                message: "rows have unequal lengths".into(),
            });
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Image::new(rows.len(), width, data)
    }

    /// Builds by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Pixel count `n = height * width`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are positive by construction
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_dims(&self, other: &Image, context: &'static str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::dims(context, self.dims(), other.dims()))
        }
    }

    /// Applies `op` pixelwise; errors on incompatible grids.
    pub fn elementwise(&self, other: &Image, op: ElementwiseOp) -> Result<Image> {
        match op {
            ElementwiseOp::Add => self.zip_with(other, "elementwise add", |a, b| a + b),
            ElementwiseOp::Sub => self.zip_with(other, "elementwise sub", |a, b| a - b),
            ElementwiseOp::Mul => self.zip_with(other, "elementwise mul", |a, b| a * b),
        }
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Image) -> Result<Image> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    fn zip_with(
        &self,
        other: &Image,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Image> {
        self.check_same_dims(other, context)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Image {
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// New image with `f` applied to every pixel.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    /// `l1`, `l2_squared` and (signed) `max` in one pass.
    pub fn norms(&self) -> Norms {
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.data {
            l1 += v.abs();
            l2 += v * v;
            if v > max {
                max = v;
            }
        }
        Norms {
            l1,
            l2_squared: l2,
            max,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.norms().l2_squared.sqrt()
    }

    pub fn max_value(&self) -> f64 {
        self.norms().max
    }

    /// Sum over all pixels.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Euclidean inner product `Σᵢ aᵢ bᵢ`; dimensions must match.
    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.check_same_dims(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(rows: &[&[f64]]) -> Image {
        Image::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn elementwise_add() {
        let a = img(&[&[1.0, 2.0]]);
        let b = img(&[&[3.0, 4.0]]);
        let sum = a.elementwise(&b, ElementwiseOp::Add).unwrap();
        assert_eq!(sum.data(), &[4.0, 6.0]);
    }

    #[test]
    fn elementwise_sub_self_is_zero() {
        let a = img(&[&[1.5, -2.0], &[0.25, 7.0]]);
        let z = a.elementwise(&a, ElementwiseOp::Sub).unwrap();
        assert_eq!(z.dims(), a.dims());
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elementwise_mul() {
        let a = img(&[&[2.0, 3.0]]);
        let b = img(&[&[0.0, 5.0]]);
        let prod = a.elementwise(&b, ElementwiseOp::Mul).unwrap();
        assert_eq!(prod.data(), &[0.0, 15.0]);
    }

    #[test]
    fn elementwise_dimension_mismatch_errors() {
        let a = Image::zeros(2, 3);
        let b = Image::zeros(3, 2);
        let err = a.add(&b).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn norms_basic() {
        let n = img(&[&[3.0, -4.0]]).norms();
        assert_eq!(n.l1, 7.0);
        assert_eq!(n.l2_squared, 25.0);
        assert_eq!(n.max, 3.0);
    }

    #[test]
    fn norms_zero_image() {
        let n = Image::zeros(4, 4).norms();
        assert_eq!((n.l1, n.l2_squared, n.max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn norms_constant_ones() {
        let n = img(&[&[1.0, 1.0, 1.0, 1.0]]).norms();
        assert_eq!((n.l1, n.l2_squared, n.max), (4.0, 4.0, 1.0));
    }

    #[test]
    fn new_rejects_bad_length_and_nonfinite() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn row_major_indexing() {
        let a = img(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.data()[1 * 3 + 2], 6.0);
    }

    proptest! {
        #[test]
        fn add_commutes(values in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let a = Image::new(3, 4, values.clone()).unwrap();
            let b = Image::new(3, 4, values.iter().rev().copied().collect()).unwrap();
            let ab = a.add(&b).unwrap();
            let ba = b.add(&a).unwrap();
            prop_assert_eq!(ab.data(), ba.data());
        }

        #[test]
        fn ops_preserve_finiteness(values in proptest::collection::vec(-1e8f64..1e8, 16)) {
            let a = Image::new(4, 4, values).unwrap();
            let s = a.add(&a).unwrap().mul(&a).unwrap();
            prop_assert!(s.is_finite());
        }
    }
}
