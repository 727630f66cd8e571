//! Circulant (periodic-boundary) convolution and the FFT-based solve of the
//! x-update normal equations `(KᵀK + I)x = Kᵀx′ + x″`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Image, PixelIndex};

/// Small 2-D convolution kernel with nonnegative taps and an anchor pixel.
#[derive(Debug, Clone)]
pub struct BlurKernel {
    taps: Image,
    anchor: PixelIndex,
}

impl BlurKernel {
    /// Validates taps (nonnegative) and anchor (inside the tap grid).
    pub fn new(taps: Image, anchor: PixelIndex) -> Result<Self> {
        if taps.data().iter().any(|&v| v < 0.0) {
            return Err(Error::DomainViolation {
                context: "blur kernel",
                message: "kernel taps must be nonnegative".into(),
            });
        }
        if anchor.row >= taps.height() || anchor.col >= taps.width() {
            return Err(Error::InvalidParameter {
                name: "anchor",
                message: format!(
                    "anchor ({}, {}) outside {}x{} taps",
                    anchor.row,
                    anchor.col,
                    taps.height(),
                    taps.width()
                ),
            });
        }
        Ok(BlurKernel { taps, anchor })
    }

    /// `size`x`size` uniform blur with taps `1/size²`, centered anchor.
    /// Size must be odd so the anchor is exact.
    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidParameter {
                name: "kernel size",
                message: format!("uniform kernel size must be odd and positive, got {size}"),
            });
        }
        let taps = Image::constant(size, size, 1.0 / (size * size) as f64);
        BlurKernel::new(taps, PixelIndex::new(size / 2, size / 2))
    }

    /// 1x1 identity kernel.
    pub fn delta() -> Self {
        BlurKernel {
            taps: Image::constant(1, 1, 1.0),
            anchor: PixelIndex::new(0, 0),
        }
    }

    pub fn taps(&self) -> &Image {
        &self.taps
    }

    pub fn anchor(&self) -> PixelIndex {
        self.anchor
    }
}

/// Cached exact-length 2-D FFT plans for one grid size.
struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    /// Unnormalized forward transform, leaving the spectrum in transposed
    /// (width x height) layout so a full round trip needs only two blocked
    /// transposes.
    fn forward_t(&self, data: &mut Vec<Complex64>) {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(data.len(), h * w);
        self.row_fwd.process(data);
        let mut transposed = transposed_copy(data, h, w);
        self.col_fwd.process(&mut transposed);
        *data = transposed;
    }

    /// Inverse of [`Fft2::forward_t`]: consumes a transposed-layout spectrum
    /// and returns the spatial image, normalized by `1/(height*width)`.
    fn inverse_from_t(&self, data: &mut Vec<Complex64>) {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(data.len(), h * w);
        self.col_inv.process(data);
        let mut spatial = transposed_copy(data, w, h);
        self.row_inv.process(&mut spatial);
        let scale = 1.0 / (h * w) as f64;
        for v in spatial.iter_mut() {
            *v *= scale;
        }
        *data = spatial;
    }
}

/// Cache-blocked out-of-place transpose of a `height` x `width` buffer.
fn transposed_copy(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    transpose::transpose(data, &mut out, width, height);
    out
}

fn to_complex(image: &Image) -> Vec<Complex64> {
    image
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect()
}

/// Drops the imaginary residue of an inverse transform after checking it is
/// numerically negligible relative to the real part.
fn take_real(data: &[Complex64], height: usize, width: usize) -> Result<Image> {
    let mut max_re: f64 = 0.0;
    let mut max_im: f64 = 0.0;
    for v in data {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::DomainViolation {
                context: "inverse transform",
                message: "transform produced non-finite values".into(),
            });
        }
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    assert!(
        max_im <= 1e-9 * max_re + 1e-12,
        "imaginary residue {max_im:e} exceeds 1e-9 of real magnitude {max_re:e}"
    );
    let real: Vec<f64> = data.iter().map(|v| v.re).collect();
    Image::new(height, width, real)
}

/// Frequency-domain transfer function of a kernel embedded on a fixed grid.
///
/// Immutable after [`plan`]; all operations are pure and reuse the cached FFT
/// plans with per-call buffers.
pub struct TransferFunction {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
    /// Same spectrum in the transposed layout used by the transform
    /// internals.
    values_t: Vec<Complex64>,
    fft: Fft2,
}

impl std::fmt::Debug for TransferFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransferFunction")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("dc_gain", &self.values[0].re)
            .finish()
    }
}

/// Embeds `kernel` at the origin of an `height`x`width` periodic grid and
/// returns its frequency-domain transfer function.
pub fn plan(kernel: &BlurKernel, height: usize, width: usize) -> Result<TransferFunction> {
    let (kh, kw) = kernel.taps().dims();
    if kh > height || kw > width {
        return Err(Error::KernelLargerThanGrid {
            kernel_height: kh,
            kernel_width: kw,
            grid_height: height,
            grid_width: width,
        });
    }
    let anchor = kernel.anchor();
    let mut padded = vec![Complex64::default(); height * width];
    for r in 0..kh {
        for c in 0..kw {
            let gr = (r + height - anchor.row) % height;
            let gc = (c + width - anchor.col) % width;
            padded[gr * width + gc] += Complex64::new(kernel.taps().get(r, c), 0.0);
        }
    }
    let fft = Fft2::new(height, width);
    fft.forward_t(&mut padded);
    let values = transposed_copy(&padded, width, height);
    Ok(TransferFunction {
        height,
        width,
        values,
        values_t: padded,
        fft,
    })
}

impl TransferFunction {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Complex spectrum, row-major, DC at index 0.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Gain at the zero frequency; 1.0 for mass-preserving kernels.
    pub fn dc_gain(&self) -> f64 {
        self.values[0].re
    }

    fn check_dims(&self, x: &Image, context: &'static str) -> Result<()> {
        if x.dims() == self.dims() {
            Ok(())
        } else {
            Err(Error::dims(context, self.dims(), x.dims()))
        }
    }

    /// Circular convolution `Kx` via pointwise spectral multiplication.
    pub fn convolve(&self, x: &Image) -> Result<Image> {
        self.check_dims(x, "convolve")?;
        let mut buf = to_complex(x);
        self.fft.forward_t(&mut buf);
        for (v, t) in buf.iter_mut().zip(&self.values_t) {
            *v *= t;
        }
        self.fft.inverse_from_t(&mut buf);
        take_real(&buf, self.height, self.width)
    }

    /// Adjoint convolution `Kᵀx` via multiplication by the conjugate spectrum.
    pub fn convolve_adjoint(&self, x: &Image) -> Result<Image> {
        self.check_dims(x, "convolve_adjoint")?;
        let mut buf = to_complex(x);
        self.fft.forward_t(&mut buf);
        for (v, t) in buf.iter_mut().zip(&self.values_t) {
            *v *= t.conj();
        }
        self.fft.inverse_from_t(&mut buf);
        take_real(&buf, self.height, self.width)
    }

    /// Solves `(KᵀK + I)x = Kᵀx′ + x″` exactly in the frequency domain.
    ///
    /// The spectral denominator `|T|² + 1 ≥ 1` everywhere, so the division is
    /// unconditionally stable.
    pub fn solve_x_update(&self, x_prime: &Image, x_dblprime: &Image) -> Result<Image> {
        let spectrum = self.solve_x_update_spectrum(x_prime, x_dblprime)?;
        let mut buf = spectrum;
        self.fft.inverse_from_t(&mut buf);
        take_real(&buf, self.height, self.width)
    }

    /// Same solve, but also returns `Kx` (reusing the solution spectrum).
    /// Saves one forward transform per solver iteration.
    pub fn solve_x_update_with_kx(
        &self,
        x_prime: &Image,
        x_dblprime: &Image,
    ) -> Result<(Image, Image)> {
        let spectrum = self.solve_x_update_spectrum(x_prime, x_dblprime)?;
        let mut kx_buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&self.values_t)
            .map(|(&s, &t)| s * t)
            .collect();
        let mut x_buf = spectrum;
        self.fft.inverse_from_t(&mut x_buf);
        self.fft.inverse_from_t(&mut kx_buf);
        Ok((
            take_real(&x_buf, self.height, self.width)?,
            take_real(&kx_buf, self.height, self.width)?,
        ))
    }

    /// Solution spectrum in the internal transposed layout.
    fn solve_x_update_spectrum(
        &self,
        x_prime: &Image,
        x_dblprime: &Image,
    ) -> Result<Vec<Complex64>> {
        self.check_dims(x_prime, "solve_x_update")?;
        self.check_dims(x_dblprime, "solve_x_update")?;
        let mut prime = to_complex(x_prime);
        let mut dbl = to_complex(x_dblprime);
        self.fft.forward_t(&mut prime);
        self.fft.forward_t(&mut dbl);
        for ((p, d), t) in prime.iter_mut().zip(&dbl).zip(&self.values_t) {
            let denom = t.norm_sqr() + 1.0;
            *p = (t.conj() * *p + d) / denom;
        }
        Ok(prime)
    }
}
