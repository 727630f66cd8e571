//! Isotropic discrete total variation: norm, gradient/divergence pair, and
//! the TV proximity operator computed by Chambolle's dual fixed-point
//! iteration.
//!
//! Differences use the Neumann convention: forward differences with a zero
//! last row/column, and divergence is the exact negative adjoint.

use crate::error::{Error, Result};
use crate::grid::Image;

/// Dual vector field of Chambolle's algorithm; per-pixel magnitude stays ≤ 1.
#[derive(Debug, Clone)]
pub struct DualField {
    p_h: Image,
    p_v: Image,
}

impl DualField {
    pub fn zeros(height: usize, width: usize) -> Self {
        DualField {
            p_h: Image::zeros(height, width),
            p_v: Image::zeros(height, width),
        }
    }

    pub fn new(p_h: Image, p_v: Image) -> Result<Self> {
        p_h.check_same_dims(&p_v, "dual field")?;
        Ok(DualField { p_h, p_v })
    }

    pub fn horizontal(&self) -> &Image {
        &self.p_h
    }

    pub fn vertical(&self) -> &Image {
        &self.p_v
    }

    pub fn dims(&self) -> (usize, usize) {
        self.p_h.dims()
    }

    /// Largest per-pixel Euclidean magnitude of the field.
    pub fn max_magnitude(&self) -> f64 {
        self.p_h
            .data()
            .iter()
            .zip(self.p_v.data())
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Inner-loop control for [`tv_denoise`].
#[derive(Debug, Clone, Copy)]
pub struct TvDenoiseSettings {
    pub max_inner_iters: usize,
    /// Dual step size; 1/4 is the standard empirically convergent choice.
    pub step: f64,
    /// Relative L2 change of the denoised image that stops the inner loop;
    /// 0 disables early exit.
    pub rel_tol: f64,
}

impl Default for TvDenoiseSettings {
    fn default() -> Self {
        TvDenoiseSettings {
            max_inner_iters: 30,
            step: 0.25,
            rel_tol: 1e-4,
        }
    }
}

impl TvDenoiseSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_inner_iters",
                message: "must be positive".into(),
            });
        }
        if !(self.step > 0.0 && self.step <= 0.25) {
            return Err(Error::InvalidParameter {
                name: "step",
                message: format!("dual step must lie in (0, 0.25], got {}", self.step),
            });
        }
        if self.rel_tol < 0.0 {
            return Err(Error::InvalidParameter {
                name: "rel_tol",
                message: "must be nonnegative".into(),
            });
        }
        Ok(())
    }
}

/// Forward differences with zero last column/row.
pub fn gradient(x: &Image) -> DualField {
    let (h, w) = x.dims();
    let mut field = DualField::zeros(h, w);
    gradient_into(x, &mut field);
    field
}

fn gradient_into(x: &Image, out: &mut DualField) {
    let (h, w) = x.dims();
    debug_assert_eq!(out.dims(), (h, w));
    let src = x.data();
    let ph = out.p_h.data_mut();
    for r in 0..h {
        let row = r * w;
        for c in 0..w - 1 {
            ph[row + c] = src[row + c + 1] - src[row + c];
        }
        ph[row + w - 1] = 0.0;
    }
    let pv = out.p_v.data_mut();
    for r in 0..h - 1 {
        let row = r * w;
        for c in 0..w {
            pv[row + c] = src[row + w + c] - src[row + c];
        }
    }
    for c in 0..w {
        pv[(h - 1) * w + c] = 0.0;
    }
}

/// Exact negative adjoint of [`gradient`]: `⟨∇x, p⟩ = −⟨x, div p⟩`.
pub fn divergence(p: &DualField) -> Image {
    let (h, w) = p.dims();
    let mut out = Image::zeros(h, w);
    divergence_into(p, &mut out);
    out
}

fn divergence_into(p: &DualField, out: &mut Image) {
    let (h, w) = p.dims();
    debug_assert_eq!(out.dims(), (h, w));
    let ph = p.p_h.data();
    let pv = p.p_v.data();
    let dst = out.data_mut();
    for r in 0..h {
        let row = r * w;
        if w > 1 {
            dst[row] = ph[row];
            for c in 1..w - 1 {
                dst[row + c] = ph[row + c] - ph[row + c - 1];
            }
            dst[row + w - 1] = -ph[row + w - 2];
        } else {
            dst[row] = 0.0;
        }
    }
    if h > 1 {
        for c in 0..w {
            dst[c] += pv[c];
        }
        for r in 1..h - 1 {
            let row = r * w;
            for c in 0..w {
                dst[row + c] += pv[row + c] - pv[row - w + c];
            }
        }
        let last = (h - 1) * w;
        for c in 0..w {
            dst[last + c] += -pv[last - w + c];
        }
    }
}

/// Isotropic TV: `Σₛ √(Δʰₛ² + Δᵛₛ²)` under the Neumann convention.
pub fn tv_norm(x: &Image) -> f64 {
    let field = gradient(x);
    field
        .p_h
        .data()
        .iter()
        .zip(field.p_v.data())
        .map(|(&a, &b)| (a * a + b * b).sqrt())
        .sum()
}

/// Moreau proximity operator of `weight·TV` at `g`:
/// `arg min_u ½‖u−g‖² + weight·TV(u)`, cold-started dual field.
pub fn tv_denoise(g: &Image, weight: f64, settings: &TvDenoiseSettings) -> Result<Image> {
    let (h, w) = g.dims();
    let mut dual = DualField::zeros(h, w);
    tv_denoise_warm(g, weight, settings, &mut dual)
}

/// Same as [`tv_denoise`], reusing `dual` as warm start. On return `dual`
/// holds the final field for the next outer iteration.
pub fn tv_denoise_warm(
    g: &Image,
    weight: f64,
    settings: &TvDenoiseSettings,
    dual: &mut DualField,
) -> Result<Image> {
    if weight < 0.0 || !weight.is_finite() {
        return Err(Error::InvalidParameter {
            name: "weight",
            message: format!("TV weight must be nonnegative, got {weight}"),
        });
    }
    settings.validate()?;
    if weight == 0.0 {
        return Ok(g.clone());
    }
    g.check_same_dims(&dual.p_h, "tv_denoise warm start")?;

    let (h, w) = g.dims();
    let step = settings.step;
    let inv_weight = 1.0 / weight;

    let mut div_p = divergence(dual);
    let mut grad = DualField::zeros(h, w);
    let mut u = reconstruct(g, weight, &div_p);

    for _ in 0..settings.max_inner_iters {
        dual_gradient_into(&div_p, g, inv_weight, &mut grad);

        // p ← (p + step·∇v) / (1 + step·|∇v|); keeps |p| ≤ 1 pointwise
        {
            let gh = grad.p_h.data();
            let gv = grad.p_v.data();
            let ph = dual.p_h.data_mut();
            let pv = dual.p_v.data_mut();
            for i in 0..ph.len() {
                let mag = (gh[i] * gh[i] + gv[i] * gv[i]).sqrt();
                let denom = 1.0 + step * mag;
                ph[i] = (ph[i] + step * gh[i]) / denom;
                pv[i] = (pv[i] + step * gv[i]) / denom;
            }
        }

        let (diff_sq, base_sq) = divergence_reconstruct_measure(dual, g, weight, &mut div_p, &mut u);

        if settings.rel_tol > 0.0
            && diff_sq.sqrt() <= settings.rel_tol * base_sq.sqrt().max(f64::MIN_POSITIVE)
        {
            break;
        }
    }
    Ok(u)
}

/// `∇(div p − g/weight)` without materializing the intermediate image.
fn dual_gradient_into(div_p: &Image, g: &Image, inv_weight: f64, out: &mut DualField) {
    let (h, w) = div_p.dims();
    let d = div_p.data();
    let gd = g.data();
    let ph = out.p_h.data_mut();
    for r in 0..h {
        let row = r * w;
        for c in 0..w - 1 {
            let here = d[row + c] - gd[row + c] * inv_weight;
            let right = d[row + c + 1] - gd[row + c + 1] * inv_weight;
            ph[row + c] = right - here;
        }
        ph[row + w - 1] = 0.0;
    }
    let pv = out.p_v.data_mut();
    for r in 0..h - 1 {
        let row = r * w;
        for c in 0..w {
            let here = d[row + c] - gd[row + c] * inv_weight;
            let below = d[row + w + c] - gd[row + w + c] * inv_weight;
            pv[row + c] = below - here;
        }
    }
    for c in 0..w {
        pv[(h - 1) * w + c] = 0.0;
    }
}

/// Recomputes `div p`, overwrites `u ← g − weight·div p`, and returns the
/// squared L2 change against the previous `u` plus its squared norm.
fn divergence_reconstruct_measure(
    p: &DualField,
    g: &Image,
    weight: f64,
    div_out: &mut Image,
    u: &mut Image,
) -> (f64, f64) {
    divergence_into(p, div_out);
    let gd = g.data();
    let dd = div_out.data();
    let ud = u.data_mut();
    let mut diff_sq = 0.0;
    let mut base_sq = 0.0;
    for i in 0..ud.len() {
        let old = ud[i];
        let new = gd[i] - weight * dd[i];
        let delta = new - old;
        diff_sq += delta * delta;
        base_sq += old * old;
        ud[i] = new;
    }
    (diff_sq, base_sq)
}

/// u = g − weight·div(p)
fn reconstruct(g: &Image, weight: f64, div_p: &Image) -> Image {
    let mut u = g.clone();
    for (dst, &d) in u.data_mut().iter_mut().zip(div_p.data()) {
        *dst -= weight * d;
    }
    u
}

fn l2_distance(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(height: usize, width: usize, seed: u64) -> Image {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        Image::from_fn(height, width, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        })
    }

    fn inner_product_field(a: &DualField, b: &DualField) -> f64 {
        a.horizontal().dot(b.horizontal()).unwrap() + a.vertical().dot(b.vertical()).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let field = gradient(&Image::constant(5, 5, 3.0));
        assert!(field.horizontal().data().iter().all(|&v| v == 0.0));
        assert!(field.vertical().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_two_by_two_example() {
        let x = Image::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let field = gradient(&x);
        assert_eq!(field.horizontal().data(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(field.vertical().data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adjoint_identity_machine_precision() {
        let x = random_image(5, 5, 3);
        let q = DualField::new(random_image(5, 5, 5), random_image(5, 5, 7)).unwrap();
        let lhs = inner_product_field(&gradient(&x), &q);
        let rhs = -x.dot(&divergence(&q)).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn divergence_of_zero_field_is_zero() {
        let div = divergence(&DualField::zeros(4, 6));
        assert!(div.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_one_by_two_telescopes() {
        let p_h = Image::new(1, 2, vec![2.5, 9.0]).unwrap(); // second entry unused
        let p_v = Image::zeros(1, 2);
        let div = divergence(&DualField::new(p_h, p_v).unwrap());
        assert_eq!(div.data(), &[2.5, -2.5]);
    }

    #[test]
    fn divergence_sums_to_zero() {
        let q = DualField::new(random_image(6, 4, 11), random_image(6, 4, 13)).unwrap();
        assert!(divergence(&q).sum().abs() < 1e-12);
    }

    #[test]
    fn tv_norm_constant_is_zero() {
        assert_eq!(tv_norm(&Image::constant(4, 4, 7.5)), 0.0);
    }

    #[test]
    fn tv_norm_two_by_two_example() {
        let x = Image::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!((tv_norm(&x) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tv_norm_ramp() {
        let x = Image::new(1, 4, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((tv_norm(&x) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn denoise_zero_weight_is_identity() {
        let g = random_image(6, 6, 17);
        let u = tv_denoise(&g, 0.0, &TvDenoiseSettings::default()).unwrap();
        assert_eq!(u.data(), g.data());
    }

    #[test]
    fn denoise_constant_input_is_fixed_point() {
        let g = Image::constant(8, 8, 2.0);
        let u = tv_denoise(&g, 5.0, &TvDenoiseSettings::default()).unwrap();
        for (a, b) in u.data().iter().zip(g.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn denoise_rejects_negative_weight() {
        let g = Image::zeros(2, 2);
        assert!(tv_denoise(&g, -1.0, &TvDenoiseSettings::default()).is_err());
    }

    #[test]
    fn denoise_preserves_mean() {
        let g = random_image(8, 8, 19);
        let settings = TvDenoiseSettings {
            max_inner_iters: 50,
            ..Default::default()
        };
        let u = tv_denoise(&g, 0.7, &settings).unwrap();
        assert!((u.sum() - g.sum()).abs() < 1e-9 * (1.0 + g.sum().abs()));
    }

    #[test]
    fn denoise_objective_never_exceeds_input_objective() {
        for seed in 0..20 {
            let g = random_image(8, 8, 1000 + seed);
            let weight = 0.05 + 0.15 * seed as f64;
            let u = tv_denoise(&g, weight, &TvDenoiseSettings::default()).unwrap();
            let fidelity = 0.5 * l2_distance(&u, &g).powi(2);
            let objective = fidelity + weight * tv_norm(&u);
            let at_input = weight * tv_norm(&g);
            assert!(
                objective <= at_input + 1e-9,
                "seed {seed}: {objective} > {at_input}"
            );
        }
    }

    #[test]
    fn dual_feasible_after_every_inner_step() {
        let g = random_image(8, 8, 23);
        let mut dual = DualField::zeros(8, 8);
        let one_step = TvDenoiseSettings {
            max_inner_iters: 1,
            step: 0.25,
            rel_tol: 0.0,
        };
        for _ in 0..100 {
            tv_denoise_warm(&g, 0.5, &one_step, &mut dual).unwrap();
            assert!(dual.max_magnitude() <= 1.0 + 1e-12);
        }
    }

    /// Projected-gradient dual iteration, the long-run oracle. Uses true
    /// radial projection instead of the production normalization.
    fn projected_gradient_oracle(g: &Image, weight: f64, iters: usize) -> Image {
        let (h, w) = g.dims();
        let step = 0.25;
        let inv_weight = 1.0 / weight;
        let mut dual = DualField::zeros(h, w);
        let mut div_p = Image::zeros(h, w);
        let mut v = Image::zeros(h, w);
        let mut grad = DualField::zeros(h, w);
        for _ in 0..iters {
            for ((dst, &d), &gv) in v.data_mut().iter_mut().zip(div_p.data()).zip(g.data()) {
                *dst = d - gv * inv_weight;
            }
            gradient_into(&v, &mut grad);
            let gh = grad.horizontal().data();
            let gv = grad.vertical().data();
            let ph = dual.p_h.data_mut();
            let pv = dual.p_v.data_mut();
            for i in 0..ph.len() {
                let nh = ph[i] + step * gh[i];
                let nv = pv[i] + step * gv[i];
                let mag = (nh * nh + nv * nv).sqrt().max(1.0);
                ph[i] = nh / mag;
                pv[i] = nv / mag;
            }
            divergence_into(&dual, &mut div_p);
        }
        reconstruct(g, weight, &div_p)
    }

    #[test]
    fn denoise_matches_long_run_dual_oracle() {
        // piecewise-constant two-block image
        let g = Image::from_fn(8, 8, |_, c| if c < 4 { 0.0 } else { 4.0 });
        let weight = 1.0;
        let oracle = projected_gradient_oracle(&g, weight, 100_000);
        let settings = TvDenoiseSettings {
            max_inner_iters: 50_000,
            step: 0.25,
            rel_tol: 0.0,
        };
        let u = tv_denoise(&g, weight, &settings).unwrap();
        for (a, b) in u.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn denoise_nonexpansive_at_tight_tolerance() {
        let g1 = random_image(8, 8, 31);
        let g2 = random_image(8, 8, 37);
        let settings = TvDenoiseSettings {
            max_inner_iters: 20_000,
            step: 0.25,
            rel_tol: 1e-10,
        };
        let u1 = tv_denoise(&g1, 0.8, &settings).unwrap();
        let u2 = tv_denoise(&g2, 0.8, &settings).unwrap();
        assert!(l2_distance(&u1, &u2) <= l2_distance(&g1, &g2) + 1e-6);
    }

    #[test]
    fn warm_start_reaches_same_answer() {
        let g = random_image(8, 8, 41);
        let tight = TvDenoiseSettings {
            max_inner_iters: 20_000,
            step: 0.25,
            rel_tol: 1e-12,
        };
        let cold = tv_denoise(&g, 0.5, &tight).unwrap();
        // warm-start from the dual of a different weight
        let mut dual = DualField::zeros(8, 8);
        tv_denoise_warm(&g, 1.5, &tight, &mut dual).unwrap();
        let warm = tv_denoise_warm(&g, 0.5, &tight, &mut dual).unwrap();
        for (a, b) in warm.data().iter().zip(cold.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
