//! Real spherical harmonics on equirectangular grids: basis evaluation,
//! projection, reconstruction, clamped-cosine irradiance and the three
//! coefficient-space losses.
//!
//! The basis is the orthonormal real one without the Condon–Shortley phase:
//! `B(k, 0) = N(k,0) P(k,0)(cos θ)`, `B(k, m>0) = √2 N(k,m) P(k,m)(cos θ) cos(mφ)`,
//! `B(k, m<0) = √2 N(k,|m|) P(k,|m|)(cos θ) sin(|m|φ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::EquirectImage;
use crate::sphere::{GridGeometry, SphereDir, WeightingMode};

/// Flat index of `(k, m)` within one channel's coefficient vector.
#[inline]
pub fn sh_index(k: usize, m: i64) -> usize {
    ((k * (k + 1)) as i64 + m) as usize
}

/// Number of coefficients per channel for order `k_max`.
#[inline]
pub fn coeff_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Band of a flat index.
#[inline]
fn band_of(index: usize) -> usize {
    (index as f64).sqrt() as usize
}

/// Clamped-cosine convolution weight per band (zero above band 2).
pub fn irradiance_band_scale(k: usize) -> f64 {
    match k {
        0 => PI,
        1 => 2.0 * PI / 3.0,
        2 => PI / 4.0,
        _ => 0.0,
    }
}

/// Per-channel real SH coefficients up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffs {
    order: usize,
    coeffs: [Vec<f64>; 3],
}

impl ShCoeffs {
    pub fn zeros(order: usize) -> Self {
        let n = coeff_count(order);
        ShCoeffs {
            order,
            coeffs: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn from_channels(order: usize, coeffs: [Vec<f64>; 3]) -> Result<Self> {
        let n = coeff_count(order);
        for (c, ch) in coeffs.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::invalid(format!(
                    "channel {c} has {} coefficients, order {order} needs {n}",
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("channel {c} has a non-finite coefficient")));
            }
        }
        Ok(ShCoeffs { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.coeffs[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.coeffs[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.coeffs
    }

    pub fn get(&self, c: usize, k: usize, m: i64) -> f64 {
        self.coeffs[c][sh_index(k, m)]
    }

    pub fn set(&mut self, c: usize, k: usize, m: i64, v: f64) {
        self.coeffs[c][sh_index(k, m)] = v;
    }

    /// Total scalar count, `3 (K + 1)²`.
    pub fn param_count(&self) -> usize {
        3 * coeff_count(self.order)
    }

    /// Returns a copy at `order`, truncating or zero-padding.
    pub fn with_order(&self, order: usize) -> ShCoeffs {
        let mut out = ShCoeffs::zeros(order);
        let n = coeff_count(order.min(self.order));
        for c in 0..3 {
            out.coeffs[c][..n].copy_from_slice(&self.coeffs[c][..n]);
        }
        out
    }

    fn zip_map(&self, other: &ShCoeffs, f: impl Fn(f64, f64) -> f64) -> ShCoeffs {
        let mut out = self.clone();
        for c in 0..3 {
            for (o, b) in out.coeffs[c].iter_mut().zip(&other.coeffs[c]) {
                *o = f(*o, *b);
            }
        }
        out
    }

    pub fn sub(&self, other: &ShCoeffs) -> Result<ShCoeffs> {
        check_orders(self, other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scaled(&self, factor: f64) -> ShCoeffs {
        let mut out = self.clone();
        for ch in &mut out.coeffs {
            ch.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &ShCoeffs) -> Result<f64> {
        check_orders(self, other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

fn check_orders(a: &ShCoeffs, b: &ShCoeffs) -> Result<()> {
    if a.order != b.order {
        return Err(Error::invalid(format!(
            "SH order mismatch: {} vs {}",
            a.order, b.order
        )));
    }
    Ok(())
}

/// Normalised associated Legendre factors for every `(k, m)` up to `order`,
/// laid out by [`sh_index`]; the `m < 0` slots repeat the `|m|` value so a
/// basis value is `table[i] * trig(m)`.
fn legendre_table(order: usize, ct: f64, st: f64) -> Vec<f64> {
    let n = coeff_count(order);
    let mut out = vec![0.0; n];
    // P(m, m) = (2m-1)!! st^m without the Condon–Shortley sign
    let mut pmm = 1.0;
    for m in 0..=order {
        if m > 0 {
            pmm *= (2 * m - 1) as f64 * st;
        }
        let mut p_prev = 0.0;
        let mut p_cur = pmm;
        for k in m..=order {
            if k == m + 1 {
                p_prev = p_cur;
                p_cur = ct * (2 * m + 1) as f64 * pmm;
            } else if k > m + 1 {
                let next = ((2 * k - 1) as f64 * ct * p_cur - (k + m - 1) as f64 * p_prev)
                    / (k - m) as f64;
                p_prev = p_cur;
                p_cur = next;
            }
            // (k-m)!/(k+m)!
            let mut ratio = 1.0;
            for j in (k - m + 1)..=(k + m) {
                ratio /= j as f64;
            }
            let mut norm = ((2 * k + 1) as f64 / (4.0 * PI) * ratio).sqrt();
            if m > 0 {
                norm *= std::f64::consts::SQRT_2;
            }
            let v = norm * p_cur;
            out[sh_index(k, m as i64)] = v;
            out[sh_index(k, -(m as i64))] = v;
        }
    }
    out
}

/// Trig factor of every flat index for azimuth `phi`.
fn trig_row(order: usize, phi: f64) -> Vec<f64> {
    let mut out = vec![0.0; coeff_count(order)];
    for k in 0..=order {
        for m in -(k as i64)..=(k as i64) {
            out[sh_index(k, m)] = match m {
                0 => 1.0,
                m if m > 0 => (m as f64 * phi).cos(),
                m => ((-m) as f64 * phi).sin(),
            };
        }
    }
    out
}

/// All basis values at `d`, laid out by [`sh_index`].
pub fn eval_basis_all(order: usize, d: &SphereDir) -> Vec<f64> {
    let st = (d.x * d.x + d.y * d.y).sqrt();
    let phi = d.y.atan2(d.x);
    let leg = legendre_table(order, d.z, st);
    let trig = trig_row(order, phi);
    leg.iter().zip(&trig).map(|(a, b)| a * b).collect()
}

/// Single basis function `B(k, m)` at `d`.
pub fn eval_basis(k: usize, m: i64, d: &SphereDir) -> Result<f64> {
    if m.unsigned_abs() as usize > k {
        return Err(Error::invalid(format!("|m| = {} exceeds k = {k}", m.abs())));
    }
    Ok(eval_basis_all(k, d)[sh_index(k, m)])
}

/// Basis values factored over an equirectangular grid: row (polar) factors
/// and column (azimuthal) factors.
pub(crate) struct GridBasis {
    order: usize,
    geom: GridGeometry,
    rows: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
}

impl GridBasis {
    pub(crate) fn new(order: usize, geom: GridGeometry) -> Self {
        let rows = (0..geom.height())
            .map(|y| {
                let (st, ct) = geom.theta(y).sin_cos();
                legendre_table(order, ct, st)
            })
            .collect();
        let cols = (0..geom.width())
            .map(|x| trig_row(order, geom.phi(x)))
            .collect();
        GridBasis {
            order,
            geom,
            rows,
            cols,
        }
    }

    /// `Σ_ρ weight(y) I(c, ρ) B(ρ)` for every coefficient. Rows are reduced
    /// in order, so the result does not depend on the thread count.
    pub(crate) fn project(&self, img: &EquirectImage, row_weight: impl Fn(usize) -> f64 + Sync) -> ShCoeffs {
        let n = coeff_count(self.order);
        let w = self.geom.width();
        let partials: Vec<[Vec<f64>; 3]> = img
            .pixels()
            .par_chunks(w)
            .enumerate()
            .map(|(y, row)| {
                // azimuthal sums first, then the polar factor
                let mut acc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                for (x, p) in row.iter().enumerate() {
                    let trig = &self.cols[x];
                    for c in 0..3 {
                        let v = p[c];
                        if v != 0.0 {
                            for (a, t) in acc[c].iter_mut().zip(trig) {
                                *a += v * t;
                            }
                        }
                    }
                }
                let scale = row_weight(y);
                let leg = &self.rows[y];
                for ch in &mut acc {
                    for (a, l) in ch.iter_mut().zip(leg) {
                        *a *= l * scale;
                    }
                }
                acc
            })
            .collect();
        let mut out = ShCoeffs::zeros(self.order);
        for part in &partials {
            for c in 0..3 {
                for (o, v) in out.coeffs[c].iter_mut().zip(&part[c]) {
                    *o += v;
                }
            }
        }
        out
    }

    pub(crate) fn reconstruct(&self, coeffs: &ShCoeffs) -> Vec<[f64; 3]> {
        let n = coeff_count(self.order);
        let w = self.geom.width();
        let rows: Vec<Vec<[f64; 3]>> = (0..self.geom.height())
            .into_par_iter()
            .map(|y| {
                let leg = &self.rows[y];
                let mut folded = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                for c in 0..3 {
                    for i in 0..n {
                        folded[c][i] = coeffs.coeffs[c][i] * leg[i];
                    }
                }
                (0..w)
                    .map(|x| {
                        let trig = &self.cols[x];
                        let mut px = [0.0; 3];
                        for c in 0..3 {
                            px[c] = folded[c].iter().zip(trig).map(|(a, t)| a * t).sum();
                        }
                        px
                    })
                    .collect()
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    /// Gram matrix `Σ_ρ ω(ρ) B_i(ρ) B_j(ρ)`, using that the column factors
    /// are shared by every row.
    fn gram(&self) -> DMatrix<f64> {
        let n = coeff_count(self.order);
        let mut col_gram = DMatrix::<f64>::zeros(n, n);
        for trig in &self.cols {
            for i in 0..n {
                for j in 0..=i {
                    col_gram[(i, j)] += trig[i] * trig[j];
                }
            }
        }
        let mut g = DMatrix::<f64>::zeros(n, n);
        for (y, leg) in self.rows.iter().enumerate() {
            let omega = self.geom.row_solid_angle(y);
            for i in 0..n {
                for j in 0..=i {
                    g[(i, j)] += omega * leg[i] * leg[j] * col_gram[(i, j)];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(j, i)] = g[(i, j)];
            }
        }
        g
    }
}

/// Projects a panorama onto the basis through `order`.
///
/// `SolidAngle` integrates with per-pixel solid angles; `PaperLiteral` uses
/// the unweighted `4π/(wh) Σ` form.
pub fn project_sh(img: &EquirectImage, order: usize, mode: WeightingMode) -> ShCoeffs {
    let geom = img.geom();
    let basis = GridBasis::new(order, geom);
    match mode {
        WeightingMode::SolidAngle => basis.project(img, |y| geom.row_solid_angle(y)),
        WeightingMode::PaperLiteral => {
            let w = 4.0 * PI / geom.pixel_count() as f64;
            basis.project(img, |_| w)
        }
    }
}

/// Evaluates the expansion on every pixel. With `clamp` set, negative
/// ringing is cut to zero.
pub fn reconstruct_sh(coeffs: &ShCoeffs, geom: GridGeometry, clamp: bool) -> EquirectImage {
    let basis = GridBasis::new(coeffs.order, geom);
    let mut pixels = basis.reconstruct(coeffs);
    if clamp {
        for p in &mut pixels {
            *p = p.map(|v| v.max(0.0));
        }
    }
    EquirectImage::new(geom, pixels).expect("finite coefficients give finite pixels")
}

/// Irradiance coefficients (order 2) of a radiance expansion: bands 0..=2
/// scaled by the clamped-cosine kernel, higher bands dropped. Lower-order
/// input is zero-padded.
pub fn render_irradiance(radiance: &ShCoeffs) -> ShCoeffs {
    let mut out = radiance.with_order(2);
    for c in 0..3 {
        for (i, v) in out.coeffs[c].iter_mut().enumerate() {
            *v *= irradiance_band_scale(band_of(i));
        }
    }
    out
}

/// Irradiance for surface normal `n`.
pub fn irradiance_at(irradiance: &ShCoeffs, n: &SphereDir) -> [f64; 3] {
    let b = eval_basis_all(irradiance.order, n);
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = irradiance.coeffs[c].iter().zip(&b).map(|(a, v)| a * v).sum();
    }
    out
}

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: ShCoeffs,
}

/// Band-weighted squared coefficient error, `Σ_c Σ_k 1/(2k+1) Σ_m (Â - A)²`.
pub fn sh_coeff_loss(pred: &ShCoeffs, gt: &ShCoeffs) -> Result<LossGrad> {
    let diff = pred.sub(gt)?;
    let mut value = 0.0;
    let mut grad = ShCoeffs::zeros(pred.order);
    for c in 0..3 {
        for (i, d) in diff.coeffs[c].iter().enumerate() {
            let w = 1.0 / (2 * band_of(i) + 1) as f64;
            value += w * d * d;
            grad.coeffs[c][i] = 2.0 * w * d;
        }
    }
    Ok(LossGrad { value, grad })
}

/// `1/(3wh) Σ sin θ (Σ (Â - A) B)²` for a coefficient difference.
fn weighted_map_loss(diff: &ShCoeffs, geom: GridGeometry) -> LossGrad {
    let basis = GridBasis::new(diff.order, geom);
    let recon = EquirectImage::new(geom, basis.reconstruct(diff)).expect("finite");
    let norm = 1.0 / (3 * geom.pixel_count()) as f64;
    let w = geom.width();
    let value: f64 = recon
        .pixels()
        .chunks(w)
        .enumerate()
        .map(|(y, row)| {
            let s: f64 = row.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>()).sum();
            s * geom.theta(y).sin()
        })
        .sum::<f64>()
        * norm;
    // d/dÂ_i = 2/(3wh) Σ sin θ D(ρ) B_i(ρ)
    let grad = basis.project(&recon, |y| 2.0 * norm * geom.theta(y).sin());
    LossGrad { value, grad }
}

/// Elevation-weighted squared error between the two reconstructed maps.
pub fn sh_reconstruction_loss(pred: &ShCoeffs, gt: &ShCoeffs, geom: GridGeometry) -> Result<LossGrad> {
    let diff = pred.sub(gt)?;
    Ok(weighted_map_loss(&diff, geom))
}

/// Same weighting as [`sh_reconstruction_loss`], applied to the irradiance
/// maps of both expansions.
pub fn sh_rendering_loss(pred: &ShCoeffs, gt: &ShCoeffs, geom: GridGeometry) -> Result<LossGrad> {
    let diff = pred.sub(gt)?;
    let rendered = render_irradiance(&diff);
    let inner = weighted_map_loss(&rendered, geom);
    // chain rule through the diagonal band scaling
    let mut grad = ShCoeffs::zeros(pred.order);
    let n = coeff_count(pred.order.min(2));
    for c in 0..3 {
        for i in 0..n {
            grad.coeffs[c][i] = inner.grad.coeffs[c][i] * irradiance_band_scale(band_of(i));
        }
    }
    Ok(LossGrad {
        value: inner.value,
        grad,
    })
}

/// Largest order accepted by [`fit_sh_least_squares`].
pub const MAX_FIT_ORDER: usize = 10;

/// Solid-angle-weighted least-squares fit through `order`.
pub fn fit_sh_least_squares(img: &EquirectImage, order: usize) -> Result<ShCoeffs> {
    if order > MAX_FIT_ORDER {
        return Err(Error::invalid(format!(
            "least-squares fit supports order <= {MAX_FIT_ORDER}, got {order}"
        )));
    }
    let geom = img.geom();
    let basis = GridBasis::new(order, geom);
    let gram = basis.gram();
    let rhs = basis.project(img, |y| geom.row_solid_angle(y));
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "normal equations are singular for order {order} on a {}x{} grid",
            geom.width(),
            geom.height()
        ))
    })?;
    let n = coeff_count(order);
    let mut out = ShCoeffs::zeros(order);
    for c in 0..3 {
        let b = DVector::from_column_slice(&rhs.coeffs[c]);
        let x = chol.solve(&b);
        out.coeffs[c].copy_from_slice(&x.as_slice()[..n]);
    }
    Ok(out)
}

/// Solid-angle-weighted squared residual `Σ ω |I - recon|²`.
pub fn weighted_residual(img: &EquirectImage, coeffs: &ShCoeffs) -> f64 {
    let geom = img.geom();
    let recon = reconstruct_sh(coeffs, geom, false);
    let w = geom.width();
    img.pixels()
        .chunks(w)
        .zip(recon.pixels().chunks(w))
        .enumerate()
        .map(|(y, (a, b))| {
            let s: f64 = a
                .iter()
                .zip(b)
                .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
                .sum();
            s * geom.row_solid_angle(y)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(order: usize, rng: &mut impl Rng) -> ShCoeffs {
        let n = coeff_count(order);
        let mut out = ShCoeffs::zeros(order);
        for c in 0..3 {
            for i in 0..n {
                out.coeffs[c][i] = rng.random_range(-1.0..1.0);
            }
        }
        out
    }

    #[test]
    fn basis_constants() {
        let up = SphereDir::UP;
        let d = SphereDir::new(0.3, -0.2, 0.5).unwrap();
        assert_abs_diff_eq!(eval_basis(0, 0, &d).unwrap(), 0.282_094_791_8, epsilon = 1e-10);
        assert_abs_diff_eq!(eval_basis(1, 0, &up).unwrap(), 0.488_602_511_9, epsilon = 1e-10);
        assert_abs_diff_eq!(eval_basis(2, 0, &up).unwrap(), 0.630_783_130_5, epsilon = 1e-10);
        assert!(eval_basis(1, 2, &up).is_err());
    }

    /// Band 1 and 2 against the usual Cartesian closed forms.
    #[test]
    fn basis_matches_cartesian_forms() {
        let d = SphereDir::new(0.3, -0.2, 0.5).unwrap();
        let (x, y, z) = (d.x, d.y, d.z);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let b = eval_basis_all(2, &d);
        assert_abs_diff_eq!(b[sh_index(1, -1)], c1 * y, epsilon = 1e-12);
        assert_abs_diff_eq!(b[sh_index(1, 0)], c1 * z, epsilon = 1e-12);
        assert_abs_diff_eq!(b[sh_index(1, 1)], c1 * x, epsilon = 1e-12);
        let c2 = 0.5 * (15.0 / PI).sqrt();
        assert_abs_diff_eq!(b[sh_index(2, -2)], c2 * x * y, epsilon = 1e-12);
        assert_abs_diff_eq!(b[sh_index(2, -1)], c2 * y * z, epsilon = 1e-12);
        assert_abs_diff_eq!(b[sh_index(2, 1)], c2 * x * z, epsilon = 1e-12);
        assert_abs_diff_eq!(b[sh_index(2, 2)], 0.5 * c2 * (x * x - y * y), epsilon = 1e-12);
        let c20 = 0.25 * (5.0 / PI).sqrt();
        assert_abs_diff_eq!(b[sh_index(2, 0)], c20 * (3.0 * z * z - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn constant_projects_to_dc() {
        let geom = GridGeometry::new(512, 256).unwrap();
        let img = EquirectImage::constant(geom, [1.0; 3]);
        let c = project_sh(&img, 2, WeightingMode::SolidAngle);
        for ch in 0..3 {
            assert_abs_diff_eq!(c.get(ch, 0, 0), 2.0 * PI.sqrt(), epsilon = 1e-4);
            for i in 1..9 {
                assert!(c.channel(ch)[i].abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_basis_image_projects_to_one_hot() {
        let geom = GridGeometry::new(512, 256).unwrap();
        let img = EquirectImage::from_fn(geom, |x, y| {
            let v = eval_basis(1, 0, &geom.dir_from_pixel(x, y).unwrap()).unwrap();
            [v; 3]
        })
        .unwrap();
        let c = project_sh(&img, 2, WeightingMode::SolidAngle);
        for ch in 0..3 {
            for i in 0..9 {
                let want = if i == sh_index(1, 0) { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(c.channel(ch)[i], want, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn paper_literal_mode_differs_on_nonconstant_maps() {
        let geom = GridGeometry::new(64, 32).unwrap();
        let img = EquirectImage::from_fn(geom, |_, y| [geom.theta(y).cos().powi(2); 3]).unwrap();
        let a = project_sh(&img, 2, WeightingMode::SolidAngle);
        let b = project_sh(&img, 2, WeightingMode::PaperLiteral);
        assert!(a.max_abs_diff(&b).unwrap() > 1e-2);
    }

    #[test]
    fn reconstruct_zero_and_dc() {
        let geom = GridGeometry::new(32, 16).unwrap();
        let zero = reconstruct_sh(&ShCoeffs::zeros(2), geom, false);
        assert!(zero.pixels().iter().all(|p| *p == [0.0; 3]));
        let mut dc = ShCoeffs::zeros(2);
        for c in 0..3 {
            dc.set(c, 0, 0, 2.0 * PI.sqrt());
        }
        let one = reconstruct_sh(&dc, geom, false);
        for p in one.pixels() {
            for v in p {
                assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn clamp_flag_removes_negatives() {
        let geom = GridGeometry::new(32, 16).unwrap();
        let mut c = ShCoeffs::zeros(1);
        c.set(0, 1, 0, 1.0);
        assert!(!reconstruct_sh(&c, geom, false).is_nonnegative());
        assert!(reconstruct_sh(&c, geom, true).is_nonnegative());
    }

    #[test]
    fn projection_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let geom = GridGeometry::new(512, 256).unwrap();
        for _ in 0..3 {
            let c = random_coeffs(2, &mut rng);
            let back = project_sh(&reconstruct_sh(&c, geom, false), 2, WeightingMode::SolidAngle);
            assert!(back.max_abs_diff(&c).unwrap() < 1e-3);
        }
    }

    #[test]
    fn irradiance_of_uniform_is_pi() {
        let mut c = ShCoeffs::zeros(2);
        for ch in 0..3 {
            c.set(ch, 0, 0, 2.0 * PI.sqrt());
        }
        let irr = render_irradiance(&c);
        let geom = GridGeometry::new(16, 8).unwrap();
        for p in reconstruct_sh(&irr, geom, false).pixels() {
            for v in p {
                assert_abs_diff_eq!(*v, PI, epsilon = 1e-12);
            }
        }
        assert_eq!(render_irradiance(&ShCoeffs::zeros(2)), ShCoeffs::zeros(2));
    }

    #[test]
    fn irradiance_truncates_and_pads() {
        let mut c = ShCoeffs::zeros(4);
        c.set(1, 3, -2, 5.0);
        c.set(1, 1, 1, 3.0);
        let irr = render_irradiance(&c);
        assert_eq!(irr.order(), 2);
        assert_abs_diff_eq!(irr.get(1, 1, 1), 2.0 * PI, epsilon = 1e-12);
        assert_eq!(render_irradiance(&ShCoeffs::zeros(0)).order(), 2);
    }

    #[test]
    fn coeff_loss_examples() {
        let a = ShCoeffs::zeros(0);
        let mut b = a.clone();
        assert_eq!(sh_coeff_loss(&a, &b).unwrap().value, 0.0);
        b.set(1, 0, 0, 1.0);
        assert_abs_diff_eq!(sh_coeff_loss(&b, &a).unwrap().value, 1.0);
        let mut c = ShCoeffs::zeros(1);
        let d = c.clone();
        c.set(2, 1, -1, 3.0);
        let lg = sh_coeff_loss(&c, &d).unwrap();
        assert_abs_diff_eq!(lg.value, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lg.grad.get(2, 1, -1), 2.0, epsilon = 1e-12);
        assert!(sh_coeff_loss(&a, &d).is_err());
    }

    #[test]
    fn reconstruction_loss_depends_on_difference_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = GridGeometry::new(64, 32).unwrap();
        let p = random_coeffs(2, &mut rng);
        let g = random_coeffs(2, &mut rng);
        let delta = random_coeffs(2, &mut rng);
        let shift = |c: &ShCoeffs| c.zip_map(&delta, |a, b| a + b);
        let l1 = sh_reconstruction_loss(&p, &g, geom).unwrap().value;
        let l2 = sh_reconstruction_loss(&shift(&p), &shift(&g), geom).unwrap().value;
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12 * l1.max(1.0));
        assert_eq!(sh_reconstruction_loss(&p, &p, geom).unwrap().value, 0.0);
        assert_eq!(sh_rendering_loss(&p, &p, geom).unwrap().value, 0.0);
    }

    #[test]
    fn rendering_loss_is_reconstruction_loss_of_scaled_coeffs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = GridGeometry::new(64, 32).unwrap();
        let p = random_coeffs(2, &mut rng);
        let g = random_coeffs(2, &mut rng);
        let rd = sh_rendering_loss(&p, &g, geom).unwrap().value;
        let rc = sh_reconstruction_loss(&render_irradiance(&p), &render_irradiance(&g), geom)
            .unwrap()
            .value;
        assert_abs_diff_eq!(rd, rc, epsilon = 1e-12 * rc);
    }

    #[test]
    fn least_squares_recovers_band_limited_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geom = GridGeometry::new(256, 128).unwrap();
        let c = random_coeffs(4, &mut rng);
        let fit = fit_sh_least_squares(&reconstruct_sh(&c, geom, false), 4).unwrap();
        assert!(fit.max_abs_diff(&c).unwrap() < 1e-9);
    }

    /// Projection quadrature error shrinks as O(1/H²); at H = 2048 the two
    /// estimates agree to 1e-6.
    #[test]
    fn least_squares_matches_projection_on_fine_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let geom = GridGeometry::new(4096, 2048).unwrap();
        let c = random_coeffs(2, &mut rng);
        let img = reconstruct_sh(&c, geom, false);
        let fit = fit_sh_least_squares(&img, 2).unwrap();
        let proj = project_sh(&img, 2, WeightingMode::SolidAngle);
        assert!(fit.max_abs_diff(&proj).unwrap() < 1e-6);
    }

    #[test]
    fn least_squares_constant_is_dc_only() {
        let geom = GridGeometry::new(128, 64).unwrap();
        let fit = fit_sh_least_squares(&EquirectImage::constant(geom, [2.0, 1.0, 0.5]), 6).unwrap();
        assert_eq!(fit.param_count(), 147);
        for c in 0..3 {
            for i in 1..coeff_count(6) {
                assert!(fit.channel(c)[i].abs() < 1e-9);
            }
        }
        assert_abs_diff_eq!(fit.get(0, 0, 0), 4.0 * PI.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn least_squares_guards() {
        let geom = GridGeometry::new(4, 2).unwrap();
        let img = EquirectImage::constant(geom, [1.0; 3]);
        assert!(matches!(fit_sh_least_squares(&img, 6), Err(Error::Numerical(_))));
        assert!(fit_sh_least_squares(&img, 11).is_err());
    }

    #[test]
    fn residual_is_monotone_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let geom = GridGeometry::new(128, 64).unwrap();
        let mut pixels = vec![[0.0; 3]; geom.pixel_count()];
        for _ in 0..40 {
            let i = rng.random_range(0..pixels.len());
            pixels[i] = [rng.random_range(1.0..50.0); 3];
        }
        let img = EquirectImage::new(geom, pixels).unwrap();
        let res: Vec<f64> = [2, 4, 6]
            .iter()
            .map(|&k| weighted_residual(&img, &fit_sh_least_squares(&img, k).unwrap()))
            .collect();
        assert!(res[1] <= res[0] + 1e-12 && res[2] <= res[1] + 1e-12, "{res:?}");
    }

    #[test]
    fn projection_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let geom = GridGeometry::new(32, 16).unwrap();
        let mk = |rng: &mut ChaCha8Rng| {
            EquirectImage::from_fn(geom, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
        };
        let (x, y) = (mk(&mut rng), mk(&mut rng));
        let (a, b) = (1.7, -0.3);
        let comb = x.scaled(a).add(&y.scaled(b)).unwrap();
        let lhs = project_sh(&comb, 3, WeightingMode::SolidAngle);
        let px = project_sh(&x, 3, WeightingMode::SolidAngle);
        let py = project_sh(&y, 3, WeightingMode::SolidAngle);
        let rhs = px.scaled(a).zip_map(&py.scaled(b), |u, v| u + v);
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }
}
