//! Light-source side of the codec: brightness-ranked separation, the
//! anchor-binned spherical-Gaussian parameters `(P, E, R, s)`, normalised
//! Gaussian-map reconstruction and the losses defined on those parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::EquirectImage;
use crate::sphere::{geodesic_dist, vogel_anchors, AnchorSet, GridGeometry, SphereDir, WeightingMode};

/// Default share of pixels classified as light sources.
pub const DEFAULT_PERCENTILE: f64 = 0.05;
/// Kernel sharpness used for light sources.
pub const SHARP_ANGULAR_SIZE: f64 = 0.0025;
/// Kernel sharpness of the 9-kernel ambient preset.
pub const SMOOTH_ANGULAR_SIZE: f64 = 0.2423;

/// Kernel values below `e^-KERNEL_CUTOFF` of the peak are skipped.
const KERNEL_CUTOFF: f64 = 40.0;

/// Per-pixel light-source classification.
#[derive(Debug, Clone, PartialEq)]
pub struct LightMask {
    geom: GridGeometry,
    bits: Vec<bool>,
}

impl LightMask {
    pub fn geom(&self) -> GridGeometry {
        self.geom
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_source(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.geom.width() + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Result of [`separate`]: `sources + ambient` reproduces the input exactly.
#[derive(Debug, Clone)]
pub struct Separation {
    pub sources: EquirectImage,
    pub ambient: EquirectImage,
    pub mask: LightMask,
}

/// Channel-mean brightness.
#[inline]
pub fn brightness(p: &[f64; 3]) -> f64 {
    (p[0] + p[1] + p[2]) / 3.0
}

/// Number of source pixels for `percentile` of `count` pixels, `ceil(p·n)`.
pub fn source_pixel_count(percentile: f64, count: usize) -> usize {
    // absorb representation error such as 0.07 * 100 = 7.000000000000001
    let raw = percentile * count as f64;
    let k = (raw - raw * 1e-12).ceil();
    (k.max(0.0) as usize).min(count)
}

/// Marks the `ceil(percentile·W·H)` brightest pixels as light sources. Equal
/// brightness is broken by row-major index, lower first.
pub fn separate(img: &EquirectImage, percentile: f64) -> Result<Separation> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::invalid(format!(
            "percentile must lie in (0, 1), got {percentile}"
        )));
    }
    let px = img.pixels();
    let count = source_pixel_count(percentile, px.len());
    let mut order: Vec<usize> = (0..px.len()).collect();
    order.sort_by(|&a, &b| {
        brightness(&px[b])
            .total_cmp(&brightness(&px[a]))
            .then(a.cmp(&b))
    });
    let mut bits = vec![false; px.len()];
    for &i in &order[..count] {
        bits[i] = true;
    }
    let mut src = vec![[0.0; 3]; px.len()];
    let mut amb = vec![[0.0; 3]; px.len()];
    for (i, p) in px.iter().enumerate() {
        if bits[i] {
            src[i] = *p;
        } else {
            amb[i] = *p;
        }
    }
    let geom = img.geom();
    Ok(Separation {
        sources: EquirectImage::new(geom, src)?,
        ambient: EquirectImage::new(geom, amb)?,
        mask: LightMask { geom, bits },
    })
}

/// Light-source parameters: distribution `p` over anchors, total intensity
/// `e`, unit-norm colour ratios `r` and kernel sharpness `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgParams {
    pub p: Vec<f64>,
    pub e: f64,
    pub r: [f64; 3],
    pub s: f64,
}

impl SgParams {
    /// All-dark parameters over `n` anchors.
    pub fn zero(n: usize, s: f64) -> Self {
        SgParams {
            p: vec![0.0; n],
            e: 0.0,
            r: [0.0; 3],
            s,
        }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// `E = 0`: no light-source energy, `P` and `R` are zero.
    pub fn is_degenerate(&self) -> bool {
        self.e == 0.0
    }

    /// Checks sum-to-one `P`, unit `R`, positive `s` (relaxed when `E = 0`).
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::invalid(format!("angular size must be positive, got {}", self.s)));
        }
        if !(self.e >= 0.0 && self.e.is_finite()) {
            return Err(Error::invalid(format!("intensity must be >= 0, got {}", self.e)));
        }
        if self.p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("distribution entries must be finite and >= 0"));
        }
        if self.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("colour ratios must be finite"));
        }
        if self.e > 0.0 {
            let sum: f64 = self.p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("distribution sums to {sum}, expected 1")));
            }
            let norm = self.r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("colour ratios have norm {norm}, expected 1")));
            }
        }
        Ok(())
    }

    /// RGB amplitude of anchor `i`, `P_i E R`.
    pub fn amplitude(&self, i: usize) -> [f64; 3] {
        let a = self.p[i] * self.e;
        self.r.map(|c| a * c)
    }
}

fn pixel_weight(geom: GridGeometry, y: usize, mode: WeightingMode) -> f64 {
    match mode {
        WeightingMode::SolidAngle => geom.row_solid_angle(y),
        WeightingMode::PaperLiteral => 1.0,
    }
}

/// Bins the source image onto anchors.
///
/// `T_c` is the weighted channel sum, `E = ‖T‖₂`, `R = T / E`. Each pixel's
/// weighted brightness goes to its nearest anchor and the bins are
/// normalised into `P`. An all-zero source image yields
/// [`SgParams::zero`].
pub fn decompose_sg(
    sources: &EquirectImage,
    anchors: &AnchorSet,
    s: f64,
    mode: WeightingMode,
) -> Result<SgParams> {
    if anchors.is_empty() {
        return Err(Error::invalid("anchor set is empty"));
    }
    if !(s > 0.0) {
        return Err(Error::invalid(format!("angular size must be positive, got {s}")));
    }
    let geom = sources.geom();
    let w = geom.width();
    let mut t = [0.0; 3];
    let mut bins = vec![0.0; anchors.len()];
    for (y, row) in sources.pixels().chunks(w).enumerate() {
        let weight = pixel_weight(geom, y, mode);
        let mut row_t = [0.0; 3];
        for (x, p) in row.iter().enumerate() {
            if *p == [0.0; 3] {
                continue;
            }
            for c in 0..3 {
                row_t[c] += p[c];
            }
            let j = anchors.nearest(&geom.dir_unchecked(x, y));
            bins[j] += weight * brightness(p);
        }
        for c in 0..3 {
            t[c] += weight * row_t[c];
        }
    }
    let e = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
    let total: f64 = bins.iter().sum();
    if e == 0.0 || total <= 0.0 {
        return Ok(SgParams::zero(anchors.len(), s));
    }
    Ok(SgParams {
        p: bins.iter().map(|b| b / total).collect(),
        e,
        r: t.map(|v| v / e),
        s,
    })
}

/// Reciprocal of `∫ exp((d·u - 1)/s) dA` over a sphere of radius `r`:
/// `1 / (2π s r² (1 - e^(-2/s)))`.
pub fn normalization_q(s: f64, r: f64) -> Result<f64> {
    if !(s > 0.0 && r > 0.0) {
        return Err(Error::invalid(format!(
            "angular size and radius must be positive, got s = {s}, r = {r}"
        )));
    }
    Ok(1.0 / (2.0 * PI * s * r * r * (-(-2.0 / s).exp_m1())))
}

/// A set of kernels with fixed centres and per-kernel RGB amplitudes.
struct KernelField<'a> {
    dirs: &'a [SphereDir],
    amps: Vec<[f64; 3]>,
    s: f64,
}

impl KernelField<'_> {
    /// `Σ_i amp_i · q · exp((d_i·u - 1)/s)` on every pixel.
    fn render(&self, geom: GridGeometry) -> Vec<[f64; 3]> {
        let q = normalization_q(self.s, 1.0).expect("positive s");
        let active: Vec<(SphereDir, f64, [f64; 3])> = self
            .dirs
            .iter()
            .zip(&self.amps)
            .filter(|(_, a)| **a != [0.0; 3])
            .map(|(d, a)| (*d, d.theta(), a.map(|v| v * q)))
            .collect();
        // angular radius beyond which a kernel is below e^-KERNEL_CUTOFF
        let cos_cut = 1.0 - KERNEL_CUTOFF * self.s;
        let reach = if cos_cut <= -1.0 { PI } else { cos_cut.acos() };
        let cols: Vec<SphereDir> = (0..geom.width())
            .map(|x| geom.dir_unchecked(x, 0))
            .collect();
        let rows: Vec<Vec<[f64; 3]>> = (0..geom.height())
            .into_par_iter()
            .map(|y| {
                let theta = geom.theta(y);
                let (st, ct) = theta.sin_cos();
                let mut out = vec![[0.0; 3]; geom.width()];
                for (d, d_theta, amp) in &active {
                    if (theta - d_theta).abs() > reach {
                        continue;
                    }
                    for (x, px) in out.iter_mut().enumerate() {
                        // column azimuth from the precomputed top-row directions
                        let c = &cols[x];
                        let sp = (c.x * c.x + c.y * c.y).sqrt();
                        let (ux, uy) = (c.x / sp * st, c.y / sp * st);
                        let dot = d.x * ux + d.y * uy + d.z * ct;
                        let k = ((dot - 1.0) / self.s).exp();
                        for ch in 0..3 {
                            px[ch] += amp[ch] * k;
                        }
                    }
                }
                out
            })
            .collect();
        rows.into_iter().flatten().collect()
    }
}

/// Renders `Σ_i v_i · q · exp((d_i·u - 1)/s)` with `v_i = P_i E R`.
pub fn reconstruct_gaussian_map(
    params: &SgParams,
    anchors: &AnchorSet,
    geom: GridGeometry,
) -> Result<EquirectImage> {
    if params.n() != anchors.len() {
        return Err(Error::invalid(format!(
            "{} distribution entries for {} anchors",
            params.n(),
            anchors.len()
        )));
    }
    let field = KernelField {
        dirs: anchors.dirs(),
        amps: (0..params.n()).map(|i| params.amplitude(i)).collect(),
        s: params.s,
    };
    EquirectImage::new(geom, field.render(geom))
}

/// Renders a single unit-amplitude kernel centred on `dir`, all channels.
pub fn unit_kernel_map(dir: SphereDir, s: f64, geom: GridGeometry) -> Result<EquirectImage> {
    normalization_q(s, 1.0)?;
    let dirs = [dir];
    let field = KernelField {
        dirs: &dirs,
        amps: vec![[1.0; 3]],
        s,
    };
    EquirectImage::new(geom, field.render(geom))
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "distribution lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `‖M ⊙ (P̂ - P)‖₁` where `M` selects entries with zero ground truth, and its
/// subgradient (zero at the kink).
pub fn masked_l1(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(pred, gt)?;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            if g != 0.0 {
                return 0.0;
            }
            value += p.abs();
            if p > 0.0 {
                1.0
            } else if p < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((value, grad))
}

/// Squared-L2 losses on the three parameter groups with their gradients.
#[derive(Debug, Clone)]
pub struct SgL2Losses {
    pub loss_p: f64,
    pub loss_e: f64,
    pub loss_r: f64,
    pub grad_p: Vec<f64>,
    pub grad_e: f64,
    pub grad_r: [f64; 3],
}

pub fn sg_l2_losses(pred: &SgParams, gt: &SgParams) -> Result<SgL2Losses> {
    check_len(&pred.p, &gt.p)?;
    let dp: Vec<f64> = pred.p.iter().zip(&gt.p).map(|(a, b)| a - b).collect();
    let de = pred.e - gt.e;
    let dr = [pred.r[0] - gt.r[0], pred.r[1] - gt.r[1], pred.r[2] - gt.r[2]];
    Ok(SgL2Losses {
        loss_p: dp.iter().map(|d| d * d).sum(),
        loss_e: de * de,
        loss_r: dr.iter().map(|d| d * d).sum(),
        grad_p: dp.iter().map(|d| 2.0 * d).collect(),
        grad_e: 2.0 * de,
        grad_r: dr.map(|d| 2.0 * d),
    })
}

/// L1 marginal tolerance for [`sml_loss`]; tight enough that swapping the
/// arguments changes the cost by well under 1e-9.
pub const SINKHORN_TOL: f64 = 1e-10;
/// Iteration cap for [`sml_loss`].
pub const SINKHORN_MAX_ITER: usize = 20_000;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropy-regularised transport cost between two anchor distributions with
/// geodesic ground cost. Returns `⟨Π, C⟩` for the Sinkhorn plan `Π`.
///
/// Runs in the log domain so small `epsilon` does not underflow; anchors with
/// zero mass on either side are dropped, which leaves the plan unchanged.
pub fn sml_loss(pred: &[f64], gt: &[f64], anchors: &AnchorSet, epsilon: f64) -> Result<f64> {
    check_len(pred, gt)?;
    if pred.len() != anchors.len() {
        return Err(Error::invalid(format!(
            "{} distribution entries for {} anchors",
            pred.len(),
            anchors.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    for (name, dist) in [("prediction", pred), ("target", gt)] {
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "{name} is not a distribution (sum {sum})"
            )));
        }
    }
    let src: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] > 0.0).collect();
    let dst: Vec<usize> = (0..gt.len()).filter(|&j| gt[j] > 0.0).collect();
    let dirs = anchors.dirs();
    let cost: Vec<Vec<f64>> = src
        .iter()
        .map(|&i| dst.iter().map(|&j| geodesic_dist(&dirs[i], &dirs[j])).collect())
        .collect();
    let log_a: Vec<f64> = src.iter().map(|&i| pred[i].ln()).collect();
    let log_b: Vec<f64> = dst.iter().map(|&j| gt[j].ln()).collect();
    let mut f = vec![0.0; src.len()];
    let mut g = vec![0.0; dst.len()];

    // Anneal from a blurry plan down to `epsilon`, warm-starting the
    // potentials; the final stage alone runs to the tight tolerance.
    let max_cost = cost.iter().flatten().fold(0.0f64, |m, &c| m.max(c));
    let mut eps = epsilon.max(max_cost);
    loop {
        let last = eps <= epsilon;
        let tol = if last { SINKHORN_TOL } else { 1e-3 };
        let residual = sinkhorn_stage(&mut f, &mut g, &cost, &log_a, &log_b, eps, tol);
        if last {
            if residual > SINKHORN_TOL {
                return Err(Error::NotConverged {
                    iterations: SINKHORN_MAX_ITER,
                    residual,
                });
            }
            let mut total = 0.0;
            for (i, fi) in f.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let c = cost[i][j];
                    total += ((fi + gj - c) / eps).exp() * c;
                }
            }
            return Ok(total);
        }
        eps = (eps * 0.5).max(epsilon);
    }
}

/// Log-domain Sinkhorn sweeps at one `eps` until the row marginals are
/// within `tol` (L1) or the iteration cap is hit. Returns the residual.
fn sinkhorn_stage(
    f: &mut [f64],
    g: &mut [f64],
    cost: &[Vec<f64>],
    log_a: &[f64],
    log_b: &[f64],
    eps: f64,
    tol: f64,
) -> f64 {
    let mut residual = f64::INFINITY;
    for _ in 0..SINKHORN_MAX_ITER {
        for (i, fi) in f.iter_mut().enumerate() {
            let lse = log_sum_exp(g.iter().zip(&cost[i]).map(|(gj, c)| (gj - c) / eps));
            *fi = eps * (log_a[i] - lse);
        }
        for (j, gj) in g.iter_mut().enumerate() {
            let lse = log_sum_exp(f.iter().zip(cost).map(|(fi, row)| (fi - row[j]) / eps));
            *gj = eps * (log_b[j] - lse);
        }
        // columns are exact after the g update; measure the row marginals
        residual = f
            .iter()
            .zip(log_a)
            .zip(cost)
            .map(|((fi, la), row)| {
                let mass: f64 = g.iter().zip(row).map(|(gj, c)| ((fi + gj - c) / eps).exp()).sum();
                (mass - la.exp()).abs()
            })
            .sum();
        if residual <= tol {
            break;
        }
    }
    residual
}

/// Fixed-kernel presets: a smooth one sized for ambient light and a sharp
/// one for light sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SgPreset {
    /// 9 kernels, `s = 0.2423`.
    Smooth,
    /// 128 kernels, `s = 0.0025`.
    Sharp,
}

impl SgPreset {
    pub fn kernel_count(&self) -> usize {
        match self {
            SgPreset::Smooth => 9,
            SgPreset::Sharp => 128,
        }
    }

    pub fn angular_size(&self) -> f64 {
        match self {
            SgPreset::Smooth => SMOOTH_ANGULAR_SIZE,
            SgPreset::Sharp => SHARP_ANGULAR_SIZE,
        }
    }

    pub fn anchors(&self) -> AnchorSet {
        vogel_anchors(self.kernel_count(), 0).expect("preset kernel count is positive")
    }
}

/// Least-squares kernel amplitudes for a fixed kernel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SgFit {
    pub anchors: AnchorSet,
    pub s: f64,
    pub amplitudes: Vec<[f64; 3]>,
}

impl SgFit {
    pub fn param_count(&self) -> usize {
        3 * self.amplitudes.len()
    }

    pub fn render(&self, geom: GridGeometry) -> EquirectImage {
        let field = KernelField {
            dirs: self.anchors.dirs(),
            amps: self.amplitudes.clone(),
            s: self.s,
        };
        EquirectImage::new(geom, field.render(geom)).expect("finite amplitudes")
    }
}

/// Solid-angle-weighted least-squares amplitudes of normalised kernels at
/// `anchors` with sharpness `s`.
pub fn fit_sg_least_squares(img: &EquirectImage, anchors: &AnchorSet, s: f64) -> Result<SgFit> {
    let q = normalization_q(s, 1.0)?;
    let geom = img.geom();
    let n = anchors.len();
    let w = geom.width();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = [DVector::<f64>::zeros(n), DVector::<f64>::zeros(n), DVector::<f64>::zeros(n)];
    let mut k = vec![0.0; n];
    for (y, row) in img.pixels().chunks(w).enumerate() {
        let omega = geom.row_solid_angle(y);
        for (x, p) in row.iter().enumerate() {
            let u = geom.dir_unchecked(x, y);
            for (ki, d) in k.iter_mut().zip(anchors.dirs()) {
                *ki = q * ((d.dot(&u) - 1.0) / s).exp();
            }
            for i in 0..n {
                if k[i] == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    gram[(i, j)] += omega * k[i] * k[j];
                }
                for c in 0..3 {
                    rhs[c][i] += omega * k[i] * p[c];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("kernel Gram matrix is singular".into()))?;
    let sol: Vec<DVector<f64>> = rhs.iter().map(|b| chol.solve(b)).collect();
    Ok(SgFit {
        anchors: anchors.clone(),
        s,
        amplitudes: (0..n).map(|i| [sol[0][i], sol[1][i], sol[2][i]]).collect(),
    })
}

/// Fits one of the fixed presets.
pub fn fit_preset_sg(img: &EquirectImage, preset: SgPreset) -> Result<SgFit> {
    fit_sg_least_squares(img, &preset.anchors(), preset.angular_size())
}

/// Fits the 9-kernel smooth preset, 27 parameters.
pub fn fit_smooth_sg(ambient: &EquirectImage) -> Result<SgFit> {
    fit_preset_sg(ambient, SgPreset::Smooth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h).unwrap()
    }

    #[test]
    fn separate_picks_bright_pixels() {
        let g = geom(10, 10);
        let bright = [3usize, 17, 42, 77, 99];
        let img = EquirectImage::from_fn(g, |x, y| {
            if bright.contains(&(y * 10 + x)) {
                [10.0; 3]
            } else {
                [1.0; 3]
            }
        })
        .unwrap();
        let sep = separate(&img, 0.05).unwrap();
        assert_eq!(sep.mask.count(), 5);
        for i in 0..100 {
            assert_eq!(sep.mask.bits()[i], bright.contains(&i));
        }
        assert_eq!(sep.sources.add(&sep.ambient).unwrap(), img);
    }

    #[test]
    fn separate_constant_uses_row_major_tie_break() {
        let g = geom(16, 8);
        let img = EquirectImage::constant(g, [2.0; 3]);
        let sep = separate(&img, 0.05).unwrap();
        let k = (0.05f64 * 128.0).ceil() as usize;
        assert_eq!(k, 7);
        for (i, b) in sep.mask.bits().iter().enumerate() {
            assert_eq!(*b, i < k);
        }
    }

    #[test]
    fn separate_rejects_bad_percentile() {
        let img = EquirectImage::zeros(geom(4, 2));
        assert!(separate(&img, 0.0).is_err());
        assert!(separate(&img, 1.0).is_err());
    }

    #[test]
    fn pixel_count_is_exact_ceiling() {
        assert_eq!(source_pixel_count(0.05, 100), 5);
        assert_eq!(source_pixel_count(0.07, 100), 7);
        assert_eq!(source_pixel_count(0.05, 128 * 256), 1639);
        assert_eq!(source_pixel_count(0.05, 101), 6);
    }

    #[test]
    fn single_pixel_on_anchor() {
        let g = geom(32, 16);
        let (px, py) = (5, 3);
        let at = g.dir_from_pixel(px, py).unwrap();
        let mut dirs = vogel_anchors(16, 0).unwrap().dirs().to_vec();
        dirs[7] = at;
        let anchors = AnchorSet::from_dirs(dirs, 2).unwrap();
        let img = EquirectImage::from_fn(g, |x, y| if (x, y) == (px, py) { [1.0; 3] } else { [0.0; 3] }).unwrap();
        let sg = decompose_sg(&img, &anchors, 0.0025, WeightingMode::SolidAngle).unwrap();
        let omega = g.solid_angle(py).unwrap();
        assert_abs_diff_eq!(sg.e, 3f64.sqrt() * omega, epsilon = 1e-15);
        for c in 0..3 {
            assert_abs_diff_eq!(sg.r[c], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        }
        for (i, p) in sg.p.iter().enumerate() {
            assert_eq!(*p, if i == 7 { 1.0 } else { 0.0 });
        }
        sg.validate().unwrap();
    }

    #[test]
    fn zero_sources_are_degenerate() {
        let anchors = vogel_anchors(8, 2).unwrap();
        let sg = decompose_sg(&EquirectImage::zeros(geom(8, 4)), &anchors, 0.0025, WeightingMode::SolidAngle).unwrap();
        assert!(sg.is_degenerate());
        assert!(sg.p.iter().all(|&v| v == 0.0));
        assert_eq!(sg.r, [0.0; 3]);
        sg.validate().unwrap();
    }

    #[test]
    fn decomposition_is_homogeneous() {
        let g = geom(64, 32);
        let anchors = vogel_anchors(32, 4).unwrap();
        let img = EquirectImage::from_fn(g, |x, y| {
            if (x * 7 + y * 3) % 11 == 0 {
                [x as f64, y as f64 + 1.0, 2.0]
            } else {
                [0.0; 3]
            }
        })
        .unwrap();
        for mode in [WeightingMode::SolidAngle, WeightingMode::PaperLiteral] {
            let a = decompose_sg(&img, &anchors, 0.0025, mode).unwrap();
            let b = decompose_sg(&img.scaled(2.0), &anchors, 0.0025, mode).unwrap();
            assert_abs_diff_eq!(b.e, 2.0 * a.e, epsilon = 1e-12 * a.e);
            for c in 0..3 {
                assert_abs_diff_eq!(a.r[c], b.r[c], epsilon = 1e-12);
            }
            for (p, q) in a.p.iter().zip(&b.p) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn q_closed_form() {
        assert_abs_diff_eq!(normalization_q(0.0025, 1.0).unwrap(), 63.661_977_2, epsilon = 1e-6);
        assert_abs_diff_eq!(normalization_q(0.2423, 1.0).unwrap(), 0.657_021_7, epsilon = 1e-6);
        let q1 = normalization_q(0.1, 1.0).unwrap();
        assert_eq!(normalization_q(0.1, 2.0).unwrap(), q1 / 4.0);
        assert!(normalization_q(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_distribution_renders_black() {
        let anchors = vogel_anchors(16, 2).unwrap();
        let img = reconstruct_gaussian_map(&SgParams::zero(16, 0.0025), &anchors, geom(32, 16)).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
        assert!(reconstruct_gaussian_map(&SgParams::zero(8, 0.0025), &anchors, geom(32, 16)).is_err());
    }

    #[test]
    fn masked_l1_examples() {
        assert_abs_diff_eq!(masked_l1(&[0.2, 0.8], &[0.0, 1.0]).unwrap().0, 0.2, epsilon = 1e-15);
        assert_eq!(masked_l1(&[0.3, 0.7], &[0.3, 0.7]).unwrap().0, 0.0);
        let (v, g) = masked_l1(&[0.1, 0.2, 0.7], &[0.0, 0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(v, 0.1, epsilon = 1e-15);
        assert_eq!(g, vec![1.0, 0.0, 0.0]);
        assert_eq!(masked_l1(&[0.0, 1.0], &[0.0, 1.0]).unwrap().1, vec![0.0, 0.0]);
        assert!(masked_l1(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn l2_examples() {
        let a = SgParams { p: vec![1.0, 0.0], e: 3.0, r: [1.0, 0.0, 0.0], s: 0.0025 };
        let same = sg_l2_losses(&a, &a).unwrap();
        assert_eq!((same.loss_p, same.loss_e, same.loss_r), (0.0, 0.0, 0.0));
        let b = SgParams { p: vec![0.0, 1.0], e: 5.0, ..a.clone() };
        let l = sg_l2_losses(&a, &b).unwrap();
        assert_eq!(l.loss_p, 2.0);
        assert_eq!(l.loss_e, 4.0);
        assert_eq!(l.grad_e, -4.0);
        assert!(sg_l2_losses(&a, &SgParams::zero(3, 0.1)).is_err());
    }

    #[test]
    fn sml_identity_and_point_masses() {
        let anchors = vogel_anchors(16, 3).unwrap();
        let p: Vec<f64> = (1..=16).map(|i| i as f64 / 136.0).collect();
        assert!(sml_loss(&p, &p, &anchors, 1e-2).unwrap() <= 1e-3);

        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        a[2] = 1.0;
        b[11] = 1.0;
        let d = geodesic_dist(&anchors.dirs()[2], &anchors.dirs()[11]);
        let cost = sml_loss(&a, &b, &anchors, 1e-3).unwrap();
        assert!((cost - d).abs() <= 0.05 * d);
    }

    #[test]
    fn sml_symmetry_and_validation() {
        let anchors = vogel_anchors(16, 3).unwrap();
        let p: Vec<f64> = (0..16).map(|i| if i < 4 { 0.25 } else { 0.0 }).collect();
        let q: Vec<f64> = (0..16).map(|i| (i + 1) as f64 / 136.0).collect();
        let pq = sml_loss(&p, &q, &anchors, 0.05).unwrap();
        let qp = sml_loss(&q, &p, &anchors, 0.05).unwrap();
        assert!((pq - qp).abs() <= 1e-9, "{pq} vs {qp}");
        assert!(pq >= 0.0);
        assert!(sml_loss(&[0.5; 16], &q, &anchors, 0.05).is_err());
        assert!(sml_loss(&q, &q, &anchors, 0.0).is_err());
    }

    #[test]
    fn preset_shapes() {
        assert_eq!(SgPreset::Smooth.kernel_count() * 3, 27);
        assert_eq!(SgPreset::Sharp.kernel_count() + 1 + 3, 132);
    }

    #[test]
    fn smooth_fit_of_zero_is_zero() {
        let fit = fit_smooth_sg(&EquirectImage::zeros(geom(64, 32))).unwrap();
        assert_eq!(fit.param_count(), 27);
        assert!(fit.amplitudes.iter().all(|a| a.iter().all(|v| v.abs() < 1e-12)));
    }
}
