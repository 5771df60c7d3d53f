//! Fidelity metrics, diagnostic sphere renders and the round-trip report.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decompose, CodecConfig, MixLightParams};
use crate::error::{Error, Result};
use crate::image::EquirectImage;
use crate::sg::{masked_l1, sg_l2_losses, sml_loss};
use crate::sh::{
    irradiance_at, project_sh, render_irradiance, sh_coeff_loss, sh_reconstruction_loss,
    sh_rendering_loss, ShCoeffs,
};
use crate::sphere::{SphereDir, WeightingMode};

fn check_same_len(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} pixels",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Root mean squared difference over all pixels and channels.
pub fn rmse_pixels(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    check_same_len(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    Ok((sum / (3 * a.len()) as f64).sqrt())
}

pub fn rmse(a: &EquirectImage, b: &EquirectImage) -> Result<f64> {
    a.same_grid(b)?;
    rmse_pixels(a.pixels(), b.pixels())
}

/// Scale-invariant RMSE and the global scale that achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleInvariantError {
    pub value: f64,
    pub scale: f64,
    /// The prediction was all zero; `value` is then `rmse(0, gt)`.
    pub degenerate: bool,
}

/// `min_α rmse(α·pred, gt)` with `α = ⟨pred, gt⟩ / ⟨pred, pred⟩`.
pub fn si_rmse_pixels(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<ScaleInvariantError> {
    check_same_len(pred, gt)?;
    let mut pp = 0.0;
    let mut pg = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for c in 0..3 {
            pp += p[c] * p[c];
            pg += p[c] * g[c];
        }
    }
    if pp == 0.0 {
        let zeros = vec![[0.0; 3]; gt.len()];
        return Ok(ScaleInvariantError {
            value: rmse_pixels(&zeros, gt)?,
            scale: 0.0,
            degenerate: true,
        });
    }
    let scale = pg / pp;
    let scaled: Vec<[f64; 3]> = pred.iter().map(|p| p.map(|v| v * scale)).collect();
    Ok(ScaleInvariantError {
        value: rmse_pixels(&scaled, gt)?,
        scale,
        degenerate: false,
    })
}

pub fn si_rmse(pred: &EquirectImage, gt: &EquirectImage) -> Result<ScaleInvariantError> {
    pred.same_grid(gt)?;
    si_rmse_pixels(pred.pixels(), gt.pixels())
}

/// Orthographic camera for sphere renders. `view` is the direction the
/// camera looks along; screen up follows +Z unless `view` is vertical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCamera {
    pub view: SphereDir,
}

impl Default for SphereCamera {
    fn default() -> Self {
        SphereCamera {
            view: SphereDir {
                x: 0.0,
                y: -1.0,
                z: 0.0,
            },
        }
    }
}

impl SphereCamera {
    fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let f = self.view.to_array();
        let hint = if f[2].abs() > 0.999 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
        let right = normalize(cross(f, hint));
        let up = cross(right, f);
        (f, right, up)
    }

    /// Surface normal seen through pixel `(i, j)` of an `size x size` view,
    /// or `None` outside the disk.
    pub fn normal(&self, size: usize, i: usize, j: usize) -> Option<SphereDir> {
        let sx = 2.0 * (i as f64 + 0.5) / size as f64 - 1.0;
        let sy = 1.0 - 2.0 * (j as f64 + 0.5) / size as f64;
        let r2 = sx * sx + sy * sy;
        if r2 > 1.0 {
            return None;
        }
        let (f, right, up) = self.basis();
        let depth = (1.0 - r2).sqrt();
        let n = [0, 1, 2].map(|k| sx * right[k] + sy * up[k] - depth * f[k]);
        SphereDir::new(n[0], n[1], n[2]).ok()
    }

    /// Mirror direction `2(n·v)n - v` with `v` pointing back at the camera.
    pub fn reflect(&self, n: &SphereDir) -> SphereDir {
        let v = SphereDir {
            x: -self.view.x,
            y: -self.view.y,
            z: -self.view.z,
        };
        let d = 2.0 * n.dot(&v);
        SphereDir {
            x: d * n.x - v.x,
            y: d * n.y - v.y,
            z: d * n.z - v.z,
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    a.map(|v| v / n)
}

/// A square render of a unit sphere; pixels outside the disk are black and
/// excluded from [`SphereRender::disk_pixels`].
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRender {
    pub size: usize,
    pub pixels: Vec<[f64; 3]>,
    pub inside: Vec<bool>,
}

impl SphereRender {
    fn render(size: usize, camera: &SphereCamera, shade: impl Fn(&SphereDir) -> [f64; 3] + Sync) -> Self {
        let rows: Vec<Vec<([f64; 3], bool)>> = (0..size)
            .into_par_iter()
            .map(|j| {
                (0..size)
                    .map(|i| match camera.normal(size, i, j) {
                        Some(n) => (shade(&n), true),
                        None => ([0.0; 3], false),
                    })
                    .collect()
            })
            .collect();
        let (pixels, inside) = rows.into_iter().flatten().unzip();
        SphereRender {
            size,
            pixels,
            inside,
        }
    }

    pub fn disk_pixels(&self) -> Vec<[f64; 3]> {
        self.pixels
            .iter()
            .zip(&self.inside)
            .filter(|(_, &inside)| inside)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Albedo of the diffuse sphere.
pub const DIFFUSE_ALBEDO: f64 = 0.5;

/// Where the diffuse sphere's irradiance comes from.
#[derive(Debug, Clone, Copy)]
pub enum Environment<'a> {
    /// Order-2 irradiance from SH radiance coefficients.
    Sh(&'a ShCoeffs),
    /// Brute-force solid-angle quadrature over every pixel of a map.
    Map(&'a EquirectImage),
}

/// Irradiance `∫ L(ω) max(0, n·ω) dω` by summing over every map pixel.
pub fn irradiance_quadrature(env: &EquirectImage, n: &SphereDir) -> [f64; 3] {
    let geom = env.geom();
    let w = geom.width();
    let mut total = [0.0; 3];
    for (y, row) in env.pixels().chunks(w).enumerate() {
        let omega = geom.row_solid_angle(y);
        let mut acc = [0.0; 3];
        for (x, p) in row.iter().enumerate() {
            let cos = geom.dir_unchecked(x, y).dot(n);
            if cos > 0.0 {
                for c in 0..3 {
                    acc[c] += p[c] * cos;
                }
            }
        }
        for c in 0..3 {
            total[c] += acc[c] * omega;
        }
    }
    total
}

/// Gray Lambertian sphere: `albedo / π · E(n)`.
pub fn render_diffuse_sphere(env: Environment<'_>, size: usize, camera: &SphereCamera) -> SphereRender {
    let k = DIFFUSE_ALBEDO / PI;
    match env {
        Environment::Sh(coeffs) => {
            let irr = render_irradiance(coeffs);
            SphereRender::render(size, camera, |n| irradiance_at(&irr, n).map(|v| v * k))
        }
        Environment::Map(map) => {
            SphereRender::render(size, camera, |n| irradiance_quadrature(map, n).map(|v| v * k))
        }
    }
}

/// Bilinear lookup with pixel centres at half-integer coordinates,
/// wrapping in azimuth and clamping at the poles.
pub fn sample_bilinear(env: &EquirectImage, d: &SphereDir) -> [f64; 3] {
    let (w, h) = (env.width(), env.height());
    let u = d.phi() / (2.0 * PI) * w as f64 - 0.5;
    let v = (d.theta() / PI * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
    let x0 = u.floor();
    let fx = u - x0;
    let x0 = (x0 as i64).rem_euclid(w as i64) as usize;
    let x1 = (x0 + 1) % w;
    let y0 = v.floor() as usize;
    let fy = v - y0 as f64;
    let y1 = (y0 + 1).min(h - 1);
    let mut out = [0.0; 3];
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    for (x, y, wt) in taps {
        if wt == 0.0 {
            continue;
        }
        let p = env.pixel(x, y);
        for c in 0..3 {
            out[c] += wt * p[c];
        }
    }
    out
}

/// Perfect mirror sphere reflecting the environment.
pub fn render_mirror_sphere(env: &EquirectImage, size: usize, camera: &SphereCamera) -> SphereRender {
    SphereRender::render(size, camera, |n| sample_bilinear(env, &camera.reflect(n)))
}

fn num(v: f64) -> String {
    if v == 0.0 || (1e-4..1e9).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Metric and loss values comparing a prediction with a ground-truth map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub rmse_full: f64,
    pub si_rmse_full: f64,
    /// `√(rmse_full · si_rmse_full)`.
    pub composite_full: f64,
    pub rmse_diffuse: f64,
    pub si_rmse_diffuse: f64,
    pub rmse_mirror: f64,
    pub si_rmse_mirror: f64,
    pub loss_sh_coeff: f64,
    pub loss_sh_reconstruction: f64,
    pub loss_sh_rendering: f64,
    pub loss_masked_l1: f64,
    pub loss_l2_p: f64,
    pub loss_l2_e: f64,
    pub loss_l2_r: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_sml: Option<f64>,
    /// The prediction map was all zero.
    pub degenerate_prediction: bool,
    /// The ground truth had no light-source energy.
    pub degenerate_sources: bool,
}

impl RoundTripReport {
    /// `(name, value)` pairs in a fixed order, for the text table.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("rmse_full", num(self.rmse_full)),
            ("si_rmse_full", num(self.si_rmse_full)),
            ("composite_full", num(self.composite_full)),
            ("rmse_diffuse", num(self.rmse_diffuse)),
            ("si_rmse_diffuse", num(self.si_rmse_diffuse)),
            ("rmse_mirror", num(self.rmse_mirror)),
            ("si_rmse_mirror", num(self.si_rmse_mirror)),
            ("loss_sh_coeff", num(self.loss_sh_coeff)),
            ("loss_sh_reconstruction", num(self.loss_sh_reconstruction)),
            ("loss_sh_rendering", num(self.loss_sh_rendering)),
            ("loss_masked_l1", num(self.loss_masked_l1)),
            ("loss_l2_p", num(self.loss_l2_p)),
            ("loss_l2_e", num(self.loss_l2_e)),
            ("loss_l2_r", num(self.loss_l2_r)),
        ];
        if let Some(v) = self.loss_sml {
            out.push(("loss_sml", num(v)));
        }
        out.push(("degenerate_prediction", self.degenerate_prediction.to_string()));
        out.push(("degenerate_sources", self.degenerate_sources.to_string()));
        out
    }

    /// Flat `key value` table, one entry per line.
    pub fn to_text(&self) -> String {
        let entries = self.entries();
        let width = entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        entries
            .iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }

    pub fn all_finite_nonnegative(&self) -> bool {
        let vals = [
            self.rmse_full,
            self.si_rmse_full,
            self.composite_full,
            self.rmse_diffuse,
            self.si_rmse_diffuse,
            self.rmse_mirror,
            self.si_rmse_mirror,
            self.loss_sh_coeff,
            self.loss_sh_reconstruction,
            self.loss_sh_rendering,
            self.loss_masked_l1,
            self.loss_l2_p,
            self.loss_l2_e,
            self.loss_l2_r,
            self.loss_sml.unwrap_or(0.0),
        ];
        vals.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Render and metric settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub render_size: usize,
    pub camera: SphereCamera,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            render_size: 64,
            camera: SphereCamera::default(),
        }
    }
}

/// Compares a predicted map (and, when given, the parameters it came from)
/// against a ground-truth map. Parameter losses use the decomposition of
/// `gt` under `config` as the target; without `pred_params` the prediction
/// map is decomposed too.
pub fn evaluate(
    pred: &EquirectImage,
    pred_params: Option<&MixLightParams>,
    gt: &EquirectImage,
    config: &CodecConfig,
    opts: &EvalOptions,
) -> Result<RoundTripReport> {
    pred.same_grid(gt)?;
    let geom = gt.geom();
    let full = si_rmse(pred, gt)?;
    let rmse_full = rmse(pred, gt)?;

    let diffuse = |img: &EquirectImage| {
        let sh = project_sh(img, 2, WeightingMode::SolidAngle);
        render_diffuse_sphere(Environment::Sh(&sh), opts.render_size, &opts.camera).disk_pixels()
    };
    let (dp, dg) = (diffuse(pred), diffuse(gt));
    let mirror = |img: &EquirectImage| render_mirror_sphere(img, opts.render_size, &opts.camera).disk_pixels();
    let (mp, mg) = (mirror(pred), mirror(gt));

    let target = decompose(gt, config)?.params;
    let owned;
    let predicted = match pred_params {
        Some(p) => p,
        None => {
            owned = decompose(pred, config)?.params;
            &owned
        }
    };
    if predicted.sh.order() != target.sh.order() {
        return Err(Error::validation(
            "/sh/order",
            format!(
                "prediction has order {}, evaluation config uses {}",
                predicted.sh.order(),
                target.sh.order()
            ),
        ));
    }
    let l2 = sg_l2_losses(&predicted.sg, &target.sg)?;
    let loss_sml = match config.sml_epsilon {
        Some(eps) if !predicted.sg.is_degenerate() && !target.sg.is_degenerate() => Some(sml_loss(
            &normalized(&predicted.sg.p),
            &target.sg.p,
            &target.anchors,
            eps,
        )?),
        _ => None,
    };
    let report = RoundTripReport {
        rmse_full,
        si_rmse_full: full.value,
        composite_full: (rmse_full * full.value).sqrt(),
        rmse_diffuse: rmse_pixels(&dp, &dg)?,
        si_rmse_diffuse: si_rmse_pixels(&dp, &dg)?.value,
        rmse_mirror: rmse_pixels(&mp, &mg)?,
        si_rmse_mirror: si_rmse_pixels(&mp, &mg)?.value,
        loss_sh_coeff: sh_coeff_loss(&predicted.sh, &target.sh)?.value,
        loss_sh_reconstruction: sh_reconstruction_loss(&predicted.sh, &target.sh, geom)?.value,
        loss_sh_rendering: sh_rendering_loss(&predicted.sh, &target.sh, geom)?.value,
        loss_masked_l1: masked_l1(&predicted.sg.p, &target.sg.p)?.0,
        loss_l2_p: l2.loss_p,
        loss_l2_e: l2.loss_e,
        loss_l2_r: l2.loss_r,
        loss_sml,
        degenerate_prediction: full.degenerate,
        degenerate_sources: target.sg.is_degenerate(),
    };
    Ok(report)
}

/// Sparsified distributions need not sum to one; transport compares shapes.
fn normalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|v| v / s).collect()
}

/// Decomposes `pano`, rebuilds it from the parameters and compares the two.
pub fn roundtrip_report(pano: &EquirectImage, config: &CodecConfig, opts: &EvalOptions) -> Result<RoundTripReport> {
    let decomposition = decompose(pano, config)?;
    let recon = decomposition.params.reconstruct(pano.geom(), true)?;
    evaluate(&recon, Some(&decomposition.params), pano, config, opts)
}

/// Renders both sphere materials of a map, for previews.
pub fn sphere_previews(env: &EquirectImage, opts: &EvalOptions) -> (SphereRender, SphereRender) {
    let sh = project_sh(env, 2, WeightingMode::SolidAngle);
    (
        render_diffuse_sphere(Environment::Sh(&sh), opts.render_size, &opts.camera),
        render_mirror_sphere(env, opts.render_size, &opts.camera),
    )
}
