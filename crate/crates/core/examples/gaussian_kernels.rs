//! Spherical Gaussian kernels: normalisation, energy bookkeeping and the
//! smooth/sharp presets.
//!
//!     cargo run --release --example gaussian_kernels

use lumiparam::sg::{fit_preset_sg, normalization_q, reconstruct_gaussian_map, unit_kernel_map, SgParams, SgPreset};
use lumiparam::sphere::vogel_anchors;
use lumiparam::{EquirectImage, GridGeometry, SphereDir};

fn main() -> lumiparam::Result<()> {
    let geom = GridGeometry::new(1024, 512)?;
    let dir = SphereDir::from_angles(1.0, 0.5);
    for s in [0.0025, 0.025, 0.2423] {
        let integral = unit_kernel_map(dir, s, geom)?.integrate()[0];
        println!("s = {s:<6}  q = {:>10.4}  integral = {integral:.6}", normalization_q(s, 1.0)?);
    }

    let anchors = vogel_anchors(128, 6)?;
    let mut p = vec![0.0; 128];
    p[5] = 0.7;
    p[40] = 0.3;
    let r = [0.8, 0.5, 0.33];
    let n: f64 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let sg = SgParams { p, e: 50.0, r: r.map(|v| v / n.sqrt()), s: 0.0025 };
    let map = reconstruct_gaussian_map(&sg, &anchors, geom)?;
    let want: Vec<f64> = sg.r.iter().map(|c| sg.e * c).collect();
    println!("map integral {:.4?}, E*R {:.4?}", map.integrate(), want);

    let small = GridGeometry::new(128, 64)?;
    let ambient = EquirectImage::from_fn(small, |x, y| {
        let d = small.dir_from_pixel(x, y).unwrap();
        [1.0 + d.z, 1.0 + 0.5 * d.x, 1.0]
    })?;
    for preset in [SgPreset::Smooth, SgPreset::Sharp] {
        let fit = fit_preset_sg(&ambient, preset)?;
        let err = lumiparam::eval::rmse(&fit.render(small), &ambient)?;
        println!("{preset:?}: {} kernels, {} values, rmse {err:.4}", preset.kernel_count(), fit.param_count());
    }
    Ok(())
}
