//! Project a panorama onto spherical harmonics and shade a diffuse sphere
//! from the order-2 irradiance.
//!
//!     cargo run --release --example sh_irradiance

use lumiparam::eval::{irradiance_quadrature, render_diffuse_sphere, Environment, SphereCamera};
use lumiparam::io::encode_png;
use lumiparam::sh::{fit_sh_least_squares, irradiance_at, project_sh, reconstruct_sh, render_irradiance, weighted_residual};
use lumiparam::{EquirectImage, GridGeometry, SphereDir, WeightingMode};

fn main() -> lumiparam::Result<()> {
    let geom = GridGeometry::new(256, 128)?;
    // Warm light from +X, cool fill from below.
    let env = EquirectImage::from_fn(geom, |x, y| {
        let d = geom.dir_from_pixel(x, y).unwrap();
        let warm = d.x.max(0.0).powi(4) * 6.0;
        let cool = (-d.z).max(0.0) * 0.5;
        [0.1 + warm, 0.1 + 0.7 * warm + 0.3 * cool, 0.1 + 0.3 * warm + cool]
    })?;

    for order in [1, 2, 4, 6] {
        let sh = fit_sh_least_squares(&env, order)?;
        println!("order {order}: {:>3} values, weighted residual {:.4}", sh.param_count(), weighted_residual(&env, &sh));
    }

    let sh = project_sh(&env, 2, WeightingMode::SolidAngle);
    let irr = render_irradiance(&sh);
    for n in [SphereDir::new(1.0, 0.0, 0.0)?, SphereDir::UP, SphereDir::new(0.0, 0.0, -1.0)?] {
        let fast = irradiance_at(&irr, &n);
        let slow = irradiance_quadrature(&env, &n);
        println!("n = {:?}: SH {:.4?}  quadrature {:.4?}", n.to_array(), fast, slow);
    }

    let ambient = reconstruct_sh(&sh, geom, true);
    println!("ambient integral {:.4?} vs input {:.4?}", ambient.integrate(), env.integrate());

    let sphere = render_diffuse_sphere(Environment::Sh(&sh), 128, &SphereCamera::default());
    let path = std::env::temp_dir().join("diffuse_sphere.png");
    std::fs::write(&path, encode_png(sphere.size, sphere.size, &sphere.pixels, 4.0, 2.2)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
