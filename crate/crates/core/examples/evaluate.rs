//! Metrics and sphere renders for a prediction against a reference map.
//!
//!     cargo run --release --example evaluate

use lumiparam::codec::CodecConfig;
use lumiparam::eval::{evaluate, rmse, si_rmse, sphere_previews, EvalOptions};
use lumiparam::io::encode_png;
use lumiparam::params::report_to_json;
use lumiparam::{EquirectImage, GridGeometry};

fn main() -> lumiparam::Result<()> {
    let geom = GridGeometry::new(128, 64)?;
    let gt = EquirectImage::from_fn(geom, |x, y| {
        let d = geom.dir_from_pixel(x, y).unwrap();
        let lamp = if d.z > 0.9 { 20.0 } else { 0.0 };
        [0.4 + lamp, 0.35 + lamp, 0.3 + 0.1 * d.x + lamp]
    })?;
    // Right shape, wrong exposure.
    let pred = gt.scaled(0.5);
    println!("rmse {:.4}, si-rmse {:.2e}", rmse(&pred, &gt)?, si_rmse(&pred, &gt)?.value);

    let opts = EvalOptions { render_size: 96, ..Default::default() };
    let report = evaluate(&pred, None, &gt, &CodecConfig::default(), &opts)?;
    print!("{}", report.to_text());
    print!("{}", report_to_json(&report)?);

    let dir = std::env::temp_dir();
    let (diffuse, mirror) = sphere_previews(&gt, &opts);
    for (name, r) in [("diffuse", diffuse), ("mirror", mirror)] {
        let path = dir.join(format!("gt_{name}.png"));
        std::fs::write(&path, encode_png(r.size, r.size, &r.pixels, 1.0, 2.2)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
