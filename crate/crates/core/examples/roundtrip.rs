//! Decompose a synthetic panorama, save the parameters, rebuild the map
//! and print how close it came.
//!
//!     cargo run --release --example roundtrip [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use lumiparam::codec::{decompose, CodecConfig};
use lumiparam::eval::{roundtrip_report, EvalOptions};
use lumiparam::io::{write_image, write_preview_png};
use lumiparam::params::{Meta, ParamFile};
use lumiparam::{EquirectImage, GridGeometry, SphereDir};

fn main() -> lumiparam::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;

    // Sky gradient with a small, very bright sun.
    let geom = GridGeometry::new(256, 128)?;
    let sun = SphereDir::from_angles(0.6, 1.2);
    let pano = EquirectImage::from_fn(geom, |x, y| {
        let d = geom.dir_from_pixel(x, y).unwrap();
        let sky = 0.3 + 0.5 * d.z.max(0.0);
        let glow = 2000.0 * ((d.dot(&sun) - 1.0) / 0.0004).exp();
        [sky * 0.8 + glow, sky * 0.9 + glow * 0.95, sky * 1.2 + glow * 0.8]
    })?;

    let config = CodecConfig { sparsify: true, ..Default::default() };
    let d = decompose(&pano, &config)?;
    println!(
        "{} parameters: {} SH, {} anchors, E = {:.3}, R = {:.3?}",
        d.params.param_count(),
        d.params.sh.param_count(),
        d.params.sg.n(),
        d.params.sg.e,
        d.params.sg.r
    );
    let top = d.params.sg.p.iter().cloned().fold(0.0, f64::max);
    println!("largest anchor share {top:.3}, sun solid angle ~ {:.1e} sr", PI * 0.0004);

    let mut meta = Meta::from_config(&config);
    meta.width = Some(geom.width());
    meta.height = Some(geom.height());
    if let Some(c) = &d.credibility {
        meta.record_sparsify(c);
    }
    let file = ParamFile::from_params(&d.params, meta);
    file.write(&out.join("sky.mixlight.json"))?;

    let back = ParamFile::read(&out.join("sky.mixlight.json"))?.to_params()?;
    let recon = back.reconstruct(geom, true)?;
    write_image(&out.join("sky_recon.hdr"), &recon)?;
    std::fs::write(out.join("sky_recon.png"), write_preview_png(&recon, 1.0, 2.2)?)?;

    let report = roundtrip_report(&pano, &config, &EvalOptions::default())?;
    print!("{}", report.to_text());
    println!("wrote {}", out.display());
    Ok(())
}
