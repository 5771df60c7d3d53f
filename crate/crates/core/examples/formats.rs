//! Radiance HDR, PFM and PNG preview I/O.
//!
//!     cargo run --example formats [image.hdr|image.pfm]

use lumiparam::io::{read_image, rgb_to_rgbe, rgbe_to_rgb, write_image, write_preview_png};
use lumiparam::{EquirectImage, GridGeometry};

fn main() -> lumiparam::Result<()> {
    for rgb in [[1.0, 0.0, 0.0], [0.1, 0.5, 3.0], [1e-8, 0.0, 0.0]] {
        let e = rgb_to_rgbe(rgb);
        println!("{rgb:?} -> {e:?} -> {:?}", rgbe_to_rgb(e));
    }

    let img = match std::env::args().nth(1) {
        Some(p) => read_image(p.as_ref())?,
        None => {
            let geom = GridGeometry::new(64, 32)?;
            EquirectImage::from_fn(geom, |x, y| [x as f64 / 8.0, y as f64 / 4.0, 0.5])?
        }
    };
    let dir = std::env::temp_dir();
    let hdr = dir.join("formats_demo.hdr");
    let pfm = dir.join("formats_demo.pfm");
    write_image(&hdr, &img)?;
    write_image(&pfm, &img)?;
    let a = read_image(&hdr)?;
    let b = read_image(&pfm)?;
    println!("{}x{} rms {:.4}", img.width(), img.height(), img.rms());
    println!("hdr rmse {:.2e}", lumiparam::eval::rmse(&a, &img)?);
    println!("pfm identical: {}", b.pixels() == img.pixels().iter().map(|p| p.map(|v| v as f32 as f64)).collect::<Vec<_>>().as_slice());
    std::fs::write(dir.join("formats_demo.png"), write_preview_png(&img, 1.0, 2.2)?)?;
    Ok(())
}
