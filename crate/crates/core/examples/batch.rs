//! Drive the command-line front end in-process: decompose a folder of
//! panoramas, then evaluate one result.
//!
//!     cargo run --release --example batch

use lumiparam::io::write_image;
use lumiparam::{EquirectImage, GridGeometry};

fn main() -> lumiparam::Result<()> {
    let root = std::env::temp_dir().join("lumiparam_batch");
    let inputs = root.join("inputs");
    std::fs::create_dir_all(&inputs)?;
    let geom = GridGeometry::new(128, 64)?;
    for i in 0..3 {
        let img = EquirectImage::from_fn(geom, |x, y| {
            let spot = if (x + 40 * i) % 128 < 4 && y < 20 { 50.0 } else { 0.0 };
            [0.2 + spot, 0.25, 0.3 + 0.004 * y as f64]
        })?;
        write_image(&inputs.join(format!("scene{i}.hdr")), &img)?;
    }
    let out = root.join("params");
    let s = |p: &std::path::Path| p.to_string_lossy().into_owned();
    let code = lumiparam::cli::run(["lumiparam", "--jobs", "2", "decompose", &s(&inputs), "-o", &s(&out), "--sparsify"]);
    println!("decompose exit code {code}");
    let code = lumiparam::cli::run([
        "lumiparam",
        "eval",
        &s(&out.join("scene0.mixlight.json")),
        &s(&inputs.join("scene0.hdr")),
        "-o",
        &s(&root.join("report.json")),
    ]);
    println!("eval exit code {code}");
    Ok(())
}
