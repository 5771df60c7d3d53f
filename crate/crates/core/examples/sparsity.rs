//! Sparsemax on scores and the neighbourhood-aware variant on anchor
//! distributions.
//!
//!     cargo run --example sparsity

use std::f64::consts::PI;

use lumiparam::sparsity::{credibility, slsparsemax, sparsemax};
use lumiparam::sphere::vogel_anchors;
use lumiparam::{AnchorSet, SphereDir};

fn main() -> lumiparam::Result<()> {
    for z in [vec![1.5, 0.3, 0.2], vec![0.6, 0.4, 0.0], vec![2.0, 1.9, -1.0, 0.5]] {
        println!("sparsemax({z:?}) = {:?}", sparsemax(&z)?);
    }

    // Six anchors around the equator, each linked to its two neighbours.
    let ring: Vec<SphereDir> = (0..6).map(|i| SphereDir::from_angles(PI / 2.0, PI * i as f64 / 3.0)).collect();
    let anchors = AnchorSet::from_dirs(ring, 2)?;
    let p = [0.02, 0.2, 0.02, 0.3, 0.2, 0.26];
    let report = credibility(&p, &anchors)?;
    println!("credibility order {:?}", report.order);
    println!("p_cred {:.3?}", report.p_cred);

    // Unnormalised scores, as a network head would emit them.
    let anchors = vogel_anchors(128, 6)?;
    let mut scores = vec![-0.2; 128];
    for (i, v) in [(3, 0.4), (10, 0.35), (11, 0.3), (60, 0.1), (90, 0.05)] {
        scores[i] = v;
    }
    let (out, rep) = slsparsemax(&scores, &anchors)?;
    let kept: Vec<(usize, f64)> = out.iter().cloned().enumerate().filter(|(_, v)| *v > 0.0).collect();
    println!("kappa {}, tau {:.4}, kept {kept:.3?}", rep.kappa, rep.tau);
    if rep.input_not_normalized() {
        println!("input summed to {:.2}; output is not renormalised", rep.input_sum);
    }
    Ok(())
}
