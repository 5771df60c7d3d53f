//! Sphere geometry shared by every other module: the equirectangular pixel
//! mapping, per-pixel solid angles, Vogel-spiral anchor directions and their
//! nearest-neighbour graphs.
//!
//! Convention: polar angle `theta` is measured from +Z (up), azimuth `phi`
//! runs over `[0, 2π)` starting at +X. Pixel `(x, y)` samples its cell centre,
//! `theta = π (y + 0.5) / H`, `phi = 2π (x + 0.5) / W`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A unit vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDir {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SphereDir {
    pub const UP: SphereDir = SphereDir { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalises `(x, y, z)`. Fails on zero or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(format!("cannot normalise ({x}, {y}, {z})")));
        }
        Ok(SphereDir {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Direction for polar angle `theta` (from +Z) and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        SphereDir {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    #[inline]
    pub fn dot(&self, other: &SphereDir) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Polar angle from +Z in `[0, π]`.
    pub fn theta(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    /// Azimuth in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        let p = self.y.atan2(self.x);
        if p < 0.0 {
            p + 2.0 * PI
        } else {
            p
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Great-circle distance between two unit vectors, in radians.
pub fn geodesic_dist(a: &SphereDir, b: &SphereDir) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Equirectangular grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridGeometry {
    width: usize,
    height: usize,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 1 {
            return Err(Error::invalid(format!(
                "grid must be at least 2x1, got {width}x{height}"
            )));
        }
        Ok(GridGeometry { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Polar angle of row `y`'s centre. No bounds check.
    #[inline]
    pub fn theta(&self, y: usize) -> f64 {
        PI * (y as f64 + 0.5) / self.height as f64
    }

    /// Azimuth of column `x`'s centre. No bounds check.
    #[inline]
    pub fn phi(&self, x: usize) -> f64 {
        2.0 * PI * (x as f64 + 0.5) / self.width as f64
    }

    fn check(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.width || y >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn dir_from_pixel(&self, x: usize, y: usize) -> Result<SphereDir> {
        self.check(x, y)?;
        Ok(self.dir_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn dir_unchecked(&self, x: usize, y: usize) -> SphereDir {
        SphereDir::from_angles(self.theta(y), self.phi(x))
    }

    /// Inverse of [`dir_from_pixel`](Self::dir_from_pixel): the cell containing `d`.
    pub fn pixel_from_dir(&self, d: &SphereDir) -> (usize, usize) {
        let fx = d.phi() / (2.0 * PI) * self.width as f64;
        let fy = d.theta() / PI * self.height as f64;
        let x = (fx.floor() as usize).min(self.width - 1);
        let y = (fy.floor() as usize).min(self.height - 1);
        (x, y)
    }

    pub fn solid_angle(&self, y: usize) -> Result<f64> {
        self.check(0, y)?;
        Ok(self.row_solid_angle(y))
    }

    /// Area of one pixel in row `y`: the latitude band `[θ(y) ± π/2H]`
    /// split into `W` cells, `(2π/W)·2 sin θ(y) sin(π/2H)`. This is the
    /// midpoint weight `(2π/W)(π/H) sin θ(y)` rescaled so a row set sums to
    /// exactly 4π. Unchecked.
    #[inline]
    pub(crate) fn row_solid_angle(&self, y: usize) -> f64 {
        let half = PI / (2.0 * self.height as f64);
        (2.0 * PI / self.width as f64) * 2.0 * self.theta(y).sin() * half.sin()
    }

    /// Unit direction of every pixel in row-major order.
    pub fn directions(&self) -> Vec<SphereDir> {
        let mut out = Vec::with_capacity(self.pixel_count());
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.dir_unchecked(x, y));
            }
        }
        out
    }
}

/// How pixel sums are weighted when integrating over the sphere.
///
/// `SolidAngle` weights each pixel by the area it subtends. `PaperLiteral`
/// uses plain pixel sums (scaled by `4π/(wh)` for SH projection), which
/// over-weights the poles on equirectangular grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightingMode {
    #[default]
    SolidAngle,
    PaperLiteral,
}

impl WeightingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightingMode::SolidAngle => "solid-angle",
            WeightingMode::PaperLiteral => "paper-literal",
        }
    }
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solid-angle" => Ok(WeightingMode::SolidAngle),
            "paper-literal" => Ok(WeightingMode::PaperLiteral),
            other => Err(Error::invalid(format!(
                "unknown weighting mode {other:?} (expected solid-angle or paper-literal)"
            ))),
        }
    }
}

impl std::fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed anchor directions hosting the light-source kernels, plus a directed
/// k-nearest-neighbour graph over them.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    dirs: Vec<SphereDir>,
    neighbors: Vec<Vec<usize>>,
    k_nn: usize,
}

impl AnchorSet {
    /// Builds the set from arbitrary distinct directions, deriving neighbours
    /// by geodesic distance (ties to the lower index).
    pub fn from_dirs(dirs: Vec<SphereDir>, k_nn: usize) -> Result<Self> {
        let n = dirs.len();
        if n == 0 {
            return Err(Error::invalid("anchor set must be nonempty"));
        }
        if k_nn >= n {
            return Err(Error::invalid(format!(
                "k_nn = {k_nn} must be smaller than the anchor count {n}"
            )));
        }
        let neighbors = (0..n)
            .map(|i| {
                let mut others: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (geodesic_dist(&dirs[i], &dirs[j]), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others.into_iter().take(k_nn).map(|(_, j)| j).collect()
            })
            .collect();
        Ok(AnchorSet {
            dirs,
            neighbors,
            k_nn,
        })
    }

    /// Builds the set with an explicit neighbourhood graph.
    pub fn with_neighbors(dirs: Vec<SphereDir>, neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = dirs.len();
        if n == 0 || neighbors.len() != n {
            return Err(Error::invalid(format!(
                "{} neighbour lists for {n} anchors",
                neighbors.len()
            )));
        }
        let k_nn = neighbors[0].len();
        for (i, list) in neighbors.iter().enumerate() {
            if list.len() != k_nn {
                return Err(Error::invalid(format!(
                    "anchor {i} has {} neighbours, expected {k_nn}",
                    list.len()
                )));
            }
            if list.iter().any(|&j| j == i || j >= n) {
                return Err(Error::invalid(format!("anchor {i} has an invalid neighbour")));
            }
        }
        Ok(AnchorSet {
            dirs,
            neighbors,
            k_nn,
        })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    pub fn dirs(&self) -> &[SphereDir] {
        &self.dirs
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Index of the anchor closest to `d` by geodesic distance; ties go to
    /// the lower index. Compares dot products, which order identically.
    pub fn nearest(&self, d: &SphereDir) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, a) in self.dirs.iter().enumerate() {
            let dot = a.dot(d).clamp(-1.0, 1.0);
            if dot > best_dot {
                best = i;
                best_dot = dot;
            }
        }
        best
    }
}

/// Golden-angle spiral: anchor `i` sits at `z = 1 - 2(i + 0.5)/N` with azimuth
/// `i·π(3 - √5)` (mod 2π).
pub fn vogel_anchors(n: usize, k_nn: usize) -> Result<AnchorSet> {
    if n == 0 {
        return Err(Error::invalid("anchor count must be at least 1"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let dirs = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = (i as f64 * golden).rem_euclid(2.0 * PI);
            SphereDir {
                x: r * phi.cos(),
                y: r * phi.sin(),
                z,
            }
        })
        .collect();
    AnchorSet::from_dirs(dirs, k_nn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equator_prime_meridian() {
        // Pixel centres never land exactly on theta = π/2 for even H, so check
        // the mapping itself at that point.
        let d = SphereDir::from_angles(PI / 2.0, 0.0);
        assert_abs_diff_eq!(d.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn small_grid_closed_form() {
        let g = GridGeometry::new(4, 2).unwrap();
        let d = g.dir_from_pixel(1, 0).unwrap();
        assert_abs_diff_eq!(d.x, -0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(d.y, 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(d.z, 0.707_106_8, epsilon = 1e-7);
    }

    #[test]
    fn pole_row_is_near_up() {
        for &(w, h) in &[(8, 4), (256, 128), (3, 1)] {
            let g = GridGeometry::new(w, h).unwrap();
            for x in 0..w {
                let d = g.dir_from_pixel(x, 0).unwrap();
                assert!(geodesic_dist(&d, &SphereDir::UP) <= PI / h as f64);
            }
        }
    }

    #[test]
    fn out_of_range_pixel() {
        let g = GridGeometry::new(4, 2).unwrap();
        assert!(matches!(g.dir_from_pixel(4, 0), Err(Error::OutOfBounds { .. })));
        assert!(g.solid_angle(2).is_err());
        assert!(GridGeometry::new(1, 4).is_err());
    }

    #[test]
    fn solid_angles_sum_to_sphere() {
        for &h in &[8usize, 64, 128, 512] {
            let g = GridGeometry::new(2 * h, h).unwrap();
            let total: f64 = (0..h).map(|y| g.solid_angle(y).unwrap() * g.width() as f64).sum();
            assert!((total - 4.0 * PI).abs() <= 1e-6 * 4.0 * PI, "H={h}: {total}");
        }
    }

    #[test]
    fn first_row_solid_angle() {
        let g = GridGeometry::new(256, 128).unwrap();
        assert_abs_diff_eq!(g.solid_angle(0).unwrap(), 7.392e-6, epsilon = 1e-9);
    }

    #[test]
    fn equator_rows_are_heaviest() {
        let g = GridGeometry::new(128, 64).unwrap();
        let w: Vec<f64> = (0..64).map(|y| g.solid_angle(y).unwrap()).collect();
        let max = w.iter().cloned().fold(0.0, f64::max);
        assert_eq!(w[31], max);
        assert_eq!(w[32], max);
    }

    #[test]
    fn pixel_round_trip() {
        for &(w, h) in &[(4usize, 2usize), (64, 32), (256, 128)] {
            let g = GridGeometry::new(w, h).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let d = g.dir_from_pixel(x, y).unwrap();
                    assert_eq!(g.pixel_from_dir(&d), (x, y));
                }
            }
        }
    }

    #[test]
    fn geodesic_cases() {
        let z = SphereDir::UP;
        let mz = SphereDir::new(0.0, 0.0, -1.0).unwrap();
        let x = SphereDir::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(geodesic_dist(&z, &z), 0.0);
        assert_abs_diff_eq!(geodesic_dist(&z, &mz), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(geodesic_dist(&z, &x), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_anchor() {
        let a = vogel_anchors(1, 0).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a.neighbors(0).is_empty());
    }

    #[test]
    fn knn_must_be_below_count() {
        assert!(vogel_anchors(4, 4).is_err());
        assert!(vogel_anchors(0, 0).is_err());
    }

    #[test]
    fn vogel_128_is_well_spread() {
        let a = vogel_anchors(128, 6).unwrap();
        assert_eq!(a.len(), 128);
        for d in a.dirs() {
            assert_abs_diff_eq!(d.dot(d), 1.0, epsilon = 1e-12);
        }
        for i in 0..128 {
            for j in (i + 1)..128 {
                assert!(geodesic_dist(&a.dirs()[i], &a.dirs()[j]) > 0.05);
            }
            let nb = a.neighbors(i);
            assert_eq!(nb.len(), 6);
            assert!(!nb.contains(&i));
        }
    }

    #[test]
    fn vogel_is_deterministic() {
        let a = vogel_anchors(128, 6).unwrap();
        let b = vogel_anchors(128, 6).unwrap();
        for (p, q) in a.dirs().iter().zip(b.dirs()) {
            assert_eq!(p.to_array().map(f64::to_bits), q.to_array().map(f64::to_bits));
        }
        assert_eq!(a, b);
    }

    #[test]
    fn vogel_first_anchor_formula() {
        let a = vogel_anchors(10, 3).unwrap();
        assert_abs_diff_eq!(a.dirs()[0].z, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(a.dirs()[9].z, -0.9, epsilon = 1e-15);
        let golden = PI * (3.0 - 5f64.sqrt());
        assert_abs_diff_eq!(a.dirs()[3].phi(), (3.0 * golden) % (2.0 * PI), epsilon = 1e-12);
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let dirs = vec![
            SphereDir::new(1.0, 0.0, 0.0).unwrap(),
            SphereDir::new(0.0, 1.0, 0.0).unwrap(),
        ];
        let a = AnchorSet::from_dirs(dirs, 1).unwrap();
        let mid = SphereDir::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(a.nearest(&mid), 0);
    }
}
