use crate::error::{Error, Result};
use crate::sphere::GridGeometry;

/// Linear-radiance RGB panorama on an equirectangular grid, row-major from the
/// top (+Z) row down.
///
/// Decoded panoramas are nonnegative; images produced by SH reconstruction may
/// carry negative ringing, so only finiteness is enforced here.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    geom: GridGeometry,
    pixels: Vec<[f64; 3]>,
}

impl EquirectImage {
    pub fn new(geom: GridGeometry, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != geom.pixel_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {}x{} grid",
                pixels.len(),
                geom.width(),
                geom.height()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("pixel {i} is not finite")));
        }
        Ok(EquirectImage { geom, pixels })
    }

    pub fn zeros(geom: GridGeometry) -> Self {
        EquirectImage {
            geom,
            pixels: vec![[0.0; 3]; geom.pixel_count()],
        }
    }

    pub fn constant(geom: GridGeometry, value: [f64; 3]) -> Self {
        EquirectImage {
            geom,
            pixels: vec![value; geom.pixel_count()],
        }
    }

    /// Fills every pixel from its `(x, y)` coordinate.
    pub fn from_fn(geom: GridGeometry, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(geom.pixel_count());
        for y in 0..geom.height() {
            for x in 0..geom.width() {
                pixels.push(f(x, y));
            }
        }
        Self::new(geom, pixels)
    }

    pub fn geom(&self) -> GridGeometry {
        self.geom
    }

    pub fn width(&self) -> usize {
        self.geom.width()
    }

    pub fn height(&self) -> usize {
        self.geom.height()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.geom.width() + x]
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.pixels
    }

    pub fn is_nonnegative(&self) -> bool {
        self.pixels.iter().all(|p| p.iter().all(|&v| v >= 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|p| p.map(|v| v * factor))
    }

    pub fn clamped_nonnegative(&self) -> Self {
        self.map(|p| p.map(|v| v.max(0.0)))
    }

    fn map(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        EquirectImage {
            geom: self.geom,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Pixel-wise sum. Both images must share a grid.
    pub fn add(&self, other: &EquirectImage) -> Result<Self> {
        self.same_grid(other)?;
        Ok(EquirectImage {
            geom: self.geom,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
                .collect(),
        })
    }

    pub(crate) fn same_grid(&self, other: &EquirectImage) -> Result<()> {
        if self.geom != other.geom {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width(),
                self.height(),
                other.width(),
                other.height()
            )));
        }
        Ok(())
    }

    /// Solid-angle integral of each channel.
    pub fn integrate(&self) -> [f64; 3] {
        let w = self.geom.width();
        let mut total = [0.0; 3];
        for (y, row) in self.pixels.chunks(w).enumerate() {
            let omega = self.geom.row_solid_angle(y);
            let mut acc = [0.0; 3];
            for p in row {
                for c in 0..3 {
                    acc[c] += p[c];
                }
            }
            for c in 0..3 {
                total[c] += acc[c] * omega;
            }
        }
        total
    }

    /// Root mean square over all pixels and channels.
    pub fn rms(&self) -> f64 {
        let sum: f64 = self
            .pixels
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (sum / (3 * self.pixels.len()) as f64).sqrt()
    }
}
