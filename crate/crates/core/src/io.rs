//! Panorama file formats: Radiance RGBE (`.hdr`), portable float map (`.pfm`)
//! and 8-bit PNG previews.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::EquirectImage;
use crate::sphere::GridGeometry;

/// Decodes one RGBE quad. A zero exponent is black; otherwise each mantissa
/// byte `m` decodes to `(m + 0.5) / 256 · 2^(e - 128)`.
pub fn rgbe_to_rgb(rgbe: [u8; 4]) -> [f64; 3] {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(rgbe[3] as i32 - 136);
    [
        (rgbe[0] as f64 + 0.5) * f,
        (rgbe[1] as f64 + 0.5) * f,
        (rgbe[2] as f64 + 0.5) * f,
    ]
}

/// Encodes one pixel with a shared exponent. Negative components clamp to zero.
pub fn rgb_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let rgb = rgb.map(|v| v.max(0.0));
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if v < 1e-32 {
        return [0; 4];
    }
    // v = mant * 2^exp with mant in [0.5, 1)
    let exp = v.log2().floor() as i32 + 1;
    let mut exp = exp;
    let mut scale = 2f64.powi(8 - exp);
    // log2 can be off by one ulp near powers of two
    if v * scale >= 256.0 {
        exp += 1;
        scale *= 0.5;
    } else if v * scale < 128.0 {
        exp -= 1;
        scale *= 2.0;
    }
    if exp + 128 > 255 {
        return [255, 255, 255, 255];
    }
    if exp + 128 <= 0 {
        return [0; 4];
    }
    [
        (rgb[0] * scale).floor().min(255.0) as u8,
        (rgb[1] * scale).floor().min(255.0) as u8,
        (rgb[2] * scale).floor().min(255.0) as u8,
        (exp + 128) as u8,
    ]
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let rel = self.data[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(start, "unterminated header line"))?;
        self.pos = start + rel + 1;
        std::str::from_utf8(&self.data[start..start + rel])
            .map_err(|_| Error::format(start, "header line is not text"))
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::format(self.pos, "truncated scanline"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(self.pos, "truncated scanline"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Decodes a Radiance RGBE stream with a `-Y H +X W` resolution line. Both
/// flat and new-style run-length encoded scanlines are accepted.
pub fn read_hdr(bytes: &[u8]) -> Result<EquirectImage> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let magic = cur.line()?;
    if !(magic.starts_with("#?RADIANCE") || magic.starts_with("#?RGBE")) {
        return Err(Error::format(0, "missing #?RADIANCE or #?RGBE magic"));
    }
    loop {
        let at = cur.pos;
        let line = cur.line()?;
        if line.trim().is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::format(at, format!("unsupported pixel format {fmt}")));
            }
        }
    }
    let at = cur.pos;
    let res = cur.line()?;
    let tokens: Vec<&str> = res.split_whitespace().collect();
    let (height, width) = match tokens.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>()
                .map_err(|_| Error::format(at, "bad height"))?,
            w.parse::<usize>()
                .map_err(|_| Error::format(at, "bad width"))?,
        ),
        _ => {
            return Err(Error::format(
                at,
                format!("unsupported pixel order {res:?}, expected -Y H +X W"),
            ))
        }
    };
    let geom = GridGeometry::new(width, height).map_err(|e| Error::format(at, e.to_string()))?;

    let mut pixels = Vec::with_capacity(width * height);
    let mut scan = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(&mut cur, &mut scan)?;
        pixels.extend(scan.iter().map(|&q| rgbe_to_rgb(q)));
    }
    let end = cur.pos;
    EquirectImage::new(geom, pixels).map_err(|e| Error::format(end, e.to_string()))
}

fn read_scanline(cur: &mut Cursor<'_>, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    let start = cur.pos;
    let head = cur.take(4.min(cur.data.len().saturating_sub(cur.pos)))?;
    let is_rle = (8..0x8000).contains(&width)
        && head.len() == 4
        && head[0] == 2
        && head[1] == 2
        && head[2] & 0x80 == 0;
    if !is_rle {
        cur.pos = start;
        for px in scan.iter_mut() {
            px.copy_from_slice(cur.take(4)?);
        }
        return Ok(());
    }
    let encoded_width = ((head[2] as usize) << 8) | head[3] as usize;
    if encoded_width != width {
        return Err(Error::format(start, "scanline width mismatch"));
    }
    for c in 0..4 {
        let mut x = 0;
        while x < width {
            let at = cur.pos;
            let count = cur.byte()? as usize;
            if count > 128 {
                let run = count - 128;
                if x + run > width {
                    return Err(Error::format(at, "run overflows scanline"));
                }
                let v = cur.byte()?;
                for px in &mut scan[x..x + run] {
                    px[c] = v;
                }
                x += run;
            } else {
                if count == 0 || x + count > width {
                    return Err(Error::format(at, "bad literal run"));
                }
                let lit = cur.take(count)?;
                for (px, &v) in scan[x..x + count].iter_mut().zip(lit) {
                    px[c] = v;
                }
                x += count;
            }
        }
    }
    Ok(())
}

/// Encodes flat (non-RLE) RGBE.
pub fn write_hdr(img: &EquirectImage) -> Vec<u8> {
    let header = format!(
        "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n",
        img.height(),
        img.width()
    );
    let mut out = header.into_bytes();
    out.reserve(4 * img.pixels().len());
    for &p in img.pixels() {
        out.extend_from_slice(&rgb_to_rgbe(p));
    }
    out
}

/// Decodes a 3-channel `PF` float map. The sign of the scale line selects
/// endianness (negative = little-endian); rows are stored bottom to top.
pub fn read_pfm(bytes: &[u8]) -> Result<EquirectImage> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos, "truncated PFM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::format(start, "PFM header is not text"))?;
        tokens.push((start, tok));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let (at, magic) = tokens[0];
    if magic != "PF" {
        return Err(Error::format(at, format!("expected PF magic, found {magic:?}")));
    }
    let parse_dim = |(at, t): (usize, &str)| {
        t.parse::<usize>()
            .map_err(|_| Error::format(at, format!("bad dimension {t:?}")))
    };
    let width = parse_dim(tokens[1])?;
    let height = parse_dim(tokens[2])?;
    let (at, scale) = tokens[3];
    let scale: f64 = scale
        .parse()
        .map_err(|_| Error::format(at, format!("bad scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(at, "scale must be finite and nonzero"));
    }
    let little = scale < 0.0;
    let geom = GridGeometry::new(width, height).map_err(|e| Error::format(at, e.to_string()))?;

    let need = width * height * 12;
    if bytes.len() < pos + need {
        return Err(Error::format(bytes.len(), "truncated PFM raster"));
    }
    let mut pixels = vec![[0.0f64; 3]; width * height];
    for file_row in 0..height {
        let y = height - 1 - file_row;
        for x in 0..width {
            for c in 0..3 {
                let off = pos + ((file_row * width + x) * 3 + c) * 4;
                let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                let v = if little {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                if !v.is_finite() {
                    return Err(Error::format(off, "non-finite sample"));
                }
                pixels[y * width + x][c] = v as f64;
            }
        }
    }
    EquirectImage::new(geom, pixels).map_err(|e| Error::format(pos, e.to_string()))
}

/// Encodes little-endian PFM. Samples are stored as `f32`, so the round trip
/// is bit-exact for values representable in single precision.
pub fn write_pfm(img: &EquirectImage) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for y in (0..h).rev() {
        for x in 0..w {
            for v in img.pixel(x, y) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Display mapping for previews: `clamp(exposure·v, 0, 1)^(1/gamma)·255`,
/// rounded half up.
pub fn tonemap(v: f64, exposure: f64, gamma: f64) -> u8 {
    let t = (exposure * v).clamp(0.0, 1.0).powf(1.0 / gamma);
    (t * 255.0 + 0.5).floor() as u8
}

/// 8-bit RGB PNG of `width x height` linear pixels after [`tonemap`].
pub fn encode_png(width: usize, height: usize, pixels: &[[f64; 3]], exposure: f64, gamma: f64) -> Result<Vec<u8>> {
    if !(exposure > 0.0 && gamma > 0.0) {
        return Err(Error::invalid("exposure and gamma must be positive"));
    }
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels for {width}x{height}",
            pixels.len()
        )));
    }
    let data: Vec<u8> = pixels
        .iter()
        .flat_map(|p| p.map(|v| tonemap(v, exposure, gamma)))
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

pub fn write_preview_png(img: &EquirectImage, exposure: f64, gamma: f64) -> Result<Vec<u8>> {
    encode_png(img.width(), img.height(), img.pixels(), exposure, gamma)
}

/// Reads `.hdr` or `.pfm` by extension.
pub fn read_image(path: &Path) -> Result<EquirectImage> {
    let bytes = std::fs::read(path)?;
    match extension(path).as_deref() {
        Some("hdr") | Some("rgbe") => read_hdr(&bytes),
        Some("pfm") => read_pfm(&bytes),
        _ => Err(Error::invalid(format!(
            "{}: expected a .hdr or .pfm file",
            path.display()
        ))),
    }
}

/// Writes `.hdr` or `.pfm` by extension.
pub fn write_image(path: &Path, img: &EquirectImage) -> Result<()> {
    let bytes = match extension(path).as_deref() {
        Some("hdr") | Some("rgbe") => write_hdr(img),
        Some("pfm") => write_pfm(img),
        _ => {
            return Err(Error::invalid(format!(
                "{}: expected a .hdr or .pfm file",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}
