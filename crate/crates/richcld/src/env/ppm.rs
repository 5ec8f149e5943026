//! Binary PPM (P6) images.

use std::io::Write;
use std::path::Path;

use crate::env::Observation;
use crate::error::{invalid_input, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    /// Row 0 is the top of the image; `y` grows upward in latent coordinates, so
    /// callers pass latent rows and this flips them.
    pub fn set_latent(&mut self, col: usize, latent_row: usize, rgb: [u8; 3]) {
        let row = self.height - 1 - latent_row;
        self.pixels[row * self.width + col] = rgb;
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    /// Parses the header and checks that the payload matches it.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(invalid_input("truncated PPM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(invalid_input("not an 8-bit P6 image"));
        }
        let width: usize = fields[1].parse().map_err(|_| invalid_input("bad PPM width"))?;
        let height: usize = fields[2].parse().map_err(|_| invalid_input("bad PPM height"))?;
        let payload = &bytes[pos + 1..];
        if payload.len() != width * height * 3 {
            return Err(invalid_input(format!(
                "PPM payload has {} bytes, header promises {}",
                payload.len(),
                width * height * 3
            )));
        }
        let pixels = payload.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self { width, height, pixels })
    }
}

/// White-on-black rendering of a 2-d one-hot observation.
pub fn observation_image(x: &Observation) -> Result<RgbImage> {
    match *x {
        Observation::Pixel { width, dims: 2, index } => {
            let w = width as usize;
            let mut img = RgbImage::new(w, w, [0, 0, 0]);
            img.set_latent(index as usize % w, index as usize / w, [255, 255, 255]);
            Ok(img)
        }
        _ => Err(invalid_input("only 2-d pixel observations render as images")),
    }
}
