use std::path::Path;

use vqat_core::container::write_atomic;

use crate::error::{EvalError, Result};

const PAD: usize = 2;

/// Lays `rows` of `h x w` images (values in `[0, 1]`, row 0 = lowest
/// frequency) into one grayscale canvas with high frequencies on top.
/// Returns `(width, height, pixels)`.
pub fn render_grid(rows: &[Vec<&[f64]>], h: usize, w: usize) -> Result<(u32, u32, Vec<u8>)> {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.is_empty() || cols == 0 || h == 0 || w == 0 {
        return Err(EvalError::Usage("nothing to plot".into()));
    }
    let width = cols * w + (cols + 1) * PAD;
    let height = rows.len() * h + (rows.len() + 1) * PAD;
    let mut px = vec![255u8; width * height];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            if img.len() != h * w {
                return Err(EvalError::Dimension(format!("image of {} values, expected {h}x{w}", img.len())));
            }
            let (x0, y0) = (PAD + c * (w + PAD), PAD + r * (h + PAD));
            for i in 0..h {
                let y = y0 + (h - 1 - i);
                for j in 0..w {
                    let v = img[i * w + j];
                    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
                    px[y * width + x0 + j] = (v * 255.0).round() as u8;
                }
            }
        }
    }
    Ok((width as u32, height as u32, px))
}

pub fn write_grid_png(path: &Path, rows: &[Vec<&[f64]>], h: usize, w: usize) -> Result<()> {
    let (width, height, px) = render_grid(rows, h, w)?;
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width, height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| EvalError::Format(e.to_string()))?;
        writer.write_image_data(&px).map_err(|e| EvalError::Format(e.to_string()))?;
    }
    Ok(write_atomic(path, &bytes)?)
}
