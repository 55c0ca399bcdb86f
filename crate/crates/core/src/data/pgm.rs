use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Tiles square images into one binary PGM, filling the grid row by row.
pub fn render_image_grid(
    samples: &Tensor2,
    side: usize,
    grid_cols: usize,
    pixel_range: (f64, f64),
) -> Result<Vec<u8>> {
    let (lo, hi) = pixel_range;
    if side == 0 || samples.cols() != side * side {
        return Err(Error::Shape(format!("{} features is not a {side}x{side} image", samples.cols())));
    }
    if samples.rows() == 0 || grid_cols == 0 {
        return Err(Error::Argument("image grid needs at least one sample and one column".into()));
    }
    if !(lo < hi) {
        return Err(Error::Argument(format!("empty pixel range ({lo}, {hi})")));
    }
    let cols = grid_cols.min(samples.rows());
    let grid_rows = samples.rows().div_ceil(cols);
    let (w, h) = (cols * side, grid_rows * side);

    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + w * h, 0);
    for (k, img) in samples.iter_rows().enumerate() {
        let (gr, gc) = (k / cols, k % cols);
        for r in 0..side {
            let start = header + (gr * side + r) * w + gc * side;
            for (c, &v) in img[r * side..(r + 1) * side].iter().enumerate() {
                out[start + c] = ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

pub fn write_image_grid(
    samples: &Tensor2,
    side: usize,
    grid_cols: usize,
    pixel_range: (f64, f64),
    path: &Path,
) -> Result<()> {
    let bytes = render_image_grid(samples, side, grid_cols, pixel_range)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_map_to_byte_limits() {
        let black = render_image_grid(&Tensor2::filled(1, 9, -1.0), 3, 1, (-1.0, 1.0)).unwrap();
        assert_eq!(&black[..11], b"P5\n3 3\n255\n");
        assert!(black[11..].iter().all(|&b| b == 0));
        let white = render_image_grid(&Tensor2::filled(1, 9, 1.0), 3, 1, (-1.0, 1.0)).unwrap();
        assert!(white[11..].iter().all(|&b| b == 255));
    }

    #[test]
    fn two_by_two_layout() {
        let s = Tensor2::from_fn(4, 4, |i, _| -1.0 + 2.0 * i as f64 / 3.0);
        let out = render_image_grid(&s, 2, 2, (-1.0, 1.0)).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&out[..header.len()], header);
        assert_eq!(
            &out[header.len()..],
            &[0, 0, 85, 85, 0, 0, 85, 85, 170, 170, 255, 255, 170, 170, 255, 255]
        );
    }
}
