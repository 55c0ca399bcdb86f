//! Datasets, image grids and metric tables.

mod csv;
mod idx;
mod pgm;
mod synthetic;

pub use self::csv::{read_metrics, MetricRow, MetricsTable, MetricsWriter, METRICS_HEADER};
pub use self::idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use self::pgm::{render_image_grid, write_image_grid};
pub use self::synthetic::{make_synthetic, SyntheticKind, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Tensor2,
    pub labels: Option<Vec<u8>>,
    pub pixel_range: (f64, f64),
    /// Side length for square images; `None` for point-cloud data.
    pub image_side: Option<usize>,
}

impl Dataset {
    pub fn new(
        samples: Tensor2,
        labels: Option<Vec<u8>>,
        pixel_range: (f64, f64),
        image_side: Option<usize>,
    ) -> Result<Self> {
        let (lo, hi) = pixel_range;
        if !(lo < hi) {
            return Err(Error::Argument(format!("empty pixel range ({lo}, {hi})")));
        }
        if samples.rows() == 0 {
            return Err(Error::Argument("dataset has no rows".into()));
        }
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::Shape(format!("{} labels for {} rows", l.len(), samples.rows())));
            }
        }
        if let Some(side) = image_side {
            if side * side != samples.cols() {
                return Err(Error::Shape(format!("{} features is not a {side}x{side} image", samples.cols())));
            }
        }
        if let Some(v) = samples.data().iter().find(|v| **v < lo || **v > hi) {
            return Err(Error::Argument(format!("sample value {v} outside pixel range ({lo}, {hi})")));
        }
        Ok(Self { samples, labels, pixel_range, image_side })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Dataset {
            samples: self.samples.select_rows(&idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            pixel_range: self.pixel_range,
            image_side: self.image_side,
        }
    }

    fn side(&self) -> Result<usize> {
        self.image_side
            .ok_or_else(|| Error::Argument("dataset is not an image dataset".into()))
    }
}

/// Keeps the central `side x side` window of every image.
pub fn center_crop(dataset: &Dataset, side: usize) -> Result<Dataset> {
    let full = dataset.side()?;
    if side == 0 || side > full || (full - side) % 2 != 0 {
        return Err(Error::Argument(format!("cannot center-crop {full}x{full} to {side}x{side}")));
    }
    let off = (full - side) / 2;
    let mut cols = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            cols.push((r + off) * full + c + off);
        }
    }
    Ok(Dataset {
        samples: dataset.samples.select_cols(&cols),
        labels: dataset.labels.clone(),
        pixel_range: dataset.pixel_range,
        image_side: Some(side),
    })
}

/// Block-mean pooling by `factor` along both image axes.
pub fn downsample(dataset: &Dataset, factor: usize) -> Result<Dataset> {
    let side = dataset.side()?;
    if factor == 0 || side % factor != 0 {
        return Err(Error::Argument(format!("image side {side} is not divisible by {factor}")));
    }
    let out = side / factor;
    let inv = 1.0 / (factor * factor) as f64;
    let samples = Tensor2::from_fn(dataset.len(), out * out, |i, j| {
        let row = dataset.samples.row(i);
        let (br, bc) = (j / out * factor, j % out * factor);
        let mut s = 0.0;
        for r in br..br + factor {
            for c in bc..bc + factor {
                s += row[r * side + c];
            }
        }
        s * inv
    });
    Ok(Dataset {
        samples,
        labels: dataset.labels.clone(),
        pixel_range: dataset.pixel_range,
        image_side: Some(out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(side: usize, rows: Vec<Vec<f64>>) -> Dataset {
        let samples = Tensor2::from_rows(&rows).unwrap();
        Dataset::new(samples, None, (-1.0, 1.0), Some(side)).unwrap()
    }

    #[test]
    fn checkerboard_pools_to_zero() {
        let d = downsample(&images(2, vec![vec![-1.0, 1.0, 1.0, -1.0]]), 2).unwrap();
        assert_eq!(d.samples.data(), &[0.0]);
        assert_eq!(d.image_side, Some(1));
        assert_eq!(d.pixel_range, (-1.0, 1.0));
    }

    #[test]
    fn constant_stays_constant_and_mean_is_kept() {
        let d = downsample(&images(4, vec![vec![0.25; 16]]), 2).unwrap();
        assert!(d.samples.data().iter().all(|&v| v == 0.25));

        let vals: Vec<f64> = (0..36).map(|i| (i as f64 - 18.0) / 32.0).collect();
        let mean = vals.iter().sum::<f64>() / 36.0;
        let d = downsample(&images(6, vec![vals]), 3).unwrap();
        let pooled = d.samples.data().iter().sum::<f64>() / 4.0;
        assert_eq!(pooled, mean);
    }

    #[test]
    fn indivisible_side_rejected() {
        let err = downsample(&images(3, vec![vec![0.0; 9]]), 2).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn crop_takes_center() {
        let vals: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let d = center_crop(&images(4, vec![vals]), 2).unwrap();
        assert_eq!(d.samples.data(), &[5.0 / 16.0, 6.0 / 16.0, 9.0 / 16.0, 10.0 / 16.0]);
    }

    #[test]
    fn rejects_out_of_range_samples() {
        let samples = Tensor2::from_rows(&[vec![2.0]]).unwrap();
        assert!(Dataset::new(samples, None, (-1.0, 1.0), None).is_err());
    }
}
