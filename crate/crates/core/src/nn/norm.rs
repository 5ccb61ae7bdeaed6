use ndarray::Array2;

use crate::codec::{Reader, Writer};
use crate::error::Result;

/// Per-feature affine standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation; constant features get unit
    /// scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1;
            for (j, v) in row.iter().enumerate() {
                let d = v - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (v - mean[j]);
            }
        }
        let std = m2
            .iter()
            .map(|s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.mean.len() {
            out[j] = (x[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// `log |d z / d x|`.
    pub fn log_jacobian(&self) -> f64 {
        -self.std.iter().map(|s| s.ln()).sum::<f64>()
    }

    pub fn apply_rows<'a>(&self, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Array2<f64> {
        let n = rows.len();
        let mut out = Array2::zeros((n, self.dim()));
        for (i, row) in rows.enumerate() {
            self.apply_into(row, out.row_mut(i).as_slice_mut().unwrap());
        }
        out
    }

    pub fn write(&self, w: &mut Writer) {
        w.f64_vec(&self.mean);
        w.f64_vec(&self.std);
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        Ok(Self {
            mean: r.f64_vec()?,
            std: r.f64_vec()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    #[test]
    fn standardized_training_set_has_unit_moments() {
        let mut rng = RngStream::new(1);
        let rows: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                vec![
                    rng.random_range(-3.0..10.0),
                    1e4 * rng.random::<f64>(),
                    -7.0 + rng.random::<f64>() * 1e-3,
                ]
            })
            .collect();
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice()), 3);
        let z = s.apply_rows(rows.iter().map(|r| r.as_slice()));
        for j in 0..3 {
            let col = z.column(j);
            let mean = col.mean().unwrap();
            let sd = (col.mapv(|v| (v - mean).powi(2)).sum() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-6);
            assert!((sd - 1.0).abs() < 1e-3);
        }
        let back = s.invert(&s.apply(&rows[3]));
        for (a, b) in back.iter().zip(&rows[3]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_feature_keeps_unit_scale() {
        let rows = [vec![2.0], vec![2.0]];
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice()), 1);
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.apply(&[2.0]), vec![0.0]);
    }
}
