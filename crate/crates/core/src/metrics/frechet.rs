//! Exact Fréchet distance between Gaussians fitted to 2-D sample sets.

use crate::error::{Error, Result};
use crate::nn::Batch;

/// Mean and covariance of a 2-D sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSummary {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl GaussianSummary {
    /// Validates symmetry and positive semidefiniteness (eigenvalues down to
    /// `-1e-10` are tolerated as rounding noise).
    pub fn new(mean: [f64; 2], covariance: [[f64; 2]; 2]) -> Result<Self> {
        let [[a, b], [b2, c]] = covariance;
        if (b - b2).abs() > 1e-12 {
            return Err(Error::Config(format!("covariance is not symmetric: {covariance:?}")));
        }
        let (lo, _) = sym_eigenvalues(a, b, c);
        if lo < -1e-10 {
            return Err(Error::Config(format!(
                "covariance has negative eigenvalue {lo}"
            )));
        }
        Ok(Self { mean, covariance })
    }

    /// Sample mean and unbiased sample covariance.
    pub fn from_batch(samples: &Batch) -> Result<Self> {
        if samples.cols() != 2 {
            return Err(Error::Shape(format!(
                "expected 2-D samples, got width {}",
                samples.cols()
            )));
        }
        let n = samples.rows();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let nf = n as f64;
        let mut mean = [0.0; 2];
        for r in samples.iter_rows() {
            mean[0] += r[0];
            mean[1] += r[1];
        }
        mean[0] /= nf;
        mean[1] /= nf;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for r in samples.iter_rows() {
            let dx = r[0] - mean[0];
            let dy = r[1] - mean[1];
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let d = nf - 1.0;
        Ok(Self {
            mean,
            covariance: [[sxx / d, sxy / d], [sxy / d, syy / d]],
        })
    }

    pub fn trace(&self) -> f64 {
        self.covariance[0][0] + self.covariance[1][1]
    }
}

/// Eigenvalues `(low, high)` of `[[a, b], [b, c]]`.
fn sym_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (m - d, m + d)
}

type Mat2 = [[f64; 2]; 2];

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `|mu_r - mu_f|^2 + Tr(S_r + S_f - 2 (S_r S_f)^{1/2})`.
///
/// In two dimensions the eigenvalues `s1, s2` of `(S_r S_f)^{1/2}` satisfy
/// `(s1 + s2)^2 = Tr(S_r S_f) + 2 sqrt(det S_r det S_f)`, so no matrix square
/// root is needed.
pub fn frechet_from_summaries(real: &GaussianSummary, fake: &GaussianSummary) -> f64 {
    let dm0 = real.mean[0] - fake.mean[0];
    let dm1 = real.mean[1] - fake.mean[1];
    let (r, f) = (&real.covariance, &fake.covariance);
    let tr_prod = r[0][0] * f[0][0] + r[0][1] * f[1][0] + r[1][0] * f[0][1] + r[1][1] * f[1][1];
    let dets = det(r).max(0.0) * det(f).max(0.0);
    let cross = (tr_prod + 2.0 * dets.sqrt()).max(0.0).sqrt();
    let fd = dm0 * dm0 + dm1 * dm1 + real.trace() + fake.trace() - 2.0 * cross;
    if fd < 0.0 {
        // only rounding residue reaches here; genuine values are >= 0
        0.0
    } else {
        fd
    }
}

/// Fréchet distance between Gaussians fitted to two 2-D sample batches.
pub fn frechet_distance(real: &Batch, fake: &Batch) -> Result<f64> {
    for b in [real, fake] {
        if b.rows() < 3 {
            return Err(Error::TooFewSamples {
                needed: 3,
                got: b.rows(),
            });
        }
    }
    Ok(frechet_from_summaries(
        &GaussianSummary::from_batch(real)?,
        &GaussianSummary::from_batch(fake)?,
    ))
}
