//! Mode assignment, total variation distance and mode coverage.

use crate::error::{Error, Result};
use crate::nn::Batch;

/// Samples within this many standard deviations of a center are assigned to it.
pub const ASSIGN_RADIUS_STDS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeHistogram {
    pub counts: Vec<usize>,
    pub unassigned: usize,
}

impl ModeHistogram {
    pub fn assigned(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.assigned() + self.unassigned
    }

    /// Fractions of all samples per mode, with the unassigned share appended last.
    pub fn proportions_with_unassigned(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            let mut p = vec![0.0; self.counts.len()];
            p.push(1.0);
            return p;
        }
        self.counts
            .iter()
            .chain(std::iter::once(&self.unassigned))
            .map(|&c| c as f64 / total as f64)
            .collect()
    }
}

/// Nearest-center assignment within `3 * mode_std`; farther samples are unassigned.
pub fn assign_modes(samples: &Batch, mode_centers: &[[f64; 2]], mode_std: f64) -> ModeHistogram {
    let radius = ASSIGN_RADIUS_STDS * mode_std;
    let mut counts = vec![0; mode_centers.len()];
    let mut unassigned = 0;
    for row in samples.iter_rows() {
        let nearest = mode_centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (row[0] - c[0]).hypot(row[1] - c[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, d)) if d <= radius => counts[i] += 1,
            _ => unassigned += 1,
        }
    }
    ModeHistogram { counts, unassigned }
}

/// `0.5 * sum |p_i - q_i|` over two probability vectors.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "tvd over vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 || v.iter().any(|&x| x < 0.0) {
            return Err(Error::Config(format!("not a probability vector: {v:?}")));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn default_min_fraction(n_modes: usize) -> f64 {
    1.0 / (4.0 * n_modes as f64)
}

/// Number of modes holding at least `min_fraction` of the assigned samples.
pub fn mode_coverage(hist: &ModeHistogram, min_fraction: f64) -> usize {
    let assigned = hist.assigned();
    if assigned == 0 {
        return 0;
    }
    hist.counts
        .iter()
        .filter(|&&c| c as f64 / assigned as f64 >= min_fraction)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tvd_examples() {
        assert_eq!(tvd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((tvd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((tvd(&[0.5, 0.5], &[0.25, 0.75]).unwrap() - 0.25).abs() < 1e-12);
        assert!(tvd(&[1.0], &[0.5, 0.5]).is_err());
        assert!(tvd(&[0.6, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn samples_on_centers() {
        let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = Batch::from_rows(&centers).unwrap();
        let h = assign_modes(&b, &centers, 0.05);
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert_eq!(h.unassigned, 0);
    }

    #[test]
    fn far_samples_unassigned() {
        let centers = [[0.0, 0.0], [1.0, 0.0]];
        let b = Batch::from_rows(&[[10.0, 10.0], [0.5, 0.5], [-3.0, 0.0]]).unwrap();
        let h = assign_modes(&b, &centers, 0.05);
        assert_eq!(h.counts, vec![0, 0]);
        assert_eq!(h.unassigned, 3);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn coverage_examples() {
        let uniform = ModeHistogram { counts: vec![10; 8], unassigned: 0 };
        assert_eq!(mode_coverage(&uniform, default_min_fraction(8)), 8);
        let collapsed = ModeHistogram { counts: vec![0, 0, 80, 0, 0, 0, 0, 0], unassigned: 5 };
        assert_eq!(mode_coverage(&collapsed, default_min_fraction(8)), 1);
        let mut seven = vec![20; 8];
        seven[3] = 0;
        let planted = ModeHistogram { counts: seven, unassigned: 40 };
        assert_eq!(mode_coverage(&planted, default_min_fraction(8)), 7);
        let empty = ModeHistogram { counts: vec![0; 8], unassigned: 9 };
        assert_eq!(mode_coverage(&empty, 0.1), 0);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-3;
            let mut p: Vec<f64> = v.iter().map(|x| x / s).collect();
            let rest = 1.0 - p.iter().sum::<f64>();
            p.push(rest);
            p
        })
    }

    proptest! {
        #[test]
        fn prop_tvd_metric_axioms(p in simplex(4), q in simplex(4), r in simplex(4)) {
            let pq = tvd(&p, &q).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
            prop_assert_eq!(pq, tvd(&q, &p).unwrap());
            prop_assert_eq!(tvd(&p, &p).unwrap(), 0.0);
            prop_assert!(pq <= tvd(&p, &r).unwrap() + tvd(&r, &q).unwrap() + 1e-12);
        }
    }
}
