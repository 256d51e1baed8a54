//! Synthetic problems and the experiment drivers behind the CLI.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: seeds for
//! matrices, data vectors and sketches are derived from the base seed and
//! the position of the trial in the experiment grid, and parallel trials are
//! collected in trial order.

mod experiments;
mod synthetic;
mod wick;

pub use experiments::{
    boost_experiment, bound_experiment, corr_experiment, BoostSummary, BoostTrial, BoundRecord, CorrRow,
    DataFiles, ExperimentConfig, ExperimentKind, TrialRecord,
};
pub use synthetic::{synthetic_pair, SyntheticBasis, SyntheticSpec};
pub use wick::{wick_exact, wick_mc_check, WickRecord};

use statrs::statistics::{Data, OrderStatistics, Statistics};

/// Pearson correlation of two equal-length samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.covariance(y) / (x.std_dev() * y.std_dev())
}

/// Five-number summary; quartiles use the median-unbiased estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_samples(values: &[f64]) -> Self {
        let mut data = Data::new(values.to_vec());
        Self {
            min: data.quantile(0.0),
            q1: data.lower_quartile(),
            median: data.median(),
            q3: data.upper_quartile(),
            max: data.quantile(1.0),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_linear_data() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        assert!((pearson(&x, &y) - 1.0).abs() < 1e-12);
        let z = [9.0, 7.0, 5.0, 3.0];
        assert!((pearson(&x, &z) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_stats_of_small_sample() {
        let s = BoxStats::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.min, s.median, s.max), (1.0, 3.0, 5.0));
        assert!(s.q1 < s.median && s.median < s.q3);
    }
}
