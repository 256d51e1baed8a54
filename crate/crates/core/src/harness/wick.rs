use nalgebra::DVector;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WickRecord {
    pub samples: usize,
    pub mc_estimate: f64,
    pub exact: f64,
    pub rel_err: f64,
}

/// `E[<w,xi>^2 <z,xi>^2] = 2<w,z>^2 + |w|^2 |z|^2` for standard normal `xi`.
pub fn wick_exact(w: &DVector<f64>, z: &DVector<f64>) -> f64 {
    2.0 * w.dot(z).powi(2) + w.norm_squared() * z.norm_squared()
}

/// Monte-Carlo estimate of the fourth mixed moment against its closed form.
pub fn wick_mc_check(w: &DVector<f64>, z: &DVector<f64>, samples: usize, seed: u64) -> Result<WickRecord> {
    if w.len() != z.len() {
        return Err(Error::DimensionMismatch(format!("w has {} entries, z has {}", w.len(), z.len())));
    }
    if w.norm() == 0.0 || z.norm() == 0.0 {
        return Err(Error::InvalidArgument("w and z must be nonzero".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut rng = stream(seed);
    let mut xi = vec![0.0; w.len()];
    let mut acc = 0.0;
    for _ in 0..samples {
        xi.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        let (mut pw, mut pz) = (0.0, 0.0);
        for k in 0..xi.len() {
            pw += w[k] * xi[k];
            pz += z[k] * xi[k];
        }
        acc += pw * pw * pz * pz;
    }
    let mc_estimate = acc / samples as f64;
    let exact = wick_exact(w, z);
    Ok(WickRecord {
        samples,
        mc_estimate,
        exact,
        rel_err: (mc_estimate - exact).abs() / exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(wick_exact(&e1, &e2), 1.0);
        assert_eq!(wick_exact(&e1, &e1), 3.0);
        // 2*(1*3)^2 + 1*(9+16) = 43
        assert_eq!(wick_exact(&e1, &DVector::from_vec(vec![3.0, 4.0, 0.0])), 43.0);
    }

    #[test]
    fn monte_carlo_is_close() {
        let w = DVector::from_vec(vec![0.3, -1.2, 0.5, 0.8, 0.1]);
        let z = DVector::from_vec(vec![1.0, 0.4, -0.7, 0.2, 0.9]);
        let r = wick_mc_check(&w, &z, 200_000, 3).unwrap();
        assert!(r.rel_err < 0.05, "{r:?}");
    }

    #[test]
    fn error_shrinks_as_samples_double() {
        let w = DVector::from_vec(vec![0.5, -0.1, 0.9, 0.3, -0.6]);
        let z = DVector::from_vec(vec![-0.2, 0.8, 0.1, 0.7, 0.4]);
        // RMS relative error over independent seeds at 2k, 4k, ..., 64k samples
        let rms: Vec<f64> = (0..6)
            .map(|k| {
                let samples = 2000 << k;
                let sq: f64 = (0..40)
                    .map(|s| wick_mc_check(&w, &z, samples, 1000 * k as u64 + s).unwrap().rel_err.powi(2))
                    .sum();
                (sq / 40.0).sqrt()
            })
            .collect();
        let falls = rms.windows(2).filter(|p| p[1] < p[0]).count();
        assert!(falls >= 4, "{rms:?}");
        // 5 doublings shrink the error by about sqrt(32)
        let ratio = rms[0] / rms[5];
        assert!((3.0..11.0).contains(&ratio), "{rms:?}");
    }

    #[test]
    fn rejects_zero() {
        let w = DVector::zeros(3);
        let z = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(wick_mc_check(&w, &z, 10, 0).is_err());
    }
}
