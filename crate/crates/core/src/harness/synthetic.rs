use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, HouseholderQ};
use crate::rng::{derive_seed, stream};

const TAG_MATRIX: u64 = 0x41;
const TAG_Z1: u64 = 0x5a31;
const TAG_Z2: u64 = 0x5a32;
const TAG_Z3: u64 = 0x5a33;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub kappa: f64,
    pub phi: f64,
    pub seed: u64,
}

fn unit_gaussian(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// The parts of a synthetic problem that do not depend on `(kappa, phi)`:
/// the Gaussian matrix, its full orthogonal factor and the three unit
/// direction vectors.
pub struct SyntheticBasis {
    a: DenseMatrix,
    q_full: HouseholderQ,
    range_part: DVector<f64>,
    complement_part: DVector<f64>,
    z3: Vec<f64>,
}

impl SyntheticBasis {
    pub fn new(n: usize, d: usize, seed: u64) -> Result<Self> {
        if d < 2 || d + 1 >= n {
            return Err(Error::InvalidArgument(format!(
                "synthetic data needs 2 <= d < N - 1, got N = {n}, d = {d}"
            )));
        }
        let mut rng = stream(derive_seed(seed, TAG_MATRIX));
        let m = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let q_full = HouseholderQ::new(&m);
        let range_part = q_full.range_vector(&unit_gaussian(d - 1, derive_seed(seed, TAG_Z1)));
        let complement_part = q_full.complement_vector(&unit_gaussian(n - d - 1, derive_seed(seed, TAG_Z2)));
        Ok(Self {
            a: DenseMatrix::new(m)?,
            q_full,
            range_part,
            complement_part,
            z3: unit_gaussian(n - 2, derive_seed(seed, TAG_Z3)),
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.q_full.dim()
    }

    /// `b = kappa Q z1 + sqrt(1-kappa^2) Q_perp z2` and
    /// `b~ = phi b + sqrt(1-phi^2) b_perp z3`, both of unit norm.
    pub fn pair(&self, kappa: f64, phi: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        for (name, v) in [("kappa", kappa), ("phi", phi)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let b = &self.range_part * kappa + &self.complement_part * (1.0 - kappa * kappa).sqrt();
        let b_perp = HouseholderQ::new(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        let bt = &b * phi + b_perp.complement_vector(&self.z3) * (1.0 - phi * phi).sqrt();
        Ok((b, bt))
    }
}

pub fn synthetic_pair(spec: &SyntheticSpec) -> Result<(DenseMatrix, DVector<f64>, DVector<f64>)> {
    let basis = SyntheticBasis::new(spec.n, spec.d, spec.seed)?;
    let (b, bt) = basis.pair(spec.kappa, spec.phi)?;
    Ok((basis.a, b, bt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfb::correlation_metrics;
    use crate::linalg::LsContext;

    #[test]
    fn constructed_parameters_are_exact() {
        let basis = SyntheticBasis::new(300, 20, 5).unwrap();
        let ctx = LsContext::new(basis.matrix()).unwrap();
        for &(kappa, phi) in &[(0.2, 0.95), (0.95, 0.3), (0.5, 0.5), (0.1, 0.9)] {
            let (b, bt) = basis.pair(kappa, phi).unwrap();
            assert!((b.norm() - 1.0).abs() < 1e-12 && (bt.norm() - 1.0).abs() < 1e-12);
            let m = crate::bfb::correlation_metrics_with(&ctx, &b, &bt).unwrap();
            assert!((m.kappa - kappa).abs() < 1e-10, "kappa {}", m.kappa);
            assert!((m.phi - phi).abs() < 1e-10, "phi {}", m.phi);
        }
    }

    #[test]
    fn full_size_instance() {
        let spec = SyntheticSpec {
            n: 1000,
            d: 50,
            kappa: 0.2,
            phi: 0.95,
            seed: 1,
        };
        let (a, b, bt) = synthetic_pair(&spec).unwrap();
        let m = correlation_metrics(&a, &b, &bt).unwrap();
        assert!((m.kappa - 0.2).abs() < 1e-10 && (m.phi - 0.95).abs() < 1e-10);
        let (bound, _) = crate::bfb::prop_cor_bounds(m.phi, m.kappa, m.kappa_tilde).unwrap();
        assert!(m.nu >= bound);
    }

    #[test]
    fn kappa_zero_is_orthogonal_to_range() {
        let basis = SyntheticBasis::new(50, 5, 2).unwrap();
        let (b, _) = basis.pair(0.0, 0.5).unwrap();
        let ctx = LsContext::new(basis.matrix()).unwrap();
        assert!(ctx.project_range(&b).unwrap().norm() < 1e-10);
    }

    #[test]
    fn phi_one_is_perfectly_correlated() {
        let basis = SyntheticBasis::new(50, 5, 3).unwrap();
        let (b, bt) = basis.pair(0.3, 1.0).unwrap();
        assert!((b - &bt).norm() < 1e-14);
        let m = correlation_metrics(basis.matrix(), &bt, &basis.pair(0.3, 1.0).unwrap().0).unwrap();
        assert!((m.nu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directions_do_not_depend_on_parameters() {
        let basis = SyntheticBasis::new(40, 4, 9).unwrap();
        let (b1, _) = basis.pair(0.3, 0.5).unwrap();
        let (b2, _) = basis.pair(0.6, 0.9).unwrap();
        let ctx = LsContext::new(basis.matrix()).unwrap();
        let r1 = ctx.project_range(&b1).unwrap();
        let r2 = ctx.project_range(&b2).unwrap();
        assert!((r1 / 0.3 - r2 / 0.6).norm() < 1e-12);
    }

    #[test]
    fn invalid_dimensions() {
        assert!(SyntheticBasis::new(10, 9, 0).is_err());
        assert!(SyntheticBasis::new(10, 1, 0).is_err());
        assert!(SyntheticBasis::new(10, 3, 0).unwrap().pair(1.2, 0.5).is_err());
    }
}
