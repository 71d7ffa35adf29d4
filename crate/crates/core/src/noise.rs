//! Gaussian noise seam shared by the channel and receiver models.

use rand::Rng;
use rand_distr::StandardNormal;

/// Source of standard-normal variates.
///
/// Every RNG is a source; [`Noiseless`] returns zeros so deterministic
/// pass-through behaviour can be tested.
pub trait GaussianSource {
    fn standard_normal(&mut self) -> f64;

    fn normal(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.standard_normal()
        }
    }
}

impl<R: Rng + ?Sized> GaussianSource for R {
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Noiseless;

impl GaussianSource for Noiseless {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}
