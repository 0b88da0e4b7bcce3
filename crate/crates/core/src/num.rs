//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar the whole crate is generic over.
///
/// `f32` and `f64` implement it. Gaussian sampling is routed through the
/// trait so that each width uses its native `StandardNormal` (ziggurat)
/// sampler; draws are deterministic for a fixed RNG stream within a build.
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Draw one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from `f64`; panics on values not representable at all
    /// (never happens for finite constants used internally).
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant must convert to scalar type")
    }

    /// Widening (or identity) conversion to `f64`.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar must convert to f64")
    }
}

impl Real for f64 {
    #[inline(always)]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    #[inline(always)]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn normal_sampling_is_deterministic_per_seed() {
        let mut a = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut b = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xa: Vec<f64> = (0..16).map(|_| f64::standard_normal(&mut a)).collect();
        let xb: Vec<f64> = (0..16).map(|_| f64::standard_normal(&mut b)).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn conversions_round_trip() {
        let x = f32::from_f64_lossy(0.25);
        assert_eq!(x, 0.25f32);
        assert_eq!(x.to_f64_lossy(), 0.25f64);
    }
}
