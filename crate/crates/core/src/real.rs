use rand::Rng;
use rand_distr::StandardNormal;

/// Scalar type for all core math: `f32` or `f64`.
///
/// Random draws always happen in `f64` and are converted, so a fixed seed
/// produces the same sequence of values for both scalar types.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and config values.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self {
        Self::of(rng.sample::<f64, _>(StandardNormal))
    }

    /// Uniform draw in `[0, 1)`.
    fn sample_unit<R: Rng>(rng: &mut R) -> Self {
        Self::of(rng.gen::<f64>())
    }
}

impl Real for f32 {}
impl Real for f64 {}
