//! Scalar abstraction: all pipeline math is generic over the floating-point type.

use rand::Rng;

/// Floating-point scalar the geometry and estimation code is generic over.
///
/// Implemented for `f32` and `f64`. Everything trigonometric comes from
/// [`nalgebra::RealField`]; the extra methods cover the few places where the
/// pipeline needs conversions or random draws without naming a concrete type.
pub trait Real:
    nalgebra::RealField
    + Copy
    + Default
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Display
    + std::str::FromStr
{
    /// Lossy conversion from an `f64` constant.
    fn of(v: f64) -> Self;

    /// Widening conversion for formatting and statistics.
    fn as_f64(self) -> f64;

    /// `true` if the value is neither NaN nor infinite.
    fn finite(self) -> bool;

    /// Draw one sample from `U[0, 1)`.
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw one standard-normal sample.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn finite(self) -> bool {
                <$t>::is_finite(self)
            }

            #[inline]
            fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(rand_distr::StandardNormal)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Degrees to radians without naming the concrete scalar.
pub fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::pi() / T::of(180.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_01_stays_in_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = f64::uniform_01(&mut rng);
            assert!((0.0..1.0).contains(&x));
            let y = f32::uniform_01(&mut rng);
            assert!((0.0..1.0).contains(&y));
        }
    }

    #[test]
    fn deg_to_rad_right_angle() {
        assert!((deg_to_rad(90.0f64) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
