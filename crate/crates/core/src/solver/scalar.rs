use nalgebra::ComplexField;
use num_complex::Complex64;

/// Field of the discrete operators: `f64` for the real (anti-)periodic
/// maps, `Complex64` for general Bloch wave vectors.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + std::fmt::Debug + 'static {
    /// `exp(i theta)` if representable in this field.
    fn from_phase(theta: f64) -> Option<Self>;

    fn scale_re(self, r: f64) -> Self;

    fn from_re(r: f64) -> Self;
}

impl Scalar for f64 {
    fn from_phase(theta: f64) -> Option<Self> {
        let (s, c) = theta.sin_cos();
        if s.abs() < 1e-12 {
            Some(c.signum())
        } else {
            None
        }
    }

    #[inline(always)]
    fn scale_re(self, r: f64) -> Self {
        self * r
    }

    #[inline(always)]
    fn from_re(r: f64) -> Self {
        r
    }
}

impl Scalar for Complex64 {
    fn from_phase(theta: f64) -> Option<Self> {
        Some(Complex64::from_polar(1.0, theta))
    }

    #[inline(always)]
    fn scale_re(self, r: f64) -> Self {
        Complex64::new(self.re * r, self.im * r)
    }

    #[inline(always)]
    fn from_re(r: f64) -> Self {
        Complex64::new(r, 0.0)
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += x.conjugate() * *y;
    }
    s
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
}

/// `y += alpha x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}
