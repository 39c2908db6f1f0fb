//! Float shims so the crate builds without `std`.
//!
//! `f64`'s transcendental methods live in `std`. Modules that need them
//! import [`F64Ext`] under `no_std`, routing the calls through `libm`; with
//! `std` enabled the inherent methods apply and the trait is compiled out.

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("building hmmq-core without `std` requires the `libm` feature");

#[cfg(not(feature = "std"))]
pub(crate) trait F64Ext {
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn sqrt(self) -> f64;
    fn powf(self, e: f64) -> f64;
}

#[cfg(not(feature = "std"))]
impl F64Ext for f64 {
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }

    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }

    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }

    #[inline]
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
}
