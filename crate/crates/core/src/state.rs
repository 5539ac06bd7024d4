//! Time-bin qudit states.
//!
//! A photon whose arrival time is split into `d` slots lives in the span of
//! the kets `|1⟩ … |d⟩`, where `|n⟩` is the photon in slot `n`. Slots are
//! 1-based throughout the public API; slot `n` is stored at index `n - 1`.
//!
//! The conjugate basis used everywhere in this crate is the discrete-Fourier
//! family
//!
//! ```text
//! |φ_k⟩ = d^{-1/2} Σ_{n=0}^{d-1} exp(2πi n k / d) |d - n⟩,   k = 0..d-1
//! ```
//!
//! which is mutually unbiased with respect to the arrival-time basis.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index `k` of a conjugate-basis state `|φ_k⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MubIndex(pub usize);

impl MubIndex {
    /// Validated constructor, `0 <= k < dim`.
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        MubIndex(k).check(dim)
    }

    pub fn check(self, dim: usize) -> Result<Self> {
        if self.0 < dim {
            Ok(self)
        } else {
            Err(Error::IndexOutOfRange { index: self.0, dim })
        }
    }

    #[inline]
    pub fn value(self) -> usize {
        self.0
    }
}

impl From<usize> for MubIndex {
    fn from(k: usize) -> Self {
        MubIndex(k)
    }
}

/// Complex amplitude vector over `d` time bins.
///
/// Unnormalized states are allowed (the cavity projection states are not
/// unit vectors); `is_normalized` reports whether the norm was checked to be
/// one at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState<T> {
    amps: Vec<Complex<T>>,
    normalized: bool,
}

impl<T: Real> TimeBinState<T> {
    /// Builds a state from amplitudes ordered by slot (`amps[0]` is `|1⟩`).
    ///
    /// The normalized flag is set when the squared norm is within the scalar's
    /// normalization tolerance of one.
    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm_sqr: T = amps.iter().map(|a| a.norm_sqr()).sum();
        let normalized = (norm_sqr - T::one()).abs() <= T::norm_tolerance();
        Ok(Self { amps, normalized })
    }

    /// Unnormalized state; the flag is always cleared.
    pub fn unnormalized(amps: Vec<Complex<T>>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self {
            amps,
            normalized: false,
        })
    }

    /// Rescales amplitudes to unit norm.
    pub fn normalized(amps: Vec<Complex<T>>) -> Result<Self> {
        Self::unnormalized(amps)?.normalize()
    }

    /// Photon definitely in slot `n` (1-based).
    pub fn basis(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if n == 0 || n > dim {
            return Err(Error::BinOutOfRange { bin: n, dim });
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); dim];
        amps[n - 1] = Complex::new(T::one(), T::zero());
        Ok(Self {
            amps,
            normalized: true,
        })
    }

    pub fn normalize(self) -> Result<Self> {
        let norm = self.norm();
        if norm == T::zero() {
            return Err(Error::ZeroNorm);
        }
        let inv = norm.recip();
        Ok(Self {
            amps: self.amps.into_iter().map(|a| a * inv).collect(),
            normalized: true,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    /// Amplitude of `|n⟩`, 1-based.
    pub fn amplitude(&self, n: usize) -> Result<Complex<T>> {
        if n == 0 || n > self.dim() {
            return Err(Error::BinOutOfRange {
                bin: n,
                dim: self.dim(),
            });
        }
        Ok(self.amps[n - 1])
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Multiplies every amplitude by `c`. The result is flagged unnormalized
    /// unless `|c| = 1` and the input was normalized.
    pub fn scaled(&self, c: Complex<T>) -> Self {
        let normalized = self.normalized && (c.norm() - T::one()).abs() <= T::norm_tolerance();
        Self {
            amps: self.amps.iter().map(|a| a * c).collect(),
            normalized,
        }
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }
}

fn check_dims<T>(a: &TimeBinState<T>, b: &TimeBinState<T>) -> Result<()> {
    if a.amps.len() != b.amps.len() {
        return Err(Error::DimensionMismatch {
            left: a.amps.len(),
            right: b.amps.len(),
        });
    }
    Ok(())
}

/// Conjugate-basis state `|φ_k⟩`. Slot `d - n` carries `exp(2πi n k/d)/√d`.
pub fn mub_state<T: Real>(dim: usize, k: MubIndex) -> Result<TimeBinState<T>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    let k = k.check(dim)?.value();
    let d = T::from_count(dim);
    let scale = d.sqrt().recip();
    let mut amps = vec![Complex::new(T::zero(), T::zero()); dim];
    for n in 0..dim {
        // n k mod d keeps the angle in [0, 2π) for large indices.
        let turn = T::from_count((n * k) % dim) / d;
        amps[dim - n - 1] = Complex::from_polar(scale, T::TAU() * turn);
    }
    Ok(TimeBinState {
        amps,
        normalized: true,
    })
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product<T: Real>(a: &TimeBinState<T>, b: &TimeBinState<T>) -> Result<Complex<T>> {
    check_dims(a, b)?;
    Ok(a.amps
        .iter()
        .zip(&b.amps)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| {
            acc + x.conj() * y
        }))
}

/// `|⟨a|b⟩|²`.
pub fn overlap_probability<T: Real>(a: &TimeBinState<T>, b: &TimeBinState<T>) -> Result<T> {
    Ok(inner_product(a, b)?.norm_sqr())
}

/// Largest deviation of `|⟨m|φ_k⟩|²` from `1/d` over every pair `(m, k)`.
pub fn verify_mub<T: Real>(dim: usize) -> Result<T> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    let target = T::from_count(dim).recip();
    let mut worst = T::zero();
    for k in 0..dim {
        let phi = mub_state::<T>(dim, MubIndex(k))?;
        for m in 1..=dim {
            let p = overlap_probability(&TimeBinState::basis(dim, m)?, &phi)?;
            worst = worst.max((p - target).abs());
        }
    }
    Ok(worst)
}

/// `|⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`, in `[0, 1]`.
pub fn fidelity<T: Real>(a: &TimeBinState<T>, b: &TimeBinState<T>) -> Result<T> {
    check_dims(a, b)?;
    let na = a.norm_sqr();
    let nb = b.norm_sqr();
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroNorm);
    }
    let f = overlap_probability(a, b)? / (na * nb);
    Ok(f.min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    type S = TimeBinState<f64>;

    #[test]
    fn single_bin_mub_is_identity() {
        let s = mub_state::<f64>(1, MubIndex(0)).unwrap();
        assert_eq!(s.amplitudes(), &[Complex64::new(1.0, 0.0)]);
        assert!(s.is_normalized());
    }

    #[test]
    fn two_bin_mub_has_opposite_signs() {
        let s = mub_state::<f64>(2, MubIndex(1)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitude(2).unwrap().re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(1).unwrap().re, -h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(1).unwrap().im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn four_bin_mub_slot_three() {
        // n = 1 term lands on |3⟩ with exp(iπ/2)/2 = i/2.
        let a = mub_state::<f64>(4, MubIndex(1)).unwrap().amplitude(3).unwrap();
        assert_abs_diff_eq!(a.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mub_errors() {
        assert_eq!(
            mub_state::<f64>(0, MubIndex(0)),
            Err(Error::InvalidDimension(0))
        );
        assert_eq!(
            mub_state::<f64>(3, MubIndex(3)),
            Err(Error::IndexOutOfRange { index: 3, dim: 3 })
        );
    }

    #[test]
    fn inner_products() {
        let p0 = mub_state::<f64>(8, MubIndex(0)).unwrap();
        assert_abs_diff_eq!(inner_product(&p0, &p0).unwrap().re, 1.0, epsilon = 1e-14);

        let a = mub_state::<f64>(2, MubIndex(0)).unwrap();
        let b = mub_state::<f64>(2, MubIndex(1)).unwrap();
        assert!(inner_product(&a, &b).unwrap().norm() < 1e-14);

        for d in [1usize, 3, 7, 16] {
            for k in 0..d {
                let last = S::basis(d, d).unwrap();
                let phi = mub_state(d, MubIndex(k)).unwrap();
                let ip = inner_product(&last, &phi).unwrap();
                assert_abs_diff_eq!(ip.re, 1.0 / (d as f64).sqrt(), epsilon = 1e-14);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = S::basis(2, 1).unwrap();
        let b = S::basis(3, 1).unwrap();
        assert_eq!(
            inner_product(&a, &b),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        );
        assert!(overlap_probability(&a, &b).is_err());
        assert!(fidelity(&a, &b).is_err());
    }

    #[test]
    fn overlaps() {
        let d = 5;
        for m in 1..=d {
            for k in 0..d {
                let p = overlap_probability(
                    &S::basis(d, m).unwrap(),
                    &mub_state(d, MubIndex(k)).unwrap(),
                )
                .unwrap();
                assert_abs_diff_eq!(p, 0.2, epsilon = 1e-14);
            }
        }
        let phi = mub_state::<f64>(d, MubIndex(2)).unwrap();
        assert_abs_diff_eq!(overlap_probability(&phi, &phi).unwrap(), 1.0, epsilon = 1e-14);
        let p = overlap_probability(&S::basis(3, 1).unwrap(), &S::basis(3, 2).unwrap()).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn verify_small_dims() {
        assert_eq!(verify_mub::<f64>(1).unwrap(), 0.0);
        assert!(verify_mub::<f64>(2).unwrap() < 1e-14);
        assert!(verify_mub::<f64>(64).unwrap() < 1e-12);
        assert_eq!(verify_mub::<f64>(0), Err(Error::InvalidDimension(0)));
    }

    #[test]
    fn verify_single_precision() {
        assert!(verify_mub::<f32>(32).unwrap() < 1e-5);
    }

    #[test]
    fn fidelity_cases() {
        let v = S::normalized(vec![
            Complex64::new(0.3, -0.1),
            Complex64::new(-1.2, 0.4),
            Complex64::new(0.0, 2.0),
        ])
        .unwrap();
        let w = v.scaled(Complex64::new(-0.7, 3.1));
        assert_abs_diff_eq!(fidelity(&v, &w).unwrap(), 1.0, epsilon = 1e-14);

        let f = fidelity(&S::basis(4, 1).unwrap(), &S::basis(4, 2).unwrap()).unwrap();
        assert_eq!(f, 0.0);

        let d = 9;
        let f = fidelity(&mub_state(d, MubIndex(0)).unwrap(), &S::basis(d, d).unwrap()).unwrap();
        assert_abs_diff_eq!(f, 1.0 / d as f64, epsilon = 1e-14);
    }

    #[test]
    fn zero_norm_rejected() {
        let z = S::unnormalized(vec![Complex64::new(0.0, 0.0); 2]).unwrap();
        let b = S::basis(2, 1).unwrap();
        assert_eq!(fidelity(&z, &b), Err(Error::ZeroNorm));
        assert_eq!(z.normalize(), Err(Error::ZeroNorm));
    }

    #[test]
    fn normalization_flag() {
        let s = S::from_amplitudes(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]).unwrap();
        assert!(!s.is_normalized());
        assert!(s.clone().normalize().unwrap().is_normalized());
        assert!(S::basis(3, 2).unwrap().is_normalized());
        assert!(!S::unnormalized(vec![Complex64::new(1.0, 0.0)]).unwrap().is_normalized());
        assert_eq!(S::from_amplitudes(vec![]), Err(Error::InvalidDimension(0)));
        assert!(S::basis(3, 0).is_err());
        assert!(S::basis(3, 4).is_err());
    }
}
