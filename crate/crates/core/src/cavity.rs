//! Analytic model of the recirculating Mach-Zehnder cavity.
//!
//! A photon enters through BS1. The prompt reflection goes to D1; the
//! transmitted part travels to BS2, where it either exits to D2 or is sent
//! back around the loop (through the phase shifter) to BS1. One circulation
//! multiplies the amplitude by `r·e^{iφ}` with `r = |R₁||R₂|` and
//! `φ = θ + π`, the `π` coming from the two reflections.
//!
//! A D2 click in bin `N ≥ d` projects the input onto the unnormalized state
//!
//! ```text
//! |Γ_N(φ)⟩ = |T₁||T₂| (r e^{iφ})^{N-d} Σ_{n=0}^{d-1} (r e^{iφ})^n |d - n⟩
//! ```
//!
//! and a D2 click is accepted as a phase-basis outcome only for
//! `d <= N <= N'`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::state::{fidelity, inner_product, mub_state, MubIndex, TimeBinState};

/// Detector or exit port of the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Port {
    /// Time-of-arrival detector behind BS1, gated to bins `1..=d`.
    D1,
    /// Phase-basis detector behind BS2.
    D2,
    /// BS1 reflection-side mode after the D1 gate closes.
    Back,
}

impl Port {
    pub const ALL: [Port; 3] = [Port::D1, Port::D2, Port::Back];

    pub fn name(self) -> &'static str {
        match self {
            Port::D1 => "D1",
            Port::D2 => "D2",
            Port::Back => "BACK",
        }
    }
}

/// Beam splitters, phase shifter and detection window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig<T> {
    dim: usize,
    r1_sq: T,
    r2_sq: T,
    theta: T,
    n_prime: usize,
    // Per-round-trip amplitude overlap; 1 for a perfectly aligned cavity.
    overlap: T,
}

impl<T: Real> CavityConfig<T> {
    pub fn new(dim: usize, r1_sq: T, r2_sq: T, theta: T, n_prime: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        check_reflectivity("r1_sq", r1_sq)?;
        check_reflectivity("r2_sq", r2_sq)?;
        if !theta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "theta",
                value: theta.as_f64(),
                reason: "must be finite",
            });
        }
        if n_prime < dim {
            return Err(Error::WindowViolation {
                bin: n_prime,
                dim,
            });
        }
        Ok(Self {
            dim,
            r1_sq,
            r2_sq,
            theta,
            n_prime,
            overlap: T::one(),
        })
    }

    /// Equal reflectivities `|R₁|² = |R₂|² = r_sq`, phase set to project onto
    /// `|φ_m⟩`.
    pub fn symmetric(dim: usize, r_sq: T, setting: MubIndex, n_prime: usize) -> Result<Self> {
        let theta = theta_for_outcome(dim, setting)?;
        Self::new(dim, r_sq, r_sq, theta, n_prime)
    }

    /// Same cavity with the phase shifter set for outcome `m`.
    pub fn with_setting(&self, m: MubIndex) -> Result<Self> {
        Ok(Self {
            theta: theta_for_outcome(self.dim, m)?,
            ..*self
        })
    }

    pub fn with_theta(&self, theta: T) -> Result<Self> {
        Self::new(self.dim, self.r1_sq, self.r2_sq, theta, self.n_prime)
            .map(|c| Self { overlap: self.overlap, ..c })
    }

    pub fn with_n_prime(&self, n_prime: usize) -> Result<Self> {
        if n_prime < self.dim {
            return Err(Error::WindowViolation {
                bin: n_prime,
                dim: self.dim,
            });
        }
        Ok(Self { n_prime, ..*self })
    }

    /// Attenuates the circulating amplitude by `eta` per round trip; the
    /// missing amplitude is lost from the cavity.
    pub fn with_overlap(&self, eta: T) -> Result<Self> {
        if !(eta >= T::zero() && eta <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: eta.as_f64(),
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            overlap: eta,
            ..*self
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    pub fn r1_sq(&self) -> T {
        self.r1_sq
    }
    #[inline]
    pub fn r2_sq(&self) -> T {
        self.r2_sq
    }
    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }
    #[inline]
    pub fn n_prime(&self) -> usize {
        self.n_prime
    }
    #[inline]
    pub fn overlap(&self) -> T {
        self.overlap
    }

    /// Number of accepted D2 bins, `N' - d + 1`.
    pub fn window_len(&self) -> usize {
        self.n_prime - self.dim + 1
    }

    /// Total round-trip phase `φ = θ + π`, reduced to `[0, 2π)`.
    pub fn phi(&self) -> T {
        wrap_phase(self.theta + T::PI())
    }

    /// `|T₁||T₂|` for lossless splitters.
    pub fn transmission(&self) -> T {
        ((T::one() - self.r1_sq) * (T::one() - self.r2_sq)).sqrt()
    }

    pub fn round_trip(&self) -> RoundTripFactor<T> {
        RoundTripFactor {
            r: (self.r1_sq * self.r2_sq).sqrt() * self.overlap,
            phi: self.phi(),
        }
    }
}

fn check_reflectivity<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: v.as_f64(),
            reason: "intensity reflectivity must lie in [0, 1)",
        })
    }
}

fn wrap_phase<T: Real>(x: T) -> T {
    let tau = T::TAU();
    let w = x % tau;
    if w < T::zero() {
        w + tau
    } else {
        w
    }
}

/// Amplitude survival and phase for one circulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripFactor<T> {
    pub r: T,
    pub phi: T,
}

impl<T: Real> RoundTripFactor<T> {
    /// `(r e^{iφ})^n`.
    pub fn pow(&self, n: usize) -> Complex<T> {
        let n_t = T::from_count(n);
        Complex::from_polar(self.r.powi(n as i32), wrap_phase(self.phi * n_t))
    }
}

/// `2πk/d`, the round-trip phase projecting onto `|φ_k⟩`.
pub fn phase_for_outcome<T: Real>(dim: usize, k: MubIndex) -> Result<T> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    let k = k.check(dim)?.value();
    Ok(T::TAU() * T::from_count(k) / T::from_count(dim))
}

/// Phase-shifter setting `2πk/d − π` giving `φ = 2πk/d`.
pub fn theta_for_outcome<T: Real>(dim: usize, k: MubIndex) -> Result<T> {
    Ok(phase_for_outcome::<T>(dim, k)? - T::PI())
}

fn check_window<T: Real>(cfg: &CavityConfig<T>, n: usize) -> Result<()> {
    if n < cfg.dim {
        Err(Error::WindowViolation {
            bin: n,
            dim: cfg.dim,
        })
    } else {
        Ok(())
    }
}

fn check_input<T: Real>(cfg: &CavityConfig<T>, input: &TimeBinState<T>) -> Result<()> {
    if input.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            left: cfg.dim,
            right: input.dim(),
        });
    }
    input.require_normalized()
}

/// The unnormalized projection state `|Γ_N(φ)⟩` for a D2 click in bin `n`.
pub fn gamma_state<T: Real>(cfg: &CavityConfig<T>, n: usize) -> Result<TimeBinState<T>> {
    check_window(cfg, n)?;
    let d = cfg.dim;
    let rt = cfg.round_trip();
    let prefactor = rt.pow(n - d) * cfg.transmission();
    let mut amps = vec![Complex::new(T::zero(), T::zero()); d];
    for j in 0..d {
        amps[d - j - 1] = prefactor * rt.pow(j);
    }
    TimeBinState::unnormalized(amps)
}

/// Probability of a D2 click in accepted bin `n`, `|⟨Γ_N|ξ⟩|²`.
pub fn d2_bin_probability<T: Real>(
    cfg: &CavityConfig<T>,
    input: &TimeBinState<T>,
    n: usize,
) -> Result<T> {
    check_window(cfg, n)?;
    check_input(cfg, input)?;
    Ok(inner_product(&gamma_state(cfg, n)?, input)?.norm_sqr())
}

/// D2 detection amplitude in any bin `n >= 1`. Before bin `d` only the slots
/// that have already entered the cavity contribute; from `d` on this equals
/// `⟨Γ_N|ξ⟩`.
pub fn d2_amplitude<T: Real>(
    cfg: &CavityConfig<T>,
    input: &TimeBinState<T>,
    n: usize,
) -> Result<Complex<T>> {
    if n == 0 {
        return Err(Error::BinOutOfRange {
            bin: 0,
            dim: cfg.dim,
        });
    }
    check_input(cfg, input)?;
    let rt = cfg.round_trip();
    let back = RoundTripFactor {
        r: rt.r,
        phi: wrap_phase(-rt.phi),
    };
    let t = cfg.transmission();
    let mut acc = Complex::new(T::zero(), T::zero());
    for s in 1..=n.min(cfg.dim) {
        acc = acc + back.pow(n - s) * input.amplitudes()[s - 1] * t;
    }
    Ok(acc)
}

/// First-reflection D1 probability `|R₁|² |⟨n|ξ⟩|²`, bins `1..=d`.
pub fn d1_bin_probability<T: Real>(
    cfg: &CavityConfig<T>,
    input: &TimeBinState<T>,
    n: usize,
) -> Result<T> {
    if n == 0 || n > cfg.dim {
        return Err(Error::BinOutOfRange {
            bin: n,
            dim: cfg.dim,
        });
    }
    check_input(cfg, input)?;
    Ok(cfg.r1_sq * input.amplitudes()[n - 1].norm_sqr())
}

// Sums term(N) for N in first..=last. Beyond the first bin each term is the
// previous one times `ratio`, so once the remaining tail is negligible it is
// added in closed form and the loop stops.
fn window_sum<T: Real>(
    first: usize,
    last: usize,
    ratio: T,
    mut term: impl FnMut(usize) -> Result<T>,
) -> Result<T> {
    let mut sum = T::zero();
    for n in first..=last {
        let t = term(n)?;
        sum = sum + t;
        let remaining = last - n;
        if remaining == 0 {
            break;
        }
        if ratio < T::one() {
            let rem = T::from_count(remaining);
            let tail = t * ratio * (T::one() - ratio.powf(rem)) / (T::one() - ratio);
            if tail <= T::epsilon() * sum {
                return Ok(sum + tail);
            }
        }
    }
    Ok(sum)
}

/// `P(m|k) = Σ_{N=d}^{N'} |⟨Γ_N(2πm/d)|φ_k⟩|²` with the phase already set on
/// `cfg`, summed bin by bin.
pub fn p_m_given_k<T: Real>(cfg: &CavityConfig<T>, k: MubIndex) -> Result<T> {
    let phi_k = mub_state::<T>(cfg.dim, k)?;
    let r = cfg.round_trip().r;
    window_sum(cfg.dim, cfg.n_prime, r * r, |n| {
        Ok(inner_product(&gamma_state(cfg, n)?, &phi_k)?.norm_sqr())
    })
}

/// `P(m|k)` for every setting `m = 0..d-1`.
pub fn conditional_probabilities<T: Real>(cfg: &CavityConfig<T>, k: MubIndex) -> Result<Vec<T>> {
    k.check(cfg.dim)?;
    (0..cfg.dim)
        .map(|m| p_m_given_k(&cfg.with_setting(MubIndex(m))?, k))
        .collect()
}

/// Discrimination error `P_E = Σ_{m≠k} P(m|k) / Σ_m P(m|k)`. The phase on
/// `cfg` is ignored; every setting is evaluated.
pub fn total_error<T: Real>(cfg: &CavityConfig<T>, k: MubIndex) -> Result<T> {
    let probs = conditional_probabilities(cfg, k)?;
    let total: T = probs.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::DegenerateConfig);
    }
    let wrong: T = probs
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != k.value())
        .map(|(_, p)| *p)
        .sum();
    Ok(wrong / total)
}

/// Geometric-series reduction of the discrimination error,
/// `1 − (1+r)(1−r^d) / [d (1−r)(1+r^d)]`.
pub fn total_error_closed_form<T: Real>(r: T, dim: usize) -> Result<T> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    if !(r >= T::zero() && r < T::one()) {
        return Err(Error::Domain(r.as_f64()));
    }
    let one = T::one();
    let rd = r.powi(dim as i32);
    Ok(one - (one + r) * (one - rd) / (T::from_count(dim) * (one - r) * (one + rd)))
}

/// Value of the closed form as `r → 1⁻`.
pub fn total_error_unit_limit<T: Real>() -> T {
    T::zero()
}

/// Which D2 bins count towards the total detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum D2Window {
    /// Accepted bins `d..=N'`.
    #[default]
    Accepted,
    /// Bins `1..=N'`, including clicks before every slot has entered.
    IncludePartial,
}

/// Total D2 detection probability for `input` at the configured phase.
pub fn d2_total_probability<T: Real>(
    cfg: &CavityConfig<T>,
    input: &TimeBinState<T>,
    window: D2Window,
) -> Result<T> {
    check_input(cfg, input)?;
    let r = cfg.round_trip().r;
    let accepted = window_sum(cfg.dim, cfg.n_prime, r * r, |n| {
        d2_bin_probability(cfg, input, n)
    })?;
    match window {
        D2Window::Accepted => Ok(accepted),
        D2Window::IncludePartial => {
            let mut early = T::zero();
            for n in 1..cfg.dim {
                early = early + d2_amplitude(cfg, input, n)?.norm_sqr();
            }
            Ok(early + accepted)
        }
    }
}

/// Accepted D2 rate when the setting `m` is drawn uniformly and `|φ_k⟩` is
/// prepared, `Σ_m P(m|k) / d`.
pub fn d2_setting_averaged_probability<T: Real>(cfg: &CavityConfig<T>, k: MubIndex) -> Result<T> {
    let probs = conditional_probabilities(cfg, k)?;
    Ok(probs.into_iter().sum::<T>() / T::from_count(cfg.dim))
}

/// Fidelity of `|Γ_N⟩` with `|φ_k⟩`. Independent of `n`.
pub fn projection_fidelity<T: Real>(cfg: &CavityConfig<T>, n: usize, k: MubIndex) -> Result<T> {
    let gamma = gamma_state(cfg, n)?;
    fidelity(&gamma, &mub_state(cfg.dim, k)?)
}

/// Smallest bin cap whose residual circulating mass is below `1e-15`.
pub fn default_bin_cap<T: Real>(cfg: &CavityConfig<T>) -> usize {
    let r = cfg.round_trip().r.as_f64();
    let tail = if r <= 0.0 {
        1
    } else {
        ((1e-15f64).ln() / (2.0 * r.ln())).ceil().max(1.0) as usize
    };
    cfg.n_prime.max(cfg.dim + tail)
}

/// Probabilities of every (port, bin) outcome for one photon.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution<T> {
    dim: usize,
    n_prime: usize,
    bin_cap: usize,
    d1: Vec<T>,
    d2: Vec<T>,
    back: Vec<T>,
    residual: T,
    lost: T,
}

impl<T: Real> OutcomeDistribution<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_prime(&self) -> usize {
        self.n_prime
    }
    pub fn bin_cap(&self) -> usize {
        self.bin_cap
    }

    /// Probability of `(port, bin)`; zero for bins the port cannot see.
    pub fn probability(&self, port: Port, bin: usize) -> T {
        if bin == 0 {
            return T::zero();
        }
        let v = match port {
            Port::D1 => &self.d1,
            Port::D2 => &self.d2,
            Port::Back => &self.back,
        };
        v.get(bin - 1).copied().unwrap_or_else(T::zero)
    }

    /// Non-zero-capable outcomes in (bin, port) order.
    pub fn iter(&self) -> impl Iterator<Item = (Port, usize, T)> + '_ {
        (1..=self.bin_cap).flat_map(move |bin| {
            Port::ALL
                .into_iter()
                .filter(move |p| match p {
                    Port::D1 => bin <= self.dim,
                    Port::D2 => true,
                    Port::Back => bin > self.dim,
                })
                .map(move |p| (p, bin, self.probability(p, bin)))
        })
    }

    pub fn port_total(&self, port: Port) -> T {
        match port {
            Port::D1 => self.d1.iter().copied().sum(),
            Port::D2 => self.d2.iter().copied().sum(),
            Port::Back => self.back.iter().copied().sum(),
        }
    }

    /// Mass still circulating after `bin_cap`.
    pub fn residual(&self) -> T {
        self.residual
    }

    /// Mass removed by round-trip mode mismatch.
    pub fn lost(&self) -> T {
        self.lost
    }

    /// D2 clicks before bin `d`, which do not count as phase-basis outcomes.
    pub fn inconclusive(&self) -> T {
        self.d2[..self.dim - 1].iter().copied().sum()
    }

    /// D2 clicks in `d..=N'`.
    pub fn accepted(&self) -> T {
        self.d2[self.dim - 1..self.n_prime].iter().copied().sum()
    }

    /// D2 clicks after `N'`.
    pub fn late(&self) -> T {
        self.d2[self.n_prime..].iter().copied().sum()
    }

    pub fn total(&self) -> T {
        Port::ALL
            .into_iter()
            .map(|p| self.port_total(p))
            .sum::<T>()
            + self.residual
            + self.lost
    }
}

/// Propagates `input` through the cavity bin by bin up to `bin_cap`.
///
/// Beam splitters use the symmetric convention (transmission `t`,
/// reflection `i·ρ`), with the phase shifter contributing `e^{-iθ}` per pass.
/// The two reflection factors `i²` supply the `π` in `φ = θ + π`, and the D2
/// amplitude in bin `N >= d` is exactly `⟨Γ_N|ξ⟩`. Light leaving BS1's
/// reflection side is a single mode: bins `1..=d` are reported as D1, later
/// bins as BACK. Amplitudes meeting in the same mode and bin add coherently,
/// so with no mismatch the total mass is one for every normalized input.
pub fn full_outcome_distribution<T: Real>(
    cfg: &CavityConfig<T>,
    input: &TimeBinState<T>,
    bin_cap: usize,
) -> Result<OutcomeDistribution<T>> {
    check_input(cfg, input)?;
    if bin_cap < cfg.n_prime {
        return Err(Error::CapTooSmall {
            cap: bin_cap,
            n_prime: cfg.n_prime,
        });
    }
    let d = cfg.dim;
    let zero = Complex::new(T::zero(), T::zero());
    let t1 = (T::one() - cfg.r1_sq).sqrt();
    let t2 = (T::one() - cfg.r2_sq).sqrt();
    let i_rho1 = Complex::new(T::zero(), cfg.r1_sq.sqrt());
    let i_rho2 = Complex::new(T::zero(), cfg.r2_sq.sqrt());
    let shifter = Complex::from_polar(cfg.overlap, -cfg.theta);
    let leak = T::one() - cfg.overlap * cfg.overlap;

    let mut d1 = vec![T::zero(); d];
    let mut d2 = vec![T::zero(); bin_cap];
    let mut back = vec![T::zero(); bin_cap];
    let mut lost = T::zero();
    // Amplitude heading from BS1 towards BS2.
    let mut forward = zero;
    for bin in 1..=bin_cap {
        let returning = if bin == 1 {
            zero
        } else {
            let r = i_rho2 * forward;
            lost = lost + r.norm_sqr() * leak;
            r * shifter
        };
        let xi = if bin <= d {
            input.amplitudes()[bin - 1]
        } else {
            zero
        };
        let out = i_rho1 * xi + returning * t1;
        forward = xi * t1 + i_rho1 * returning;
        if bin <= d {
            d1[bin - 1] = out.norm_sqr();
        } else {
            back[bin - 1] = out.norm_sqr();
        }
        d2[bin - 1] = (forward * t2).norm_sqr();
    }
    let residual = (i_rho2 * forward).norm_sqr();
    Ok(OutcomeDistribution {
        dim: d,
        n_prime: cfg.n_prime,
        bin_cap,
        d1,
        d2,
        back,
        residual,
        lost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    type S = TimeBinState<f64>;

    fn cfg(d: usize, r_sq: f64, m: usize, n_prime: usize) -> CavityConfig<f64> {
        CavityConfig::symmetric(d, r_sq, MubIndex(m), n_prime).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CavityConfig::new(2, 1.0, 0.5, 0.0, 2).is_err());
        assert!(CavityConfig::new(2, 0.5, -0.1, 0.0, 2).is_err());
        assert!(CavityConfig::new(2, 0.5, 0.5, f64::NAN, 2).is_err());
        assert_eq!(
            CavityConfig::new(3, 0.5, 0.5, 0.0, 2),
            Err(Error::WindowViolation { bin: 2, dim: 3 })
        );
        assert_eq!(
            CavityConfig::<f64>::new(0, 0.5, 0.5, 0.0, 2),
            Err(Error::InvalidDimension(0))
        );
        let c = cfg(4, 0.5, 0, 4);
        assert!(c.with_overlap(1.5).is_err());
        assert!(c.with_n_prime(3).is_err());
        assert_eq!(c.window_len(), 1);
    }

    #[test]
    fn round_trip_phase() {
        let c = CavityConfig::new(4, 0.81, 0.64, 0.3, 4).unwrap();
        let rt = c.round_trip();
        assert_abs_diff_eq!(rt.r, 0.72, epsilon = 1e-15);
        assert_abs_diff_eq!(rt.phi, 0.3 + PI, epsilon = 1e-15);
        let c = CavityConfig::new(4, 0.5, 0.5, PI, 4).unwrap();
        assert_abs_diff_eq!(c.phi(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn outcome_phases() {
        assert_eq!(phase_for_outcome::<f64>(4, MubIndex(0)).unwrap(), 0.0);
        assert_abs_diff_eq!(phase_for_outcome::<f64>(4, MubIndex(2)).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(
            phase_for_outcome::<f64>(16, MubIndex(3)).unwrap(),
            3.0 * PI / 8.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(theta_for_outcome::<f64>(4, MubIndex(0)).unwrap(), -PI, epsilon = 1e-15);
        assert!(phase_for_outcome::<f64>(4, MubIndex(4)).is_err());
        let c = cfg(16, 0.5, 3, 16);
        assert_abs_diff_eq!(c.phi(), 3.0 * PI / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn gamma_without_reflection_is_last_bin() {
        let c = CavityConfig::new(3, 0.0, 0.0, 0.0, 3).unwrap();
        let g = gamma_state(&c, 3).unwrap();
        assert!(!g.is_normalized());
        assert_eq!(g.amplitudes()[2], Complex64::new(1.0, 0.0));
        assert_eq!(g.amplitudes()[0].norm(), 0.0);
        assert_eq!(g.amplitudes()[1].norm(), 0.0);
    }

    #[test]
    fn gamma_two_bins() {
        let c = cfg(2, 0.5, 0, 3);
        let g2 = gamma_state(&c, 2).unwrap();
        assert_abs_diff_eq!(g2.amplitudes()[1].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g2.amplitudes()[0].re, 0.25, epsilon = 1e-15);
        let g3 = gamma_state(&c, 3).unwrap();
        for (a, b) in g3.amplitudes().iter().zip(g2.amplitudes()) {
            assert_abs_diff_eq!((a - b * 0.5).norm(), 0.0, epsilon = 1e-15);
        }
        assert_eq!(
            gamma_state(&c, 1),
            Err(Error::WindowViolation { bin: 1, dim: 2 })
        );
    }

    #[test]
    fn d2_bins() {
        let c = cfg(2, 0.5, 0, 3);
        let phi0 = mub_state(2, MubIndex(0)).unwrap();
        assert_abs_diff_eq!(d2_bin_probability(&c, &phi0, 2).unwrap(), 0.28125, epsilon = 1e-15);

        for (d, r_sq) in [(3usize, 0.7), (5, 0.2), (8, 0.95)] {
            let c = CavityConfig::new(d, r_sq, r_sq, 0.4, d).unwrap();
            let p = d2_bin_probability(&c, &S::basis(d, 1).unwrap(), d).unwrap();
            let t_sq = (1.0 - r_sq) * (1.0 - r_sq);
            assert_abs_diff_eq!(p, t_sq * r_sq.powi(2 * (d as i32 - 1)), epsilon = 1e-15);
        }

        let c = CavityConfig::new(6, 0.0, 0.0, 1.0, 6).unwrap();
        let p = d2_bin_probability(&c, &mub_state(6, MubIndex(0)).unwrap(), 6).unwrap();
        assert_abs_diff_eq!(p, 1.0 / 6.0, epsilon = 1e-15);

        assert!(d2_bin_probability(&c, &S::basis(5, 1).unwrap(), 6).is_err());
        let raw = S::unnormalized(vec![Complex64::new(1.0, 0.0); 6]).unwrap();
        assert_eq!(d2_bin_probability(&c, &raw, 6), Err(Error::NotNormalized));
    }

    #[test]
    fn d2_amplitude_matches_projection() {
        let c = CavityConfig::new(5, 0.6, 0.8, 0.9, 12).unwrap();
        let input = S::normalized(
            (0..5)
                .map(|j| Complex64::new(j as f64 - 1.5, 0.3 * j as f64))
                .collect(),
        )
        .unwrap();
        for n in 5..12 {
            let a = d2_amplitude(&c, &input, n).unwrap().norm_sqr();
            let b = d2_bin_probability(&c, &input, n).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn d1_bins() {
        let c = CavityConfig::new(4, 0.99, 0.5, 0.0, 4).unwrap();
        let p = d1_bin_probability(&c, &S::basis(4, 3).unwrap(), 3).unwrap();
        assert_abs_diff_eq!(p, 0.99, epsilon = 1e-15);

        let c = cfg(8, 0.7, 0, 8);
        for k in 0..8 {
            let phi = mub_state(8, MubIndex(k)).unwrap();
            for n in 1..=8 {
                assert_abs_diff_eq!(d1_bin_probability(&c, &phi, n).unwrap(), 0.7 / 8.0, epsilon = 1e-15);
            }
        }

        let c = CavityConfig::new(3, 0.0, 0.5, 0.0, 3).unwrap();
        assert_eq!(d1_bin_probability(&c, &S::basis(3, 1).unwrap(), 1).unwrap(), 0.0);
        assert!(d1_bin_probability(&c, &S::basis(3, 1).unwrap(), 0).is_err());
        assert!(d1_bin_probability(&c, &S::basis(3, 1).unwrap(), 4).is_err());
    }

    #[test]
    fn conditional_probability_examples() {
        let c = cfg(2, 0.5, 0, 3);
        assert_abs_diff_eq!(p_m_given_k(&c, MubIndex(0)).unwrap(), 0.3515625, epsilon = 1e-15);
        assert_abs_diff_eq!(p_m_given_k(&c, MubIndex(1)).unwrap(), 0.0390625, epsilon = 1e-15);

        for d in [2usize, 5] {
            let c = CavityConfig::new(d, 0.0, 0.3, 0.0, d).unwrap();
            let t_sq = 0.7;
            for m in 0..d {
                for k in 0..d {
                    let p = p_m_given_k(&c.with_setting(MubIndex(m)).unwrap(), MubIndex(k)).unwrap();
                    assert_abs_diff_eq!(p, t_sq / d as f64, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn total_error_examples() {
        for n_prime in [2usize, 3, 9, 40] {
            let c = cfg(2, 0.5, 0, n_prime);
            assert_abs_diff_eq!(total_error(&c, MubIndex(0)).unwrap(), 0.1, epsilon = 1e-14);
        }
        for d in [2usize, 3, 10] {
            let c = CavityConfig::new(d, 0.0, 0.0, 0.0, d).unwrap();
            let want = (d as f64 - 1.0) / d as f64;
            assert_abs_diff_eq!(total_error(&c, MubIndex(0)).unwrap(), want, epsilon = 1e-14);
        }
        // 40-digit brute-force value from an independent mpmath evaluation.
        let c = cfg(16, 0.9, 0, 16);
        assert_abs_diff_eq!(
            total_error(&c, MubIndex(0)).unwrap(),
            0.18379127246930166,
            epsilon = 1e-12
        );
        assert!(total_error(&c, MubIndex(16)).is_err());
    }

    #[test]
    fn closed_form_examples() {
        assert_abs_diff_eq!(total_error_closed_form(0.5f64, 2).unwrap(), 0.1, epsilon = 1e-15);
        for d in [1usize, 2, 7, 64] {
            let want = (d as f64 - 1.0) / d as f64;
            assert_abs_diff_eq!(total_error_closed_form(0.0f64, d).unwrap(), want, epsilon = 1e-15);
        }
        let v = total_error_closed_form(0.999f64, 16).unwrap();
        assert!(v < 0.002);
        assert_abs_diff_eq!(v, 2.127072406661588e-5, epsilon = 1e-12);
        assert_eq!(total_error_closed_form(1.0f64, 4), Err(Error::Domain(1.0)));
        assert!(total_error_closed_form(-0.1f64, 4).is_err());
        assert_eq!(total_error_unit_limit::<f64>(), 0.0);
    }

    #[test]
    fn single_precision_closed_form_tracks_brute_force() {
        let c = CavityConfig::<f32>::symmetric(8, 0.6, MubIndex(0), 8).unwrap();
        let brute = total_error(&c, MubIndex(0)).unwrap();
        let closed = total_error_closed_form(0.6f32, 8).unwrap();
        assert!((brute - closed).abs() < 1e-5);
    }

    #[test]
    fn d2_total_examples() {
        // Delta input in the last slot: every D2 bin is accepted.
        let d = 4;
        let c = cfg(d, 0.5, 0, 2000);
        let p = d2_total_probability(&c, &S::basis(d, d).unwrap(), D2Window::Accepted).unwrap();
        assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        for j in 1..=d {
            let p = d2_total_probability(&c, &S::basis(d, j).unwrap(), D2Window::IncludePartial)
                .unwrap();
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
        // Earlier slots lose their pre-window clicks.
        let p = d2_total_probability(&c, &S::basis(d, 1).unwrap(), D2Window::Accepted).unwrap();
        assert_abs_diff_eq!(p, 0.25f64.powi(3) / 3.0, epsilon = 1e-15);

        let c = CavityConfig::new(3, 0.0, 0.0, 0.0, 3).unwrap();
        for j in 1..=3 {
            let p = d2_total_probability(&c, &S::basis(3, j).unwrap(), D2Window::IncludePartial)
                .unwrap();
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        }

        let mut prev = f64::INFINITY;
        for r_sq in [0.99, 0.999, 0.9999] {
            let c = cfg(4, r_sq, 0, 16);
            let p = d2_total_probability(&c, &mub_state(4, MubIndex(0)).unwrap(), D2Window::Accepted)
                .unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn averaged_d2_equals_mean_of_conditionals() {
        let c = cfg(2, 0.5, 0, 3);
        let p = d2_setting_averaged_probability(&c, MubIndex(0)).unwrap();
        assert_abs_diff_eq!(p, (0.3515625 + 0.0390625) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_fidelity_examples() {
        let c = CavityConfig::new(5, 0.0, 0.4, 0.0, 9).unwrap();
        assert_abs_diff_eq!(projection_fidelity(&c, 5, MubIndex(0)).unwrap(), 0.2, epsilon = 1e-15);
        let c = cfg(2, 0.5, 0, 4);
        for n in 2..=4 {
            assert_abs_diff_eq!(projection_fidelity(&c, n, MubIndex(0)).unwrap(), 0.9, epsilon = 1e-14);
        }
        let r: f64 = 0.999;
        let d = 16;
        let c = cfg(d, r, 0, d);
        let closed = ((1.0 - r.powi(16)) / (1.0 - r)).powi(2) * (1.0 - r * r)
            / (1.0 - r.powi(32))
            / d as f64;
        let f = projection_fidelity(&c, d, MubIndex(0)).unwrap();
        assert!(f > 0.9999);
        assert_abs_diff_eq!(f, closed, epsilon = 1e-12);
        assert!(projection_fidelity(&c, d - 1, MubIndex(0)).is_err());
    }

    #[test]
    fn delta_input_branching() {
        let d = 5;
        let c = cfg(d, 0.5, 2, d);
        let cap = default_bin_cap(&c);
        let dist = full_outcome_distribution(&c, &S::basis(d, d).unwrap(), cap).unwrap();
        assert_abs_diff_eq!(dist.port_total(Port::D1), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(dist.port_total(Port::D2), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dist.port_total(Port::Back), 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dist.total(), 1.0, epsilon = 1e-14);
        assert!(dist.residual() < 1e-15);
    }

    #[test]
    fn transparent_cavity_sends_everything_to_d2() {
        let c = CavityConfig::new(4, 0.0, 0.0, 0.2, 6).unwrap();
        let dist = full_outcome_distribution(&c, &S::basis(4, 3).unwrap(), 6).unwrap();
        assert_abs_diff_eq!(dist.probability(Port::D2, 3), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dist.total(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dist.inconclusive(), 1.0, epsilon = 1e-15);
        assert_eq!(dist.accepted(), 0.0);
    }

    #[test]
    fn distribution_d2_matches_projection_and_window_split() {
        let d = 4;
        let c = cfg(d, 0.8, 1, 3 * d);
        let input = mub_state(d, MubIndex(1)).unwrap();
        let dist = full_outcome_distribution(&c, &input, 5 * d).unwrap();
        for n in d..=5 * d {
            let want = d2_bin_probability(&c, &input, n).unwrap();
            assert_abs_diff_eq!(dist.probability(Port::D2, n), want, epsilon = 1e-15);
        }
        let accepted = d2_total_probability(&c, &input, D2Window::Accepted).unwrap();
        assert_abs_diff_eq!(dist.accepted(), accepted, epsilon = 1e-15);
        let wide = d2_total_probability(&c, &input, D2Window::IncludePartial).unwrap();
        assert_abs_diff_eq!(dist.inconclusive() + dist.accepted(), wide, epsilon = 1e-15);
        assert_abs_diff_eq!(
            dist.inconclusive() + dist.accepted() + dist.late(),
            dist.port_total(Port::D2),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(dist.total(), 1.0, epsilon = 1e-14);
        assert!(full_outcome_distribution(&c, &input, 3 * d - 1).is_err());
    }

    #[test]
    fn distribution_depends_only_on_setting_offset() {
        let d = 6;
        let base = cfg(d, 0.85, 0, 2 * d);
        for (m, k) in [(4usize, 1usize), (0, 5), (3, 3)] {
            let delta = (m + d - k) % d;
            let a = full_outcome_distribution(
                &base.with_setting(MubIndex(m)).unwrap(),
                &mub_state(d, MubIndex(k)).unwrap(),
                4 * d,
            )
            .unwrap();
            let b = full_outcome_distribution(
                &base.with_setting(MubIndex(delta)).unwrap(),
                &mub_state(d, MubIndex(0)).unwrap(),
                4 * d,
            )
            .unwrap();
            for ((_, _, x), (_, _, y)) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mismatch_loses_mass() {
        let c = cfg(3, 0.9, 0, 3).with_overlap(0.9).unwrap();
        let input = mub_state(3, MubIndex(0)).unwrap();
        let dist = full_outcome_distribution(&c, &input, default_bin_cap(&c)).unwrap();
        assert!(dist.lost() > 0.0);
        assert_abs_diff_eq!(dist.total(), 1.0, epsilon = 1e-13);
    }
}
