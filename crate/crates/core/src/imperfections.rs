//! Path mismatch and detector dark counts on top of the ideal cavity.
//!
//! Mismatch between the cavity length and the time-bin spacing is folded into
//! an amplitude overlap `eta` per round trip, which is equivalent to running
//! the ideal model at the reduced round-trip factor `r·eta`.
//!
//! Dark counts are independent Bernoulli events per detector per bin. Mixing
//! them into the discrimination error is done to first order in `p_dc`:
//!
//! ```text
//! P_E,obs = [Σ_{m≠k} P(m|k) + (d-1) W p_dc] / [Σ_m P(m|k) + d W p_dc]
//! ```
//!
//! with `W = N' - d + 1` accepted bins and the setting `m` drawn uniformly.

use crate::cavity::{conditional_probabilities, total_error, CavityConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::state::MubIndex;

/// Per-round-trip mode overlap, 1 for perfect alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchModel<T> {
    eta: T,
}

impl<T: Real> MismatchModel<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta >= T::zero() && eta <= T::one() {
            Ok(Self { eta })
        } else {
            Err(Error::InvalidParameter {
                name: "eta",
                value: eta.as_f64(),
                reason: "overlap must lie in [0, 1]",
            })
        }
    }

    pub fn aligned() -> Self {
        Self { eta: T::one() }
    }

    #[inline]
    pub fn eta(&self) -> T {
        self.eta
    }

    /// The cavity with this mismatch applied.
    pub fn apply(&self, cfg: &CavityConfig<T>) -> Result<CavityConfig<T>> {
        cfg.with_overlap(self.eta)
    }
}

/// Dark-count probability per detector per time bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkCountModel<T> {
    p_dc: T,
}

impl<T: Real> DarkCountModel<T> {
    pub fn new(p_dc: T) -> Result<Self> {
        if p_dc >= T::zero() && p_dc < T::one() {
            Ok(Self { p_dc })
        } else {
            Err(Error::InvalidParameter {
                name: "p_dc",
                value: p_dc.as_f64(),
                reason: "dark-count probability must lie in [0, 1)",
            })
        }
    }

    pub fn none() -> Self {
        Self { p_dc: T::zero() }
    }

    #[inline]
    pub fn p_dc(&self) -> T {
        self.p_dc
    }
}

/// Effective round-trip factor `r' = r·eta`.
pub fn effective_round_trip<T: Real>(r: T, mm: &MismatchModel<T>) -> Result<T> {
    if !(r >= T::zero() && r < T::one()) {
        return Err(Error::Domain(r.as_f64()));
    }
    Ok(r * mm.eta)
}

/// Actual round-trip factor needed to reach `target_r_eff` under `mm`.
pub fn compensating_reflectivity<T: Real>(target_r_eff: T, mm: &MismatchModel<T>) -> Result<T> {
    if !(target_r_eff >= T::zero()) {
        return Err(Error::Domain(target_r_eff.as_f64()));
    }
    if target_r_eff >= mm.eta {
        return Err(Error::UnreachableTarget {
            target: target_r_eff.as_f64(),
            eta: mm.eta.as_f64(),
        });
    }
    Ok(target_r_eff / mm.eta)
}

/// Discrimination error of the misaligned cavity.
pub fn error_with_mismatch<T: Real>(
    cfg: &CavityConfig<T>,
    mm: &MismatchModel<T>,
    k: MubIndex,
) -> Result<T> {
    total_error(&mm.apply(cfg)?, k)
}

fn mix_dark_counts<T: Real>(probs: &[T], k: usize, w: usize, p_dc: T) -> Result<T> {
    let d = T::from_count(probs.len());
    let w = T::from_count(w);
    let total: T = probs.iter().copied().sum();
    let wrong = total - probs[k];
    let dark = w * p_dc;
    let denom = total + d * dark;
    if denom <= T::zero() {
        return Err(Error::DegenerateConfig);
    }
    Ok((wrong + (d - T::one()) * dark) / denom)
}

/// First-order discrimination error with dark counts, prepared state `|φ_0⟩`.
pub fn observed_error_with_dark_counts<T: Real>(
    cfg: &CavityConfig<T>,
    dc: &DarkCountModel<T>,
) -> Result<T> {
    let probs = conditional_probabilities(cfg, MubIndex(0))?;
    mix_dark_counts(&probs, 0, cfg.window_len(), dc.p_dc)
}

/// One row of a cutoff scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint<T> {
    pub n_prime: usize,
    pub observed_error: T,
    /// Accepted events per frame, `Σ_m P(m|k)/d + W p_dc`.
    pub accepted_probability: T,
}

/// Observed error and accepted rate for each cutoff `N'`.
pub fn cutoff_tradeoff_scan<T: Real>(
    cfg: &CavityConfig<T>,
    dc: &DarkCountModel<T>,
    n_prime_values: &[usize],
) -> Result<Vec<TradeoffPoint<T>>> {
    n_prime_values
        .iter()
        .map(|&n_prime| {
            let c = cfg.with_n_prime(n_prime)?;
            let probs = conditional_probabilities(&c, MubIndex(0))?;
            let w = c.window_len();
            let signal = probs.iter().copied().sum::<T>() / T::from_count(c.dim());
            Ok(TradeoffPoint {
                n_prime,
                observed_error: mix_dark_counts(&probs, 0, w, dc.p_dc)?,
                accepted_probability: signal + T::from_count(w) * dc.p_dc,
            })
        })
        .collect()
}
