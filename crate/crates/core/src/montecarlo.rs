//! Seeded frame-by-frame sampler of detection events.
//!
//! Each frame carries one photon. Its fate is drawn from the exact outcome
//! distribution of the cavity; independently, each detector may fire a dark
//! count in every bin it is open (D1 in `1..=d`, D2 in `1..=bin_cap`). The
//! earliest click in the frame is recorded; a photon click beats a dark count
//! in the same bin.
//!
//! Trial `i` is seeded with [`trial_seed`]`(master, i)`, so a run is a pure
//! function of its inputs regardless of how trials are scheduled on threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cavity::{default_bin_cap, full_outcome_distribution, CavityConfig, OutcomeDistribution, Port};
use crate::error::Result;
use crate::imperfections::DarkCountModel;
use crate::state::{mub_state, MubIndex, TimeBinState};

/// One simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    /// Port of the recorded click, `BACK` if the photon left backwards with no
    /// click, `None` if nothing happened.
    pub port: Option<Port>,
    pub bin: Option<usize>,
    pub dark: bool,
    pub setting_m: Option<MubIndex>,
    pub prepared_k: Option<MubIndex>,
}

impl TrialRecord {
    fn outcome(&self) -> Outcome {
        Outcome {
            port: self.port,
            bin: self.bin,
            dark: self.dark,
        }
    }
}

/// Frame outcome without the experiment labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub port: Option<Port>,
    pub bin: Option<usize>,
    pub dark: bool,
}

/// Mixes a master seed and a trial index into a per-trial seed (SplitMix64).
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse-CDF sampler for one (cavity, input) pair plus dark counts.
#[derive(Debug, Clone)]
pub struct FrameSampler {
    dim: usize,
    bin_cap: usize,
    outcomes: Vec<(Port, usize)>,
    photon: Vec<f64>,
    cdf: Vec<f64>,
    residual: f64,
    p_dc: f64,
    log_survive: f64,
}

impl FrameSampler {
    pub fn new(dist: &OutcomeDistribution<f64>, dc: &DarkCountModel<f64>) -> Self {
        let mut outcomes = Vec::new();
        let mut photon = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for (port, bin, p) in dist.iter() {
            if p > 0.0 {
                acc += p;
                outcomes.push((port, bin));
                photon.push(p);
                cdf.push(acc);
            }
        }
        Self {
            dim: dist.dim(),
            bin_cap: dist.bin_cap(),
            outcomes,
            photon,
            cdf,
            residual: dist.residual() + dist.lost(),
            p_dc: dc.p_dc(),
            log_survive: (-dc.p_dc()).ln_1p(),
        }
    }

    pub fn bin_cap(&self) -> usize {
        self.bin_cap
    }

    fn dark_slots(&self) -> usize {
        self.dim + self.bin_cap
    }

    // Dark slots are ordered by bin, D1 before D2 within a bin.
    fn dark_slot(&self, j: usize) -> (Port, usize) {
        if j < 2 * self.dim {
            let port = if j % 2 == 0 { Port::D1 } else { Port::D2 };
            (port, j / 2 + 1)
        } else {
            (Port::D2, self.dim + (j - 2 * self.dim) + 1)
        }
    }

    fn first_dark<R: Rng>(&self, rng: &mut R) -> Option<(Port, usize)> {
        if self.p_dc <= 0.0 {
            return None;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u = 1.0 - rng.gen::<f64>();
        let j = (u.ln() / self.log_survive).floor();
        if j < self.dark_slots() as f64 {
            Some(self.dark_slot(j as usize))
        } else {
            None
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Outcome {
        let u = rng.gen::<f64>();
        let idx = self.cdf.partition_point(|&c| c <= u);
        let photon = self.outcomes.get(idx).copied();
        let dark = self.first_dark(rng);

        let photon_click = photon.filter(|(p, _)| *p != Port::Back);
        match (photon_click, dark) {
            (Some((_, pb)), Some((dp, db))) if db < pb => Outcome {
                port: Some(dp),
                bin: Some(db),
                dark: true,
            },
            (Some((p, b)), _) => Outcome {
                port: Some(p),
                bin: Some(b),
                dark: false,
            },
            (None, Some((dp, db))) => Outcome {
                port: Some(dp),
                bin: Some(db),
                dark: true,
            },
            (None, None) => Outcome {
                port: photon.map(|(p, _)| p),
                bin: photon.map(|(_, b)| b),
                dark: false,
            },
        }
    }

    /// Exact probability of every frame outcome the sampler can produce.
    pub fn exact_outcomes(&self) -> Vec<(Outcome, f64)> {
        let d = self.dim;
        let p = self.p_dc;
        let mut by_bin: Vec<[f64; 3]> = vec![[0.0; 3]; self.bin_cap + 1];
        for (&(port, bin), &prob) in self.outcomes.iter().zip(&self.photon) {
            by_bin[bin][port as usize] += prob;
        }
        let mut out = Vec::new();
        let mut survive = 1.0;
        let mut not_clicked = 1.0;
        for (bin, &[p1, p2, _]) in by_bin.iter().enumerate().skip(1) {
            for (port, prob) in [(Port::D1, p1), (Port::D2, p2)] {
                if prob > 0.0 {
                    out.push((
                        Outcome {
                            port: Some(port),
                            bin: Some(bin),
                            dark: false,
                        },
                        prob * survive,
                    ));
                }
            }
            not_clicked -= p1 + p2;
            if p > 0.0 {
                let mut open = survive * not_clicked.max(0.0);
                if bin <= d {
                    out.push((dark_outcome(Port::D1, bin), open * p));
                    open *= 1.0 - p;
                }
                out.push((dark_outcome(Port::D2, bin), open * p));
                survive *= if bin <= d { (1.0 - p) * (1.0 - p) } else { 1.0 - p };
            }
        }
        for (bin, probs) in by_bin.iter().enumerate().skip(d + 1) {
            let pb = probs[Port::Back as usize];
            if pb > 0.0 {
                out.push((
                    Outcome {
                        port: Some(Port::Back),
                        bin: Some(bin),
                        dark: false,
                    },
                    pb * survive,
                ));
            }
        }
        out.push((
            Outcome {
                port: None,
                bin: None,
                dark: false,
            },
            self.residual * survive,
        ));
        out
    }
}

fn dark_outcome(port: Port, bin: usize) -> Outcome {
    Outcome {
        port: Some(port),
        bin: Some(bin),
        dark: true,
    }
}

/// Draws one frame, deterministic in `seed`.
pub fn sample_frame(
    cfg: &CavityConfig<f64>,
    input: &TimeBinState<f64>,
    dc: &DarkCountModel<f64>,
    seed: u64,
) -> Result<TrialRecord> {
    let dist = full_outcome_distribution(cfg, input, default_bin_cap(cfg))?;
    let sampler = FrameSampler::new(&dist, dc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = sampler.sample(&mut rng);
    Ok(TrialRecord {
        port: o.port,
        bin: o.bin,
        dark: o.dark,
        setting_m: None,
        prepared_k: None,
    })
}

/// Trials and accepted D2 clicks for one (prepared, setting) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub trials: u64,
    pub accepted: u64,
}

/// Aggregated counts of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub master_seed: u64,
    pub n_trials: u64,
    pub dim: usize,
    pub n_prime: usize,
    pub counts: BTreeMap<Outcome, u64>,
    /// Keyed by `(prepared_k, setting_m)`; empty for fixed-setting runs.
    pub cells: BTreeMap<(usize, usize), CellCounts>,
}

impl EmpiricalStats {
    /// Clicks (photon or dark) at `(port, bin)`.
    pub fn count(&self, port: Port, bin: usize) -> u64 {
        [false, true]
            .into_iter()
            .filter_map(|dark| {
                self.counts.get(&Outcome {
                    port: Some(port),
                    bin: Some(bin),
                    dark,
                })
            })
            .sum()
    }

    pub fn port_count(&self, port: Port) -> u64 {
        self.counts
            .iter()
            .filter(|(o, _)| o.port == Some(port))
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn frequency(&self, port: Port, bin: usize) -> f64 {
        self.count(port, bin) as f64 / self.n_trials as f64
    }

    pub fn dark_counts(&self) -> u64 {
        self.counts.iter().filter(|(o, _)| o.dark).map(|(_, c)| *c).sum()
    }

    /// D2 clicks inside `d..=N'`.
    pub fn accepted(&self) -> u64 {
        self.counts
            .iter()
            .filter(|(o, _)| {
                o.port == Some(Port::D2) && o.bin.is_some_and(|b| b >= self.dim && b <= self.n_prime)
            })
            .map(|(_, c)| *c)
            .sum()
    }

    /// Fraction of frames with an accepted D2 click.
    pub fn accepted_fraction(&self) -> f64 {
        self.accepted() as f64 / self.n_trials as f64
    }

    /// `P̂(m|k)`: accepted clicks over frames with that preparation and setting.
    pub fn p_hat(&self, m: usize, k: usize) -> Option<f64> {
        self.cells
            .get(&(k, m))
            .filter(|c| c.trials > 0)
            .map(|c| c.accepted as f64 / c.trials as f64)
    }

    /// Accepted clicks with the wrong setting over all accepted clicks.
    pub fn p_e_hat(&self) -> Option<f64> {
        let (wrong, total) = self.cells.iter().fold((0u64, 0u64), |(w, t), (&(k, m), c)| {
            (w + if k != m { c.accepted } else { 0 }, t + c.accepted)
        });
        (total > 0).then(|| wrong as f64 / total as f64)
    }

    /// Accepted clicks recorded in `cells`.
    pub fn cell_accepted(&self) -> u64 {
        self.cells.values().map(|c| c.accepted).sum()
    }
}

// Flat accumulator: one slot per (port, bin, dark) plus "no click".
#[derive(Clone)]
struct Accumulator {
    bin_cap: usize,
    dim: usize,
    outcomes: Vec<u64>,
    cells: Vec<CellCounts>,
}

impl Accumulator {
    fn new(bin_cap: usize, dim: usize, with_cells: bool) -> Self {
        Self {
            bin_cap,
            dim,
            outcomes: vec![0; 6 * bin_cap + 1],
            cells: if with_cells {
                vec![CellCounts::default(); dim * dim]
            } else {
                Vec::new()
            },
        }
    }

    fn slot(&self, o: &Outcome) -> usize {
        match (o.port, o.bin) {
            (Some(p), Some(b)) => ((p as usize * self.bin_cap) + b - 1) * 2 + o.dark as usize,
            _ => 6 * self.bin_cap,
        }
    }

    fn record(&mut self, rec: &TrialRecord, n_prime: usize) {
        let slot = self.slot(&rec.outcome());
        self.outcomes[slot] += 1;
        if let (Some(k), Some(m)) = (rec.prepared_k, rec.setting_m) {
            let accepted = rec.port == Some(Port::D2)
                && rec.bin.is_some_and(|b| b >= self.dim && b <= n_prime);
            let cell = &mut self.cells[k.value() * self.dim + m.value()];
            cell.trials += 1;
            cell.accepted += accepted as u64;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.outcomes.iter_mut().zip(other.outcomes) {
            *a += b;
        }
        for (a, b) in self.cells.iter_mut().zip(other.cells) {
            a.trials += b.trials;
            a.accepted += b.accepted;
        }
        self
    }

    fn finish(self, master_seed: u64, n_trials: u64, n_prime: usize) -> EmpiricalStats {
        let mut counts = BTreeMap::new();
        for (slot, &c) in self.outcomes.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let outcome = if slot == 6 * self.bin_cap {
                Outcome {
                    port: None,
                    bin: None,
                    dark: false,
                }
            } else {
                let dark = slot % 2 == 1;
                let rest = slot / 2;
                Outcome {
                    port: Some(Port::ALL[rest / self.bin_cap]),
                    bin: Some(rest % self.bin_cap + 1),
                    dark,
                }
            };
            counts.insert(outcome, c);
        }
        let d = self.dim;
        let cells = self
            .cells
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.trials > 0)
            .map(|(i, c)| ((i / d, i % d), c))
            .collect();
        EmpiricalStats {
            master_seed,
            n_trials,
            dim: d,
            n_prime,
            counts,
            cells,
        }
    }
}

fn run_parallel<F>(n_trials: u64, proto: Accumulator, n_prime: usize, master_seed: u64, draw: F) -> EmpiricalStats
where
    F: Fn(&mut ChaCha8Rng) -> TrialRecord + Sync,
{
    let acc = (0..n_trials)
        .into_par_iter()
        .fold(
            || proto.clone(),
            |mut acc, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, i));
                acc.record(&draw(&mut rng), n_prime);
                acc
            },
        )
        .reduce(|| proto.clone(), Accumulator::merge);
    acc.finish(master_seed, n_trials, n_prime)
}

/// Runs `n_trials` frames with a fixed cavity setting and input.
pub fn run_trials(
    cfg: &CavityConfig<f64>,
    input: &TimeBinState<f64>,
    dc: &DarkCountModel<f64>,
    n_trials: u64,
    master_seed: u64,
) -> Result<EmpiricalStats> {
    let dist = full_outcome_distribution(cfg, input, default_bin_cap(cfg))?;
    let sampler = FrameSampler::new(&dist, dc);
    let proto = Accumulator::new(sampler.bin_cap(), cfg.dim(), false);
    Ok(run_parallel(n_trials, proto, cfg.n_prime(), master_seed, |rng| {
        let o = sampler.sample(rng);
        TrialRecord {
            port: o.port,
            bin: o.bin,
            dark: o.dark,
            setting_m: None,
            prepared_k: None,
        }
    }))
}

/// Which conjugate-basis state is sent in each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preparation {
    Fixed(MubIndex),
    Uniform,
}

/// Samplers for the discrimination experiment, one per setting offset.
///
/// The outcome distribution for setting `m` and input `|φ_k⟩` depends only on
/// `(m - k) mod d`, so `d` samplers cover every pair.
#[derive(Debug, Clone)]
pub struct DiscriminationSampler {
    dim: usize,
    n_prime: usize,
    by_offset: Vec<FrameSampler>,
}

impl DiscriminationSampler {
    pub fn new(cfg: &CavityConfig<f64>, dc: &DarkCountModel<f64>) -> Result<Self> {
        let d = cfg.dim();
        let phi0 = mub_state(d, MubIndex(0))?;
        let cap = default_bin_cap(cfg);
        let by_offset = (0..d)
            .map(|delta| {
                let c = cfg.with_setting(MubIndex(delta))?;
                Ok(FrameSampler::new(&full_outcome_distribution(&c, &phi0, cap)?, dc))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: d,
            n_prime: cfg.n_prime(),
            by_offset,
        })
    }

    pub fn sampler(&self, m: MubIndex, k: MubIndex) -> &FrameSampler {
        &self.by_offset[(m.value() + self.dim - k.value()) % self.dim]
    }

    /// One frame: Alice prepares `k` (or draws it), Bob draws `m` uniformly.
    pub fn draw<R: Rng>(&self, preparation: Preparation, rng: &mut R) -> TrialRecord {
        let k = match preparation {
            Preparation::Fixed(k) => k,
            Preparation::Uniform => MubIndex(rng.gen_range(0..self.dim)),
        };
        let m = MubIndex(rng.gen_range(0..self.dim));
        let o = self.sampler(m, k).sample(rng);
        TrialRecord {
            port: o.port,
            bin: o.bin,
            dark: o.dark,
            setting_m: Some(m),
            prepared_k: Some(k),
        }
    }
}

/// Simulates the discrimination experiment with uniformly drawn settings.
/// The phase on `cfg` is ignored.
pub fn run_discrimination(
    cfg: &CavityConfig<f64>,
    dc: &DarkCountModel<f64>,
    preparation: Preparation,
    n_trials: u64,
    master_seed: u64,
) -> Result<EmpiricalStats> {
    if let Preparation::Fixed(k) = preparation {
        k.check(cfg.dim())?;
    }
    let sampler = DiscriminationSampler::new(cfg, dc)?;
    let cap = sampler.by_offset[0].bin_cap();
    let proto = Accumulator::new(cap, cfg.dim(), true);
    Ok(run_parallel(n_trials, proto, sampler.n_prime, master_seed, |rng| {
        sampler.draw(preparation, rng)
    }))
}
