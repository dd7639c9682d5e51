//! High- and low-SNR behaviour.
//!
//! High SNR: the SNR is `ρ = 1/σ²` (unit power budgets), uncertainty radii
//! may shrink with `ρ` according to an [`ErrorScalingLaw`], and the maximum
//! sum rate of a beamforming strategy is tracked over an SNR grid; its slope
//! against `log₂ ρ` estimates the multiplexing gain.
//!
//! Low SNR: with unit noise and SNR `ρ`, link `ℓ` has capacity
//! `C(ρ) = log₂(1 + ρx²_ℓℓ / (1 + ρΣ_k x²_kℓ))`, whose derivatives at zero (in
//! nats) are `Ċ(0) = x²_ℓℓ` and `C̈(0) = −x²_ℓℓ(x²_ℓℓ + 2Σ_k x²_kℓ)`. They give
//! the minimum energy per bit `ln 2 / Ċ(0)` and the wideband slope
//! `2Ċ(0)² / −C̈(0)`. Bandwidth is normalised to one.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeamformerSet, Scenario};
use crate::pareto::{filtered_product, prefilter_candidates, sweep_candidates, CandidateTable, LambdaGrid};
use crate::robust_design::{robust_mrt, zero_forcing};
use crate::worst_case::{gain_report, rates_from_report, GainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Constant,
    InverseSqrtSnr,
    InverseCbrtSnr,
    CustomExponent,
}

/// `ε(ρ) = a·ρ^{−exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorScalingLaw {
    pub kind: LawKind,
    pub coefficient: f64,
    pub exponent: f64,
}

impl ErrorScalingLaw {
    fn with(kind: LawKind, coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient >= 0.0) {
            return Err(Error::param(format!("scaling coefficient must be finite and nonnegative, got {coefficient}")));
        }
        if !exponent.is_finite() {
            return Err(Error::param("scaling exponent must be finite"));
        }
        Ok(Self {
            kind,
            coefficient,
            exponent,
        })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::with(LawKind::Constant, a, 0.0)
    }

    pub fn inverse_sqrt_snr(a: f64) -> Result<Self> {
        Self::with(LawKind::InverseSqrtSnr, a, 0.5)
    }

    pub fn inverse_cbrt_snr(a: f64) -> Result<Self> {
        Self::with(LawKind::InverseCbrtSnr, a, 1.0 / 3.0)
    }

    pub fn custom(a: f64, exponent: f64) -> Result<Self> {
        Self::with(LawKind::CustomExponent, a, exponent)
    }

    pub fn radius_at(&self, rho: f64) -> f64 {
        if self.exponent == 0.0 {
            self.coefficient
        } else {
            self.coefficient * rho.powf(-self.exponent)
        }
    }
}

/// The same law for every transmitter/receiver pair.
pub fn uniform_laws(k_links: usize, law: ErrorScalingLaw) -> Vec<Vec<ErrorScalingLaw>> {
    vec![vec![law; k_links]; k_links]
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `s` at SNR `ρ`: noise power `1/ρ` and radii from `laws`.
pub fn scenario_at_snr(s: &Scenario, laws: &[Vec<ErrorScalingLaw>], rho: f64) -> Result<Scenario> {
    let k_links = s.num_links();
    if laws.len() != k_links || laws.iter().any(|r| r.len() != k_links) {
        return Err(Error::param(format!("scaling laws must be {k_links}x{k_links}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param(format!("SNR must be finite and positive, got {rho}")));
    }
    let radii: Vec<Vec<f64>> = laws.iter().map(|r| r.iter().map(|l| l.radius_at(rho)).collect()).collect();
    s.with_noise_power(1.0 / rho)?.with_radii(&radii)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Strategy {
    /// Best sum over all candidate tuples of the λ grid.
    RobustParetoGrid { step: f64 },
    ZeroForcing,
    /// The single best link with robust MRT, all others silent.
    SingleUserMrt,
    /// Every link performs robust MRT.
    JointMrt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumRatePoint {
    pub snr_db: f64,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    /// Links transmitting with power above `1e-9·P_k`.
    pub active_links: usize,
    /// Grid points whose cone program failed (robust grid only).
    pub failures: usize,
}

fn active_links(s: &Scenario, b: &BeamformerSet) -> usize {
    b.w.iter()
        .enumerate()
        .filter(|(k, w)| w.norm_squared() > 1e-9 * s.link(*k).power_budget)
        .count()
}

fn point(snr_db: f64, s: &Scenario, b: &BeamformerSet, failures: usize) -> Result<SumRatePoint> {
    let report = gain_report(s, b)?;
    let rates = rates_from_report(&report, s.noise_power());
    Ok(SumRatePoint {
        snr_db,
        sum_rate: rates.iter().sum(),
        rates,
        active_links: active_links(s, b),
        failures,
    })
}

/// Tuple of `table` with the largest sum rate (earliest in product order on
/// ties) and its beamformers.
pub fn max_sum_rate_tuple(s: &Scenario, table: &CandidateTable) -> BeamformerSet {
    let per = &table.per_transmitter;
    let kept: Vec<Vec<usize>> = per.iter().enumerate().map(|(k, c)| prefilter_candidates(k, c)).collect();
    let noise = s.noise_power();
    // One-dimensional filtering keeps exactly the first maximiser.
    let best = filtered_product(&kept, |choice| {
        vec![crate::pareto::tuple_rates(per, choice, noise).iter().sum()]
    });
    let (choice, _) = best.into_iter().next().expect("nonempty candidate sets");
    BeamformerSet::new(choice.iter().enumerate().map(|(k, &i)| per[k][i].w.clone()).collect())
}

/// Sum rate of `strategy` at every SNR of `snr_grid_db`.
pub fn sum_rate_sweep(
    s: &Scenario,
    laws: &[Vec<ErrorScalingLaw>],
    snr_grid_db: &[f64],
    strategy: Strategy,
) -> Result<Vec<SumRatePoint>> {
    if snr_grid_db.is_empty() {
        return Err(Error::param("SNR grid is empty"));
    }
    let scenarios: Vec<Scenario> = snr_grid_db
        .iter()
        .map(|&db| scenario_at_snr(s, laws, db_to_linear(db)))
        .collect::<Result<_>>()?;
    match strategy {
        Strategy::RobustParetoGrid { step } => {
            let grid = LambdaGrid::new(step)?;
            // Candidates depend on the radii only, so equal radii share a sweep.
            let mut cache: Option<(Vec<Vec<f64>>, CandidateTable)> = None;
            let mut out = Vec::with_capacity(scenarios.len());
            for (sc, &db) in scenarios.iter().zip(snr_grid_db) {
                let radii = sc.radii();
                let table = match cache.take() {
                    Some((r, t)) if r == radii => t,
                    _ => sweep_candidates(sc, &grid)?,
                };
                let b = max_sum_rate_tuple(sc, &table);
                out.push(point(db, sc, &b, table.failures.len())?);
                cache = Some((radii, table));
            }
            Ok(out)
        }
        _ => scenarios
            .par_iter()
            .zip(snr_grid_db)
            .map(|(sc, &db)| {
                let b = match strategy {
                    Strategy::ZeroForcing => {
                        BeamformerSet::new((0..sc.num_links()).map(|k| zero_forcing(sc, k)).collect::<Result<_>>()?)
                    }
                    Strategy::JointMrt => {
                        BeamformerSet::new((0..sc.num_links()).map(|k| robust_mrt(sc, k)).collect::<Result<_>>()?)
                    }
                    Strategy::SingleUserMrt => best_single_user(sc)?,
                    Strategy::RobustParetoGrid { .. } => unreachable!(),
                };
                point(db, sc, &b, 0)
            })
            .collect(),
    }
}

fn best_single_user(s: &Scenario) -> Result<BeamformerSet> {
    let mut best: Option<(f64, BeamformerSet)> = None;
    for k in 0..s.num_links() {
        let mut b = BeamformerSet::zeros(s);
        b.w[k] = robust_mrt(s, k)?;
        let sum: f64 = rates_from_report(&gain_report(s, &b)?, s.noise_power()).iter().sum();
        if best.as_ref().is_none_or(|(v, _)| sum > *v) {
            best = Some((sum, b));
        }
    }
    Ok(best.expect("K ≥ 1").1)
}

/// Least-squares slope of sum rate against `log₂ ρ` over the points with
/// `window_db.0 ≤ snr_db ≤ window_db.1`.
pub fn high_snr_slope_estimate(sweep: &[SumRatePoint], window_db: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = sweep
        .iter()
        .filter(|p| p.snr_db >= window_db.0 - 1e-9 && p.snr_db <= window_db.1 + 1e-9)
        .map(|p| (p.snr_db * std::f64::consts::LOG2_10 / 10.0, p.sum_rate))
        .collect();
    if pts.len() < 2 {
        return Err(Error::param(format!(
            "slope window [{}, {}] dB holds {} points, need at least 2",
            window_db.0,
            window_db.1,
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("slope window contains a single SNR value"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// The top 10 dB of the sweep.
pub fn default_slope_window(sweep: &[SumRatePoint]) -> (f64, f64) {
    let hi = sweep.iter().map(|p| p.snr_db).fold(f64::NEG_INFINITY, f64::max);
    (hi - 10.0, hi)
}

/// Largest `m` such that the `m`-th largest antenna count is at least `m`.
pub fn multiplexing_gain(antennas: &[usize]) -> usize {
    let mut sorted = antennas.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    for (i, &n) in sorted.iter().enumerate() {
        if n < i + 1 {
            return i;
        }
    }
    sorted.len()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowSnrMetrics {
    /// Minimum `Eb/N0` per link, linear; `+∞` for a link with zero gain.
    pub ebno_min: Vec<f64>,
    /// Wideband slope per link in bits/s/Hz per 3 dB.
    pub wideband_slope: Vec<f64>,
}

/// `(Ċ(0), C̈(0))` of link `l` in nats.
pub fn capacity_derivatives(report: &GainReport, l: usize) -> (f64, f64) {
    let x2 = report.intended_gain[l];
    let i = report.total_interference(l);
    (x2, -x2 * (x2 + 2.0 * i))
}

/// Capacity of link `l` in bits at SNR `rho` (unit noise).
pub fn link_capacity(report: &GainReport, l: usize, rho: f64) -> f64 {
    let x2 = report.intended_gain[l];
    let i = report.total_interference(l);
    (rho * x2 / (1.0 + rho * i)).ln_1p() / LN_2
}

pub fn metrics_from_report(report: &GainReport) -> LowSnrMetrics {
    let k_links = report.intended_gain.len();
    let mut ebno_min = Vec::with_capacity(k_links);
    let mut wideband_slope = Vec::with_capacity(k_links);
    for l in 0..k_links {
        let x2 = report.intended_gain[l];
        if x2 > 0.0 {
            ebno_min.push(LN_2 / x2);
            wideband_slope.push(2.0 * x2 / (x2 + 2.0 * report.total_interference(l)));
        } else {
            ebno_min.push(f64::INFINITY);
            wideband_slope.push(0.0);
        }
    }
    LowSnrMetrics {
        ebno_min,
        wideband_slope,
    }
}

pub fn low_snr_metrics(s: &Scenario, b: &BeamformerSet) -> Result<LowSnrMetrics> {
    Ok(metrics_from_report(&gain_report(s, b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    pub ebno: f64,
    /// bits/s/Hz.
    pub efficiency: f64,
    /// The SNR solving `Eb/N0 · C(ρ) = ρ` (zero when the efficiency is zero).
    pub snr: f64,
    /// `Eb/N0` lies below the link's minimum; no rate is achievable.
    pub below_minimum: bool,
}

/// Spectral efficiency of link `link` versus `Eb/N0` (linear values), found
/// by bisection of `ρ / C(ρ) = Eb/N0` to relative tolerance `1e-9` in `ρ`.
pub fn spectral_efficiency_curve(
    s: &Scenario,
    b: &BeamformerSet,
    link: usize,
    ebno_grid: &[f64],
) -> Result<Vec<SpectralPoint>> {
    if link >= s.num_links() {
        return Err(Error::param(format!("link {link} out of range")));
    }
    let report = gain_report(s, b)?;
    let ebno_min = metrics_from_report(&report).ebno_min[link];
    Ok(ebno_grid
        .iter()
        .map(|&ebno| solve_efficiency(&report, link, ebno, ebno_min))
        .collect())
}

fn solve_efficiency(report: &GainReport, link: usize, ebno: f64, ebno_min: f64) -> SpectralPoint {
    let zero = |below| SpectralPoint {
        ebno,
        efficiency: 0.0,
        snr: 0.0,
        below_minimum: below,
    };
    if !ebno_min.is_finite() || !(ebno >= ebno_min) {
        return zero(true);
    }
    let c = |rho: f64| link_capacity(report, link, rho);
    let g = |rho: f64| rho / c(rho);
    let mut lo = 1e-12;
    if g(lo) >= ebno {
        return zero(false);
    }
    let mut hi = 1.0;
    while g(hi) < ebno {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-9 * lo {
        let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if g(mid) < ebno {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    SpectralPoint {
        ebno,
        efficiency: c(rho),
        snr: rho,
        below_minimum: false,
    }
}

/// Per-link minimum `Eb/N0` over the efficient beamformers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EbnoRegion {
    /// `ebno_min` of every candidate, per link (the value depends only on the
    /// link's own beamformer, so the region is the product of these sets).
    pub per_link: Vec<Vec<f64>>,
    /// Lower-left boundary: the componentwise minimum tuple.
    pub boundary: Vec<f64>,
    /// The tuple achieved by joint robust MRT.
    pub joint_mrt: Vec<f64>,
}

pub fn ebno_region_sweep(s: &Scenario, grid_step: f64) -> Result<EbnoRegion> {
    let table = sweep_candidates(s, &LambdaGrid::new(grid_step)?)?;
    ebno_region_from_table(s, &table)
}

pub fn ebno_region_from_table(s: &Scenario, table: &CandidateTable) -> Result<EbnoRegion> {
    let per_link: Vec<Vec<f64>> = table
        .per_transmitter
        .iter()
        .enumerate()
        .map(|(k, c)| c.iter().map(|c| ebno_from_amplitude(c.amplitudes[k])).collect())
        .collect();
    let joint = BeamformerSet::new((0..s.num_links()).map(|k| robust_mrt(s, k)).collect::<Result<_>>()?);
    let joint_mrt = low_snr_metrics(s, &joint)?.ebno_min;
    let boundary = per_link
        .iter()
        .zip(&joint_mrt)
        .map(|(vals, &j)| vals.iter().copied().fold(j, f64::min))
        .collect();
    Ok(EbnoRegion {
        per_link,
        boundary,
        joint_mrt,
    })
}

fn ebno_from_amplitude(x: f64) -> f64 {
    if x > 0.0 {
        LN_2 / (x * x)
    } else {
        f64::INFINITY
    }
}

/// Jointly achievable wideband-slope tuples over the candidate product.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRegion {
    /// Non-dominated slope tuples (upper-right boundary of the scatter).
    pub boundary: Vec<Vec<f64>>,
    pub joint_mrt: Vec<f64>,
    /// Componentwise extremes over the whole scatter.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn slope_region_sweep(s: &Scenario, grid_step: f64) -> Result<SlopeRegion> {
    let table = sweep_candidates(s, &LambdaGrid::new(grid_step)?)?;
    slope_region_from_table(s, &table)
}

pub fn slope_region_from_table(s: &Scenario, table: &CandidateTable) -> Result<SlopeRegion> {
    let per = &table.per_transmitter;
    let k_links = s.num_links();
    let slopes = |choice: &[usize]| -> Vec<f64> {
        (0..k_links)
            .map(|l| {
                let x2 = per[l][choice[l]].amplitudes[l].powi(2);
                let i: f64 = (0..k_links)
                    .filter(|&k| k != l)
                    .map(|k| per[k][choice[k]].amplitudes[l].powi(2))
                    .sum();
                if x2 > 0.0 {
                    2.0 * x2 / (x2 + 2.0 * i)
                } else {
                    0.0
                }
            })
            .collect()
    };
    // Extremes over the full product (the boundary uses the prefiltered one).
    let all: Vec<Vec<usize>> = per.iter().map(|c| (0..c.len()).collect()).collect();
    let lo_hi: Vec<(f64, f64)> = {
        let sizes: Vec<usize> = all.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        (0..total)
            .into_par_iter()
            .map(|mut idx| {
                let mut choice = vec![0; k_links];
                for (slot, &n) in choice.iter_mut().zip(&sizes).rev() {
                    *slot = idx % n;
                    idx /= n;
                }
                slopes(&choice).into_iter().map(|v| (v, v)).collect::<Vec<_>>()
            })
            .reduce(
                || vec![(f64::INFINITY, f64::NEG_INFINITY); k_links],
                |a, b| a.iter().zip(&b).map(|(x, y)| (x.0.min(y.0), x.1.max(y.1))).collect(),
            )
    };
    let kept: Vec<Vec<usize>> = per.iter().enumerate().map(|(k, c)| prefilter_candidates(k, c)).collect();
    let boundary = filtered_product(&kept, slopes).into_iter().map(|(_, v)| v).collect();
    let joint = BeamformerSet::new((0..k_links).map(|k| robust_mrt(s, k)).collect::<Result<_>>()?);
    Ok(SlopeRegion {
        boundary,
        joint_mrt: low_snr_metrics(s, &joint)?.wideband_slope,
        min: lo_hi.iter().map(|p| p.0).collect(),
        max: lo_hi.iter().map(|p| p.1).collect(),
    })
}
