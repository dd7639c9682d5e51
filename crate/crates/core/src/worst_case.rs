//! Closed-form worst-case gains over ellipsoidal channel errors.
//!
//! For an estimate `ĥ`, region `{A δ : ‖δ‖ ≤ ε}` and beamformer `w`, the true
//! channel `h = ĥ + A δ` gives
//!
//! ```text
//! min |hᴴw| = ( |ĥᴴw| − ε‖Aᴴw‖ )₊      (intended link)
//! max |hᴴw| =   |ĥᴴw| + ε‖Aᴴw‖         (interference link)
//! ```
//!
//! Errors on different channels are independent, so all worst cases can
//! occur at once and the worst-case rate of link `ℓ` is
//! `log₂(1 + x²_ℓℓ / (σ² + Σ_{k≠ℓ} x²_kℓ))`.

use crate::error::{Error, Result};
use crate::model::{BeamformerSet, Ellipsoid, Scenario};
use crate::numerics::{herm_inner, phase, CVector, C64};

fn check_dims(estimate: &CVector, unc: &Ellipsoid, w: &CVector) -> Result<()> {
    if estimate.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "estimate vs beamformer",
            expected: estimate.len(),
            found: w.len(),
        });
    }
    if unc.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "ellipsoid vs beamformer",
            expected: unc.dim(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `( |ĥᴴw|, ‖Aᴴw‖ )`.
fn components(estimate: &CVector, unc: &Ellipsoid, w: &CVector) -> Result<(C64, f64)> {
    check_dims(estimate, unc, w)?;
    let inner = herm_inner(estimate, w)?;
    let spread = unc.shape().ad_mul(w).norm();
    Ok((inner, spread))
}

/// `( |ĥᴴw| − ε‖Aᴴw‖ )₊`.
pub fn worst_intended_amplitude(estimate: &CVector, unc: &Ellipsoid, w: &CVector) -> Result<f64> {
    let (inner, spread) = components(estimate, unc, w)?;
    Ok((inner.norm() - unc.radius() * spread).max(0.0))
}

/// `|ĥᴴw| + ε‖Aᴴw‖`.
pub fn worst_interference_amplitude(estimate: &CVector, unc: &Ellipsoid, w: &CVector) -> Result<f64> {
    let (inner, spread) = components(estimate, unc, w)?;
    Ok(inner.norm() + unc.radius() * spread)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Minimize,
    Maximize,
}

/// Error vector `δ` (with `h = ĥ + A δ`, `‖δ‖ ≤ ε`) attaining the worst case.
///
/// The direction is `Aᴴw/‖Aᴴw‖` rotated so that `δᴴAᴴw` is phase-aligned
/// with `ĥᴴw`: `δ = ±r·(Aᴴw/‖Aᴴw‖)·e^{−j∠(ĥᴴw)}`. For [`Extremum::Maximize`]
/// `r = ε` with the `+` sign. For [`Extremum::Minimize`] the sign is `−` and
/// `r = min(ε, |ĥᴴw|/‖Aᴴw‖)`, so the clamped value zero is hit exactly when
/// the uncertainty is large enough to cancel the estimate. Returns the zero
/// vector when `Aᴴw = 0`.
pub fn extremal_error_vector(
    estimate: &CVector,
    unc: &Ellipsoid,
    w: &CVector,
    mode: Extremum,
) -> Result<CVector> {
    let (inner, _) = components(estimate, unc, w)?;
    let direction = unc.shape().ad_mul(w);
    let spread = direction.norm();
    if spread == 0.0 {
        return Ok(CVector::zeros(w.len()));
    }
    let rotation = C64::from_polar(1.0, -phase(inner));
    let radius = match mode {
        Extremum::Maximize => unc.radius(),
        Extremum::Minimize => -unc.radius().min(inner.norm() / spread),
    };
    Ok(direction.map(|z| z * rotation * (radius / spread)))
}

/// Squared worst-case gains for every transmitter/receiver pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    /// `x²_ℓℓ`.
    pub intended_gain: Vec<f64>,
    /// `x²_kℓ` indexed `[k][ℓ]`; the diagonal is zero.
    pub interference_gain: Vec<Vec<f64>>,
}

impl GainReport {
    /// `Σ_{k≠ℓ} x²_kℓ`, summed in transmitter order.
    pub fn total_interference(&self, l: usize) -> f64 {
        self.interference_gain
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != l)
            .map(|(_, row)| row[l])
            .sum()
    }
}

/// Worst-case amplitudes produced by one transmitter's beamformer:
/// entry `k` is the intended amplitude, entry `ℓ ≠ k` the interference one.
pub fn transmitter_amplitudes(s: &Scenario, k: usize, w: &CVector) -> Result<Vec<f64>> {
    (0..s.num_links())
        .map(|l| {
            if l == k {
                worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), w)
            } else {
                worst_interference_amplitude(s.estimate(k, l), s.ellipsoid(k, l), w)
            }
        })
        .collect()
}

pub fn gain_report(s: &Scenario, b: &BeamformerSet) -> Result<GainReport> {
    b.check(s)?;
    let k_links = s.num_links();
    let mut intended_gain = vec![0.0; k_links];
    let mut interference_gain = vec![vec![0.0; k_links]; k_links];
    for (k, w) in b.w.iter().enumerate() {
        let amps = transmitter_amplitudes(s, k, w)?;
        for (l, a) in amps.into_iter().enumerate() {
            if l == k {
                intended_gain[k] = a * a;
            } else {
                interference_gain[k][l] = a * a;
            }
        }
    }
    Ok(GainReport {
        intended_gain,
        interference_gain,
    })
}

/// `log₂(1 + signal / (noise + interference))`.
#[inline]
pub fn rate_from_gains(signal: f64, interference: f64, noise_power: f64) -> f64 {
    (signal / (noise_power + interference)).ln_1p() / std::f64::consts::LN_2
}

pub fn rates_from_report(report: &GainReport, noise_power: f64) -> Vec<f64> {
    (0..report.intended_gain.len())
        .map(|l| rate_from_gains(report.intended_gain[l], report.total_interference(l), noise_power))
        .collect()
}

/// Worst-case achievable rate of every link, in bits per channel use.
pub fn worst_case_rates(s: &Scenario, b: &BeamformerSet) -> Result<Vec<f64>> {
    let report = gain_report(s, b)?;
    Ok(rates_from_report(&report, s.noise_power()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, GaussianStream, ScenarioSpec};

    fn random_ellipsoid(g: &mut GaussianStream, n: usize, radius: f64) -> Ellipsoid {
        let raw = g.complex_gaussian_matrix(n);
        let sigma = crate::numerics::largest_singular_value(&raw).unwrap();
        Ellipsoid::new(raw.unscale(sigma), radius).unwrap()
    }

    /// Amplitude `|(ĥ + A δ)ᴴ w|`, written out without the closed forms.
    fn perturbed_amplitude(h: &CVector, unc: &Ellipsoid, delta: &CVector, w: &CVector) -> f64 {
        let true_h = h + unc.shape() * delta;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..w.len() {
            acc += true_h[i].conj() * w[i];
        }
        acc.norm()
    }

    #[test]
    fn zero_radius_and_zero_beamformer() {
        let mut g = GaussianStream::new(1);
        let h = g.complex_gaussian_vector(3);
        let w = g.complex_gaussian_vector(3);
        let e = random_ellipsoid(&mut g, 3, 0.0);
        let exact = h.dotc(&w).norm();
        assert_eq!(worst_intended_amplitude(&h, &e, &w).unwrap(), exact);
        assert_eq!(worst_interference_amplitude(&h, &e, &w).unwrap(), exact);

        let e = random_ellipsoid(&mut g, 3, 0.7);
        let zero = CVector::zeros(3);
        assert_eq!(worst_intended_amplitude(&h, &e, &zero).unwrap(), 0.0);
        assert_eq!(worst_interference_amplitude(&h, &e, &zero).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = CVector::zeros(3);
        let w = CVector::zeros(2);
        let e = Ellipsoid::spherical(3, 0.1).unwrap();
        assert!(matches!(
            worst_intended_amplitude(&h, &e, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sampling_oracle_brackets_closed_forms() {
        let mut g = GaussianStream::new(2024);
        for _ in 0..3 {
            let n = 3;
            let h = g.complex_gaussian_vector(n);
            let w = g.complex_gaussian_vector(n).unscale(2.0);
            let e = random_ellipsoid(&mut g, n, 0.4);
            let lo = worst_intended_amplitude(&h, &e, &w).unwrap();
            let hi = worst_interference_amplitude(&h, &e, &w).unwrap();
            let (mut smin, mut smax) = (f64::INFINITY, 0.0f64);
            for _ in 0..100_000 {
                let delta = g.unit_vector(n).scale(e.radius());
                let a = perturbed_amplitude(&h, &e, &delta, &w);
                smin = smin.min(a);
                smax = smax.max(a);
            }
            for mode in [Extremum::Minimize, Extremum::Maximize] {
                let delta = extremal_error_vector(&h, &e, &w, mode).unwrap();
                let a = perturbed_amplitude(&h, &e, &delta, &w);
                smin = smin.min(a);
                smax = smax.max(a);
            }
            assert!(smin >= lo - 1e-12 && smin - lo < 1e-3, "min {smin} vs {lo}");
            assert!(smax <= hi + 1e-12 && hi - smax < 1e-3, "max {smax} vs {hi}");
        }
    }

    #[test]
    fn maximizing_error_for_real_sphere_case() {
        let h = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0)]);
        let w = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.8, 0.0)]);
        let e = Ellipsoid::spherical(2, 0.3).unwrap();
        let delta = extremal_error_vector(&h, &e, &w, Extremum::Maximize).unwrap();
        let expected = w.scale(0.3 / w.norm());
        assert!((delta - expected).norm() < 1e-15);
    }

    #[test]
    fn extremal_vectors_attain_closed_forms() {
        let mut g = GaussianStream::new(77);
        for _ in 0..50 {
            let h = g.complex_gaussian_vector(4);
            let w = g.complex_gaussian_vector(4);
            let e = random_ellipsoid(&mut g, 4, 0.3);
            let lo = worst_intended_amplitude(&h, &e, &w).unwrap();
            let hi = worst_interference_amplitude(&h, &e, &w).unwrap();
            let dmin = extremal_error_vector(&h, &e, &w, Extremum::Minimize).unwrap();
            let dmax = extremal_error_vector(&h, &e, &w, Extremum::Maximize).unwrap();
            assert!(dmin.norm() <= e.radius() * (1.0 + 1e-12));
            assert!((dmax.norm() - e.radius()).abs() < 1e-12);
            assert!((perturbed_amplitude(&h, &e, &dmin, &w) - lo).abs() < 1e-10);
            assert!((perturbed_amplitude(&h, &e, &dmax, &w) - hi).abs() < 1e-10);
        }
    }

    #[test]
    fn large_uncertainty_cancels_intended_signal() {
        let mut g = GaussianStream::new(8);
        let h = g.complex_gaussian_vector(3).unscale(10.0);
        let w = g.complex_gaussian_vector(3);
        let e = Ellipsoid::spherical(3, 2.0).unwrap();
        assert!(h.dotc(&w).norm() < e.radius() * w.norm());
        assert_eq!(worst_intended_amplitude(&h, &e, &w).unwrap(), 0.0);

        // The full-radius minimiser overshoots; its negative scaling hits zero.
        let delta = extremal_error_vector(&h, &e, &w, Extremum::Minimize).unwrap();
        assert!(delta.norm() <= e.radius());
        assert!(perturbed_amplitude(&h, &e, &delta, &w) < 1e-12);
    }

    #[test]
    fn homogeneity_and_monotonicity_in_radius() {
        let mut g = GaussianStream::new(9);
        let h = g.complex_gaussian_vector(3);
        let w = g.complex_gaussian_vector(3);
        let e = random_ellipsoid(&mut g, 3, 0.2);
        for &c in &[0.0, 0.5, 2.0, 7.0] {
            let cw = w.scale(c);
            let a = worst_interference_amplitude(&h, &e, &w).unwrap();
            assert!((worst_interference_amplitude(&h, &e, &cw).unwrap() - c * a).abs() < 1e-12 * (1.0 + c));
            let b = worst_intended_amplitude(&h, &e, &w).unwrap();
            assert!((worst_intended_amplitude(&h, &e, &cw).unwrap() - c * b).abs() < 1e-12 * (1.0 + c));
        }
        let mut prev = (f64::INFINITY, 0.0);
        for i in 0..20 {
            let ei = e.with_radius(i as f64 * 0.1).unwrap();
            let lo = worst_intended_amplitude(&h, &ei, &w).unwrap();
            let hi = worst_interference_amplitude(&h, &ei, &w).unwrap();
            assert!(lo <= prev.0 && hi >= prev.1);
            prev = (lo, hi);
        }
    }

    #[test]
    fn rates_zero_for_silent_transmitters() {
        let s = generate_scenario(&ScenarioSpec::uniform(vec![3, 3, 2], 0.3, 1.0, 1.0, 5)).unwrap();
        let rates = worst_case_rates(&s, &BeamformerSet::zeros(&s)).unwrap();
        assert_eq!(rates, vec![0.0; 3]);
    }

    #[test]
    fn point_to_point_mrt_rate() {
        let mut g = GaussianStream::new(10);
        let h = g.complex_gaussian_vector(4);
        let (p, noise) = (2.0, 0.5);
        let link = crate::model::Link {
            estimates: vec![h.clone()],
            uncertainty: vec![Ellipsoid::spherical(4, 0.0).unwrap()],
            power_budget: p,
            antennas: 4,
        };
        let s = Scenario::new(vec![link], noise).unwrap();
        let w = h.scale(p.sqrt() / h.norm());
        let rates = worst_case_rates(&s, &BeamformerSet::new(vec![w])).unwrap();
        let expected = (1.0 + p * h.norm_squared() / noise).log2();
        assert!((rates[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn two_user_rates_match_hand_composition() {
        let s = generate_scenario(&ScenarioSpec::uniform(vec![3, 2], 0.25, 1.0, 0.7, 21)).unwrap();
        let mut g = GaussianStream::new(22);
        let w1 = g.unit_vector(3).scale(0.9);
        let w2 = g.unit_vector(2).scale(0.6);
        let rates = worst_case_rates(&s, &BeamformerSet::new(vec![w1.clone(), w2.clone()])).unwrap();

        let amp = |k: usize, l: usize, w: &CVector, intended: bool| {
            let h = s.estimate(k, l);
            let e = s.ellipsoid(k, l);
            let mut inner = C64::new(0.0, 0.0);
            for i in 0..w.len() {
                inner += h[i].conj() * w[i];
            }
            let ahw: CVector = e.shape().adjoint() * w;
            let spread = ahw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * e.radius();
            if intended {
                (inner.norm() - spread).max(0.0)
            } else {
                inner.norm() + spread
            }
        };
        let x11 = amp(0, 0, &w1, true);
        let x22 = amp(1, 1, &w2, true);
        let x21 = amp(1, 0, &w2, false);
        let x12 = amp(0, 1, &w1, false);
        let r1 = (1.0 + x11 * x11 / (0.7 + x21 * x21)).log2();
        let r2 = (1.0 + x22 * x22 / (0.7 + x12 * x12)).log2();
        assert!((rates[0] - r1).abs() < 1e-12);
        assert!((rates[1] - r2).abs() < 1e-12);
    }

    #[test]
    fn rate_monotone_in_gains() {
        let base = rate_from_gains(0.8, 0.3, 1.0);
        assert!(rate_from_gains(0.8 + 1e-6, 0.3, 1.0) > base);
        assert!(rate_from_gains(0.8, 0.3 + 1e-6, 1.0) < base);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn sandwich_holds_for_feasible_errors(seed in 0u64..10_000, radius in 0.0f64..1.5, t in 0.0f64..1.0) {
                let mut g = GaussianStream::new(seed);
                let h = g.complex_gaussian_vector(3);
                let w = g.complex_gaussian_vector(3);
                let e = random_ellipsoid(&mut g, 3, radius);
                let delta = g.unit_vector(3).scale(radius * t);
                let a = perturbed_amplitude(&h, &e, &delta, &w);
                let lo = worst_intended_amplitude(&h, &e, &w).unwrap();
                let hi = worst_interference_amplitude(&h, &e, &w).unwrap();
                prop_assert!(lo <= a + 1e-12 && a <= hi + 1e-12);
            }

            #[test]
            fn rate_is_monotone(signal in 0.0f64..10.0, interf in 0.0f64..10.0, bump in 1e-3f64..1.0) {
                let r = rate_from_gains(signal, interf, 1.0);
                prop_assert!(rate_from_gains(signal + bump, interf, 1.0) >= r);
                prop_assert!(rate_from_gains(signal, interf + bump, 1.0) <= r);
            }
        }
    }
}
