use super::*;
use crate::model::{generate_scenario, Ellipsoid, GaussianStream, Link, ScenarioSpec};
use crate::worst_case::{transmitter_amplitudes, worst_intended_amplitude, worst_case_rates};
use crate::BeamformerSet;

fn random_scenario(antennas: Vec<usize>, eps: f64, seed: u64) -> Scenario {
    generate_scenario(&ScenarioSpec::uniform(antennas, eps, 1.0, 1.0, seed)).unwrap()
}

/// Same estimates, spherical uncertainty of the given radius.
fn spherical_version(s: &Scenario, eps: f64) -> Scenario {
    let links = s
        .links()
        .iter()
        .map(|l| Link {
            uncertainty: (0..s.num_links()).map(|_| Ellipsoid::spherical(l.antennas, eps).unwrap()).collect(),
            ..l.clone()
        })
        .collect();
    Scenario::new(links, s.noise_power()).unwrap()
}

fn mrt(s: &Scenario, k: usize) -> CVector {
    let h = s.estimate(k, k);
    h.scale(s.link(k).power_budget.sqrt() / h.norm())
}

/// Distance between two vectors modulo a global phase.
fn phase_distance(a: &CVector, b: &CVector) -> f64 {
    let rot = C64::from_polar(1.0, -phase(b.dotc(a)));
    (a - b * rot.conj()).norm().min((a * rot - b).norm())
}

fn random_ball_vector(g: &mut GaussianStream, n: usize, radius: f64) -> CVector {
    let u = g.unit_vector(n);
    u.scale(radius * g.uniform().powf(1.0 / (2 * n) as f64))
}

#[test]
fn spherical_robust_mrt_is_full_power_mrt() {
    for seed in 0..4 {
        let s = spherical_version(&random_scenario(vec![3, 3], 0.0, seed), 0.4);
        for k in 0..2 {
            let w = robust_mrt(&s, k).unwrap();
            let d = phase_distance(&w, &mrt(&s, k));
            assert!(d < 1e-6, "seed {seed} link {k}: distance {d:e}");
        }
    }
}

#[test]
fn perfect_csi_robust_mrt_is_mrt() {
    let s = random_scenario(vec![4, 2], 0.0, 9);
    for k in 0..2 {
        assert!(phase_distance(&robust_mrt(&s, k).unwrap(), &mrt(&s, k)) < 1e-6);
    }
}

#[test]
fn elliptical_robust_mrt_beats_random_search() {
    let s = random_scenario(vec![3, 3], 0.3, 21);
    let mut g = GaussianStream::new(77);
    for k in 0..2 {
        let w = robust_mrt(&s, k).unwrap();
        let best = worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), &w).unwrap();
        let p = s.link(k).power_budget.sqrt();
        for _ in 0..10_000 {
            let v = random_ball_vector(&mut g, 3, p);
            let x = worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), &v).unwrap();
            assert!(x <= best + 1e-9, "sampled {x} beats solver {best}");
        }
    }
}

#[test]
fn robust_mrt_output_is_phase_normalized_and_feasible() {
    let s = random_scenario(vec![3, 2], 0.2, 4);
    for k in 0..2 {
        let w = robust_mrt(&s, k).unwrap();
        let z = herm_inner(s.estimate(k, k), &w).unwrap();
        assert!(z.im.abs() < 1e-12 && z.re >= 0.0);
        assert!(w.norm() <= s.link(k).power_budget.sqrt() + 1e-12);
    }
}

#[test]
fn caps_without_uncertainty_are_mrt_leakage() {
    let s = random_scenario(vec![3, 3], 0.0, 5);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..2 {
        let l = 1 - k;
        let expected = herm_inner(s.estimate(k, l), &mrt(&s, k)).unwrap().norm_sqr();
        assert!((gamma[k][l] - expected).abs() < 1e-8 * expected.max(1.0));
        assert_eq!(gamma[k][k], 0.0);
    }
}

#[test]
fn spherical_caps_match_closed_form() {
    let eps = 0.25;
    let s = spherical_version(&random_scenario(vec![2, 3, 2], 0.0, 6), eps);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..3 {
        let w = mrt(&s, k);
        for l in (0..3).filter(|&l| l != k) {
            let amp = herm_inner(s.estimate(k, l), &w).unwrap().norm() + eps * w.norm();
            assert!((gamma[k][l] - amp * amp).abs() < 1e-8, "{} vs {}", gamma[k][l], amp * amp);
            assert!(gamma[k][l] >= 0.0);
        }
    }
}

#[test]
fn unit_lambda_recovers_robust_mrt() {
    let s = random_scenario(vec![3, 3, 3], 0.2, 8);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..3 {
        let w = pareto_candidate(&s, k, &[1.0, 1.0], &gamma).unwrap();
        let r = robust_mrt(&s, k).unwrap();
        let a = worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), &w).unwrap();
        let b = worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), &r).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn zero_lambda_with_uncertainty_gives_zero_beamformer() {
    let s = random_scenario(vec![4, 4], 0.1, 10);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..2 {
        let w = pareto_candidate(&s, k, &[0.0], &gamma).unwrap();
        assert_eq!(w.norm(), 0.0);
    }
}

#[test]
fn zero_lambda_without_uncertainty_nulls_exactly() {
    let s = random_scenario(vec![3, 3], 0.0, 12);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..2 {
        let w = pareto_candidate(&s, k, &[0.0], &gamma).unwrap();
        assert!(herm_inner(s.estimate(k, 1 - k), &w).unwrap().norm() < 1e-10);
        // The best nulling beamformer is zero forcing.
        assert!(phase_distance(&w, &zero_forcing(&s, k).unwrap()) < 1e-6);
    }
}

#[test]
fn perfect_csi_candidates_lie_in_two_dimensional_span() {
    let s = random_scenario(vec![4, 4], 0.0, 13);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..2 {
        let (par, perp, _) = two_user_split(&s, k).unwrap();
        let basis = CMatrix::from_columns(&[par, perp]);
        let outside = span_complement_projector(&basis);
        for lam in [0.1, 0.35, 0.6, 0.9] {
            let w = pareto_candidate(&s, k, &[lam], &gamma).unwrap();
            assert!((&outside * &w).norm() < 1e-6);
        }
    }
}

#[test]
fn candidates_respect_power_and_caps() {
    let s = random_scenario(vec![3, 2, 4], 0.15, 14);
    let gamma = interference_caps(&s).unwrap();
    let mut g = GaussianStream::new(3);
    for k in 0..3 {
        for _ in 0..6 {
            let lam = [g.uniform(), g.uniform()];
            let w = pareto_candidate(&s, k, &lam, &gamma).unwrap();
            assert!(w.norm() <= s.link(k).power_budget.sqrt() + 1e-7);
            let amps = transmitter_amplitudes(&s, k, &w).unwrap();
            let mut it = lam.iter();
            for l in (0..3).filter(|&l| l != k) {
                let cap = (it.next().unwrap() * gamma[k][l]).sqrt();
                assert!(amps[l] <= cap + 1e-7, "cap {cap} exceeded by {}", amps[l]);
            }
        }
    }
}

#[test]
fn objective_is_monotone_in_lambda() {
    let s = random_scenario(vec![3, 3], 0.2, 15);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..2 {
        let mut prev = -1.0;
        for i in 0..=20 {
            let sol = solve_pareto_candidate(&s, k, &[i as f64 / 20.0], &gamma).unwrap();
            assert_eq!(sol.status, ConeStatus::Optimal);
            assert!(sol.objective_value >= prev - 1e-7);
            prev = sol.objective_value;
        }
    }
}

#[test]
fn objective_matches_worst_intended_amplitude() {
    let s = random_scenario(vec![3, 3, 2], 0.2, 16);
    let gamma = interference_caps(&s).unwrap();
    for k in 0..3 {
        for lam in [[0.2, 0.7], [0.5, 0.5], [1.0, 0.1]] {
            let sol = solve_pareto_candidate(&s, k, &lam, &gamma).unwrap();
            let x = worst_intended_amplitude(s.estimate(k, k), s.ellipsoid(k, k), &sol.w).unwrap();
            assert!((x - sol.objective_value).abs() < 1e-6, "{x} vs {}", sol.objective_value);
        }
    }
}

#[test]
fn no_feasible_perturbation_improves_a_candidate() {
    let s = random_scenario(vec![3, 3], 0.2, 17);
    let gamma = interference_caps(&s).unwrap();
    let mut g = GaussianStream::new(99);
    for k in 0..2 {
        let w = pareto_candidate(&s, k, &[0.4], &gamma).unwrap();
        let base = transmitter_amplitudes(&s, k, &w).unwrap();
        let p = s.link(k).power_budget.sqrt();
        let mut tried = 0;
        while tried < 10_000 {
            let scale = 10f64.powf(-1.0 - 3.0 * g.uniform());
            let v = &w + g.unit_vector(3).scale(scale);
            if v.norm() > p {
                continue;
            }
            let amps = transmitter_amplitudes(&s, k, &v).unwrap();
            if amps[1 - k] > base[1 - k] {
                continue;
            }
            tried += 1;
            assert!(amps[k] <= base[k] + 1e-5, "perturbation improved {} -> {}", base[k], amps[k]);
        }
    }
}

#[test]
fn rates_are_continuous_as_uncertainty_vanishes() {
    let base = random_scenario(vec![3, 3], 0.0, 18);
    let tiny = base.with_radii(&[vec![1e-6; 2], vec![1e-6; 2]]).unwrap();
    let rates = |s: &Scenario| {
        let gamma = interference_caps(s).unwrap();
        let w = (0..2).map(|k| pareto_candidate(s, k, &[0.5], &gamma).unwrap()).collect();
        worst_case_rates(s, &BeamformerSet::new(w)).unwrap()
    };
    let (a, b) = (rates(&base), rates(&tiny));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-3);
    }
}

#[test]
fn lambda_dimension_and_range_are_checked() {
    let s = random_scenario(vec![2, 2], 0.1, 19);
    let gamma = interference_caps(&s).unwrap();
    assert!(pareto_candidate(&s, 0, &[0.5, 0.5], &gamma).is_err());
    assert!(pareto_candidate(&s, 0, &[1.5], &gamma).is_err());
    assert!(pareto_candidate(&s, 0, &[0.5], &[vec![0.0, -1.0], vec![0.0, 0.0]]).is_err());
    assert!(DesignParams::new(vec![vec![0.0, 2.0], vec![0.0, 0.0]], gamma.clone()).is_err());
    let dp = DesignParams::new(vec![vec![0.0, 0.3], vec![0.7, 0.0]], gamma).unwrap();
    assert_eq!(dp.lambda_row(1), vec![0.7]);
}

#[test]
fn zero_forcing_nulls_with_full_power() {
    let s = random_scenario(vec![3, 4, 5], 0.0, 20);
    for k in 0..3 {
        let w = zero_forcing(&s, k).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-10);
        for l in (0..3).filter(|&l| l != k) {
            assert!(herm_inner(s.estimate(k, l), &w).unwrap().norm() < 1e-10);
        }
    }
}

#[test]
fn zero_forcing_needs_enough_antennas() {
    let s = random_scenario(vec![1, 3], 0.0, 22);
    assert_eq!(zero_forcing(&s, 0).unwrap().norm(), 0.0);
    assert!(zero_forcing(&s, 1).unwrap().norm() > 0.0);
    let single = random_scenario(vec![2], 0.0, 23);
    assert!(phase_distance(&zero_forcing(&single, 0).unwrap(), &mrt(&single, 0)) < 1e-12);
}

#[test]
fn two_user_family_endpoints() {
    let s = spherical_version(&random_scenario(vec![3, 3], 0.0, 24), 0.1);
    for k in 0..2 {
        let bmax = beta_max(&s, k).unwrap();
        let w = two_user_spherical_candidate(&s, k, 1.0, bmax).unwrap();
        assert!(phase_distance(&w, &mrt(&s, k)) < 1e-10);
        assert_eq!(two_user_spherical_candidate(&s, k, 0.0, 0.3 * bmax).unwrap().norm(), 0.0);
        assert!(two_user_spherical_candidate(&s, k, 0.5, bmax + 0.1).is_err());
        assert!(two_user_spherical_candidate(&s, k, 1.5, 0.0).is_err());
    }
    let elliptical = random_scenario(vec![3, 3], 0.1, 24);
    assert!(two_user_spherical_candidate(&elliptical, 0, 0.5, 0.0).is_err());
}

#[test]
fn two_user_family_degenerates_along_parallel_channels() {
    let h = CVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2)]);
    let sph = || Ellipsoid::spherical(2, 0.1).unwrap();
    let link = |g: CVector| Link {
        estimates: vec![h.clone(), g],
        uncertainty: vec![sph(), sph()],
        power_budget: 2.0,
        antennas: 2,
    };
    let other = Link {
        estimates: vec![h.clone(), h.clone()],
        uncertainty: vec![sph(), sph()],
        power_budget: 1.0,
        antennas: 2,
    };
    let s = Scenario::new(vec![link(h.scale(-3.0)), other], 1.0).unwrap();
    assert!((beta_max(&s, 0).unwrap() - 1.0).abs() < 1e-12);
    let w = two_user_spherical_candidate(&s, 0, 0.5, 0.2).unwrap();
    assert!((&w - h.scale(1.0 / h.norm())).norm() < 1e-12);
}

/// Every rate pair of the closed-form family is matched or beaten by the cone
/// program run with caps equal to the family's own interference levels.
#[test]
fn two_user_family_is_dominated_by_cone_programs() {
    let s = spherical_version(&random_scenario(vec![3, 3], 0.0, 25), 0.2);
    let gamma = interference_caps(&s).unwrap();
    let steps = 6;
    let family = |k: usize| -> Vec<CVector> {
        let bmax = beta_max(&s, k).unwrap();
        let mut out = Vec::new();
        for i in 0..=steps {
            for j in 0..=steps {
                let (xi, beta) = (i as f64 / steps as f64, bmax * j as f64 / steps as f64);
                out.push(two_user_spherical_candidate(&s, k, xi, beta).unwrap());
            }
        }
        out
    };
    let socp_for = |k: usize, w: &CVector| -> CVector {
        let l = 1 - k;
        let amp = transmitter_amplitudes(&s, k, w).unwrap()[l];
        let lam = if gamma[k][l] > 0.0 { (amp * amp / gamma[k][l]).min(1.0) } else { 1.0 };
        pareto_candidate(&s, k, &[lam], &gamma).unwrap()
    };
    let (f0, f1) = (family(0), family(1));
    let s0: Vec<CVector> = f0.iter().map(|w| socp_for(0, w)).collect();
    let s1: Vec<CVector> = f1.iter().map(|w| socp_for(1, w)).collect();
    for (i, w0) in f0.iter().enumerate() {
        for (j, w1) in f1.iter().enumerate().step_by(3) {
            let r = worst_case_rates(&s, &BeamformerSet::new(vec![w0.clone(), w1.clone()])).unwrap();
            let q = worst_case_rates(&s, &BeamformerSet::new(vec![s0[i].clone(), s1[j].clone()])).unwrap();
            assert!(q[0] >= r[0] - 1e-4 && q[1] >= r[1] - 1e-4, "{r:?} not dominated by {q:?}");
        }
    }
}
