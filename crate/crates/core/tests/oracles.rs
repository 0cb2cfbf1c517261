//! Integration checks against independent oracles: closed forms, brute-force
//! scans and direct series sums.

use wpi_conv::config::{Preset, RunConfig, Setup};
use wpi_conv::lyapunov::{DriftCase, DriftConfig, LyapunovData, PhiProfile};
use wpi_conv::model::{ConvolutionModel, Potential, Profile, SourceMeasure, SourceSpec, Which};
use wpi_conv::quad::QuadratureSpec;
use wpi_conv::rates::{
    compare_psi_perturbation, compare_sigma, compare_stability, compute_rates, fit_asymptotics, linear_fit, Family,
    RatePlan, VarphiPhi,
};

fn preset(p: Preset, f: impl FnOnce(&mut RunConfig)) -> Setup {
    let mut cfg = RunConfig::preset(p);
    f(&mut cfg);
    cfg.resolve().unwrap()
}

#[test]
fn log_tail_potential_has_closed_form_tail() {
    // density ∝ (1+|x|)^{-3} on the line: μ(|x| ≥ t) = (1+t)^{-2}
    let s = preset(Preset::Example33, |c| c.p = Some(2.0));
    let ts: Vec<f64> = (0..=30).map(|k| 1e2 * 10f64.powf(k as f64 / 10.0)).collect();
    let tails: Vec<f64> = ts
        .iter()
        .map(|t| s.model.measure_tail(Which::Mu, *t).unwrap())
        .collect();
    for (t, q) in ts.iter().zip(&tails) {
        let exact = (1.0 + t).powi(-2);
        assert!((q / exact - 1.0).abs() < 1e-8, "t = {t}: {q} vs {exact}");
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = tails.iter().map(|q| q.ln()).collect();
    let slope = linear_fit(&x, &y).unwrap().slope;
    assert!((slope + 2.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn compact_source_has_no_far_tail() {
    let s = preset(Preset::Example33, |_| {});
    assert_eq!(s.model.measure_tail(Which::Nu, 1.5).unwrap(), 0.0);
    assert_eq!(s.model.measure_tail(Which::Mu, 0.0).unwrap(), 1.0);
}

#[test]
fn lattice_density_matches_series_sum() {
    // p_ν(0) = Σ_i w_i e^{-V(i)}, summed directly at two truncation levels
    let s = preset(Preset::Example31, |c| {
        c.p = Some(1.0);
        c.delta = Some(0.5);
    });
    let pot = s.model.potential();
    let sum = |n: i64| -> f64 {
        let w = |i: i64| 1.0 / (1.0 + (i.abs() as f64).powi(2));
        let gamma: f64 = (-n..=n).map(w).sum::<f64>() + 2.0 / n as f64;
        (-n..=n).map(|i| w(i) * (-pot.value(&[i as f64])).exp()).sum::<f64>() / gamma
    };
    let (a, b) = (sum(100_000), sum(200_000));
    assert!((a - b).abs() < 1e-9);
    let p = s.model.p_nu(&[0.0]).unwrap();
    assert!((p / b - 1.0).abs() < 1e-8, "{p} vs {b}");
}

#[test]
fn lattice_gradient_matches_log_density_differences() {
    let s = preset(Preset::Example31, |c| c.p = Some(1.0));
    for x in [-50.0, -10.0, -2.0, 2.0, 10.0, 50.0] {
        let g = s.model.grad_v_nu(&[x]).unwrap()[0];
        let v = |y: f64| -s.model.p_nu(&[y]).unwrap().ln();
        let h = 1e-3;
        let d1 = (v(x + h) - v(x - h)) / (2.0 * h);
        let d2 = (v(x + h / 2.0) - v(x - h / 2.0)) / h;
        let fd = (4.0 * d2 - d1) / 3.0;
        assert!((g - fd).abs() <= 1e-6 * g.abs().max(1.0), "x = {x}: {g} vs {fd}");
    }
}

fn dip_profile() -> PhiProfile {
    // decreasing, with a dip centred at s = 5 and a recovery after it
    let grid: Vec<f64> = (0..400).map(|k| 1.0 + 0.05 * k as f64).collect();
    let values = grid
        .iter()
        .map(|s| 2.0 / s - 0.25 * (-(s - 5.0) * (s - 5.0) / 0.1).exp() + 0.02)
        .collect();
    PhiProfile::new(DriftCase::A, grid, values).unwrap()
}

#[test]
fn varphi_with_dip_matches_exhaustive_scan() {
    let phi = dip_profile();
    let v = VarphiPhi::new(&phi);
    let n = 100_000;
    let (lo, hi) = (phi.start(), phi.end());
    let scan: Vec<(f64, f64)> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .map(|s| (s, phi.at(s)))
        .collect();
    let h = (hi - lo) / (n - 1) as f64;
    for r in [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 5.5, 6.0, 8.0] {
        let level = 1.0 / r;
        let mut brute = 0.0;
        let mut running = f64::INFINITY;
        for (s, p) in &scan {
            running = running.min(*p);
            if running >= level {
                brute = *s;
            } else {
                break;
            }
        }
        let got = v.eval(r).unwrap();
        assert!((got - brute).abs() <= h * 1.01, "r = {r}: {got} vs scan {brute}");
    }
    // φ(5) ≈ 0.17: levels above the dip stop before it, levels below pass it
    assert!(v.eval(1.0 / 0.18).unwrap() < 5.0);
    assert!(v.eval(1.0 / 0.16).unwrap() > 5.0);
}

#[test]
fn log_tail_beta_slope() {
    let s = preset(Preset::Example33, |c| c.p = Some(2.0));
    let res = compute_rates(&s.rate_model, &s.drift, &s.plan).unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = res
        .beta
        .grid
        .iter()
        .zip(&res.beta.values)
        .filter(|(_, b)| (1e-6..=1e-2).contains(*b))
        .map(|(r, b)| (r.ln(), b.ln()))
        .unzip();
    assert!(x.len() > 10);
    let slope = linear_fit(&x, &y).unwrap().slope;
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn power_potential_fits_poly_log() {
    let s = preset(Preset::Example32, |c| c.p = Some(0.6));
    let res = compute_rates(&s.rate_model, &s.drift, &s.plan).unwrap();
    let fit = fit_asymptotics(&res.inverse, &Family::ALL, (s.plan.s_min, s.plan.s_max)).unwrap();
    assert_eq!(fit.best.family, Family::PolyLog);
    assert!(
        (fit.best.exponent / (4.0 / 3.0) - 1.0).abs() < 0.2,
        "{}",
        fit.best.exponent
    );
}

#[test]
fn sigma_comparison_identity_and_spread() {
    let s = preset(Preset::Example33, |_| {});
    let same = compare_sigma(&s.rate_model, &s.drift, &[2.0, 2.0], &s.plan, 2.0).unwrap();
    assert!(same.alphas[0].iter().zip(&same.alphas[1]).all(|(a, b)| a == b));
    assert_eq!(same.max_spread, 1.0);
    let rep = compare_sigma(&s.rate_model, &s.drift, &[1.0, 2.0, 5.0], &s.plan, 2.0).unwrap();
    assert!(rep.bounded, "spread {}", rep.max_spread);
}

#[test]
fn psi_perturbation_keeps_alpha_comparable() {
    let s = preset(Preset::Example33, |c| c.sigma = Some(10.0));
    let rep = compare_psi_perturbation(&s.rate_model, &s.drift, 1.05, &s.plan, 2.0).unwrap();
    assert!(rep.bounded, "spread {}", rep.max_spread);
}

#[test]
fn stability_with_point_mass_is_identity() {
    let m = ConvolutionModel::new(
        Potential::new(Profile::LogTail { coef: 3.0 }, 1).unwrap(),
        SourceMeasure::point_mass(1),
        QuadratureSpec::default(),
    )
    .unwrap();
    let cfg = DriftConfig::new(DriftCase::CorA, 2.0, 1);
    let rep = compare_stability(&m, &cfg, 0.5, &RatePlan::default(), 3.0).unwrap();
    assert!((rep.eta0 - 1.0).abs() < 1e-9, "{}", rep.eta0);
    assert!(rep.ratio.alphas[0]
        .iter()
        .zip(&rep.ratio.alphas[1])
        .all(|(a, b)| (a / b - 1.0).abs() < 1e-12));
}

#[test]
fn eta_ratio_approaches_one() {
    let s = preset(Preset::Example33, |c| {
        c.p = Some(1.0);
        c.case = Some(DriftCase::CorA);
    });
    let rep = compare_stability(&s.model, &s.drift, 0.5, &s.plan, 3.0).unwrap();
    let at = |r: f64| {
        rep.eta_ratios
            .iter()
            .min_by(|a, b| (a.0.ln() - r.ln()).abs().total_cmp(&(b.0.ln() - r.ln()).abs()))
            .unwrap()
            .1
    };
    let (a, b, c) = (at(2e2), at(2e3), at(1e4));
    assert!(a < b && b <= c && c <= 1.0 + 1e-9, "{a} {b} {c}");
    assert!(c > 0.99);
    let fits = (rep.fit_mu.unwrap(), rep.fit_conv.unwrap());
    assert_eq!((fits.0.family, fits.1.family), (Family::Power, Family::Power));
    assert!((fits.0.exponent - 2.0).abs() < 0.3 && (fits.1.exponent - 2.0).abs() < 0.3);
    assert!(rep.ratio.bounded);
}

#[test]
fn quadrature_refinement_is_stable() {
    for p in [Preset::Example32, Preset::Example33, Preset::Example34] {
        let s = preset(p, |_| {});
        let fine = s.rate_model.with_quadrature(s.rate_model.quadrature().refined());
        let start = s.drift.start(&s.rate_model);
        let radii: Vec<f64> = (0..60).map(|k| start * 1.1f64.powi(k)).collect();
        let a = LyapunovData::compute(&s.rate_model, &s.drift, &radii).unwrap();
        let b = LyapunovData::compute(&fine, &s.drift, &radii).unwrap();
        let close = |x: &[f64], y: &[f64], what: &str| {
            for (u, v) in x.iter().zip(y) {
                assert!((u / v - 1.0).abs() < 1e-3, "{}: {what} {u} vs {v}", p.name());
            }
        };
        close(&a.psi.as_ref().unwrap().values, &b.psi.as_ref().unwrap().values, "psi");
        close(
            &a.p_sigma.as_ref().unwrap().values,
            &b.p_sigma.as_ref().unwrap().values,
            "p_sigma",
        );
        close(&a.phi.values, &b.phi.values, "phi");
    }
}

#[test]
fn case_b_dominance() {
    // δ|∇V_ν|² − ΔV_ν ≥ ∫ (δ|∇V|² − ΔV)(x − z) ν_x(dz)
    for p in [Preset::Example32, Preset::Example33, Preset::Example34] {
        let s = preset(p, |c| {
            c.case = Some(DriftCase::CorB);
            c.delta = Some(0.75);
        });
        let m = &s.model;
        let r0 = s.drift.r0;
        for k in 0..40 {
            let x = r0 * 1.2f64.powi(k);
            for y in [x, -x] {
                let g = m.grad_v_nu(&[y]).unwrap()[0];
                let lhs = 0.75 * g * g - m.laplacian_v_nu(&[y]).unwrap();
                let rhs = m.case_b_integrand(&[y], 0.75).unwrap();
                assert!(
                    lhs >= rhs - 1e-7 * rhs.abs().max(1e-3),
                    "{} x = {y}: {lhs} < {rhs}",
                    p.name()
                );
            }
        }
    }
}

#[test]
fn two_atom_psi_is_a_minimum_over_signs() {
    // ν = ½(δ₋₁ + δ₁), V = x² + c: ψ(3) from the closed-form two-atom drift
    let m = ConvolutionModel::new(
        Potential::new(Profile::Quadratic { a: 1.0 }, 1).unwrap(),
        SourceMeasure::new(
            SourceSpec::Atoms {
                points: vec![vec![-1.0], vec![1.0]],
                weights: vec![0.5, 0.5],
            },
            1,
        )
        .unwrap(),
        QuadratureSpec::default(),
    )
    .unwrap();
    let drift = |x: f64| {
        // V_ν(x) = x² + 1 − log cosh(2x) up to constants, so V_ν' = 2x − 2 tanh(2x)
        2.0 * x - 2.0 * (2.0 * x).tanh()
    };
    for x in [-3.0f64, 3.0] {
        let got = m.radial_drift(&[x]).unwrap();
        assert!((got - drift(x.abs())).abs() < 1e-10, "{got}");
    }
}
