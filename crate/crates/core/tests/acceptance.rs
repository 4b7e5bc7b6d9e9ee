//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//!
//! Runs as a plain binary (no libtest harness) so every criterion is
//! reported even when an earlier one fails. The process exits nonzero on a
//! failure only when `DELAYLQR_ACCEPTANCE_STRICT=1`.

mod common;

use std::time::Instant;

use common::*;
use delaylqr::data::{compute_psi, make_sigma_phi, sample_consistent_models};
use delaylqr::random::{gaussian_vector, stream};
use delaylqr::sdp::SdpSettings;
use delaylqr::slemma::{find_certificate, verify_robust_qmi, CertificateSearch};
use delaylqr::synthesis::{
    feasible_sigma_interval, lyapunov_max_eig, solve_data_driven, solve_model_based,
    solve_stabilization_only, sweep_sigma, GammaMode, LmiSettings, SweepStatus,
};
use delaylqr::{closed_loop, evaluate_cost, evaluate_cost_truncated, linalg, Execution, Gain};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn noiseless_equivalence() -> Outcome {
    let settings = LmiSettings::default();
    let data = noiseless_data();
    let phi = make_sigma_phi(0.0, 2, 10).unwrap();
    let start = Instant::now();
    let dd = solve_data_driven(
        &data,
        &phi,
        &paper_weights(),
        GammaMode::Minimize,
        &settings,
    );
    let elapsed = start.elapsed().as_secs_f64();
    let model = solve_model_based(
        &paper_plant(),
        &paper_weights(),
        GammaMode::Minimize,
        &settings,
    )
    .unwrap();
    let gm = model.gamma.unwrap();
    match dd {
        Ok(dd) => {
            let g = dd.gamma.unwrap();
            let rel = (g - gm).abs() / gm;
            outcome(
                rel <= 0.05 && elapsed < 10.0,
                format!(
                    "data-driven γ {g:.6} vs model γ {gm:.6} (rel. diff {rel:.2e}), {elapsed:.2} s"
                ),
            )
        }
        Err(e) => outcome(false, format!("data-driven solve failed: {e}")),
    }
}

/// Feasible σ interval of the seed-6 experiment and its realized noise level.
struct Experiment {
    data: delaylqr::data::DataSet,
    sigma_true: f64,
    interval: Option<(f64, f64)>,
}

fn experiment() -> Experiment {
    let data = noisy_data(6);
    let sigma_true = realized_sigma(&data);
    let interval =
        feasible_sigma_interval(&data, &paper_weights(), 1.0, 1e-3, &LmiSettings::default())
            .unwrap();
    Experiment {
        data,
        sigma_true,
        interval,
    }
}

fn guarantees_on_true_plant(ex: &Experiment) -> Outcome {
    let Some((_, hi)) = ex.interval else {
        return outcome(false, "no feasible σ".into());
    };
    if hi < ex.sigma_true {
        return outcome(
            false,
            format!("σ_max {hi:.5} is below the realized σ {:.5}", ex.sigma_true),
        );
    }
    let model = paper_plant().lift();
    let w = paper_weights();
    let mut rng = stream(100, 0);
    let x0s: Vec<_> = std::iter::once(paper_x0())
        .chain((0..100).map(|_| gaussian_vector(&mut rng, 6)))
        .collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for frac in [0.02, 0.5, 0.98] {
        let sigma = ex.sigma_true + frac * (hi - ex.sigma_true);
        let phi = make_sigma_phi(sigma, 2, 10).unwrap();
        let r = match solve_data_driven(
            &ex.data,
            &phi,
            &w,
            GammaMode::Minimize,
            &LmiSettings::default(),
        ) {
            Ok(r) => r,
            Err(e) => {
                pass = false;
                lines.push(format!("σ {sigma:.4}: {e}"));
                continue;
            }
        };
        let gamma = r.gamma.unwrap();
        let gain = r.gain();
        let rho = linalg::spectral_radius(&closed_loop(&model, &gain).unwrap());
        let worst = x0s
            .iter()
            .map(|x0| evaluate_cost(&model, &gain, &w, x0).unwrap() / (gamma * x0.norm_squared()))
            .fold(0.0, f64::max);
        pass &= rho < 1.0 && worst <= 1.0 + 1e-7;
        lines.push(format!(
            "σ {sigma:.4}: ρ {rho:.4}, max J/(γ‖X₀‖²) {worst:.4}"
        ));
    }
    outcome(pass, lines.join("; "))
}

fn sampled_lyapunov(ex: &Experiment) -> Outcome {
    let Some((lo, hi)) = ex.interval else {
        return outcome(false, "no feasible σ".into());
    };
    let sigma = 0.5 * (lo + hi);
    let phi = make_sigma_phi(sigma, 2, 10).unwrap();
    let w = paper_weights();
    let r = match solve_data_driven(
        &ex.data,
        &phi,
        &w,
        GammaMode::Minimize,
        &LmiSettings::default(),
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("σ {sigma:.4}: {e}")),
    };
    let psi = compute_psi(&ex.data, &phi).unwrap();
    let models = sample_consistent_models(&psi, 500, 4242, Execution::Parallel).unwrap();
    let s = r.p.clone().try_inverse().unwrap();
    let worst = models
        .iter()
        .map(|(a, b)| {
            let lifted = delaylqr::DelayPlant::new(a.clone(), b.clone(), 4)
                .unwrap()
                .lift();
            let a_cl = closed_loop(&lifted, &Gain::new(r.k.clone(), 2, 4).unwrap()).unwrap();
            lyapunov_max_eig(&a_cl, &linalg::symmetrize(&s), &r.k, &w)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        models.len() >= 200 && worst <= -1e-9,
        format!(
            "{} consistent models at σ {sigma:.4}, worst max eigenvalue {worst:.3e}",
            models.len()
        ),
    )
}

fn sweep_shape(ex: &Experiment) -> Outcome {
    let Some((lo, hi)) = ex.interval else {
        return outcome(false, "no feasible σ".into());
    };
    // Denser towards σ_max, where γ grows fastest.
    let grid: Vec<f64> = (0..16)
        .map(|i| {
            let u = i as f64 / 15.0;
            lo + (hi - lo) * (1.0 - (1.0 - u).powi(2))
        })
        .collect();
    let curve = sweep_sigma(
        &ex.data,
        &paper_weights(),
        &grid,
        &LmiSettings::default(),
        Execution::Parallel,
    )
    .unwrap();
    let feasible: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.status == SweepStatus::Feasible)
        .filter_map(|p| p.gamma)
        .collect();
    let monotone = feasible.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6));
    let (min, max) = (
        feasible.first().copied().unwrap_or(f64::NAN),
        feasible.last().copied().unwrap_or(f64::NAN),
    );
    outcome(
        feasible.len() >= 15 && monotone && max >= 10.0 * min,
        format!(
            "{} of {} points feasible on [{lo:.5}, {hi:.5}], monotone {monotone}, γ from {min:.4} to {max:.4} ({:.0}×)",
            feasible.len(),
            grid.len(),
            max / min
        ),
    )
}

fn baseline_ratio(ex: &Experiment) -> Outcome {
    let Some((lo, hi)) = ex.interval else {
        return outcome(false, "no feasible σ".into());
    };
    let sigma = 0.5 * (lo + hi);
    let phi = make_sigma_phi(sigma, 2, 10).unwrap();
    let w = paper_weights();
    let settings = LmiSettings::default();
    let (sub, stab) = match (
        solve_data_driven(&ex.data, &phi, &w, GammaMode::Minimize, &settings),
        solve_stabilization_only(&ex.data, &phi, &w, &settings),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            return outcome(
                false,
                format!("solve failed: {:?} / {:?}", a.err(), b.err()),
            )
        }
    };
    let model = paper_plant().lift();
    let j_sub = evaluate_cost(&model, &sub.gain(), &w, &paper_x0()).unwrap();
    let j_stab = evaluate_cost(&model, &stab.gain(), &w, &paper_x0()).unwrap();
    let ratio = j_stab / j_sub;
    outcome(ratio >= 2.0, format!("σ {sigma:.4}: J stabilizing-only {j_stab:.4e}, J sub-optimal {j_sub:.4e}, ratio {ratio:.2}"))
}

fn slemma_oracles() -> Outcome {
    let settings = SdpSettings::default();
    let mut rng = stream(60, 0);
    let (mut checked, mut agree, mut skipped) = (0, 0, 0);
    while checked < 100 {
        let (set, pair) = scalar_instance(&mut rng);
        let oracle = scalar_grid_margin(&set, &pair);
        if oracle.abs() < 1e-6 {
            skipped += 1;
            continue;
        }
        checked += 1;
        let certified = matches!(
            find_certificate(&set, &pair, &settings).unwrap(),
            CertificateSearch::Found(_)
        );
        agree += (certified == (oracle > 0.0)) as usize;
    }
    let mut rng = stream(61, 0);
    let (mut found, mut held) = (0, 0);
    for i in 0..20 {
        let (set, pair) = matrix_instance(&mut rng);
        if let CertificateSearch::Found(_) = find_certificate(&set, &pair, &settings).unwrap() {
            found += 1;
            held += verify_robust_qmi(&set, &pair, 10_000, i, Execution::Parallel)
                .unwrap()
                .holds_on_samples as usize;
        }
    }
    outcome(
        agree >= 99 && held == found,
        format!(
            "scalar: {agree}/100 agree with the grid ({skipped} near-boundary skipped); matrix: {held}/{found} certified instances hold on 10⁴ samples (of 20)"
        ),
    )
}

fn schur_and_cost_oracles() -> Outcome {
    let cases = schur_cases(50, 70);
    let decided: Vec<_> = cases
        .iter()
        .filter(|c| c.lmi_margin.abs() > 1e-12 * c.lmi_scale)
        .collect();
    let agree = decided
        .iter()
        .filter(|c| (c.lmi_margin > 0.0) == c.oracle_psd)
        .count();
    let psd = decided.iter().filter(|c| c.lmi_margin > 0.0).count();
    let w = paper_weights();
    let worst_cost = stable_loops(50, 71)
        .iter()
        .map(|(model, gain, x0)| {
            let j = evaluate_cost(model, gain, &w, x0).unwrap();
            let jt = evaluate_cost_truncated(model, gain, &w, x0, 1e-12).unwrap();
            (j - jt).abs() / j.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    outcome(
        agree == decided.len() && decided.len() >= 45 && worst_cost <= 1e-6,
        format!(
            "Schur form agrees on {agree}/{} decided instances ({psd} PSD); worst Lyapunov vs truncated rel. diff {worst_cost:.2e} over 50 loops",
            decided.len()
        ),
    )
}

fn main() {
    let strict = std::env::var("DELAYLQR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let ex = experiment();
    println!(
        "experiment: seed 6, realized σ {:.5}, feasible interval {:?}",
        ex.sigma_true,
        ex.interval
            .map(|(a, b)| (format!("{a:.5}"), format!("{b:.5}")))
    );
    let criteria: [Criterion<'_>; 7] = [
        ("1 noiseless equivalence", Box::new(noiseless_equivalence)),
        (
            "2 guarantees on the true plant",
            Box::new(|| guarantees_on_true_plant(&ex)),
        ),
        (
            "3 sampled Lyapunov inequality",
            Box::new(|| sampled_lyapunov(&ex)),
        ),
        ("4 γ(σ) sweep", Box::new(|| sweep_shape(&ex))),
        (
            "5 stabilization-only baseline ratio",
            Box::new(|| baseline_ratio(&ex)),
        ),
        ("6 S-lemma oracles", Box::new(slemma_oracles)),
        (
            "7 Schur-complement and cost oracles",
            Box::new(schur_and_cost_oracles),
        ),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let o = run();
        failed += (!o.pass) as usize;
        println!(
            "{} criterion {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
