//! One line per acceptance criterion, then a nonzero exit if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use formation_core::linalg::{
    c, diag, eigenvalues, leading_block, max_real, min_real, spectrum_distance, CMatrix, CVector,
    C64,
};
use formation_core::poly;
use formation_core::potential::{
    pair_gradient_coeff, pair_potential, potential_matrix, PotentialParams,
};
use formation_core::scenario::{
    hexagon6, jacobi3, write_csv, Scenario, ScenarioConfig, PRESETS, REFERENCE_HEXAGON_D,
};
use formation_core::shape::{leading_minors, hexagon_phi6};
use formation_core::sim::{equivalence_report, EventKind, Gains};
use formation_core::stabilizer::{
    assemble_step_matrix, double_integrator_block, quadratic_spectrum, schur_eig_step,
    stabilize_double, stabilize_double_pivoted, stabilize_single, SearchPolicy,
    EIGEN_COMPARE_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rand_c(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

fn random_minor_bounded(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    loop {
        let m = CMatrix::from_fn(n, n, |_, _| rand_c(rng, 1.0));
        if leading_minors(&m).iter().all(|x| x.norm() > 0.1) {
            return m;
        }
    }
}

fn reference_d() -> Vec<C64> {
    REFERENCE_HEXAGON_D.iter().map(|&(re, im)| c(re, im)).collect()
}

fn resolve(cfg: &ScenarioConfig) -> Scenario {
    Scenario::resolve(cfg).expect("bundled scenario resolves")
}

fn within(elapsed: Duration, limit: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit, format!("{s:.2}s (< {limit}s)"))
}

fn reference_d_verification() -> Outcome {
    let start = Instant::now();
    let phi = hexagon_phi6();
    let m = diag(&reference_d()) * phi.inverse();
    let dense = eigenvalues(&m).expect("eigenvalues converge");
    // second route: characteristic polynomial roots
    let by_poly = poly::roots(&poly::faddeev_leverrier(&m).coeffs);
    let agree = spectrum_distance(&dense, &by_poly);
    let margin = min_real(&dense);
    let (fast, t) = within(start.elapsed(), 1.0);
    outcome(
        margin > 0.0 && agree <= EIGEN_COMPARE_TOL && fast,
        format!(
            "min Re eig(D·Φ⁻¹) = {margin:.4} (must be > 0), solver agreement {agree:.1e}, {t}"
        ),
    )
}

fn single_synthesis() -> Outcome {
    let start = Instant::now();
    let policy = SearchPolicy::default();
    let phi = hexagon_phi6();
    let fixed = match stabilize_single(phi.inverse(), &policy) {
        Ok(r) => (r.margin > 0.0, format!("margin {:.4}", r.margin)),
        Err(e) => (false, format!("{e}")),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ok, mut worst) = (0, f64::INFINITY);
    let mut first_problem = None;
    for k in 0..200 {
        let n = if k % 2 == 0 { 3 } else { 6 };
        let m = random_minor_bounded(&mut rng, n);
        let r = match stabilize_single(&m, &policy) {
            Ok(r) => r,
            Err(e) => {
                first_problem.get_or_insert(format!("#{k}: {e}"));
                continue;
            }
        };
        let d1_exact = r.d[0] == c(policy.seed_eigenvalue, 0.0) / m[(0, 0)];
        let steps_ok = (1..=n).all(|i| {
            let block = diag(&r.d[..i]) * leading_block(&m, i);
            eigenvalues(&block).map(|e| min_real(&e) > 0.0).unwrap_or(false)
        });
        if d1_exact && steps_ok && r.margin > 0.0 {
            ok += 1;
            worst = worst.min(r.margin);
        } else {
            first_problem.get_or_insert(format!("#{k}: d1 exact {d1_exact}, steps {steps_ok}"));
        }
    }
    let (fast, t) = within(start.elapsed(), 30.0);
    outcome(
        fixed.0 && ok == 200 && fast,
        format!(
            "fixed six-agent Φ⁻¹: {}; random: {ok}/200 (worst margin {worst:.2e}){}; {t}",
            fixed.1,
            first_problem.map(|p| format!(", first problem {p}")).unwrap_or_default()
        ),
    )
}

fn schur_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let n = 2 + k % 5;
        let m = random_minor_bounded(&mut rng, n);
        let prefix: Vec<C64> = (0..n - 1).map(|_| rand_c(&mut rng, 2.0)).collect();
        let cand = rand_c(&mut rng, 2.0);
        let a = schur_eig_step(&prefix, &m, cand).expect("nonsingular block");
        let b = eigenvalues(&assemble_step_matrix(&prefix, &m, cand)).expect("converges");
        worst = worst.max(spectrum_distance(&a, &b));
    }
    outcome(
        worst <= 1e-8,
        format!("max spectrum distance {worst:.2e} over 500 instances (≤ 1e-8)"),
    )
}

fn gradient_check() -> Outcome {
    let p = PotentialParams::new(2.0, 1.0).unwrap();
    let (r, big_r) = (p.avoidance_radius(), p.detection_radius());
    let (lo, hi) = (r + 0.05 * (big_r - r), big_r - 0.05 * (big_r - r));
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let d = lo + (hi - lo) * k as f64 / 99.0;
        let zj = c(0.25, -0.5);
        let zi = zj + C64::from_polar(d, 0.37 * k as f64);
        let analytic = (zi - zj) * pair_gradient_coeff(zi, zj, &p).unwrap();
        let fd = |dz: C64| {
            (pair_potential(zi + dz, zj, &p).unwrap() - pair_potential(zi - dz, zj, &p).unwrap())
                / (2.0 * h)
        };
        let numeric = c(fd(c(h, 0.0)), fd(c(0.0, h)));
        worst = worst.max((numeric - analytic).norm() / analytic.norm());
    }
    outcome(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 100 distances (≤ 1e-6)"),
    )
}

fn potential_structure() -> Outcome {
    let p = PotentialParams::new(2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut rows, mut sym, mut bal): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut active = 0;
    let mut count = 0;
    let mut largest: f64 = 0.0;
    while count < 100 {
        let n = if count % 2 == 0 { 3 } else { 6 };
        let z = CVector::from_fn(n, |_, _| rand_c(&mut rng, 1.6));
        let Ok(pz) = potential_matrix(&z, &p) else {
            continue;
        };
        count += 1;
        if pz.entries().iter().any(|x| *x != c(0.0, 0.0)) {
            active += 1;
        }
        largest = largest.max(pz.entries().iter().map(|x| x.norm()).fold(0.0, f64::max));
        rows = rows.max(pz.row_sum_residual());
        sym = sym.max(pz.symmetry_residual());
        bal = bal.max(pz.gradient(&z).iter().sum::<C64>().norm());
    }
    outcome(
        rows <= 1e-12 && sym <= 1e-12 && bal <= 1e-10,
        format!(
            "row sums {rows:.1e}, symmetry {sym:.1e}, force balance {bal:.1e} over 100 configurations ({active} with active pairs, largest |entry| {largest:.1e})"
        ),
    )
}

fn domain_equivalence() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for cfg in [hexagon6(), jacobi3()] {
        let s = resolve(&cfg);
        assert_eq!((s.spec.dt, s.spec.t_end), (1e-3, 20.0));
        match equivalence_report(&s.spec) {
            Ok(r) => {
                pass &= r.max_deviation <= 1e-6;
                parts.push(format!("{} {:.2e}", s.name, r.max_deviation));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{} error {e}", s.name));
            }
        }
    }
    let (fast, t) = within(start.elapsed(), 60.0);
    outcome(
        pass && fast,
        format!("max ‖Φz − ξ‖∞: {} (≤ 1e-6); {t}", parts.join(", ")),
    )
}

fn tracking_convergence() -> Outcome {
    let s = resolve(&hexagon6());
    match s.simulate() {
        Ok(log) => {
            let err = log.terminal_error().unwrap();
            let cen = s.centroid_error(&log).unwrap();
            outcome(
                err <= 1e-3 && cen <= 1e-3,
                format!("‖ξ_e(20)‖ = {err:.2e}, centroid error {cen:.2e} (both ≤ 1e-3)"),
            )
        }
        Err(f) => outcome(false, f.error.to_string()),
    }
}

fn double_integrator() -> Outcome {
    let phi = hexagon_phi6();
    let policy = SearchPolicy::default();
    let strict = match stabilize_double(phi.inverse(), &policy, 1.0) {
        Ok(r) => (r.margin > 0.0, format!("margin {:.4}", r.margin)),
        Err(e) => (false, e.to_string()),
    };
    let pivoted = match stabilize_double_pivoted(phi.inverse(), &policy, 1.0) {
        Ok(r) => {
            let block = eigenvalues(&double_integrator_block(&r.d1, &r.d2, phi.inverse()))
                .expect("converges");
            let quad = quadratic_spectrum(&r.sigma, r.gamma);
            let dist = spectrum_distance(&block, &quad);
            let hurwitz = max_real(&block) < 0.0;
            (
                hurwitz && dist <= 1e-8,
                format!(
                    "pivoted: max Re block eig {:.4}, quadratic-root match {dist:.1e}",
                    max_real(&block)
                ),
            )
        }
        Err(e) => (false, format!("pivoted: {e}")),
    };
    let cfg = ScenarioConfig::preset("double6").unwrap();
    let s = resolve(&cfg);
    let sim = match s.simulate() {
        Ok(log) => {
            let e = log.last().unwrap().state_error_norm();
            (e <= 1e-3, format!("double6 ‖(ξ_e, ξ̇_e)(50)‖ = {e:.2e}"))
        }
        Err(f) => (false, format!("double6: {}", f.error)),
    };
    assert!(matches!(s.spec.controller.gains, Gains::Double { .. }));
    outcome(
        strict.0 && pivoted.0 && sim.0,
        format!(
            "unpivoted on fixed Φ⁻¹: {}; {}; {}",
            strict.1, pivoted.1, sim.1
        ),
    )
}

fn collision_avoidance() -> Outcome {
    let s = resolve(&jacobi3());
    let params = s.spec.controller.potential.expect("jacobi3 has a potential");
    let r = params.avoidance_radius();
    let d0 = (s.spec.z0[0] - s.spec.z0[1]).norm();
    let setup = (d0 - 1.2 * r).abs() < 1e-12 && d0 < params.detection_radius();
    match s.simulate() {
        Ok(log) => {
            let min = log.min_distance();
            let breaches = log
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::AvoidanceBreach { .. }))
                .count();
            outcome(
                setup && min > r && breaches == 0,
                format!(
                    "start distance {d0:.3} = 1.2r, min distance {min:.4} (> r = {r}), breaches {breaches}"
                ),
            )
        }
        Err(f) => outcome(false, f.error.to_string()),
    }
}

fn csv_bytes(s: &Scenario) -> Vec<u8> {
    let log = match s.simulate() {
        Ok(log) => log,
        Err(f) => f.partial,
    };
    let mut buf = Vec::new();
    write_csv(&log, s.spec.transform.n(), &mut buf).unwrap();
    buf
}

fn determinism() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in PRESETS {
        let cfg = ScenarioConfig::preset(name).unwrap();
        let a = csv_bytes(&resolve(&cfg));
        let b = csv_bytes(&resolve(&cfg));
        pass &= a == b;
        parts.push(format!("{name} {}", if a == b { "identical" } else { "DIFFERENT" }));
    }
    outcome(pass, parts.join(", "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("reference gain verification", reference_d_verification),
        ("stabilizer synthesis", single_synthesis),
        ("Schur-step oracle equivalence", schur_oracle),
        ("potential gradient check", gradient_check),
        ("matrix-of-potential structure", potential_structure),
        ("domain equivalence", domain_equivalence),
        ("tracking convergence", tracking_convergence),
        ("double integrator", double_integrator),
        ("collision avoidance", collision_avoidance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
