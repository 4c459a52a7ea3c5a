use formation_core::linalg::{
    c, checked_inverse, diag, eigenvalues, identity_residual, leading_block, max_abs,
    max_abs_vec, spectrum_distance, CMatrix, CVector, C64,
};
use formation_core::potential::{
    distance_in_xi, pair_gradient_coeff, pair_potential, potential_matrix, transformed_potential,
    PotentialParams,
};
use formation_core::shape::{
    build_jacobi, invert_3x3_closed_form, leading_minors, AgentConfig, Direction, TransformPair,
};
use formation_core::sim::{
    equivalence_report, CentroidPath, ControllerConfig, DesiredTrajectory, Domain, Scale, SimSpec,
};
use formation_core::stabilizer::{
    assemble_step_matrix, complex_quadratic_roots, double_integrator_block, quadratic_margin,
    quadratic_spectrum, schur_eig_step, stabilize_double, stabilize_single, verify_half_plane,
    HalfPlane, SearchPolicy,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn cplx(scale: f64) -> impl Strategy<Value = C64> {
    (-scale..scale, -scale..scale).prop_map(|(re, im)| c(re, im))
}

fn cvec(n: usize, scale: f64) -> impl Strategy<Value = CVector> {
    vec(cplx(scale), n).prop_map(CVector::from_vec)
}

fn cmat(n: usize) -> impl Strategy<Value = CMatrix> {
    vec(cplx(1.0), n * n).prop_map(move |v| CMatrix::from_row_slice(n, n, &v))
}

/// Random square matrix whose leading minors all exceed 0.1 in magnitude.
fn minor_bounded(n: usize) -> impl Strategy<Value = CMatrix> {
    cmat(n).prop_filter("small leading minor", |m| {
        leading_minors(m).iter().all(|x| x.norm() > 0.1)
    })
}

fn masses(n: usize) -> impl Strategy<Value = AgentConfig> {
    vec(0.2f64..5.0, n).prop_map(|m| AgentConfig::new(m).unwrap())
}

fn cbt3() -> impl Strategy<Value = CMatrix> {
    (cplx(2.0), cplx(2.0), cplx(2.0), vec(0.2f64..3.0, 3))
        .prop_filter("near-singular", |(a, b, cc, _)| {
            a.norm() > 0.2 && (b * 2.0 + cc).norm() > 0.2
        })
        .prop_map(|(a, b, cc, m)| {
            let total: f64 = m.iter().sum();
            CMatrix::from_row_slice(
                3,
                3,
                &[
                    a,
                    -a,
                    c(0.0, 0.0),
                    b,
                    cc,
                    -b - cc,
                    c(m[0] / total, 0.0),
                    c(m[1] / total, 0.0),
                    c(m[2] / total, 0.0),
                ],
            )
        })
}

fn params() -> PotentialParams {
    PotentialParams::new(2.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jacobi_transform_is_centroid_based(cfg in (2usize..8).prop_flat_map(masses)) {
        let t = build_jacobi(&cfg).unwrap();
        let n = cfg.n();
        prop_assert!(identity_residual(&(t.forward() * t.inverse())) <= 1e-10);
        let ones = CVector::from_element(n, c(1.0, 0.0));
        let image = t.forward() * ones;
        for i in 0..n - 1 {
            prop_assert!(image[i].norm() <= 1e-12);
        }
        prop_assert!((image[n - 1] - c(1.0, 0.0)).norm() <= 1e-12);
    }

    #[test]
    fn map_round_trip(cfg in masses(5), z in cvec(5, 10.0)) {
        let t = build_jacobi(&cfg).unwrap();
        let xi = t.map_points(&z, Direction::Forward).unwrap();
        let back = t.map_points(&xi, Direction::Inverse).unwrap();
        prop_assert!(max_abs_vec(&(back - &z)) <= 1e-10 * (1.0 + max_abs_vec(&z)));
    }

    #[test]
    fn triangular_minors_are_cumulative_products(d in vec(cplx(2.0), 1..7), upper in vec(cplx(2.0), 36)) {
        let n = d.len();
        let m = CMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => d[i],
            std::cmp::Ordering::Less => upper[i * 6 + j],
            std::cmp::Ordering::Greater => c(0.0, 0.0),
        });
        let minors = leading_minors(&m);
        let mut acc = c(1.0, 0.0);
        for k in 0..n {
            acc *= d[k];
            prop_assert!((minors[k] - acc).norm() <= 1e-12 * (1.0 + acc.norm()));
        }
    }

    #[test]
    fn quadratic_roots_satisfy_vieta(sigma in cplx(10.0), gamma in 0.01f64..10.0) {
        let ([r1, r2], _) = complex_quadratic_roots(sigma, gamma);
        let scale = 1.0 + sigma.norm() * gamma;
        prop_assert!((r1 * r2 - sigma).norm() <= 1e-12 * scale * scale);
        prop_assert!((r1 + r2 + sigma * gamma).norm() <= 1e-12 * scale);
    }

    #[test]
    fn hurwitz_quadratic_matches_closed_condition(sigma in cplx(5.0), gamma in 0.1f64..5.0) {
        // roots of λ² + γσλ + σ lie in the open left half-plane iff
        // γ²·Re σ·|σ|² > (Im σ)²
        let lhs = gamma * gamma * sigma.re * sigma.norm_sqr();
        let rhs = sigma.im * sigma.im;
        prop_assume!((lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()));
        prop_assert_eq!(quadratic_margin(sigma, gamma) > 0.0, lhs > rhs);
    }

    #[test]
    fn schur_step_matches_dense(
        (m, pre, cand) in (2usize..=6).prop_flat_map(|n| (minor_bounded(n), vec(cplx(2.0), n - 1), cplx(2.0)))
    ) {
        let a = schur_eig_step(&pre, &m, cand).unwrap();
        let b = eigenvalues(&assemble_step_matrix(&pre, &m, cand)).unwrap();
        prop_assert!(spectrum_distance(&a, &b) <= 1e-8);
    }

    #[test]
    fn potential_matrix_structure(z in (2usize..7).prop_flat_map(|n| cvec(n, 1.5))) {
        let pz = match potential_matrix(&z, &params()) {
            Ok(p) => p,
            Err(_) => return Err(TestCaseError::reject("coincident or singular pair")),
        };
        prop_assert!(pz.row_sum_residual() <= 1e-12 * (1.0 + max_abs(pz.entries())));
        prop_assert!(pz.symmetry_residual() <= 1e-12);
        let balance: C64 = pz.gradient(&z).iter().sum();
        prop_assert!(balance.norm() <= 1e-10 * (1.0 + max_abs(pz.entries())));
    }

    #[test]
    fn transformed_potential_is_a_similarity(cfg in masses(4), z in cvec(4, 1.5)) {
        let t = build_jacobi(&cfg).unwrap();
        let Ok(pz) = potential_matrix(&z, &params()) else {
            return Err(TestCaseError::reject("singular pair"));
        };
        // keep the spectrum well scaled away from the avoidance radius
        prop_assume!(max_abs(pz.entries()) < 1e3);
        let m = transformed_potential(&pz, &t).unwrap();
        let a = eigenvalues(&m).unwrap();
        let b = eigenvalues(pz.entries()).unwrap();
        prop_assert!(spectrum_distance(&a, &b) <= 1e-8 * (1.0 + max_abs(pz.entries())));
        let xi = t.forward() * &z;
        let lhs = &m * &xi;
        let rhs = t.forward() * pz.gradient(&z);
        prop_assert!(max_abs_vec(&(lhs - rhs)) <= 1e-9 * (1.0 + max_abs(pz.entries())));
    }

    #[test]
    fn euler_step_commutes_with_transform(cfg in masses(4), z in cvec(4, 1.5), h in 1e-4f64..1e-2) {
        let t = build_jacobi(&cfg).unwrap();
        let Ok(pz) = potential_matrix(&z, &params()) else {
            return Err(TestCaseError::reject("singular pair"));
        };
        prop_assume!(max_abs(pz.entries()) < 1e3);
        let z1 = &z - pz.gradient(&z) * c(h, 0.0);
        let xi0 = t.forward() * &z;
        let xi1 = &xi0 - transformed_potential(&pz, &t).unwrap() * &xi0 * c(h, 0.0);
        prop_assert!(max_abs_vec(&(t.forward() * z1 - xi1)) <= 1e-12 * (1.0 + max_abs_vec(&xi0)));
    }

    #[test]
    fn distance_read_from_transformed_coordinates(cfg in masses(5), z in cvec(5, 5.0), i in 0usize..5, j in 0usize..5) {
        let t = build_jacobi(&cfg).unwrap();
        let xi = t.forward() * &z;
        let d = distance_in_xi(&xi, &t, i, j).unwrap();
        prop_assert!((d - (z[i] - z[j]).norm()).abs() <= 1e-10 * (1.0 + max_abs_vec(&z)));
    }

    #[test]
    fn gradient_matches_finite_differences(d in 1.05f64..1.95, theta in 0.0f64..std::f64::consts::TAU) {
        let p = params();
        let zj = c(0.3, -0.2);
        let zi = zj + C64::from_polar(d, theta);
        let coeff = pair_gradient_coeff(zi, zj, &p).unwrap();
        let analytic = (zi - zj) * coeff;
        let h = 1e-6;
        let fd = |dz: C64| {
            (pair_potential(zi + dz, zj, &p).unwrap() - pair_potential(zi - dz, zj, &p).unwrap()) / (2.0 * h)
        };
        let numeric = c(fd(c(h, 0.0)), fd(c(0.0, h)));
        prop_assert!((numeric - analytic).norm() <= 1e-6 * analytic.norm().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn closed_form_inverse_agrees_with_general(phi in cbt3()) {
        let general = checked_inverse(&phi, 1e-10).unwrap();
        let closed = invert_3x3_closed_form(&phi).unwrap();
        prop_assert!(max_abs(&(general - closed)) <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stabilized_spectrum_is_verified_independently(m in (2usize..=5).prop_flat_map(minor_bounded)) {
        let r = stabilize_single(&m, &SearchPolicy::default()).unwrap();
        prop_assert_eq!(r.d[0], c(1.0, 0.0) / m[(0, 0)]);
        let (ok, margin) = verify_half_plane(&r.d, &m, HalfPlane::Right).unwrap();
        prop_assert!(ok && margin > 0.0);
        for k in 1..=m.nrows() {
            let block = leading_block(&m, k);
            let eigs = eigenvalues(&(diag(&r.d[..k]) * block)).unwrap();
            prop_assert!(eigs.iter().all(|e| e.re > 0.0));
        }
    }

    #[test]
    fn double_block_spectrum_is_quadratic_roots(m in (2usize..=4).prop_flat_map(minor_bounded), gamma in 0.5f64..3.0) {
        let r = stabilize_double(&m, &SearchPolicy::default(), gamma).unwrap();
        let block = eigenvalues(&double_integrator_block(&r.d1, &r.d2, &m)).unwrap();
        let quad = quadratic_spectrum(&r.sigma, gamma);
        prop_assert!(spectrum_distance(&block, &quad) <= 1e-8);
        prop_assert!(block.iter().all(|e| e.re < 0.0));
    }

    #[test]
    fn domains_agree_on_random_jacobi_runs(cfg in masses(3), z0 in cvec(3, 3.0), d in vec(cplx(3.0), 3)) {
        let t = build_jacobi(&cfg).unwrap();
        let spec = SimSpec {
            transform: t,
            controller: ControllerConfig::single(d, Domain::Actual),
            desired: DesiredTrajectory {
                basis: CVector::from_vec(vec![c(0.0, 0.0), c(3.0, 0.0), c(1.5, 2.5)]),
                centroid: CentroidPath::line_with_sine(),
                scale: Scale::Constant(1.0),
            },
            z0,
            zdot0: None,
            dt: 0.01,
            t_end: 1.0,
        };
        let rep = equivalence_report(&spec).unwrap();
        prop_assert!(rep.pass, "deviation {}", rep.max_deviation);
    }
}

#[test]
fn identity_minors_are_ones() {
    for n in 1..8 {
        let m = TransformPair::identity(n);
        assert!(leading_minors(m.forward()).iter().all(|x| *x == c(1.0, 0.0)));
    }
}
