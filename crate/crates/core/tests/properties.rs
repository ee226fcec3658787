use nalgebra::DMatrix;
use proptest::prelude::*;

use gdimbalance::experiments::dataset::Dataset;
use gdimbalance::experiments::{
    random_init, read_trajectory_json, reduce_dataset, sweep, write_sweep_csv, write_trajectory_json, EtaGrid,
    InitLaw, SweepConfig,
};
use gdimbalance::flow::{integrate_with, FlowConfig};
use gdimbalance::verify::{record_trajectory, verify_commutation, verify_mu_floor, verify_threshold_lemma};
use gdimbalance::{
    classify_region, gd_step, imbalance_step, loss, sharpness, summarize, HyperParams, ParamState, RegionLabel,
};

fn state(max_d: usize) -> impl Strategy<Value = ParamState<f64>> {
    (1..=max_d)
        .prop_flat_map(|d| (prop::collection::vec(-3.0..3.0f64, d), prop::collection::vec(-3.0..3.0f64, d)))
        .prop_filter_map("non-trivial state", |(a, b)| {
            let s = ParamState::new(a, b).ok()?;
            (s.scale() > 1e-3).then_some(s)
        })
}

fn dense_hessian(s: &ParamState<f64>, phi: f64) -> DMatrix<f64> {
    let d = s.dim();
    let eps = s.residual(phi);
    let (a, b) = (s.a(), s.b());
    DMatrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
        (true, true) => b[i] * b[j],
        (false, false) => a[i - d] * a[j - d],
        (true, false) => b[i] * a[j - d] + if i == j - d { eps } else { 0.0 },
        (false, true) => a[i - d] * b[j] + if i - d == j { eps } else { 0.0 },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_commutes_with_summary(s in state(8), phi in 0.0..3.0f64, u in 1e-3..2.0f64) {
        let hp = HyperParams::new(phi, u / s.scale()).unwrap();
        let v = verify_commutation(&s, &hp);
        prop_assert!(v.pass, "{:?}", v.details);
    }

    #[test]
    fn loss_symmetries(s in state(6), phi in 0.0..3.0f64, c in prop_oneof![0.2..5.0f64, -5.0..-0.2f64], k in 0usize..6) {
        let l0 = loss(&s, phi);
        let tol = 1e-12 * l0.max(1.0);
        let d = s.dim();
        let (i, j) = (k % d, (k + 1) % d);
        let (mut a, mut b) = (s.a().to_vec(), s.b().to_vec());
        a.swap(i, j);
        b.swap(i, j);
        prop_assert!((loss(&ParamState::new(a, b).unwrap(), phi) - l0).abs() <= tol);
        let (mut a, mut b) = (s.a().to_vec(), s.b().to_vec());
        a[i] *= c;
        b[i] /= c;
        prop_assert!((loss(&ParamState::new(a, b).unwrap(), phi) - l0).abs() <= tol);
    }

    #[test]
    fn unit_step_product_lands_on_antidiagonal(s in state(5), phi in 0.0..2.0f64) {
        let eps = s.residual(phi);
        prop_assume!(eps > 1e-3);
        let next = gd_step(&s, &HyperParams::new(phi, 1.0 / eps).unwrap()).unwrap();
        for (x, y) in next.a().iter().zip(next.b()) {
            prop_assert!((x + y).abs() <= 1e-12 * s.scale().max(1.0));
        }
    }

    #[test]
    fn negative_unit_step_product_lands_on_diagonal(s in state(5), phi in 0.0..2.0f64) {
        let eps = s.residual(phi);
        prop_assume!(eps < -1e-3);
        let next = gd_step(&s, &HyperParams::new(phi, -1.0 / eps).unwrap()).unwrap();
        for (x, y) in next.a().iter().zip(next.b()) {
            prop_assert!((x - y).abs() <= 1e-12 * s.scale().max(1.0));
        }
    }

    #[test]
    fn sharpness_matches_dense_eigensolver(s in state(4), phi in 0.0..3.0f64) {
        let top = dense_hessian(&s, phi).symmetric_eigen().eigenvalues.max();
        let est = sharpness(&s, phi).unwrap();
        prop_assert!((est - top).abs() <= 1e-8 * top.abs().max(1.0), "power {est} dense {top}");
        prop_assert!(est >= s.residual(phi).abs() * (1.0 - 1e-12));
    }

    #[test]
    fn sharpness_at_minimizer_is_scale(s in state(4)) {
        let phi = s.product();
        prop_assume!(phi >= 0.0);
        let est = sharpness(&s, phi).unwrap();
        prop_assert!((est - s.scale()).abs() <= 1e-8 * s.scale());
    }

    #[test]
    fn threshold_lemma_holds(s in state(4), phi in 0.2..2.0f64) {
        let v = verify_threshold_lemma(&s, phi);
        prop_assert!(v.pass || !v.preconditions_ok, "{:?}", v.details);
    }

    #[test]
    fn scale_identity_and_gap_bound(s in state(6)) {
        let sm = summarize(&s, 0.0);
        let lam = sm.scale();
        let (na, nb) = (s.a().iter().map(|x| x * x).sum::<f64>(), s.b().iter().map(|x| x * x).sum::<f64>());
        let signed = sm.signed_imbalance();
        let tol = 1e-12 * lam * lam;
        prop_assert!((lam * lam - (signed * signed + 4.0 * na * nb)).abs() <= tol);
        prop_assert!(sm.gap() >= signed * signed - tol);
        let q = sm.imbalances();
        let same_sign = q.iter().all(|&x| x >= 0.0) || q.iter().all(|&x| x <= 0.0);
        if same_sign {
            let total = sm.total_imbalance();
            prop_assert!((lam * lam - (total * total + 4.0 * na * nb)).abs() <= tol);
            prop_assert!(lam * lam >= total * total + 4.0 * sm.product().powi(2) - tol);
        }
    }

    #[test]
    fn imbalance_product_form(s in state(4), u in 0.05..0.95f64) {
        let phi = 1.0;
        let s0 = summarize(&s, phi);
        let cap = (0.5 / s0.residual().abs()).min(1.0 / s0.scale());
        let hp = HyperParams::new(phi, u * cap).unwrap();
        let mut param = s.clone();
        let mut iterated = s0.imbalances().to_vec();
        let mut factor = 1.0f64;
        for t in 0..1000 {
            let sm = summarize(&param, phi);
            for (i, q) in iterated.iter_mut().enumerate() {
                let direct = sm.imbalances()[i];
                let mag = param.a()[i].powi(2) + param.b()[i].powi(2);
                // GD's own Qᵢ against the product, up to rounding of aᵢ² − bᵢ².
                let expect = s0.imbalances()[i] * factor;
                prop_assert!((direct - expect).abs() <= 1e-13 * (t as f64 + 1.0) * mag.max(s0.imbalances()[i].abs()));
                prop_assert!((*q - expect).abs() <= 1e-10 * expect.abs().max(f64::MIN_POSITIVE));
                *q = imbalance_step(*q, &sm, &hp);
            }
            factor *= 1.0 - (hp.eta * sm.residual()).powi(2);
            param = gd_step(&param, &hp).unwrap();
        }
    }

    #[test]
    fn cs_ratio_grows_in_region_c(seed in any::<u64>(), d in 1usize..4, scale in 0.5..10.0f64, u in 0.05..0.95f64) {
        let phi = 1.0;
        let init = random_init(d, scale, InitLaw::RegionCForced, seed).unwrap();
        let s0 = summarize(&init, phi);
        let lam_bar = (s0.scale().powi(2) + 4.0 * phi * phi).sqrt();
        let eta = u * (0.5 / s0.residual().abs()).min(2.0 / lam_bar);
        let tr = record_trajectory(&init, &HyperParams::new(phi, eta).unwrap(), 1e-12, 100_000);
        for (now, next) in tr.transitions() {
            if now.region != RegionLabel::C || next.region != RegionLabel::C {
                break;
            }
            let (c0, c1) = (now.summary.cs_ratio().unwrap(), next.summary.cs_ratio().unwrap());
            prop_assert!(c1 >= c0 * (1.0 - 1e-12), "{c0} -> {c1}");
        }
    }

    #[test]
    fn mu_floor_fails_only_on_jump_into_region_a(seed in any::<u64>(), d in 1usize..4, scale in 0.5..10.0f64, u in 0.05..0.95f64) {
        let phi = 1.0;
        let init = random_init(d, scale, InitLaw::RegionCForced, seed).unwrap();
        let s0 = summarize(&init, phi);
        let lam_bar = (s0.scale().powi(2) + 4.0 * phi * phi).sqrt();
        let eta = u * (0.5 / s0.residual().abs()).min(2.0 / lam_bar);
        let tr = record_trajectory(&init, &HyperParams::new(phi, eta).unwrap(), 1e-12, 100_000);
        let v = verify_mu_floor(&tr);
        if v.is_violation() {
            prop_assert_eq!(&v.details["exit_region"], "A");
        }
    }

    #[test]
    fn flow_scale_moves_by_region(s in state(3), phi in 0.5..2.0f64) {
        let cfg = FlowConfig { loss_tol: 1e-14, trace: true, ..FlowConfig::default() };
        let res = integrate_with(&s, phi, &cfg).unwrap();
        for w in res.trace.windows(2) {
            let (e0, e1) = (w[0].residual, w[1].residual);
            let dl = w[1].scale - w[0].scale;
            let slack = 1e-9 * w[0].scale;
            // Only judge intervals that stay well inside one sign region of λ̇ = −4ε(ε+Φ).
            let growing = |e: f64| e > -phi * 0.99 && e < -1e-6;
            let shrinking = |e: f64| e > 1e-6 || e < -phi * 1.01;
            if growing(e0) && growing(e1) {
                prop_assert!(dl >= -slack);
            } else if shrinking(e0) && shrinking(e1) && (e0 > 0.0) == (e1 > 0.0) {
                prop_assert!(dl <= slack);
            }
        }
    }

    #[test]
    fn reduction_matches_direct_loss(
        samples in prop::collection::vec((-3.0..3.0f64, -5.0..5.0f64), 1..20),
        s in state(4),
    ) {
        let ds = Dataset::new(samples.clone()).unwrap();
        let Ok(r) = reduce_dataset(&ds) else { return Ok(()) };
        let m = s.product();
        let direct = samples.iter().map(|(x, y)| (m * x - y).powi(2)).sum::<f64>() / (2.0 * samples.len() as f64);
        let mapped = r.map_state(&s);
        let via = r.scale_factor * loss(&mapped, r.target()) + r.constant;
        prop_assert!((direct - via).abs() <= 1e-10 * direct.max(1e-12), "{direct} vs {via}");
        prop_assert!(r.constant >= 0.0);
    }

    #[test]
    fn rescaled_step_reproduces_dataset_gd(
        samples in prop::collection::vec((-3.0..3.0f64, -5.0..5.0f64), 1..20),
        s in state(3),
        u in 0.01..0.3f64,
    ) {
        let ds = Dataset::new(samples.clone()).unwrap();
        let Ok(r) = reduce_dataset(&ds) else { return Ok(()) };
        let n = samples.len() as f64;
        let mut reduced = r.map_state(&s);
        let sm = summarize(&reduced, r.target());
        let lam_bar = (sm.scale().powi(2) + 4.0 * r.target().powi(2)).sqrt();
        let cap = (0.5 / sm.residual().abs()).min(2.0 / lam_bar);
        let eta = u * cap / r.scale_factor;
        let hp = r.reduced_hyper(eta).unwrap();
        let (mut a, mut b) = (s.a().to_vec(), s.b().to_vec());
        for _ in 0..50 {
            // Direct GD on (1/2n) Σ (aᵀb·x − y)².
            let m: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let g: f64 = samples.iter().map(|(x, y)| (m * x - y) * x).sum::<f64>() / n;
            let a_next: Vec<f64> = a.iter().zip(&b).map(|(ai, bi)| ai - eta * g * bi).collect();
            let b_next: Vec<f64> = b.iter().zip(&a).map(|(bi, ai)| bi - eta * g * ai).collect();
            a = a_next;
            b = b_next;
            reduced = gd_step(&reduced, &hp).unwrap();
            let back = r.map_state(&reduced);
            let scale = a.iter().chain(&b).fold(1.0f64, |acc, x| acc.max(x.abs()));
            for (x, y) in back.a().iter().chain(back.b()).zip(a.iter().chain(&b)) {
                prop_assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn json_dump_round_trips(s in state(4), phi in 0.0..2.0f64, u in 0.05..1.5f64) {
        let hp = HyperParams::new(phi, u / s.scale()).unwrap();
        let tr = record_trajectory(&s, &hp, 1e-12, 2_000);
        let mut buf = Vec::new();
        write_trajectory_json(&mut buf, &tr).unwrap();
        let back = read_trajectory_json(buf.as_slice()).unwrap();
        prop_assert_eq!(format!("{back:?}"), format!("{tr:?}"));
    }
}

#[test]
fn region_c_classification_matches_product_sign() {
    let s = ParamState::new(vec![1.0, -0.5], vec![-1.0, 0.2]).unwrap();
    assert_eq!(classify_region(&summarize(&s, 1.0), 1.0), RegionLabel::C);
}

#[test]
fn sweep_bytes_do_not_depend_on_threads() {
    let cfg = SweepConfig {
        eta_grid: EtaGrid::LogToInverseScale { lo: 0.01, c: 2.5, n: 6 },
        scale_grid: vec![2.0, 7.0, 15.0],
        seeds: (0..5).collect(),
        ..SweepConfig::default_grid(1.0, 2)
    };
    let csv_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let rows = pool.install(|| sweep(&cfg).unwrap());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        buf
    };
    let one = csv_with(1);
    assert_eq!(one, csv_with(4));
    assert_eq!(one, csv_with(4));
}
