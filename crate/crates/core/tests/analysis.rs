use cosparse_core::analysis::*;
use cosparse_core::datapipe::{synth_generate, ApplianceSpec, DayMatrix, Signature, SynthConfig};
use cosparse_core::numkernels::{frobenius_sq, seeded_gaussian, soft_threshold, Matrix};

fn rank_one(d: usize, n: usize) -> Matrix {
    let u = Matrix::from_fn(d, 1, |i, _| 50.0 + 30.0 * (i as f64 * 0.7).sin());
    let v = Matrix::from_fn(1, n, |_, j| 1.0 + 0.25 * j as f64);
    u * v
}

fn random_days(label: &str, d: usize, n: usize, seed: u64) -> DayMatrix {
    DayMatrix::from_matrix(label, seeded_gaussian(n, d, seed).transpose() * 10.0).unwrap()
}

/// Independent straight-line loop of the three closed-form steps plus the
/// Bregman update, written against the definitions rather than the library.
fn reference_simple(x: &Matrix, h: &Hyperparams) -> (Matrix, Matrix, Matrix) {
    let (d, n) = x.shape();
    let mut dict = seeded_gaussian(h.atoms, d, h.seed);
    let mut xh = x.clone();
    let mut z = &dict * &xh;
    let mut b = Matrix::from_element(h.atoms, n, 1.0);
    let objective = |xh: &Matrix, dict: &Matrix| {
        frobenius_sq(&(x - xh)) + h.lambda * (dict * xh).iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut prev: Option<f64> = None;
    for _ in 0..h.max_outer {
        // Dictionary: nearest minimizer of ‖Z − B − D X̂‖² via the regularized normal equations.
        let g = &xh * xh.transpose();
        let eps = h.ls_eps * g.trace();
        let lhs = g + Matrix::identity(d, d) * eps;
        let rhs = (&z - &b - &dict * &xh) * xh.transpose();
        let delta = lhs.lu().solve(&rhs.transpose()).unwrap().transpose();
        dict += delta;
        // Estimate: (I + μDᵀD) X̂ = X + μDᵀ(Z − B).
        let lhs = Matrix::identity(d, d) + dict.transpose() * &dict * h.mu;
        xh = lhs.lu().solve(&(x + dict.transpose() * (&z - &b) * h.mu)).unwrap();
        z = soft_threshold(&(&dict * &xh + &b), h.lambda / (2.0 * h.mu)).unwrap();
        b += &dict * &xh - &z;
        let f = objective(&xh, &dict);
        if let Some(p) = prev {
            if (f - p).abs() <= h.tol * p.abs().max(f.abs()) {
                break;
            }
        }
        prev = Some(f);
    }
    (dict, xh, z)
}

fn disjoint_pair(d: usize, n: usize, seed: u64) -> Vec<DayMatrix> {
    let raw = seeded_gaussian(n, d, seed).transpose();
    let half = d / 2;
    let a = Matrix::from_fn(d, n, |i, j| if i < half { 100.0 + 40.0 * raw[(i, j)] } else { 0.0 });
    let b = Matrix::from_fn(d, n, |i, j| if i >= half { 60.0 + 30.0 * raw[(i, j)] } else { 0.0 });
    vec![DayMatrix::from_matrix("a", a).unwrap(), DayMatrix::from_matrix("b", b).unwrap()]
}

fn appliances(n_app: usize, d: usize, n: usize, seed: u64) -> Vec<DayMatrix> {
    (0..n_app).map(|i| random_days(&format!("app{i}"), d, n, seed + 31 * i as u64)).collect()
}

#[test]
fn zero_data_is_a_fixed_point() {
    let x = DayMatrix::from_matrix("z", Matrix::zeros(8, 4)).unwrap();
    let h = Hyperparams { bregman_init: BregmanInit::Zeros, ..Hyperparams::default() };
    let mut st = TrainState::init(&[("z".into(), x.values().clone())], &h).unwrap();
    let traces = st.train(&h, Formulation::Simple).unwrap();
    assert!(st.parts[0].estimate.iter().all(|v| *v == 0.0));
    assert!(traces[0].objective.iter().all(|f| *f == 0.0));
    assert!(traces[0].converged);
}

#[test]
fn zero_data_with_unit_multiplier_settles_at_zero() {
    let x = DayMatrix::from_matrix("z", Matrix::zeros(8, 4)).unwrap();
    let (_, trace) = train_simple(&x, &Hyperparams::default()).unwrap();
    assert!(trace.objective.iter().all(|f| f.is_finite()));
    assert!(*trace.objective.last().unwrap() <= 1e-6 * trace.objective[0].max(1.0));
}

#[test]
fn rank_one_fit_matches_reference_loop() {
    let x = rank_one(12, 6);
    let h = Hyperparams::default();
    let mut st = TrainState::init(&[("r".into(), x.clone())], &h).unwrap();
    st.train(&h, Formulation::Simple).unwrap();
    let p = &st.parts[0];
    let fidelity = (&x - &p.estimate).norm() / x.norm();
    let residual = p.constraint_residual() / p.proxy.norm();
    assert!(fidelity <= 0.2, "fidelity {fidelity}");
    assert!(residual <= 1e-3, "residual {residual}");

    let (rd, rxh, _) = reference_simple(&x, &h);
    assert!((&rd - &p.dict).norm() <= 1e-6 * rd.norm());
    assert!((&rxh - &p.estimate).norm() <= 1e-9 * rxh.norm());
    let (dict, _) = train_simple(&DayMatrix::from_matrix("r", x).unwrap(), &h).unwrap();
    assert_eq!(dict.op, p.dict);
}

#[test]
fn trainers_are_deterministic() {
    let xs = appliances(3, 10, 5, 2);
    let h = Hyperparams { seed: 7, max_outer: 30, ..Hyperparams::default() };
    let (a, _) = train_simple(&xs[0], &h).unwrap();
    let (b, _) = train_simple(&xs[0], &h).unwrap();
    assert_eq!(a, b);
    for form in [Formulation::Distinctive, Formulation::Disaggregating] {
        assert_eq!(train(&xs, &h, form).unwrap(), train(&xs, &h, form).unwrap());
    }
}

#[test]
fn reduction_chain_is_bitwise() {
    for seed in 0..5u64 {
        let xs = appliances(3, 10, 6, 100 + seed);
        let h = Hyperparams { seed, max_outer: 40, ..Hyperparams::default() };

        let no_gamma = Hyperparams { gamma: 0.0, ..h.clone() };
        let dis = train_disaggregating(&xs, &no_gamma).unwrap();
        let dst = train_distinctive(&xs, &no_gamma).unwrap();
        assert_eq!(dis.dictionaries, dst.dictionaries);
        assert_eq!(dis.traces, dst.traces);

        let decoupled = Hyperparams { eta: 0.0, gamma: 0.0, ..h.clone() };
        let dst = train_distinctive(&xs, &decoupled).unwrap();
        let dis = train_disaggregating(&xs, &decoupled).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let own = Hyperparams { seed: h.appliance_seed(i), ..decoupled.clone() };
            let (dict, trace) = train_simple(x, &own).unwrap();
            assert_eq!(dst.dictionaries[i].matrix, dict.op);
            assert_eq!(dis.dictionaries[i].matrix, dict.op);
            assert_eq!(dst.traces[i], trace);
        }
    }
}

#[test]
fn distinctive_shapes() {
    let xs = appliances(3, 10, 4, 9);
    let art = train_distinctive(&xs, &Hyperparams { max_outer: 10, ..Hyperparams::default() }).unwrap();
    assert_eq!(art.dictionaries.len(), 3);
    for (d, x) in art.dictionaries.iter().zip(&xs) {
        assert_eq!(d.matrix.shape(), (3, 10));
        assert_eq!(d.appliance, x.channel_id());
    }
    assert_eq!(art.traces.len(), 3);
    assert!(art.traces.iter().all(|t| t.final_residual().is_some()));
}

#[test]
fn incoherence_does_not_grow() {
    for variant in [IncoherenceVariant::LiteralDxd, IncoherenceVariant::CrossGramPxp] {
        let xs = appliances(2, 12, 8, 40);
        let h = Hyperparams { seed: 3, incoherence_variant: variant, ..Hyperparams::default() };
        let targets: Vec<_> = xs.iter().map(|x| (x.channel_id().to_string(), x.values().clone())).collect();
        let mut st = TrainState::init(&targets, &h).unwrap();
        let before = st.total_incoherence(variant);
        st.train(&h, Formulation::Distinctive).unwrap();
        let after = st.total_incoherence(variant);
        assert!(after <= before, "{variant:?}: {before} -> {after}");
    }
}

#[test]
fn cross_energy_does_not_grow_on_disjoint_supports() {
    let xs = disjoint_pair(12, 8, 5);
    let h = Hyperparams { seed: 11, ..Hyperparams::default() };
    let targets: Vec<_> = xs.iter().map(|x| (x.channel_id().to_string(), x.values().clone())).collect();
    let mut st = TrainState::init(&targets, &h).unwrap();
    let cross = |st: &TrainState, i: usize, j: usize| frobenius_sq(&(&st.parts[j].dict * &st.parts[i].estimate));
    let before = [cross(&st, 0, 1), cross(&st, 1, 0)];
    st.train(&h, Formulation::Disaggregating).unwrap();
    let after = [cross(&st, 0, 1), cross(&st, 1, 0)];
    for k in 0..2 {
        assert!(after[k] <= before[k], "pair {k}: {} -> {}", before[k], after[k]);
    }
}

#[test]
fn constraint_residual_converges() {
    let mut cases: Vec<Vec<DayMatrix>> = vec![appliances(3, 12, 8, 1), disjoint_pair(12, 8, 2)];
    cases.push(vec![DayMatrix::from_matrix("r", rank_one(12, 6)).unwrap(), random_days("s", 12, 6, 3)]);
    for xs in cases {
        let targets: Vec<_> = xs.iter().map(|x| (x.channel_id().to_string(), x.values().clone())).collect();
        for form in Formulation::ALL {
            let h = Hyperparams::default();
            let mut st = TrainState::init(&targets, &h).unwrap();
            let traces = st.train(&h, form).unwrap();
            for (p, t) in st.parts.iter().zip(&traces) {
                let rel = p.constraint_residual() / p.proxy.norm().max(1.0);
                assert!(rel < 1e-2, "{form} {}: {rel}", p.label);
                assert_eq!(t.final_residual(), Some(p.constraint_residual()));
                assert!(t.objective.iter().all(|f| f.is_finite()));
            }
        }
    }
}

#[test]
fn synthetic_preset_trains() {
    let cfg = SynthConfig {
        days: 6,
        slots_per_day: 24,
        appliances: vec![
            ApplianceSpec {
                label: "kettle".into(),
                signature: Signature::TwoState { power: 1800.0, duty: 0.1 },
                band: None,
            },
            ApplianceSpec {
                label: "fridge".into(),
                signature: Signature::PeriodicCycler { power: 120.0, period_slots: 4, duty: 0.5 },
                band: None,
            },
        ],
        ..SynthConfig::household()
    };
    let house = synth_generate(&cfg, 3).unwrap();
    for form in Formulation::ALL {
        let art = train(house.appliances(), &Hyperparams::default(), form).unwrap();
        assert_eq!(art.dictionaries[0].matrix.shape(), (3, 24));
    }
}

#[test]
fn invalid_inputs() {
    let xs = appliances(2, 10, 4, 1);
    let h = Hyperparams::default();
    assert!(matches!(train_distinctive(&xs[..1], &h), Err(cosparse_core::Error::InvalidArgument(_))));
    assert!(matches!(train_disaggregating(&[], &h), Err(cosparse_core::Error::InvalidArgument(_))));
    let odd = vec![xs[0].clone(), random_days("short", 8, 4, 2)];
    assert!(matches!(train_distinctive(&odd, &h), Err(cosparse_core::Error::InvalidArgument(_))));
    let dup = vec![xs[0].clone(), xs[0].clone()];
    assert!(train_distinctive(&dup, &h).is_err());
    for bad in [
        Hyperparams { mu: 0.0, ..h.clone() },
        Hyperparams { lambda: -1.0, ..h.clone() },
        Hyperparams { atoms: 0, ..h.clone() },
        Hyperparams { tol: 0.0, ..h.clone() },
        Hyperparams { eta: f64::NAN, ..h.clone() },
    ] {
        assert!(matches!(train_simple(&xs[0], &bad), Err(cosparse_core::Error::InvalidArgument(_))));
    }
}

#[test]
fn overflowing_data_rejected() {
    let x = DayMatrix::from_matrix("huge", Matrix::from_fn(6, 3, |i, j| 1e300 * (1.0 + (i + j) as f64))).unwrap();
    assert!(matches!(train_simple(&x, &Hyperparams::default()), Err(cosparse_core::Error::InvalidArgument(_))));
}

#[test]
fn non_finite_state_reports_divergence() {
    let xs = appliances(2, 6, 3, 8);
    let h = Hyperparams::default();
    let targets: Vec<_> = xs.iter().map(|x| (x.channel_id().to_string(), x.values().clone())).collect();
    let mut st = TrainState::init(&targets, &h).unwrap();
    st.parts[1].bregman[(0, 0)] = f64::NAN;
    match st.train(&h, Formulation::Distinctive) {
        Err(cosparse_core::Error::Divergence { appliance, iteration }) => {
            assert_eq!((appliance.as_str(), iteration), ("app1", 1));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn hyperparams_json() {
    let h: Hyperparams = serde_json::from_str(r#"{"lambda": 0.3, "bregman_variant": "paper_literal"}"#).unwrap();
    assert_eq!(h.lambda, 0.3);
    assert_eq!(h.bregman_variant, BregmanVariant::PaperLiteral);
    assert_eq!(h.eta, 0.2);
    assert_eq!(h.atoms, 3);
    assert!(serde_json::from_str::<Hyperparams>(r#"{"lamda": 0.3}"#).is_err());
    assert_eq!("distinctive".parse::<Formulation>().unwrap(), Formulation::Distinctive);
}
