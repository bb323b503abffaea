use deferlab::datagen::{FeatureDistribution, SyntheticConfig, SyntheticSource};
use deferlab::defer::DeferDataset;
use deferlab::eval::evaluate;
use deferlab::surrogates::SurrogateLoss;
use deferlab::train::*;
use proptest::prelude::*;
use rand::Rng as _;

fn planted(seed: u64, n: usize) -> (DeferDataset, DeferDataset, DeferDataset) {
    let cfg = SyntheticConfig {
        dim: 5,
        n,
        distribution: FeatureDistribution::GaussianMixture {
            components: 4,
            upper: 1.0,
        },
        p_m: 0.0,
        p_h0: 0.3,
        p_h1: 0.0,
        seed,
    };
    let src = SyntheticSource::new(&cfg).unwrap();
    (
        src.instance().unwrap().dataset,
        src.sample(n / 5, 4).unwrap(),
        src.heldout(2000).unwrap(),
    )
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn zero_system(method: Method, d: usize, outputs: usize) -> TrainedSystem {
    TrainedSystem {
        method,
        model: ScoreModel::zeros(Architecture::Linear, d, outputs).unwrap(),
        aux_model: None,
        tau: 0.0,
        val_history: Vec::new(),
        best_epoch: 0,
    }
}

fn table(y: Vec<usize>, h: Vec<usize>, classes: usize) -> DeferDataset {
    let rows = (0..y.len()).map(|i| vec![i as f64 / 10.0, 1.0]).collect();
    DeferDataset::new(rows, y, h, classes).unwrap()
}

#[test]
fn same_seed_gives_identical_weights() {
    let (train, val, _) = planted(1, 300);
    for method in ["rs", "ova", "confidence", "triage"] {
        let m: Method = method.parse().unwrap();
        let a = train_method(m, &train, &val, &quick(15, 4)).unwrap();
        let b = train_method(m, &train, &val, &quick(15, 4)).unwrap();
        assert_eq!(a, b, "{method}");
    }
    let c = train_surrogate(&train, &val, &quick(15, 5)).unwrap();
    let d = train_surrogate(&train, &val, &quick(15, 4)).unwrap();
    assert_ne!(c.model.weights(), d.model.weights());
}

#[test]
fn best_epoch_is_at_least_the_last_epoch() {
    let (train, val, _) = planted(2, 400);
    for loss in ["rs", "rs2", "ce", "ova", "moe"] {
        let cfg = TrainConfig {
            loss: loss.parse().unwrap(),
            ..quick(40, 2)
        };
        let sys = train_surrogate(&train, &val, &cfg).unwrap();
        let h = &sys.val_history;
        assert_eq!(h.len(), 40);
        let best = h[sys.best_epoch];
        assert!(best >= *h.last().unwrap(), "{loss}");
        assert!(h.iter().all(|&v| v <= best));
        assert!(
            h[..sys.best_epoch].iter().all(|&v| v < best),
            "{loss}: not earliest"
        );
        let at_zero = 1.0 - sys.system_loss(&val).unwrap();
        assert_eq!(at_zero, best, "{loss}");
    }
}

#[test]
fn constant_labels_give_zero_train_error() {
    let mut rng = deferlab::rng::stream(11, 1);
    let n = 120;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let h: Vec<usize> = (0..n).map(|_| usize::from(rng.gen_bool(0.5))).collect();
    let ds = DeferDataset::new(rows, vec![0; n], h, 2).unwrap();
    for loss in ["rs", "rs2", "ce", "ova", "moe", "rs_alpha:0.5"] {
        let cfg = TrainConfig {
            loss: loss.parse().unwrap(),
            ..quick(60, 3)
        };
        let sys = train_surrogate(&ds, &ds, &cfg).unwrap();
        assert_eq!(sys.system_loss(&ds).unwrap(), 0.0, "{loss}");
    }
}

#[test]
fn adam_step_with_analytic_gradient_matches_finite_differences() {
    let mut rng = deferlab::rng::stream(12, 3);
    for loss in [
        SurrogateLoss::Rs,
        SurrogateLoss::Ova,
        SurrogateLoss::CeAlpha(0.3),
    ] {
        let (d, out) = (4, 4);
        let model = ScoreModel::new(Architecture::Linear, d, out, &mut rng).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (y, hc) = (1, true);
        let total = |m: &ScoreModel| loss.eval(&m.forward(&x), y, hc).unwrap().value;
        let e = loss.eval(&model.forward(&x), y, hc).unwrap();
        // linear layer: row k of the matrix gets grad_k * x, bias k gets grad_k
        let mut analytic = vec![0.0; model.weights().len()];
        for k in 0..out {
            for j in 0..d {
                analytic[k * d + j] = e.grad[k] * x[j];
            }
            analytic[out * d + k] = e.grad[k];
        }
        let fd: Vec<f64> = (0..analytic.len())
            .map(|p| {
                let shift = |s: f64| {
                    let mut w = model.weights().to_vec();
                    w[p] += s;
                    total(&ScoreModel::from_weights(Architecture::Linear, d, out, w).unwrap())
                };
                (shift(1e-6) - shift(-1e-6)) / 2e-6
            })
            .collect();
        let mut a = model.weights().to_vec();
        let mut b = a.clone();
        let mut opt_a = Adam::new(a.len(), 0.01, 0.9, 0.999, 1e-8);
        let mut opt_b = opt_a.clone();
        for _ in 0..3 {
            opt_a.step(&mut a, &analytic);
            opt_b.step(&mut b, &fd);
        }
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-6, "{loss}: {p} vs {q}");
        }
    }
}

#[test]
fn fit_tau_trivial_sentinels() {
    // zero model: every score ties at 0, the classifier says class 0
    let sys = zero_system(Method::Surrogate(SurrogateLoss::Rs), 2, 3);
    let perfect_human = table(vec![1; 6], vec![1; 6], 2);
    assert_eq!(fit_tau(&sys, &perfect_human).unwrap(), f64::NEG_INFINITY);
    let wrong_human = table(vec![0; 6], vec![1; 6], 2);
    assert_eq!(fit_tau(&sys, &wrong_human).unwrap(), f64::INFINITY);
    let empty_fails = DeferDataset::new(vec![], vec![], vec![], 2);
    if let Ok(e) = empty_fails {
        assert!(fit_tau(&sys, &e).is_err());
    }

    let sel = zero_system(Method::SelectivePrediction, 2, 2);
    assert_eq!(fit_tau(&sel, &perfect_human).unwrap(), f64::NEG_INFINITY);
    assert_eq!(fit_tau(&sel, &wrong_human).unwrap(), f64::INFINITY);
}

#[test]
fn fit_tau_matches_exhaustive_scan() {
    let (train, val, _) = planted(5, 200);
    let sys = train_surrogate(&train, &val, &quick(10, 5)).unwrap();
    let small = val.subset(&[0, 1, 2, 3, 4]).unwrap();
    let tau = fit_tau(&sys, &small).unwrap();
    let acc = |t: f64| {
        evaluate(
            &TrainedSystem {
                tau: t,
                ..sys.clone()
            },
            &small,
        )
        .unwrap()
        .system_accuracy
    };
    let mut scores: Vec<f64> = small.rows().map(|x| sys.rejection_score(x)).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
    cands.extend(scores.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let best = cands.iter().map(|&t| acc(t)).fold(0.0, f64::max);
    assert_eq!(acc(tau), best);
}

#[test]
fn compare_confidence_extremes() {
    let ds = table(vec![0, 1, 0, 1], vec![0, 1, 1, 0], 2);
    // class 1 preferred with confidence strictly below 1
    let clf = ScoreModel::from_weights(
        Architecture::Linear,
        2,
        2,
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
    )
    .unwrap();
    let aux = |bias: f64| {
        ScoreModel::from_weights(Architecture::Linear, 2, 1, vec![0.0, 0.0, bias]).unwrap()
    };
    let never = TrainedSystem {
        aux_model: Some(aux(-800.0)),
        model: clf.clone(),
        ..zero_system(Method::CompareConfidence, 2, 2)
    };
    assert!(ds.rows().all(|x| !never.decide(x).unwrap().deferred));
    let always = TrainedSystem {
        aux_model: Some(aux(800.0)),
        model: clf,
        ..zero_system(Method::CompareConfidence, 2, 2)
    };
    assert!(ds.rows().all(|x| always.decide(x).unwrap().deferred));
}

#[test]
fn compare_confidence_lands_between_classifier_and_oracle() {
    let (train, val, test) = planted(6, 600);
    let sys = train_compare_confidence(&train, &val, &quick(60, 6)).unwrap();
    let acc = evaluate(&sys, &test).unwrap().system_accuracy;
    let alone = evaluate(
        &TrainedSystem {
            tau: f64::INFINITY,
            ..sys.clone()
        },
        &test,
    )
    .unwrap()
    .system_accuracy;
    let oracle = (0..test.len())
        .filter(|&i| test.human_correct(i) || sys.classifier_label(test.row(i)) == test.label(i))
        .count() as f64
        / test.len() as f64;
    assert!(alone <= acc && acc <= oracle, "{alone} {acc} {oracle}");
}

#[test]
fn triage_filter_definition() {
    let clf = ScoreModel::from_weights(
        Architecture::Linear,
        2,
        2,
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    )
    .unwrap();
    // classifier always says 1
    let y = vec![0, 1, 1, 0, 1, 0];
    let human_wrong = table(y.clone(), y.iter().map(|v| 1 - v).collect(), 2);
    assert_eq!(
        triage_filter(&clf, &human_wrong),
        (0..6).collect::<Vec<_>>()
    );
    let human_right = table(y.clone(), y.clone(), 2);
    assert_eq!(triage_filter(&clf, &human_right), vec![1, 2, 4]);
}

#[test]
fn triage_rejector_tracks_the_loss_comparison() {
    let (train, val, _) = planted(7, 800);
    let sys = train_differentiable_triage(&train, &val, &quick(100, 7)).unwrap();
    let target = human_beats_classifier(&sys.model, &train);
    let agree = (0..train.len())
        .filter(|&i| sys.decide_at(train.row(i), 0.0).unwrap().deferred == target[i])
        .count();
    let rate = agree as f64 / train.len() as f64;
    assert!(rate >= 0.9, "agreement {rate}");
}

#[test]
fn singleton_alpha_grid_equals_direct_training() {
    let (train, val, _) = planted(8, 300);
    let cfg = TrainConfig {
        loss: SurrogateLoss::RsAlpha(0.5),
        alpha_grid: vec![0.5],
        ..quick(20, 8)
    };
    assert_eq!(
        search_alpha(&train, &val, &cfg).unwrap(),
        train_surrogate(&train, &val, &cfg).unwrap()
    );
    let no_alpha = TrainConfig {
        loss: SurrogateLoss::Rs,
        ..cfg.clone()
    };
    assert!(search_alpha(&train, &val, &no_alpha).is_err());
    let empty = TrainConfig {
        alpha_grid: vec![],
        ..cfg
    };
    assert!(search_alpha(&train, &val, &empty).is_err());
}

#[test]
fn alpha_search_prefers_the_realizable_end() {
    let (train, val, _) = planted(9, 1000);
    let cfg = TrainConfig {
        loss: SurrogateLoss::RsAlpha(1.0),
        alpha_grid: vec![0.0, 1.0],
        ..quick(150, 9)
    };
    let sys = search_alpha(&train, &val, &cfg).unwrap();
    assert_eq!(sys.method, Method::Surrogate(SurrogateLoss::RsAlpha(1.0)));
}

#[test]
fn deferred_accuracy_rises_with_alpha() {
    let mut low = 0.0;
    let mut high = 0.0;
    for seed in 0..3 {
        let (train, val, test) = planted(20 + seed, 600);
        for (alpha, acc) in [(0.0, &mut low), (1.0, &mut high)] {
            let cfg = TrainConfig {
                loss: SurrogateLoss::RsAlpha(alpha),
                ..quick(100, seed)
            };
            let sys = train_surrogate(&train, &val, &cfg).unwrap();
            *acc += evaluate(&sys, &test)
                .unwrap()
                .human_accuracy_deferred
                .unwrap_or(0.0);
        }
    }
    assert!(high > low, "alpha 1: {high}, alpha 0: {low}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_output_scaling_keeps_decisions(u in 0.01f64..100.0, seed in 0u64..4) {
        let (train, val, _) = planted(30 + seed, 150);
        let sys = train_surrogate(&train, &val, &quick(5, seed)).unwrap();
        let mut scaled = sys.clone();
        scaled.model.scale_outputs(u);
        for x in val.rows() {
            prop_assert_eq!(sys.decide_at(x, 0.0).unwrap(), scaled.decide_at(x, 0.0).unwrap());
        }
    }
}
