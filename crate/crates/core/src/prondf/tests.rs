use super::train::{Grads, Row};
use super::*;
use crate::data::{CategoricalVariable, MixedDataset, Sample};
use crate::neural::VariationalLayer;
use crate::numerics::{finite_difference_grad, Matrix};

fn mixed_dataset(n_per_source: usize, ds: usize, with_cat: bool) -> MixedDataset<f64> {
    let cats = if with_cat {
        vec![CategoricalVariable::new("t1", vec!["a".into(), "b".into(), "c".into()])]
    } else {
        Vec::new()
    };
    let schema = Schema::new(vec!["x1".into(), "x2".into()], cats, ds);
    let mut rng = RngStream::new(99, 0);
    let mut rows = Vec::new();
    for s in 0..ds {
        for i in 0..n_per_source {
            let x = vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(0.0, 2.0)];
            let tc = if with_cat { vec![i % 3] } else { Vec::new() };
            let y = (2.0f64 * x[0]).sin() + 0.3 * x[1] + 0.2 * s as f64 + tc.first().map_or(0.0, |&t| 0.1 * t as f64);
            rows.push(Sample {
                input: MixedInput::new(x, tc, s),
                y,
            });
        }
    }
    MixedDataset::new(schema, rows).unwrap()
}

fn small_config() -> ProNdfConfig {
    ProNdfConfig {
        hidden: vec![6, 5],
        prior_sigma: 0.7,
        weights: LossWeights {
            alpha1: 0.3,
            alpha2: 0.2,
            alpha3: 0.01,
            gamma: 0.05,
        },
        train: TrainConfig {
            epochs: 30,
            batch_size: 4,
            learning_rate: 1e-2,
            m_train: 3,
            m_pred: 20,
            patience: 200,
            seed: 5,
        },
        ..ProNdfConfig::default()
    }
}

fn degenerate_block1(model: &mut ProNdfModel<f64>) {
    if let SourceBlock::Variational(v) = &model.block1 {
        let layers = v
            .layers()
            .iter()
            .map(|l| {
                let c = l.dim();
                let f = Matrix::from_fn(c, c, |i, j| if i == j { 1e-300 } else { 0.0 });
                VariationalLayer::from_factor(l.shape, l.mean.clone(), &f).unwrap()
            })
            .collect();
        model.block1 = SourceBlock::Variational(VariationalNetwork::from_layers(layers).unwrap());
    }
}

#[test]
fn interval_score_hand_cases() {
    assert_eq!(interval_score_bounds(1.5, 0.0, 1.0, 0.05), 21.0);
    assert_eq!(interval_score_bounds(-0.25, 0.0, 1.0, 0.05), 11.0);
    assert_eq!(interval_score_bounds(0.3, 0.0, 1.0, 0.05), 1.0);
    let s = interval_score(0.1, 0.0, 1.0, 0.05);
    assert_eq!(s, 2.0 * 1.96);
}

#[test]
fn interval_score_monotone_in_sigma_outside_interval() {
    let (y, mu) = (3.0, 0.0);
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let sigma = k as f64 * 0.01;
        let s = interval_score(y, mu, sigma, 0.05);
        assert!(s >= 2.0 * 1.96 * sigma);
        if mu + 1.96 * sigma < y {
            assert!(s <= prev);
        }
        prev = s;
    }
}

#[test]
fn ensemble_formulas() {
    let (m, v) = ensemble_moments(&[(0.37, 0.91)]);
    assert_eq!(m, 0.37);
    assert_eq!(v, 0.91 * 0.91);
    let (m, v) = ensemble_moments(&[(1.5f64, 0.2); 7]);
    assert!((m - 1.5).abs() < 1e-15 && (v - 0.04).abs() < 1e-15);
    let (m, v) = ensemble_moments(&[(0.0, 1.0), (2.0, 1.0)]);
    assert_eq!((m, v), (1.0, 2.0));
    let members = [(0.3, 0.5), (-0.2, 0.1), (1.1, 0.7)];
    let (_, v) = ensemble_moments(&members);
    let aleatoric = members.iter().map(|(_, s)| s * s).sum::<f64>() / 3.0;
    assert!(v >= aleatoric - 1e-12);
}

#[test]
fn sigma_is_positive() {
    let mut rng = RngStream::new(1, 0);
    for _ in 0..100_000 {
        let raw: f64 = rng.normal::<f64>() * 400.0;
        assert!(sigma_from_raw(raw) > 0.0);
    }
    assert!(sigma_from_raw(-1e4f64) >= SIGMA_FLOOR);
}

#[test]
fn degenerate_block1_ignores_rng() {
    let data = mixed_dataset(4, 2, true);
    let mut model = ProNdfModel::init(data.schema().clone(), Standardizer::fit(&data), &small_config()).unwrap();
    degenerate_block1(&mut model);
    let p = &data.rows()[3].input;
    let a = model.forward_realization(p, &mut RngStream::new(1, 1)).unwrap();
    let b = model.forward_realization(p, &mut RngStream::new(2, 9)).unwrap();
    assert_eq!(a, b);
    let rows = model.export_fidelity_manifold(3, 4).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!((rows[0].z1, rows[0].z2), (rows[2].z1, rows[2].z2));
    assert_eq!((rows[3].source, rows[3].realization), (2, 1));
}

#[test]
fn composite_network_matches_hand_evaluation() {
    let schema = Schema::numeric_only(1, 2);
    let config = ProNdfConfig {
        hidden: vec![2],
        ..ProNdfConfig::default()
    };
    let mut model = ProNdfModel::init(schema, Standardizer::identity(1), &config).unwrap();
    degenerate_block1(&mut model);
    let theta1: Vec<f64> = match &model.block1 {
        SourceBlock::Variational(v) => v.mean_realization().theta,
        _ => unreachable!(),
    };
    let p3: Vec<f64> = (0..model.block3.n_params()).map(|i| 0.1 * (i as f64) - 0.7).collect();
    model.block3.params_mut().copy_from_slice(&p3);

    // Block 1: 2 → 5 tanh → 2 on the one-hot of source 2.
    let x = 0.45;
    let hidden1: Vec<f64> = (0..5).map(|h| (theta1[2 * h + 1] + theta1[10 + h]).tanh()).collect();
    let zs: Vec<f64> = (0..2)
        .map(|o| (0..5).map(|h| theta1[15 + 5 * o + h] * hidden1[h]).sum::<f64>() + theta1[25 + o])
        .collect();
    // Block 3: [x, z1, z2] → 2 tanh → (μ, σ_raw).
    let inp = [x, zs[0], zs[1]];
    let hidden3: Vec<f64> = (0..2)
        .map(|h| ((0..3).map(|j| p3[3 * h + j] * inp[j]).sum::<f64>() + p3[6 + h]).tanh())
        .collect();
    let out: Vec<f64> = (0..2)
        .map(|o| (0..2).map(|h| p3[8 + 2 * o + h] * hidden3[h]).sum::<f64>() + p3[12 + o])
        .collect();
    let got = model
        .forward_realization(&MixedInput::numeric(vec![x], 1), &mut RngStream::new(0, 0))
        .unwrap();
    assert!((got.mu - out[0]).abs() < 1e-10);
    let sigma = (1.0 + out[1].exp()).ln() + 1e-6;
    assert!((got.sigma.unwrap() - sigma).abs() < 1e-10);
}

fn rows_of(model: &ProNdfModel<f64>, data: &MixedDataset<f64>) -> Vec<Row<f64>> {
    model.encode_rows(data).unwrap()
}

#[test]
fn zero_weights_give_mean_nll_and_perfect_prediction_gives_half_ln_2pi() {
    let data = mixed_dataset(3, 2, false);
    let mut config = small_config();
    config.weights = LossWeights {
        alpha1: 0.0,
        alpha2: 0.0,
        alpha3: 0.0,
        gamma: 0.05,
    };
    let mut model = ProNdfModel::init(data.schema().clone(), Standardizer::identity(2), &config).unwrap();
    let rows = rows_of(&model, &data);
    let target = 0.8;
    let rows: Vec<Row<f64>> = rows.into_iter().map(|r| Row { y: target, ..r }).collect();
    let refs: Vec<&Row<f64>> = rows.iter().collect();
    // Last layer: zero weights, bias (y, softplus⁻¹(1 − 1e-6)).
    let n3 = model.block3.n_params();
    let last = model.block3.shapes().last().unwrap().n_params();
    for p in &mut model.block3.params_mut()[n3 - last..] {
        *p = 0.0;
    }
    let raw = ((1.0f64 - 1e-6).exp() - 1.0).ln();
    model.block3.params_mut()[n3 - 2] = target;
    model.block3.params_mut()[n3 - 1] = raw;
    let mut rng = RngStream::new(3, 0);
    let reals: Vec<_> = (0..4).map(|_| model.block1.draw(&mut rng)).collect();
    let parts = model.batch_loss(&refs, &reals, &config, None).unwrap();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((parts.nll - half_ln_2pi).abs() < 1e-12);
    assert_eq!(parts.total, parts.nll);
}

fn check_gradient(config: &ProNdfConfig, with_cat: bool) {
    let data = mixed_dataset(2, 3, with_cat);
    let model = ProNdfModel::init(data.schema().clone(), Standardizer::fit(&data), config).unwrap();
    let rows = rows_of(&model, &data);
    let refs: Vec<&Row<f64>> = rows.iter().take(5).collect();
    let mut rng = RngStream::new(8, 0);
    let n1 = model.block1.network().n_params();
    let eps: Vec<Vec<f64>> = (0..3).map(|_| rng.normals(n1)).collect();

    let p1 = model.block1.flat_params();
    let p2 = model.block2.as_ref().map_or(Vec::new(), |b| b.params().to_vec());
    let p3 = model.block3.params().to_vec();
    let mut flat = p1.clone();
    flat.extend(&p2);
    flat.extend(&p3);
    let (n1v, n2) = (p1.len(), p2.len());

    let rebuild = |flat: &[f64]| {
        let mut m = model.clone();
        m.block1.set_flat_params(&flat[..n1v]).unwrap();
        if let Some(b2) = m.block2.as_mut() {
            b2.params_mut().copy_from_slice(&flat[n1v..n1v + n2]);
        }
        m.block3.params_mut().copy_from_slice(&flat[n1v + n2..]);
        let reals: Vec<_> = match &m.block1 {
            SourceBlock::Variational(v) => eps.iter().map(|e| v.realization_from_eps(e.clone()).unwrap()).collect(),
            SourceBlock::Deterministic(_) => vec![m.block1.draw(&mut RngStream::new(0, 0))],
        };
        (m, reals)
    };
    let loss = |flat: &[f64]| {
        let (m, reals) = rebuild(flat);
        m.batch_loss(&refs, &reals, config, None).unwrap().total
    };
    let (m, reals) = rebuild(&flat);
    let mut g = Grads::zeros_like(&m);
    let v = m.batch_loss(&refs, &reals, config, Some(&mut g)).unwrap().total;
    assert!((v - loss(&flat)).abs() < 1e-14);
    let mut analytic = g.b1.clone();
    analytic.extend(&g.b2);
    analytic.extend(&g.b3);
    let fd = finite_difference_grad(loss, &flat, 1e-6);
    let scale = fd.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for (i, (a, b)) in analytic.iter().zip(&fd).enumerate() {
        assert!((a - b).abs() <= 1e-4 * (b.abs().max(1e-2 * scale)), "component {i}: {a} vs {b}");
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    check_gradient(&small_config(), true);
    check_gradient(&small_config(), false);
}

#[test]
fn ablation_gradients_match_finite_differences() {
    let mut c = small_config();
    c.probabilistic_block1 = false;
    check_gradient(&c, true);
    let mut c = small_config();
    c.probabilistic_output = false;
    check_gradient(&c, true);
}

#[test]
fn non_finite_parameters_are_reported() {
    let data = mixed_dataset(2, 2, false);
    let mut model = ProNdfModel::init(data.schema().clone(), Standardizer::fit(&data), &small_config()).unwrap();
    model.block3.params_mut()[0] = f64::NAN;
    let rows = rows_of(&model, &data);
    let refs: Vec<&Row<f64>> = rows.iter().collect();
    let reals = vec![model.block1.draw(&mut RngStream::new(0, 0))];
    let err = model.batch_loss(&refs, &reals, &small_config(), None).unwrap_err();
    assert!(err.to_string().contains("likelihood"), "{err}");
}

#[test]
fn constant_target_is_learned() {
    let schema = Schema::numeric_only(1, 1);
    let rows = (0..20)
        .map(|i| Sample {
            input: MixedInput::numeric(vec![i as f64 / 19.0], 0),
            y: 3.0,
        })
        .collect();
    let data = MixedDataset::new(schema, rows).unwrap();
    let mut config = small_config();
    config.train.epochs = 150;
    let (model, history) = train(&data, &config).unwrap();
    assert!(history.last().unwrap().loss < history[0].loss);
    let (mu, _) = model.predict(&MixedInput::numeric(vec![0.5], 0), 50, 1).unwrap();
    assert!((mu - 3.0).abs() < 0.05 * 3.0 + 0.05, "{mu}");
}

#[test]
fn training_is_deterministic() {
    let data = mixed_dataset(6, 2, true);
    let (a, ha) = train(&data, &small_config()).unwrap();
    let (b, hb) = train(&data, &small_config()).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a, b);
    let inputs = data.inputs();
    assert_eq!(a.predict_many(&inputs, 10, 3).unwrap(), b.predict_many(&inputs, 10, 3).unwrap());
}

#[test]
fn categorical_manifold_export() {
    let data = mixed_dataset(6, 2, true);
    let (model, _) = train(&data, &small_config()).unwrap();
    let a = model.export_categorical_manifold().unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, model.export_categorical_manifold().unwrap());
    let plain = mixed_dataset(4, 2, false);
    let (model, _) = train(&plain, &small_config()).unwrap();
    assert!(model.export_categorical_manifold().is_err());
}

#[test]
fn predictions_reject_unseen_levels_and_serialize() {
    let data = mixed_dataset(4, 2, true);
    let (model, _) = train(&data, &small_config()).unwrap();
    assert!(model.predict(&MixedInput::new(vec![0.0, 0.0], vec![5], 0), 5, 0).is_err());
    assert!(model.predict(&MixedInput::new(vec![0.0, 0.0], vec![0], 2), 5, 0).is_err());
    let json = serde_json::to_string(&model).unwrap();
    let back: ProNdfModel<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, model);
}

#[test]
fn config_validation() {
    let mut c = ProNdfConfig::default();
    c.weights.gamma = 1.0;
    assert!(c.validate().is_err());
    let mut c = ProNdfConfig::default();
    c.train.m_train = 0;
    assert!(c.validate().is_err());
    assert!(serde_json::from_str::<ProNdfConfig>(r#"{"hiden": [3]}"#).is_err());
}
