use super::*;
use crate::data::{MixedDataset, MixedInput, Sample, Schema};

fn line(n: usize, source: usize, f: impl Fn(f64) -> f64) -> Vec<Sample<f64>> {
    (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            Sample {
                input: MixedInput::numeric(vec![x], source),
                y: f(x),
            }
        })
        .collect()
}

fn quick(epochs: usize, beta: f64) -> FfnnConfig {
    FfnnConfig {
        hidden: vec![16],
        learning_rate: 1e-2,
        epochs,
        batch_size: 8,
        beta,
        patience: epochs,
        seed: 3,
    }
}

fn mse(model: &FfnnFusionModel<f64>, rows: &[Sample<f64>]) -> f64 {
    rows.iter()
        .map(|r| (model.predict(&r.input).unwrap() - r.y).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

#[test]
fn ffnn_fits_a_line() {
    let rows = line(20, 0, |x| 2.0 * x);
    let data = MixedDataset::new(Schema::numeric_only(1, 1), rows.clone()).unwrap();
    let (model, history) = FfnnFusionModel::fit(&data, &quick(600, 0.0)).unwrap();
    assert!(mse(&model, &rows) < 1e-3, "mse {}", mse(&model, &rows));
    assert!(history.iter().all(|l| l.is_finite()));
}

#[test]
fn larger_beta_shrinks_weights() {
    let rows = line(20, 0, |x| (3.0 * x).sin());
    let data = MixedDataset::new(Schema::numeric_only(1, 1), rows).unwrap();
    let norm = |beta| {
        let (m, _) = FfnnFusionModel::fit(&data, &quick(300, beta)).unwrap();
        m.network.params().iter().map(|p| p * p).sum::<f64>()
    };
    assert!(norm(1.0) < norm(0.0));
}

#[test]
fn ffnn_is_deterministic() {
    let rows = line(12, 0, |x| x * x);
    let data = MixedDataset::new(Schema::numeric_only(1, 1), rows).unwrap();
    let (a, ha) = FfnnFusionModel::fit(&data, &quick(50, 1e-4)).unwrap();
    let (b, hb) = FfnnFusionModel::fit(&data, &quick(50, 1e-4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn smf_with_identical_lf_is_no_worse_than_hf_only() {
    let f = |x: f64| (2.0 * x).sin();
    let hf = line(6, 0, f);
    let mut rows = hf.clone();
    rows.extend(line(40, 1, f));
    let data = MixedDataset::new(Schema::numeric_only(1, 2), rows).unwrap();
    let hf_only = MixedDataset::new(Schema::numeric_only(1, 1), hf).unwrap();
    let test = line(101, 0, f);

    let cfg = quick(800, 0.0);
    let (ffnn, _) = FfnnFusionModel::fit(&hf_only, &cfg).unwrap();
    let smf_cfg = SmfConfig {
        stages: vec![cfg],
        use_raw_inputs_in_final: true,
        seed: 3,
    };
    let (smf, histories) = SmfModel::fit(&data, &smf_cfg).unwrap();
    assert_eq!(histories.len(), 2);
    assert_eq!(smf.order(), vec![1, 0]);
    let smf_mse = test.iter().map(|r| (smf.predict(&r.input).unwrap() - r.y).powi(2)).sum::<f64>() / 101.0;
    assert!(smf_mse <= mse(&ffnn, &test) * 1.05, "smf {smf_mse} ffnn {}", mse(&ffnn, &test));
}

#[test]
fn lf_order_is_a_permutation() {
    for seed in 0..20 {
        let mut order = smf_order(5, seed);
        order.sort_unstable();
        assert_eq!(order, vec![1, 2, 3, 4]);
    }
    assert_ne!((0..20).map(|s| smf_order(5, s)).collect::<std::collections::HashSet<_>>().len(), 1);
}

#[test]
fn smf_rejects_single_source() {
    let data = MixedDataset::new(Schema::numeric_only(1, 1), line(5, 0, |x| x)).unwrap();
    let err = SmfModel::fit(&data, &SmfConfig::default()).unwrap_err();
    assert!(err.to_string().contains("SMF requires ≥2 sources"));
}

#[test]
fn smf_final_stage_without_raw_inputs() {
    let mut rows = line(6, 0, |x| 2.0 * x + 1.0);
    rows.extend(line(30, 1, |x| x));
    let data = MixedDataset::new(Schema::numeric_only(1, 2), rows).unwrap();
    let cfg = SmfConfig {
        stages: vec![quick(400, 0.0)],
        use_raw_inputs_in_final: false,
        seed: 1,
    };
    let (smf, _) = SmfModel::fit(&data, &cfg).unwrap();
    assert_eq!(smf.stages[1].network.n_inputs(), 1);
    let p = smf.predict(&MixedInput::numeric(vec![0.5], 0)).unwrap();
    assert!((p - 2.0).abs() < 0.1, "{p}");
}
