mod common;

use common::{to_dense, to_matrix};
use deltascope::io::AdapterPair;
use deltascope::linalg::stable_rank;
use deltascope::toy::{
    evaluate_retention, gen_interference_tasks, run_scenario, train, Dataset, Dims, ToyMode,
    ToyModel, ToyRunConfig, ToyScenario, TrainedArtifact,
};
use deltascope::Matrix;
use deltascope_oracle::{gaussian, rng, Dense};

/// One gradient-descent step on a single sample, written out with loops.
fn hand_step(w1: &Dense, w2: &Dense, x: &[f64], y: &[f64], lr: f64, wd: f64) -> (Dense, Dense) {
    let (h, d_in, d_out) = (w1.rows, w1.cols, w2.rows);
    let z: Vec<f64> = (0..h).map(|i| (0..d_in).map(|j| w1.at(i, j) * x[j]).sum()).collect();
    let a: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
    let out: Vec<f64> = (0..d_out).map(|o| (0..h).map(|i| w2.at(o, i) * a[i]).sum()).collect();
    let e: Vec<f64> = out.iter().zip(y).map(|(p, t)| p - t).collect();
    let mut n1 = w1.clone();
    let mut n2 = w2.clone();
    for o in 0..d_out {
        for i in 0..h {
            let g = e[o] * a[i] + wd * w2.at(o, i);
            n2.set(o, i, w2.at(o, i) - lr * g);
        }
    }
    for i in 0..h {
        let back: f64 = (0..d_out).map(|o| e[o] * w2.at(o, i)).sum::<f64>() * (1.0 - a[i] * a[i]);
        for j in 0..d_in {
            let g = back * x[j] + wd * w1.at(i, j);
            n1.set(i, j, w1.at(i, j) - lr * g);
        }
    }
    (n1, n2)
}

#[test]
fn single_full_step_matches_hand_derivation() {
    let mut r = rng(41);
    let (d_in, h, d_out) = (5, 7, 3);
    let w1 = gaussian(&mut r, h, d_in).scale(0.4);
    let w2 = gaussian(&mut r, d_out, h).scale(0.4);
    let x = gaussian(&mut r, 1, d_in);
    let y = gaussian(&mut r, 1, d_out);
    let model = ToyModel::new(to_matrix(&w1), to_matrix(&w2)).unwrap();
    let data = Dataset::new(to_matrix(&x), to_matrix(&y)).unwrap();
    let cfg = ToyRunConfig {
        epochs: 1,
        learning_rate: 0.1,
        weight_decay: 1e-2,
        mode: ToyMode::Full,
        batch_size: 1,
        grad_clip: None,
        ..ToyRunConfig::default()
    };
    let out = train(&model, &data, &cfg).unwrap();
    let TrainedArtifact::Full(trained) = out.artifact else { panic!("full mode") };
    let (n1, n2) = hand_step(&w1, &w2, &x.data, &y.data, 0.1, 1e-2);
    assert!(to_dense(trained.w1()).max_abs_diff(&n1) < 1e-10);
    assert!(to_dense(trained.w2()).max_abs_diff(&n2) < 1e-10);
}

#[test]
fn teacher_difference_is_rank_one() {
    let t = gen_interference_tasks(17, Dims(32, 48, 32), 4).unwrap();
    let diff = t.teacher_b.w1() - t.teacher_a.w1();
    assert!((stable_rank(&diff).unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(t.teacher_b.w2(), t.teacher_a.w2());
}

#[test]
fn rank_one_adapter_update_has_unit_stable_rank() {
    let t = gen_interference_tasks(2, Dims(6, 8, 4), 12).unwrap();
    let base = &t.teacher_a;
    let w1 = AdapterPair::new(
        "w1",
        Matrix::from_fn(8, 1, |i, _| 0.1 * (i as f64 + 1.0)),
        Matrix::from_fn(1, 6, |_, j| 0.2 - 0.05 * j as f64),
        1.0,
    )
    .unwrap();
    let w2 = AdapterPair::new("w2", Matrix::from_fn(4, 1, |i, _| i as f64 - 1.5), Matrix::from_fn(1, 8, |_, j| j as f64 * 0.01), 1.0).unwrap();
    let report = evaluate_retention(base, &TrainedArtifact::Lora { w1, w2 }, (&t.task_a, &t.task_b), 4).unwrap();
    for u in report.updates.values() {
        assert!((u.stable_rank.unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn untrained_base_retains_task_a_exactly() {
    let t = gen_interference_tasks(8, Dims(5, 6, 4), 20).unwrap();
    let same = TrainedArtifact::Full(t.teacher_a.clone());
    let report = evaluate_retention(&t.teacher_a, &same, (&t.task_a, &t.task_b), 16).unwrap();
    assert_eq!(report.task_a_loss_increase, 0.0);
    assert_eq!(report.task_a_loss_before, 0.0);
    assert!(report.task_b_loss_before > 0.0);
}

fn small_scenario(mode: ToyMode) -> ToyScenario {
    ToyScenario {
        dims: Dims(8, 12, 6),
        n_samples: 64,
        top_t: 4,
        run: ToyRunConfig { epochs: 15, mode, ..ToyRunConfig::default() },
    }
}

#[test]
fn reports_are_bitwise_deterministic() {
    for mode in [ToyMode::Full, ToyMode::Lora] {
        let a = run_scenario(&small_scenario(mode)).unwrap();
        let b = run_scenario(&small_scenario(mode)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn lora_respects_rank_ceiling_and_records_every_epoch() {
    for rank in [1, 2, 4] {
        let mut s = small_scenario(ToyMode::Lora);
        s.run.rank = rank;
        let report = run_scenario(&s).unwrap();
        assert_eq!(report.loss_trace.len(), 15);
        assert!(report.loss_trace.iter().all(|l| l.is_finite() && *l >= 0.0));
        for u in report.updates.values() {
            assert!(u.stable_rank.unwrap() <= rank as f64 + 1e-6);
        }
    }
}

#[test]
fn penalty_arm_trains() {
    let mut s = small_scenario(ToyMode::Lora);
    s.run.penalty = Some(deltascope::penalty::PenaltyConfig {
        variant: deltascope::penalty::PenaltyVariant::Both,
        ..Default::default()
    });
    let report = run_scenario(&s).unwrap();
    assert!(report.task_b_loss_after < report.task_b_loss_before);
}
