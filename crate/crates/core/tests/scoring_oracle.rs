use deltascope::scoring::{pass_at_1, safety_score, EvalLog, EvalRecord, SafetyPolarity};
use deltascope_oracle::{brute_fraction, brute_pass_at_1, rng};
use proptest::prelude::*;
use rand::Rng;

fn random_records(seed: u64, n_records: usize, samples: impl Fn(&mut rand_chacha::ChaCha8Rng) -> usize) -> Vec<Vec<bool>> {
    let mut r = rng(seed);
    (0..n_records)
        .map(|_| {
            let n = samples(&mut r);
            let p: f64 = r.random();
            (0..n).map(|_| r.random_bool(p)).collect()
        })
        .collect()
}

fn to_log(records: &[Vec<bool>]) -> EvalLog {
    EvalLog::new(
        records
            .iter()
            .enumerate()
            .map(|(i, o)| EvalRecord { id: format!("q{i}"), outcomes: o.clone() })
            .collect(),
    )
    .unwrap()
}

fn jsonl(records: &[Vec<bool>]) -> String {
    records
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}\n", serde_json::json!({"id": format!("q{i}"), "outcomes": o})))
        .collect()
}

#[test]
fn pass_at_1_matches_enumeration_on_fixture() {
    let records = random_records(50, 50, |_| 8);
    let got = pass_at_1(&EvalLog::from_jsonl(jsonl(&records).as_bytes()).unwrap()).unwrap();
    assert!((got - brute_pass_at_1(&records)).abs() < 1e-12);
}

#[test]
fn thousand_record_log() {
    let records = random_records(1000, 1000, |r| r.random_range(1..=16));
    let log = to_log(&records);
    assert!((pass_at_1(&log).unwrap() - brute_pass_at_1(&records)).abs() < 1e-12);

    let verdicts = random_records(1001, 1000, |_| 1);
    let log = to_log(&verdicts);
    let safe = safety_score(&log, SafetyPolarity::SafeFraction).unwrap();
    let harmful = safety_score(&log, SafetyPolarity::HarmfulFraction).unwrap();
    assert!((safe - brute_fraction(&verdicts, true)).abs() < 1e-12);
    assert!((harmful - brute_fraction(&verdicts, false)).abs() < 1e-12);
    assert_eq!(safe + harmful, 1.0);
}

#[test]
fn polarities_complement_on_310_records() {
    let verdicts = random_records(310, 310, |_| 1);
    let log = to_log(&verdicts);
    let safe = safety_score(&log, SafetyPolarity::SafeFraction).unwrap();
    let harmful = safety_score(&log, SafetyPolarity::HarmfulFraction).unwrap();
    assert_eq!(safe + harmful, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn complementarity_is_exact(verdicts in prop::collection::vec(any::<bool>(), 1..400)) {
        let records: Vec<Vec<bool>> = verdicts.iter().map(|&v| vec![v]).collect();
        let log = to_log(&records);
        let safe = safety_score(&log, SafetyPolarity::SafeFraction).unwrap();
        let harmful = safety_score(&log, SafetyPolarity::HarmfulFraction).unwrap();
        prop_assert_eq!(safe + harmful, 1.0);
        prop_assert!((0.0..=1.0).contains(&safe) && (0.0..=1.0).contains(&harmful));
    }

    #[test]
    fn pass_at_1_is_order_invariant(seed in any::<u64>(), n in 1usize..60, shift in 0usize..60) {
        let records = random_records(seed, n, |r| r.random_range(1..=9));
        let base = pass_at_1(&to_log(&records)).unwrap();
        let mut rotated = records.clone();
        rotated.rotate_left(shift % n);
        for o in rotated.iter_mut() {
            o.reverse();
        }
        prop_assert_eq!(pass_at_1(&to_log(&rotated)).unwrap(), base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn single_sample_is_accuracy(verdicts in prop::collection::vec(any::<bool>(), 1..200)) {
        let records: Vec<Vec<bool>> = verdicts.iter().map(|&v| vec![v]).collect();
        let acc = verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64;
        prop_assert!((pass_at_1(&to_log(&records)).unwrap() - acc).abs() < 1e-15);
    }
}
