use bucketopt::model::{check_solution, load_instance, ModelError, NetworkInstance, ReceiverSpec, Sensitivity, Solution};

const TWO_RECEIVERS: &str = r#"{
  "transmitters": 1,
  "packet_size": 1.0,
  "k_max": 100,
  "receivers": [
    { "label": "video", "feedback_delay": 5, "p": "inf", "delay_bound": 50 },
    { "label": "ftp", "feedback_delay": 5, "p": 1, "delay_bound": 50, "fixed_k": 25 }
  ],
  "erasure": [[0.4, 0.1]]
}"#;

#[test]
fn loads_and_round_trips() {
    let inst = load_instance(TWO_RECEIVERS).unwrap();
    assert_eq!(inst.receivers[0].p, Sensitivity::Infinite);
    assert_eq!(inst.receivers[1].fixed_k, Some(25.0));
    assert_eq!(inst.delivery(0, 0), 0.6);
    let again = load_instance(&inst.to_json().unwrap()).unwrap();
    assert_eq!(again, inst);
}

#[test]
fn parse_errors_carry_a_position() {
    let broken = TWO_RECEIVERS.replace("\"k_max\": 100,", "\"k_max\": ,");
    match load_instance(&broken) {
        Err(ModelError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_violation_is_named() {
    let bad = TWO_RECEIVERS.replace("\"erasure\": [[0.4, 0.1]]", "\"erasure\": [[1.0, 0.1, 0.2]]").replace("\"p\": 1,", "\"p\": 0.5,");
    let err = load_instance(&bad).unwrap_err();
    let ModelError::Invalid(v) = err else { panic!() };
    let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
    assert!(fields.contains(&"receivers[1].p"), "{fields:?}");
    assert!(fields.contains(&"erasure[0]"), "{fields:?}");
    assert!(fields.contains(&"erasure[0][0]"), "{fields:?}");
}

#[test]
fn solution_checks() {
    let inst = NetworkInstance::single_ap(vec![ReceiverSpec::new("a", 5.0, Sensitivity::Finite(2.0), 6.0)], vec![0.4], 1.0, 100.0);
    let good = Solution {
        bucket_sizes: vec![3.0],
        scheduling: vec![vec![1.0]],
        rates: vec![0.6],
        aux_rates: None,
        objective: 0.0,
    };
    assert!(check_solution(&inst, &good, 1e-9).unwrap().ok);
    // d(2) at K=3 is 10/sqrt(3) > 5.7.
    let mut tight = inst.clone();
    tight.receivers[0].delay_bound = 5.7;
    assert!(!check_solution(&tight, &good, 1e-9).unwrap().ok);
    let over = Solution { rates: vec![0.7], ..good.clone() };
    assert!(!check_solution(&inst, &over, 1e-9).unwrap().ok);
    let wrong_shape = Solution { scheduling: vec![vec![0.5, 0.5]], ..good };
    assert!(matches!(check_solution(&inst, &wrong_shape, 1e-9), Err(ModelError::Dimension(_))));
}

#[test]
fn data_rate_formula() {
    let inst = NetworkInstance::single_ap(vec![ReceiverSpec::new("a", 5.0, Sensitivity::Finite(2.0), 6.0)], vec![0.4], 2.0, 100.0);
    let sol = Solution {
        bucket_sizes: vec![3.0],
        scheduling: vec![vec![1.0]],
        rates: vec![0.6],
        aux_rates: None,
        objective: 0.0,
    };
    // L K / (K/r + D) = 2 * 3 / 10.
    assert!((sol.data_rate(&inst, 0) - 0.6).abs() < 1e-15);
    assert_eq!(sol.min_data_rate(&inst), sol.data_rate(&inst, 0));
}
