use asymre_web::{basin, support_sweep, trajectory};

#[test]
fn trajectory_reports_limit_below_critical() {
    let out = trajectory(&[1.0, 0.5, 0.0], &[], 0.2, 5000, 500).unwrap();
    assert_eq!(out["regime"], "below");
    assert_eq!(out["records"].as_array().unwrap().len(), 11);
    let limit: Vec<f64> = serde_json::from_value(out["limit_policy"].clone()).unwrap();
    let last: Vec<f64> = serde_json::from_value(out["final_policy"].clone()).unwrap();
    let l1: f64 = limit.iter().zip(&last).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 1e-6, "{l1}");
}

#[test]
fn trajectory_above_critical_has_no_closed_form() {
    let out = trajectory(&[1.0, 0.5, 0.0], &[], 0.9, 1000, 100).unwrap();
    assert_eq!(out["regime"], "above");
    assert!(out["limit_policy"].is_null());
}

#[test]
fn sweep_support_shrinks_to_one_above_critical() {
    let out = support_sweep(&[1.0, 0.8, 0.6, 0.1, 0.0], &[], 8, 20000).unwrap();
    let rows = out["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows.last().unwrap()["support_size"], 1);
    let sizes: Vec<u64> = rows.iter().map(|r| r["support_size"].as_u64().unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
}

#[test]
fn basin_cells_land_on_candidates() {
    let out = basin(&[1.0, 0.9, 0.0], &[], 0.7, 8).unwrap();
    assert_eq!(out["cells"].as_array().unwrap().len(), 36);
    for y in out["observed"].as_array().unwrap() {
        assert!(out["candidates"].as_array().unwrap().contains(y));
    }
}

#[test]
fn bad_input_is_an_error() {
    assert!(trajectory(&[1.0, 0.0], &[0.0], 0.1, 100, 10).is_err());
    assert!(trajectory(&[1.0, 0.0], &[], 0.1, 0, 10).is_err());
    assert!(basin(&[1.0, 0.0], &[], 0.9, 4).is_err());
}
