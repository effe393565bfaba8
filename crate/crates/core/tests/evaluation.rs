use fip_core::baselines::PredictorKind;
use fip_core::eval::{
    evaluate, evaluate_outcomes, sweep, write_report_csv, EvalSettings, SweepCell, SweepGrid,
};
use fip_core::ingest::{generate_synthetic, SyntheticConfig};

fn dataset(n_customers: usize) -> Vec<fip_core::CustomerHistory> {
    generate_synthetic(&SyntheticConfig {
        n_customers,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .histories
}

#[test]
fn profiles_never_see_the_predicted_basket() {
    let data = dataset(40);
    for train_only in [false, true] {
        let settings = EvalSettings::<f64> {
            train_only_profile: train_only,
            ..EvalSettings::default()
        };
        let outcomes = evaluate_outcomes(&data, PredictorKind::Xmt, &settings).unwrap();
        assert!(!outcomes.is_empty());
        for o in &outcomes {
            let h = data.iter().find(|h| h.customer() == &o.customer).unwrap();
            let n_train = settings.split.train_len(h.len());
            assert!(o.t_index >= n_train);
            assert!(o.f_index > o.t_index);
            let expected = if train_only { n_train } else { o.t_index };
            assert_eq!(o.profile_len, expected);
            assert!(o
                .predicted
                .iter()
                .all(|i| !h.baskets()[o.t_index].contains(i)));
        }
    }
}

#[test]
fn repeated_runs_agree() {
    let data = dataset(30);
    let settings = EvalSettings::<f64>::default();
    for method in PredictorKind::ALL {
        let mut a = evaluate(&data, method, &settings).unwrap();
        let mut b = evaluate(&data, method, &settings).unwrap();
        a.wall_time_s = None;
        b.wall_time_s = None;
        assert_eq!(a, b);
    }
}

#[test]
fn sweep_covers_grid_in_order() {
    let data = dataset(10);
    let grid = SweepGrid {
        methods: vec![PredictorKind::Top, PredictorKind::Xmt],
        ks: vec![1, 3],
        horizons: vec![1, 2],
        splits: vec![0.3],
    };
    let cells = sweep(&data, &grid, &EvalSettings::<f64>::default());
    assert_eq!(cells.len(), 8);
    let keys: Vec<(PredictorKind, usize, u32)> =
        cells.iter().map(|c| (c.method, c.k, c.horizon)).collect();
    assert_eq!(keys[0], (PredictorKind::Top, 1, 1));
    assert_eq!(keys[1], (PredictorKind::Top, 3, 1));
    assert_eq!(keys[2], (PredictorKind::Top, 1, 2));
    assert_eq!(keys[7], (PredictorKind::Xmt, 3, 2));
}

#[test]
fn report_csv_has_fixed_columns() {
    let data = dataset(10);
    let mut report = evaluate(&data, PredictorKind::Xmt, &EvalSettings::<f64>::default()).unwrap();
    report.wall_time_s = None;
    let mut out = Vec::new();
    write_report_csv(&[SweepCell::from(report)], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "method,k,h,split,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,n_customers,wall_time_s"
    );
    assert!(lines[1].starts_with("xmt,5,2,0.3,"));
    assert!(lines[1].ends_with(','));
}
