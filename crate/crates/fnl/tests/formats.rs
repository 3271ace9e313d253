use fnl::config::{self, Overrides};
use fnl::{io, report, runner};
use fnl_core::harness::{ExperimentConfig, Family, RobustnessReport, SweepNotion};
use fnl_core::Notion;

fn small_report() -> RobustnessReport {
    let mut cfg = ExperimentConfig::new(
        Family::DpWorked,
        vec![SweepNotion::Binary(Notion::DemographicParity)],
        vec![0.02, 0.05, 0.1],
    );
    cfg.grid_n = 21;
    runner::run(&cfg, 1).unwrap()
}

#[test]
fn report_json_round_trips_exactly() {
    let r = small_report();
    let text = io::to_json(&r);
    assert!(text.ends_with('\n'));
    let back: RobustnessReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(io::to_json(&back), text);
}

#[test]
fn csv_has_header_and_one_row_per_point() {
    let r = small_report();
    let csv = report::to_csv(&r).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), report::CSV_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    // beta = alpha / (2 (1 + 3 alpha)) on this family
    for (row, alpha) in rows.iter().zip([0.02, 0.05, 0.1]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[0].parse::<f64>().unwrap(), alpha);
        assert_eq!(cols[1], "dp");
        let beta: f64 = cols[3].parse().unwrap();
        assert!((beta - alpha / (2.0 * (1.0 + 3.0 * alpha))).abs() <= 1e-12);
        assert_eq!(cols[5], r.sweeps[0].verdict.to_string());
    }
}

#[test]
fn svg_skips_non_positive_points() {
    let mut cfg = ExperimentConfig::new(
        Family::DpWorked,
        vec![SweepNotion::Binary(Notion::DemographicParity), SweepNotion::Binary(Notion::EqualOpportunity)],
        vec![0.02, 0.05, 0.1],
    );
    cfg.grid_n = 21;
    let r = runner::run(&cfg, 2).unwrap();
    let svg = report::to_svg(&r);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    // accepting the positives keeps TPR at 1, so the eopp sweep has beta = 0
    assert!(r.sweeps[1].records.iter().all(|x| x.beta == 0.0));
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(svg.matches("<circle").count(), 3);
    assert!(svg.contains("dp ("));
    assert!(svg.contains("eopp ("));
}

#[test]
fn config_files_parse_with_defaults() {
    let text = r#"{"instance": {"family": "needle"}, "notions": ["eopp"], "alphas": [0.01, 0.04]}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, text).unwrap();
    let cfg = config::load(&path).unwrap();
    assert_eq!(cfg.grid_n, 101);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.instance, Family::Needle);
    let o = Overrides {
        alphas: vec![0.04, 0.01, 0.04, 0.09],
        grid_n: Some(51),
        ..Overrides::default()
    };
    let applied = config::apply(cfg.clone(), &o).unwrap();
    assert_eq!(applied.alphas, vec![0.01, 0.04, 0.09]);
    assert_eq!(applied.grid_n, 51);
    assert_ne!(config::hash(&applied), config::hash(&cfg));
    assert_eq!(config::hash(&cfg), config::hash(&config::load(&path).unwrap()));
    let bad = Overrides {
        grid_n: Some(5),
        ..Overrides::default()
    };
    assert!(config::apply(cfg, &bad).is_err());
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = config::load(&path).unwrap();
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 4);
}
