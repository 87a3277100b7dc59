mod common;

use std::io::Cursor;

use mitnb::dataset::{read_csv, Column, ColumnType, Schema};
use mitnb::design::{build_design, validate_inflated, Block, DEFAULT_MIN_SPIKE_COUNT};
use mitnb::distributions::InflatedValueSet;
use mitnb::simulation::{simulate, REGIME_COLUMN};
use mitnb::{Error, ModelSpec};

use common::*;

#[test]
fn three_row_file() {
    let csv = "y,x\n0,1.5\n2,0.25\n7,-3\n";
    let (d, report) = read_csv(Cursor::new(csv), &Schema::new(Some("y")).with("x", ColumnType::Real)).unwrap();
    assert_eq!(d.n_rows(), 3);
    assert_eq!(d.response().unwrap(), vec![0, 2, 7]);
    assert_eq!(report.dropped_rows, 0);
}

#[test]
fn negative_response_is_rejected() {
    let csv = "y,x\n0,1\n-1,2\n";
    let err = read_csv(Cursor::new(csv), &Schema::new(Some("y")).with("x", ColumnType::Real)).unwrap_err();
    assert!(err.to_string().contains("response must be a nonnegative integer"), "{err}");
    assert!(matches!(err, Error::InvalidResponse { row: 2, .. }));
}

#[test]
fn missing_values_are_dropped_and_counted() {
    let csv = "y,x\n0,1\n,2\n3,NA\n4,4\n";
    let (d, report) = read_csv(Cursor::new(csv), &Schema::new(Some("y")).with("x", ColumnType::Real)).unwrap();
    assert_eq!(d.n_rows(), 2);
    assert_eq!(report.dropped_rows, 2);
    assert_eq!(report.to_string(), "rows_read=4\ndropped_rows=2");
}

#[test]
fn closed_levels_report_row() {
    let schema = Schema::new(Some("y")).with(
        "g",
        ColumnType::Categorical {
            levels: Some(vec!["a".into(), "b".into()]),
            reference: None,
        },
    );
    let err = read_csv(Cursor::new("y,g\n1,a\n2,c\n"), &schema).unwrap_err();
    assert!(matches!(err, Error::UnknownLevel { row: 2, ref level, .. } if level == "c"));
}

#[test]
fn simulated_csv_round_trips() {
    let data = simulate(&spiked_design(400, 8)).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    let (back, _) = read_csv(Cursor::new(&buf), &data.schema()).unwrap();
    assert_eq!(back, data);
}

fn quarter_year_data() -> mitnb::Dataset {
    let mut csv = String::from("y,quarter,year\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{},{}\n", i % 5, 1 + i % 4, i % 7));
    }
    let schema = Schema::new(Some("y"))
        .with(
            "quarter",
            ColumnType::Categorical {
                levels: None,
                reference: None,
            },
        )
        .with("year", ColumnType::Real);
    read_csv(Cursor::new(csv), &schema).unwrap().0
}

#[test]
fn quarter_dummies_and_year_polynomial() {
    let spec = ModelSpec::from_config_str(
        r#"
[columns]
quarter = "categorical"

[location]
covariates = ["quarter(ref=\"1\")", "year", "year^2", "year^3"]
"#,
    )
    .unwrap();
    let (_, design) = build_design(&spec, &quarter_year_data()).unwrap();
    assert_eq!(
        design.names(Block::Location),
        ["(Intercept)", "quarter.2", "quarter.3", "quarter.4", "year", "year^2", "year^3"]
    );
    for r in 0..design.n_rows() {
        let year = design.z1[(r, 4)];
        assert_eq!(design.z1[(r, 6)], year.powi(3));
        // Exactly one dummy set, or none for the reference level.
        let ones: f64 = (1..4).map(|c| design.z1[(r, c)]).sum();
        assert!(ones == 0.0 || ones == 1.0);
    }
}

#[test]
fn collinear_dummies_are_named() {
    let csv = "y,g,h\n0,a,u\n1,b,v\n2,a,u\n3,b,v\n1,a,u\n";
    let cat = ColumnType::Categorical {
        levels: None,
        reference: None,
    };
    let schema = Schema::new(Some("y")).with("g", cat.clone()).with("h", cat);
    let (data, _) = read_csv(Cursor::new(csv), &schema).unwrap();
    let spec = ModelSpec::from_config_str("[hurdle]\ncovariates = [\"g\", \"h\"]\n[columns]\ng = \"categorical\"\nh = \"categorical\"\n").unwrap();
    match build_design(&spec, &data) {
        Err(Error::RankDeficient {
            column,
            collinear_with,
            ..
        }) => {
            assert_eq!(column, "h.v");
            assert!(collinear_with.contains(&"g.b".to_string()), "{collinear_with:?}");
        }
        other => panic!("expected a rank error, got {other:?}"),
    }
}

#[test]
fn design_is_deterministic_and_masks_positives() {
    let data = simulate(&spiked_design(300, 4)).unwrap();
    let (_, a) = build_design(&spiked_spec(), &data).unwrap();
    let (_, b) = build_design(&spiked_spec(), &data).unwrap();
    assert_eq!(a, b);
    let positives = data.response().unwrap().iter().filter(|&&y| y > 0).count();
    assert_eq!(a.n_positive(), positives);
}

#[test]
fn inflated_counts() {
    let mut csv = String::from("y\n");
    for i in 0..1000 {
        csv.push_str(if i % 2 == 0 { "7\n" } else { "3\n" });
    }
    let (data, _) = read_csv(Cursor::new(csv), &Schema::new(Some("y"))).unwrap();
    let ok = validate_inflated(&InflatedValueSet::new(vec![7]).unwrap(), &data, DEFAULT_MIN_SPIKE_COUNT).unwrap();
    assert_eq!(ok.counts, vec![(7, 500)]);
    assert!(ok.warnings.is_empty());
    let err = validate_inflated(&InflatedValueSet::new(vec![13]).unwrap(), &data, DEFAULT_MIN_SPIKE_COUNT);
    assert!(matches!(err, Err(Error::InflatedValueAbsent(13))));
}

#[test]
fn inflated_counts_match_simulator_bookkeeping() {
    let data = simulate(&spiked_design(20_000, 12)).unwrap();
    let report = validate_inflated(&InflatedValueSet::new(SPIKES.to_vec()).unwrap(), &data, 10).unwrap();
    let y = data.response().unwrap();
    let Some(Column::Integer(regime)) = data.column(REGIME_COLUMN) else {
        panic!("regime column")
    };
    let tnb = SPIKES.len() as i64 + 1;
    for (k, &(v, count)) in report.counts.iter().enumerate() {
        let from_spike = regime.iter().filter(|&&r| r == k as i64 + 1).count();
        let from_tnb = y.iter().zip(regime).filter(|(&yi, &r)| yi == v && r == tnb).count();
        assert!(from_spike > 0);
        assert_eq!(count, from_spike + from_tnb, "value {v}");
    }
}
