use std::collections::BTreeMap;

use escapelab::measures::BoundaryTest;
use escapelab::semiclassics::QuantizationConvention;
use escapelab::symbols::AngularProfile;
use escapelab_harness::config::{hash_canonical, GeometryName, GroupPreset, OutputFormat};
use escapelab_harness::{load, persist, Cell, ExperimentConfig, HarnessError, RunRecord, Table, Warning, WarningKind};
use proptest::prelude::*;

fn sample_record(rows: Vec<Vec<Cell>>) -> RunRecord {
    let cfg = ExperimentConfig::default();
    let config = cfg.canonical_json();
    let hash = hash_canonical(&config);
    let mut t = Table::new("curve", &["t", "measure", "stderr", "n_surviving"]);
    for r in rows {
        t.push(r);
    }
    let mut summary = BTreeMap::new();
    summary.insert("Q".to_string(), Cell::Float(-1.0144));
    summary.insert("fitted_order".to_string(), Cell::Null);
    summary.insert("exact".to_string(), Cell::Bool(false));
    RunRecord {
        schema: 1,
        run_id: RunRecord::run_id("escape-rate", &hash, u64::MAX),
        command: "escape-rate".into(),
        config_hash: hash,
        config,
        seed: u64::MAX,
        started: "2026-01-01T00:00:00.000Z".into(),
        finished: "2026-01-01T00:00:01.000Z".into(),
        tables: vec![t],
        summary,
        warnings: vec![Warning::new(WarningKind::DroppedSamples, "2 of 9 grid times dropped")],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_round_trip(
        rows in prop::collection::vec((any::<f64>(), -1e300f64..1e300, any::<u32>(), any::<bool>()), 0..20),
    ) {
        let rows = rows
            .into_iter()
            .map(|(t, m, n, b)| vec![Cell::float(t), Cell::float(m), if b { Cell::Null } else { Cell::text("x,\"y\"") }, Cell::int(n)])
            .collect();
        let rec = sample_record(rows);
        let dir = tempfile::tempdir().unwrap();
        persist(&rec, dir.path(), OutputFormat::Both).unwrap();
        let back = load(dir.path(), &rec.run_id).unwrap();
        prop_assert_eq!(&back, &rec);
        prop_assert_eq!(hash_canonical(&back.config), back.config_hash);
    }
}

#[test]
fn csv_row_count_matches_the_table() {
    let rows: Vec<Vec<Cell>> = (0..13).map(|k| vec![Cell::float(0.5 * k as f64), Cell::float(1.0), Cell::float(0.0), Cell::int(10)]).collect();
    let rec = sample_record(rows);
    let dir = tempfile::tempdir().unwrap();
    let files = persist(&rec, dir.path(), OutputFormat::Csv).unwrap();
    assert_eq!(files.len(), 1);
    let mut reader = csv::Reader::from_path(&files[0]).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["t", "measure", "stderr", "n_surviving"]);
    let parsed: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(parsed.len(), 13);
    assert_eq!(parsed[3][0].parse::<f64>().unwrap(), 1.5);
}

#[test]
fn non_finite_values_survive_as_text() {
    assert_eq!(Cell::float(f64::INFINITY), Cell::text("inf"));
    assert_eq!(Cell::float(f64::NAN), Cell::text("NaN"));
    let t = {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![Cell::float(-f64::INFINITY), Cell::float(1e-300)]);
        t
    };
    assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n-inf,1e-300\n");
}

#[test]
fn other_schema_versions_are_rejected() {
    let rec = sample_record(Vec::new());
    let dir = tempfile::tempdir().unwrap();
    persist(&rec, dir.path(), OutputFormat::Json).unwrap();
    let path = RunRecord::json_path(dir.path(), &rec.run_id);
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"schema\": 1", "\"schema\": 2", 1);
    std::fs::write(&path, text).unwrap();
    let e = load(dir.path(), &rec.run_id).unwrap_err();
    assert!(matches!(&e, HarnessError::SchemaVersion { found, .. } if found == "2"), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn config_hash_tracks_every_section() {
    type Edit = fn(&mut ExperimentConfig);
    let edits: Vec<Edit> = vec![
        |c| c.geometry.kind = GeometryName::Euclidean,
        |c| c.geometry.epsilon0 = Some(0.5),
        |c| c.geometry.r0 = 12.0,
        |c| c.geometry.core_margin = 0.25,
        |c| c.group.preset = Some(GroupPreset::Cyclic),
        |c| c.group.length = 3.0,
        |c| c.group.half_angle = 0.4,
        |c| c.group.budget = 1000,
        |c| c.group.limit_depth = 3,
        |c| c.group.file_sha256 = Some("00".into()),
        |c| c.dynamics.t_stop = 9.0,
        |c| c.dynamics.t_step = 0.25,
        |c| c.dynamics.samples = 1000,
        |c| c.dynamics.seed = 43,
        |c| c.dynamics.fit_window = [2.0, 8.0],
        |c| c.dynamics.lambda0 = 1.2,
        |c| c.dynamics.h_values.push(1e-4),
        |c| c.measures.points = 16,
        |c| c.measures.tolerance = 1e-8,
        |c| c.measures.max_word_len = 8,
        |c| c.measures.horizon = 10.0,
        |c| c.measures.boundary_test = BoundaryTest::ArcFourier { amplitude: 0.5, harmonic: 1 },
        |c| c.semiclassics.h_list[0] = 0.3,
        |c| c.semiclassics.quantization = QuantizationConvention::Weyl,
        |c| c.semiclassics.xi_angle = 0.1,
        |c| c.symbol.center[1] = 0.1,
        |c| c.symbol.angular = AngularProfile::Fourier { amplitude: 0.1, harmonic: 1, phase: 0.0 },
        |c| c.symbol.gaussian_sigma = Some(0.5),
        |c| c.output.directory = "elsewhere".into(),
        |c| c.output.formats = OutputFormat::Csv,
    ];
    let base = ExperimentConfig::default().hash();
    let mut seen = vec![base.clone()];
    for (k, edit) in edits.iter().enumerate() {
        let mut c = ExperimentConfig::default();
        edit(&mut c);
        let h = c.hash();
        assert!(!seen.contains(&h), "edit {k} left the hash unchanged or collided");
        seen.push(h);
    }
}

#[test]
fn hash_is_canonical() {
    // explicit defaults and key order do not matter
    let a = ExperimentConfig::from_toml_str("").unwrap();
    let b = ExperimentConfig::from_toml_str(
        "[output]\nformats = \"both\"\ndirectory = \"runs\"\n\n[dynamics]\nseed = 42\nsamples = 200000\n",
    )
    .unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let c = ExperimentConfig::from_toml_str("[dynamics]\nseed = 41\n").unwrap();
    assert_ne!(a.hash(), c.hash());
}
