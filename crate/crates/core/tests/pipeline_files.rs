//! End-to-end runs through the file formats: rendered fixtures are written
//! to disk, ingested and quantified, and the outputs are checked against
//! the renderer's ground truth.

use std::fs;
use std::path::Path;

use roadquant::geomap::parse_geojson;
use roadquant::io::{read_jsonl, read_report, LabelRecord, REPORT_HEADER};
use roadquant::pipeline::{run_autolabel_files, run_quantify_files, RunOptions};
use roadquant::quantify::DepthClass;
use roadquant::segment::DamageClass;
use roadquant::synth::{evaluate, planted_fixture, write_fixture, FixtureSpec};
use roadquant::Error;

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn three_frame_fixture_matches_truth_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(&FixtureSpec::default(), dir.path().join("in")).unwrap();
    let out_a = dir.path().join("a");
    let run = run_quantify_files(
        &fixture.manifest,
        &out_a,
        &RunOptions {
            jobs: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.exit_code(), 0, "{:?}", run.summary.skips);
    assert_eq!(run.rows.len(), 3);
    assert_eq!(fixture.truth.len(), 3);

    for (d, t) in run.damages.iter().zip(&fixture.truth) {
        assert_eq!((d.frame, d.class), (t.frame, t.class));
        let err = evaluate(&d.metrics, &t.metrics).unwrap();
        assert!(err.max < 0.10, "{:?}: {:?} vs {:?}", d.class, d.metrics, t.metrics);
    }
    assert_eq!(run.damages[0].metrics.depth_class, Some(DepthClass::Deep));

    let rows = read_report(out_a.join("report.csv")).unwrap();
    assert_eq!(rows, run.rows);
    let pins = parse_geojson(&fs::read_to_string(out_a.join("damages.geojson")).unwrap()).unwrap();
    assert_eq!(pins.len(), rows.len());
    for (p, r) in pins.iter().zip(&rows) {
        assert_eq!(
            (p.frame, p.class, p.level, p.lat, p.lon),
            (r.frame, r.class, r.level, r.lat, r.lon)
        );
    }
    // Frames are 0.5 s apart on a track that starts one interval early.
    assert!((rows[1].lat - 52.00005).abs() < 1e-12 && (rows[1].lon - 4.000025).abs() < 1e-12);

    let out_b = dir.path().join("b");
    run_quantify_files(
        &fixture.manifest,
        &out_b,
        &RunOptions {
            jobs: 4,
            ..Default::default()
        },
    )
    .unwrap();
    for f in ["report.csv", "damages.geojson", "summary.json"] {
        assert_eq!(
            read(out_a.join(f)),
            read(out_b.join(f)),
            "{f} differs between 1 and 4 workers"
        );
    }
}

#[test]
fn depth_gauge_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [1.0, 2.0]
        .iter()
        .map(|&gauge| {
            let spec = FixtureSpec {
                gauge,
                ..Default::default()
            };
            let fx = write_fixture(&spec, dir.path().join(format!("g{gauge}"))).unwrap();
            run_quantify_files(
                &fx.manifest,
                dir.path().join(format!("o{gauge}")),
                &RunOptions::default(),
            )
            .unwrap()
        })
        .collect();
    assert_eq!(runs[0].rows.len(), runs[1].rows.len());
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-6 * a.abs().max(b.abs()),
        (None, None) => true,
        _ => false,
    };
    for (a, b) in runs[0].rows.iter().zip(&runs[1].rows) {
        assert!(
            close(a.area_m2, b.area_m2) && close(a.length_m, b.length_m),
            "{a:?} vs {b:?}"
        );
        assert!(close(a.crack_density_pct, b.crack_density_pct));
        assert_eq!(a.depth_class, b.depth_class);
    }
}

#[test]
fn zero_detections_give_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        frames: vec![Default::default(), Default::default()],
        ..Default::default()
    };
    let fx = write_fixture(&spec, dir.path()).unwrap();
    let out = dir.path().join("out");
    let run = run_quantify_files(&fx.manifest, &out, &RunOptions::default()).unwrap();
    assert_eq!(run.exit_code(), 0);
    assert_eq!(
        (run.summary.detections, run.summary.quantified, run.summary.skipped),
        (0, 0, 0)
    );
    assert_eq!(
        fs::read_to_string(out.join("report.csv")).unwrap(),
        REPORT_HEADER.join(",") + "\n"
    );
    assert!(parse_geojson(&fs::read_to_string(out.join("damages.geojson")).unwrap())
        .unwrap()
        .is_empty());
    let summary: serde_json::Value = serde_json::from_slice(&read(out.join("summary.json"))).unwrap();
    assert_eq!(summary["frames"], 2);
    // Effective parameters are printed for provenance.
    assert_eq!(summary["params"]["view"]["mpp"], 0.005);
}

#[test]
fn an_unmeasurable_detection_is_skipped_once_and_others_survive() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(&FixtureSpec::default(), dir.path()).unwrap();
    // A box in the top-left corner sees only off-road pixels.
    let det = dir.path().join("frame000_det.jsonl");
    let mut text = fs::read_to_string(&det).unwrap();
    text.push_str("{\"box\":[0,0,40,30],\"class\":\"pothole\",\"confidence\":0.5,\"crop_id\":\"sky\"}\n");
    fs::write(&det, text).unwrap();
    let run = run_quantify_files(&fx.manifest, dir.path().join("out"), &RunOptions::default()).unwrap();
    assert_eq!(run.exit_code(), 2);
    assert_eq!(run.rows.len(), 3);
    assert_eq!(run.summary.skips.len(), 1);
    assert_eq!(run.summary.skips[0].crop_id.as_deref(), Some("sky"));
    assert_eq!((run.summary.detections, run.summary.quantified), (4, 3));
}

#[test]
fn ingestion_errors_name_the_file_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(&FixtureSpec::default(), dir.path()).unwrap();
    let out = dir.path().join("out");

    let det = dir.path().join("frame001_det.jsonl");
    let good = fs::read_to_string(&det).unwrap();
    fs::write(
        &det,
        format!("{good}{{\"box\":[1,2,3],\"class\":\"pothole\",\"crop_id\":\"x\"}}\n"),
    )
    .unwrap();
    let err = run_quantify_files(&fx.manifest, &out, &RunOptions::default()).unwrap_err();
    let msg = err.to_string();
    assert!(
        matches!(err, Error::Ingest { .. }) && msg.contains("frame001_det.jsonl") && msg.contains("record 1"),
        "{msg}"
    );
    fs::write(&det, good).unwrap();

    fs::remove_file(dir.path().join("frame002_road.png")).unwrap();
    let msg = run_quantify_files(&fx.manifest, &out, &RunOptions::default())
        .unwrap_err()
        .to_string();
    assert!(msg.contains("frame002_road.png"), "{msg}");
    assert!(!out.exists(), "nothing is written when ingestion fails");
}

#[test]
fn command_line_overrides_reach_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        frames: vec![roadquant::synth::pothole_scene()],
        ..Default::default()
    };
    let fx = write_fixture(&spec, dir.path()).unwrap();
    let opts = RunOptions {
        mpp: Some(0.01),
        seed: Some(9),
        ..Default::default()
    };
    let run = run_quantify_files(&fx.manifest, dir.path().join("out"), &opts).unwrap();
    assert_eq!((run.summary.params.view.mpp, run.summary.params.seed), (0.01, 9));
    let area = run.rows[0].area_m2.unwrap();
    assert!((area - 0.25).abs() < 0.025, "{area}");
    let bad = RunOptions {
        camera_height: Some(-1.0),
        ..Default::default()
    };
    assert!(matches!(
        run_quantify_files(&fx.manifest, dir.path().join("o2"), &bad),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn planted_autolabel_fixture_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let fx = planted_fixture(3).unwrap();
    let paths = fx.write(dir.path()).unwrap();
    let out = dir.path().join("labels.jsonl");
    let n = run_autolabel_files(&paths.manifest, &paths.pools, &paths.features, &out, None, false).unwrap();
    let got: Vec<LabelRecord> = read_jsonl(&out).unwrap();
    let want: Vec<LabelRecord> = read_jsonl(&paths.expected).unwrap();
    assert_eq!(n, want.len());
    assert_eq!(got, want);
    assert_eq!(
        got.iter().map(|l| l.class.to_string()).collect::<Vec<_>>(),
        ["pothole", "longitudinal_crack", "alligator_crack"]
    );

    let again = dir.path().join("again.jsonl");
    run_autolabel_files(&paths.manifest, &paths.pools, &paths.features, &again, None, false).unwrap();
    assert_eq!(read(&out), read(&again));

    let listed = dir.path().join("cands.jsonl");
    let count = run_autolabel_files(&paths.manifest, &paths.pools, &paths.features, &listed, None, true).unwrap();
    let table = fs::read_to_string(&paths.features).unwrap();
    assert_eq!(count + fx.references.len(), table.lines().count());

    // Another seed draws other sampler boxes under the same ids.
    let reseeded = dir.path().join("cands99.jsonl");
    run_autolabel_files(
        &paths.manifest,
        &paths.pools,
        &paths.features,
        &reseeded,
        Some(99),
        true,
    )
    .unwrap();
    assert_ne!(read(&listed), read(&reseeded));
}

#[test]
fn empty_unlabelled_set_gives_empty_labels_file() {
    let dir = tempfile::tempdir().unwrap();
    let fx = planted_fixture(1).unwrap();
    let paths = fx.write(dir.path()).unwrap();
    let mut manifest: serde_json::Value = serde_json::from_slice(&read(&paths.manifest)).unwrap();
    manifest["frames"] = serde_json::json!([]);
    fs::write(&paths.manifest, manifest.to_string()).unwrap();
    let out = dir.path().join("labels.jsonl");
    assert_eq!(
        run_autolabel_files(&paths.manifest, &paths.pools, &paths.features, &out, None, false).unwrap(),
        0
    );
    assert_eq!(read(&out), b"");
}

#[test]
fn planted_classes_cover_the_pool() {
    let fx = planted_fixture(5).unwrap();
    let classes: Vec<DamageClass> = fx.pools.positives.keys().copied().collect();
    assert_eq!(
        classes,
        [
            DamageClass::LongitudinalCrack,
            DamageClass::AlligatorCrack,
            DamageClass::Pothole
        ]
    );
    assert_eq!(fx.pools.negatives.len(), 3);
}
