mod common;

use common::World;
use dialeval::embed::Pooling;
use dialeval::harness::{
    emit_report, parse_battery_tsv, run_battery, run_sanity_probes, BatteryConfig, Encoder, Report, ReportFormat,
    ReportMetadata,
};
use dialeval::perturb::TransformKind;
use dialeval::stats::describe;
use dialeval::Execution;

#[test]
fn single_record_reverse_battery() {
    let world = World::new(6, 40, 1);
    let corpus = world.corpus(1, 2);
    let params = world.trained_scorer(&world.corpus(30, 3), 20);
    let enc = Encoder {
        table: &world.table,
        pooling: Pooling::Mean,
    };
    let report = run_battery(
        &corpus,
        None,
        &params,
        enc,
        &BatteryConfig::new(vec![TransformKind::Reverse], 1),
    )
    .unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[1].variant, "Reverse the response");
    assert_eq!(report.rows[1].mean, report.rows[0].mean);
    // one record: dispersion and correlation are undefined
    assert_eq!(report.rows[1].sd, None);
    assert_eq!(report.rows[1].pearson, None);
    let tsv = String::from_utf8(emit_report(&Report::Battery(report), ReportFormat::Tsv)).unwrap();
    assert_eq!(tsv.lines().count(), 3);
    assert!(tsv.lines().nth(2).unwrap().contains("\tNA\t"));
}

#[test]
fn original_row_reproduces_describe() {
    let world = World::new(8, 80, 4);
    let corpus = world.corpus(60, 5);
    let params = world.trained_scorer(&corpus, 50);
    let enc = Encoder {
        table: &world.table,
        pooling: Pooling::Mean,
    };
    let report = run_battery(
        &corpus,
        None,
        &params,
        enc,
        &BatteryConfig::new(vec![TransformKind::Jumble], 1),
    )
    .unwrap();
    let scores: Vec<f64> = corpus
        .iter()
        .map(|t| {
            let c = enc.context(&t.context);
            let r = enc.utterance(&t.reference);
            dialeval::scorer::score(&c, &r, &r, &params).unwrap()
        })
        .collect();
    let d = describe(&scores).unwrap();
    assert_eq!(report.rows[0].mean, d.mean);
    assert_eq!(report.rows[0].sd, Some(d.sd));
    assert_eq!(report.rows[0].pct_within_1sd, Some(d.pct_within_1sd));
    // jumbling is invisible to mean pooling
    assert_eq!(report.rows[1].mean, d.mean);
    assert_eq!(report.rows[1].pearson, Some(1.0));

    let probes = run_sanity_probes(
        &corpus,
        None,
        &params,
        enc,
        ReportMetadata::default(),
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(probes.rows[0].mean, d.mean);
}

#[test]
fn json_to_tsv_round_trip() {
    let world = World::new(8, 80, 6);
    let corpus = world.corpus(80, 7);
    let annotations = world.annotations(&corpus);
    let params = world.trained_scorer(&corpus, 50);
    let enc = Encoder {
        table: &world.table,
        pooling: Pooling::Mean,
    };
    let mut cfg = BatteryConfig::new(TransformKind::ALL.to_vec(), 9);
    cfg.lexicon = Some(&world.lexicon);
    cfg.permutation_iterations = 199;
    let report = Report::Battery(run_battery(&corpus, Some(&annotations), &params, enc, &cfg).unwrap());
    let json = emit_report(&report, ReportFormat::Json);
    let back: Report = serde_json::from_slice(&json).unwrap();
    let tsv = String::from_utf8(emit_report(&back, ReportFormat::Tsv)).unwrap();
    let rows = parse_battery_tsv(&tsv).unwrap();
    let Report::Battery(original) = report else {
        unreachable!()
    };
    assert_eq!(rows.len(), original.rows.len());
    assert_eq!(rows.len(), 1 + 10 + 3);
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (None, None) => true,
        _ => false,
    };
    for (a, b) in rows.iter().zip(&original.rows) {
        assert_eq!(a.variant, b.variant);
        assert!(close(Some(a.mean), Some(b.mean)));
        assert!(close(a.sd, b.sd) && close(a.pct_within_1sd, b.pct_within_1sd));
        assert!(close(a.pearson, b.pearson) && close(a.spearman, b.spearman));
        assert!(close(a.pct_better, b.pct_better) && close(a.p_value, b.p_value));
    }
    let md = String::from_utf8(emit_report(&back, ReportFormat::Markdown)).unwrap();
    assert!(md.starts_with("| Variant | mean | SD | %1SD | Pearson | Spearman | %better |"));
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let world = World::new(8, 80, 10);
    let corpus = world.corpus(40, 11);
    let params = world.trained_scorer(&corpus, 30);
    let enc = Encoder {
        table: &world.table,
        pooling: Pooling::Mean,
    };
    let run = |seed| {
        let cfg = BatteryConfig::new(
            vec![TransformKind::Jumble, TransformKind::Repeat, TransformKind::Generic],
            seed,
        );
        emit_report(
            &Report::Battery(run_battery(&corpus, None, &params, enc, &cfg).unwrap()),
            ReportFormat::Json,
        )
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}
