//! Word-level analyses against constructed fixtures.

use nrc_core::analysis::{emit_plot_data, frequency_contribution, question_diff_distribution, read_series, PlotData};
use nrc_core::backend::{BackendKind, Fixture, FixtureBackend, FixtureEntry};
use nrc_core::corpus::Instance;
use nrc_core::metrics::MetricKind;

fn item(id: &str, question: &str, choices: [&str; 2]) -> Instance {
    Instance {
        id: id.into(),
        dataset: "synthetic".into(),
        context: None,
        question: question.into(),
        choices: choices.iter().map(|c| c.to_string()).collect(),
        gold: 0,
        concept: None,
        asks_for: None,
    }
}

/// RTD entry for `question + " " + answer`; question tokens get `q`, the
/// remaining tokens 0.5.
fn rtd_entry(question: &str, answer: &str, q: impl Fn(&str) -> f64) -> FixtureEntry {
    let nq = Fixture::split_text(question).len();
    let tokens = Fixture::split_text(&format!("{question} {answer}"));
    let rtd = tokens.iter().enumerate().map(|(i, t)| if i < nq { q(t) } else { 0.5 }).collect();
    FixtureEntry { tokens, rtd: Some(rtd), ..Default::default() }
}

fn backend(entries: Vec<FixtureEntry>) -> FixtureBackend {
    FixtureBackend::new(Fixture { entries, ..Default::default() }, BackendKind::Rtd).unwrap()
}

#[test]
fn identical_attachments_give_zero() {
    let q = "The glass fell off the table .";
    let b = backend(vec![rtd_entry(q, "It broke .", |_| 0.3), rtd_entry(q, "It sang .", |_| 0.3)]);
    let d = question_diff_distribution(&[item("1", q, ["It broke .", "It sang ."])], &b, MetricKind::Nrc, 0.5).unwrap();
    assert_eq!(d.samples.len(), 6);
    assert!(d.samples.iter().all(|s| s.diff == 0.0));
    assert_eq!(d.mean, 0.0);
    assert_eq!(d.histogram.len(), 1);
    assert_eq!(d.histogram[0].count, 6);
}

#[test]
fn gold_attachment_raising_confidence_gives_positive_mean() {
    let q = "The glass fell off the table .";
    let b = backend(vec![rtd_entry(q, "It broke .", |_| 0.1), rtd_entry(q, "It sang .", |_| 0.5)]);
    let d = question_diff_distribution(&[item("1", q, ["It broke .", "It sang ."])], &b, MetricKind::Nrc, 0.5).unwrap();
    let expected = 5f64.ln();
    assert!(d.samples.iter().all(|s| (s.diff - expected).abs() < 1e-12));
    assert!(d.mean > 0.0);
    let total: usize = d.histogram.iter().map(|h| h.count).sum();
    assert_eq!(total, d.samples.len());
    let raw_mean = d.samples.iter().map(|s| s.diff).sum::<f64>() / d.samples.len() as f64;
    assert_eq!(d.mean, raw_mean);
}

#[test]
fn clm_is_rejected() {
    let q = "A b .";
    let fx = Fixture { entries: vec![], ..Default::default() };
    let b = FixtureBackend::new(fx, BackendKind::Clm).unwrap();
    let err = question_diff_distribution(&[item("1", q, ["x", "y"])], &b, MetricKind::PplClm, 0.5).unwrap_err();
    assert!(err.is_usage(), "{err}");
}

#[test]
fn rare_words_contribute_more() {
    // "common" appears in 45 questions; each rareK once. Only rare words
    // react to the attached answer.
    let mut instances = Vec::new();
    let mut entries = Vec::new();
    for k in 0..45 {
        let q = format!("common rare{k} .");
        let (good, bad) = (format!("yes{k} ."), format!("no{k} ."));
        let rare = format!("rare{k}");
        let r = rare.clone();
        entries.push(rtd_entry(&q, &good, move |t| if t == r { 0.01 } else { 0.3 }));
        entries.push(rtd_entry(&q, &bad, move |t| if t == rare { 0.6 } else { 0.3 }));
        instances.push(item(&k.to_string(), &q, [&good, &bad]));
    }
    let b = backend(entries);
    let curve = frequency_contribution(&instances, &b, MetricKind::Nrc).unwrap();
    let populations: usize = curve.buckets.iter().map(|b| b.words).sum::<usize>() + curve.overflow.words;
    assert_eq!(populations, curve.vocabulary_size());
    let one = curve.bucket(1).unwrap();
    let forty_five = curve.bucket(45).unwrap();
    assert_eq!(forty_five.words, 1);
    assert_eq!(forty_five.mean_contribution, Some(0.0));
    assert!(one.mean_contribution.unwrap() > forty_five.mean_contribution.unwrap());

    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(PlotData::Frequency(&curve), dir.path()).unwrap();
    let rows = read_series(&files[0]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 1.0);
    assert_eq!(rows[0][1], one.mean_contribution.unwrap());
    assert_eq!(rows[1][0], 45.0);
}

#[test]
fn plot_files_are_deterministic_and_round_trip() {
    let q = "The glass fell off the table .";
    let b = backend(vec![
        rtd_entry(q, "It broke .", |t| if t == "glass" { 0.07 } else { 0.1 }),
        rtd_entry(q, "It sang .", |_| 0.5),
    ]);
    let items = [item("1", q, ["It broke .", "It sang ."])];
    let d = question_diff_distribution(&items, &b, MetricKind::Nrc, 0.25).unwrap();
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fx = emit_plot_data(PlotData::Differences(&d), x.path()).unwrap();
    let fy = emit_plot_data(PlotData::Differences(&d), y.path()).unwrap();
    for (a, b) in fx.iter().zip(&fy) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
    let hist = read_series(&fx[0]).unwrap();
    for (row, bin) in hist.iter().zip(&d.histogram) {
        assert_eq!(row[0], bin.center());
        assert_eq!(row[1], bin.count as f64);
    }
    let mean = read_series(&fx[1]).unwrap();
    assert_eq!(mean[0][0], d.mean);
}
