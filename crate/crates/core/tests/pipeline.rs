use std::collections::HashMap;

use maskdiff_core::kernel::KernelReference;
use maskdiff_core::knn::knn_score_dataset;
use maskdiff_core::metrics::{roc_auc, LabeledScores};
use maskdiff_core::model::{load_checkpoint, save_checkpoint, Model, ModelConfig, TrainConfig};
use maskdiff_core::probe::ProbeConfig;
use maskdiff_core::schema::{encode, fit_encoding, ingest_reader, EncodedDataset, EncodingDoc, FitOptions};
use maskdiff_core::scorer::{calibrate_threshold, read_scores_csv, score_dataset, write_scores_csv};
use maskdiff_core::synthetic::{benchmark, SyntheticSpec};
use maskdiff_core::{KernelOptions, KnnConfig};

fn auc(scores: Vec<f64>, test: &EncodedDataset) -> f64 {
    roc_auc(&LabeledScores::new(scores, test.labels().unwrap().to_vec()).unwrap()).unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        hidden_dim: 32,
        n_layers: 2,
        ..ModelConfig::default()
    }
}

#[test]
fn kernel_detector_separates_synthetic_anomalies() {
    let b = benchmark(&SyntheticSpec::default(), 500, 150, 150).unwrap();
    let reference = KernelReference::from_options(&b.train, &KernelOptions::default()).unwrap();
    let probe = ProbeConfig::nonparametric_default();
    let reports = score_dataset(&b.test, &probe, &reference).unwrap();
    let a = auc(reports.iter().map(|r| r.score).collect(), &b.test);
    assert!(a > 0.55, "kernel auc {a}");
    for r in &reports {
        assert_eq!(r.per_cell.len(), 4);
        assert!(r.per_cell.iter().all(|c| c.len() == 8));
        assert!(r.score >= 0.0);
    }
}

#[test]
fn trained_model_scores_and_survives_checkpoint() {
    let b = benchmark(&SyntheticSpec::default(), 300, 60, 60).unwrap();
    let probe = ProbeConfig::parametric_default();
    let model = Model::new(small_model(), &b.train.cardinalities(), probe.n_levels()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (model, trace) = model.train(&b.train, &probe, &cfg, |_| {}).unwrap();
    assert!(trace.final_loss().unwrap() < trace.initial);

    let before = score_dataset(&b.test, &probe, &model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let after = score_dataset(&b.test, &probe, &back).unwrap();
    assert_eq!(before, after);
}

#[test]
fn scores_do_not_depend_on_thread_count() {
    let b = benchmark(&SyntheticSpec::default(), 200, 40, 40).unwrap();
    let reference = KernelReference::from_options(&b.train, &KernelOptions::default()).unwrap();
    let probe = ProbeConfig::nonparametric_default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| score_dataset(&b.test, &probe, &reference).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn score_csv_round_trips() {
    let b = benchmark(&SyntheticSpec::default(), 100, 20, 20).unwrap();
    let reports = knn_score_dataset(&b.test, &b.train, &KnnConfig::default()).unwrap();
    let gamma = calibrate_threshold(&reports.iter().map(|r| r.score).collect::<Vec<_>>(), 0.1).unwrap();
    let reports: Vec<_> = reports.into_iter().map(|r| r.with_threshold(gamma)).collect();
    let mut buf = Vec::new();
    write_scores_csv(&reports, &mut buf).unwrap();
    let back = read_scores_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), reports.len());
    for ((id, s), r) in back.iter().zip(&reports) {
        assert_eq!(*id, r.sample_id);
        assert_eq!(s.to_bits(), r.score.to_bits());
    }
}

#[test]
fn raw_csv_to_kernel_scores() {
    let mut csv = String::from("colour,size,weight,label\n");
    for i in 0..60 {
        let colour = ["red", "blue", "green"][i % 3];
        let size = if i % 2 == 0 { "S" } else { "L" };
        csv += &format!("{colour},{size},{}.5,0\n", i % 7);
    }
    csv += "purple,XL,99.0,1\n";
    let table = ingest_reader(csv.as_bytes(), &HashMap::new()).unwrap();
    let opts = FitOptions {
        labels_column: Some("label".into()),
        n_bins: 4,
        ..FitOptions::default()
    };
    let n = table.n_rows();
    let train_mask: Vec<bool> = (0..n).map(|i| i < 60).collect();
    let specs = fit_encoding(&table, &opts, &train_mask).unwrap();
    assert_eq!(specs.len(), 3);

    // Encoding specs survive a JSON round trip.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.json");
    EncodingDoc::new(specs.clone(), Some("label".into())).save(&path).unwrap();
    assert_eq!(EncodingDoc::load(&path).unwrap().features, specs);

    let ds = encode(&table, &specs, Some("label")).unwrap();
    let train = ds.select(&(0..60).collect::<Vec<_>>());
    let reference = KernelReference::from_options(&train, &KernelOptions::default()).unwrap();
    let probe = ProbeConfig::new(vec![0.3, 0.6], 8, 1).unwrap();
    let reports = score_dataset(&ds, &probe, &reference).unwrap();
    let outlier = reports[60].score;
    let typical = reports[..60].iter().map(|r| r.score).fold(f64::MIN, f64::max);
    assert!(outlier > typical, "outlier {outlier} vs max normal {typical}");
}
