use filtra_core::io::{read_dataset, write_curves, write_response};
use filtra_core::simgen::{gen_dataset, setup_forest, SimConfig};
use filtra_core::{fit_filtrated, FittedModel, PipelineConfig, Session};

fn small() -> filtra_core::Dataset {
    gen_dataset(&SimConfig { n_samples: 50, seed: 11, ..SimConfig::default() }).unwrap().data
}

#[test]
fn csv_round_trip_preserves_the_dataset() {
    let data = small();
    let (mut c, mut r) = (Vec::new(), Vec::new());
    write_curves(&mut c, &data.curves).unwrap();
    write_response(&mut r, &data.response).unwrap();
    let back = read_dataset(c.as_slice(), r.as_slice(), data.curves.grid()).unwrap();
    assert_eq!(back.data.response, data.response);
    for j in 0..10 {
        assert_eq!(back.data.curves.predictor(j), data.curves.predictor(j));
    }
    assert_eq!(back.predictor_ids.len(), 10);
}

#[test]
fn pipeline_fits_and_predicts_on_new_curves() {
    let data = small();
    let mut cfg = PipelineConfig::default();
    cfg.mccv.n_splits = 5;
    let (model, report) = fit_filtrated(&data, &cfg, None).unwrap();
    assert!(!model.layers.is_empty());
    assert!(model.forest.validate(10).is_ok());
    assert_eq!(report.forest, model.forest);
    assert!(report.selected_set < report.candidate_sets.len());

    let test = gen_dataset(&SimConfig { n_samples: 30, seed: 12, ..SimConfig::default() }).unwrap().data;
    let y_hat = model.predict(&test.curves).unwrap();
    assert_eq!(y_hat.len(), 30);
    assert!(y_hat.iter().all(|v| v.is_finite()));

    let again = FittedModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(again.predict(&test.curves).unwrap(), y_hat);
}

#[test]
fn fixed_forest_beats_the_mean_on_training_data() {
    let data = small();
    let session = Session::new(&data, &PipelineConfig::default()).unwrap();
    let model = session.fit_forest(&setup_forest()).unwrap();
    let y_hat = model.predict(&data.curves).unwrap();
    let mean = data.response.iter().sum::<f64>() / 50.0;
    let sse: f64 = y_hat.iter().zip(&data.response).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = data.response.iter().map(|b| (b - mean).powi(2)).sum();
    assert!(sse < 0.5 * sst, "sse {sse} sst {sst}");
}
