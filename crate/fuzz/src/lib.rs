//! Properties checked by the fuzz targets. They live here so the corpus can
//! be replayed on a stable toolchain with `cargo test`.

use convsurv::pipeline::{
    read_features, read_ground_truth, read_logs, write_features, write_ground_truth, write_logs,
};
use convsurv::ModelFile;

/// Anything the reader accepts must survive a write and reread unchanged.
pub fn logs(data: &[u8]) {
    let Ok(logs) = read_logs(data) else { return };
    let mut buf = Vec::new();
    write_logs(&mut buf, &logs).expect("accepted logs must serialize");
    assert_eq!(logs, read_logs(buf.as_slice()).expect("written logs must parse"));
}

pub fn ground_truth(data: &[u8]) {
    let Ok(truth) = read_ground_truth(data) else { return };
    let mut buf = Vec::new();
    write_ground_truth(&mut buf, &truth).expect("accepted rows must serialize");
    assert_eq!(truth, read_ground_truth(buf.as_slice()).expect("written rows must parse"));
}

pub fn features(data: &[u8]) {
    let Ok(table) = read_features(data) else { return };
    let mut buf = Vec::new();
    write_features(&mut buf, &table).expect("accepted table must serialize");
    assert_eq!(table, read_features(buf.as_slice()).expect("written table must parse"));
}

/// A file that validates must predict without panicking and reserialize to
/// something that validates again.
pub fn model_file(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = ModelFile::from_json(text) else { return };
    let width = file.feature_names.len();
    let _ = file.model.predict_curve(&vec![0.0; width]);
    let _ = file.model.predict_median(&vec![1.0; width]);
    let json = file.to_json().expect("validated file must serialize");
    ModelFile::from_json(&json).expect("reserialized file must validate");
}
