use particle_em::data::{load_mnist_subset, load_wbc, read_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use particle_em::Error;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn wbc_text(rows: usize, missing_every: usize) -> String {
    let mut s = String::new();
    for i in 0..rows {
        let mut fields = vec![(1000 + i).to_string()];
        for j in 0..9 {
            fields.push(((i * 7 + j * 3) % 10 + 1).to_string());
        }
        if missing_every > 0 && i % missing_every == 0 {
            fields[6] = "?".into();
        }
        fields.push(if i % 3 == 0 { "4" } else { "2" }.into());
        writeln!(s, "{}", fields.join(",")).unwrap();
    }
    s
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn wbc_drops_missing_rows_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    // 699 rows with 16 marked missing leaves 683.
    let mut text = wbc_text(699 - 16, 0);
    text.push_str(&wbc_text(16, 1));
    let path = write(dir.path(), "wbc.data", text.as_bytes());
    let ds = load_wbc(&path, 0).unwrap();
    assert_eq!(ds.n_rows(), 683);
    assert_eq!(ds.dropped, 16);
    assert_eq!((ds.train.len(), ds.test.len()), (546, 137));
    assert_eq!(ds.features.ncols(), 9);
    for col in ds.features.column_iter() {
        let mean = col.sum() / 683.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 683.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    assert!(ds.labels.iter().all(|&l| l <= 1));
    assert_eq!(load_wbc(&path, 0).unwrap(), ds);
}

#[test]
fn wbc_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = wbc_text(5, 0);
    text.push_str("1,2,3\n");
    let path = write(dir.path(), "short.data", text.as_bytes());
    assert!(matches!(load_wbc(&path, 0), Err(Error::Format { .. })));

    let mut text = wbc_text(5, 0);
    text.push_str("9,1,1,1,1,x,1,1,1,1,2\n");
    let path = write(dir.path(), "bad.data", text.as_bytes());
    match load_wbc(&path, 0) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }

    let mut text = wbc_text(5, 0);
    text.push_str("9,1,1,1,1,1,1,1,1,1,3\n");
    let path = write(dir.path(), "label.data", text.as_bytes());
    assert!(matches!(load_wbc(&path, 0), Err(Error::Parse { line: 6, .. })));
}

fn idx_images(n: u32, rows: u32, cols: u32, magic: u32) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [magic, n, rows, cols] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..n * rows * cols {
        b.push((i * 37 % 251) as u8);
    }
    b
}

fn idx_labels(labels: &[u8], magic: u32) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&magic.to_be_bytes());
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

#[test]
fn mnist_subset_selects_requested_classes() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..60).map(|i| (i % 10) as u8).collect();
    let img = write(dir.path(), "img", &idx_images(60, 4, 4, IDX_IMAGES_MAGIC));
    let lab = write(dir.path(), "lab", &idx_labels(&labels, IDX_LABELS_MAGIC));
    let ds = load_mnist_subset(&img, &lab, [4, 9], 10, 3).unwrap();
    assert_eq!(ds.n_rows(), 10);
    assert_eq!(ds.features.ncols(), 16);
    assert_eq!(ds.test.len(), 2);
    assert!(ds.labels.iter().all(|&l| l <= 1));
    assert!(ds.labels.contains(&0) && ds.labels.contains(&1));
    assert_eq!(load_mnist_subset(&img, &lab, [4, 9], 10, 3).unwrap(), ds);

    // Only 12 images carry label 4 or 9.
    match load_mnist_subset(&img, &lab, [4, 9], 13, 3) {
        Err(Error::Capacity { requested, available }) => assert_eq!((requested, available), (13, 12)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn idx_rejects_bad_magic_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad", &idx_images(2, 2, 2, 0x0801));
    assert!(matches!(read_idx_images(&bad), Err(Error::Format { .. })));
    let mut short = idx_images(2, 2, 2, IDX_IMAGES_MAGIC);
    short.pop();
    let short = write(dir.path(), "short", &short);
    assert!(matches!(read_idx_images(&short), Err(Error::Format { .. })));
    let header = write(dir.path(), "hdr", &IDX_IMAGES_MAGIC.to_be_bytes());
    assert!(matches!(read_idx_images(&header), Err(Error::Format { .. })));
}
