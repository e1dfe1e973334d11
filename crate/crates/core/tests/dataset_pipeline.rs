use pavescan::dataset::{
    class_stats, generate_synthetic, ingest_manifest, stratified_split, DatasetManifest, Split,
    SynthConfig, MANIFEST_FILE, NUM_CLASSES,
};

fn synth(dir: &std::path::Path, n: usize) -> DatasetManifest {
    let cfg = SynthConfig {
        n_images: n,
        width: 96,
        height: 64,
        seed: 9,
        ..Default::default()
    };
    generate_synthetic(&cfg, dir).unwrap()
}

#[test]
fn written_dataset_reingests_to_the_same_records() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 20);
    m.validate().unwrap();
    let loaded = DatasetManifest::load_jsonl(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.records, m.records);

    std::fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
    let ingested = ingest_manifest(dir.path()).unwrap();
    assert_eq!(ingested.records.len(), m.records.len());
    for (a, b) in ingested.records.iter().zip(&m.records) {
        assert_eq!(
            (a.id.as_str(), a.width, a.height),
            (b.id.as_str(), b.width, b.height)
        );
        assert_eq!(a.mask_path, b.mask_path);
        assert_eq!(a.boxes.len(), b.boxes.len());
        for (x, y) in a.boxes.iter().zip(&b.boxes) {
            assert_eq!(x.class, y.class);
            for (u, v) in [(x.cx, y.cx), (x.cy, y.cy), (x.w, y.w), (x.h, y.h)] {
                assert!((u - v).abs() < 1e-6);
            }
        }
        let mask = ingested.load_mask(a).unwrap().unwrap();
        assert_eq!((mask.width, mask.height), (a.width, a.height));
    }
}

#[test]
fn split_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 40);
    let a = stratified_split(&m, 0.25, 3).unwrap();
    let b = stratified_split(&m, 0.25, 3).unwrap();
    assert_eq!(a.records, b.records);
    assert!(a.records.iter().all(|r| r.split != Split::Unassigned));

    let val = a.split(Split::Val).count();
    assert!(val > 0 && val < 40);

    let stats = class_stats(&a);
    let per_class_images: usize = (0..NUM_CLASSES)
        .map(|c| stats.per_class[c].train_images + stats.per_class[c].val_images)
        .sum();
    assert_eq!(
        stats.totals.train_images + stats.totals.val_images,
        per_class_images
    );
    let annotations: usize = a.records.iter().map(|r| r.boxes.len()).sum();
    assert_eq!(
        stats.totals.train_annotations + stats.totals.val_annotations,
        annotations
    );
    let per_class: usize = (0..NUM_CLASSES)
        .map(|c| stats.per_class[c].train_annotations + stats.per_class[c].val_annotations)
        .sum();
    assert_eq!(per_class, annotations);
}
