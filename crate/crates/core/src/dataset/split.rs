use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Assigns every record to train or val, stratified by each record's modal class.
///
/// Within each stratum `round(n * val_fraction)` images go to validation, so each
/// class's share is within one image of the target. Strata with fewer than two
/// images stay entirely in train. Records without boxes form their own stratum.
pub fn stratified_split(
    manifest: &DatasetManifest,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "val_fraction {val_fraction} must lie in (0, 1)"
        )));
    }
    if let Some(r) = manifest
        .records
        .iter()
        .find(|r| r.split != Split::Unassigned)
    {
        return Err(Error::Record {
            record: r.id.clone(),
            message: "record already has a split assignment".into(),
        });
    }

    // key 0 = no annotations, otherwise class id
    let mut strata: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let key = r.modal_class().map(|c| c.id()).unwrap_or(0);
        strata.entry(key).or_default().push(i);
    }

    let mut out = manifest.clone();
    out.seed = seed;
    for (key, mut members) in strata {
        if members.len() < 2 {
            log::warn!(
                "class {key} has {} image(s); assigning all to train",
                members.len()
            );
            for i in members {
                out.records[i].split = Split::Train;
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key as u64);
        members.shuffle(&mut rng);
        let n_val =
            ((members.len() as f64 * val_fraction).round() as usize).clamp(1, members.len() - 1);
        for (rank, i) in members.into_iter().enumerate() {
            out.records[i].split = if rank < n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BoxAnnotation, DistressClass, ImageRecord};

    fn record(id: usize, classes: &[DistressClass]) -> ImageRecord {
        ImageRecord {
            id: format!("r{id:03}"),
            image_path: format!("images/r{id:03}.png").into(),
            width: 900,
            height: 600,
            boxes: classes
                .iter()
                .map(|&c| BoxAnnotation::new_clamped(c, 0.5, 0.5, 0.1, 0.1).unwrap())
                .collect(),
            mask_path: None,
            split: Split::Unassigned,
        }
    }

    #[test]
    fn ten_single_class_records_split_eight_two() {
        let recs = (0..10)
            .map(|i| record(i, &[DistressClass::Crack]))
            .collect();
        let m = DatasetManifest::new("/tmp", recs);
        for seed in 0..20 {
            let s = stratified_split(&m, 0.2, seed).unwrap();
            assert_eq!(s.split(Split::Train).count(), 8);
            assert_eq!(s.split(Split::Val).count(), 2);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let recs = (0..40)
            .map(|i| record(i, &[DistressClass::from_index(i % 5)]))
            .collect();
        let m = DatasetManifest::new("/tmp", recs);
        let a = stratified_split(&m, 0.3, 11).unwrap();
        let b = stratified_split(&m, 0.3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_fraction_and_presplit() {
        let m = DatasetManifest::new("/tmp", vec![record(0, &[DistressClass::Crack])]);
        assert!(stratified_split(&m, 0.0, 1).is_err());
        assert!(stratified_split(&m, 1.0, 1).is_err());
        let mut pre = m.clone();
        pre.records[0].split = Split::Train;
        assert!(stratified_split(&pre, 0.2, 1).is_err());
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let mut recs: Vec<_> = (0..5).map(|i| record(i, &[DistressClass::Crack])).collect();
        recs.push(record(5, &[DistressClass::Scaling]));
        let s = stratified_split(&DatasetManifest::new("/tmp", recs), 0.2, 3).unwrap();
        assert_eq!(s.records[5].split, Split::Train);
    }
}
