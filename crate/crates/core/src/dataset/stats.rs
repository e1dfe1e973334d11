use std::fmt;

use serde::{Deserialize, Serialize};

use super::classes::{DistressClass, NUM_CLASSES};
use super::manifest::{DatasetManifest, Split};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_images: usize,
    pub train_annotations: usize,
    pub val_images: usize,
    pub val_annotations: usize,
    /// Records not yet assigned to a split.
    pub unassigned_images: usize,
    pub unassigned_annotations: usize,
}

impl SplitCounts {
    fn add(&mut self, other: &SplitCounts) {
        self.train_images += other.train_images;
        self.train_annotations += other.train_annotations;
        self.val_images += other.val_images;
        self.val_annotations += other.val_annotations;
        self.unassigned_images += other.unassigned_images;
        self.unassigned_annotations += other.unassigned_annotations;
    }
}

/// Per-class image/annotation counts for each split, plus a totals row.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub per_class: [SplitCounts; NUM_CLASSES],
    pub totals: SplitCounts,
}

/// An image counts once for every class it contains; annotations count individually.
pub fn class_stats(manifest: &DatasetManifest) -> ClassStats {
    let mut stats = ClassStats::default();
    for r in &manifest.records {
        let mut per_image = [0usize; NUM_CLASSES];
        for b in &r.boxes {
            per_image[b.class.index()] += 1;
        }
        for (row, &n) in stats.per_class.iter_mut().zip(&per_image) {
            if n == 0 {
                continue;
            }
            let (images, annotations) = match r.split {
                Split::Train => (&mut row.train_images, &mut row.train_annotations),
                Split::Val => (&mut row.val_images, &mut row.val_annotations),
                Split::Unassigned => (&mut row.unassigned_images, &mut row.unassigned_annotations),
            };
            *images += 1;
            *annotations += n;
        }
    }
    let mut totals = SplitCounts::default();
    for row in &stats.per_class {
        totals.add(row);
    }
    stats.totals = totals;
    stats
}

impl fmt::Display for ClassStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show_unassigned = self.totals.unassigned_images > 0;
        write!(
            f,
            "{:<16} {:>11} {:>11} {:>11} {:>11}",
            "Class", "Train img", "Train ann", "Val img", "Val ann"
        )?;
        if show_unassigned {
            write!(f, " {:>11} {:>11}", "Unasg img", "Unasg ann")?;
        }
        writeln!(f)?;
        let rows = DistressClass::ALL
            .iter()
            .map(|c| c.name())
            .zip(self.per_class.iter())
            .chain(std::iter::once(("Total", &self.totals)));
        for (name, c) in rows {
            write!(
                f,
                "{:<16} {:>11} {:>11} {:>11} {:>11}",
                name, c.train_images, c.train_annotations, c.val_images, c.val_annotations
            )?;
            if show_unassigned {
                write!(
                    f,
                    " {:>11} {:>11}",
                    c.unassigned_images, c.unassigned_annotations
                )?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
