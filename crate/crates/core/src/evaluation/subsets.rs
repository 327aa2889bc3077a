use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{DistanceClass, SizeClass};

use super::matching::ConsistencyRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeSubset {
    All,
    S,
    M,
    L,
}

impl SizeSubset {
    pub const ALL: [SizeSubset; 4] = [SizeSubset::All, SizeSubset::S, SizeSubset::M, SizeSubset::L];

    fn admits(self, c: SizeClass) -> bool {
        match self {
            SizeSubset::All => true,
            SizeSubset::S => c == SizeClass::S,
            SizeSubset::M => c == SizeClass::M,
            SizeSubset::L => c == SizeClass::L,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceSubset {
    All,
    Near,
    Mid,
    Far,
}

impl DistanceSubset {
    pub const ALL: [DistanceSubset; 4] = [
        DistanceSubset::All,
        DistanceSubset::Near,
        DistanceSubset::Mid,
        DistanceSubset::Far,
    ];

    fn admits(self, c: DistanceClass) -> bool {
        match self {
            DistanceSubset::All => true,
            DistanceSubset::Near => c == DistanceClass::Near,
            DistanceSubset::Mid => c == DistanceClass::Mid,
            DistanceSubset::Far => c == DistanceClass::Far,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCell {
    pub size: SizeSubset,
    pub distance: DistanceSubset,
    pub count: usize,
    pub successes: usize,
    pub mean_iou: f64,
    /// Percentage.
    pub success_rate: f64,
}

/// Mean IoU and success rate for every size × distance subset, marginals
/// included. Subsets without records are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub cells: Vec<SubsetCell>,
}

impl SubsetReport {
    /// Distance classes are taken as they are on the records, so they should
    /// already have been assigned over the whole population.
    pub fn from_records(records: &[ConsistencyRecord]) -> Self {
        let mut cells = Vec::new();
        for distance in DistanceSubset::ALL {
            for size in SizeSubset::ALL {
                let members: Vec<&ConsistencyRecord> = records
                    .iter()
                    .filter(|r| size.admits(r.size_class) && distance.admits(r.distance_class))
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let count = members.len();
                let successes = members.iter().filter(|r| r.success).count();
                let iou_sum: f64 = members.iter().map(|r| r.recorded_iou).sum();
                cells.push(SubsetCell {
                    size,
                    distance,
                    count,
                    successes,
                    mean_iou: iou_sum / count as f64,
                    success_rate: 100.0 * successes as f64 / count as f64,
                });
            }
        }
        Self { cells }
    }

    pub fn get(&self, size: SizeSubset, distance: DistanceSubset) -> Option<&SubsetCell> {
        self.cells
            .iter()
            .find(|c| c.size == size && c.distance == distance)
    }
}

impl fmt::Display for SubsetReport {
    /// Two blocks laid out like a paper table: rows are distance subsets,
    /// columns are size subsets; `-` marks an empty subset.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row_name = |d: DistanceSubset| match d {
            DistanceSubset::All => "All",
            DistanceSubset::Near => "near",
            DistanceSubset::Mid => "mid",
            DistanceSubset::Far => "far",
        };
        for (title, pick) in [
            (
                "IoU",
                (|c: &SubsetCell| format!("{:.3}", c.mean_iou)) as fn(&SubsetCell) -> String,
            ),
            ("R_suc %", |c: &SubsetCell| format!("{:.2}", c.success_rate)),
        ] {
            writeln!(f, "{title:<8}{:>9}{:>9}{:>9}{:>9}", "All", "S", "M", "L")?;
            for d in DistanceSubset::ALL {
                write!(f, "{:<8}", row_name(d))?;
                for s in SizeSubset::ALL {
                    let v = self.get(s, d).map(pick).unwrap_or_else(|| "-".into());
                    write!(f, "{v:>9}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
