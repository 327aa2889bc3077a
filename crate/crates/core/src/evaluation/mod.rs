//! Object-wise consistency scoring and distribution distance.

mod frechet;
mod matching;
mod subsets;

pub use self::frechet::{fit_gaussian, frechet_distance, FeatureStats, EIGENVALUE_TOLERANCE};
pub use self::matching::{
    assign_distance_classes, match_guidance, mean_iou, success_rate, ConsistencyRecord,
    DetectionRecord, SUCCESS_THRESHOLD,
};
pub use self::subsets::{DistanceSubset, SizeSubset, SubsetCell, SubsetReport};
