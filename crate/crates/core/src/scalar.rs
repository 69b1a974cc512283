use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point type the search core is generic over.
///
/// Implemented for `f32` and `f64`. Distances, scaled numerics and
/// embeddings in a [`ProcessedDataset`](crate::ProcessedDataset) all use
/// the same scalar.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Sum<Self> + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly
    /// rounded) in both supported types.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Slack used when comparing a pruning bound against the current k-th
    /// distance; absorbs rounding in sqrt and in the subtraction.
    fn prune_slack(magnitude: Self) -> Self {
        Self::epsilon() * Self::of(64.0) * (Self::one() + magnitude)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
