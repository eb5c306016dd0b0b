//! Scalar abstraction for the geometry layer.

/// Floating scalar the geometry and curve code is generic over. Concrete
/// aliases at the crate root pin f64 for the rest of the pipeline.
pub trait Real: num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + 'static {
    /// Lossless-enough conversion from a literal. Panics only if the scalar
    /// type cannot represent ordinary constants, which no Float does.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
