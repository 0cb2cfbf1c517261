//! The confining potential `V`, the perturbing measure ν, and the
//! convolution μ∗ν with its density, log-density gradient and tilted means.

pub mod convolution;
pub mod potential;
pub mod source;

pub use convolution::{ConvolutionModel, Tilted, TiltedFn, Which};
pub use potential::{sphere_area, Potential, Profile, QuarticPatch};
pub use source::{Density1D, LatticeSeries, SourceKind, SourceMeasure, SourceSpec, EPS_TAIL};
