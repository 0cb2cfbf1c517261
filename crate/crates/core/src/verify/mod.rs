//! Monte Carlo checks of the computed rates: sampling μ∗ν, empirical weak
//! Poincaré inequalities, semigroup decay and derivative cross-checks.

pub mod crosscheck;
pub mod decay;
pub mod ks;
pub mod sampling;
pub mod testfn;
pub mod wpi;

pub use crosscheck::{crosscheck_gradients, crosscheck_points, CrosscheckReport, Discrepancy};
pub use decay::{decay_with, langevin_samples, semigroup_decay, DecayPlan, DecayTrace, DriftTable};
pub use ks::{ks_against_model, ks_critical_1pct, ks_distance, ConvolutionCdf, KsReport};
pub use sampling::{default_method, sample_convolution, sample_with, RadialInverse, SampleBatch, SampleMethod};
pub use testfn::{default_corpus, Role, Shape, TestFunction};
pub use wpi::{empirical_wpi, wpi_from_samples, FunctionStats, SlackRow, WpiReport, WPI_Z, Z95};
