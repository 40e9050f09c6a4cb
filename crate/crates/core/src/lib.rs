//! Numerical toolkit for Hermitian metrics on split vector bundles over the
//! Riemann sphere: curvature, the Donaldson functional, geodesic rays built
//! from filtrations and the Hermitian-Yang-Mills flow.

pub mod bundle;
pub mod calculus;
pub mod donaldson;
pub mod endo;
pub mod error;
pub mod field;
pub mod flow;
pub mod geodesic;
pub mod geometry;
pub mod lemmas;
pub mod linalg;

pub use bundle::{BundleSpec, Filtration, SectionMonomial};
pub use calculus::{CurvatureField, MetricField};
pub use endo::{EndoField, SpectralData};
pub use error::{Error, Result};
pub use field::{CMatrix, MatrixField};
pub use geometry::{BaseGeometry, Chart, ChartPoint};
