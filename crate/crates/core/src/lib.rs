//! Sensitivity analysis for unmeasured confounding in non-inferiority
//! studies built on non-randomised data.
//!
//! The crate computes the non-inferiority E-value (NIE): the smallest
//! strength of association, on the risk-ratio scale, that an unmeasured
//! confounder would need with both exposure and outcome to move the
//! governing 95% confidence limit onto the non-inferiority margin.
//!
//! ```
//! use nie_core::conversion::{EffectSummary, Measure, OutcomeFrequency};
//! use nie_core::sensitivity::Direction;
//! use nie_core::study::{analyze, StudyRecord};
//!
//! let record = StudyRecord {
//!     study_id: "durand".into(),
//!     label: String::new(),
//!     estimate: EffectSummary::new(Measure::HR, 1.00, 0.73, 1.38)?,
//!     margin: 3.0,
//!     direction: Direction::Preventive,
//!     frequency: OutcomeFrequency::common(),
//! };
//! let result = analyze(&record)?;
//! assert_eq!(format!("{:.2}", result.nie_limit), "2.78");
//! assert_eq!(format!("{:.2}", result.nie_point), "3.66");
//! # Ok::<(), nie_core::Error>(())
//! ```
//!
//! Modules:
//! - [`sensitivity`]: bias factor, classical and generalized E-values, kappa, NIE
//! - [`conversion`]: hazard-ratio to risk-ratio conversion
//! - [`contour`]: the kappa-contour of the bias factor
//! - [`oracle`]: brute-force verification of the bias-factor bound
//! - [`study`]: study files and the per-study pipeline
//! - [`report`]: text reports and SVG plots

pub mod contour;
pub mod conversion;
pub mod error;
pub mod oracle;
pub mod report;
pub mod sensitivity;
pub mod study;

pub use error::{Error, Result};
