//! Multimodal fingerprint + iris verification.
//!
//! Two interchangeable backends compute the same features: a floating-point
//! reference ([`Backend::Reference`]) and a fixed-point, line-buffered,
//! stage-pipelined model of a hardware implementation
//! ([`Backend::HardwareModel`], see [`hwmodel`]).

pub mod error;
pub mod raster;
pub mod regions;
pub mod imgio;
pub mod fp_enhance;
pub mod fp_minutiae;
pub mod fp_match;
pub mod iris_segment;
pub mod iris_code;
pub mod fusion;
pub mod hwmodel;
pub mod backend;
pub mod config;
pub mod synth;
pub mod harness;

pub use error::{Error, Result};
pub use fp_minutiae::{Minutia, MinutiaKind, MinutiaeSet};
pub use fusion::{FusedDecision, FusionParams, MatchScore};
pub use imgio::{DatasetIndex, TemplateRecord};
pub use iris_code::{IrisCode, IrisScore};
pub use raster::{GrayImage, RealImage};
