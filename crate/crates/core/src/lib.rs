//! Stroke-level and point-level attribution for vector sketches.
//!
//! A sketch is rendered to pixels either with a hard line rasteriser
//! ([`raster`]) or with a differentiable distance-field renderer
//! ([`diffraster`]). A [`scorer::Scorer`] turns the image into a scalar, and
//! [`attribution`] pushes its pixel gradient back onto strokes or points.
//! [`applications`] builds filtering, attacks and retrieval reliability on
//! top, and [`service`] exposes everything as JSON jobs over HTTP.

pub mod applications;
pub mod attribution;
pub mod diffraster;
pub mod export;
pub mod image;
pub mod raster;
pub mod scorer;
pub mod service;
pub mod sketch;
pub mod synthetic;
