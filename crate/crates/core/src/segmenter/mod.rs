//! Unsupervised per-box foreground segmenters used to build coarse masks.
//!
//! Every segmenter implements [`CoarseSegmenter`] and is registered by name
//! in a [`SegmenterRegistry`], so the pipeline can pick one from
//! configuration at runtime.

pub mod gmm;
pub mod grabcut;

use std::collections::BTreeMap;
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::geometry::BBox;

pub use grabcut::{grabcut, grabcut_with, GrabCutOutcome, GrabCutParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentError {
    #[error("box covers no pixel of the image")]
    EmptyRegion,
    #[error("box covers {pixels} pixels, fewer than the {components} mixture components")]
    TooSmall { pixels: usize, components: usize },
    #[error("box covers the whole image, leaving no background samples")]
    NoBackground,
    #[error("invalid segmenter parameter: {0}")]
    InvalidParam(String),
    #[error("unknown segmenter {0:?}")]
    UnknownSegmenter(String),
    #[error("segmenter returned a {got_w}x{got_h} map for a {want_w}x{want_h} box")]
    BadOutputShape { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
}

/// Binary foreground indicator over a box's pixel extent, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMap {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ForegroundMap {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }
}

pub trait CoarseSegmenter: Send + Sync {
    fn name(&self) -> &str;

    /// Foreground over `bbox`'s pixel extent (clipped to the image).
    /// Deterministic for a given `seed`.
    fn segment(&self, image: &RgbImage, bbox: &BBox, seed: u64) -> Result<ForegroundMap, SegmentError>;
}

/// Marks the whole box as foreground; makes the coarse mask equal the
/// box-filled mask.
#[derive(Debug, Default, Clone, Copy)]
pub struct BoxFillSegmenter;

impl CoarseSegmenter for BoxFillSegmenter {
    fn name(&self) -> &str {
        "boxfill"
    }

    fn segment(&self, image: &RgbImage, bbox: &BBox, _seed: u64) -> Result<ForegroundMap, SegmentError> {
        let span = bbox
            .pixel_span(image.width() as usize, image.height() as usize)
            .ok_or(SegmentError::EmptyRegion)?;
        Ok(ForegroundMap::filled(span.width(), span.height(), true))
    }
}

#[derive(Debug, Default, Clone)]
pub struct GrabCutSegmenter {
    pub params: GrabCutParams,
}

impl CoarseSegmenter for GrabCutSegmenter {
    fn name(&self) -> &str {
        "grabcut"
    }

    fn segment(&self, image: &RgbImage, bbox: &BBox, seed: u64) -> Result<ForegroundMap, SegmentError> {
        grabcut(image, bbox, &self.params, seed).map(|o| o.foreground)
    }
}

/// Options handed to segmenter factories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmenterOptions {
    pub grabcut: GrabCutParams,
}

pub type SegmenterFactory =
    Arc<dyn Fn(&SegmenterOptions) -> Result<Box<dyn CoarseSegmenter>, SegmentError> + Send + Sync>;

/// Name-indexed segmenter constructors.
#[derive(Clone)]
pub struct SegmenterRegistry {
    factories: BTreeMap<String, SegmenterFactory>,
}

impl SegmenterRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// `boxfill` and `grabcut`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("boxfill", |_| Ok(Box::new(BoxFillSegmenter)));
        reg.register("grabcut", |opts| {
            opts.grabcut.validate()?;
            crate::flow::SolverRegistry::with_builtins()
                .create(&opts.grabcut.solver)
                .map_err(|e| SegmentError::InvalidParam(e.to_string()))?;
            Ok(Box::new(GrabCutSegmenter { params: opts.grabcut.clone() }))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SegmenterOptions) -> Result<Box<dyn CoarseSegmenter>, SegmentError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn create(&self, name: &str, options: &SegmenterOptions) -> Result<Box<dyn CoarseSegmenter>, SegmentError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| SegmentError::UnknownSegmenter(name.to_string()))?;
        factory(options)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for SegmenterRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
