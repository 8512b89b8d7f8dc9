use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng as _;

use super::spec::{NetworkSpec, Segment};
use crate::error::{Error, Result};
use crate::seed;

/// Position of one layer inside a flat parameter vector. Weights are stored
/// `fan_in × fan_out` row-major, followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub segment: Segment,
}

impl LayerSlot {
    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn biases(&self) -> Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + (self.fan_in + 1) * self.fan_out
    }
}

/// Flat layout of all parameters of a [`NetworkSpec`].
///
/// Extractor layers precede classifier layers, so each segment occupies one
/// contiguous range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    spec: NetworkSpec,
    layers: Vec<LayerSlot>,
    classifier_offset: usize,
    len: usize,
}

impl Layout {
    pub fn new(spec: &NetworkSpec) -> Self {
        let mut layers = Vec::with_capacity(spec.num_layers());
        let mut offset = 0;
        let mut classifier_offset = None;
        for (l, (fan_in, fan_out)) in spec.layer_dims().enumerate() {
            let segment = spec.segment_of_layer(l);
            if segment == Segment::Classifier && classifier_offset.is_none() {
                classifier_offset = Some(offset);
            }
            layers.push(LayerSlot {
                offset,
                fan_in,
                fan_out,
                segment,
            });
            offset += (fan_in + 1) * fan_out;
        }
        Self {
            spec: spec.clone(),
            layers,
            classifier_offset: classifier_offset.unwrap_or(offset),
            len: offset,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerSlot] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segment_range(&self, segment: Segment) -> Range<usize> {
        match segment {
            Segment::Extractor => 0..self.classifier_offset,
            Segment::Classifier => self.classifier_offset..self.len,
        }
    }

    pub fn segment_of(&self, index: usize) -> Segment {
        if index < self.classifier_offset {
            Segment::Extractor
        } else {
            Segment::Classifier
        }
    }
}

/// All parameters of a network as one flat `f64` vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layout = Layout::new(spec);
        Self {
            values: vec![0.0; layout.len()],
            layout: Arc::new(layout),
        }
    }

    /// Glorot-uniform weights, `U(±√(6/(fan_in+fan_out)))`, and zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut params = Self::zeros(spec);
        let mut rng = seed::rng(seed);
        let layers = params.layout.layers.clone();
        for slot in &layers {
            params.init_layer(slot, &mut rng);
        }
        params
    }

    pub(crate) fn init_layer(&mut self, slot: &LayerSlot, rng: &mut seed::Rng) {
        let bound = libm::sqrt(6.0 / (slot.fan_in + slot.fan_out) as f64);
        for w in &mut self.values[slot.weights()] {
            *w = rng.random_range(-bound..=bound);
        }
        self.values[slot.biases()].fill(0.0);
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(spec);
        if values.len() != layout.len() {
            return Err(Error::Shape {
                context: "ParamVector::from_values",
                expected: layout.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            layout: Arc::new(layout),
        })
    }

    /// A vector of the same layout holding `values`.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape {
                context: "ParamVector::with_values",
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            layout: Arc::clone(&self.layout),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: Arc::clone(&self.layout),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.layout.spec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, segment: Segment) -> &[f64] {
        &self.values[self.layout.segment_range(segment)]
    }

    pub fn segment_mut(&mut self, segment: Segment) -> &mut [f64] {
        let range = self.layout.segment_range(segment);
        &mut self.values[range]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub(crate) fn check_layout(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Layout(context))
        }
    }

    pub(crate) fn check_spec(&self, spec: &NetworkSpec, context: &'static str) -> Result<()> {
        if self.layout.spec == *spec {
            Ok(())
        } else {
            Err(Error::Layout(context))
        }
    }

    /// Bitwise equality of the values, treating NaN payloads as distinct.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
