use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// The two parameter segments of a network: lower layers learn features,
/// the top layers map features to class logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Extractor,
    Classifier,
}

/// A subset of [`Segment`]s, used to freeze parts of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SegmentSet {
    pub extractor: bool,
    pub classifier: bool,
}

impl SegmentSet {
    pub const NONE: Self = Self {
        extractor: false,
        classifier: false,
    };
    pub const EXTRACTOR: Self = Self {
        extractor: true,
        classifier: false,
    };
    pub const CLASSIFIER: Self = Self {
        extractor: false,
        classifier: true,
    };
    pub const ALL: Self = Self {
        extractor: true,
        classifier: true,
    };

    pub fn contains(self, segment: Segment) -> bool {
        match segment {
            Segment::Extractor => self.extractor,
            Segment::Classifier => self.classifier,
        }
    }
}

/// Architecture of a fully connected network.
///
/// Layer `l` maps width `dims[l]` to `dims[l + 1]`; every layer except the
/// last applies the activation. Layers with index `>= classifier_boundary`
/// form the classifier segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    classifier_boundary: usize,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        classifier_boundary: usize,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be positive: input {input_dim}, hidden {hidden_widths:?}, output {output_dim}"
            )));
        }
        let layers = hidden_widths.len() + 1;
        if classifier_boundary == 0 || classifier_boundary > layers {
            return Err(Error::Config(format!(
                "classifier_boundary {classifier_boundary} outside [1, {layers}]"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            output_dim,
            activation: Activation::Relu,
            classifier_boundary,
        })
    }

    /// Hidden layers of the given widths with only the output layer as
    /// classifier. Without hidden layers the single layer is all extractor.
    pub fn mlp(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize) -> Result<Self> {
        let boundary = hidden_widths.len().max(1);
        Self::new(input_dim, hidden_widths, output_dim, boundary)
    }

    /// Three 400-unit hidden layers on 28×28 inputs.
    pub fn mnist(output_dim: usize) -> Self {
        Self::mlp(784, alloc::vec![400, 400, 400], output_dim).expect("valid MNIST spec")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn classifier_boundary(&self) -> usize {
        self.classifier_boundary
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `(fan_in, fan_out)` of each layer, bottom to top.
    pub fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let widths = core::iter::once(self.input_dim)
            .chain(self.hidden_widths.iter().copied())
            .chain(core::iter::once(self.output_dim));
        let next = widths.clone().skip(1);
        widths.zip(next)
    }

    pub fn segment_of_layer(&self, layer: usize) -> Segment {
        if layer >= self.classifier_boundary {
            Segment::Classifier
        } else {
            Segment::Extractor
        }
    }

    /// Same architecture with a different number of output classes.
    pub fn with_output_dim(&self, output_dim: usize) -> Result<Self> {
        Self::new(
            self.input_dim,
            self.hidden_widths.clone(),
            output_dim,
            self.classifier_boundary,
        )
    }
}
