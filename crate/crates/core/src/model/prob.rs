use crate::dataset::{ClassMask, AXON, BACKGROUND, MYELIN};
use crate::error::{Error, Result};

/// Per-pixel axon and myelin scores in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityPair {
    pub width: usize,
    pub height: usize,
    pub axon: Vec<f32>,
    pub myelin: Vec<f32>,
}

impl ProbabilityPair {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            axon: vec![0.0; width * height],
            myelin: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, axon: Vec<f32>, myelin: Vec<f32>) -> Result<Self> {
        if axon.len() != width * height || myelin.len() != width * height {
            return Err(Error::DimensionMismatch {
                context: "probability channels".into(),
                expected_w: width,
                expected_h: height,
                width: axon.len(),
                height: myelin.len(),
            });
        }
        Ok(Self {
            width,
            height,
            axon,
            myelin,
        })
    }

    /// Binarizes both channels: background where both scores are below
    /// `threshold`, otherwise the higher-scoring class, ties going to myelin.
    pub fn to_class_mask(&self, threshold: f64) -> Result<ClassMask> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
        }
        let t = threshold as f32;
        let values = self
            .axon
            .iter()
            .zip(&self.myelin)
            .map(|(&a, &m)| classify(a, m, t))
            .collect();
        ClassMask::from_vec(self.width, self.height, values)
    }
}

fn classify(a: f32, m: f32, t: f32) -> u8 {
    if a < t && m < t {
        BACKGROUND
    } else if m >= a {
        MYELIN
    } else {
        AXON
    }
}

/// Binary targets for the two channels: `(axon, myelin)`.
pub fn targets_from_mask(mask: &ClassMask) -> (Vec<f32>, Vec<f32>) {
    let axon = mask.values().iter().map(|&v| (v == AXON) as u8 as f32).collect();
    let myelin = mask.values().iter().map(|&v| (v == MYELIN) as u8 as f32).collect();
    (axon, myelin)
}
