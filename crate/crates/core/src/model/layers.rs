use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Normal(f64),
    Uniform(f64),
}

/// Creates or adopts named parameters while a network is assembled.
/// Tensors present in `source` are adopted (shape-checked); all others are
/// drawn from a generator seeded by `(seed, name)`, so initialization does
/// not depend on construction order.
pub(crate) struct ParamBuilder {
    pub seed: u64,
    pub dtype: DType,
    pub source: BTreeMap<String, Tensor>,
    pub vars: BTreeMap<String, Var>,
    pub initialized: Vec<String>,
}

pub(crate) fn name_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest length"))
}

impl ParamBuilder {
    pub fn new(seed: u64, dtype: DType, source: BTreeMap<String, Tensor>) -> Self {
        Self {
            seed,
            dtype,
            source,
            vars: BTreeMap::new(),
            initialized: Vec::new(),
        }
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let t = match self.source.remove(name) {
            Some(t) => {
                if t.dims() != shape {
                    return Err(Error::Checkpoint(format!(
                        "{name}: shape {:?}, model expects {shape:?}",
                        t.dims()
                    )));
                }
                t.to_dtype(self.dtype)?
            }
            None => {
                self.initialized.push(name.to_string());
                let n: usize = shape.iter().product();
                let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
                let v: Vec<f64> = match init {
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::Normal(std) => {
                        let d = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
                        (0..n).map(|_| d.sample(&mut rng)).collect()
                    }
                    Init::Uniform(b) => {
                        let d = Uniform::new_inclusive(-b, b).map_err(|e| Error::invalid(e.to_string()))?;
                        (0..n).map(|_| d.sample(&mut rng)).collect()
                    }
                };
                Tensor::from_vec(v, shape, &Device::Cpu)?.to_dtype(self.dtype)?
            }
        };
        let var = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), var.clone());
        Ok(var)
    }
}

pub(crate) struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize) -> Result<Self> {
        Ok(Self {
            w: pb.get(&format!("{name}.weight"), &[out, inp], Init::Normal(0.02))?,
            b: pb.get(&format!("{name}.bias"), &[out], Init::Zeros)?,
        })
    }

    /// Applies `x·Wᵀ + b` over the last axis.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut dims = x.dims().to_vec();
        let inp = *dims.last().expect("non-scalar input");
        let rows = x.elem_count() / inp;
        let y = x
            .reshape((rows, inp))?
            .matmul(&self.w.as_tensor().t()?)?
            .broadcast_add(self.b.as_tensor())?;
        *dims.last_mut().unwrap() = self.w.dims()[0];
        Ok(y.reshape(dims)?)
    }
}

pub(crate) struct LayerNorm {
    w: Var,
    b: Var,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            w: pb.get(&format!("{name}.weight"), &[dim], Init::Ones)?,
            b: pb.get(&format!("{name}.bias"), &[dim], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + 1e-6)?.sqrt()?)?;
        Ok(xn.broadcast_mul(self.w.as_tensor())?.broadcast_add(self.b.as_tensor())?)
    }
}

/// Per-sample, per-channel normalization over the spatial axes, no affine.
pub(crate) fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let f = x.reshape((b, c, h * w))?;
    let mean = f.mean_keepdim(2)?;
    let fc = f.broadcast_sub(&mean)?;
    let var = fc.sqr()?.mean_keepdim(2)?;
    let out = fc.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
    Ok(out.reshape((b, c, h, w))?)
}

pub(crate) fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.maximum(&(x * 0.01)?)?)
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

/// Logistic function written through `tanh`, which keeps gradients finite
/// for large logits.
pub(crate) fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

pub(crate) struct Conv {
    w: Var,
    b: Option<Var>,
    pad: usize,
}

impl Conv {
    /// Square `k×k` stride-1 convolution with same padding.
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize, k: usize, bias: bool) -> Result<Self> {
        let std = (2.0 / (inp * k * k) as f64).sqrt();
        let w = pb.get(&format!("{name}.weight"), &[out, inp, k, k], Init::Normal(std))?;
        let b = if bias {
            Some(pb.get(&format!("{name}.bias"), &[out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self { w, b, pad: k / 2 })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.w.as_tensor(), self.pad, 1, 1, 1)?;
        add_channel_bias(y, self.b.as_ref())
    }
}

fn add_channel_bias(y: Tensor, b: Option<&Var>) -> Result<Tensor> {
    match b {
        Some(b) => {
            let c = b.dims()[0];
            Ok(y.broadcast_add(&b.as_tensor().reshape((1, c, 1, 1))?)?)
        }
        None => Ok(y),
    }
}

/// 2×2 stride-2 transposed convolution (exact spatial doubling).
pub(crate) struct Up2 {
    w: Var,
    b: Var,
}

impl Up2 {
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize) -> Result<Self> {
        let bound = (1.0 / (inp * 4) as f64).sqrt();
        Ok(Self {
            w: pb.get(&format!("{name}.weight"), &[inp, out, 2, 2], Init::Uniform(bound))?,
            b: pb.get(&format!("{name}.bias"), &[out], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.w.as_tensor(), 0, 0, 2, 1)?;
        add_channel_bias(y, Some(&self.b))
    }
}

/// Two 3×3 conv + instance-norm layers with a residual path; a 1×1
/// projection aligns channels when they differ.
pub(crate) struct ResBlock {
    conv1: Conv,
    conv2: Conv,
    conv3: Option<Conv>,
}

impl ResBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::new(pb, &format!("{name}.conv1"), inp, out, 3, false)?,
            conv2: Conv::new(pb, &format!("{name}.conv2"), out, out, 3, false)?,
            conv3: if inp != out {
                Some(Conv::new(pb, &format!("{name}.conv3"), inp, out, 1, false)?)
            } else {
                None
            },
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = leaky_relu(&instance_norm(&self.conv1.forward(x)?)?)?;
        let h = instance_norm(&self.conv2.forward(&h)?)?;
        let res = match &self.conv3 {
            Some(c) => instance_norm(&c.forward(x)?)?,
            None => x.clone(),
        };
        leaky_relu(&(h + res)?)
    }
}

/// Doubles resolution, concatenates the skip, fuses with a residual block.
pub(crate) struct UpBlock {
    up: Up2,
    res: ResBlock,
}

impl UpBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize) -> Result<Self> {
        Ok(Self {
            up: Up2::new(pb, &format!("{name}.transp"), inp, out)?,
            res: ResBlock::new(pb, &format!("{name}.res"), 2 * out, out)?,
        })
    }

    pub fn forward(&self, x: &Tensor, skip: &Tensor) -> Result<Tensor> {
        let up = self.up.forward(x)?;
        self.res.forward(&Tensor::cat(&[&up, skip], 1)?)
    }
}

/// Projects a token map to a higher resolution: one transposed conv then
/// `stages` rounds of (transposed conv, residual block).
pub(crate) struct ProjUp {
    init: Up2,
    stages: Vec<(Up2, ResBlock)>,
}

impl ProjUp {
    pub fn new(pb: &mut ParamBuilder, name: &str, inp: usize, out: usize, stages: usize) -> Result<Self> {
        let init = Up2::new(pb, &format!("{name}.transp_init"), inp, out)?;
        let stages = (0..stages)
            .map(|k| {
                Ok((
                    Up2::new(pb, &format!("{name}.stages.{k}.transp"), out, out)?,
                    ResBlock::new(pb, &format!("{name}.stages.{k}.res"), out, out)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { init, stages })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.init.forward(x)?;
        for (up, res) in &self.stages {
            h = res.forward(&up.forward(&h)?)?;
        }
        Ok(h)
    }
}
