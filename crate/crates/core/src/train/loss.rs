use candle_core::{DType, Device, Tensor};

use crate::dataset::ClassMask;
use crate::error::{Error, Result};
use crate::model::{targets_from_mask, ProbabilityPair};

/// Probability clamp inside the logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over every element, with predictions clamped to
/// `[ε, 1 − ε]`. Differentiable; returns a scalar tensor.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let target = target.to_dtype(pred.dtype())?;
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS)?;
    let pos = (&target * p.log()?)?;
    let neg = (target.affine(-1.0, 1.0)? * p.affine(-1.0, 1.0)?.log()?)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

/// BCE of a probability pair against a class mask, in 64-bit arithmetic.
pub fn bce_pair(pred: &ProbabilityPair, mask: &ClassMask) -> Result<f64> {
    if pred.width != mask.width() || pred.height != mask.height() {
        return Err(Error::DimensionMismatch {
            context: "bce".into(),
            expected_w: pred.width,
            expected_h: pred.height,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let (ta, tm) = targets_from_mask(mask);
    let shape = (2, pred.height, pred.width);
    let p = Tensor::from_vec([pred.axon.clone(), pred.myelin.clone()].concat(), shape, &Device::Cpu)?;
    let t = Tensor::from_vec([ta, tm].concat(), shape, &Device::Cpu)?;
    let l = bce_loss(&p.to_dtype(DType::F64)?, &t)?;
    Ok(l.to_scalar::<f64>()?)
}
