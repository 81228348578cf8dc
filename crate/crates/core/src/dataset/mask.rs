use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const AXON: u8 = 1;
pub const MYELIN: u8 = 2;

/// Per-pixel semantic labels: 0 background, 1 myelinated axon, 2 myelin sheath.
///
/// Row-major, `values[y * width + x]`. Construction validates the class set,
/// so a `ClassMask` in hand never holds an id outside `{0, 1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl ClassMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![BACKGROUND; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "mask buffer holds {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        if let Some(&bad) = values.iter().find(|&&v| v > MYELIN) {
            return Err(Error::InvalidClass {
                context: "class mask".into(),
                value: bad,
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u8> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    /// Panics if `class` is not a valid class id.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        assert!(class <= MYELIN, "invalid class id {class}");
        self.values[y * self.width + x] = class;
    }

    /// Pixel counts per class id.
    pub fn histogram(&self) -> [u64; 3] {
        let mut h = [0u64; 3];
        for &v in &self.values {
            h[v as usize] += 1;
        }
        h
    }

    pub fn count(&self, class: u8) -> u64 {
        self.values.iter().filter(|&&v| v == class).count() as u64
    }

    /// Copies the `w`×`h` window at `(x0, y0)`; the window must lie inside the mask.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ClassMask {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        ClassMask {
            width: w,
            height: h,
            values,
        }
    }

    /// Writes `src` into this mask with its top-left corner at `(x0, y0)`, clipping
    /// whatever falls outside.
    pub fn paste(&mut self, src: &ClassMask, x0: usize, y0: usize) {
        let w = src.width.min(self.width.saturating_sub(x0));
        let h = src.height.min(self.height.saturating_sub(y0));
        for y in 0..h {
            let dst = (y0 + y) * self.width + x0;
            self.values[dst..dst + w].copy_from_slice(&src.values[y * src.width..y * src.width + w]);
        }
    }
}

/// Reduces a mask by `factor` in both directions by majority vote over each
/// `factor`×`factor` block. Ties go to the higher class id so thin sheaths
/// survive the reduction.
pub fn downsample_labels(mask: &ClassMask, factor: usize) -> Result<ClassMask> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    if mask.width % factor != 0 || mask.height % factor != 0 {
        return Err(Error::invalid(format!(
            "mask {}x{} is not divisible by factor {factor}",
            mask.width, mask.height
        )));
    }
    if factor == 1 {
        return Ok(mask.clone());
    }
    let (ow, oh) = (mask.width / factor, mask.height / factor);
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            let mut hist = [0u32; 3];
            for y in by * factor..(by + 1) * factor {
                let row = &mask.values[y * mask.width + bx * factor..y * mask.width + (bx + 1) * factor];
                for &v in row {
                    hist[v as usize] += 1;
                }
            }
            out.push(majority(hist));
        }
    }
    Ok(ClassMask {
        width: ow,
        height: oh,
        values: out,
    })
}

#[inline]
fn majority(hist: [u32; 3]) -> u8 {
    let mut best = MYELIN;
    for class in [AXON, BACKGROUND] {
        if hist[class as usize] > hist[best as usize] {
            best = class;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_downsamples_to_constant() {
        let m = ClassMask::from_vec(4, 4, vec![1; 16]).unwrap();
        let d = downsample_labels(&m, 2).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.values().iter().all(|&v| v == 1));
    }

    #[test]
    fn majority_block() {
        let m = ClassMask::from_vec(2, 2, vec![1, 1, 2, 0]).unwrap();
        let d = downsample_labels(&m, 2).unwrap();
        assert_eq!(d.values(), &[1]);
    }

    #[test]
    fn ties_prefer_higher_class() {
        let m = ClassMask::from_vec(2, 2, vec![1, 1, 2, 2]).unwrap();
        assert_eq!(downsample_labels(&m, 2).unwrap().values(), &[2]);
        let m = ClassMask::from_vec(2, 2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(downsample_labels(&m, 2).unwrap().values(), &[1]);
    }

    #[test]
    fn factor_one_is_identity() {
        let m = ClassMask::from_vec(3, 2, vec![0, 1, 2, 2, 1, 0]).unwrap();
        assert_eq!(downsample_labels(&m, 1).unwrap(), m);
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let m = ClassMask::zeros(6, 4);
        assert!(downsample_labels(&m, 4).is_err());
        assert!(downsample_labels(&m, 0).is_err());
    }

    #[test]
    fn invalid_class_rejected() {
        let err = ClassMask::from_vec(2, 1, vec![0, 7]).unwrap_err();
        assert!(matches!(err, Error::InvalidClass { value: 7, .. }));
    }

    #[test]
    fn crop_and_paste() {
        let m = ClassMask::from_vec(3, 3, vec![0, 1, 2, 1, 2, 0, 2, 0, 1]).unwrap();
        let c = m.crop(1, 1, 2, 2);
        assert_eq!(c.values(), &[2, 0, 0, 1]);
        let mut z = ClassMask::zeros(3, 3);
        z.paste(&c, 2, 2);
        assert_eq!(z.get(2, 2), 2);
        assert_eq!(z.count(2), 1);
    }
}
