//! Intersection-over-union scoring and benchmark tables.
//!
//! mIoU averages the two foreground classes (axon, myelin); background is not
//! a scored class. Region scores are micro-averaged: pixel counts are summed
//! over all patches before dividing.

use std::fmt::Write as _;

use crate::dataset::{ClassMask, AXON, MYELIN};
use crate::error::{Error, Result};

pub const SCORED_CLASSES: [u8; 2] = [AXON, MYELIN];

/// Intersection and union pixel counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub intersection: u64,
    pub union: u64,
}

impl ClassCounts {
    /// IoU, with empty-over-empty defined as 1.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    fn add(&mut self, other: ClassCounts) {
        self.intersection += other.intersection;
        self.union += other.union;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    pub region: String,
    pub axon: ClassCounts,
    pub myelin: ClassCounts,
}

impl IoUReport {
    pub fn iou_axon(&self) -> f64 {
        self.axon.iou()
    }

    pub fn iou_myelin(&self) -> f64 {
        self.myelin.iou()
    }

    pub fn miou(&self) -> f64 {
        0.5 * (self.iou_axon() + self.iou_myelin())
    }
}

fn check_dims(pred: &ClassMask, gt: &ClassMask) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch {
            context: "prediction vs ground truth".into(),
            expected_w: gt.width(),
            expected_h: gt.height(),
            width: pred.width(),
            height: pred.height(),
        });
    }
    Ok(())
}

pub fn class_counts(pred: &ClassMask, gt: &ClassMask, class_id: u8) -> Result<ClassCounts> {
    check_dims(pred, gt)?;
    let mut c = ClassCounts::default();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let (a, b) = (p == class_id, g == class_id);
        c.intersection += u64::from(a && b);
        c.union += u64::from(a || b);
    }
    Ok(c)
}

/// IoU of one foreground class; 1.0 when the class is absent from both masks.
pub fn iou_class(pred: &ClassMask, gt: &ClassMask, class_id: u8) -> Result<f64> {
    if !SCORED_CLASSES.contains(&class_id) {
        return Err(Error::invalid(format!("class {class_id} is not a scored class")));
    }
    Ok(class_counts(pred, gt, class_id)?.iou())
}

pub fn miou(pred: &ClassMask, gt: &ClassMask) -> Result<IoUReport> {
    let mut acc = IoUAccumulator::new("patch");
    acc.add(pred, gt)?;
    Ok(acc.report())
}

/// Sums per-class counts over many patches (micro-average).
#[derive(Debug, Clone)]
pub struct IoUAccumulator {
    region: String,
    axon: ClassCounts,
    myelin: ClassCounts,
    patches: usize,
}

impl IoUAccumulator {
    pub fn new(region: impl Into<String>) -> Self {
        Self {
            region: region.into(),
            axon: ClassCounts::default(),
            myelin: ClassCounts::default(),
            patches: 0,
        }
    }

    pub fn add(&mut self, pred: &ClassMask, gt: &ClassMask) -> Result<()> {
        check_dims(pred, gt)?;
        let (mut ia, mut ua, mut im, mut um) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            ia += u64::from(p == AXON && g == AXON);
            ua += u64::from(p == AXON || g == AXON);
            im += u64::from(p == MYELIN && g == MYELIN);
            um += u64::from(p == MYELIN || g == MYELIN);
        }
        self.axon.add(ClassCounts {
            intersection: ia,
            union: ua,
        });
        self.myelin.add(ClassCounts {
            intersection: im,
            union: um,
        });
        self.patches += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &IoUAccumulator) {
        self.axon.add(other.axon);
        self.myelin.add(other.myelin);
        self.patches += other.patches;
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn report(&self) -> IoUReport {
        IoUReport {
            region: self.region.clone(),
            axon: self.axon,
            myelin: self.myelin,
        }
    }
}

/// A published benchmark row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub method: &'static str,
    pub input_px: u32,
    pub miou: f64,
}

/// Published mIoU on the full AxonCallosumEM test split. These are anchors for
/// comparison only; they cannot be reproduced without the dataset.
pub const REFERENCE_RESULTS: [ReferenceRow; 5] = [
    ReferenceRow { method: "UNet", input_px: 256, miou: 0.919 },
    ReferenceRow { method: "Scratched ViT-Base", input_px: 224, miou: 0.947 },
    ReferenceRow { method: "MAE-Base", input_px: 224, miou: 0.966 },
    ReferenceRow { method: "BEiT-Base", input_px: 224, miou: 0.962 },
    ReferenceRow { method: "EM-SAM-Base", input_px: 1024, miou: 0.984 },
];

pub const REFERENCE_SOURCE: &str = "published (not locally reproduced)";
pub const LOCAL_SOURCE: &str = "local";

/// One locally measured result.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub method: String,
    pub miou: f64,
    pub iou_axon: Option<f64>,
    pub iou_myelin: Option<f64>,
}

impl LocalResult {
    pub fn from_report(method: impl Into<String>, r: &IoUReport) -> Self {
        Self {
            method: method.into(),
            miou: r.miou(),
            iou_axon: Some(r.iou_axon()),
            iou_myelin: Some(r.iou_myelin()),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text table: local results first, then the reference rows.
pub fn benchmark_report(results: &[LocalResult], reference: &[ReferenceRow]) -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "method".into(),
        "mIoU".into(),
        "IoU axon".into(),
        "IoU myelin".into(),
        "source".into(),
    ]];
    for r in results {
        rows.push([
            r.method.clone(),
            format!("{:.3}", r.miou),
            opt(r.iou_axon),
            opt(r.iou_myelin),
            LOCAL_SOURCE.into(),
        ]);
    }
    for r in reference {
        rows.push([
            format!("{} ({}x{})", r.method, r.input_px, r.input_px),
            format!("{:.3}", r.miou),
            "-".into(),
            "-".into(),
            REFERENCE_SOURCE.into(),
        ]);
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// CSV with header `method,miou,iou_axon,iou_myelin,source`.
pub fn benchmark_csv(results: &[LocalResult], reference: &[ReferenceRow]) -> String {
    let mut out = String::from("method,miou,iou_axon,iou_myelin,source\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{}",
            r.method.replace(',', ";"),
            r.miou,
            r.iou_axon.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            r.iou_myelin.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            LOCAL_SOURCE
        );
    }
    for r in reference {
        let _ = writeln!(out, "{},{:.3},-,-,{}", r.method, r.miou, REFERENCE_SOURCE);
    }
    out
}
