//! Bicubic resampling of channels-last grids (cubic convolution, `A = −0.75`,
//! half-pixel centres, clamped borders).

const A: f64 = -0.75;

fn cubic_weights(t: f64) -> [f64; 4] {
    let w0 = ((A * (t + 1.0) - 5.0 * A) * (t + 1.0) + 8.0 * A) * (t + 1.0) - 4.0 * A;
    let w1 = ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0;
    let u = 1.0 - t;
    let w2 = ((A + 2.0) * u - (A + 3.0)) * u * u + 1.0;
    let w3 = ((A * (u + 1.0) - 5.0 * A) * (u + 1.0) + 8.0 * A) * (u + 1.0) - 4.0 * A;
    [w0, w1, w2, w3]
}

/// For each output index: four clamped source indices and their weights.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let x0 = src.floor();
            let w = cubic_weights(src - x0);
            let idx = [-1i64, 0, 1, 2].map(|d| (x0 as i64 + d).clamp(0, n_in as i64 - 1) as usize);
            (idx, w)
        })
        .collect()
}

/// Resamples `data` laid out as `h × w × c` to `out_h × out_w × c`.
pub fn resample_bicubic(data: &[f64], h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(data.len(), h * w * c, "grid size");
    let tx = axis_taps(w, out_w);
    let mut rows = vec![0.0; h * out_w * c];
    for y in 0..h {
        for (ox, (idx, wt)) in tx.iter().enumerate() {
            let dst = &mut rows[(y * out_w + ox) * c..][..c];
            for k in 0..4 {
                let src = &data[(y * w + idx[k]) * c..][..c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt[k] * s;
                }
            }
        }
    }
    let ty = axis_taps(h, out_h);
    let mut out = vec![0.0; out_h * out_w * c];
    for (oy, (idx, wt)) in ty.iter().enumerate() {
        for x in 0..out_w {
            let dst = &mut out[(oy * out_w + x) * c..][..c];
            for k in 0..4 {
                let src = &rows[(idx[k] * out_w + x) * c..][..c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt[k] * s;
                }
            }
        }
    }
    out
}
