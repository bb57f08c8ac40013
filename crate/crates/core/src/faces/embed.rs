use super::{BoundingBox, FaceError, Image};

pub const EMBED_GRID: usize = 16;
pub const EMBEDDING_DIM: usize = EMBED_GRID * EMBED_GRID;
const MIN_STD: f64 = 1e-9;

pub trait Embedder: Send + Sync {
    fn embed(&self, img: &Image, face: BoundingBox) -> Result<Vec<f64>, FaceError>;
}

/// Area-average resample to 16x16, standardize, unit-normalize.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmbedder;

/// Overlap of source pixel `[p, p+1)` with the output cell `[k*n/m, (k+1)*n/m)`,
/// measured in source-pixel units. Computed in integer units scaled by `m`.
fn overlap(p: usize, k: usize, n: usize, m: usize) -> f64 {
    let (a0, a1) = (p * m, (p + 1) * m);
    let (b0, b1) = (k * n, (k + 1) * n);
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if hi > lo {
        (hi - lo) as f64 / m as f64
    } else {
        0.0
    }
}

fn resample(img: &Image, b: BoundingBox) -> Vec<f64> {
    let (w, h) = (b.w as usize, b.h as usize);
    let m = EMBED_GRID;
    let mut out = vec![0.0; m * m];
    for gy in 0..m {
        // source rows touching this output row
        let y0 = gy * h / m;
        let y1 = ((gy + 1) * h).div_ceil(m).min(h);
        for gx in 0..m {
            let x0 = gx * w / m;
            let x1 = ((gx + 1) * w).div_ceil(m).min(w);
            let mut acc = 0.0;
            let mut area = 0.0;
            for sy in y0..y1 {
                let wy = overlap(sy, gy, h, m);
                if wy == 0.0 {
                    continue;
                }
                for sx in x0..x1 {
                    let wx = overlap(sx, gx, w, m);
                    if wx == 0.0 {
                        continue;
                    }
                    let v = img.get(b.x + sx as u32, b.y + sy as u32) as f64;
                    acc += wx * wy * v;
                    area += wx * wy;
                }
            }
            out[gy * m + gx] = acc / area;
        }
    }
    out
}

/// Standardizes then scales to unit norm. Near-constant input gives zeros.
fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < MIN_STD {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x - mean) / std);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

impl Embedder for ReferenceEmbedder {
    fn embed(&self, img: &Image, face: BoundingBox) -> Result<Vec<f64>, FaceError> {
        if !face.fits(img) {
            return Err(FaceError::InvalidInput(format!(
                "box {face:?} outside {}x{} image",
                img.width, img.height
            )));
        }
        let mut v = resample(img, face);
        standardize(&mut v);
        Ok(v)
    }
}

pub fn embed(img: &Image, face: BoundingBox) -> Result<Vec<f64>, FaceError> {
    ReferenceEmbedder.embed(img, face)
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
