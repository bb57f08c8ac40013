use super::{BoundingBox, FaceError, Image};

pub trait FaceDetector: Send + Sync {
    fn detect(&self, img: &Image) -> Vec<BoundingBox>;
}

/// Reference detector: bright 4-connected blobs of at least `min_area` pixels.
#[derive(Debug, Clone, Copy)]
pub struct BrightBlobDetector {
    pub threshold: u8,
    pub min_area: usize,
}

impl Default for BrightBlobDetector {
    fn default() -> Self {
        BrightBlobDetector {
            threshold: 128,
            min_area: 9,
        }
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

impl FaceDetector for BrightBlobDetector {
    /// Two-pass union-find labeling.
    fn detect(&self, img: &Image) -> Vec<BoundingBox> {
        let (w, h) = (img.width as usize, img.height as usize);
        let lit = |i: usize| img.pixels[i] >= self.threshold;
        let mut parent: Vec<u32> = (0..(w * h) as u32).collect();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !lit(i) {
                    continue;
                }
                if x > 0 && lit(i - 1) {
                    let (a, b) = (find(&mut parent, i as u32), find(&mut parent, (i - 1) as u32));
                    parent[a.max(b) as usize] = a.min(b);
                }
                if y > 0 && lit(i - w) {
                    let (a, b) = (find(&mut parent, i as u32), find(&mut parent, (i - w) as u32));
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        // root -> (min_x, min_y, max_x, max_y, count)
        let mut stats: std::collections::HashMap<u32, (usize, usize, usize, usize, usize)> =
            std::collections::HashMap::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !lit(i) {
                    continue;
                }
                let r = find(&mut parent, i as u32);
                let e = stats.entry(r).or_insert((x, y, x, y, 0));
                e.0 = e.0.min(x);
                e.1 = e.1.min(y);
                e.2 = e.2.max(x);
                e.3 = e.3.max(y);
                e.4 += 1;
            }
        }
        let mut boxes: Vec<BoundingBox> = stats
            .into_values()
            .filter(|s| s.4 >= self.min_area)
            .map(|(x0, y0, x1, y1, _)| {
                BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32)
            })
            .collect();
        boxes.sort_by_key(|b| (b.y, b.x, b.w, b.h));
        boxes
    }
}

pub fn detect_faces(img: &Image) -> Vec<BoundingBox> {
    BrightBlobDetector::default().detect(img)
}

/// Largest box by area; ties go to the smallest `(y, x)`.
pub fn biggest_face(boxes: &[BoundingBox]) -> Result<BoundingBox, FaceError> {
    boxes
        .iter()
        .copied()
        .min_by(|a, b| {
            b.area()
                .cmp(&a.area())
                .then(a.y.cmp(&b.y))
                .then(a.x.cmp(&b.x))
        })
        .ok_or(FaceError::NoFace)
}
