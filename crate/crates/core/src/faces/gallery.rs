use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::detect::{biggest_face, BrightBlobDetector, FaceDetector};
use super::embed::{cosine, Embedder, ReferenceEmbedder, EMBEDDING_DIM};
use super::{FaceError, Image};

pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceGalleryEntry {
    pub entry_id: String,
    pub label: String,
    pub embedding: Embedding,
    pub enrolled_at: f64,
}

/// Gallery entry as listed over HTTP (no embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryListing {
    pub entry_id: String,
    pub label: String,
    pub enrolled_at: f64,
}

impl From<&FaceGalleryEntry> for GalleryListing {
    fn from(e: &FaceGalleryEntry) -> Self {
        GalleryListing {
            entry_id: e.entry_id.clone(),
            label: e.label.clone(),
            enrolled_at: e.enrolled_at,
        }
    }
}

/// Entries in enrollment order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gallery {
    entries: Vec<FaceGalleryEntry>,
    next_id: u64,
}

fn id_number(id: &str) -> Option<u64> {
    id.strip_prefix("face-")?.parse().ok()
}

impl Gallery {
    pub fn new() -> Self {
        Gallery {
            entries: Vec::new(),
            next_id: 1,
        }
    }

    pub fn from_entries(entries: Vec<FaceGalleryEntry>) -> Result<Self, FaceError> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if e.label.is_empty() {
                return Err(FaceError::Storage(format!("{} has an empty label", e.entry_id)));
            }
            if !seen.insert(e.entry_id.as_str()) {
                return Err(FaceError::Storage(format!("duplicate entry id {}", e.entry_id)));
            }
            if e.embedding.len() != EMBEDDING_DIM || e.embedding.iter().any(|x| !x.is_finite()) {
                return Err(FaceError::Storage(format!("{} has a bad embedding", e.entry_id)));
            }
        }
        let next_id = entries
            .iter()
            .filter_map(|e| id_number(&e.entry_id))
            .max()
            .unwrap_or(0)
            + 1;
        Ok(Gallery { entries, next_id })
    }

    pub fn entries(&self) -> &[FaceGalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label_of(&self, entry_id: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.entry_id == entry_id)
            .map(|e| e.label.as_str())
    }

    pub fn add(&mut self, label: &str, embedding: Embedding, enrolled_at: f64) -> Result<String, FaceError> {
        if label.is_empty() {
            return Err(FaceError::InvalidInput("empty label".into()));
        }
        let entry_id = format!("face-{:06}", self.next_id);
        self.next_id += 1;
        self.entries.push(FaceGalleryEntry {
            entry_id: entry_id.clone(),
            label: label.to_string(),
            embedding,
            enrolled_at,
        });
        Ok(entry_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("gallery serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FaceError> {
        let entries: Vec<FaceGalleryEntry> =
            serde_json::from_str(s).map_err(|e| FaceError::Storage(e.to_string()))?;
        Self::from_entries(entries)
    }

    /// Writes to a sibling temp file and renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), FaceError> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json())
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| FaceError::Storage(format!("{}: {e}", path.display())))
    }

    /// A missing file is an empty gallery.
    pub fn load(path: &Path) -> Result<Self, FaceError> {
        match std::fs::read_to_string(path) {
            Ok(s) => Self::from_json(&s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Gallery::new()),
            Err(e) => Err(FaceError::Storage(format!("{}: {e}", path.display()))),
        }
    }

    pub fn score(&self, probe: &[f64]) -> Vec<ScoredEntry> {
        self.entries
            .iter()
            .map(|e| ScoredEntry {
                entry_id: e.entry_id.clone(),
                label: e.label.clone(),
                confidence: (1.0 + cosine(probe, &e.embedding)) / 2.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub entry_id: String,
    pub label: String,
    pub confidence: f64,
}

pub fn confidences(scores: &[ScoredEntry]) -> IndexMap<String, f64> {
    scores
        .iter()
        .map(|s| (s.entry_id.clone(), s.confidence))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "identity", rename_all = "snake_case")]
pub enum Identity {
    Known {
        label: String,
        entry_id: String,
        confidence: f64,
    },
    Unknown,
}

impl Identity {
    pub fn is_trusted(&self) -> bool {
        matches!(self, Identity::Known { .. })
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Identity::Known { label, .. } => Some(label),
            Identity::Unknown => None,
        }
    }
}

/// Best entry if its confidence reaches `threshold`. `scores` must be in
/// enrollment order; ties keep the earliest.
pub fn decide_identity(scores: &[ScoredEntry], threshold: f64) -> Identity {
    let mut best: Option<&ScoredEntry> = None;
    for s in scores {
        if best.is_none_or(|b| s.confidence > b.confidence) {
            best = Some(s);
        }
    }
    match best {
        Some(b) if b.confidence >= threshold => Identity::Known {
            label: b.label.clone(),
            entry_id: b.entry_id.clone(),
            confidence: b.confidence,
        },
        _ => Identity::Unknown,
    }
}

/// Anything that can enroll and query faces: the in-process recognizer or a
/// remote service.
pub trait FaceService: Send + Sync {
    fn enroll(&self, img: &Image, label: &str) -> Result<String, FaceError>;
    fn query(&self, img: &Image) -> Result<Vec<ScoredEntry>, FaceError>;
    fn listing(&self) -> Result<Vec<GalleryListing>, FaceError>;
}

/// Detector + embedder + a persisted gallery. Enrolls serialize on the write
/// lock; queries score against a read-locked snapshot.
#[derive(Clone)]
pub struct FaceRecognizer {
    gallery: Arc<RwLock<Gallery>>,
    path: Option<PathBuf>,
    detector: Arc<dyn FaceDetector>,
    embedder: Arc<dyn Embedder>,
}

impl FaceRecognizer {
    pub fn in_memory(gallery: Gallery) -> Self {
        FaceRecognizer {
            gallery: Arc::new(RwLock::new(gallery)),
            path: None,
            detector: Arc::new(BrightBlobDetector::default()),
            embedder: Arc::new(ReferenceEmbedder),
        }
    }

    pub fn open(path: &Path) -> Result<Self, FaceError> {
        let mut r = Self::in_memory(Gallery::load(path)?);
        r.path = Some(path.to_path_buf());
        Ok(r)
    }

    pub fn with_models(mut self, detector: Arc<dyn FaceDetector>, embedder: Arc<dyn Embedder>) -> Self {
        self.detector = detector;
        self.embedder = embedder;
        self
    }

    pub fn snapshot(&self) -> Gallery {
        self.gallery.read().unwrap().clone()
    }

    pub fn probe(&self, img: &Image) -> Result<Embedding, FaceError> {
        let face = biggest_face(&self.detector.detect(img))?;
        self.embedder.embed(img, face)
    }

    pub fn enroll_at(&self, img: &Image, label: &str, enrolled_at: f64) -> Result<String, FaceError> {
        if label.is_empty() {
            return Err(FaceError::InvalidInput("empty label".into()));
        }
        let emb = self.probe(img)?;
        let mut g = self.gallery.write().unwrap();
        let mut next = g.clone();
        let id = next.add(label, emb, enrolled_at)?;
        if let Some(p) = &self.path {
            next.save(p)?;
        }
        *g = next;
        Ok(id)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl FaceService for FaceRecognizer {
    fn enroll(&self, img: &Image, label: &str) -> Result<String, FaceError> {
        self.enroll_at(img, label, unix_now())
    }

    fn query(&self, img: &Image) -> Result<Vec<ScoredEntry>, FaceError> {
        let q = self.probe(img)?;
        Ok(self.gallery.read().unwrap().score(&q))
    }

    fn listing(&self) -> Result<Vec<GalleryListing>, FaceError> {
        Ok(self
            .gallery
            .read()
            .unwrap()
            .entries()
            .iter()
            .map(GalleryListing::from)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faces::BoundingBox;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A bright textured square so the embedding is non-degenerate.
    fn face_image(x: u32, y: u32, size: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::blank(64, 48);
        for yy in y..y + size {
            for xx in x..x + size {
                img.set(xx, yy, rng.random_range(128..=255));
            }
        }
        img
    }

    fn scored(pairs: &[(&str, f64)]) -> Vec<ScoredEntry> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (l, c))| ScoredEntry {
                entry_id: format!("face-{i:06}"),
                label: l.to_string(),
                confidence: *c,
            })
            .collect()
    }

    #[test]
    fn enroll_and_self_match() {
        let r = FaceRecognizer::in_memory(Gallery::new());
        let img = face_image(10, 10, 20, 1);
        assert!(r.query(&img).unwrap().is_empty());
        let id = r.enroll_at(&img, "ada", 1.0).unwrap();
        assert_eq!(id, "face-000001");
        assert_eq!(r.snapshot().len(), 1);
        let s = r.query(&img).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].confidence - 1.0).abs() < 1e-9);
    }

    #[test]
    fn faceless_and_empty_label() {
        let r = FaceRecognizer::in_memory(Gallery::new());
        let blank = Image::blank(64, 48);
        assert!(matches!(r.enroll_at(&blank, "ada", 0.0), Err(FaceError::NoFace)));
        assert!(matches!(r.query(&blank), Err(FaceError::NoFace)));
        let img = face_image(1, 1, 10, 2);
        assert!(matches!(r.enroll_at(&img, "", 0.0), Err(FaceError::InvalidInput(_))));
        assert!(r.snapshot().is_empty());
    }

    #[test]
    fn enrolls_biggest_face_only() {
        let mut img = face_image(2, 2, 6, 3);
        let big = face_image(30, 10, 16, 4);
        for y in 10..26 {
            for x in 30..46 {
                img.set(x, y, big.get(x, y));
            }
        }
        let r = FaceRecognizer::in_memory(Gallery::new());
        r.enroll_at(&img, "bo", 0.0).unwrap();
        let expected = crate::faces::embed(&img, BoundingBox::new(30, 10, 16, 16)).unwrap();
        assert_eq!(r.snapshot().entries()[0].embedding, expected);
    }

    #[test]
    fn persistence_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gallery.json");
        let r = FaceRecognizer::open(&path).unwrap();
        for (i, label) in ["ada", "bo", "cy"].iter().enumerate() {
            r.enroll_at(&face_image(5, 5, 12 + i as u32, i as u64), label, 0.1 * i as f64 + 1e-7)
                .unwrap();
        }
        let reloaded = Gallery::load(&path).unwrap();
        assert_eq!(reloaded.entries().len(), 3);
        for (a, b) in reloaded.entries().iter().zip(r.snapshot().entries()) {
            assert_eq!(a.entry_id, b.entry_id);
            assert_eq!(a.enrolled_at.to_bits(), b.enrolled_at.to_bits());
            for (x, y) in a.embedding.iter().zip(&b.embedding) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // ids keep counting after reload
        let r2 = FaceRecognizer::open(&path).unwrap();
        assert_eq!(r2.enroll_at(&face_image(1, 1, 9, 9), "dee", 0.0).unwrap(), "face-000004");
    }

    #[test]
    fn corrupt_gallery_is_rejected() {
        assert!(Gallery::from_json("[{\"entry_id\":\"a\"}]").is_err());
        let e = FaceGalleryEntry {
            entry_id: "face-000001".into(),
            label: "x".into(),
            embedding: vec![0.0; EMBEDDING_DIM],
            enrolled_at: 0.0,
        };
        assert!(Gallery::from_entries(vec![e.clone(), e]).is_err());
    }

    #[test]
    fn decide_identity_examples() {
        assert_eq!(decide_identity(&[], 0.8), Identity::Unknown);
        assert_eq!(
            decide_identity(&scored(&[("ada", 0.95), ("bo", 0.60)]), 0.8).label(),
            Some("ada")
        );
        assert_eq!(decide_identity(&scored(&[("ada", 0.79)]), 0.8), Identity::Unknown);
        assert_eq!(decide_identity(&scored(&[("ada", 0.8)]), 0.8).label(), Some("ada"));
        // tie keeps the earliest enrolled
        assert_eq!(
            decide_identity(&scored(&[("bo", 0.9), ("ada", 0.9)]), 0.5).label(),
            Some("bo")
        );
    }

    #[test]
    fn confidences_match_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let mut g = Gallery::new();
        let mut stored = Vec::new();
        for i in 0..5 {
            let e = unit(&mut rng);
            g.add(&format!("p{i}"), e.clone(), 0.0).unwrap();
            stored.push(e);
        }
        let q = unit(&mut rng);
        let s = g.score(&q);
        for (entry, e) in s.iter().zip(&stored) {
            let dot: f64 = q.iter().zip(e).map(|(a, b)| a * b).sum();
            assert!((entry.confidence - (1.0 + dot) / 2.0).abs() < 1e-9);
        }
        let m = confidences(&s);
        assert_eq!(m.keys().next().unwrap(), "face-000001");
    }

    proptest! {
        #[test]
        fn confidence_bounds_and_symmetry(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            let c1 = (1.0 + cosine(&a, &b)) / 2.0;
            let c2 = (1.0 + cosine(&b, &a)) / 2.0;
            prop_assert!((0.0..=1.0).contains(&c1));
            prop_assert_eq!(c1, c2);
        }

        #[test]
        fn decide_identity_is_monotone_invariant(
            cs in proptest::collection::vec(0.0f64..1.0, 0..6),
            theta in 0.0f64..1.0,
        ) {
            let pairs: Vec<(String, f64)> =
                cs.iter().enumerate().map(|(i, c)| (format!("l{i}"), *c)).collect();
            let refs: Vec<(&str, f64)> = pairs.iter().map(|(l, c)| (l.as_str(), *c)).collect();
            let base = decide_identity(&scored(&refs), theta);
            let f = |x: f64| x * x * x + 2.0 * x;
            let mapped: Vec<(&str, f64)> = refs.iter().map(|(l, c)| (*l, f(*c))).collect();
            let moved = decide_identity(&scored(&mapped), f(theta));
            prop_assert_eq!(base.label(), moved.label());
        }
    }
}
