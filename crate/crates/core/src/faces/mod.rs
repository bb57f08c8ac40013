//! Face gallery service: detect faces, keep the biggest, embed it, and either
//! enroll it under a label or score it against every enrolled entry.

mod client;
mod detect;
mod embed;
mod gallery;
mod service;

use serde::{Deserialize, Serialize};

pub use client::FaceClient;
pub use detect::{biggest_face, detect_faces, BrightBlobDetector, FaceDetector};
pub use embed::{cosine, embed, Embedder, ReferenceEmbedder, EMBEDDING_DIM, EMBED_GRID};
pub use gallery::{
    confidences, decide_identity, Embedding, FaceGalleryEntry, FaceRecognizer, FaceService,
    Gallery, GalleryListing, Identity, ScoredEntry,
};
pub use service::{router, serve_faces, FacesServer};

use crate::pgm::{self, PgmError};

pub const CAPTURE_WIDTH: u32 = 640;
pub const CAPTURE_HEIGHT: u32 = 480;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum FaceError {
    #[error("no face visible")]
    NoFace,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gallery storage: {0}")]
    Storage(String),
    #[error("face service transport: {0}")]
    Transport(String),
}

impl From<PgmError> for FaceError {
    fn from(e: PgmError) -> Self {
        FaceError::InvalidInput(e.to_string())
    }
}

/// 8-bit grayscale, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FaceError> {
        if pixels.len() != width as usize * height as usize {
            return Err(FaceError::InvalidInput(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn blank(width: u32, height: u32) -> Self {
        Image {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[(y * self.width + x) as usize] = v;
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, FaceError> {
        let (w, h, px) = pgm::decode_u8(bytes)?;
        Image::new(w, h, px)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        pgm::encode_u8(self.width, self.height, &self.pixels).expect("consistent image")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, img: &Image) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x as u64 + self.w as u64 <= img.width as u64
            && self.y as u64 + self.h as u64 <= img.height as u64
    }
}
