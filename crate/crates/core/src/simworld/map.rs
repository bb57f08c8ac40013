use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geom::{Cell, OccupancyGrid, Pose2D};
use crate::pgm;

fn default_occupied() -> f64 {
    0.65
}

fn default_free() -> f64 {
    0.196
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub image: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    #[serde(default, deserialize_with = "flag")]
    pub negate: bool,
    #[serde(default = "default_occupied")]
    pub occupied_thresh: f64,
    #[serde(default = "default_free")]
    pub free_thresh: f64,
}

/// Accepts 0/1 as well as true/false.
fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        B(bool),
        I(i64),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::B(b) => b,
        Flag::I(i) => i != 0,
    })
}

/// Occupancy probability of a pixel value.
pub fn pixel_occupancy(v: u8, negate: bool) -> f64 {
    if negate {
        v as f64 / 255.0
    } else {
        (255 - v) as f64 / 255.0
    }
}

/// Thresholded cell value: 1.0 occupied, 0.0 free, `None` unknown.
pub fn classify(p: f64, occupied_thresh: f64, free_thresh: f64) -> Option<f64> {
    if p > occupied_thresh {
        Some(1.0)
    } else if p < free_thresh {
        Some(0.0)
    } else {
        None
    }
}

/// Builds a grid from PGM bytes. Image row 0 is the top of the map.
pub fn grid_from_pgm(meta: &MapMeta, pgm_bytes: &[u8]) -> Result<OccupancyGrid, SimError> {
    let (w, h, px) = pgm::decode_u8(pgm_bytes).map_err(|e| SimError::Format {
        field: "image".into(),
        reason: e.to_string(),
    })?;
    let (w, h) = (w as usize, h as usize);
    let mut cells = vec![None; w * h];
    for row in 0..h {
        let img_row = h - 1 - row;
        for col in 0..w {
            let p = pixel_occupancy(px[img_row * w + col], meta.negate);
            cells[row * w + col] = classify(p, meta.occupied_thresh, meta.free_thresh);
        }
    }
    let origin = Pose2D::new(meta.origin[0], meta.origin[1], meta.origin[2]);
    OccupancyGrid::new(w, h, meta.resolution, origin, cells).map_err(|e| SimError::Format {
        field: "resolution".into(),
        reason: e.to_string(),
    })
}

pub fn parse_meta(yaml: &str) -> Result<MapMeta, SimError> {
    let meta: MapMeta = serde_yaml::from_str(yaml).map_err(|e| SimError::Format {
        field: "yaml".into(),
        reason: e.to_string(),
    })?;
    if !(meta.resolution > 0.0) {
        return Err(SimError::Format {
            field: "resolution".into(),
            reason: format!("must be > 0, got {}", meta.resolution),
        });
    }
    if !(meta.free_thresh <= meta.occupied_thresh) {
        return Err(SimError::Format {
            field: "free_thresh".into(),
            reason: "must not exceed occupied_thresh".into(),
        });
    }
    Ok(meta)
}

/// Loads a map-server style YAML plus the PGM it references (relative paths
/// resolve against the YAML's directory).
pub fn load_map(yaml_path: &Path) -> Result<OccupancyGrid, SimError> {
    let yaml = std::fs::read_to_string(yaml_path).map_err(|e| SimError::Io {
        path: yaml_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let meta = parse_meta(&yaml)?;
    let img_path = yaml_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&meta.image);
    let bytes = std::fs::read(&img_path).map_err(|e| SimError::Format {
        field: "image".into(),
        reason: format!("{}: {e}", img_path.display()),
    })?;
    grid_from_pgm(&meta, &bytes)
}

/// Pixel values: occupied 0, free 254, unknown 205.
pub fn grid_to_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let mut px = vec![0u8; w * h];
    for row in 0..h {
        for col in 0..w {
            let v = match grid.get(Cell::new(col, row)) {
                None => 205,
                Some(p) if p > 0.5 => 0,
                Some(_) => 254,
            };
            px[(h - 1 - row) * w + col] = v;
        }
    }
    pgm::encode_u8(w as u32, h as u32, &px).expect("consistent grid")
}

/// Writes `<stem>.yaml` and `<stem>.pgm` next to each other.
pub fn save_map(grid: &OccupancyGrid, yaml_path: &Path) -> Result<(), SimError> {
    let pgm_name = yaml_path
        .with_extension("pgm")
        .file_name()
        .expect("yaml path has a file name")
        .to_string_lossy()
        .into_owned();
    let o = grid.origin();
    let meta = MapMeta {
        image: pgm_name.clone(),
        resolution: grid.resolution(),
        origin: [o.x, o.y, o.theta],
        negate: false,
        occupied_thresh: default_occupied(),
        free_thresh: default_free(),
    };
    let io = |e: std::io::Error| SimError::Io {
        path: yaml_path.display().to_string(),
        reason: e.to_string(),
    };
    std::fs::write(yaml_path.with_extension("pgm"), grid_to_pgm(grid)).map_err(io)?;
    let yaml = format!(
        "image: {}\nresolution: {}\norigin: [{}, {}, {}]\nnegate: 0\noccupied_thresh: {}\nfree_thresh: {}\n",
        meta.image, meta.resolution, o.x, o.y, o.theta, meta.occupied_thresh, meta.free_thresh
    );
    std::fs::write(yaml_path, yaml).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> MapMeta {
        parse_meta("image: m.pgm\nresolution: 0.05\norigin: [-1.0, -2.0, 0.0]\nnegate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n").unwrap()
    }

    #[test]
    fn thresholds() {
        assert_eq!(classify(pixel_occupancy(255, false), 0.65, 0.196), Some(0.0));
        assert_eq!(classify(pixel_occupancy(0, false), 0.65, 0.196), Some(1.0));
        let p = pixel_occupancy(128, false);
        assert!((p - 127.0 / 255.0).abs() < 1e-12);
        assert_eq!(classify(p, 0.65, 0.196), None);
        assert_eq!(classify(pixel_occupancy(0, true), 0.65, 0.196), Some(0.0));
    }

    #[test]
    fn image_rows_flip() {
        // 2x2 image, only the top-left pixel black
        let bytes = pgm::encode_u8(2, 2, &[0, 255, 255, 255]).unwrap();
        let g = grid_from_pgm(&meta(), &bytes).unwrap();
        assert!(g.is_occupied(Cell::new(0, 1)));
        assert!(!g.is_occupied(Cell::new(0, 0)));
        assert_eq!(g.origin(), Pose2D::new(-1.0, -2.0, 0.0));
    }

    #[test]
    fn all_white_is_free() {
        let bytes = pgm::encode_u8(3, 3, &[255; 9]).unwrap();
        let g = grid_from_pgm(&meta(), &bytes).unwrap();
        assert!(g.cells().iter().all(|c| *c == Some(0.0)));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cells = vec![Some(0.0); 12];
        cells[1] = Some(1.0);
        cells[7] = None;
        let g = OccupancyGrid::new(4, 3, 0.1, Pose2D::new(0.5, -0.5, 0.0), cells).unwrap();
        let path = dir.path().join("room.yaml");
        save_map(&g, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), g);
    }

    #[test]
    fn errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let y = dir.path().join("m.yaml");
        std::fs::write(&y, "image: missing.pgm\nresolution: 0.05\norigin: [0,0,0]\n").unwrap();
        match load_map(&y) {
            Err(SimError::Format { field, .. }) => assert_eq!(field, "image"),
            other => panic!("{other:?}"),
        }
        std::fs::write(dir.path().join("bad.pgm"), b"P2 1 1 255 0").unwrap();
        std::fs::write(&y, "image: bad.pgm\nresolution: 0.05\norigin: [0,0,0]\n").unwrap();
        assert!(matches!(load_map(&y), Err(SimError::Format { field, .. }) if field == "image"));
        std::fs::write(&y, "image: bad.pgm\nresolution: -1\norigin: [0,0,0]\n").unwrap();
        assert!(matches!(load_map(&y), Err(SimError::Format { field, .. }) if field == "resolution"));
        std::fs::write(&y, "resolution: [").unwrap();
        assert!(matches!(load_map(&y), Err(SimError::Format { field, .. }) if field == "yaml"));
        assert!(matches!(load_map(&dir.path().join("nope.yaml")), Err(SimError::Io { .. })));
    }
}
