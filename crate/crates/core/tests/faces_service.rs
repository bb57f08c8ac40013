use std::sync::Arc;
use std::thread;

use greeter::faces::{
    serve_faces, FaceClient, FaceError, FaceRecognizer, FaceService, Gallery, Image,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn face_image(x: u32, y: u32, size: u32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::blank(160, 120);
    for yy in y..y + size {
        for xx in x..x + size {
            img.set(xx, yy, rng.random_range(128..=255));
        }
    }
    img
}

#[test]
fn enroll_query_gallery_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gallery.json");
    let server = serve_faces(FaceRecognizer::open(&path).unwrap(), "127.0.0.1:0").unwrap();
    let client = FaceClient::new(&server.url());

    let ada = face_image(20, 20, 40, 1);
    let bo = face_image(60, 30, 30, 2);
    assert!(client.query(&ada).unwrap().is_empty());
    let id_ada = client.enroll(&ada, "ada").unwrap();
    let id_bo = client.enroll(&bo, "bo").unwrap();
    assert_ne!(id_ada, id_bo);

    let scores = client.query(&ada).unwrap();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[0].label, "ada");
    assert!((scores[0].confidence - 1.0).abs() < 1e-9);
    assert!(scores[1].confidence < 0.8);

    let listing = client.listing().unwrap();
    assert_eq!(listing.len(), 2);
    assert_eq!(listing[1].label, "bo");

    // the server persisted both entries
    assert_eq!(Gallery::load(&path).unwrap().len(), 2);

    // HTTP confidences equal the in-process ones bit-for-bit
    let local = server.recognizer().query(&bo).unwrap();
    let remote = client.query(&bo).unwrap();
    assert_eq!(local, remote);
}

#[test]
fn error_statuses() {
    let server = serve_faces(FaceRecognizer::in_memory(Gallery::new()), "127.0.0.1:0").unwrap();
    let client = FaceClient::new(&server.addr().to_string());
    let blank = Image::blank(64, 48);
    assert!(matches!(client.enroll(&blank, "ada"), Err(FaceError::NoFace)));
    assert!(matches!(client.query(&blank), Err(FaceError::NoFace)));
    assert!(matches!(
        client.enroll(&face_image(1, 1, 10, 3), ""),
        Err(FaceError::InvalidInput(_))
    ));
    assert!(matches!(
        client.query_pgm(b"P2 1 1 255 0"),
        Err(FaceError::InvalidInput(_))
    ));

    let agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .new_agent();
    let resp = agent
        .post(&format!("{}/query", server.url()))
        .send(&blank.to_pgm()[..])
        .unwrap();
    assert_eq!(resp.status(), 422);
    let body: serde_json::Value =
        serde_json::from_str(&resp.into_body().read_to_string().unwrap()).unwrap();
    assert_eq!(body["error"], "no_face");
}

#[test]
fn unreachable_service_is_transport_error() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let client = FaceClient::new(&addr.to_string());
    assert!(matches!(
        client.query(&face_image(1, 1, 10, 1)),
        Err(FaceError::Transport(_))
    ));
}

/// Queries racing enrolls only ever see whole entries.
#[test]
fn concurrent_queries_see_consistent_gallery() {
    let server = serve_faces(FaceRecognizer::in_memory(Gallery::new()), "127.0.0.1:0").unwrap();
    let url = Arc::new(server.url());
    let probe = face_image(10, 10, 30, 99);
    FaceClient::new(&url).enroll(&probe, "first").unwrap();

    let writer = {
        let url = url.clone();
        thread::spawn(move || {
            let c = FaceClient::new(&url);
            for i in 0..10 {
                c.enroll(&face_image(5, 5, 20 + i, i as u64), &format!("p{i}"))
                    .unwrap();
            }
        })
    };
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let url = url.clone();
            let probe = probe.clone();
            thread::spawn(move || {
                let c = FaceClient::new(&url);
                let mut last = 0;
                for _ in 0..15 {
                    let m = c.query_pgm(&probe.to_pgm()).unwrap();
                    assert!(m.len() >= last);
                    assert!(m.values().all(|v| (0.0..=1.0).contains(v)));
                    assert!((m["face-000001"] - 1.0).abs() < 1e-9);
                    last = m.len();
                }
            })
        })
        .collect();
    writer.join().unwrap();
    for r in readers {
        r.join().unwrap();
    }
    assert_eq!(server.recognizer().snapshot().len(), 11);
}
