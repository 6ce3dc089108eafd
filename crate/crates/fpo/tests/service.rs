use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use fpo::dataset::CameraPose;
use fpo::format;
use fpo::imageio;
use fpo::pipeline::{self, BuildConfig};
use fpo::service::{self, FrameReply, FrameRequest, Meta, Quality};
use fpo_core::scene::{inward_rig, standard_scene, RigConfig};
use fpo_core::{Encoding, EncodingConfig, FourierPlenOctree, Vec3};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

fn small_tree() -> FourierPlenOctree {
    let scene = standard_scene("orbit", 6).unwrap();
    let trees = pipeline::build_frames(&scene, &BuildConfig { depth: 4, ..BuildConfig::default() }).unwrap();
    pipeline::compress(&trees, &EncodingConfig::new(Encoding::LogComp, 5, 3), true).unwrap()
}

fn poses(n: usize, size: u32) -> Vec<CameraPose> {
    let rig = RigConfig { views: n, width: size, height: size, focal: 1.25 * size as f64, ..RigConfig::default() };
    inward_rig(&rig, Vec3::ZERO).unwrap().iter().map(CameraPose::from_camera).collect()
}

fn request(id: u32, pose: &CameraPose, t: u32, quality: Quality) -> String {
    serde_json::to_string(&FrameRequest {
        request_id: id,
        world_from_camera: pose.world_from_camera,
        focal: pose.focal,
        width: pose.width,
        height: pose.height,
        time_step: t,
        variant: Default::default(),
        quality,
    })
    .unwrap()
}

async fn start(fpo: FourierPlenOctree) -> SocketAddr {
    let (listener, addr) = service::bind(0).await.unwrap();
    tokio::spawn(service::serve(listener, Arc::new(fpo)));
    addr
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    text.split_once("\r\n\r\n").unwrap().1.to_string()
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/stream")).await.unwrap().0
}

async fn next_message(ws: &mut Ws) -> Message {
    loop {
        match tokio::time::timeout(Duration::from_secs(60), ws.next()).await.expect("reply timed out").unwrap().unwrap() {
            Message::Ping(_) | Message::Pong(_) => continue,
            m => return m,
        }
    }
}

async fn next_frame(ws: &mut Ws) -> FrameReply {
    match next_message(ws).await {
        Message::Binary(b) => FrameReply::decode(&b).unwrap(),
        other => panic!("expected a frame, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn meta_describes_the_tree() {
    let fpo = small_tree();
    let addr = start(fpo.clone()).await;
    let body = http_get(addr, "/meta").await;
    let meta: Meta = serde_json::from_str(&body).unwrap();
    assert_eq!(meta, service::meta_of(&fpo));
    let raw: serde_json::Value = serde_json::from_str(&body).unwrap();
    for key in ["T", "K_sigma", "K_z", "depth", "encoding_flags", "bounds"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }
    assert_eq!(raw["T"], 8);
    assert_eq!(raw["encoding_flags"], 0b111);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn frames_match_cli_renders() {
    let fpo = small_tree();
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.fpo");
    format::save_fpo(&tree, &fpo).unwrap();
    let addr = start(format::load_fpo(&tree).unwrap()).await;
    let mut ws = connect(addr).await;
    for (i, pose) in poses(10, 24).iter().enumerate() {
        let t = (i % 8) as u32;
        let quality = if i % 2 == 0 { Quality::Png } else { Quality::Raw };
        ws.send(Message::Text(request(i as u32, pose, t, quality).into())).await.unwrap();
        let reply = next_frame(&mut ws).await;
        assert_eq!(reply.request_id, i as u32);
        assert!(reply.render_micros > 0);

        let pose_path = dir.path().join(format!("pose{i}.json"));
        let out = dir.path().join(format!("cli{i}.png"));
        std::fs::write(&pose_path, serde_json::to_string(pose).unwrap()).unwrap();
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fpo"))
            .args(["fpo", "render", "--fpo", tree.to_str().unwrap(), "--pose", pose_path.to_str().unwrap(), "--time", &t.to_string(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        let cli = imageio::load_image(&out).unwrap();
        let served = match quality {
            Quality::Png => imageio::decode_png(&reply.payload).unwrap(),
            Quality::Raw => fpo_core::Image::from_rgb8(24, 24, &reply.payload).unwrap(),
        };
        assert_eq!(served.to_rgb8(), cli.to_rgb8(), "pose {i}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_requests_get_errors_and_keep_the_connection() {
    let addr = start(small_tree()).await;
    let mut ws = connect(addr).await;
    let pose = &poses(1, 16)[0];
    for bad in ["{not json".to_string(), r#"{"focal": 1}"#.to_string(), request(1, pose, 99, Quality::Raw), request(2, &CameraPose { width: 5000, height: 5000, ..pose.clone() }, 0, Quality::Raw)] {
        ws.send(Message::Text(bad.into())).await.unwrap();
        match next_message(&mut ws).await {
            Message::Text(t) => assert!(t.starts_with("error: "), "{t}"),
            other => panic!("expected an error message, got {other:?}"),
        }
    }
    ws.send(Message::Text(request(7, pose, 0, Quality::Raw).into())).await.unwrap();
    let reply = next_frame(&mut ws).await;
    assert_eq!(reply.request_id, 7);
    assert_eq!(reply.payload.len(), 16 * 16 * 3);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn latest_request_wins_under_flood() {
    let addr = start(small_tree()).await;
    let mut ws = connect(addr).await;
    let all = poses(100, 128);
    for (i, pose) in all.iter().enumerate() {
        ws.send(Message::Text(request(i as u32 + 1, pose, (i % 8) as u32, Quality::Raw).into())).await.unwrap();
    }
    let mut ids = Vec::new();
    loop {
        let reply = next_frame(&mut ws).await;
        ids.push(reply.request_id);
        if reply.request_id == 100 {
            break;
        }
    }
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    assert!(ids.len() < 100, "no request was coalesced: {} replies", ids.len());
    // Nothing may arrive after the final pose's frame.
    assert!(tokio::time::timeout(Duration::from_millis(500), ws.next()).await.is_err());
}
