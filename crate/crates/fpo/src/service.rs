//! HTTP/WebSocket render service.
//!
//! * `GET /meta` describes the loaded tree.
//! * `WS /stream` takes [`FrameRequest`] JSON text messages and answers each
//!   rendered request with a binary message: `request_id`, `render_micros`
//!   and `color_evals` as little-endian `u32`, then the PNG or raw RGB
//!   payload. While a frame renders, newer requests replace older queued
//!   ones, so the most recent request is always answered. Errors come back as
//!   text messages and leave the connection open.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use fpo_core::{FourierPlenOctree, RenderParams};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::dataset::camera_from;
use crate::format::flags_of;
use crate::imageio;
use crate::parallel::{render_variant, Variant};

pub const MAX_PIXELS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    #[default]
    Png,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRequest {
    #[serde(default)]
    pub request_id: u32,
    pub world_from_camera: [f64; 16],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub time_step: u32,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub quality: Quality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaBounds {
    pub half_extent: f64,
    pub centers: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "K_sigma")]
    pub k_sigma: usize,
    #[serde(rename = "K_z")]
    pub k_z: usize,
    pub depth: u32,
    pub encoding_flags: u32,
    pub sh_count: usize,
    pub bounds: MetaBounds,
}

pub fn meta_of(fpo: &FourierPlenOctree) -> Meta {
    Meta {
        frames: fpo.frames(),
        k_sigma: fpo.config().k_sigma,
        k_z: fpo.config().k_z,
        depth: fpo.structure().max_depth(),
        encoding_flags: flags_of(fpo),
        sh_count: fpo.sh_count(),
        bounds: MetaBounds { half_extent: fpo.half_extent(), centers: fpo.centers().iter().map(|c| c.to_array()).collect() },
    }
}

/// A rendered reply, header included.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameReply {
    pub request_id: u32,
    pub render_micros: u32,
    pub color_evals: u32,
    pub payload: Vec<u8>,
}

impl FrameReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.payload.len());
        out.extend_from_slice(&self.request_id.to_le_bytes());
        out.extend_from_slice(&self.render_micros.to_le_bytes());
        out.extend_from_slice(&self.color_evals.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            bail!("frame message shorter than its header");
        }
        let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        Ok(FrameReply { request_id: u(0), render_micros: u(4), color_evals: u(8), payload: bytes[12..].to_vec() })
    }
}

pub fn validate_request(fpo: &FourierPlenOctree, req: &FrameRequest) -> Result<()> {
    if req.width == 0 || req.height == 0 || req.width as u64 * req.height as u64 > MAX_PIXELS {
        bail!("image size {}x{} outside 1..={MAX_PIXELS} pixels", req.width, req.height);
    }
    if req.time_step as usize >= fpo.frames() {
        bail!("time_step {} out of range (T = {})", req.time_step, fpo.frames());
    }
    if !(req.focal > 0.0 && req.focal.is_finite()) {
        bail!("focal length must be positive");
    }
    Ok(())
}

/// Renders a request exactly as `fpo render` would.
pub fn render_request(fpo: &FourierPlenOctree, req: &FrameRequest) -> Result<FrameReply> {
    validate_request(fpo, req)?;
    let cam = camera_from(&req.world_from_camera, req.focal, req.width, req.height)?;
    let start = Instant::now();
    let (img, stats) = render_variant(fpo, req.variant, &cam, req.time_step as usize, &RenderParams::default());
    let micros = start.elapsed().as_micros().clamp(1, u32::MAX as u128) as u32;
    let payload = match req.quality {
        Quality::Png => imageio::encode_png(&img)?,
        Quality::Raw => img.to_rgb8(),
    };
    Ok(FrameReply {
        request_id: req.request_id,
        render_micros: micros,
        color_evals: stats.color_evals.min(u32::MAX as u64) as u32,
        payload,
    })
}

pub fn router(fpo: Arc<FourierPlenOctree>) -> Router {
    Router::new().route("/meta", get(meta)).route("/stream", get(stream)).with_state(fpo)
}

async fn meta(State(fpo): State<Arc<FourierPlenOctree>>) -> Json<Meta> {
    Json(meta_of(&fpo))
}

async fn stream(ws: WebSocketUpgrade, State(fpo): State<Arc<FourierPlenOctree>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, fpo))
}

type Render = JoinHandle<Result<FrameReply>>;

async fn finished(h: &mut Option<Render>) -> Result<FrameReply> {
    match h {
        Some(h) => match h.await {
            Ok(r) => r,
            Err(e) => Err(anyhow::anyhow!("render task failed: {e}")),
        },
        None => std::future::pending().await,
    }
}

async fn connection(mut socket: WebSocket, fpo: Arc<FourierPlenOctree>) {
    let mut queued: Option<FrameRequest> = None;
    let mut running: Option<Render> = None;
    loop {
        if running.is_none() {
            if let Some(req) = queued.take() {
                let fpo = fpo.clone();
                running = Some(tokio::task::spawn_blocking(move || render_request(&fpo, &req)));
            }
        }
        tokio::select! {
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if socket.send(Message::Text("error: expected a JSON text message".into())).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let parsed = serde_json::from_str::<FrameRequest>(text.as_str())
                    .map_err(|e| anyhow::anyhow!("malformed request: {e}"))
                    .and_then(|req| validate_request(&fpo, &req).map(|_| req));
                match parsed {
                    Ok(req) => queued = Some(req),
                    Err(e) => {
                        if socket.send(Message::Text(format!("error: {e}").into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
            result = finished(&mut running) => {
                running = None;
                let msg = match result {
                    Ok(reply) => Message::Binary(reply.encode().into()),
                    Err(e) => Message::Text(format!("error: {e}").into()),
                };
                if socket.send(msg).await.is_err() {
                    break;
                }
            }
        }
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, fpo: Arc<FourierPlenOctree>) -> Result<()> {
    axum::serve(listener, router(fpo)).await?;
    Ok(())
}

pub async fn bind(port: u16) -> Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}
