//! Food-delivery tracking demo.
//!
//! A `trackingservice` answers order-tracking calls with the customer and
//! order details a frontend would display. The three RPCs return the same
//! kind of record with 13, 26 or 52 top-level fields. The server can be
//! started with one of three [`Wiring`]s that differ only in the
//! interceptor placed in front of the service.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use fieldguard_core::{attach_token, InterceptorConfig, Metadata, VerifyKey, DEFAULT_METADATA_KEY};
use fieldguard_grpc::SchemaRegistry;
use serde_json::Value;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use tokio_stream::wrappers::TcpListenerStream;
use tokio_stream::{Stream, StreamExt};
use tonic::metadata::{AsciiMetadataKey, AsciiMetadataValue};
use tonic::transport::{Channel, Endpoint};
use tonic::{Request, Response, Status};

pub mod wiring;

pub mod pb {
    tonic::include_proto!("tracking.v1");

    /// Compiled descriptors of `tracking.proto`.
    pub const FILE_DESCRIPTOR_SET: &[u8] = include_bytes!(concat!(env!("OUT_DIR"), "/tracking_descriptor.bin"));
}

use pb::tracking_service_client::TrackingServiceClient;
use pb::tracking_service_server::TrackingService;
use pb::{Tracking13, Tracking26, Tracking52, TrackingRequest};

pub const SERVICE_NAME: &str = "trackingservice";

/// The checked-in policy covering the `delivery`, `marketing` and
/// `research` purposes.
pub const POLICY_JSON: &str = include_str!("../../../assets/policy.json");

const FIXTURE_13: &str = include_str!("../../../assets/fixtures/tracking13.json");
const FIXTURE_26: &str = include_str!("../../../assets/fixtures/tracking26.json");
const FIXTURE_52: &str = include_str!("../../../assets/fixtures/tracking52.json");

/// Response size of a tracking call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    F13,
    F26,
    F52,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::F13, Variant::F26, Variant::F52];

    pub fn field_count(self) -> usize {
        match self {
            Variant::F13 => 13,
            Variant::F26 => 26,
            Variant::F52 => 52,
        }
    }

    pub fn from_field_count(n: usize) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.field_count() == n)
    }

    /// The unminimized record the server returns, as JSON in field order.
    pub fn fixture_json(self) -> &'static str {
        match self {
            Variant::F13 => FIXTURE_13,
            Variant::F26 => FIXTURE_26,
            Variant::F52 => FIXTURE_52,
        }
    }

    pub fn method_path(self) -> &'static str {
        match self {
            Variant::F13 => "/tracking.v1.TrackingService/Track13",
            Variant::F26 => "/tracking.v1.TrackingService/Track26",
            Variant::F52 => "/tracking.v1.TrackingService/Track52",
        }
    }

    /// Names of the response fields in declaration order.
    pub fn field_names(self) -> Vec<String> {
        let fixture: serde_json::Map<String, Value> = serde_json::from_str(self.fixture_json()).expect("valid fixture");
        fixture.keys().cloned().collect()
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.field_count())
    }
}

/// Schemas of the tracking messages, for the interceptor layer.
pub fn registry() -> SchemaRegistry {
    SchemaRegistry::from_descriptor_set_bytes(pb::FILE_DESCRIPTOR_SET).expect("embedded descriptor set is valid")
}

/// The tracking service: stateless, answers every call with the fixture
/// record of the requested size.
#[derive(Debug, Clone)]
pub struct Tracker {
    records: Arc<(Tracking13, Tracking26, Tracking52)>,
}

impl Default for Tracker {
    fn default() -> Self {
        let records = (
            serde_json::from_str(FIXTURE_13).expect("valid fixture"),
            serde_json::from_str(FIXTURE_26).expect("valid fixture"),
            serde_json::from_str(FIXTURE_52).expect("valid fixture"),
        );
        Tracker { records: Arc::new(records) }
    }
}

#[tonic::async_trait]
impl TrackingService for Tracker {
    async fn track13(&self, _request: Request<TrackingRequest>) -> Result<Response<Tracking13>, Status> {
        Ok(Response::new(self.records.0.clone()))
    }

    async fn track26(&self, _request: Request<TrackingRequest>) -> Result<Response<Tracking26>, Status> {
        Ok(Response::new(self.records.1.clone()))
    }

    async fn track52(&self, _request: Request<TrackingRequest>) -> Result<Response<Tracking52>, Status> {
        Ok(Response::new(self.records.2.clone()))
    }
}

/// How the server is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wiring {
    /// No interceptor.
    Baseline,
    /// An interceptor that forwards everything unchanged.
    NoOp,
    /// The privacy interceptor.
    Enforcing,
}

impl std::str::FromStr for Wiring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Wiring::Baseline),
            "noop" | "no-op" => Ok(Wiring::NoOp),
            "enforcing" => Ok(Wiring::Enforcing),
            _ => Err(format!("unknown wiring `{s}` (expected baseline, noop or enforcing)")),
        }
    }
}

/// Everything a server wiring needs.
#[derive(Debug, Clone)]
pub struct Settings {
    tracker: Tracker,
    interceptor: InterceptorConfig,
}

impl Settings {
    pub fn new(interceptor: InterceptorConfig) -> Self {
        Settings { tracker: Tracker::default(), interceptor }
    }

    /// Settings with the token verification key read from a PEM file.
    pub fn from_key_file(path: impl AsRef<Path>) -> Result<Self, fieldguard_core::TokenError> {
        let path = path.as_ref();
        let pem =
            std::fs::read(path).map_err(|e| fieldguard_core::TokenError::Key(format!("{}: {e}", path.display())))?;
        Ok(Self::new(InterceptorConfig::new(VerifyKey::from_pem_auto(&pem)?)))
    }

    pub fn tracker(&self) -> Tracker {
        self.tracker.clone()
    }

    pub fn interceptor_config(&self) -> InterceptorConfig {
        self.interceptor.clone()
    }
}

/// Accepted connections with Nagle's algorithm disabled, as a server's
/// own listener would configure them.
pub fn incoming(listener: TcpListener) -> impl Stream<Item = std::io::Result<TcpStream>> {
    TcpListenerStream::new(listener).map(|conn| {
        let conn = conn?;
        conn.set_nodelay(true)?;
        Ok(conn)
    })
}

/// Serves the tracking service on `listener` until the future is dropped.
pub async fn run_server(
    listener: TcpListener,
    wiring: Wiring,
    settings: Settings,
) -> Result<(), tonic::transport::Error> {
    match wiring {
        Wiring::Baseline => wiring::baseline::serve(listener, &settings).await,
        Wiring::NoOp => wiring::noop::serve(listener, &settings).await,
        Wiring::Enforcing => wiring::enforcing::serve(listener, &settings).await,
    }
}

/// A server running on a background task; stopped when dropped.
#[derive(Debug)]
pub struct RunningServer {
    addr: SocketAddr,
    task: JoinHandle<Result<(), tonic::transport::Error>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn target(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Starts a server on an ephemeral localhost port.
pub async fn spawn_server(wiring: Wiring, settings: Settings) -> std::io::Result<RunningServer> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(run_server(listener, wiring, settings));
    Ok(RunningServer { addr, task })
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] tonic::transport::Error),
    #[error("rpc failed: {0}")]
    Rpc(Box<Status>),
    #[error("invalid token or metadata key")]
    Metadata,
}

impl From<Status> for ClientError {
    fn from(status: Status) -> Self {
        ClientError::Rpc(Box::new(status))
    }
}

/// A decoded tracking response.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TrackingResponse {
    F13(Tracking13),
    F26(Tracking26),
    F52(Tracking52),
}

impl TrackingResponse {
    /// Field values as a JSON object in declaration order.
    pub fn to_json(&self) -> Value {
        match self {
            TrackingResponse::F13(m) => serde_json::to_value(m),
            TrackingResponse::F26(m) => serde_json::to_value(m),
            TrackingResponse::F52(m) => serde_json::to_value(m),
        }
        .expect("tracking messages serialize")
    }
}

/// The frontend side: a connection that sends a policy token with every call.
#[derive(Debug, Clone)]
pub struct TrackingClient {
    inner: TrackingServiceClient<Channel>,
    metadata: Metadata,
}

impl TrackingClient {
    pub async fn connect(target: &str, token: Option<&str>) -> Result<Self, ClientError> {
        Self::connect_with_key(target, token, DEFAULT_METADATA_KEY).await
    }

    pub async fn connect_with_key(target: &str, token: Option<&str>, metadata_key: &str) -> Result<Self, ClientError> {
        let channel =
            Endpoint::from_shared(target.to_owned())?.connect_timeout(Duration::from_secs(5)).connect().await?;
        let metadata = match token {
            Some(token) => attach_token(Metadata::new(), token, metadata_key),
            None => Metadata::new(),
        };
        Ok(TrackingClient { inner: TrackingServiceClient::new(channel), metadata })
    }

    fn request(&self, order_id: &str) -> Result<Request<TrackingRequest>, ClientError> {
        let mut request = Request::new(TrackingRequest { order_id: order_id.to_owned() });
        for (key, value) in self.metadata.iter() {
            let key = AsciiMetadataKey::from_bytes(key.as_bytes()).map_err(|_| ClientError::Metadata)?;
            let value = AsciiMetadataValue::try_from(value).map_err(|_| ClientError::Metadata)?;
            request.metadata_mut().insert(key, value);
        }
        Ok(request)
    }

    pub async fn track(&mut self, variant: Variant, order_id: &str) -> Result<TrackingResponse, ClientError> {
        let request = self.request(order_id)?;
        Ok(match variant {
            Variant::F13 => TrackingResponse::F13(self.inner.track13(request).await?.into_inner()),
            Variant::F26 => TrackingResponse::F26(self.inner.track26(request).await?.into_inner()),
            Variant::F52 => TrackingResponse::F52(self.inner.track52(request).await?.into_inner()),
        })
    }
}

/// Connects, issues one tracking call and returns the decoded response.
pub async fn run_client(target: &str, token: Option<&str>, variant: Variant) -> Result<TrackingResponse, ClientError> {
    TrackingClient::connect(target, token).await?.track(variant, "order-1").await
}
