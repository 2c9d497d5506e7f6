//! A tower layer that runs a [`UnaryInterceptor`] around every unary call
//! of a tonic server, with responses decoded as [`WireMessage`]s.
//!
//! Methods missing from the schema registry and streaming methods are
//! rejected with `UNIMPLEMENTED` before the service sees them.

use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll};

use bytes::{BufMut, Bytes, BytesMut};
use fieldguard_core::{
    InterceptorConfig, Metadata, NoopInterceptor, PrivacyInterceptor, RpcCode, RpcError, UnaryHandler, UnaryInterceptor,
};
use http::header::{HeaderName, HeaderValue, CONTENT_LENGTH};
use http::{HeaderMap, Request, Response};
use http_body::{Body, Frame};
use http_body_util::BodyExt;
use tonic::body::BoxBody;
use tonic::{Code, Status};
use tower::{Layer, Service, ServiceExt};

use crate::schema::SchemaRegistry;
use crate::wire::WireMessage;

/// Response head and trailers captured from the inner service.
type Stash = Arc<Mutex<Option<(http::response::Parts, Option<HeaderMap>)>>>;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Wraps services in an [`InterceptorService`].
#[derive(Debug)]
pub struct InterceptorLayer<I> {
    registry: Arc<SchemaRegistry>,
    interceptor: Arc<I>,
}

impl<I> Clone for InterceptorLayer<I> {
    fn clone(&self) -> Self {
        InterceptorLayer { registry: self.registry.clone(), interceptor: self.interceptor.clone() }
    }
}

impl<I> InterceptorLayer<I> {
    pub fn new(registry: SchemaRegistry, interceptor: I) -> Self {
        InterceptorLayer { registry: Arc::new(registry), interceptor: Arc::new(interceptor) }
    }
}

impl InterceptorLayer<PrivacyInterceptor> {
    /// The enforcing layer.
    pub fn privacy(registry: SchemaRegistry, config: InterceptorConfig) -> Self {
        Self::new(registry, PrivacyInterceptor::new(config))
    }
}

impl InterceptorLayer<NoopInterceptor> {
    /// Decodes and re-encodes every response but changes nothing.
    pub fn noop(registry: SchemaRegistry) -> Self {
        Self::new(registry, NoopInterceptor)
    }
}

impl<S, I> Layer<S> for InterceptorLayer<I> {
    type Service = InterceptorService<S, I>;

    fn layer(&self, inner: S) -> Self::Service {
        InterceptorService { inner, registry: self.registry.clone(), interceptor: self.interceptor.clone() }
    }
}

#[derive(Debug)]
pub struct InterceptorService<S, I> {
    inner: S,
    registry: Arc<SchemaRegistry>,
    interceptor: Arc<I>,
}

impl<S: Clone, I> Clone for InterceptorService<S, I> {
    fn clone(&self) -> Self {
        InterceptorService {
            inner: self.inner.clone(),
            registry: self.registry.clone(),
            interceptor: self.interceptor.clone(),
        }
    }
}

impl<S, I, B> Service<Request<BoxBody>> for InterceptorService<S, I>
where
    S: Service<Request<BoxBody>, Response = Response<B>> + Clone + Send + 'static,
    S::Future: Send + 'static,
    S::Error: Into<BoxError> + Send + 'static,
    B: Body<Data = Bytes> + Send + 'static,
    B::Error: Into<BoxError>,
    I: UnaryInterceptor<WireMessage> + 'static,
{
    type Response = Response<BoxBody>;
    type Error = S::Error;
    type Future = Pin<Box<dyn std::future::Future<Output = Result<Self::Response, Self::Error>> + Send>>;

    fn poll_ready(&mut self, _cx: &mut Context<'_>) -> Poll<Result<(), Self::Error>> {
        Poll::Ready(Ok(()))
    }

    fn call(&mut self, request: Request<BoxBody>) -> Self::Future {
        let inner = self.inner.clone();
        let registry = self.registry.clone();
        let interceptor = self.interceptor.clone();
        Box::pin(async move {
            let output = match registry.method(request.uri().path()) {
                Some(method) if method.is_unary() => method.output.clone(),
                Some(_) => return Ok(status_response(RpcCode::Unimplemented, "streaming calls are not supported")),
                None => return Ok(status_response(RpcCode::Unimplemented, "method is not covered by the interceptor")),
            };
            let metadata = metadata_from_headers(request.headers());
            let original = metadata.clone();
            let stash: Stash = Arc::default();
            let slot = stash.clone();

            let next: UnaryHandler<'_, WireMessage> = Box::new(move |metadata| {
                Box::pin(async move {
                    let (mut parts, body) = request.into_parts();
                    apply_metadata(&mut parts.headers, &original, &metadata);
                    let response = inner
                        .oneshot(Request::from_parts(parts, body))
                        .await
                        .map_err(|e| RpcError::internal(e.into().to_string()))?;
                    let (parts, body) = response.into_parts();
                    check_status(&parts.headers)?;
                    let collected = body.collect().await.map_err(|e| RpcError::internal(e.into().to_string()))?;
                    let trailers = collected.trailers().cloned();
                    if let Some(trailers) = &trailers {
                        check_status(trailers)?;
                    }
                    let bytes = collected.to_bytes();
                    let payload = parse_frame(&bytes).map_err(RpcError::internal)?;
                    let message =
                        WireMessage::decode(output, payload).map_err(|e| RpcError::internal(e.to_string()))?;
                    *slot.lock().expect("stash lock") = Some((parts, trailers));
                    Ok(message)
                })
            });

            match interceptor.intercept(metadata, next).await {
                Ok(message) => {
                    let Some((mut parts, trailers)) = stash.lock().expect("stash lock").take() else {
                        return Ok(status_response(
                            RpcCode::Internal,
                            "interceptor produced a response without calling the service",
                        ));
                    };
                    parts.headers.remove(CONTENT_LENGTH);
                    let body = OnceBody { data: Some(encode_frame(&message.encode())), trailers };
                    Ok(Response::from_parts(parts, tonic::body::boxed(body)))
                }
                Err(err) => Ok(status_response(err.code, &err.message)),
            }
        })
    }
}

fn status_response(code: RpcCode, message: &str) -> Response<BoxBody> {
    Status::new(Code::from_i32(code.as_i32()), message).into_http()
}

fn check_status(headers: &HeaderMap) -> Result<(), RpcError> {
    match Status::from_header_map(headers) {
        Some(status) if status.code() != Code::Ok => {
            Err(RpcError::new(RpcCode::from_i32(status.code() as i32), status.message().to_owned()))
        }
        _ => Ok(()),
    }
}

/// Request headers as interceptor metadata. Pseudo-headers never appear in
/// an `http::HeaderMap`.
pub fn metadata_from_headers(headers: &HeaderMap) -> Metadata {
    headers.iter().map(|(k, v)| (k.as_str(), v.as_bytes())).collect()
}

/// Writes the interceptor's metadata changes back into the headers.
fn apply_metadata(headers: &mut HeaderMap, before: &Metadata, after: &Metadata) {
    for (key, _) in before.iter() {
        if after.get(key).is_none() {
            headers.remove(key);
        }
    }
    for (key, value) in after.iter() {
        if before.get(key) == Some(value) {
            continue;
        }
        if let (Ok(name), Ok(value)) = (HeaderName::from_bytes(key.as_bytes()), HeaderValue::from_bytes(value)) {
            headers.insert(name, value);
        }
    }
}

/// Extracts the single uncompressed message of a unary gRPC body.
pub fn parse_frame(body: &[u8]) -> Result<&[u8], &'static str> {
    let Some((header, rest)) = body.split_first_chunk::<5>() else {
        return Err("response body is shorter than a gRPC frame header");
    };
    if header[0] != 0 {
        return Err("compressed responses are not supported");
    }
    let len = u32::from_be_bytes([header[1], header[2], header[3], header[4]]) as usize;
    if rest.len() != len {
        return Err("response body is not exactly one gRPC message");
    }
    Ok(rest)
}

pub fn encode_frame(message: &[u8]) -> Bytes {
    let mut buf = BytesMut::with_capacity(5 + message.len());
    buf.put_u8(0);
    buf.put_u32(message.len() as u32);
    buf.put_slice(message);
    buf.freeze()
}

/// One data frame followed by optional trailers.
struct OnceBody {
    data: Option<Bytes>,
    trailers: Option<HeaderMap>,
}

impl Body for OnceBody {
    type Data = Bytes;
    type Error = Status;

    #[allow(clippy::result_large_err)]
    fn poll_frame(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Option<Result<Frame<Bytes>, Status>>> {
        let this = self.get_mut();
        if let Some(data) = this.data.take() {
            return Poll::Ready(Some(Ok(Frame::data(data))));
        }
        Poll::Ready(this.trailers.take().map(|t| Ok(Frame::trailers(t))))
    }

    fn is_end_stream(&self) -> bool {
        self.data.is_none() && self.trailers.is_none()
    }
}
