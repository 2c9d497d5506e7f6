use fieldguard_core::{check_metadata_key, DEFAULT_METADATA_KEY};
use thiserror::Error;
use tonic::metadata::{AsciiMetadataKey, AsciiMetadataValue};
use tonic::service::Interceptor;
use tonic::{Request, Status};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error(transparent)]
    Key(#[from] fieldguard_core::InvalidMetadataKey),
    #[error("token is not a valid metadata value")]
    Token,
}

/// Client interceptor that sends a policy token with every call.
///
/// ```no_run
/// # use fieldguard_grpc::TokenInjector;
/// # async fn demo(channel: tonic::transport::Channel, token: &str) {
/// let injector = TokenInjector::new(token).unwrap();
/// let svc = tower::ServiceBuilder::new().layer(tonic::service::interceptor(injector)).service(channel);
/// # }
/// ```
#[derive(Debug, Clone)]
pub struct TokenInjector {
    key: AsciiMetadataKey,
    value: AsciiMetadataValue,
}

impl TokenInjector {
    pub fn new(token: &str) -> Result<Self, InjectError> {
        Self::with_metadata_key(token, DEFAULT_METADATA_KEY)
    }

    pub fn with_metadata_key(token: &str, key: &str) -> Result<Self, InjectError> {
        check_metadata_key(key)?;
        let key = AsciiMetadataKey::from_bytes(key.as_bytes())
            .map_err(|_| fieldguard_core::InvalidMetadataKey(key.to_owned()))?;
        let value = token.parse().map_err(|_| InjectError::Token)?;
        Ok(TokenInjector { key, value })
    }
}

impl Interceptor for TokenInjector {
    fn call(&mut self, mut request: Request<()>) -> Result<Request<()>, Status> {
        request.metadata_mut().insert(self.key.clone(), self.value.clone());
        Ok(request)
    }
}
