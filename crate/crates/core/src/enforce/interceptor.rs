use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;

use super::{authorize, compile_rule, minimize_message, InterceptorConfig, Metadata, ReflectMessage, RpcError};

pub type BoxFuture<'a, T> = Pin<Box<dyn Future<Output = T> + Send + 'a>>;

/// The rest of the call chain, ending in the service handler.
pub type UnaryHandler<'a, M> = Box<dyn FnOnce(Metadata) -> BoxFuture<'a, Result<M, RpcError>> + Send + 'a>;

/// Middleware around a unary call producing a response of type `M`.
///
/// An interceptor may inspect or change the request metadata, decide not to
/// call `next` at all, and inspect or rewrite the response.
pub trait UnaryInterceptor<M: Send>: Send + Sync {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a;
}

impl<M: Send, I: UnaryInterceptor<M> + ?Sized> UnaryInterceptor<M> for Arc<I> {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        (**self).intercept(metadata, next)
    }
}

impl<M: Send, I: UnaryInterceptor<M> + ?Sized> UnaryInterceptor<M> for Box<I> {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        (**self).intercept(metadata, next)
    }
}

/// Forwards the call untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopInterceptor;

impl<M: Send> UnaryInterceptor<M> for NoopInterceptor {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        next(metadata)
    }
}

/// The enforcement interceptor. The token is verified before the handler
/// runs; an invalid token fails the call without invoking it.
#[derive(Debug, Clone)]
pub struct PrivacyInterceptor {
    config: Arc<InterceptorConfig>,
}

impl PrivacyInterceptor {
    pub fn new(config: InterceptorConfig) -> Self {
        PrivacyInterceptor { config: Arc::new(config) }
    }

    pub fn config(&self) -> &InterceptorConfig {
        &self.config
    }
}

impl<M: ReflectMessage + Send> UnaryInterceptor<M> for PrivacyInterceptor {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        let rule = match authorize(&metadata, &self.config) {
            Ok(claims) => compile_rule(&claims),
            Err(err) => return Box::pin(std::future::ready(Err(err))),
        };
        Box::pin(async move {
            let mut response = next(metadata).await?;
            let mut rng = self.config.request_rng();
            minimize_message(&mut response, &rule, &mut rng)?;
            Ok(response)
        })
    }
}

/// `outer` wrapped around `inner`; built by [`chain`].
#[derive(Debug, Clone)]
pub struct Chain<I, O> {
    inner: I,
    outer: O,
}

/// Composes two interceptors: `outer` sees the call first and the response
/// last, `inner` sits between it and the handler.
pub fn chain<I, O>(inner: I, outer: O) -> Chain<I, O> {
    Chain { inner, outer }
}

impl<M, I, O> UnaryInterceptor<M> for Chain<I, O>
where
    M: Send,
    I: UnaryInterceptor<M>,
    O: UnaryInterceptor<M>,
{
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        let inner = &self.inner;
        self.outer.intercept(metadata, Box::new(move |metadata| inner.intercept(metadata, next)))
    }
}
