use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::envelope::{Envelope, Kind, RpcError, METHOD_NOT_FOUND};

pub type Params = Map<String, Value>;
pub type HandlerResult = Result<Map<String, Value>, RpcError>;

/// A method implementation. Handlers are shared across connections, so they
/// must be thread-safe.
pub trait Handler: Send + Sync {
    fn handle(&self, params: &Params) -> HandlerResult;
}

impl<F> Handler for F
where
    F: Fn(&Params) -> HandlerResult + Send + Sync,
{
    fn handle(&self, params: &Params) -> HandlerResult {
        self(params)
    }
}

/// Method name -> handler.
#[derive(Clone, Default)]
pub struct Registry {
    handlers: BTreeMap<String, Arc<dyn Handler>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.handlers.keys()).finish()
    }
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn register(&mut self, method: impl Into<String>, handler: impl Handler + 'static) {
        self.handlers.insert(method.into(), Arc::new(handler));
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.handlers.keys().map(String::as_str)
    }

    pub fn get(&self, method: &str) -> Option<&Arc<dyn Handler>> {
        self.handlers.get(method)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("only requests can be routed, got a {0:?} envelope")]
    NotARequest(Kind),
    #[error("request id {id} does not exceed previous id {previous}")]
    IdOrder { id: u64, previous: u64 },
}

pub fn route_request(registry: &Registry, envelope: &Envelope) -> Result<Envelope, RouteError> {
    if envelope.kind != Kind::Request {
        return Err(RouteError::NotARequest(envelope.kind));
    }
    let method = envelope.method.as_deref().unwrap_or_default();
    let empty = Map::new();
    let params = envelope.params.as_ref().unwrap_or(&empty);
    let outcome = match registry.get(method) {
        Some(handler) => handler.handle(params),
        None => Err(RpcError::new(
            METHOD_NOT_FOUND,
            format!("method `{method}` not found"),
        )),
    };
    Ok(Envelope::response(envelope.id, outcome))
}

/// One logical connection: requests are served in order and their ids must
/// strictly increase. A request that breaks the ordering is refused without
/// a response, so response ids never repeat.
#[derive(Debug, Clone)]
pub struct Connection {
    registry: Registry,
    last_id: u64,
}

impl Connection {
    pub fn new(registry: Registry) -> Connection {
        Connection {
            registry,
            last_id: 0,
        }
    }

    pub fn serve(&mut self, request: &Envelope) -> Result<Envelope, RouteError> {
        if request.kind != Kind::Request {
            return Err(RouteError::NotARequest(request.kind));
        }
        if request.id <= self.last_id {
            return Err(RouteError::IdOrder {
                id: request.id,
                previous: self.last_id,
            });
        }
        self.last_id = request.id;
        route_request(&self.registry, request)
    }
}
