//! Long-running service commands. Each prints its URL once bound and then
//! serves until killed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use polaris_core::access::{
    AuthorizationServer, AuthzClient, ContentStore, FileContentStore, MemoryContentStore, PolicyDecisionPoint,
    ResourceServer, ResourceServerConfig,
};
use polaris_core::clock::system_clock;
use polaris_core::did::Did;
use polaris_core::session::{SecureClient, SecureService, SessionStore};
use polaris_core::vdr::{DidResolver, DidStore, JournalStore, MemoryStore, Registry, VdrClient};
use polaris_core::wire::{Handler, HttpServer, HttpTransport};

use crate::endpoint;
use crate::identity::Identity;

fn listen(addr: &str, handler: Arc<dyn Handler>, workers: usize, what: &str) -> Result<i32> {
    let server = HttpServer::bind(addr, handler, workers).with_context(|| format!("binding {addr}"))?;
    println!("{what} listening on {}", server.url());
    std::io::stdout().flush()?;
    server.join();
    Ok(0)
}

pub fn vdr(addr: &str, store: &str, workers: usize) -> Result<i32> {
    let backend: Arc<dyn DidStore> = match store {
        "memory" => Arc::new(MemoryStore::new()),
        path => Arc::new(JournalStore::open(path, true).with_context(|| format!("opening journal {path}"))?),
    };
    let registry = Registry::new(backend, system_clock());
    log::info!("registry holds {} documents", registry.len());
    listen(addr, Arc::new(registry), workers, "registry")
}

fn resolver(vdr: &str) -> Arc<dyn DidResolver> {
    Arc::new(VdrClient::new(HttpTransport::new(endpoint(vdr))))
}

pub fn authz(vdr: &str, id: &Path, addr: &str) -> Result<i32> {
    let me = Identity::load(id)?;
    let resolver = resolver(vdr);
    let store = SessionStore::new(me.did()?, Arc::new(me.key), system_clock()).with_resolver(resolver.clone());
    let service = SecureService::new(Arc::new(store), Arc::new(AuthorizationServer::new(resolver)));
    listen(addr, Arc::new(service), 8, "authorization server")
}

pub fn resource(
    vdr: &str,
    id: &Path,
    addr: &str,
    remote_authz: Option<(&str, Did)>,
    content_dir: Option<PathBuf>,
) -> Result<i32> {
    let me = Identity::load(id)?;
    let did = me.did()?;
    let key = Arc::new(me.key);
    let resolver = resolver(vdr);
    let clock = system_clock();

    let pdp: Arc<dyn PolicyDecisionPoint> = match remote_authz {
        Some((as_addr, as_did)) => {
            let as_key = resolver.resolve_key(&as_did).context("resolving the authorization server")?;
            let store = Arc::new(SessionStore::new(did, key.clone(), clock.clone()));
            Arc::new(AuthzClient::new(SecureClient::new(HttpTransport::new(endpoint(as_addr)), store, as_did, as_key)))
        }
        None => Arc::new(AuthorizationServer::new(resolver.clone())),
    };
    let content: Arc<dyn ContentStore> = match content_dir {
        Some(dir) => Arc::new(FileContentStore::new(dir)?),
        None => Arc::new(MemoryContentStore::new()),
    };
    let rs = ResourceServer::new(content, pdp, resolver.clone(), clock.clone(), ResourceServerConfig::default());
    let store = SessionStore::new(did, key, clock).with_resolver(resolver);
    listen(addr, Arc::new(SecureService::new(Arc::new(store), Arc::new(rs))), 8, "resource server")
}
