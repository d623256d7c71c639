//! All services wired together, either in-process or behind HTTP listeners
//! on ephemeral ports.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use polaris_core::access::{
    AuthorizationServer, AuthzClient, ContentStore, FileContentStore, IssuerClient, IssuerService,
    MemoryContentStore, PolicyDecisionPoint, ResourceClient, ResourceServer, ResourceServerConfig,
};
use polaris_core::clock::{system_clock, SharedClock};
use polaris_core::credential::{Issuer, IssuerConfig};
use polaris_core::crypto::{generate_keypair, KeyPair};
use polaris_core::did::Did;
use polaris_core::session::{SecureClient, SecureService, SessionStore};
use polaris_core::vdr::{DidRegistrar, DidResolver, Registry, VdrClient};
use polaris_core::wire::{Handler, HttpServer, HttpTransport, LocalTransport, Transport, WireTap};

pub type DynTransport = Arc<dyn Transport>;
pub type SecureResourceClient = ResourceClient<SecureClient<DynTransport>>;

#[derive(Clone, Debug, Default)]
pub struct DeploymentOptions {
    /// Serve every role over HTTP on 127.0.0.1 instead of calling handlers
    /// directly.
    pub http: bool,
    /// Keep resource content in files under this directory.
    pub content_dir: Option<PathBuf>,
    /// Capture the raw requester-to-RS and RS-to-AS traffic.
    pub tap: bool,
    pub rs_config: ResourceServerConfig,
}

pub struct Deployment {
    pub registry: Arc<Registry>,
    pub clock: SharedClock,
    pub authz: Arc<AuthorizationServer>,
    pub rs_did: Did,
    rs_key: Arc<KeyPair>,
    rs_transport: DynTransport,
    vdr_transport: DynTransport,
    pub rs_tap: Option<Arc<WireTap>>,
    pub as_tap: Option<Arc<WireTap>>,
    http: bool,
    servers: Vec<HttpServer>,
}

fn expose(handler: Arc<dyn Handler>, http: bool, tap: Option<Arc<WireTap>>, servers: &mut Vec<HttpServer>) -> Result<DynTransport> {
    if http {
        let server = HttpServer::bind("127.0.0.1:0", handler, 4).context("binding service listener")?;
        let url = server.url();
        servers.push(server);
        Ok(Arc::new(HttpTransport::new(url)))
    } else {
        Ok(Arc::new(match tap {
            Some(tap) => LocalTransport::with_tap(handler, tap),
            None => LocalTransport::new(handler),
        }))
    }
}

impl Deployment {
    pub fn start(opts: &DeploymentOptions) -> Result<Self> {
        let registry = Arc::new(Registry::in_memory());
        let clock = system_clock();
        let mut servers = Vec::new();
        let vdr_transport = expose(registry.clone(), opts.http, None, &mut servers)?;

        let service_identity = |name: &str| -> Result<(Did, Arc<KeyPair>)> {
            let key = generate_keypair();
            let did = registry.register_did(&key.public_key(), name)?;
            Ok((did, Arc::new(key)))
        };
        let (as_did, as_key) = service_identity("authorization-server")?;
        let (rs_did, rs_key) = service_identity("resource-server")?;

        let authz = Arc::new(AuthorizationServer::new(registry.clone()));
        let as_store = SessionStore::new(as_did, as_key.clone(), clock.clone()).with_resolver(registry.clone());
        let as_tap = opts.tap.then(WireTap::new);
        let as_transport = expose(
            Arc::new(SecureService::new(Arc::new(as_store), authz.clone())),
            opts.http,
            as_tap.clone(),
            &mut servers,
        )?;
        let pdp: Arc<dyn PolicyDecisionPoint> = Arc::new(AuthzClient::new(SecureClient::new(
            as_transport,
            Arc::new(SessionStore::new(rs_did, rs_key.clone(), clock.clone())),
            as_did,
            as_key.public_key(),
        )));

        let content: Arc<dyn ContentStore> = match &opts.content_dir {
            Some(dir) => Arc::new(FileContentStore::new(dir.clone())?),
            None => Arc::new(MemoryContentStore::new()),
        };
        let rs = Arc::new(ResourceServer::new(content, pdp, registry.clone(), clock.clone(), opts.rs_config.clone()));
        let rs_store = SessionStore::new(rs_did, rs_key.clone(), clock.clone()).with_resolver(registry.clone());
        let rs_tap = opts.tap.then(WireTap::new);
        let rs_transport =
            expose(Arc::new(SecureService::new(Arc::new(rs_store), rs)), opts.http, rs_tap.clone(), &mut servers)?;

        Ok(Deployment {
            registry,
            clock,
            authz,
            rs_did,
            rs_key,
            rs_transport,
            vdr_transport,
            rs_tap,
            as_tap,
            http: opts.http,
            servers,
        })
    }

    /// Registry client as every participant sees it.
    pub fn vdr(&self) -> VdrClient<DynTransport> {
        VdrClient::new(self.vdr_transport.clone())
    }

    pub fn resolver(&self) -> Arc<dyn DidResolver> {
        Arc::new(self.vdr())
    }

    /// Session-protected Resource Server client acting as `did`.
    pub fn resource_client(&self, did: Did, key: Arc<KeyPair>) -> SecureResourceClient {
        ResourceClient::new(SecureClient::new(
            self.rs_transport.clone(),
            Arc::new(SessionStore::new(did, key, self.clock.clone())),
            self.rs_did,
            self.rs_key.public_key(),
        ))
    }

    /// Starts an issuer service for an already registered issuer identity.
    pub fn spawn_issuer(&mut self, did: Did, key: KeyPair) -> Result<(Arc<IssuerService>, IssuerClient<DynTransport>)> {
        let issuer = Issuer::new(did, key, self.resolver(), self.clock.clone(), IssuerConfig::default());
        let service = Arc::new(IssuerService::new(Arc::new(issuer)));
        let transport = expose(service.clone(), self.http, None, &mut self.servers)?;
        Ok((service, IssuerClient::new(transport)))
    }

    pub fn urls(&self) -> Vec<String> {
        self.servers.iter().map(|s| s.url()).collect()
    }
}
