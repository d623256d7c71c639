//! Open-loop load generator.
//!
//! A dispatcher releases requests on a fixed schedule regardless of how
//! fast earlier ones complete; a worker pool executes them against
//! in-process services through their JSON interfaces. Latency is measured
//! from the scheduled send time, so queueing delay under overload counts.
//!
//! Registry operations replay prebuilt wire requests and only check the
//! status, the way a constant-throughput HTTP load tool would; client-side
//! parsing is not part of the measured service cost. The credential path
//! needs a fresh signed answer per request and runs the full client.

use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use crossbeam_channel::unbounded;
use polaris_core::access::{IssuerClient, IssuerService};
use polaris_core::clock::system_clock;
use polaris_core::credential::{answer_challenge, AttributeClaim, Issuer, IssuerConfig};
use polaris_core::codec::{b64_encode, canonical_json};
use polaris_core::crypto::{generate_keypair, KeyPair};
use polaris_core::did::Did;
use polaris_core::vdr::{DidRegistrar, DidResolver, RegisterRequest, Registry};
use polaris_core::wire::{Handler, LocalTransport, WireRequest};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadOp {
    /// Read path: DID resolution.
    Resolve,
    /// Write path: DID registration.
    Register,
    /// Challenge, signed answer and credential issuance for one holder.
    RequestVcPath,
}

impl LoadOp {
    pub fn name(self) -> &'static str {
        match self {
            LoadOp::Resolve => "resolve",
            LoadOp::Register => "register",
            LoadOp::RequestVcPath => "request_vc_path",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [LoadOp::Resolve, LoadOp::Register, LoadOp::RequestVcPath].into_iter().find(|o| o.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles of `samples` (milliseconds).
    pub fn of(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return Percentiles::default();
        }
        samples.sort_by(f64::total_cmp);
        let rank = |p: f64| samples[((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1];
        Percentiles { p50: rank(0.5), p90: rank(0.9), p99: rank(0.99), max: samples[samples.len() - 1] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoadReport {
    pub op: LoadOp,
    pub target_rate: f64,
    pub duration_secs: f64,
    pub achieved_throughput: f64,
    pub sent: u64,
    pub succeeded: u64,
    pub success_rate: f64,
    /// Latency of successful requests, in milliseconds.
    pub latency_ms: Percentiles,
    pub workers: usize,
    pub timeout_ms: u64,
}

#[derive(Clone, Debug)]
pub struct LoadConfig {
    pub workers: usize,
    /// Requests still queued this long after their slot are dropped as failures.
    pub timeout: Duration,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig { workers: 8, timeout: Duration::from_secs(1) }
    }
}

/// Services and pregenerated client material for one operation kind.
pub struct Target {
    op: LoadOp,
    registry: Arc<Registry>,
    requests: Vec<WireRequest>,
    issuer: Option<IssuerClient<LocalTransport>>,
    holders: Vec<(Did, KeyPair)>,
}

const POOL: usize = 256;

impl Target {
    pub fn new(op: LoadOp) -> Result<Self> {
        let registry = Arc::new(Registry::in_memory());
        let mut target =
            Target { op, registry: registry.clone(), requests: Vec::new(), issuer: None, holders: Vec::new() };
        match op {
            LoadOp::Resolve => {
                for i in 0..POOL {
                    let did = registry.register_did(&generate_keypair().public_key(), &format!("load-{i}"))?;
                    target.requests.push(WireRequest::get(format!("/did/resolve/{did}")));
                }
            }
            LoadOp::Register => {
                for i in 0..POOL {
                    let key = generate_keypair().public_key();
                    let body = RegisterRequest {
                        public_key: b64_encode(&key.to_bytes()),
                        algorithm: key.algorithm().to_string(),
                        uuid: format!("load-{i}"),
                    };
                    target.requests.push(WireRequest::post("/did/register", canonical_json(&body)?));
                }
            }
            LoadOp::RequestVcPath => {
                let issuer_key = generate_keypair();
                let issuer_did = registry.register_did(&issuer_key.public_key(), "load-issuer")?;
                let resolver: Arc<dyn DidResolver> = registry.clone();
                let issuer = Issuer::new(issuer_did, issuer_key, resolver, system_clock(), IssuerConfig::default());
                let service = Arc::new(IssuerService::new(Arc::new(issuer)));
                for i in 0..POOL / 4 {
                    let key = generate_keypair();
                    let did = registry.register_did(&key.public_key(), &format!("holder-{i}"))?;
                    service.enroll(
                        did,
                        vec![AttributeClaim::new("name", format!("holder {i}")), AttributeClaim::new("age", "30")],
                    );
                    target.holders.push((did, key));
                }
                target.issuer = Some(IssuerClient::new(LocalTransport::new(service)));
            }
        }
        Ok(target)
    }

    pub fn op(&self) -> LoadOp {
        self.op
    }

    /// Executes request number `i`; true on success.
    pub fn execute(&self, i: u64) -> bool {
        let pick = |n: usize| i as usize % n;
        match self.op {
            LoadOp::Resolve | LoadOp::Register => {
                self.registry.handle(&self.requests[pick(self.requests.len())]).is_success()
            }
            LoadOp::RequestVcPath => {
                let issuer = self.issuer.as_ref().expect("issuer target");
                let (did, key) = &self.holders[pick(self.holders.len())];
                issuer
                    .challenge(*did)
                    .and_then(|c| issuer.issue(answer_challenge(&c, key)))
                    .is_ok()
            }
        }
    }
}

pub fn bench_load(op: LoadOp, rate: f64, duration: Duration) -> Result<LoadReport> {
    run_load(&Target::new(op)?, rate, duration, &LoadConfig::default())
}

pub fn run_load(target: &Target, rate: f64, duration: Duration, cfg: &LoadConfig) -> Result<LoadReport> {
    ensure!(rate > 0.0 && rate.is_finite(), "rate must be positive");
    ensure!(!duration.is_zero(), "duration must be positive");
    ensure!(cfg.workers > 0, "need at least one worker");
    let total = (rate * duration.as_secs_f64()).round().max(1.0) as u64;
    let interval = Duration::from_secs_f64(1.0 / rate);
    let (tx, rx) = unbounded::<(u64, Instant)>();

    let start = Instant::now();
    let mut latencies: Vec<f64> = Vec::with_capacity(total as usize);
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..cfg.workers)
            .map(|_| {
                let rx = rx.clone();
                scope.spawn(move || {
                    let mut ok = Vec::new();
                    for (i, due) in rx {
                        if due.elapsed() > cfg.timeout {
                            continue;
                        }
                        let success = target.execute(i);
                        let latency = due.elapsed();
                        if success && latency <= cfg.timeout {
                            ok.push(latency.as_secs_f64() * 1e3);
                        }
                    }
                    ok
                })
            })
            .collect();

        for i in 0..total {
            let due = start + interval.mul_f64(i as f64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
            if tx.send((i, due)).is_err() {
                break;
            }
        }
        drop(tx);
        for w in workers {
            latencies.extend(w.join().expect("load worker panicked"));
        }
    });
    let elapsed = start.elapsed().max(duration);

    let succeeded = latencies.len() as u64;
    Ok(LoadReport {
        op: target.op,
        target_rate: rate,
        duration_secs: duration.as_secs_f64(),
        achieved_throughput: succeeded as f64 / elapsed.as_secs_f64(),
        sent: total,
        succeeded,
        success_rate: succeeded as f64 / total as f64,
        latency_ms: Percentiles::of(&mut latencies),
        workers: cfg.workers,
        timeout_ms: cfg.timeout.as_millis() as u64,
    })
}

#[derive(Clone, Debug)]
pub struct SaturationConfig {
    pub start_rate: f64,
    pub max_rate: f64,
    pub probe: Duration,
    /// Bisection steps after the doubling phase brackets the knee.
    pub refine_steps: u32,
    pub load: LoadConfig,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        SaturationConfig {
            start_rate: 1000.0,
            max_rate: 4_096_000.0,
            probe: Duration::from_secs(1),
            refine_steps: 3,
            load: LoadConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturationReport {
    pub op: LoadOp,
    /// Highest probed rate the service kept up with.
    pub saturation_rate: f64,
    pub probes: Vec<LoadReport>,
}

/// A probe is sustained when at least 90% of the offered rate completes and
/// no more than 1% of requests fail or time out.
pub fn sustained(r: &LoadReport) -> bool {
    r.achieved_throughput >= 0.9 * r.target_rate && r.success_rate >= 0.99
}

pub fn find_saturation(target: &Target, cfg: &SaturationConfig) -> Result<SaturationReport> {
    let mut probes = Vec::new();
    let mut probe = |rate: f64| -> Result<bool> {
        let r = run_load(target, rate, cfg.probe, &cfg.load)?;
        log::debug!("{} @ {rate:.0}/s: {:.0}/s, success {:.3}", target.op.name(), r.achieved_throughput, r.success_rate);
        let ok = sustained(&r);
        probes.push(r);
        Ok(ok)
    };

    let (mut lo, mut hi) = (0.0, cfg.start_rate);
    while hi <= cfg.max_rate && probe(hi)? {
        lo = hi;
        hi *= 2.0;
    }
    if hi > cfg.max_rate {
        return Ok(SaturationReport { op: target.op, saturation_rate: lo, probes });
    }
    for _ in 0..cfg.refine_steps {
        let mid = (lo + hi) / 2.0;
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SaturationReport { op: target.op, saturation_rate: lo, probes })
}
