use std::collections::BTreeMap;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{BenchError, BenchReport, Workload};
use crate::net::config::NodeAddress;
use crate::net::live::{spawn_node, LiveClient, NodeHandle};
use crate::net::{ClusterConfig, SimCluster, SimConfig, TransportMode};
use crate::raft::{NodeId, Role};
use crate::scenario::{set_command, SECOND};
use crate::secure::MasterKey;

/// Commits discarded before measurement starts.
pub const WARMUP_COMMITS: usize = 100;

/// Benchmarks a simulated three-node cluster. Deterministic per seed.
pub fn run_sim_bench(mode: TransportMode, workload: Workload, seed: u64) -> Result<BenchReport, BenchError> {
    let clients = workload.clients.max(1);
    let mut config = SimConfig::new(3, mode, seed);
    config.clients = clients;
    let members = config.members.clone();
    let mut cluster = SimCluster::new(config);
    cluster
        .run_until_leader(10 * SECOND)
        .ok_or(BenchError::NoLeader)?;

    let total = workload.total_ops as usize + WARMUP_COMMITS;
    let per_client = total.div_ceil(clients);
    for c in 0..clients {
        let tag = format!("bench{c}");
        cluster.submit(c, (0..per_client).map(|i| set_command(&tag, i, workload.command_size)));
    }
    let budget = cluster.now() + 600 * SECOND + total as u64 * 50_000;
    if !cluster.run_until_idle(budget) {
        return Err(BenchError::Incomplete(format!(
            "{} of {} commands committed",
            cluster.completions().len(),
            per_client * clients
        )));
    }

    let mut done = cluster.completions();
    done.sort_by_key(|c| (c.committed, c.index));
    let rejections: BTreeMap<NodeId, u64> = members
        .iter()
        .map(|id| (*id, cluster.metrics(*id).rejected()))
        .collect();
    if workload.total_ops == 0 {
        return Ok(BenchReport::from_samples(mode, workload, 0.0, vec![], rejections));
    }
    let start = done[WARMUP_COMMITS - 1].committed;
    let measured = &done[WARMUP_COMMITS..WARMUP_COMMITS + workload.total_ops as usize];
    let end = measured.last().expect("non-empty").committed;
    let latencies = measured.iter().map(|c| c.latency() as f64 / 1_000.0).collect();
    let duration = (end - start) as f64 / 1e6;
    Ok(BenchReport::from_samples(mode, workload, duration, latencies, rejections))
}

/// Localhost cluster config with listeners already bound on ephemeral ports.
pub fn local_cluster(nodes: usize, mode: TransportMode, seed: u64) -> std::io::Result<(ClusterConfig, Vec<TcpListener>)> {
    let listeners = (0..nodes)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<Vec<_>>>()?;
    let addrs = listeners
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(NodeAddress {
                id: NodeId(i as u64 + 1),
                addr: l.local_addr()?.to_string(),
            })
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut config = ClusterConfig::new(addrs, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);
    config.master_keys = vec![MasterKey::new(1, key)];
    config.active_key_id = Some(1);
    config.rng_seed = seed;
    Ok((config, listeners))
}

#[derive(Debug, Clone)]
pub struct LiveBenchOptions {
    pub nodes: usize,
    /// Wall-clock warm-up; commands submitted before it ends are not measured.
    pub warmup: Duration,
    /// Per-command give-up deadline.
    pub command_deadline: Duration,
    pub seed: u64,
    /// Timing, cache and confidentiality settings copied into the cluster.
    pub template: Option<ClusterConfig>,
}

impl Default for LiveBenchOptions {
    fn default() -> Self {
        LiveBenchOptions {
            nodes: 3,
            warmup: Duration::from_secs(2),
            command_deadline: Duration::from_secs(10),
            seed: 1,
            template: None,
        }
    }
}

fn wait_for_leader(handles: &[NodeHandle], deadline: Duration) -> bool {
    let give_up = Instant::now() + deadline;
    while Instant::now() < give_up {
        if handles.iter().any(|h| h.status().role == Some(Role::Leader)) {
            return true;
        }
        thread::sleep(Duration::from_millis(10));
    }
    false
}

/// Runs a fresh localhost cluster with closed-loop client threads.
pub fn run_live_bench(mode: TransportMode, workload: Workload, options: LiveBenchOptions) -> Result<BenchReport, BenchError> {
    let live = |e: &dyn std::fmt::Display| BenchError::Live(e.to_string());
    let (mut config, listeners) = local_cluster(options.nodes, mode, options.seed).map_err(|e| live(&e))?;
    if let Some(t) = &options.template {
        config.election_timeout_min = t.election_timeout_min;
        config.election_timeout_max = t.election_timeout_max;
        config.heartbeat_interval = t.heartbeat_interval;
        config.cache_policy = t.cache_policy.clone();
        config.confidential = t.confidential;
    }
    let handles = listeners
        .into_iter()
        .enumerate()
        .map(|(i, l)| spawn_node(&config, NodeId(i as u64 + 1), l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| live(&e))?;
    if !wait_for_leader(&handles, Duration::from_secs(10)) {
        return Err(BenchError::NoLeader);
    }

    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<Result<(Instant, Instant), String>>();
    let mut workers = Vec::new();
    for c in 0..workload.clients.max(1) {
        let config = config.clone();
        let stop = Arc::clone(&stop);
        let tx = tx.clone();
        let size = workload.command_size;
        let deadline = options.command_deadline;
        workers.push(thread::spawn(move || {
            let mut client = match LiveClient::new(&config, NodeId::client(c as u64)) {
                Ok(client) => client,
                Err(e) => {
                    let _ = tx.send(Err(e.to_string()));
                    return;
                }
            };
            let tag = format!("live{c}");
            let mut i = 0;
            while !stop.load(Ordering::Relaxed) {
                let command = set_command(&tag, i, size);
                i += 1;
                let t0 = Instant::now();
                let sample = client
                    .submit(&command, deadline)
                    .map(|_| (t0, Instant::now()))
                    .map_err(|e| e.to_string());
                let failed = sample.is_err();
                if tx.send(sample).is_err() || failed {
                    return;
                }
            }
        }));
    }
    drop(tx);

    let warm_end = Instant::now() + options.warmup;
    let mut latencies = Vec::with_capacity(workload.total_ops as usize);
    let mut last_commit = warm_end;
    let mut failure = None;
    while (latencies.len() as u64) < workload.total_ops {
        match rx.recv() {
            Ok(Ok((submitted, committed))) => {
                if submitted >= warm_end {
                    latencies.push((committed - submitted).as_secs_f64() * 1_000.0);
                    last_commit = last_commit.max(committed);
                }
            }
            Ok(Err(e)) => {
                failure = Some(e);
                break;
            }
            Err(_) => break,
        }
    }
    stop.store(true, Ordering::Relaxed);
    drop(rx);
    for w in workers {
        let _ = w.join();
    }
    let statuses: Vec<_> = handles.into_iter().map(|h| (h.id(), h.stop())).collect();
    if let Some(e) = failure {
        return Err(BenchError::Live(e));
    }
    if (latencies.len() as u64) < workload.total_ops {
        return Err(BenchError::Incomplete(format!(
            "{} of {} commands measured",
            latencies.len(),
            workload.total_ops
        )));
    }
    let rejections = statuses
        .iter()
        .map(|(id, s)| (*id, s.metrics.rejected()))
        .collect();
    let duration = (last_commit - warm_end).as_secs_f64();
    Ok(BenchReport::from_samples(mode, workload, duration, latencies, rejections))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Workload {
        Workload {
            clients: 4,
            command_size: 32,
            total_ops: 300,
        }
    }

    #[test]
    fn sim_bench_is_deterministic() {
        let a = run_sim_bench(TransportMode::Secure, small(), 5).unwrap();
        let b = run_sim_bench(TransportMode::Secure, small(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.operations_completed, 300);
        assert!(a.rejections.values().all(|n| *n == 0));
    }

    #[test]
    fn sim_bench_obeys_littles_law() {
        let w = small();
        let r = run_sim_bench(TransportMode::Plaintext, w, 9).unwrap();
        let concurrency = r.throughput * r.latency_mean.unwrap() / 1_000.0;
        let clients = w.clients as f64;
        assert!((concurrency - clients).abs() / clients < 0.1, "{concurrency}");
    }

    #[test]
    fn zero_op_workload_reports_undefined_latency() {
        let w = Workload {
            total_ops: 0,
            ..small()
        };
        let r = run_sim_bench(TransportMode::Plaintext, w, 1).unwrap();
        assert_eq!(r.operations_completed, 0);
        assert!(r.latency_mean.is_none());
    }

    #[test]
    fn live_bench_small_run() {
        let options = LiveBenchOptions {
            warmup: Duration::from_millis(200),
            ..LiveBenchOptions::default()
        };
        let w = Workload {
            total_ops: 200,
            ..small()
        };
        let r = run_live_bench(TransportMode::Secure, w, options).unwrap();
        assert_eq!(r.operations_completed, 200);
        assert!(r.throughput > 0.0);
        assert!(r.rejections.values().all(|n| *n == 0));
    }
}
