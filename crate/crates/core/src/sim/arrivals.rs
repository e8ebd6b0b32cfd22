//! Poisson request generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{VideoId, ZipfModel};
use crate::sim::stream_rng;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time_min: f64,
    pub client: NodeId,
    pub video: VideoId,
}

pub(crate) const ARRIVAL_STREAM: u64 = 1 << 32;
pub(crate) const WARMUP_STREAM: u64 = 2 << 32;

fn exp_minutes(rng: &mut ChaCha8Rng, mean_min: f64) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite
    let u: f64 = rng.gen();
    -(1.0 - u).ln() * mean_min
}

/// Independent Poisson stream per proxy over `[from_min, to_min)`, merged by
/// time (proxy order on ties). Clients are uniform within the proxy and
/// videos follow `zipf`.
pub(crate) fn poisson_arrivals(
    seed: u64,
    stream_base: u64,
    rate_per_hour: f64,
    from_min: f64,
    to_min: f64,
    zipf: &ZipfModel,
    topology: &Topology,
) -> Vec<Arrival> {
    let mut all: Vec<(usize, Arrival)> = Vec::new();
    if !(rate_per_hour > 0.0) || !(to_min > from_min) {
        return Vec::new();
    }
    let mean = 60.0 / rate_per_hour;
    let sampler = zipf.sampler();
    for (idx, ps) in topology.all_proxies().enumerate() {
        let mut rng = stream_rng(seed, stream_base + idx as u64);
        let NodeId::Proxy { lpsg, ps } = ps else { unreachable!() };
        let mut t = from_min;
        loop {
            t += exp_minutes(&mut rng, mean);
            if t >= to_min {
                break;
            }
            let client = rng.gen_range(0..topology.clients_per_ps());
            let video = sampler.sample(&mut rng);
            all.push((
                idx,
                Arrival {
                    time_min: t,
                    client: NodeId::Client { lpsg, ps, client },
                    video,
                },
            ));
        }
    }
    all.sort_by(|a, b| a.1.time_min.total_cmp(&b.1.time_min).then(a.0.cmp(&b.0)));
    all.into_iter().map(|(_, a)| a).collect()
}

/// Requests over `[0, duration_min)`, fully determined by `seed`.
pub fn gen_arrivals(seed: u64, rate_per_hour: f64, duration_min: f64, zipf: &ZipfModel, topology: &Topology) -> Vec<Arrival> {
    poisson_arrivals(seed, ARRIVAL_STREAM, rate_per_hour, 0.0, duration_min, zipf, topology)
}
