//! Discrete-event simulation of one run.

pub mod arrivals;
mod engine;
pub mod events;
pub mod ledger;
pub mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, VideoId, XClamp};
use crate::chaining::{MemberId, Upstream};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::placement::{PlanEntry, PrefixPlan};
use crate::routing::DecisionKind;
use crate::topology::{LinkTable, NodeId};

pub use arrivals::{gen_arrivals, Arrival};
pub use ledger::{BandwidthLedger, Hop, LinkId, ReservationId};
pub use trace::TraceRecord;

/// Independent random stream `stream` of the run seeded with `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub duration_min: f64,
    /// Poisson rate per proxy.
    pub arrival_rate_per_hour: f64,
    /// Keep only the first this many arrivals.
    pub max_arrivals: Option<usize>,
    pub zipf_exponent: f64,
    pub n_videos: u32,
    pub min_video_min: u32,
    pub max_video_min: u32,
    pub playback_rate: f64,
    /// Applicant list length.
    pub d: usize,
    /// Failure detection timeout.
    pub g_sec: f64,
    pub early_depart_prob: f64,
    pub failure_rate_per_hour: f64,
    pub chaining: bool,
    pub no_proxy_baseline: bool,
    pub lpsgs: u32,
    pub ps_per_lpsg: u32,
    pub clients_per_ps: u32,
    pub links: LinkTable,
    pub mms_cache_min: f64,
    pub tr_cache_ratio: f64,
    pub ps_cache_ratio: f64,
    pub window_min: f64,
    pub x_clamp: XClamp,
    pub x_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_min: 600.0,
            arrival_rate_per_hour: 44.0,
            max_arrivals: Some(320),
            zipf_exponent: 0.73,
            n_videos: 10,
            min_video_min: 120,
            max_video_min: 180,
            playback_rate: 200.0,
            d: 4,
            g_sec: 5.0,
            early_depart_prob: 0.05,
            failure_rate_per_hour: 0.01,
            chaining: true,
            no_proxy_baseline: false,
            lpsgs: 6,
            ps_per_lpsg: 6,
            clients_per_ps: 25,
            links: LinkTable::default(),
            mms_cache_min: 1000.0,
            tr_cache_ratio: 0.4,
            ps_cache_ratio: 0.2,
            window_min: 60.0,
            x_clamp: XClamp::default(),
            x_scale: 1.0,
        }
    }
}

impl RunConfig {
    pub fn tr_cache_min(&self) -> f64 {
        self.mms_cache_min * self.tr_cache_ratio
    }

    pub fn ps_cache_min(&self) -> f64 {
        self.mms_cache_min * self.ps_cache_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("arrival_rate", self.arrival_rate_per_hour),
            ("g_sec", self.g_sec),
            ("failure_rate", self.failure_rate_per_hour),
            ("mms_cache", self.mms_cache_min),
            ("tr_cache_ratio", self.tr_cache_ratio),
            ("ps_cache_ratio", self.ps_cache_ratio),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.duration_min > 0.0) || !self.duration_min.is_finite() {
            return Err(Error::invalid(format!("duration must be > 0, got {}", self.duration_min)));
        }
        if !(0.0..=1.0).contains(&self.early_depart_prob) {
            return Err(Error::invalid(format!("early depart probability must be in [0,1], got {}", self.early_depart_prob)));
        }
        if !(self.zipf_exponent >= 0.0) || !self.zipf_exponent.is_finite() {
            return Err(Error::invalid(format!("zipf exponent must be >= 0, got {}", self.zipf_exponent)));
        }
        if self.d == 0 {
            return Err(Error::invalid("d must be >= 1"));
        }
        if !(self.window_min > 0.0) {
            return Err(Error::invalid(format!("window must be > 0, got {}", self.window_min)));
        }
        if !(self.x_scale > 0.0) || !self.x_scale.is_finite() {
            return Err(Error::invalid(format!("x_scale must be > 0, got {}", self.x_scale)));
        }
        if self.n_videos == 0 || self.min_video_min == 0 || self.min_video_min > self.max_video_min {
            return Err(Error::invalid("catalog needs >= 1 video and 0 < min length <= max length"));
        }
        if self.lpsgs == 0 || self.ps_per_lpsg == 0 || self.clients_per_ps == 0 {
            return Err(Error::invalid("topology counts must all be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Fail,
    Depart,
}

/// Forces a session (numbered by arrival order from 0) to fail or leave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedFault {
    pub session: u64,
    pub time_min: f64,
    pub kind: FaultKind,
}

/// Overrides for hand-built scenarios. Anything left `None` is generated
/// from the config as usual.
#[derive(Debug, Clone, Default)]
pub struct Script {
    pub catalog: Option<Catalog>,
    pub arrivals: Option<Vec<Arrival>>,
    /// Replaces the popularity-driven placement: (LPSG, video, entry).
    pub placement: Option<Vec<(u32, VideoId, PlanEntry)>>,
    pub faults: Vec<ScriptedFault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Rejected,
    Playing,
    Finished,
    Departed,
    Failed,
    /// Lost its stream and nothing could take over.
    Dropped,
    /// Still playing when the run ended.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub member: MemberId,
    pub client: NodeId,
    pub video: VideoId,
    pub arrival_min: f64,
    pub duration_min: f64,
    /// Decision at admission; `Reject` for dropped sessions.
    pub kind: DecisionKind,
    pub admitted_as: DecisionKind,
    pub wait_ms: f64,
    pub status: SessionStatus,
    /// Playback intervals received, in order.
    pub delivered: Vec<(f64, f64)>,
    pub stall_sec: f64,
}

impl SessionSummary {
    pub fn delivered_min(&self) -> f64 {
        self.delivered.iter().map(|(a, b)| b - a).sum()
    }

    /// Received intervals tile `[0, S)` without gaps or overlaps.
    pub fn delivery_complete(&self) -> bool {
        let mut at = 0.0;
        for &(a, b) in &self.delivered {
            if (a - at).abs() > 1e-6 || b < a {
                return false;
            }
            at = b;
        }
        (at - self.duration_min).abs() <= 1e-6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinRecord {
    pub time_min: f64,
    pub member: MemberId,
    pub parent: MemberId,
    pub parent_arrival_min: f64,
    pub sz_pref1_min: f64,
    /// The parent had no child before this join.
    pub parent_was_tail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryEvent {
    pub failed: MemberId,
    pub child: Option<MemberId>,
    pub new_parent: Option<Upstream>,
    pub failed_at_min: f64,
    pub detected_at_min: f64,
    pub stall_sec: f64,
    /// Chain members right after the repair, in path order.
    pub chain_after: Vec<MemberId>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceRecord>,
    pub sessions: Vec<SessionSummary>,
    pub joins: Vec<JoinRecord>,
    pub recoveries: Vec<RecoveryEvent>,
    /// Ledger after the run; every reservation has been released.
    pub ledger: BandwidthLedger,
    pub initial_plans: Vec<PrefixPlan>,
    /// Largest concurrent chain count seen on any single chain.
    pub max_chain_len: usize,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        trace::render(&self.trace)
    }
}

/// Runs one simulation.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_scripted(config, &Script::default())
}

pub fn run_scripted(config: &RunConfig, script: &Script) -> Result<RunOutput> {
    config.validate()?;
    engine::Engine::new(config, script)?.run()
}
