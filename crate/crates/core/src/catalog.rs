//! Video catalog, Zipf popularity model, sliding-window popularity
//! estimation and prefix sizing.
//!
//! Video ids double as Zipf ranks: `VideoId(1)` is the most popular title of
//! the generating distribution.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VideoId(pub u32);

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: VideoId,
    pub duration_min: f64,
    /// Storage units per hour of playback. Only used for size reporting.
    pub playback_rate: f64,
}

impl Video {
    pub fn new(id: VideoId, duration_min: f64, playback_rate: f64) -> Result<Self> {
        if !(duration_min > 0.0) || !duration_min.is_finite() {
            return Err(Error::invalid(format!("{id}: duration must be > 0, got {duration_min}")));
        }
        if !(playback_rate > 0.0) || !playback_rate.is_finite() {
            return Err(Error::invalid(format!("{id}: playback rate must be > 0, got {playback_rate}")));
        }
        Ok(Self {
            id,
            duration_min,
            playback_rate,
        })
    }

    /// Storage units occupied by `minutes` of this video.
    pub fn storage_units(&self, minutes: f64) -> f64 {
        minutes / 60.0 * self.playback_rate
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    videos: Vec<Video>,
}

impl Catalog {
    pub fn new(videos: Vec<Video>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for v in &videos {
            if !seen.insert(v.id) {
                return Err(Error::invalid(format!("duplicate video id {}", v.id)));
            }
        }
        Ok(Self { videos })
    }

    /// Titles `v1..=vN` with integer durations drawn uniformly from
    /// `[min_duration, max_duration]` minutes.
    pub fn generate<R: Rng>(
        n_videos: u32,
        min_duration: u32,
        max_duration: u32,
        playback_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_videos == 0 {
            return Err(Error::invalid("catalog needs at least one video"));
        }
        if min_duration == 0 || min_duration > max_duration {
            return Err(Error::invalid(format!(
                "bad duration range [{min_duration}, {max_duration}]"
            )));
        }
        let videos = (1..=n_videos)
            .map(|k| {
                let d = rng.gen_range(min_duration..=max_duration);
                Video::new(VideoId(k), d as f64, playback_rate)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { videos })
    }

    pub fn get(&self, id: VideoId) -> Option<&Video> {
        // ids are usually dense and 1-based
        match self.videos.get((id.0 as usize).wrapping_sub(1)) {
            Some(v) if v.id == id => Some(v),
            _ => self.videos.iter().find(|v| v.id == id),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = VideoId> + '_ {
        self.videos.iter().map(|v| v.id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Video> {
        self.videos.iter()
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

/// Zipf probability mass over ranks `1..=n_videos`, entry `k-1` proportional
/// to `1 / k^exponent`.
pub fn zipf_pmf(n_videos: usize, exponent: f64) -> Result<Vec<f64>> {
    if n_videos == 0 {
        return Err(Error::invalid("zipf_pmf: n_videos must be >= 1"));
    }
    if !(exponent >= 0.0) || !exponent.is_finite() {
        return Err(Error::invalid(format!("zipf_pmf: exponent must be >= 0, got {exponent}")));
    }
    let weights: Vec<f64> = (1..=n_videos).map(|k| (k as f64).powf(-exponent)).collect();
    // Sum smallest-first to keep the normalization tight for large n.
    let norm: f64 = weights.iter().rev().sum();
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfModel {
    pub n_videos: usize,
    pub exponent: f64,
}

impl ZipfModel {
    pub fn new(n_videos: usize, exponent: f64) -> Result<Self> {
        zipf_pmf(n_videos, exponent)?;
        Ok(Self { n_videos, exponent })
    }

    pub fn pmf(&self) -> Vec<f64> {
        zipf_pmf(self.n_videos, self.exponent).expect("validated at construction")
    }

    /// Sampler returning 1-based ranks, i.e. video ids.
    pub fn sampler(&self) -> ZipfSampler {
        let dist = rand::distributions::WeightedIndex::new(self.pmf())
            .expect("pmf is non-empty with positive weights");
        ZipfSampler { dist }
    }
}

#[derive(Debug, Clone)]
pub struct ZipfSampler {
    dist: rand::distributions::WeightedIndex<f64>,
}

impl ZipfSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> VideoId {
        use rand::distributions::Distribution;
        VideoId(self.dist.sample(rng) as u32 + 1)
    }
}

/// Bounds applied to raw request fractions so prefix formulas stay defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XClamp {
    pub min: f64,
    pub max: f64,
}

impl Default for XClamp {
    fn default() -> Self {
        Self { min: 0.05, max: 0.95 }
    }
}

impl XClamp {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(0.0 < min && min <= max && max < 1.0) {
            return Err(Error::invalid(format!(
                "x clamp must satisfy 0 < min <= max < 1, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

/// One observed request for popularity estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedRequest {
    pub time_min: f64,
    pub video: VideoId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopularityEstimate {
    x: BTreeMap<VideoId, f64>,
    pub window_min: f64,
    pub request_counts: BTreeMap<VideoId, u64>,
    pub total: u64,
    pub clamp: XClamp,
}

impl PopularityEstimate {
    /// Estimate with explicit `x` values, e.g. for scripted scenarios.
    pub fn from_x(values: impl IntoIterator<Item = (VideoId, f64)>, clamp: XClamp) -> Result<Self> {
        let mut x = BTreeMap::new();
        for (id, xi) in values {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(Error::invalid(format!("x for {id} must be in (0,1), got {xi}")));
            }
            x.insert(id, xi);
        }
        Ok(Self {
            x,
            window_min: 0.0,
            request_counts: BTreeMap::new(),
            total: 0,
            clamp,
        })
    }

    /// Request probability used for sizing; unobserved videos get `clamp.min`.
    pub fn x(&self, id: VideoId) -> f64 {
        self.x.get(&id).copied().unwrap_or(self.clamp.min)
    }

    pub fn entries(&self) -> impl Iterator<Item = (VideoId, f64)> + '_ {
        self.x.iter().map(|(&k, &v)| (k, v))
    }

    /// Multiplies every `x` by `scale`, capping at `clamp.max`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("x scale must be > 0, got {scale}")));
        }
        let mut out = self.clone();
        for v in out.x.values_mut() {
            *v = (*v * scale).min(self.clamp.max);
        }
        out.clamp.min = (self.clamp.min * scale).min(self.clamp.max);
        Ok(out)
    }

    /// Videos from most to least popular; ties go to the lower id.
    pub fn ranking(&self) -> Vec<VideoId> {
        let mut ids: Vec<VideoId> = self.x.keys().copied().collect();
        ids.sort_by(|a, b| self.x(*b).total_cmp(&self.x(*a)).then(a.cmp(b)));
        ids
    }
}

/// Counts requests with timestamp in `(now - window_min, now]` and turns them
/// into clamped request fractions for every video in `videos`.
pub fn estimate_popularity(
    request_log: &[LoggedRequest],
    videos: impl IntoIterator<Item = VideoId>,
    window_min: f64,
    now: f64,
    clamp: XClamp,
) -> PopularityEstimate {
    let mut counts: BTreeMap<VideoId, u64> = videos.into_iter().map(|v| (v, 0)).collect();
    let mut total = 0u64;
    for r in request_log {
        let age = now - r.time_min;
        if age >= 0.0 && age < window_min {
            *counts.entry(r.video).or_insert(0) += 1;
            total += 1;
        }
    }
    let x = counts
        .iter()
        .map(|(&id, &n)| {
            let raw = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            (id, clamp.apply(raw))
        })
        .collect();
    PopularityEstimate {
        x,
        window_min,
        request_counts: counts,
        total,
        clamp,
    }
}

/// Prefix lengths in minutes: `w1 = x*S` for the proxy-cached prefix and
/// `w2 = x*(S - w1)` for the tracker-cached segment that follows it.
pub fn prefix_sizes(x: f64, duration_min: f64) -> Result<(f64, f64)> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::invalid(format!("prefix_sizes: x must be in (0,1), got {x}")));
    }
    if !(duration_min > 0.0) || !duration_min.is_finite() {
        return Err(Error::invalid(format!(
            "prefix_sizes: duration must be > 0, got {duration_min}"
        )));
    }
    let w1 = x * duration_min;
    let w2 = x * (duration_min - w1);
    Ok((w1, w2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn log(entries: &[(f64, u32)]) -> Vec<LoggedRequest> {
        entries
            .iter()
            .map(|&(t, v)| LoggedRequest {
                time_min: t,
                video: VideoId(v),
            })
            .collect()
    }

    #[test]
    fn zipf_single_video() {
        assert_eq!(zipf_pmf(1, 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn zipf_four_harmonic() {
        // 1/k over H_4 = 25/12
        let pmf = zipf_pmf(4, 1.0).unwrap();
        for (got, want) in pmf.iter().zip([0.48, 0.24, 0.16, 0.12]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn zipf_zero_exponent_is_uniform() {
        for p in zipf_pmf(5, 0.0).unwrap() {
            assert_abs_diff_eq!(p, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn zipf_rejects_empty() {
        assert!(matches!(zipf_pmf(0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(ZipfModel::new(3, -0.5).is_err());
    }

    #[test]
    fn zipf_normalizes_across_range() {
        for n in [1usize, 2, 7, 100, 1000, 10_000] {
            for e in [0.0, 0.5, 0.73, 1.0, 2.0] {
                let pmf = zipf_pmf(n, e).unwrap();
                let s: f64 = pmf.iter().sum();
                assert!((s - 1.0).abs() <= 1e-9, "n={n} e={e} sum={s}");
                assert!(pmf.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn empty_log_gives_floor() {
        let est = estimate_popularity(&[], (1..=3).map(VideoId), 60.0, 100.0, XClamp::default());
        assert_eq!(est.total, 0);
        for v in 1..=3 {
            assert_eq!(est.x(VideoId(v)), 0.05);
        }
    }

    #[test]
    fn fractions_by_hand() {
        let l = log(&[(95.0, 1), (96.0, 2), (97.0, 1), (100.0, 3), (10.0, 2)]);
        let est = estimate_popularity(&l, (1..=3).map(VideoId), 60.0, 100.0, XClamp::default());
        assert_eq!(est.total, 4);
        assert_abs_diff_eq!(est.x(VideoId(1)), 0.5);
        assert_abs_diff_eq!(est.x(VideoId(2)), 0.25);
        assert_abs_diff_eq!(est.x(VideoId(3)), 0.25);
        let s: f64 = est.request_counts.values().map(|&n| n as f64 / est.total as f64).sum();
        assert_abs_diff_eq!(s, 1.0);
    }

    #[test]
    fn single_video_window_clamps_to_max() {
        let l: Vec<_> = (0..10).map(|i| (50.0 + i as f64, 1)).collect();
        let est = estimate_popularity(&log(&l), (1..=2).map(VideoId), 60.0, 60.0, XClamp::default());
        assert_eq!(est.x(VideoId(1)), 0.95);
        assert_eq!(est.x(VideoId(2)), 0.05);
    }

    #[test]
    fn window_is_half_open() {
        // t = now - window is excluded, t = now is included
        let l = log(&[(40.0, 1), (100.0, 2)]);
        let est = estimate_popularity(&l, (1..=2).map(VideoId), 60.0, 100.0, XClamp::default());
        assert_eq!(est.request_counts[&VideoId(1)], 0);
        assert_eq!(est.request_counts[&VideoId(2)], 1);
    }

    #[test]
    fn prefix_examples() {
        let (w1, w2) = prefix_sizes(0.2, 120.0).unwrap();
        assert_abs_diff_eq!(w1, 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w2, 19.2, epsilon = 1e-12);
        let (w1, w2) = prefix_sizes(0.5, 180.0).unwrap();
        assert_abs_diff_eq!(w1, 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w2, 45.0, epsilon = 1e-12);
        let (w1, w2) = prefix_sizes(0.05, 120.0).unwrap();
        assert_abs_diff_eq!(w1, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w2, 5.7, epsilon = 1e-12);
    }

    #[test]
    fn prefix_rejects_out_of_range() {
        assert!(prefix_sizes(0.0, 120.0).is_err());
        assert!(prefix_sizes(1.0, 120.0).is_err());
        assert!(prefix_sizes(0.3, 0.0).is_err());
    }

    #[test]
    fn scaling_caps_at_max() {
        let est = PopularityEstimate::from_x([(VideoId(1), 0.6), (VideoId(2), 0.1)], XClamp::default()).unwrap();
        let s = est.scaled(2.0).unwrap();
        assert_eq!(s.x(VideoId(1)), 0.95);
        assert_abs_diff_eq!(s.x(VideoId(2)), 0.2);
        assert_eq!(s.ranking(), vec![VideoId(1), VideoId(2)]);
    }

    #[test]
    fn catalog_rejects_duplicates() {
        let v = Video::new(VideoId(1), 120.0, 200.0).unwrap();
        assert!(Catalog::new(vec![v.clone(), v]).is_err());
        assert!(Video::new(VideoId(2), 0.0, 200.0).is_err());
    }

    proptest! {
        #[test]
        fn prefixes_strictly_inside(x in 1e-6f64..(1.0 - 1e-6), s in 1.0f64..500.0) {
            let (w1, w2) = prefix_sizes(x, s).unwrap();
            prop_assert!(w1 > 0.0 && w1 < s);
            prop_assert!(w2 > 0.0 && w2 < s - w1);
        }

        #[test]
        fn estimate_time_shift_invariant(
            reqs in proptest::collection::vec((0u32..400, 1u32..6), 0..60),
            shift in -1000i32..1000,
        ) {
            // quarter-minute grid keeps the arithmetic exact
            let base: Vec<_> = reqs.iter().map(|&(t, v)| (t as f64 * 0.25, v)).collect();
            let shifted: Vec<_> = base.iter().map(|&(t, v)| (t + shift as f64, v)).collect();
            let now = 100.0;
            let a = estimate_popularity(&log(&base), (1..=5).map(VideoId), 30.0, now, XClamp::default());
            let b = estimate_popularity(&log(&shifted), (1..=5).map(VideoId), 30.0, now + shift as f64, XClamp::default());
            prop_assert_eq!(a, b);
        }
    }
}
