//! Scenario files and experiment orchestration.
//!
//! A scenario is a `key = value` file with `#` comments and optional
//! `[section]` headers. Keys left out keep their defaults. An experiment runs
//! every combination of sweep value, seed and chaining variant, plus a paired
//! no-proxy baseline when asked, and writes CSV, summary and trace files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::catalog::XClamp;
use crate::error::{Error, Result};
use crate::metrics::{emit_csv, summary_table, MetricsReport};
use crate::sim::{run, RunConfig, RunOutput};
use crate::topology::LinkClass;

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    /// Ascending.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub sweep: Option<Sweep>,
    pub out_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        let config = RunConfig::default();
        Self {
            name: "default".into(),
            seeds: vec![config.seed],
            config,
            sweep: None,
            out_dir: None,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["name", "seed", "seeds", "duration_min", "max_arrivals", "out", "baseline"]),
    ("topology", &["lpsgs", "ps_per_lpsg", "clients_per_ps"]),
    (
        "capacities",
        &[
            "mms_cache_min",
            "cache_ratio",
            "ps_client",
            "client_client",
            "tr_ps",
            "ps_ps",
            "tr_tr",
            "mms_tr",
            "ps_client_delay_ms",
            "client_client_delay_ms",
            "tr_ps_delay_ms",
            "ps_ps_delay_ms",
            "tr_tr_delay_ms",
            "mms_tr_delay_ms",
        ],
    ),
    (
        "workload",
        &[
            "arrival_rate",
            "zipf_exponent",
            "n_videos",
            "min_video_min",
            "max_video_min",
            "playback_rate",
            "early_depart_prob",
            "failure_rate",
            "window_min",
            "x_min",
            "x_max",
            "x_scale",
        ],
    ),
    ("chaining", &["chaining", "d", "g_sec"]),
    ("sweep", &["sweep"]),
];

fn link_class(key: &str) -> Option<LinkClass> {
    let base = key.strip_suffix("_delay_ms").unwrap_or(key);
    Some(match base {
        "ps_client" => LinkClass::PsClient,
        "client_client" => LinkClass::ClientClient,
        "tr_ps" => LinkClass::TrPs,
        "ps_ps" => LinkClass::PsPs,
        "tr_tr" => LinkClass::TrTr,
        "mms_tr" => LinkClass::MmsTr,
        _ => return None,
    })
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

pub fn parse_on_off(v: &str) -> std::result::Result<bool, String> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got {v:?}")),
    }
}

/// `n..m` (inclusive) or a single `n`.
pub fn parse_seed_range(v: &str) -> std::result::Result<Vec<u64>, String> {
    match v.split_once("..") {
        Some((a, b)) => {
            let a: u64 = num(a.trim())?;
            let b: u64 = num(b.trim())?;
            if a > b {
                return Err(format!("empty seed range {v}"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(v.trim())?]),
    }
}

/// Sets one run parameter. Shared by the file parser and sweeps.
pub fn apply_key(cfg: &mut RunConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "seed" => cfg.seed = num(v)?,
        "duration_min" => cfg.duration_min = num(v)?,
        "max_arrivals" => {
            let n: usize = num(v)?;
            cfg.max_arrivals = (n > 0).then_some(n);
        }
        "baseline" => match v {
            "no-proxy" => cfg.no_proxy_baseline = true,
            "none" => cfg.no_proxy_baseline = false,
            _ => return Err(format!("baseline must be no-proxy or none, got {v:?}")),
        },
        "lpsgs" => cfg.lpsgs = num(v)?,
        "ps_per_lpsg" => cfg.ps_per_lpsg = num(v)?,
        "clients_per_ps" => cfg.clients_per_ps = num(v)?,
        "mms_cache_min" => cfg.mms_cache_min = num(v)?,
        "cache_ratio" => {
            let parts: Vec<f64> = v.split(':').map(|p| num(p.trim())).collect::<std::result::Result<_, _>>()?;
            let [m, t, p] = parts[..] else {
                return Err(format!("cache_ratio needs three parts like 10:4:2, got {v:?}"));
            };
            if !(m > 0.0) {
                return Err("cache_ratio main-server part must be > 0".into());
            }
            cfg.tr_cache_ratio = t / m;
            cfg.ps_cache_ratio = p / m;
        }
        k if k.ends_with("_delay_ms") && link_class(k).is_some() => {
            let d: f64 = num(v)?;
            if !(d >= 0.0) {
                return Err(format!("delay must be >= 0, got {d}"));
            }
            cfg.links = cfg.links.clone().with_delay(link_class(k).unwrap(), d);
        }
        k if link_class(k).is_some() => {
            cfg.links = cfg.links.clone().with_capacity(link_class(k).unwrap(), num(v)?);
        }
        "arrival_rate" => cfg.arrival_rate_per_hour = num(v)?,
        "zipf_exponent" => cfg.zipf_exponent = num(v)?,
        "n_videos" => cfg.n_videos = num(v)?,
        "min_video_min" => cfg.min_video_min = num(v)?,
        "max_video_min" => cfg.max_video_min = num(v)?,
        "playback_rate" => cfg.playback_rate = num(v)?,
        "early_depart_prob" => cfg.early_depart_prob = num(v)?,
        "failure_rate" => cfg.failure_rate_per_hour = num(v)?,
        "window_min" => cfg.window_min = num(v)?,
        "x_min" => cfg.x_clamp = XClamp::new(num(v)?, cfg.x_clamp.max).map_err(|e| e.to_string())?,
        "x_max" => cfg.x_clamp = XClamp::new(cfg.x_clamp.min, num(v)?).map_err(|e| e.to_string())?,
        "x_scale" => cfg.x_scale = num(v)?,
        "chaining" => cfg.chaining = parse_on_off(v)?,
        "d" => cfg.d = num(v)?,
        "g_sec" => cfg.g_sec = num(v)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

fn parse_sweep(v: &str) -> std::result::Result<Sweep, String> {
    let (param, list) = v.split_once(':').ok_or("sweep must look like `x_scale: 0.1,0.2`")?;
    let param = param.trim().to_string();
    let mut probe = RunConfig::default();
    let mut values = Vec::new();
    for item in list.split(',') {
        let item = item.trim();
        let x: f64 = num(item)?;
        apply_key(&mut probe, &param, item).map_err(|e| format!("sweep {param}: {e}"))?;
        probe.validate().map_err(|e| format!("sweep {param} = {item}: {e}"))?;
        values.push(x);
    }
    if values.is_empty() {
        return Err("sweep has no values".into());
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(Sweep { param, values })
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let mut sc = Scenario::default();
    let mut seeds: Option<Vec<u64>> = None;
    let mut section: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Config { line: line_no, message };
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            match SECTIONS.iter().find(|(s, _)| *s == name) {
                Some((s, _)) => section = Some(s),
                None => return Err(err(format!("unknown section [{name}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let known = SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s);
        match (known, section) {
            (None, _) => return Err(err(format!("unknown key {key:?}"))),
            (Some(k), Some(s)) if k != s => return Err(err(format!("key {key:?} belongs in [{k}], not [{s}]"))),
            _ => {}
        }
        match key {
            "name" => sc.name = value.to_string(),
            "out" => sc.out_dir = Some(PathBuf::from(value)),
            "seeds" => seeds = Some(parse_seed_range(value).map_err(err)?),
            "sweep" => sc.sweep = Some(parse_sweep(value).map_err(err)?),
            _ => apply_key(&mut sc.config, key, value).map_err(err)?,
        }
    }
    sc.config.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;
    sc.seeds = seeds.unwrap_or_else(|| vec![sc.config.seed]);
    Ok(sc)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Chaining,
    NoChaining,
    Baseline,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Chaining => "PC+Chaining",
            Variant::NoChaining => "PC-Chaining",
            Variant::Baseline => "No proxy",
        }
    }

    fn file_tag(&self) -> &'static str {
        match self {
            Variant::Chaining => "chaining",
            Variant::NoChaining => "nochaining",
            Variant::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExperimentOptions {
    pub ab_chaining: bool,
    pub baseline: bool,
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub sweep_key: f64,
    pub seed: u64,
    pub variant: Variant,
    pub config: RunConfig,
    pub output: RunOutput,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub options: ExperimentOptions,
    /// In (sweep key, seed, variant) order.
    pub runs: Vec<RunResult>,
}

fn sweep_points(sc: &Scenario) -> Result<Vec<(f64, RunConfig)>> {
    match &sc.sweep {
        None => Ok(vec![(0.0, sc.config.clone())]),
        Some(sw) => sw
            .values
            .iter()
            .map(|&x| {
                let mut c = sc.config.clone();
                apply_key(&mut c, &sw.param, &x.to_string()).map_err(Error::InvalidArgument)?;
                c.validate()?;
                Ok((x, c))
            })
            .collect(),
    }
}

/// Runs everything the scenario asks for. Runs execute in parallel; results
/// come back in a fixed order regardless of scheduling.
pub fn run_experiment(scenario: &Scenario, options: &ExperimentOptions) -> Result<Experiment> {
    scenario.config.validate()?;
    if scenario.seeds.is_empty() {
        return Err(Error::invalid("no seeds to run"));
    }
    let primary = if scenario.config.chaining {
        Variant::Chaining
    } else {
        Variant::NoChaining
    };
    let mut variants = vec![primary];
    if options.ab_chaining {
        variants = vec![Variant::Chaining, Variant::NoChaining];
    }
    let baseline = options.baseline || scenario.config.no_proxy_baseline;
    if baseline {
        variants.push(Variant::Baseline);
    }

    let mut jobs = Vec::new();
    for (key, cfg) in sweep_points(scenario)? {
        for &seed in &scenario.seeds {
            for &variant in &variants {
                let mut c = cfg.clone();
                c.seed = seed;
                match variant {
                    Variant::Chaining => (c.chaining, c.no_proxy_baseline) = (true, false),
                    Variant::NoChaining => (c.chaining, c.no_proxy_baseline) = (false, false),
                    Variant::Baseline => (c.chaining, c.no_proxy_baseline) = (false, true),
                }
                jobs.push((key, seed, variant, c));
            }
        }
    }
    let outputs: Vec<Result<RunOutput>> = jobs.par_iter().map(|(_, _, _, c)| run(c)).collect();
    let mut runs = Vec::with_capacity(jobs.len());
    for ((sweep_key, seed, variant, config), out) in jobs.into_iter().zip(outputs) {
        runs.push(RunResult {
            sweep_key,
            seed,
            variant,
            config,
            output: out?,
        });
    }

    if baseline {
        let base: Vec<(f64, u64, MetricsReport)> = runs
            .iter()
            .filter(|r| r.variant == Variant::Baseline)
            .map(|r| (r.sweep_key, r.seed, r.output.report.clone()))
            .collect();
        for r in runs.iter_mut().filter(|r| r.variant != Variant::Baseline) {
            if let Some((_, _, b)) = base.iter().find(|(k, s, _)| *k == r.sweep_key && *s == r.seed) {
                r.output.report.pair_with_baseline(b);
            }
        }
    }
    Ok(Experiment {
        scenario: scenario.clone(),
        options: options.clone(),
        runs,
    })
}

impl Experiment {
    pub fn variants(&self) -> Vec<Variant> {
        let mut v: Vec<Variant> = self.runs.iter().map(|r| r.variant).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn reports(&self, variant: Variant) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.variant == variant)
    }

    fn primary(&self) -> Variant {
        self.variants()[0]
    }

    /// CSV for one variant.
    pub fn csv(&self, variant: Variant) -> String {
        emit_csv(self.reports(variant).map(|r| (r.sweep_key, r.seed, &r.output.report)))
    }

    /// One comparison table per sweep value, averaged over seeds.
    pub fn summary(&self) -> String {
        let mut keys: Vec<f64> = self.runs.iter().map(|r| r.sweep_key).collect();
        keys.dedup();
        let mut out = format!("scenario: {}\nseeds: {}\n", self.scenario.name, self.scenario.seeds.len());
        for key in keys {
            if let Some(sw) = &self.scenario.sweep {
                out.push_str(&format!("\n{} = {key}\n", sw.param));
            } else {
                out.push('\n');
            }
            let cols: Vec<(&str, Vec<&MetricsReport>)> = self
                .variants()
                .into_iter()
                .map(|v| {
                    (
                        v.label(),
                        self.runs
                            .iter()
                            .filter(|r| r.variant == v && r.sweep_key == key)
                            .map(|r| &r.output.report)
                            .collect(),
                    )
                })
                .collect();
            out.push_str(&summary_table(&cols));
        }
        out
    }

    /// Files this experiment writes, relative to the output directory.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        let primary = self.primary();
        let mut files = vec![(PathBuf::from("results.csv"), self.csv(primary))];
        for v in self.variants().into_iter().filter(|&v| v != primary) {
            files.push((PathBuf::from(format!("results_{}.csv", v.file_tag())), self.csv(v)));
        }
        files.push((PathBuf::from("summary.txt"), self.summary()));
        if self.options.trace {
            for r in &self.runs {
                let name = format!("trace_{}_seed{}_{}.csv", crate::metrics::fmt_sig6(r.sweep_key), r.seed, r.variant.file_tag());
                files.push((Path::new("traces").join(name), r.output.trace_text()));
            }
        }
        files
    }

    /// Writes every file under `dir`. On failure, files written so far are
    /// removed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let result = (|| -> Result<()> {
            for (rel, text) in self.files() {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, text)?;
                written.push(path);
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                remove_files(&written);
                Err(e)
            }
        }
    }
}

pub fn remove_files(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}
