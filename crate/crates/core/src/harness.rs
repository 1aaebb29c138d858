//! Monte Carlo driver: configuration, experiment loop, aggregation and
//! output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::alloc::PairMode;
use crate::channel::{
    gen_heterogeneous_channels_with, gen_symmetric_channels_with, ChannelTensor, Geometry,
    SystemDims, UserLayout, N_CELLS,
};
use crate::error::{Error, Result};
use crate::ia::IaDesign;
use crate::rng::substream;
use crate::schemes::{
    ia_candidates, prepare_ia_cache, run_hybrid, run_ia_cached, run_ofp, run_traditional, IaCache,
    SchemeId, SchemeParams, SchemeResult, Weights,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Unit-variance direct links, cross links of variance `cross_gain`.
    Symmetric { cross_gain: f64 },
    /// Users dropped in discs around a triangle of base stations.
    Heterogeneous {
        geometry: Geometry,
        cir_radius_fraction: f64,
    },
}

impl ChannelModel {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelModel::Symmetric { .. } => "symmetric",
            ChannelModel::Heterogeneous { .. } => "heterogeneous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ChannelModel,
    pub n_subcarriers: usize,
    pub users_per_cell: usize,
    pub noise_variance: f64,
    pub snr_grid_db: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub trials: usize,
    pub master_seed: u64,
    pub params: SchemeParams,
    pub csv_path: Option<PathBuf>,
    pub plot_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Profile::StrongInterference.config()
    }
}

/// Ready-made experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Symmetric channels, cross links as strong as direct ones.
    StrongInterference,
    /// Symmetric channels, cross links 10 dB weaker.
    WeakInterference,
    /// Geometric channels at desk scale, IA triples preselected.
    Heterogeneous,
    /// Geometric channels with 256 subcarriers and 12 users per cell. Slow.
    HeterogeneousLarge,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "strong-interference" => Ok(Profile::StrongInterference),
            "weak-interference" => Ok(Profile::WeakInterference),
            "heterogeneous" => Ok(Profile::Heterogeneous),
            "heterogeneous-large" => Ok(Profile::HeterogeneousLarge),
            _ => Err(Error::Config(format!("unknown profile '{s}'"))),
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let symmetric = |h: f64| ExperimentConfig {
            model: ChannelModel::Symmetric { cross_gain: h },
            n_subcarriers: 64,
            users_per_cell: 4,
            noise_variance: 1.0,
            snr_grid_db: (0..=10).map(|i| 5.0 * i as f64).collect(),
            schemes: vec![SchemeId::Traditional, SchemeId::IaPerfect, SchemeId::IaRi],
            trials: 50,
            master_seed: 1,
            params: SchemeParams::default(),
            csv_path: None,
            plot_path: None,
        };
        let geometric = |n: usize, k: usize, trials: usize| {
            let mut params = SchemeParams::default();
            params.ia_preselect = Some(2);
            ExperimentConfig {
                model: ChannelModel::Heterogeneous {
                    geometry: Geometry::default(),
                    cir_radius_fraction: 0.5,
                },
                n_subcarriers: n,
                users_per_cell: k,
                noise_variance: 1.0,
                snr_grid_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
                schemes: vec![
                    SchemeId::Traditional,
                    SchemeId::IaRi,
                    SchemeId::Hybrid,
                    SchemeId::Ofp,
                ],
                trials,
                master_seed: 1,
                params,
                csv_path: None,
                plot_path: None,
            }
        };
        match self {
            Profile::StrongInterference => symmetric(1.0),
            Profile::WeakInterference => symmetric(0.1),
            Profile::Heterogeneous => geometric(64, 6, 20),
            Profile::HeterogeneousLarge => geometric(256, 12, 20),
        }
    }
}

impl ExperimentConfig {
    pub fn dims(&self) -> SystemDims {
        let mut d = SystemDims::new(self.n_subcarriers, self.users_per_cell);
        d.noise_variance = self.noise_variance;
        d
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be nonempty and finite".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        match &self.model {
            ChannelModel::Symmetric { cross_gain } => {
                if !(*cross_gain >= 0.0) || !cross_gain.is_finite() {
                    return Err(Error::Config(format!(
                        "cross gain must be >= 0, got {cross_gain}"
                    )));
                }
                if self.schemes.contains(&SchemeId::Hybrid) {
                    return Err(Error::Config("hybrid needs the heterogeneous model".into()));
                }
            }
            ChannelModel::Heterogeneous {
                geometry,
                cir_radius_fraction,
            } => {
                geometry.validate()?;
                if !(0.0..=1.0).contains(cir_radius_fraction) {
                    return Err(Error::Config(format!(
                        "CIR radius fraction must lie in [0, 1], got {cir_radius_fraction}"
                    )));
                }
                if self.schemes.contains(&SchemeId::Hybrid) && self.n_subcarriers < 6 {
                    return Err(Error::Config("hybrid needs at least 6 subcarriers".into()));
                }
            }
        }
        Ok(())
    }
}

/// Per-BS budget for a nominal SNR.
///
/// Symmetric model: the SNR is the mean direct-link SNR with the budget
/// spread evenly, `P = N sigma^2 10^(snr/10)`. Heterogeneous model: the SNR
/// is taken at the cell edge, `P = N sigma^2 10^(snr/10) R^alpha`.
pub fn snr_to_power(snr_db: f64, model: &ChannelModel, dims: &SystemDims) -> [f64; N_CELLS] {
    let base = dims.n_subcarriers as f64 * dims.noise_variance * 10f64.powf(snr_db / 10.0);
    let p = match model {
        ChannelModel::Symmetric { .. } => base,
        ChannelModel::Heterogeneous { geometry, .. } => {
            base * geometry.cell_radius.powf(geometry.pathloss_exponent)
        }
    };
    [p; N_CELLS]
}

/// One scheme run of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSample {
    pub trial: usize,
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub sum_rate: f64,
    pub dual_gap: f64,
    pub ia_leakage: f64,
    pub gap_flag: bool,
}

/// A scheme run that returned an error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    pub snr_db: f64,
    pub trials: usize,
    pub mean_sum_rate: f64,
    pub std_error: f64,
    pub mean_dual_gap: f64,
    pub mean_ia_leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, scheme: SchemeId, snr_db: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme.as_str() && r.snr_db == snr_db)
    }

    /// Rows of one scheme in SNR order.
    pub fn series(&self, scheme: SchemeId) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub samples: Vec<TrialSample>,
    pub failures: Vec<TrialFailure>,
}

/// Channels and layout of one trial.
pub fn draw_trial(
    config: &ExperimentConfig,
    trial: usize,
) -> Result<(ChannelTensor, Option<UserLayout>)> {
    let mut rng = substream(config.master_seed, trial as u64);
    let dims = config.dims();
    match &config.model {
        ChannelModel::Symmetric { cross_gain } => Ok((
            gen_symmetric_channels_with(&dims, *cross_gain, &mut rng)?,
            None,
        )),
        ChannelModel::Heterogeneous {
            geometry,
            cir_radius_fraction,
        } => {
            let (t, layout) = gen_heterogeneous_channels_with(&dims, geometry, &mut rng)?;
            Ok((t, Some(layout.with_labels(*cir_radius_fraction))))
        }
    }
}

fn sample(trial: usize, snr_db: f64, r: &SchemeResult) -> TrialSample {
    TrialSample {
        trial,
        scheme: r.scheme,
        snr_db,
        sum_rate: r.sum_rate,
        dual_gap: r.dual_gap,
        ia_leakage: r.diagnostics.mean_ia_leakage,
        gap_flag: r.diagnostics.gap_flag,
    }
}

/// Runs every selected scheme over the SNR grid for one trial. The grid is
/// walked upwards and each run is warm-started from the previous budget's
/// allocation, which stays feasible under the larger budget.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> (Vec<TrialSample>, Vec<TrialFailure>) {
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let (tensor, layout) = match draw_trial(config, trial) {
        Ok(x) => x,
        Err(e) => {
            for &scheme in &config.schemes {
                for &snr_db in &config.snr_grid_db {
                    failures.push(TrialFailure {
                        trial,
                        scheme,
                        snr_db,
                        message: e.to_string(),
                    });
                }
            }
            return (samples, failures);
        }
    };
    let weights = Weights::uniform(config.users_per_cell);
    let dims = config.dims();
    let mut grid = config.snr_grid_db.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut warm: BTreeMap<SchemeId, SchemeResult> = BTreeMap::new();
    let wants_ia =
        config.schemes.contains(&SchemeId::IaPerfect) || config.schemes.contains(&SchemeId::IaRi);
    for &snr_db in &grid {
        let budget = snr_to_power(snr_db, &config.model, &dims);
        // Both IA variants share one set of precoders per budget.
        let cache: Option<Result<IaCache>> = wants_ia.then(|| {
            let pairs: Vec<usize> = (0..config.n_subcarriers / 2).collect();
            let cands = ia_candidates(&tensor, &config.params);
            prepare_ia_cache(&tensor, &pairs, &cands, &budget, &config.params.ia)
        });
        for &scheme in &config.schemes {
            let prev = warm.get(&scheme);
            let outcome = match scheme {
                SchemeId::Traditional => {
                    run_traditional(&tensor, &weights, &budget, &config.params, prev)
                }
                SchemeId::IaPerfect | SchemeId::IaRi => {
                    let mode = if scheme == SchemeId::IaPerfect {
                        PairMode::Perfect
                    } else {
                        PairMode::WithResidual
                    };
                    match cache.as_ref().expect("cache built for IA schemes") {
                        Ok(c) => {
                            run_ia_cached(&tensor, &weights, &budget, mode, c, &config.params, prev)
                        }
                        Err(e) => Err(Error::InvalidArgument(e.to_string())),
                    }
                }
                SchemeId::Hybrid => match &layout {
                    Some(l) => run_hybrid(&tensor, l, &weights, &budget, &config.params, prev),
                    None => Err(Error::Config("hybrid needs a user layout".into())),
                },
                SchemeId::Ofp => run_ofp(&tensor, &weights, &budget),
            };
            match outcome {
                Ok(r) => {
                    if r.diagnostics.gap_flag {
                        log::warn!(
                            "trial {trial}, {scheme} at {snr_db} dB: duality gap {:.3} above threshold",
                            r.dual_gap
                        );
                    }
                    samples.push(sample(trial, snr_db, &r));
                    warm.insert(scheme, r);
                }
                Err(e) => {
                    log::warn!("trial {trial}, {scheme} at {snr_db} dB failed: {e}");
                    failures.push(TrialFailure {
                        trial,
                        scheme,
                        snr_db,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    (samples, failures)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation over `sqrt(n)`; zero for a single sample.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Aggregates samples into rows sorted by scheme name, then SNR. Samples
/// are reduced in trial order.
pub fn aggregate(samples: &[TrialSample]) -> ResultTable {
    let mut groups: BTreeMap<(&'static str, u64), Vec<&TrialSample>> = BTreeMap::new();
    for s in samples {
        // Order-preserving key for finite floats.
        let bits = s.snr_db.to_bits();
        let key = if s.snr_db.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        };
        groups.entry((s.scheme.as_str(), key)).or_default().push(s);
    }
    let rows = groups
        .into_iter()
        .map(|((scheme, _), mut group)| {
            group.sort_by_key(|s| s.trial);
            let rates: Vec<f64> = group.iter().map(|s| s.sum_rate).collect();
            let gaps: Vec<f64> = group.iter().map(|s| s.dual_gap).collect();
            let leaks: Vec<f64> = group.iter().map(|s| s.ia_leakage).collect();
            ResultRow {
                scheme: scheme.to_string(),
                snr_db: group[0].snr_db,
                trials: group.len(),
                mean_sum_rate: mean(&rates),
                std_error: std_error(&rates),
                mean_dual_gap: mean(&gaps),
                mean_ia_leakage: mean(&leaks),
            }
        })
        .collect();
    ResultTable { rows }
}

/// Runs all trials, in parallel, and aggregates them. The result depends
/// only on the configuration.
pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let per_trial: Vec<(Vec<TrialSample>, Vec<TrialFailure>)> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (s, f) in per_trial {
        samples.extend(s);
        failures.extend(f);
    }
    let table = aggregate(&samples);
    Ok(ExperimentOutput {
        table,
        samples,
        failures,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    Ok(run_experiment_detailed(config)?.table)
}

/// Formats `x` with nine significant digits, in plain decimal notation when
/// the magnitude allows.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const CSV_HEADER: &str =
    "scheme,snr_db,trials,mean_sum_rate,std_error,mean_dual_gap,mean_ia_leakage";

pub fn csv_string(table: &ResultTable) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scheme,
            fmt_sig9(r.snr_db),
            r.trials,
            fmt_sig9(r.mean_sum_rate),
            fmt_sig9(r.std_error),
            fmt_sig9(r.mean_dual_gap),
            fmt_sig9(r.mean_ia_leakage)
        );
    }
    Ok(out)
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let s = csv_string(table)?;
    std::fs::write(path, s)?;
    Ok(())
}

/// Parses text written by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
    };
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Config(format!("expected 7 fields: '{line}'")));
        }
        rows.push(ResultRow {
            scheme: f[0].to_string(),
            snr_db: num(f[1])?,
            trials: f[2]
                .parse()
                .map_err(|e| Error::Config(format!("bad trial count '{}': {e}", f[2])))?,
            mean_sum_rate: num(f[3])?,
            std_error: num(f[4])?,
            mean_dual_gap: num(f[5])?,
            mean_ia_leakage: num(f[6])?,
        });
    }
    Ok(ResultTable { rows })
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.0 {
        2.0
    } else if r < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// SVG line chart of mean sum rate against SNR, one line per scheme, with
/// one-standard-error bars.
pub fn plot_svg(table: &ResultTable) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let (w, h) = (640.0, 440.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let finite = table.rows.iter().filter(|r| r.mean_sum_rate.is_finite());
    let xmin = finite
        .clone()
        .map(|r| r.snr_db)
        .fold(f64::INFINITY, f64::min);
    let xmax = finite
        .clone()
        .map(|r| r.snr_db)
        .fold(f64::NEG_INFINITY, f64::max);
    let ymax = finite
        .clone()
        .map(|r| r.mean_sum_rate + r.std_error)
        .fold(0.0, f64::max);
    let (xmin, xmax) = if xmin < xmax {
        (xmin, xmax)
    } else {
        (xmin - 1.0, xmin + 1.0)
    };
    let ystep = nice_step(ymax.max(1e-9));
    let ymax = (ymax / ystep).ceil().max(1.0) * ystep;
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| top + ph - y / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let xstep = nice_step(xmax - xmin);
    let mut x = (xmin / xstep).ceil() * xstep;
    while x <= xmax + 1e-9 {
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{top}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            top + ph,
            top + ph + 16.0,
            fmt_sig9(x)
        );
        x += xstep;
    }
    let mut y = 0.0;
    while y <= ymax + 1e-9 {
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            py + 4.0,
            fmt_sig9((y * 1e6).round() / 1e6)
        );
        y += ystep;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">sum rate (bps/Hz)</text>"#,
        top + ph / 2.0
    );

    let mut schemes: Vec<&str> = table.rows.iter().map(|r| r.scheme.as_str()).collect();
    schemes.dedup();
    for (i, name) in schemes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<&ResultRow> = table
            .rows
            .iter()
            .filter(|r| r.scheme == *name && r.mean_sum_rate.is_finite())
            .collect();
        let path: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.1},{:.1}", sx(r.snr_db), sy(r.mean_sum_rate)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for r in &pts {
            let (px, py) = (sx(r.snr_db), sy(r.mean_sum_rate));
            let (lo, hi) = (
                sy((r.mean_sum_rate - r.std_error).max(0.0)),
                sy(r.mean_sum_rate + r.std_error),
            );
            let _ = writeln!(
                s,
                r#"<line x1="{px:.1}" y1="{lo:.1}" x2="{px:.1}" y2="{hi:.1}" stroke="{color}"/><line x1="{:.1}" y1="{lo:.1}" x2="{:.1}" y2="{lo:.1}" stroke="{color}"/><line x1="{:.1}" y1="{hi:.1}" x2="{:.1}" y2="{hi:.1}" stroke="{color}"/><circle cx="{px:.1}" cy="{py:.1}" r="2.5" fill="{color}"/>"#,
                px - 3.0,
                px + 3.0,
                px - 3.0,
                px + 3.0
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(table: &ResultTable, path: &Path) -> Result<()> {
    let s = plot_svg(table)?;
    std::fs::write(path, s)?;
    Ok(())
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |e: String| Error::Config(format!("bad SNR grid '{s}': {e}"));
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<_>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad("expected start:step:stop".into()));
        };
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + step * i as f64).collect())
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect()
    }
}

pub fn parse_schemes(s: &str) -> Result<Vec<SchemeId>> {
    let mut out: Vec<SchemeId> = Vec::new();
    for name in s.split(',').filter(|p| !p.trim().is_empty()) {
        let id: SchemeId = name.parse()?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridSpec {
    Text(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum SchemeSpec {
    Text(String),
    List(Vec<String>),
}

/// Flat key-value settings, as read from a TOML file or gathered from the
/// command line. Unset keys keep the base configuration's value.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub profile: Option<String>,
    pub model: Option<String>,
    pub cross_gain: Option<f64>,
    pub cell_radius: Option<f64>,
    pub inter_site_distance: Option<f64>,
    pub pathloss_exponent: Option<f64>,
    pub cir_radius_fraction: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub noise_variance: Option<f64>,
    pub snr: Option<GridSpec>,
    pub schemes: Option<SchemeSpec>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub ia_max_iters: Option<usize>,
    pub ia_tol: Option<f64>,
    pub ia_restarts: Option<usize>,
    pub ia_design: Option<String>,
    pub ia_preselect: Option<usize>,
    pub dual_tol: Option<f64>,
    pub dual_max_iters: Option<usize>,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Keys set in `other` win.
    pub fn merged(self, other: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            profile,
            model,
            cross_gain,
            cell_radius,
            inter_site_distance,
            pathloss_exponent,
            cir_radius_fraction,
            n,
            k,
            noise_variance,
            snr,
            schemes,
            trials,
            seed,
            ia_max_iters,
            ia_tol,
            ia_restarts,
            ia_design,
            ia_preselect,
            dual_tol,
            dual_max_iters,
            out,
            plot
        )
    }

    /// Builds a configuration: profile defaults first, then every set key.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.profile {
            Some(p) => Profile::parse(p)?.config(),
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.model {
            c.model = match m.as_str() {
                "symmetric" => match c.model {
                    ChannelModel::Symmetric { .. } => c.model,
                    _ => ChannelModel::Symmetric { cross_gain: 1.0 },
                },
                "heterogeneous" => match c.model {
                    ChannelModel::Heterogeneous { .. } => c.model,
                    _ => ChannelModel::Heterogeneous {
                        geometry: Geometry::default(),
                        cir_radius_fraction: 0.5,
                    },
                },
                other => return Err(Error::Config(format!("unknown model '{other}'"))),
            };
        }
        match &mut c.model {
            ChannelModel::Symmetric { cross_gain } => {
                if let Some(h) = self.cross_gain {
                    *cross_gain = h;
                }
                if self.cell_radius.is_some()
                    || self.inter_site_distance.is_some()
                    || self.pathloss_exponent.is_some()
                    || self.cir_radius_fraction.is_some()
                {
                    return Err(Error::Config(
                        "geometry keys need the heterogeneous model".into(),
                    ));
                }
            }
            ChannelModel::Heterogeneous {
                geometry,
                cir_radius_fraction,
            } => {
                if self.cross_gain.is_some() {
                    return Err(Error::Config("cross_gain needs the symmetric model".into()));
                }
                if let Some(r) = self.cell_radius {
                    geometry.cell_radius = r;
                }
                if let Some(d) = self.inter_site_distance {
                    geometry.inter_site_distance = d;
                }
                if let Some(a) = self.pathloss_exponent {
                    geometry.pathloss_exponent = a;
                }
                if let Some(rho) = self.cir_radius_fraction {
                    *cir_radius_fraction = rho;
                }
            }
        }
        if let Some(n) = self.n {
            c.n_subcarriers = n;
        }
        if let Some(k) = self.k {
            c.users_per_cell = k;
        }
        if let Some(s) = self.noise_variance {
            c.noise_variance = s;
        }
        match &self.snr {
            Some(GridSpec::Text(t)) => c.snr_grid_db = parse_snr_grid(t)?,
            Some(GridSpec::List(l)) => c.snr_grid_db = l.clone(),
            None => {}
        }
        match &self.schemes {
            Some(SchemeSpec::Text(t)) => c.schemes = parse_schemes(t)?,
            Some(SchemeSpec::List(l)) => c.schemes = parse_schemes(&l.join(","))?,
            None => {}
        }
        if let Some(t) = self.trials {
            c.trials = t;
        }
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(v) = self.ia_max_iters {
            c.params.ia.max_iters = v;
        }
        if let Some(v) = self.ia_tol {
            c.params.ia.leakage_tol = v;
        }
        if let Some(v) = self.ia_restarts {
            c.params.ia.restarts = v;
        }
        if let Some(d) = &self.ia_design {
            c.params.ia.design = match d.as_str() {
                "max_sinr" => IaDesign::MaxSinr,
                "leakage_min" => IaDesign::LeakageMin,
                other => return Err(Error::Config(format!("unknown IA design '{other}'"))),
            };
        }
        if let Some(v) = self.ia_preselect {
            c.params.ia_preselect = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = self.dual_tol {
            c.params.dual.tol = v;
        }
        if let Some(v) = self.dual_max_iters {
            c.params.dual.max_iters = v;
        }
        if let Some(p) = &self.out {
            c.csv_path = Some(p.clone());
            c.plot_path = Some(p.with_extension("svg"));
        }
        if let Some(p) = &self.plot {
            c.plot_path = Some(p.clone());
        }
        c.validate()?;
        Ok(c)
    }
}
