use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ofdma_ia::harness::{
    csv_string, emit_csv, emit_plot, run_experiment_detailed, GridSpec, SchemeSpec, Settings,
};

/// Monte Carlo sum-rate sweeps for three-cell OFDMA downlink allocation
/// schemes.
///
/// Settings come from the profile, then the config file, then the flags.
#[derive(Parser, Debug)]
#[command(name = "ofdma-ia", version)]
struct Cli {
    /// Flat TOML file with the same keys as the long flags (snake_case).
    #[arg(long)]
    config: Option<PathBuf>,
    /// strong-interference, weak-interference, heterogeneous or
    /// heterogeneous-large.
    #[arg(long)]
    profile: Option<String>,
    /// symmetric or heterogeneous.
    #[arg(long)]
    model: Option<String>,
    /// Cross-link variance of the symmetric model.
    #[arg(long = "h")]
    cross_gain: Option<f64>,
    #[arg(long)]
    cell_radius: Option<f64>,
    #[arg(long)]
    inter_site_distance: Option<f64>,
    #[arg(long)]
    pathloss_exponent: Option<f64>,
    /// Radius of the cell-intersection region as a fraction of the cell radius.
    #[arg(long)]
    rho: Option<f64>,
    /// Number of subcarriers.
    #[arg(long)]
    n: Option<usize>,
    /// Users per cell.
    #[arg(long)]
    k: Option<usize>,
    /// SNR grid in dB, `start:step:stop` or a comma-separated list.
    #[arg(long)]
    snr: Option<String>,
    /// Comma-separated subset of traditional, ia_perfect, ia_ri, hybrid, ofp.
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ia_max_iters: Option<usize>,
    #[arg(long)]
    ia_restarts: Option<usize>,
    /// max_sinr or leakage_min.
    #[arg(long)]
    ia_design: Option<String>,
    /// Keep only this many users per cell for IA triples (0 disables).
    #[arg(long)]
    ia_preselect: Option<usize>,
    #[arg(long)]
    dual_tol: Option<f64>,
    /// CSV output; a plot is written next to it with an .svg extension.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot output path.
    #[arg(long)]
    plot: Option<PathBuf>,
}

impl Cli {
    fn settings(&self) -> Settings {
        Settings {
            profile: self.profile.clone(),
            model: self.model.clone(),
            cross_gain: self.cross_gain,
            cell_radius: self.cell_radius,
            inter_site_distance: self.inter_site_distance,
            pathloss_exponent: self.pathloss_exponent,
            cir_radius_fraction: self.rho,
            n: self.n,
            k: self.k,
            noise_variance: None,
            snr: self.snr.clone().map(GridSpec::Text),
            schemes: self.schemes.clone().map(SchemeSpec::Text),
            trials: self.trials,
            seed: self.seed,
            ia_max_iters: self.ia_max_iters,
            ia_tol: None,
            ia_restarts: self.ia_restarts,
            ia_design: self.ia_design.clone(),
            ia_preselect: self.ia_preselect,
            dual_tol: self.dual_tol,
            dual_max_iters: None,
            out: self.out.clone(),
            plot: self.plot.clone(),
        }
    }
}

fn run(cli: Cli) -> ofdma_ia::Result<()> {
    let file = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let config = file.merged(cli.settings()).to_config()?;
    log::info!(
        "{} model, N={}, K={}, {} trials, {} SNR points, schemes {:?}",
        config.model.name(),
        config.n_subcarriers,
        config.users_per_cell,
        config.trials,
        config.snr_grid_db.len(),
        config
            .schemes
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
    );
    let started = std::time::Instant::now();
    let out = run_experiment_detailed(&config)?;
    log::info!("finished in {:.1}s", started.elapsed().as_secs_f64());
    for f in &out.failures {
        log::error!(
            "trial {} {} at {} dB: {}",
            f.trial,
            f.scheme,
            f.snr_db,
            f.message
        );
    }
    match &config.csv_path {
        Some(p) => {
            emit_csv(&out.table, p)?;
            log::info!("wrote {}", p.display());
        }
        None => print!("{}", csv_string(&out.table)?),
    }
    if let Some(p) = &config.plot_path {
        emit_plot(&out.table, p)?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
