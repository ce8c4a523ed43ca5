//! Batch command-line surface: synthetic-data generation, inference,
//! forecasting and chain summaries, driven by a JSON config document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sir_cme::config::RunConfig;
use sir_cme::inference::{self, Chain, InitialCondition, Posterior};
use sir_cme::moments::{self, MomentState};
use sir_cme::predict;
use sir_cme::reaction;
use sir_cme::io;
use sir_cme::rng::substream_seed;

#[derive(Parser)]
#[command(name = "sir-cme", version, about = "Stochastic SIR epidemic inference and forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic epidemic and write its sampled observations
    Simulate(CommonArgs),
    /// Run MCMC inference on an observation series
    Infer(CommonArgs),
    /// Posterior-predictive bands and box-plot data from a saved chain
    Predict(PredictArgs),
    /// Summaries (MAP, HPD intervals, histograms) of a saved chain
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Chain CSV produced by `infer`
    #[arg(long)]
    chain: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Chain CSV produced by `infer`
    #[arg(long)]
    chain: PathBuf,
    /// Output directory (defaults to the chain file's directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probability mass of the HPD intervals
    #[arg(long, default_value_t = 0.95)]
    hpd_prob: f64,
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Infer(args) => cmd_infer(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Summarize(args) => cmd_summarize(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.model.seed = seed;
        config.mcmc.seed = seed;
        if let Some(p) = &mut config.predict {
            p.seed = Some(seed);
        }
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn write_resolved(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output)
        .with_context(|| format!("creating {}", config.output.display()))?;
    io::write_resolved_config(&config.output.join("resolved_config.json"), &config.resolved())?;
    Ok(())
}

fn cmd_simulate(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    write_resolved(&config)?;
    let params = config.sir_parameters();
    let network = reaction::build_sir(&params);
    let init = reaction::sir_initial_state(&params, config.model.initial_infectives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.model.seed);
    let trajectory = reaction::simulate_trajectory(&network, &init, config.model.t_max, &mut rng)?;
    let series = reaction::sample_at(&trajectory, &config.observation_times(), 1)?;

    io::write_trajectory_csv(&config.output.join("trajectory.csv"), &trajectory)?;
    io::write_observations_csv(&config.output.join("observations.csv"), &series)?;

    // Moment curves of the generative parameters, for plotting against data.
    let y2 = config.model.initial_infectives as f64 / params.omega;
    let moment_series = moments::integrate_moments(
        &params,
        &MomentState::deterministic([1.0 - y2, y2, 0.0], 0.0),
        &config.observation_times(),
        moments::DEFAULT_RTOL,
        moments::DEFAULT_ATOL,
    )?;
    io::write_moments_csv(&config.output.join("moments.csv"), &moment_series)?;

    println!(
        "simulate: {} events, {} observations -> {}",
        trajectory.len() - 1,
        series.len(),
        config.output.display()
    );
    Ok(())
}

fn load_observations(config: &RunConfig) -> Result<reaction::ObservationSeries> {
    let data = config
        .data
        .as_ref()
        .context("config has no data block; `infer` and `predict` need one")?;
    let series = io::read_observations_csv(&data.path)?;
    let series = if data.trim > 0 {
        series
            .trim_tail(data.trim)
            .with_context(|| format!("trim = {} leaves no observations", data.trim))?
    } else {
        series
    };
    Ok(series)
}

fn cmd_infer(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let series = load_observations(&config)?;
    if let sir_cme::inference::ParamPrior::Fixed { value } = config.priors.omega {
        if value < series.max_count() as f64 {
            bail!(
                "fixed omega = {value} is below the largest observed count {}",
                series.max_count()
            );
        }
    }
    write_resolved(&config)?;

    let posterior =
        Posterior::new(&series, &config.priors, InitialCondition::FromFirstObservation);
    let settings = inference::McmcSettings {
        iterations: config.mcmc.iterations,
        burn_in: config.mcmc.burn_in,
        thinning: config.mcmc.thinning,
        seed: config.mcmc.seed,
        init_a: config.mcmc.init_a,
        init_b: config.mcmc.init_b,
    };
    let chain = inference::run_mcmc(&posterior, &settings)?;
    io::write_chain_csv(&config.output.join("chain.csv"), &chain)?;
    write_chain_summary(&chain, &config.priors, config.mcmc.hpd_prob, &config.output)?;

    let summary = inference::summarize_chain(&chain, config.mcmc.hpd_prob)?;
    println!(
        "infer: {} retained samples, acceptance {:.3}, MAP (b0, b1, omega) = ({:.4}, {:.4}, {:.2}), R0 MAP {:.3}",
        chain.len(),
        chain.acceptance_rate().unwrap_or(f64::NAN),
        summary.map.b0,
        summary.map.b1,
        summary.map.omega,
        summary.r0_map,
    );
    Ok(())
}

fn write_chain_summary(
    chain: &Chain,
    priors: &sir_cme::inference::PriorSpec,
    hpd_prob: f64,
    out: &Path,
) -> Result<()> {
    let summary = inference::summarize_chain(chain, hpd_prob)?;
    io::write_summary_json(&out.join("summary.json"), &summary)?;
    let bins = 60;
    let b0: Vec<f64> = chain.samples.iter().map(|(p, _)| p.b0).collect();
    let b1: Vec<f64> = chain.samples.iter().map(|(p, _)| p.b1).collect();
    io::write_histogram_csv(&out.join("hist_b0.csv"), &b0, bins)?;
    io::write_histogram_csv(&out.join("hist_b1.csv"), &b1, bins)?;
    if !priors.omega.is_fixed() {
        let omega: Vec<f64> = chain.samples.iter().map(|(p, _)| p.omega).collect();
        io::write_histogram_csv(&out.join("hist_omega.csv"), &omega, bins)?;
    }
    io::write_histogram_csv(&out.join("hist_r0.csv"), &inference::r0_samples(chain), bins)?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let predict_config = config
        .predict
        .clone()
        .context("config has no predict block; `predict` needs one")?;
    let series = load_observations(&config)?;
    let last = series.last_time();
    if predict_config.future_times.first().is_some_and(|&t| t <= last) {
        bail!("future times must lie strictly after the last observation at {last}");
    }
    write_resolved(&config)?;

    let chain = io::read_chain_csv(&args.chain)?;
    let seed = predict_config.seed.unwrap_or_else(|| substream_seed(config.mcmc.seed, 1));
    let draws = predict::predictive_samples(
        &chain,
        &series,
        &predict_config.future_times,
        InitialCondition::FromFirstObservation,
        seed,
    )?;
    let band = predict::quantile_bands(&draws, &predict_config.probs)?;
    io::write_band_csv(&config.output.join("bands.csv"), &band)?;
    io::write_box_stats_csv(&config.output.join("box_stats.csv"), &predict::box_stats(&draws))?;
    println!(
        "predict: {} rows over {} future times ({} dropped) -> {}",
        draws.draws.len(),
        draws.future_times.len(),
        draws.dropped,
        config.output.display()
    );
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let chain = io::read_chain_csv(&args.chain)?;
    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => args
            .chain
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    // Histograms for every parameter; a fixed parameter just produces a
    // single-bin histogram.
    let priors = sir_cme::inference::PriorSpec {
        b0: sir_cme::inference::ParamPrior::Gamma { shape: 1.0, scale: 1.0 },
        b1: sir_cme::inference::ParamPrior::Gamma { shape: 1.0, scale: 1.0 },
        omega: sir_cme::inference::ParamPrior::Gamma { shape: 1.0, scale: 1.0 },
    };
    write_chain_summary(&chain, &priors, args.hpd_prob, &out)?;
    let summary = inference::summarize_chain(&chain, args.hpd_prob)?;
    println!(
        "summarize: {} samples, R0 mean {:.3}, HPD ({:.3}, {:.3}) -> {}",
        chain.len(),
        summary.r0_mean,
        summary.hpd_r0.0,
        summary.hpd_r0.1,
        out.display()
    );
    Ok(())
}
