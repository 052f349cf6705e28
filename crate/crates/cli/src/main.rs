use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use hbtlab::bunching::{compare, predict_smeared_peak, squared_envelope_area, JitterCurve, PredictedPeak};
use hbtlab::config::ExperimentConfig;
use hbtlab::correlator::{cross_correlate_centered, normalize, CorrelationHistogram};
use hbtlab::detection::{read_tags, TagStream};
use hbtlab::optics::Interferogram;
use hbtlab::pipeline::{analytic_prediction, calibrate_jitter, measure_envelope, run_pipeline, write_curve};
use hbtlab::{multiphoton, selftest, Error};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.

CSV files (one header line; lines starting with '#' carry metadata):
  histogram.csv, calibration_histogram.csv   delay_ps,counts
  g2.csv                                     delay_ps,g2,sigma
  prediction.csv                             delay_ps,excess,g2
  jitter.csv                                 delay_ps,value   (unit peak)
  envelope.csv                               delay_ps,g1      (unit peak)
  interferogram.csv                          position_mm,counts
Delays are t_B - t_A in ps, relative to the delay-line centre.";

#[derive(Parser)]
#[command(name = "hbtlab", version, about = "Simulated intensity-correlation laboratory", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults to the desk experiment.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides master_seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides run.segments.
    #[arg(long, value_name = "K")]
    segments: Option<usize>,
    /// Worker threads (advisory).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        if let Some(n) = self.threads {
            // a pool can only be installed once per process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::desk(),
        };
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(k) = self.segments {
            c.run.segments = k;
        }
        c.validate()?;
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment: thermal source, beam splitter, detectors, correlator,
    /// jitter calibration, Michelson scan, prediction and comparison.
    Simulate(Common),
    /// Jitter calibration with the tightly correlated pair source.
    Pairsource(Common),
    /// Michelson scan and |g1| envelope extraction.
    Interferogram {
        #[command(flatten)]
        common: Common,
        /// Also write interferogram_display.csv averaged over N windows.
        #[arg(long, value_name = "N")]
        display_average: Option<usize>,
    },
    /// Cross-correlates two channels of recorded tags.
    Correlate {
        /// Tag file with channel A (and B, if --b is omitted).
        #[arg(long)]
        a: PathBuf,
        /// Tag file with channel B.
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        channel_a: u8,
        #[arg(long, default_value_t = 1)]
        channel_b: u8,
        #[arg(long, default_value_t = 82.2)]
        bin_ps: f64,
        #[arg(long, default_value_t = 50.0)]
        max_lag_ns: f64,
        /// Centre of the lag window in ps, rounded to the nearest tick.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        center_ps: f64,
        /// Plateau for g2.csv, as LO,HI in ns of |delay|.
        #[arg(long, value_name = "LO,HI", value_parser = parse_pair)]
        plateau_ns: Option<(f64, f64)>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Smeared-peak prediction from a squared-envelope area and a jitter curve.
    Predict {
        /// Calibration histogram CSV; background plateau is subtracted.
        #[arg(long, conflicts_with = "jitter_area_ps")]
        jitter_histogram: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        jitter_plateau_ns: f64,
        /// Area of a Gaussian jitter curve instead of a measured one.
        #[arg(long)]
        jitter_area_ps: Option<f64>,
        /// Area of |g1|² in ps.
        #[arg(long, conflicts_with = "interferogram")]
        g1sq_area_ps: Option<f64>,
        /// Interferogram CSV to extract |g1| from.
        #[arg(long)]
        interferogram: Option<PathBuf>,
        #[arg(long, default_value_t = 5000.0)]
        background_rate: f64,
        #[arg(long, default_value_t = 2.0)]
        window_ms: f64,
        #[arg(long, default_value_t = 810.0)]
        wavelength_nm: f64,
        #[arg(long, default_value_t = 2)]
        window_fringes: usize,
        /// Shift of the peak centre in ps (e.g. the sub-tick delay residual).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        shift_ps: f64,
        #[arg(long, default_value_t = 82.2)]
        bin_ps: f64,
        /// Plateau counts per bin for the significance estimate.
        #[arg(long)]
        plateau_mean: Option<f64>,
        #[arg(long, default_value_t = 700.0)]
        peak_half_width_ps: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compares a measured histogram with a prediction.
    Compare {
        #[arg(long)]
        histogram: PathBuf,
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long, value_name = "LO,HI", value_parser = parse_pair, default_value = "5,20")]
        plateau_ns: (f64, f64),
        #[arg(long, default_value_t = 700.0)]
        peak_half_width_ps: f64,
    },
    /// Prints configurations and photon-number reports.
    Report {
        /// Print the default (desk) configuration as TOML.
        #[arg(long)]
        defaults: bool,
        /// Print the laboratory-parameter configuration as TOML.
        #[arg(long)]
        laboratory: bool,
        /// Photon-number and polarization report for this pump parameter |η|.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Runs the built-in verification checks.
    Selftest,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let a: f64 = a.trim().parse().map_err(|_| "bad LO")?;
    let b: f64 = b.trim().parse().map_err(|_| "bad HI")?;
    Ok((a, b))
}

fn channel(path: &Path, ch: u8) -> Result<TagStream, Error> {
    Ok(read_tags(path)?.channel(ch))
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Simulate(common) => {
            let c = common.load()?;
            let out = run_pipeline(&c, &common.out)?;
            print!(
                "{}",
                std::fs::read_to_string(common.out.join("report.txt")).map_err(|e| Error::io(&common.out, e))?
            );
            eprintln!("wrote {} files to {}", out.files.len(), common.out.display());
        }
        Command::Pairsource(common) => {
            let c = common.load()?;
            let (hist, jitter) = calibrate_jitter(&c)?;
            hist.write_csv(&common.out.join("calibration_histogram.csv"))?;
            write_curve(&common.out.join("jitter.csv"), "delay_ps,value", &jitter.delays_ps, &jitter.values)?;
            println!("coincidences = {}", hist.total());
            println!("jitter_area_ps = {:.3}", jitter.area_ps);
        }
        Command::Interferogram { common, display_average } => {
            let c = common.load()?;
            let (ifg, env, area) = measure_envelope(&c)?;
            ifg.write_csv(&common.out.join("interferogram.csv"))?;
            write_curve(&common.out.join("envelope.csv"), "delay_ps,g1", &env.delays_ps, &env.values)?;
            if let Some(n) = display_average.filter(|&n| n > 1) {
                let (x, y): (Vec<f64>, Vec<f64>) = ifg
                    .positions_mm
                    .chunks(n)
                    .zip(ifg.counts.chunks(n))
                    .map(|(p, k)| {
                        (p.iter().sum::<f64>() / p.len() as f64, k.iter().sum::<u64>() as f64 / k.len() as f64)
                    })
                    .unzip();
                write_curve(&common.out.join("interferogram_display.csv"), "position_mm,mean_counts", &x, &y)?;
            }
            println!("windows = {}", ifg.len());
            println!("vmax_raw = {:.4}", env.vmax_raw);
            println!("clipped_windows = {}", env.clipped_windows);
            println!("fwhm_ps = {:.4}", env.fwhm_ps()?);
            println!("g1_squared_area_ps = {area:.4}");
        }
        Command::Correlate { a, b, channel_a, channel_b, bin_ps, max_lag_ns, center_ps, plateau_ns, out } => {
            let ta = channel(&a, channel_a)?;
            let tb = channel(b.as_deref().unwrap_or(&a), channel_b)?;
            let tick_ps = ta.resolution_fs as f64 * 1e-3;
            let center = (center_ps / tick_ps).round() * tick_ps;
            let hist = cross_correlate_centered(&ta, &tb, bin_ps, max_lag_ns * 1e3, center)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            hist.write_csv(&out.join("histogram.csv"))?;
            println!("center_ps = {center:.3}");
            println!("center_residual_ps = {:.3}", center_ps - center);
            println!("coincidences = {}", hist.total());
            println!("rate_a = {:.6e}", hist.rate_a);
            println!("rate_b = {:.6e}", hist.rate_b);
            println!("accidental_level = {:.6e}", hist.accidental_level());
            if let Some((lo, hi)) = plateau_ns {
                let g2 = normalize(&hist, lo * 1e3, hi * 1e3)?;
                g2.write_csv(&out.join("g2.csv"))?;
                println!("plateau_mean = {:.6e}", g2.plateau_mean);
            }
        }
        Command::Predict {
            jitter_histogram,
            jitter_plateau_ns,
            jitter_area_ps,
            g1sq_area_ps,
            interferogram,
            background_rate,
            window_ms,
            wavelength_nm,
            window_fringes,
            shift_ps,
            bin_ps,
            plateau_mean,
            peak_half_width_ps,
            out,
        } => {
            let g1sq = match (g1sq_area_ps, interferogram) {
                (Some(a), _) => a,
                (None, Some(p)) => {
                    let ifg = Interferogram::read_csv(&p)?;
                    let env = hbtlab::bunching::extract_envelope(
                        &ifg,
                        background_rate,
                        window_ms * 1e-3,
                        wavelength_nm,
                        window_fringes,
                    )?;
                    squared_envelope_area(&env)?
                }
                (None, None) => {
                    return Err(Error::Config("one of --g1sq-area-ps or --interferogram is required".into()))
                }
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let prediction = match (jitter_histogram, jitter_area_ps) {
                (Some(p), _) => {
                    let hist = CorrelationHistogram::read_csv(&p)?;
                    let max = hist.delay_ps(hist.len() - 1);
                    let j = hbtlab::bunching::normalize_jitter(&hist, jitter_plateau_ns * 1e3, max)?;
                    predict_smeared_peak(&j, g1sq, shift_ps)?
                }
                (None, Some(area)) => {
                    let a = analytic_prediction(g1sq, area, bin_ps, plateau_mean.unwrap_or(1.0), peak_half_width_ps)?;
                    if let Some(n) = plateau_mean {
                        println!("plateau_mean = {n:.6e}");
                        println!("significance = {:.3}", a.significance);
                    }
                    if shift_ps != 0.0 {
                        let mut j =
                            JitterCurve::from_profile(a.prediction.delays_ps.clone(), a.prediction.excess.clone())?;
                        j.area_ps = area;
                        predict_smeared_peak(&j, g1sq, shift_ps)?
                    } else {
                        a.prediction
                    }
                }
                (None, None) => {
                    return Err(Error::Config("one of --jitter-histogram or --jitter-area-ps is required".into()))
                }
            };
            prediction.write_csv(&out.join("prediction.csv"))?;
            println!("g1_squared_area_ps = {g1sq:.6}");
            println!("predicted_height = {:.6e}", prediction.height);
            println!("relative_uncertainty = {:.3}", prediction.relative_uncertainty());
            if prediction.shift_exceeds_resolution {
                eprintln!("warning: shift of {shift_ps} ps exceeds one bin");
            }
        }
        Command::Compare { histogram, prediction, plateau_ns, peak_half_width_ps } => {
            let hist = CorrelationHistogram::read_csv(&histogram)?;
            let g2 = normalize(&hist, plateau_ns.0 * 1e3, plateau_ns.1 * 1e3)?;
            let pred = PredictedPeak::read_csv(&prediction)?;
            print!("{}", compare(&g2, &pred, -peak_half_width_ps, peak_half_width_ps)?.to_report());
        }
        Command::Report { defaults, laboratory, eta } => {
            if defaults {
                print!("{}", ExperimentConfig::desk().to_toml());
            }
            if laboratory {
                print!("{}", ExperimentConfig::laboratory().to_toml());
            }
            if let Some(r) = eta {
                print!("{}", multiphoton::report(Complex64::new(r, 0.0)));
            }
            if !defaults && !laboratory && eta.is_none() {
                return Err(Error::Config("nothing to report: pass --defaults, --laboratory or --eta".into()));
            }
        }
        Command::Selftest => {
            let r = selftest::selftest();
            print!("{r}");
            if !r.all_passed() {
                return Err(Error::Config("self-test failed".into()).in_stage("selftest"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
