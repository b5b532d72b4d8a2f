use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use bcjrnet::bcjr::{MaxStarMode, TerminalPolicy};
use bcjrnet::harness::{compare_gain, read_csv, write_csv, write_json, CsiRedraw, Curve, ExperimentSpec, Simulator};
use bcjrnet::neural::{gen_training_data, save_model, train, AdamConfig, Mlp, ModelMeta, TrainConfig};
use bcjrnet::receivers::{DecoderSide, DetectorOutput, ExtrinsicPolicy, ReceiverMode, Trellises};
use bcjrnet::trellis::dump_tables;
use bcjrnet::txchain::{snr_to_sigma2, ChannelModel, Interleaver};

#[derive(Parser)]
#[command(name = "bcjrnet", version, about = "Joint detection/decoding BER simulator for turbo-coded ISI channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Separate,
    Joint,
    JointNn,
}

impl From<ModeArg> for ReceiverMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Separate => ReceiverMode::Separate,
            ModeArg::Joint => ReceiverMode::Joint,
            ModeArg::JointNn => ReceiverMode::JointNn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TerminalArg {
    Uniform,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtrinsicArg {
    PriorOnly,
    PriorAndSystematic,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    PosteriorMean,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum RedrawArg {
    PerSweep,
    PerCodeword,
}

#[derive(clap::Args)]
struct ChannelArgs {
    /// Message bits per codeword.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Exponential tap decay rate.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Number of channel taps (at most 3 for the joint receivers).
    #[arg(long, default_value_t = 3)]
    channel_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep; prints CSV to stdout.
    Simulate {
        #[arg(long, value_enum, default_value = "joint")]
        mode: ModeArg,
        /// Comma-separated SNR points in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-6,-4,-2,0,2,4,6")]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        iters: usize,
        #[arg(long, default_value_t = 400)]
        min_errors: u64,
        #[arg(long, default_value_t = 200_000)]
        max_codewords: u64,
        /// Receiver-side channel tap error variance.
        #[arg(long)]
        csi_sigma2: Option<f64>,
        #[arg(long, value_enum, default_value = "per-sweep")]
        csi_redraw: RedrawArg,
        #[arg(long)]
        model_dec1: Option<PathBuf>,
        #[arg(long)]
        model_dec2: Option<PathBuf>,
        /// Use max-log instead of exact max*.
        #[arg(long)]
        max_log: bool,
        #[arg(long, value_enum, default_value = "uniform")]
        terminal: TerminalArg,
        /// Override the mode's default extrinsic rule.
        #[arg(long, value_enum)]
        extrinsic: Option<ExtrinsicArg>,
        /// Use companion-decoder soft estimates for marginalized neighbours.
        #[arg(long)]
        neighbor_priors: bool,
        /// Symbols passed from the detector to the decoder in separate mode.
        #[arg(long, value_enum, default_value = "posterior-mean")]
        detector_output: DetectorArg,
        /// Output base path; writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "BCJRNET_THREADS")]
        threads: Option<usize>,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Train the two branch-metric networks.
    Train {
        #[arg(long, default_value_t = 10_000)]
        codewords: usize,
        /// Training SNR in dB.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long)]
        csi_sigma2: Option<f64>,
        /// Hidden layer sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [64, 32])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long)]
        out_dec1: PathBuf,
        #[arg(long)]
        out_dec2: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Print the RSC, channel and joint trellis tables.
    Tables {
        #[arg(long, default_value_t = 3)]
        channel_len: usize,
    },
    /// SNR gain of curve A over curve B at a target BER, from sweep CSV files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        target_ber: f64,
    },
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

fn run(cli: Cli) -> bcjrnet::Result<()> {
    match cli.command {
        Command::Simulate {
            mode,
            snr,
            iters,
            min_errors,
            max_codewords,
            csi_sigma2,
            csi_redraw,
            model_dec1,
            model_dec2,
            max_log,
            terminal,
            extrinsic,
            neighbor_priors,
            detector_output,
            out,
            threads,
            channel,
        } => {
            let mode = ReceiverMode::from(mode);
            if mode == ReceiverMode::JointNn {
                if model_dec1.is_none() {
                    usage_error("--mode joint-nn requires --model-dec1");
                }
                if model_dec2.is_none() {
                    usage_error("--mode joint-nn requires --model-dec2");
                }
            }
            let spec = ExperimentSpec {
                snr_db_list: snr,
                mode,
                iterations: iters,
                min_error_bits: min_errors,
                max_codewords,
                master_seed: channel.seed,
                csi_sigma2,
                csi_redraw: match csi_redraw {
                    RedrawArg::PerSweep => CsiRedraw::PerSweep,
                    RedrawArg::PerCodeword => CsiRedraw::PerCodeword,
                },
                model_dec1,
                model_dec2,
                k: channel.k,
                gamma: channel.gamma,
                channel_len: channel.channel_len,
                max_star: if max_log { MaxStarMode::MaxLog } else { MaxStarMode::Exact },
                terminal: match terminal {
                    TerminalArg::Uniform => TerminalPolicy::Uniform,
                    TerminalArg::Zero => TerminalPolicy::ZeroState,
                },
                extrinsic: extrinsic.map(|e| match e {
                    ExtrinsicArg::PriorOnly => ExtrinsicPolicy::PriorOnly,
                    ExtrinsicArg::PriorAndSystematic => ExtrinsicPolicy::PriorAndSystematic,
                }),
                neighbor_priors,
                detector_output: match detector_output {
                    DetectorArg::PosteriorMean => DetectorOutput::PosteriorMean,
                    DetectorArg::Hard => DetectorOutput::HardDecision,
                },
                threads,
            };
            let records = Simulator::new(spec.clone())?.run_sweep()?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| bcjrnet::Error::InvalidInput(e.to_string()))?;
            if let Some(base) = out {
                write_csv(&records, &base.with_extension("csv"))?;
                write_json(&spec, &records, &base.with_extension("json"))?;
            }
            Ok(())
        }
        Command::Train {
            codewords,
            snr,
            csi_sigma2,
            hidden,
            epochs,
            batch_size,
            patience,
            lr,
            out_dec1,
            out_dec2,
            channel,
        } => {
            if hidden.len() != 2 {
                Cli::command()
                    .error(ErrorKind::WrongNumberOfValues, "--hidden takes exactly two sizes, e.g. 64,32")
                    .exit();
            }
            let tr = Trellises::standard(channel.channel_len)?;
            let il = Interleaver::random(channel.k, channel.seed)?;
            let ch = ChannelModel::exponential(channel.gamma, channel.channel_len, snr_to_sigma2(snr))?;
            let cfg = TrainConfig {
                epochs,
                batch_size,
                patience,
                adam: AdamConfig {
                    learning_rate: lr,
                    ..AdamConfig::default()
                },
                ..TrainConfig::default()
            };
            for (side, path) in [(DecoderSide::First, out_dec1), (DecoderSide::Second, out_dec2)] {
                let d = side.index() as u64;
                let data = gen_training_data(codewords, &ch, side, &tr.rsc, &il, csi_sigma2, channel.seed + d)?;
                let mut m = Mlp::<f64>::branch_model([hidden[0], hidden[1]], channel.seed + 10 * d)?;
                m.meta = ModelMeta {
                    decoder: side.index(),
                    train_snr_db: Some(snr),
                    csi_sigma2,
                };
                let hist = train(&mut m, &data, &cfg, channel.seed + 100 * d)?;
                eprintln!(
                    "decoder {}: {} epochs, best validation KLD {:.5} at epoch {}",
                    side.index(),
                    hist.validation_loss.len(),
                    hist.validation_loss[hist.best_epoch],
                    hist.best_epoch + 1
                );
                save_model(&m, &path)?;
            }
            Ok(())
        }
        Command::Tables { channel_len } => {
            let tr = Trellises::standard(channel_len)?;
            print!("{}\n{}\n{}", dump_tables(&tr.rsc), dump_tables(&tr.channel), dump_tables(&tr.joint));
            Ok(())
        }
        Command::Compare { a, b, target_ber } => {
            let ca = Curve::from_records(a.display().to_string(), &read_csv(&a)?);
            let cb = Curve::from_records(b.display().to_string(), &read_csv(&b)?);
            println!("{:.4}", compare_gain(&ca, &cb, target_ber)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
