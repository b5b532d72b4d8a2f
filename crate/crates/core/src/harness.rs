//! Monte Carlo BER experiments: SNR sweeps, stopping rules, CSI-error
//! injection, result files and dB-gain comparison.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcjr::{MaxStarMode, TerminalPolicy};
use crate::error::{io_err, Error, Result};
use crate::neural::{load_model, noisy_taps, Mlp};
use crate::receivers::{receive, BranchModel, DetectorOutput, ExtrinsicPolicy, ReceiverConfig, ReceiverMode, Trellises};
use crate::rng::{stream, StreamRole};
use crate::txchain::{apply_channel_with, random_bits, snr_to_sigma2, turbo_encode, ChannelModel, Interleaver};

/// Stream index reserved for the once-per-sweep CSI draw.
const SWEEP_CSI_INDEX: u64 = 1 << 58;

/// `h + N(0, sigma2_e I)` drawn from `seed`.
pub fn inject_csi_noise(h: &[f64], sigma2_e: f64, seed: u64) -> Result<Vec<f64>> {
    noisy_taps(h, sigma2_e, &mut stream(seed, SWEEP_CSI_INDEX, StreamRole::CsiNoise))
}

/// How often the receiver's noisy channel estimate is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiRedraw {
    /// One estimate shared by every codeword and SNR point.
    #[default]
    PerSweep,
    /// A fresh estimate for each codeword.
    PerCodeword,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub snr_db_list: Vec<f64>,
    pub mode: ReceiverMode,
    pub iterations: usize,
    pub min_error_bits: u64,
    pub max_codewords: u64,
    pub master_seed: u64,
    /// Receiver-side tap error variance; the transmit channel stays clean.
    pub csi_sigma2: Option<f64>,
    pub csi_redraw: CsiRedraw,
    pub model_dec1: Option<PathBuf>,
    pub model_dec2: Option<PathBuf>,
    pub k: usize,
    pub gamma: f64,
    pub channel_len: usize,
    pub max_star: MaxStarMode,
    pub terminal: TerminalPolicy,
    /// Overrides the mode's default extrinsic rule.
    pub extrinsic: Option<ExtrinsicPolicy>,
    /// Soft neighbour priors in the joint metrics instead of uniform ones.
    pub neighbor_priors: bool,
    pub detector_output: DetectorOutput,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            snr_db_list: vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0],
            mode: ReceiverMode::Joint,
            iterations: 6,
            min_error_bits: 400,
            max_codewords: 200_000,
            master_seed: 1,
            csi_sigma2: None,
            csi_redraw: CsiRedraw::PerSweep,
            model_dec1: None,
            model_dec2: None,
            k: 100,
            gamma: 1.0,
            channel_len: 3,
            max_star: MaxStarMode::Exact,
            terminal: TerminalPolicy::Uniform,
            extrinsic: None,
            neighbor_priors: false,
            detector_output: DetectorOutput::PosteriorMean,
            threads: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db_list.is_empty() {
            return Err(Error::InvalidInput("SNR list is empty".into()));
        }
        if self.min_error_bits == 0 || self.max_codewords == 0 {
            return Err(Error::InvalidInput(
                "min_error_bits and max_codewords must be >= 1".into(),
            ));
        }
        if self.k == 0 || self.iterations == 0 || self.channel_len == 0 {
            return Err(Error::InvalidInput("k, iterations and channel length must be >= 1".into()));
        }
        if let Some(s) = self.csi_sigma2 {
            if s.is_nan() || s < 0.0 {
                return Err(Error::InvalidInput(format!("CSI noise variance must be >= 0, got {s}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("thread count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn receiver_config(&self) -> ReceiverConfig {
        let base = ReceiverConfig::new(self.mode);
        ReceiverConfig {
            iterations: self.iterations,
            max_star: self.max_star,
            terminal: self.terminal,
            extrinsic: self.extrinsic.unwrap_or(base.extrinsic),
            neighbor_priors: self.neighbor_priors,
            detector_output: self.detector_output,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub mode: ReceiverMode,
    pub codewords: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub seed: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MinErrors,
    MaxCodewords,
}

impl BerRecord {
    pub fn stopped_by(&self, min_error_bits: u64) -> StopReason {
        if self.bit_errors >= min_error_bits {
            StopReason::MinErrors
        } else {
            StopReason::MaxCodewords
        }
    }
}

/// Prepared simulation state shared by every SNR point of a sweep.
pub struct Simulator {
    spec: ExperimentSpec,
    trellises: Trellises,
    interleaver: Interleaver,
    channel: ChannelModel,
    models: Option<[Arc<dyn BranchModel + Send>; 2]>,
    sweep_csi: Option<Vec<f64>>,
    pool: rayon::ThreadPool,
}

impl Simulator {
    /// Loads models from the spec's paths when the mode needs them.
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        let models = if spec.mode == ReceiverMode::JointNn {
            let p1 = spec.model_dec1.as_ref().ok_or(Error::MissingModel(1))?;
            let p2 = spec.model_dec2.as_ref().ok_or(Error::MissingModel(2))?;
            let m1: Mlp<f64> = load_model(p1)?;
            let m2: Mlp<f64> = load_model(p2)?;
            Some([Arc::new(m1) as Arc<dyn BranchModel + Send>, Arc::new(m2) as _])
        } else {
            None
        };
        Self::with_models(spec, models)
    }

    pub fn with_models(spec: ExperimentSpec, models: Option<[Arc<dyn BranchModel + Send>; 2]>) -> Result<Self> {
        spec.validate()?;
        if spec.mode == ReceiverMode::JointNn && models.is_none() {
            return Err(Error::MissingModel(1));
        }
        let trellises = Trellises::standard(spec.channel_len)?;
        let interleaver = Interleaver::random(spec.k, spec.master_seed)?;
        let channel = ChannelModel::exponential(spec.gamma, spec.channel_len, 1.0)?;
        let sweep_csi = match (spec.csi_sigma2, spec.csi_redraw) {
            (Some(s), CsiRedraw::PerSweep) => Some(inject_csi_noise(&channel.taps, s, spec.master_seed)?),
            _ => None,
        };
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = spec.threads {
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        Ok(Self {
            spec,
            trellises,
            interleaver,
            channel,
            models,
            sweep_csi,
            pool,
        })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    /// Bit errors of codeword `index` at the given noise variance.
    fn run_codeword(&self, index: u64, sigma2: f64, cfg: &ReceiverConfig) -> Result<u64> {
        let seed = self.spec.master_seed;
        let k = self.spec.k;
        let u = random_bits(k, &mut stream(seed, index, StreamRole::Message));
        let cw = turbo_encode(&u, &self.trellises.rsc, &self.interleaver)?;
        let truth = self.channel.at_sigma2(sigma2)?;
        let y = apply_channel_with(&cw.multiplexed(), &truth, &mut stream(seed, index, StreamRole::ChannelNoise));
        let rx_taps = match (self.spec.csi_sigma2, &self.sweep_csi) {
            (_, Some(t)) => t.clone(),
            (Some(s), None) => noisy_taps(&truth.taps, s, &mut stream(seed, index, StreamRole::CsiNoise))?,
            (None, None) => truth.taps.clone(),
        };
        let rx = ChannelModel::with_taps(rx_taps, sigma2)?;
        let models = self
            .models
            .as_ref()
            .map(|[a, b]| [a.as_ref() as &dyn BranchModel, b.as_ref() as &dyn BranchModel]);
        let out = receive(&y, &rx, models, &self.trellises, &self.interleaver, cfg)?;
        Ok(out.bits.iter().zip(&u).filter(|(a, b)| a != b).count() as u64)
    }

    /// Runs codewords `0, 1, ...` until `min_error_bits` errors or
    /// `max_codewords` codewords. Batches run in parallel but are tallied in
    /// index order, so the record does not depend on the worker count.
    pub fn run_point(&self, snr_db: f64) -> Result<BerRecord> {
        let start = Instant::now();
        let sigma2 = snr_to_sigma2(snr_db);
        let cfg = self.spec.receiver_config();
        let batch = (self.pool.current_num_threads() as u64 * 8).max(16);
        let (mut done, mut errors) = (0u64, 0u64);
        'outer: while done < self.spec.max_codewords {
            let end = (done + batch).min(self.spec.max_codewords);
            let results: Vec<Result<u64>> = self.pool.install(|| {
                (done..end)
                    .into_par_iter()
                    .map(|i| self.run_codeword(i, sigma2, &cfg))
                    .collect()
            });
            for r in results {
                errors += r?;
                done += 1;
                if errors >= self.spec.min_error_bits {
                    break 'outer;
                }
            }
        }
        let bits = done * self.spec.k as u64;
        Ok(BerRecord {
            snr_db,
            mode: self.spec.mode,
            codewords: done,
            bits,
            bit_errors: errors,
            ber: errors as f64 / bits as f64,
            seed: self.spec.master_seed,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }

    pub fn run_sweep(&self) -> Result<Vec<BerRecord>> {
        self.spec.snr_db_list.iter().map(|&s| self.run_point(s)).collect()
    }
}

/// One point of a sweep with the spec that produced it.
pub fn run_ber_point(spec: &ExperimentSpec, snr_db: f64) -> Result<BerRecord> {
    Simulator::new(spec.clone())?.run_point(snr_db)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    #[serde(flatten)]
    record: BerRecord,
    stopped_by: StopReason,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepDocument {
    spec: ExperimentSpec,
    records: Vec<JsonRecord>,
}

pub fn write_csv(records: &[BerRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BerRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json(spec: &ExperimentSpec, records: &[BerRecord], path: &Path) -> Result<()> {
    let doc = SweepDocument {
        spec: spec.clone(),
        records: records
            .iter()
            .map(|r| JsonRecord {
                record: r.clone(),
                stopped_by: r.stopped_by(spec.min_error_bits),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?).map_err(io_err(path))
}

pub fn read_json(path: &Path) -> Result<(ExperimentSpec, Vec<BerRecord>)> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let doc: SweepDocument = serde_json::from_str(&text)?;
    Ok((doc.spec, doc.records.into_iter().map(|r| r.record).collect()))
}

/// Runs the sweep and writes `<out>.csv` and `<out>.json` when `out` is given.
pub fn run_sweep(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Vec<BerRecord>> {
    let records = Simulator::new(spec.clone())?.run_sweep()?;
    if let Some(base) = out {
        write_csv(&records, &base.with_extension("csv"))?;
        write_json(spec, &records, &base.with_extension("json"))?;
    }
    Ok(records)
}

/// A named BER-vs-SNR curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    /// `(snr_db, ber)` points.
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }

    pub fn from_records(name: impl Into<String>, records: &[BerRecord]) -> Self {
        Self::new(name, records.iter().map(|r| (r.snr_db, r.ber)).collect())
    }

    /// SNR at which the curve first crosses `target`, interpolating linearly in
    /// SNR and `log10 BER` between adjacent points with nonzero BER.
    pub fn snr_at(&self, target: f64) -> Result<f64> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().copied().filter(|p| p.1 > 0.0).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lt = target.log10();
        for w in pts.windows(2) {
            let ((s0, b0), (s1, b1)) = (w[0], w[1]);
            let (l0, l1) = (b0.log10(), b1.log10());
            if (l0 - lt) * (l1 - lt) <= 0.0 && l0 != l1 {
                return Ok(s0 + (lt - l0) * (s1 - s0) / (l1 - l0));
            }
            if l0 == lt {
                return Ok(s0);
            }
        }
        Err(Error::NotBracketed(self.name.clone()))
    }
}

/// `SNR_b - SNR_a` at `target_ber`: positive when curve `a` reaches the
/// target at lower SNR.
pub fn compare_gain(curve_a: &Curve, curve_b: &Curve, target_ber: f64) -> Result<f64> {
    if !(target_ber > 0.0 && target_ber < 1.0) {
        return Err(Error::InvalidInput(format!("target BER {target_ber} outside (0, 1)")));
    }
    Ok(curve_b.snr_at(target_ber)? - curve_a.snr_at(target_ber)?)
}
