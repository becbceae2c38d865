//! Monte-Carlo execution of scenarios, CSV output and PSD verification.
//!
//! Trial `k` of a scenario draws all of its randomness from stream `k` of the
//! scenario's master seed, and per-trial results are merged with exact
//! fixed-point addition. Results are therefore identical for any worker
//! count. The same frame, channel, oscillator paths and unit noise draw are
//! reused across the SNR grid and across the compensated/uncompensated
//! receivers.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::channel::{los_dft, rician_mix, sample_nlos, RicianFactor};
use crate::error::{Error, Result};
use crate::metrics::{noise_variance, rel_improvement, TrialResult};
use crate::modem::{frame_with_training, training_block, Constellation};
use crate::numerics::{CMatrix, RandomSource};
use crate::phasenoise::{
    lorentzian_level, oscillator_bank, wiener_path, FirFilter, OscillatorModel, ShapedNoise, StationaryModel,
    WienerModel, DEFAULT_TS,
};
use crate::receiver::{detect, equalize, propagate, ReceivedFrame, RxConfig};
use crate::scenario::{PnSpec, Scenario};
use crate::spectrum::welch;

/// Symbol rate used for stationary filter design.
pub const SAMPLE_RATE: f64 = 1.0 / DEFAULT_TS;

const FRAME_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const PN_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;

pub const CSV_HEADER: [&str; 13] = [
    "scenario_id",
    "N",
    "K_db",
    "constellation",
    "pn_model",
    "sigma2_or_mask",
    "topology",
    "compensated",
    "snr_db",
    "evm",
    "ser",
    "symbols",
    "seed",
];

/// One (scenario, N, SNR, receiver) point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario_id: String,
    pub antennas: usize,
    pub k_db: f64,
    pub constellation: String,
    pub pn_model: String,
    pub sigma2_or_mask: String,
    pub topology: String,
    pub compensated: bool,
    pub snr_db: f64,
    pub evm: f64,
    pub ser: f64,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub frames: u64,
    pub seed: u64,
    pub wall_time_s: f64,
    pub result: TrialResult,
}

impl SweepRow {
    pub fn csv_record(&self) -> [String; 13] {
        let k = if self.k_db.is_infinite() { "inf".to_string() } else { self.k_db.to_string() };
        [
            self.scenario_id.clone(),
            self.antennas.to_string(),
            k,
            self.constellation.clone(),
            self.pn_model.clone(),
            self.sigma2_or_mask.clone(),
            self.topology.clone(),
            self.compensated.to_string(),
            self.snr_db.to_string(),
            self.evm.to_string(),
            self.ser.to_string(),
            self.symbols.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Everything about a scenario that is shared by its trials at one N.
struct Setup<'a> {
    s: &'a Scenario,
    n: usize,
    l_d: usize,
    constellation: Constellation,
    training: CMatrix,
    dft_training: bool,
    h_los: CMatrix,
    k: RicianFactor,
    oscillator: OscillatorModel,
    cfg: RxConfig,
}

fn oscillator_for(s: &Scenario) -> Result<OscillatorModel> {
    Ok(match &s.pn {
        PnSpec::None => OscillatorModel::Ideal,
        PnSpec::Wiener { sigma2 } => OscillatorModel::Wiener(WienerModel::new(*sigma2)?),
        PnSpec::Stationary { mask, filter_len } => {
            let mut model = StationaryModel::new(mask.resolve(s.base_dir.as_deref())?);
            model.filter_len = *filter_len;
            OscillatorModel::stationary(model, SAMPLE_RATE)?
        }
    })
}

impl<'a> Setup<'a> {
    fn new(s: &'a Scenario, n: usize, oscillator: OscillatorModel) -> Result<Self> {
        let (training, dft_training) = training_block(n, s.training)?;
        Ok(Self {
            s,
            n,
            l_d: s.length.data_len(n)?,
            constellation: Constellation::new(s.constellation),
            training,
            dft_training,
            h_los: los_dft(n),
            k: RicianFactor::from_db(s.k_db)?,
            oscillator,
            cfg: RxConfig {
                compensation: false,
                alpha: s.alpha,
                tracker: s.tracker,
                perfect_csi: s.perfect_csi,
                training_noise: s.training_noise,
            },
        })
    }

    fn variants(&self) -> &'static [bool] {
        self.s.compensation.variants()
    }

    fn points(&self) -> usize {
        self.s.snr_db.len() * self.variants().len()
    }

    /// Results of one trial, indexed `snr * variants + variant`.
    fn trial(&self, k: u64) -> Result<Vec<TrialResult>> {
        let rs = RandomSource::new(self.s.seed, k);
        let frame = frame_with_training(
            &self.training,
            self.dft_training,
            self.l_d,
            &self.constellation,
            &mut rs.fork(FRAME_STREAM),
        )?;
        let h = if self.k.is_pure_los() {
            self.h_los.clone()
        } else {
            rician_mix(&self.h_los, &sample_nlos(self.n, &mut rs.fork(CHANNEL_STREAM)), self.k)?.h
        };
        let bank = oscillator_bank(self.s.topology, &self.oscillator, &self.oscillator, self.n, frame.l_f(), &rs.fork(PN_STREAM));
        let rx = ReceivedFrame::new(propagate(&h, &bank, &frame)?, &mut rs.fork(NOISE_STREAM));
        let mode = self.cfg.tracker_mode(self.s.topology);
        let shared = if self.cfg.training_noise { None } else { Some(equalize(&rx, &frame, &h, &self.cfg, 0.0)?) };
        let mut out = Vec::with_capacity(self.points());
        for &snr in &self.s.snr_db {
            let sigma = noise_variance(snr, self.n).sqrt();
            let per_snr;
            let eq = match &shared {
                Some(eq) => eq,
                None => {
                    per_snr = equalize(&rx, &frame, &h, &self.cfg, sigma)?;
                    &per_snr
                }
            };
            for &compensation in self.variants() {
                let cfg = RxConfig { compensation, ..self.cfg };
                out.push(detect(eq, &frame, sigma, &cfg, mode, &self.constellation)?);
            }
        }
        Ok(out)
    }
}

fn merge_all(mut a: Vec<TrialResult>, b: Vec<TrialResult>) -> Vec<TrialResult> {
    for (x, y) in a.iter_mut().zip(&b) {
        x.merge(y);
    }
    a
}

/// Thread pool with `workers` threads; 0 selects the number of CPUs.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::InvalidParameter {
        name: "workers",
        reason: e.to_string(),
    })
}

/// Run every (N, SNR, receiver) point of a scenario.
pub fn run_scenario(s: &Scenario, workers: usize) -> Result<Vec<SweepRow>> {
    s.validate()?;
    let pool = worker_pool(workers)?;
    let oscillator = oscillator_for(s)?;
    let mut rows = Vec::new();
    for &n in &s.antennas {
        let start = Instant::now();
        let setup = Setup::new(s, n, oscillator.clone())?;
        let empty = vec![TrialResult::default(); setup.points()];
        let totals = pool.install(|| {
            (0..s.trials)
                .into_par_iter()
                .map(|k| setup.trial(k))
                .try_reduce(|| empty.clone(), |a, b| Ok(merge_all(a, b)))
        })?;
        let elapsed = start.elapsed().as_secs_f64();
        let variants = setup.variants();
        for (idx, total) in totals.iter().enumerate() {
            let snr = s.snr_db[idx / variants.len()];
            rows.push(SweepRow {
                scenario_id: s.id.clone(),
                antennas: n,
                k_db: s.k_db,
                constellation: s.constellation.name().to_string(),
                pn_model: s.pn.model_name().to_string(),
                sigma2_or_mask: s.pn.parameter_label(),
                topology: s.topology.to_string(),
                compensated: variants[idx % variants.len()],
                snr_db: snr,
                evm: total.evm()?,
                ser: total.ser()?,
                symbols: total.symbols,
                symbol_errors: total.symbol_errors,
                frames: total.frames,
                seed: s.seed,
                wall_time_s: elapsed,
                result: *total,
            });
        }
    }
    Ok(rows)
}

/// Write rows as CSV. The header is written only when `out` is empty, so
/// repeated runs can append to one file.
pub fn write_rows<W: Write>(out: W, rows: &[SweepRow], header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Append rows to a CSV file, creating it (with header) if needed.
pub fn append_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let file_err = |source| Error::File { path: path.to_path_buf(), source };
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(file_err)?;
    let empty = file.metadata().map_err(file_err)?.len() == 0;
    write_rows(file, rows, empty)
}

/// Run scenarios in order and append all rows to `out`.
pub fn run_sweep(scenarios: &[Scenario], out: &Path, workers: usize) -> Result<Vec<SweepRow>> {
    let mut all = Vec::new();
    for s in scenarios {
        all.extend(run_scenario(s, workers)?);
    }
    append_csv(out, &all)?;
    Ok(all)
}

/// Load every `*.scn` file in a directory, sorted by file name.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let file_err = |source| Error::File { path: dir.to_path_buf(), source };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(file_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(file_err)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "scn"));
    paths.sort();
    paths.iter().map(|p| Scenario::load(p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelImprovement {
    pub scenario_id: String,
    pub antennas: usize,
    pub snr_db: f64,
    pub ser: f64,
    pub ser_compensated: f64,
    pub compensated_errors: u64,
    pub compensated_symbols: u64,
    /// `None` when the uncompensated SER is zero.
    pub value: Option<f64>,
}

/// Pair uncompensated and compensated rows of the same point.
pub fn rel_improvements(rows: &[SweepRow]) -> Vec<RelImprovement> {
    rows.iter()
        .filter(|r| !r.compensated)
        .filter_map(|plain| {
            let comp = rows.iter().find(|r| {
                r.compensated && r.scenario_id == plain.scenario_id && r.antennas == plain.antennas && r.snr_db == plain.snr_db
            })?;
            Some(RelImprovement {
                scenario_id: plain.scenario_id.clone(),
                antennas: plain.antennas,
                snr_db: plain.snr_db,
                ser: plain.ser,
                ser_compensated: comp.ser,
                compensated_errors: comp.symbol_errors,
                compensated_symbols: comp.symbols,
                value: rel_improvement(plain.ser, comp.ser),
            })
        })
        .collect()
}

/// Built-in scenarios, named after the figure they regenerate.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2a-nopn", include_str!("../scenarios/fig2a-nopn.scn")),
    ("fig2a-wiener-ind-1e-4", include_str!("../scenarios/fig2a-wiener-ind-1e-4.scn")),
    ("fig2a-wiener-ind-1e-5", include_str!("../scenarios/fig2a-wiener-ind-1e-5.scn")),
    ("fig2a-wiener-com-1e-4", include_str!("../scenarios/fig2a-wiener-com-1e-4.scn")),
    ("fig2a-reynolds", include_str!("../scenarios/fig2a-reynolds.scn")),
    ("fig2a-dancila", include_str!("../scenarios/fig2a-dancila.scn")),
    ("fig2b-wiener-lf100", include_str!("../scenarios/fig2b-wiener-lf100.scn")),
    ("fig2b-wiener-lf1000", include_str!("../scenarios/fig2b-wiener-lf1000.scn")),
    ("fig2b-wiener-lf10000", include_str!("../scenarios/fig2b-wiener-lf10000.scn")),
    ("fig2b-reynolds-lf100", include_str!("../scenarios/fig2b-reynolds-lf100.scn")),
    ("fig2b-reynolds-lf10000", include_str!("../scenarios/fig2b-reynolds-lf10000.scn")),
    ("fig3a-nopn", include_str!("../scenarios/fig3a-nopn.scn")),
    ("fig3a-wiener-ind", include_str!("../scenarios/fig3a-wiener-ind.scn")),
    ("fig3a-wiener-com", include_str!("../scenarios/fig3a-wiener-com.scn")),
    ("fig3b-psk8", include_str!("../scenarios/fig3b-psk8.scn")),
    ("fig3b-qam16", include_str!("../scenarios/fig3b-qam16.scn")),
    ("fig3b-psk16", include_str!("../scenarios/fig3b-psk16.scn")),
    ("fig3b-qam64", include_str!("../scenarios/fig3b-qam64.scn")),
    ("fig4a-com-1e-4", include_str!("../scenarios/fig4a-com-1e-4.scn")),
    ("fig4a-ind-1e-5", include_str!("../scenarios/fig4a-ind-1e-5.scn")),
    ("fig4a-ind-1e-4", include_str!("../scenarios/fig4a-ind-1e-4.scn")),
    ("fig4b-common", include_str!("../scenarios/fig4b-common.scn")),
    ("fig4b-indtx-comrx", include_str!("../scenarios/fig4b-indtx-comrx.scn")),
    ("fig4b-individual-1e-4", include_str!("../scenarios/fig4b-individual-1e-4.scn")),
    ("fig4b-individual-1e-5", include_str!("../scenarios/fig4b-individual-1e-5.scn")),
];

pub fn preset(name: &str) -> Result<Scenario> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    let mut s = Scenario::parse(text)?;
    if s.id == "scenario" {
        s.id = name.to_string();
    }
    Ok(s)
}

/// One Welch bin compared with its target level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdRow {
    pub freq_hz: f64,
    pub estimate_db: f64,
    pub target_db: f64,
}

/// Band-averaged comparison used for the pass/fail decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdBand {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub estimate_db: f64,
    pub target_db: f64,
}

impl PsdBand {
    pub fn deviation_db(&self) -> f64 {
        self.estimate_db - self.target_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub sample_rate: f64,
    pub segment_len: usize,
    pub rows: Vec<PsdRow>,
    pub bands: Vec<PsdBand>,
    pub tolerance_db: f64,
}

impl PsdReport {
    pub fn max_deviation_db(&self) -> f64 {
        self.bands.iter().map(|b| b.deviation_db().abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.bands.is_empty() && self.max_deviation_db() <= self.tolerance_db
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq_hz", "estimate_dbc_hz", "target_dbc_hz"])?;
        for r in &self.rows {
            w.write_record([r.freq_hz.to_string(), r.estimate_db.to_string(), r.target_db.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const PSD_TOLERANCE_DB: f64 = 3.0;
const BANDS_PER_DECADE: f64 = 5.0;

type TargetDb = Box<dyn Fn(f64) -> f64>;

/// Generate a phase path from `spec` and compare its Welch PSD with the
/// target: the mask for stationary models, the Lorentzian for Wiener models.
///
/// Comparison is made on log-spaced bands (five per decade) of linear-average
/// power. The checked range is the mask's offset range, or the whole band for
/// a single-point mask; for Wiener models it runs from ten linewidths to a
/// tenth of the sample rate, where the Lorentzian tail and the random-walk
/// phase spectrum coincide.
pub fn psd_check(spec: &PnSpec, base: Option<&Path>, samples: usize, seed: u64) -> Result<PsdReport> {
    let fs = SAMPLE_RATE;
    let mut rs = RandomSource::new(seed, 0);
    let (path, segment_len, target, lo, hi): (Vec<f64>, usize, TargetDb, f64, f64) = match spec {
        PnSpec::None => {
            return Err(Error::ModelSpec { spec: "none".into(), reason: "nothing to check without phase noise".into() })
        }
        PnSpec::Wiener { sigma2 } => {
            let segment_len = 1 << 14;
            if samples < 16 * segment_len {
                return Err(Error::InsufficientSamples { needed: 16 * segment_len, got: samples });
            }
            let model = WienerModel::new(*sigma2)?;
            let beta = model.beta();
            let path = wiener_path(&model, samples, &mut rs);
            (path, segment_len, Box::new(move |f| lorentzian_level(beta, f)), 10.0 * beta, fs / 10.0)
        }
        PnSpec::Stationary { mask, filter_len } => {
            let needed = 16 * filter_len;
            if samples < needed {
                return Err(Error::InsufficientSamples { needed, got: samples });
            }
            let mut model = StationaryModel::new(mask.resolve(base)?);
            model.filter_len = *filter_len;
            let OscillatorModel::Stationary { filter, .. } = OscillatorModel::stationary(model.clone(), fs)? else {
                unreachable!("stationary spec yields a stationary model")
            };
            let path = generate_long(&filter, samples, &mut rs);
            let segment_len = (4 * filter_len).next_power_of_two().min(samples.next_power_of_two() / 8).max(256);
            let (lo, hi) = if model.mask.points().len() == 1 {
                (0.0, 0.45 * fs)
            } else {
                (model.mask.first_offset(), model.mask.last_offset())
            };
            let mask = model.mask;
            (path, segment_len, Box::new(move |f| mask.level_db(f)), lo, hi)
        }
    };
    let psd = welch(&path, fs, segment_len)?;
    let bin = fs / segment_len as f64;
    let rows: Vec<PsdRow> = psd
        .level_db()
        .skip(1)
        .map(|(f, est)| PsdRow { freq_hz: f, estimate_db: est, target_db: target(f) })
        .collect();
    // Windowed bins near DC carry leakage from the segment mean removal.
    let lo = lo.max(4.0 * bin);
    let mut bands = Vec::new();
    if hi > lo {
        let decades = (hi / lo).log10();
        let count = (decades * BANDS_PER_DECADE).ceil().max(1.0) as usize;
        let ratio = (hi / lo).powf(1.0 / count as f64);
        for b in 0..count {
            let (blo, bhi) = (lo * ratio.powi(b as i32), lo * ratio.powi(b as i32 + 1));
            let in_band: Vec<&PsdRow> = rows.iter().filter(|r| r.freq_hz >= blo && r.freq_hz <= bhi).collect();
            if in_band.is_empty() {
                continue;
            }
            let mean_db = |g: &dyn Fn(&PsdRow) -> f64| {
                10.0 * (in_band.iter().map(|r| 10f64.powf(g(r) / 10.0)).sum::<f64>() / in_band.len() as f64).log10()
            };
            bands.push(PsdBand {
                lo_hz: blo,
                hi_hz: bhi,
                estimate_db: mean_db(&|r| r.estimate_db),
                target_db: mean_db(&|r| r.target_db),
            });
        }
    }
    Ok(PsdReport { sample_rate: fs, segment_len, rows, bands, tolerance_db: PSD_TOLERANCE_DB })
}

/// Long stationary path built from blocks of steady-state filter output.
///
/// Block boundaries are not continuous, but every block is a valid
/// realisation of the process, which is all a segment-averaged PSD estimate
/// needs when blocks are much longer than the Welch segment.
fn generate_long(filter: &FirFilter, samples: usize, rs: &mut RandomSource) -> Vec<f64> {
    let block = (1usize << 20).max(16 * filter.len()).min(samples);
    let shaped = ShapedNoise::new(filter, block);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let chunk = shaped.generate(rs);
        let take = (samples - out.len()).min(chunk.len());
        out.extend_from_slice(&chunk[..take]);
    }
    out
}
