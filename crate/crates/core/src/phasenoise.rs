//! Oscillator phase-noise trajectories.
//!
//! Two models are supported:
//!
//! * Wiener (free-running oscillator): `theta(n) = theta(n-1) + delta(n)` with
//!   `delta ~ N(0, sigma2_delta)`. The increment variance relates to the
//!   Lorentzian 3 dB linewidth through `sigma2_delta = 4 pi beta Ts`.
//! * Stationary (phase-locked oscillator): `theta(n) = theta_const + phi(n)`
//!   where `phi` is white Gaussian noise shaped by an FIR filter designed from
//!   a dBc/Hz mask.
//!
//! Mask levels are read as the two-sided phase PSD in rad^2/Hz, so the
//! variance of `phi` is the integral of the mask over `(-fs/2, fs/2)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, RandomSource, C64};

/// Default symbol period (1 GHz symbol rate).
pub const DEFAULT_TS: f64 = 1e-9;
/// Default number of FIR taps for stationary phase noise.
pub const DEFAULT_FILTER_LEN: usize = 4097;
/// Largest accepted number of FIR taps.
pub const MAX_FILTER_LEN: usize = (1 << 20) + 1;

/// Lorentzian 3 dB linewidth from the Wiener increment variance.
pub fn beta_from_sigma(sigma2_delta: f64, ts: f64) -> f64 {
    sigma2_delta / (4.0 * PI * ts)
}

/// Wiener increment variance from the Lorentzian 3 dB linewidth.
pub fn sigma_from_beta(beta: f64, ts: f64) -> f64 {
    4.0 * PI * beta * ts
}

/// Lorentzian phase-noise level in dBc/Hz at offset `f` for linewidth `beta`.
pub fn lorentzian_level(beta: f64, f: f64) -> f64 {
    10.0 * (beta / (PI * (beta * beta + f * f))).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerModel {
    pub sigma2_delta: f64,
    pub ts: f64,
    pub theta0: f64,
}

impl WienerModel {
    pub fn new(sigma2_delta: f64) -> Result<Self> {
        if !(sigma2_delta >= 0.0) || !sigma2_delta.is_finite() {
            return Err(Error::NegativeVariance(sigma2_delta));
        }
        Ok(Self { sigma2_delta, ts: DEFAULT_TS, theta0: 0.0 })
    }

    pub fn beta(&self) -> f64 {
        beta_from_sigma(self.sigma2_delta, self.ts)
    }
}

/// Random-walk phase path of length `n` starting at `theta0`.
pub fn wiener_path(model: &WienerModel, n: usize, rs: &mut RandomSource) -> Vec<f64> {
    let sd = model.sigma2_delta.sqrt();
    let mut theta = model.theta0;
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(theta);
    for _ in 1..n {
        theta += sd * rs.standard_normal();
        out.push(theta);
    }
    out
}

/// Piecewise-linear phase-noise mask in (log10 f, dBc/Hz).
///
/// Held at the first level below the first offset and at the last level
/// (white floor) above the last offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMask {
    points: Vec<(f64, f64)>,
}

impl PsdMask {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMask("mask has no points".into()));
        }
        for &(f, l) in &points {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidMask(format!("offset {f} must be positive and finite")));
            }
            if !l.is_finite() {
                return Err(Error::InvalidMask(format!("level {l} at {f} Hz is not finite")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidMask("offsets must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Parse the mask file format: one `offset_hz level_dbc` pair per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(f), Some(l), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::InvalidMask(format!("line {}: expected `offset_hz level_dbc`", idx + 1)));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidMask(format!("line {}: `{s}` is not a number", idx + 1)))
            };
            points.push((parse(f)?, parse(l)?));
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn first_offset(&self) -> f64 {
        self.points[0].0
    }

    pub fn last_offset(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Level in dBc/Hz at offset `f` (absolute value taken).
    pub fn level_db(&self, f: f64) -> f64 {
        let f = f.abs();
        let (f0, l0) = self.points[0];
        if f <= f0 {
            return l0;
        }
        let (fl, ll) = self.points[self.points.len() - 1];
        if f >= fl {
            return ll;
        }
        let i = self.points.partition_point(|&(p, _)| p <= f);
        let (fa, la) = self.points[i - 1];
        let (fb, lb) = self.points[i];
        let t = (f / fa).log10() / (fb / fa).log10();
        la + t * (lb - la)
    }

    /// Two-sided PSD in rad^2/Hz.
    pub fn density(&self, f: f64) -> f64 {
        10f64.powf(self.level_db(f) / 10.0)
    }

    /// Integral of the two-sided density over `(-fs/2, fs/2)`.
    pub fn integrated_power(&self, sample_rate: f64) -> f64 {
        // Trapezoid on a log grid plus the flat plateau below the first point.
        let nyq = sample_rate / 2.0;
        let lo = self.first_offset().min(nyq);
        let mut total = self.density(0.0) * lo;
        let steps = 20_000;
        let (a, b) = (lo.ln(), nyq.ln());
        let mut prev_f = lo;
        let mut prev_d = self.density(lo);
        for i in 1..=steps {
            let f = (a + (b - a) * i as f64 / steps as f64).exp();
            let d = self.density(f);
            total += 0.5 * (d + prev_d) * (f - prev_f);
            prev_f = f;
            prev_d = d;
        }
        2.0 * total
    }

    /// Named default masks.
    ///
    /// These are approximations: only the 1 MHz anchor level of each oscillator
    /// is published. Each mask is flat below 100 kHz, falls at -20 dB/decade
    /// through the 1 MHz anchor and reaches a white floor 20 dB below its
    /// 10 MHz level.
    pub fn preset(name: &str) -> Option<Self> {
        let anchor = match name {
            "reynolds85" => -85.0,
            "dancila115" => -115.0,
            _ => return None,
        };
        Some(Self::anchored(anchor))
    }

    pub const PRESETS: [&'static str; 2] = ["reynolds85", "dancila115"];

    fn anchored(level_at_1mhz: f64) -> Self {
        let l = level_at_1mhz;
        Self { points: vec![(1e5, l + 20.0), (1e6, l), (1e7, l - 20.0), (1e8, l - 40.0)] }
    }
}

impl fmt::Display for PsdMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (off, lvl) in &self.points {
            writeln!(f, "{off:e} {lvl}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryModel {
    pub mask: PsdMask,
    pub theta_const: f64,
    pub filter_len: usize,
}

impl StationaryModel {
    pub fn new(mask: PsdMask) -> Self {
        Self { mask, theta_const: 0.0, filter_len: DEFAULT_FILTER_LEN }
    }
}

/// Real FIR filter driven by unit-variance white noise at `sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
}

impl FirFilter {
    pub fn zero(len: usize, sample_rate: f64) -> Self {
        Self { taps: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Output variance for unit-variance white input.
    pub fn power(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }

    /// Output PSD level in dB (rad^2/Hz) at frequency `f`.
    pub fn response_db(&self, f: f64) -> f64 {
        let w = -2.0 * PI * f / self.sample_rate;
        let h: C64 = self.taps.iter().enumerate().map(|(n, &t)| C64::from_polar(t, w * n as f64)).sum();
        10.0 * (h.norm_sqr() / self.sample_rate).log10()
    }
}

/// Linear-phase FIR whose output PSD follows `model.mask` at `sample_rate`.
///
/// Frequency-sampling design: the amplitude `sqrt(fs * S(f))` is sampled on the
/// `filter_len` DFT grid and turned into a symmetric (type I) impulse
/// response. Mask features narrower than a few bins (`fs / filter_len`) are
/// smoothed out.
pub fn design_mask_filter(model: &StationaryModel, sample_rate: f64) -> Result<FirFilter> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidParameter { name: "sample_rate", reason: format!("{sample_rate}") });
    }
    let len = model.filter_len;
    if len == 0 || len.is_multiple_of(2) || len > MAX_FILTER_LEN {
        return Err(Error::InvalidParameter {
            name: "filter_len",
            reason: format!("must be odd and at most {MAX_FILTER_LEN}, got {len}"),
        });
    }
    let nyquist = sample_rate / 2.0;
    if let Some(&(f, _)) = model.mask.points().iter().find(|&&(f, _)| f >= nyquist) {
        return Err(Error::MaskAboveNyquist { offset_hz: f, nyquist_hz: nyquist });
    }
    let half = (len - 1) / 2;
    let amp: Vec<f64> = (0..=half)
        .map(|k| (sample_rate * model.mask.density(k as f64 * sample_rate / len as f64)).sqrt())
        .collect();
    let centre = half as f64;
    let taps = (0..len)
        .map(|n| {
            let x = 2.0 * PI * (n as f64 - centre) / len as f64;
            let s: f64 = amp.iter().enumerate().skip(1).map(|(k, a)| a * (x * k as f64).cos()).sum();
            (amp[0] + 2.0 * s) / len as f64
        })
        .collect();
    Ok(FirFilter { taps, sample_rate })
}

/// FFT-based generator of filtered Gaussian sequences of a fixed length.
pub struct ShapedNoise {
    taps_len: usize,
    out_len: usize,
    spectrum: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for ShapedNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShapedNoise").field("taps_len", &self.taps_len).field("out_len", &self.out_len).finish()
    }
}

impl ShapedNoise {
    pub fn new(filter: &FirFilter, out_len: usize) -> Self {
        let taps_len = filter.len().max(1);
        let size = (out_len + taps_len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum = vec![C64::new(0.0, 0.0); size];
        for (s, &t) in spectrum.iter_mut().zip(&filter.taps) {
            *s = C64::new(t, 0.0);
        }
        forward.process(&mut spectrum);
        Self { taps_len, out_len, spectrum, forward, inverse }
    }

    /// Filter `out_len + taps - 1` white samples and keep the steady-state
    /// part (the first `taps - 1` outputs are the discarded transient).
    pub fn generate(&self, rs: &mut RandomSource) -> Vec<f64> {
        let size = self.spectrum.len();
        let drive_len = self.out_len + self.taps_len - 1;
        let mut buf = vec![C64::new(0.0, 0.0); size];
        for b in buf.iter_mut().take(drive_len) {
            b.re = rs.standard_normal();
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / size as f64;
        buf[self.taps_len - 1..self.taps_len - 1 + self.out_len].iter().map(|z| z.re * scale).collect()
    }
}

/// Stationary phase path `theta_const + phi(n)` of length `n`.
pub fn stationary_path(model: &StationaryModel, filter: &FirFilter, n: usize, rs: &mut RandomSource) -> Vec<f64> {
    ShapedNoise::new(filter, n).generate(rs).into_iter().map(|p| model.theta_const + p).collect()
}

/// Phase-noise source for one side of the link.
#[derive(Debug, Clone, PartialEq)]
pub enum OscillatorModel {
    Ideal,
    Wiener(WienerModel),
    Stationary { model: StationaryModel, filter: FirFilter },
}

impl OscillatorModel {
    pub fn stationary(model: StationaryModel, sample_rate: f64) -> Result<Self> {
        let filter = design_mask_filter(&model, sample_rate)?;
        Ok(Self::Stationary { model, filter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OscillatorMode {
    Common,
    Individual,
}

impl OscillatorMode {
    fn as_str(self) -> &'static str {
        match self {
            Self::Common => "common",
            Self::Individual => "individual",
        }
    }
}

impl FromStr for OscillatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "common" | "com" => Ok(Self::Common),
            "individual" | "ind" => Ok(Self::Individual),
            other => Err(Error::InvalidParameter {
                name: "topology",
                reason: format!("`{other}` is not `common` or `individual`"),
            }),
        }
    }
}

/// Wiring of oscillators to antennas at each end of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OscillatorTopology {
    pub tx: OscillatorMode,
    pub rx: OscillatorMode,
}

impl OscillatorTopology {
    pub const COMMON: Self = Self { tx: OscillatorMode::Common, rx: OscillatorMode::Common };
    pub const INDIVIDUAL: Self = Self { tx: OscillatorMode::Individual, rx: OscillatorMode::Individual };
    pub const IND_TX_COM_RX: Self = Self { tx: OscillatorMode::Individual, rx: OscillatorMode::Common };

    pub fn is_fully_common(self) -> bool {
        self == Self::COMMON
    }
}

impl fmt::Display for OscillatorTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tx.as_str(), self.rx.as_str())
    }
}

impl FromStr for OscillatorTopology {
    type Err = Error;

    /// `tx/rx`, e.g. `common/common` or `ind/com`.
    fn from_str(s: &str) -> Result<Self> {
        let (tx, rx) = s.split_once('/').ok_or_else(|| Error::InvalidParameter {
            name: "topology",
            reason: format!("`{s}` is not of the form tx/rx"),
        })?;
        Ok(Self { tx: tx.parse()?, rx: rx.parse()? })
    }
}

/// Per-antenna phase trajectories for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBank {
    pub tx: Vec<Vec<f64>>,
    pub rx: Vec<Vec<f64>>,
}

impl OscillatorBank {
    pub fn len(&self) -> usize {
        self.tx.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn antennas(&self) -> usize {
        self.tx.len()
    }

    /// `Theta_Tx(n)`.
    pub fn tx_matrix(&self, n: usize) -> CMatrix {
        phase_matrix(&self.tx, n)
    }

    /// `Theta_Rx(n)`.
    pub fn rx_matrix(&self, n: usize) -> CMatrix {
        phase_matrix(&self.rx, n)
    }
}

/// Diagonal matrix `diag(exp(j theta_i(n)))`.
pub fn phase_matrix(paths: &[Vec<f64>], n: usize) -> CMatrix {
    let diag: Vec<C64> = paths.iter().map(|p| C64::from_polar(1.0, p[n])).collect();
    CMatrix::from_diagonal(&diag)
}

const TX_STREAM: u64 = 0x7478_0000;
const RX_STREAM: u64 = 0x7278_0000;

fn side_paths(
    mode: OscillatorMode,
    model: &OscillatorModel,
    antennas: usize,
    len: usize,
    rs: &RandomSource,
    base: u64,
    shaped: Option<&ShapedNoise>,
) -> Vec<Vec<f64>> {
    let one = |i: u64| -> Vec<f64> {
        let mut stream = rs.fork(base + i);
        match model {
            OscillatorModel::Ideal => vec![0.0; len],
            OscillatorModel::Wiener(w) => wiener_path(w, len, &mut stream),
            OscillatorModel::Stationary { model, .. } => {
                let phi = shaped.expect("shaped noise prepared for stationary model").generate(&mut stream);
                phi.into_iter().map(|p| model.theta_const + p).collect()
            }
        }
    };
    match mode {
        OscillatorMode::Common => {
            let p = one(0);
            vec![p; antennas]
        }
        OscillatorMode::Individual => (0..antennas as u64).map(one).collect(),
    }
}

/// Generate Tx and Rx phase trajectories of length `len` for `antennas`
/// antennas per side.
///
/// Common mode copies a single path to every antenna on that side; individual
/// mode draws one path per antenna from its own random stream.
/// Wiener paths start at the model's initial phase; stationary paths are a
/// fresh draw of the locked process around `theta_const`, so their first
/// sample is already random.
pub fn oscillator_bank(
    topology: OscillatorTopology,
    tx_model: &OscillatorModel,
    rx_model: &OscillatorModel,
    antennas: usize,
    len: usize,
    rs: &RandomSource,
) -> OscillatorBank {
    let shaped_for = |m: &OscillatorModel| match m {
        OscillatorModel::Stationary { filter, .. } => Some(ShapedNoise::new(filter, len)),
        _ => None,
    };
    let tx_shaped = shaped_for(tx_model);
    let rx_shaped = if rx_model == tx_model { None } else { shaped_for(rx_model) };
    let rx_shaped = rx_shaped.as_ref().or(tx_shaped.as_ref());
    OscillatorBank {
        tx: side_paths(topology.tx, tx_model, antennas, len, rs, TX_STREAM, tx_shaped.as_ref()),
        rx: side_paths(topology.rx, rx_model, antennas, len, rs, RX_STREAM, rx_shaped),
    }
}
