//! Receive chain: training-based channel estimation, zero-forcing
//! equalisation, decision-directed phase tracking and hard detection.

use crate::error::{Error, Result};
use crate::metrics::TrialResult;
use crate::modem::{Constellation, Frame};
use crate::numerics::{pinv, CMatrix, RandomSource, C64};
use crate::phasenoise::{OscillatorBank, OscillatorTopology};

/// Tolerance on `X_t X_t^H = L_t I` for non-integer (DFT) training.
const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Least-squares channel estimate `Y_t X_t^H / L_t` for orthogonal training.
pub fn estimate_channel(yt: &CMatrix, xt: &CMatrix) -> Result<CMatrix> {
    if yt.cols() != xt.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} received training columns for {} transmitted",
            yt.cols(),
            xt.cols()
        )));
    }
    let l_t = xt.cols() as f64;
    let deviation = (xt * &xt.adjoint()).sub(&CMatrix::identity(xt.rows()).scale(l_t)).max_abs();
    if deviation > ORTHOGONALITY_TOL * l_t {
        return Err(Error::NonOrthogonalTraining { deviation });
    }
    Ok((yt * &xt.adjoint()).scale(1.0 / l_t))
}

/// `pinv(h_hat) y`.
pub fn zf_equalize(h_hat: &CMatrix, y: &[C64]) -> Result<Vec<C64>> {
    if y.len() != h_hat.rows() {
        return Err(Error::DimensionMismatch(format!("{} samples for {} receive antennas", y.len(), h_hat.rows())));
    }
    Ok(pinv(h_hat)?.mul_vec(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerMode {
    /// One independent loop per stream.
    PerStream,
    /// Per-stream updates followed by replacing every estimate with their
    /// mean (one shared oscillator at each end).
    Averaged,
}

/// Tracker mode selection in a receiver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerSelect {
    /// Averaged for common/common wiring, per-stream otherwise.
    Auto,
    Fixed(TrackerMode),
}

/// First-order decision-directed phase loop,
/// `theta(n+1) = theta(n) + alpha * arg(x_hat(n) conj(x_bar(n)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PnTracker {
    alpha: f64,
    theta_hat: Vec<f64>,
    mode: TrackerMode,
}

impl PnTracker {
    pub fn new(streams: usize, alpha: f64, mode: TrackerMode) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, theta_hat: vec![0.0; streams], mode })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> TrackerMode {
        self.mode
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn reset(&mut self) {
        self.theta_hat.iter_mut().for_each(|t| *t = 0.0);
    }

    /// Derotate one equalised symbol vector with the current estimates, detect
    /// it, and advance the estimates for the next symbol.
    pub fn step(&mut self, raw: &[C64], c: &Constellation, xhat: &mut [C64], labels: &mut [usize]) {
        for (i, &r) in raw.iter().enumerate() {
            let z = r * C64::from_polar(1.0, -self.theta_hat[i]);
            let label = c.nearest(z);
            xhat[i] = z;
            labels[i] = label;
        }
        for i in 0..raw.len() {
            self.theta_hat[i] += self.alpha * (xhat[i] * c.point(labels[i]).conj()).arg();
        }
        if self.mode == TrackerMode::Averaged && !self.theta_hat.is_empty() {
            let mean = self.theta_hat.iter().sum::<f64>() / self.theta_hat.len() as f64;
            self.theta_hat.iter_mut().for_each(|t| *t = mean);
        }
    }
}

/// One tracker step; see [`PnTracker::step`].
pub fn track_and_compensate(
    tracker: &mut PnTracker,
    raw: &[C64],
    c: &Constellation,
) -> (Vec<C64>, Vec<usize>) {
    let mut xhat = vec![C64::new(0.0, 0.0); raw.len()];
    let mut labels = vec![0; raw.len()];
    tracker.step(raw, c, &mut xhat, &mut labels);
    (xhat, labels)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "alpha", reason: format!("loop gain must lie in [0, 1], got {alpha}") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxConfig {
    pub compensation: bool,
    pub alpha: f64,
    pub tracker: TrackerSelect,
    /// Equalise with the true channel instead of the training estimate.
    pub perfect_csi: bool,
    /// Add receiver noise to the training block. Off by default: the
    /// estimate then sees the training-time phase noise but no AWGN.
    pub training_noise: bool,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self { compensation: false, alpha: 0.1, tracker: TrackerSelect::Auto, perfect_csi: false, training_noise: false }
    }
}

impl RxConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
    }

    pub fn tracker_mode(&self, topology: OscillatorTopology) -> TrackerMode {
        match self.tracker {
            TrackerSelect::Fixed(m) => m,
            TrackerSelect::Auto if topology.is_fully_common() => TrackerMode::Averaged,
            TrackerSelect::Auto => TrackerMode::PerStream,
        }
    }
}

/// Noise-free received block `Theta_Rx(n) H Theta_Tx(n) x(n)` for every
/// column of the frame.
pub fn propagate(h: &CMatrix, bank: &OscillatorBank, frame: &Frame) -> Result<CMatrix> {
    let n = frame.n;
    if h.rows() != n || h.cols() != n || bank.antennas() != n || bank.len() < frame.l_f() {
        return Err(Error::DimensionMismatch(format!(
            "channel {}x{}, {} oscillator paths of length {}, frame {}x{}",
            h.rows(),
            h.cols(),
            bank.antennas(),
            bank.len(),
            n,
            frame.l_f()
        )));
    }
    let rotated_tx = CMatrix::from_fn(n, frame.l_f(), |i, t| frame.x[(i, t)] * C64::from_polar(1.0, bank.tx[i][t]));
    let mut y = h * &rotated_tx;
    for t in 0..frame.l_f() {
        for i in 0..n {
            y[(i, t)] *= C64::from_polar(1.0, bank.rx[i][t]);
        }
    }
    Ok(y)
}

/// Received frame split into its noise-free part and a unit-variance
/// CN(0, 1) noise realisation; the receiver sees `clean + sigma_w * noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub clean: CMatrix,
    pub noise: CMatrix,
}

impl ReceivedFrame {
    pub fn new(clean: CMatrix, rs: &mut RandomSource) -> Self {
        let (n, l_f) = (clean.rows(), clean.cols());
        let mut noise = CMatrix::zeros(n, l_f);
        for t in 0..l_f {
            for i in 0..n {
                noise[(i, t)] = rs.cgauss(1.0);
            }
        }
        Self { clean, noise }
    }

    /// `clean + sigma * noise`.
    pub fn observed(&self, sigma: f64) -> CMatrix {
        self.clean.add(&self.noise.scale(sigma))
    }
}

/// Zero-forced data block, again split as `signal + sigma_w * noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedFrame {
    pub h_hat: CMatrix,
    pub signal: CMatrix,
    pub noise: CMatrix,
}

/// Estimate (or take) the channel and zero-force the data part of `rx`.
///
/// `sigma` is the noise standard deviation seen on the training block; it is
/// only used when `cfg.training_noise` is set.
pub fn equalize(rx: &ReceivedFrame, frame: &Frame, h: &CMatrix, cfg: &RxConfig, sigma: f64) -> Result<EqualizedFrame> {
    let h_hat = if cfg.perfect_csi {
        h.clone()
    } else {
        let yt = rx.clean.columns(0, frame.l_t);
        let yt = if cfg.training_noise { yt.add(&rx.noise.columns(0, frame.l_t).scale(sigma)) } else { yt };
        estimate_channel(&yt, &frame.training())?
    };
    let g = pinv(&h_hat)?;
    let signal = &g * &rx.clean.columns(frame.l_t, frame.l_d);
    let noise = &g * &rx.noise.columns(frame.l_t, frame.l_d);
    Ok(EqualizedFrame { h_hat, signal, noise })
}

/// Detect every data symbol of an equalised frame at noise level `sigma`,
/// calling `sink(stream, t, x_hat, label)` for each decision.
pub fn detect_with(
    eq: &EqualizedFrame,
    frame: &Frame,
    sigma: f64,
    cfg: &RxConfig,
    mode: TrackerMode,
    c: &Constellation,
    mut sink: impl FnMut(usize, usize, C64, usize),
) -> Result<()> {
    let n = frame.n;
    let mut tracker = PnTracker::new(n, cfg.alpha, mode)?;
    let mut raw = vec![C64::new(0.0, 0.0); n];
    let mut xhat = vec![C64::new(0.0, 0.0); n];
    let mut labels = vec![0usize; n];
    for t in 0..frame.l_d {
        for i in 0..n {
            raw[i] = eq.signal[(i, t)] + eq.noise[(i, t)] * sigma;
        }
        if cfg.compensation {
            tracker.step(&raw, c, &mut xhat, &mut labels);
        } else {
            for i in 0..n {
                xhat[i] = raw[i];
                labels[i] = c.nearest(raw[i]);
            }
        }
        for i in 0..n {
            sink(i, t, xhat[i], labels[i]);
        }
    }
    Ok(())
}

/// Detect and score an equalised frame.
pub fn detect(
    eq: &EqualizedFrame,
    frame: &Frame,
    sigma: f64,
    cfg: &RxConfig,
    mode: TrackerMode,
    c: &Constellation,
) -> Result<TrialResult> {
    let mut errors = 0u64;
    let mut err_energy = 0.0;
    let mut ref_energy = 0.0;
    detect_with(eq, frame, sigma, cfg, mode, c, |i, t, z, label| {
        let sent = frame.data_label(i, t);
        let x = c.point(sent);
        err_energy += (x - z).norm_sqr();
        ref_energy += x.norm_sqr();
        errors += u64::from(label != sent);
    })?;
    Ok(TrialResult::frame((frame.n * frame.l_d) as u64, errors, err_energy, ref_energy))
}

/// Full receive chain for one frame at a single SNR.
#[allow(clippy::too_many_arguments)]
pub fn run_frame(
    h: &CMatrix,
    bank: &OscillatorBank,
    frame: &Frame,
    topology: OscillatorTopology,
    sigma2_w: f64,
    cfg: &RxConfig,
    c: &Constellation,
    rs: &mut RandomSource,
) -> Result<TrialResult> {
    if !(sigma2_w >= 0.0) {
        return Err(Error::NegativeVariance(sigma2_w));
    }
    cfg.validate()?;
    let rx = ReceivedFrame::new(propagate(h, bank, frame)?, rs);
    let sigma = sigma2_w.sqrt();
    let eq = equalize(&rx, frame, h, cfg, sigma)?;
    detect(&eq, frame, sigma, cfg, cfg.tracker_mode(topology), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_dft, rician_mix, sample_nlos, RicianFactor};
    use crate::metrics::noise_variance;
    use crate::modem::{build_frame, ConstellationKind, Training};
    use crate::phasenoise::{oscillator_bank, OscillatorModel, WienerModel};

    fn qam16() -> Constellation {
        Constellation::new(ConstellationKind::Qam16)
    }

    fn frame(n: usize, l_d: usize, seed: u64) -> Frame {
        build_frame(n, l_d, &qam16(), Training::Hadamard, &mut RandomSource::new(seed, 0)).unwrap()
    }

    fn ideal_bank(n: usize, len: usize) -> OscillatorBank {
        OscillatorBank { tx: vec![vec![0.0; len]; n], rx: vec![vec![0.0; len]; n] }
    }

    fn wiener_bank(topology: OscillatorTopology, n: usize, len: usize, sigma2: f64, seed: u64) -> OscillatorBank {
        let w = OscillatorModel::Wiener(WienerModel::new(sigma2).unwrap());
        oscillator_bank(topology, &w, &w, n, len, &RandomSource::new(seed, 1))
    }

    #[test]
    fn estimate_exact_without_impairments() {
        let f = frame(4, 0, 1);
        let mut rs = RandomSource::new(2, 2);
        let h = rician_mix(&los_dft(4), &sample_nlos(4, &mut rs), RicianFactor::from_db(10.0).unwrap()).unwrap().h;
        let yt = &h * &f.training();
        assert!(estimate_channel(&yt, &f.training()).unwrap().sub(&h).max_abs() < 1e-12);
    }

    #[test]
    fn estimate_rejects_non_orthogonal_training() {
        let xt = CMatrix::from_fn(2, 2, |_, _| C64::new(1.0, 0.0));
        assert!(matches!(estimate_channel(&xt, &xt), Err(Error::NonOrthogonalTraining { .. })));
    }

    #[test]
    fn estimate_error_energy_matches_ls_covariance() {
        let n = 4;
        let f = frame(n, 0, 3);
        let h = los_dft(n);
        let s2: f64 = 0.1;
        let mut rs = RandomSource::new(5, 0);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let rx = ReceivedFrame::new(&h * &f.training(), &mut rs);
            let h_hat = estimate_channel(&rx.observed(s2.sqrt()), &f.training()).unwrap();
            acc += h_hat.sub(&h).frobenius_norm().powi(2);
        }
        let want = (n * n) as f64 * s2 / n as f64;
        assert!((acc / trials as f64 / want - 1.0).abs() < 0.05, "{} vs {want}", acc / trials as f64);
    }

    #[test]
    fn frozen_common_phase_rotates_the_estimate() {
        let n = 4;
        let f = frame(n, 0, 4);
        let h = los_dft(n);
        let psi = 0.3;
        let bank = OscillatorBank { tx: vec![vec![0.1; n]; n], rx: vec![vec![psi - 0.1; n]; n] };
        let yt = propagate(&h, &bank, &f).unwrap();
        let h_hat = estimate_channel(&yt, &f.training()).unwrap();
        assert!(h_hat.sub(&h.scale_complex(C64::from_polar(1.0, psi))).max_abs() < 1e-12);
    }

    #[test]
    fn zf_basics() {
        let y = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.25)];
        assert_eq!(zf_equalize(&CMatrix::identity(2), &y).unwrap(), y);
        let h = los_dft(4);
        let x: Vec<C64> = (0..4).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let back = zf_equalize(&h, &h.mul_vec(&x)).unwrap();
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).norm() < 1e-10));
        assert!(zf_equalize(&CMatrix::zeros(2, 2), &y).is_err());
    }

    #[test]
    fn tracker_zero_error_and_zero_gain() {
        let c = qam16();
        let raw: Vec<C64> = (0..4).map(|i| c.point(i * 3)).collect();
        let mut t = PnTracker::new(4, 0.1, TrackerMode::PerStream).unwrap();
        for _ in 0..10 {
            let (xhat, labels) = track_and_compensate(&mut t, &raw, &c);
            assert_eq!(labels, vec![0, 3, 6, 9]);
            assert_eq!(xhat, raw);
        }
        assert!(t.theta_hat().iter().all(|&th| th == 0.0));

        let rotated: Vec<C64> = raw.iter().map(|z| z * C64::from_polar(1.0, 0.05)).collect();
        let mut frozen = PnTracker::new(4, 0.0, TrackerMode::PerStream).unwrap();
        let (xhat, _) = track_and_compensate(&mut frozen, &rotated, &c);
        assert_eq!(xhat, rotated);
        assert!(frozen.theta_hat().iter().all(|&th| th == 0.0));
        assert!(PnTracker::new(4, 1.5, TrackerMode::PerStream).is_err());
    }

    #[test]
    fn tracker_converges_geometrically_on_static_rotation() {
        let c = qam16();
        let phi = 5f64.to_radians();
        let mut rs = RandomSource::new(6, 0);
        for mode in [TrackerMode::PerStream, TrackerMode::Averaged] {
            let mut t = PnTracker::new(4, 0.1, mode).unwrap();
            for _ in 0..200 {
                let raw: Vec<C64> = (0..4).map(|_| c.point(rs.index(16)) * C64::from_polar(1.0, phi)).collect();
                track_and_compensate(&mut t, &raw, &c);
            }
            for &th in t.theta_hat() {
                // (1 - alpha)^200 * 5 degrees is far below the bound
                assert!((th - phi).abs() < 0.2f64.to_radians(), "{mode:?}: {}", th.to_degrees());
            }
        }
    }

    #[test]
    fn averaged_mode_keeps_estimates_equal() {
        let c = qam16();
        let mut t = PnTracker::new(3, 0.5, TrackerMode::Averaged).unwrap();
        let raw = vec![c.point(0) * C64::from_polar(1.0, 0.1), c.point(5), c.point(7) * C64::from_polar(1.0, -0.04)];
        track_and_compensate(&mut t, &raw, &c);
        let want = 0.5 * (0.1 + 0.0 - 0.04) / 3.0;
        assert!(t.theta_hat().iter().all(|&th| (th - want).abs() < 1e-12));
    }

    #[test]
    fn psk_tracking_is_scale_invariant() {
        let c = Constellation::new(ConstellationKind::Psk8);
        let mut rs = RandomSource::new(8, 0);
        let mut a = PnTracker::new(2, 0.1, TrackerMode::PerStream).unwrap();
        let mut b = a.clone();
        for _ in 0..100 {
            let raw: Vec<C64> = (0..2).map(|_| c.point(rs.index(8)) * C64::from_polar(1.0, 0.2) + rs.cgauss(0.01)).collect();
            let scaled: Vec<C64> = raw.iter().map(|z| z * 3.7).collect();
            let (_, la) = track_and_compensate(&mut a, &raw, &c);
            let (_, lb) = track_and_compensate(&mut b, &scaled, &c);
            assert_eq!(la, lb);
            assert!(a.theta_hat().iter().zip(b.theta_hat()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn auto_tracker_mode_follows_topology() {
        let cfg = RxConfig::default();
        assert_eq!(cfg.tracker_mode(OscillatorTopology::COMMON), TrackerMode::Averaged);
        assert_eq!(cfg.tracker_mode(OscillatorTopology::INDIVIDUAL), TrackerMode::PerStream);
        assert_eq!(cfg.tracker_mode(OscillatorTopology::IND_TX_COM_RX), TrackerMode::PerStream);
    }

    #[test]
    fn noiseless_ideal_frame_is_error_free() {
        let f = frame(4, 500, 9);
        let cfg = RxConfig { perfect_csi: true, ..RxConfig::default() };
        let r = run_frame(&los_dft(4), &ideal_bank(4, 504), &f, OscillatorTopology::COMMON, 0.0, &cfg, &qam16(), &mut RandomSource::new(1, 1))
            .unwrap();
        assert_eq!(r.symbol_errors, 0);
        assert_eq!(r.err_energy(), 0.0);
    }

    #[test]
    fn common_oscillators_reduce_to_scalar_rotation() {
        let n = 4;
        let f = frame(n, 300, 10);
        let bank = wiener_bank(OscillatorTopology::COMMON, n, f.l_f(), 1e-3, 11);
        let mut rs = RandomSource::new(12, 0);
        let h = rician_mix(&los_dft(n), &sample_nlos(n, &mut rs), RicianFactor::from_db(10.0).unwrap()).unwrap().h;
        let y = propagate(&h, &bank, &f).unwrap();
        for t in 0..f.l_f() {
            let rot = C64::from_polar(1.0, bank.tx[0][t] + bank.rx[0][t]);
            let want = h.mul_vec(&f.x.column(t));
            for i in 0..n {
                assert!((y[(i, t)] - rot * want[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn individual_tx_common_rx_phases_add_per_stream() {
        let n = 4;
        let f = frame(n, 200, 13);
        let bank = wiener_bank(OscillatorTopology::IND_TX_COM_RX, n, f.l_f(), 1e-3, 14);
        let h = los_dft(n);
        let rx = ReceivedFrame { clean: propagate(&h, &bank, &f).unwrap(), noise: CMatrix::zeros(n, f.l_f()) };
        let cfg = RxConfig { perfect_csi: true, ..RxConfig::default() };
        let eq = equalize(&rx, &f, &h, &cfg, 0.0).unwrap();
        for t in 0..f.l_d {
            for i in 0..n {
                let col = f.l_t + t;
                let want = f.x[(i, col)] * C64::from_polar(1.0, bank.tx[i][col] + bank.rx[0][col]);
                assert!((eq.signal[(i, t)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn no_pn_evm_matches_snr() {
        let n = 4;
        let c = qam16();
        let cfg = RxConfig { perfect_csi: true, ..RxConfig::default() };
        let mut acc = TrialResult::default();
        for k in 0..100 {
            let f = frame(n, 1000, 100 + k);
            let r = run_frame(
                &los_dft(n),
                &ideal_bank(n, f.l_f()),
                &f,
                OscillatorTopology::COMMON,
                noise_variance(20.0, n),
                &cfg,
                &c,
                &mut RandomSource::new(15, k),
            )
            .unwrap();
            acc.merge(&r);
        }
        assert!((acc.evm().unwrap() / 0.1 - 1.0).abs() < 0.02, "{}", acc.evm().unwrap());
    }

    #[test]
    fn zf_is_unbiased_without_pn() {
        let n = 4;
        let f = frame(n, 1, 16);
        let h = los_dft(n);
        let cfg = RxConfig { perfect_csi: true, ..RxConfig::default() };
        let mut rs = RandomSource::new(17, 0);
        let trials = 20_000;
        let sigma = noise_variance(10.0, n).sqrt();
        let mut mean = vec![C64::new(0.0, 0.0); n];
        for _ in 0..trials {
            let rx = ReceivedFrame::new(propagate(&h, &ideal_bank(n, f.l_f()), &f).unwrap(), &mut rs);
            let eq = equalize(&rx, &f, &h, &cfg, sigma).unwrap();
            for i in 0..n {
                mean[i] += eq.signal[(i, 0)] + eq.noise[(i, 0)] * sigma;
            }
        }
        // per-stream noise variance after ZF is sigma^2 / N = 0.1
        let bound = 3.0 * (0.1 / trials as f64).sqrt();
        for i in 0..n {
            let m = mean[i] / trials as f64;
            assert!((m - f.x[(i, f.l_t)]).norm() < bound * 1.5, "stream {i}: {m}");
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let f = frame(4, 10, 1);
        assert!(propagate(&los_dft(2), &ideal_bank(4, 14), &f).is_err());
        assert!(propagate(&los_dft(4), &ideal_bank(4, 5), &f).is_err());
    }
}
