//! Trial accumulators and the EVM/SER figures of merit.
//!
//! Energies are accumulated per frame in floating point and then folded into
//! unsigned fixed-point totals (64 fractional bits). Fixed-point addition is
//! associative, so merging trial results in any order or grouping yields
//! bit-identical statistics.

use crate::error::{Error, Result};

const FRAC_BITS: i32 = 64;

fn to_fixed(x: f64) -> u128 {
    debug_assert!(x >= 0.0 && x.is_finite(), "{x}");
    (x * 2f64.powi(FRAC_BITS)).round() as u128
}

fn from_fixed(v: u128) -> f64 {
    v as f64 / 2f64.powi(FRAC_BITS)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TrialResult {
    pub frames: u64,
    pub symbols: u64,
    pub symbol_errors: u64,
    err_energy: u128,
    ref_energy: u128,
    frame_evm_sum: u128,
}

impl TrialResult {
    /// Result of one frame given its summed squared error and reference
    /// energies.
    pub fn frame(symbols: u64, symbol_errors: u64, err_energy: f64, ref_energy: f64) -> Self {
        debug_assert!(symbol_errors <= symbols);
        let frame_evm = if ref_energy > 0.0 { (err_energy / ref_energy).sqrt() } else { 0.0 };
        Self {
            frames: 1,
            symbols,
            symbol_errors,
            err_energy: to_fixed(err_energy),
            ref_energy: to_fixed(ref_energy),
            frame_evm_sum: to_fixed(frame_evm),
        }
    }

    pub fn merge(&mut self, other: &TrialResult) {
        self.frames += other.frames;
        self.symbols += other.symbols;
        self.symbol_errors += other.symbol_errors;
        self.err_energy += other.err_energy;
        self.ref_energy += other.ref_energy;
        self.frame_evm_sum += other.frame_evm_sum;
    }

    pub fn merged<'a>(results: impl IntoIterator<Item = &'a TrialResult>) -> TrialResult {
        results.into_iter().fold(TrialResult::default(), |mut acc, r| {
            acc.merge(r);
            acc
        })
    }

    pub fn err_energy(&self) -> f64 {
        from_fixed(self.err_energy)
    }

    pub fn ref_energy(&self) -> f64 {
        from_fixed(self.ref_energy)
    }

    /// EVM averaged over frames, each frame contributing
    /// `sqrt(sum |x - x_hat|^2 / sum |x|^2)`.
    pub fn evm(&self) -> Result<f64> {
        if self.frames == 0 || self.ref_energy == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok(from_fixed(self.frame_evm_sum) / self.frames as f64)
    }

    /// RMS EVM pooled over all symbols of all frames.
    pub fn evm_pooled(&self) -> Result<f64> {
        if self.ref_energy == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok((self.err_energy() / self.ref_energy()).sqrt())
    }

    pub fn ser(&self) -> Result<f64> {
        if self.symbols == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok(self.symbol_errors as f64 / self.symbols as f64)
    }
}

/// `sigma2_w = N / SNR_lin` (total transmit power normalised to N).
pub fn noise_variance(snr_db: f64, antennas: usize) -> f64 {
    antennas as f64 / 10f64.powf(snr_db / 10.0)
}

/// `1 - ser_comp / ser_plain`; `None` when the uncompensated SER is zero.
pub fn rel_improvement(ser_plain: f64, ser_comp: f64) -> Option<f64> {
    (ser_plain > 0.0).then(|| 1.0 - ser_comp / ser_plain)
}

/// Exact symbol error rate of Gray-labelled square M-QAM on AWGN at
/// `Es/N0 = snr_lin`.
pub fn square_qam_ser(order: usize, snr_lin: f64) -> f64 {
    let m = order as f64;
    let side = m.sqrt();
    let q = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    let p = 2.0 * (1.0 - 1.0 / side) * q((3.0 * snr_lin / (m - 1.0)).sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noise_variance_values() {
        assert!((noise_variance(20.0, 4) - 0.04).abs() < 1e-15);
        assert!((noise_variance(0.0, 1) - 1.0).abs() < 1e-15);
        assert!((noise_variance(10.0, 16) - 1.6).abs() < 1e-14);
    }

    #[test]
    fn evm_and_ser_edge_cases() {
        let perfect = TrialResult::frame(1000, 0, 0.0, 1000.0);
        assert_eq!(perfect.evm().unwrap(), 0.0);
        assert_eq!(perfect.ser().unwrap(), 0.0);
        assert_eq!(TrialResult::frame(10, 10, 1.0, 1.0).ser().unwrap(), 1.0);
        assert!(matches!(TrialResult::default().evm(), Err(Error::EmptyAccumulator)));
        assert!(matches!(TrialResult::default().ser(), Err(Error::EmptyAccumulator)));
    }

    #[test]
    fn frame_average_differs_from_pooled() {
        let mut acc = TrialResult::frame(100, 0, 1.0, 100.0);
        acc.merge(&TrialResult::frame(100, 0, 25.0, 100.0));
        assert!((acc.evm().unwrap() - 0.3).abs() < 1e-15);
        assert!((acc.evm_pooled().unwrap() - (26.0f64 / 200.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rel_improvement_values() {
        assert_eq!(rel_improvement(0.2, 0.0), Some(1.0));
        assert_eq!(rel_improvement(0.2, 0.2), Some(0.0));
        assert_eq!(rel_improvement(0.0, 0.1), None);
        assert!((rel_improvement(0.2327, 0.1209).unwrap() - 0.4805).abs() < 1e-4);
    }

    #[test]
    fn qam_ser_closed_form() {
        // 16-QAM at 15 dB: p = 0.75 erfc(sqrt(SNR/10)), SER = 1 - (1 - p)^2.
        let snr = 10f64.powf(1.5);
        let p = 0.75 * libm::erfc((snr / 10.0).sqrt());
        assert!((square_qam_ser(16, snr) - (2.0 * p - p * p)).abs() < 1e-15);
        assert!((square_qam_ser(16, snr) - 0.01778).abs() < 1e-4);
        assert!(square_qam_ser(64, snr) > square_qam_ser(16, snr));
        assert!((square_qam_ser(4, 1e-12) - 0.75).abs() < 1e-6);
    }

    fn arb_result() -> impl Strategy<Value = TrialResult> {
        (1u64..2000, 0.0f64..1e3, 1e-3f64..1e3).prop_flat_map(|(symbols, err, reference)| {
            (0..=symbols).prop_map(move |errors| TrialResult::frame(symbols, errors, err, reference))
        })
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(results in prop::collection::vec(arb_result(), 1..20), rot in 0usize..20) {
            let forward = TrialResult::merged(&results);
            let mut shuffled = results.clone();
            shuffled.rotate_left(rot % results.len());
            shuffled.reverse();
            let backward = TrialResult::merged(&shuffled);
            prop_assert_eq!(forward, backward);
            let (left, right) = results.split_at(results.len() / 2);
            let mut grouped = TrialResult::merged(left);
            grouped.merge(&TrialResult::merged(right));
            prop_assert_eq!(forward, grouped);
            prop_assert_eq!(forward.evm().unwrap().to_bits(), grouped.evm().unwrap().to_bits());
        }

        #[test]
        fn pooled_evm_grows_with_larger_error(base in prop::collection::vec(arb_result(), 1..10), extra in 0.0f64..1e3) {
            let acc = TrialResult::merged(&base);
            let before = acc.evm_pooled().unwrap();
            // a frame whose per-symbol error energy exceeds the pooled ratio
            let reference = 100.0;
            let err = (before * before) * reference + extra;
            let mut after = acc;
            after.merge(&TrialResult::frame(100, 0, err, reference));
            prop_assert!(after.evm_pooled().unwrap() >= before * (1.0 - 1e-12));
        }
    }
}
