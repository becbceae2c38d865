//! LOS MIMO channel matrices and Rician mixing with NLOS scattering.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, CMatrix, RandomSource, C64};

/// Linear Rician factor; `f64::INFINITY` means pure LOS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianFactor(f64);

impl RicianFactor {
    pub const PURE_LOS: RicianFactor = RicianFactor(f64::INFINITY);

    pub fn linear(k: f64) -> Result<Self> {
        if k.is_nan() || k < 0.0 {
            return Err(Error::InvalidParameter { name: "k", reason: format!("Rician factor must be >= 0, got {k}") });
        }
        Ok(Self(k))
    }

    pub fn from_db(k_db: f64) -> Result<Self> {
        if k_db == f64::INFINITY {
            return Ok(Self::PURE_LOS);
        }
        Self::linear(10f64.powf(k_db / 10.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_pure_los(self) -> bool {
        self.0.is_infinite()
    }

    /// `(sqrt(K/(1+K)), sqrt(1/(1+K)))`.
    pub fn weights(self) -> (f64, f64) {
        if self.0.is_infinite() {
            (1.0, 0.0)
        } else {
            ((self.0 / (1.0 + self.0)).sqrt(), (1.0 / (1.0 + self.0)).sqrt())
        }
    }
}

/// Channel gain matrix with its LOS and NLOS parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: CMatrix,
    pub h_los: CMatrix,
    pub h_nlos: CMatrix,
    pub k: RicianFactor,
}

/// Canonical unit-modulus LOS matrix with `H^H H = N I`.
pub fn los_dft(n: usize) -> CMatrix {
    dft_matrix(n)
}

/// Two parallel broadside uniform linear arrays facing each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaGeometry {
    pub wavelength: f64,
    pub distance: f64,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
    pub antennas: usize,
}

impl UlaGeometry {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be a positive length, got {v}") })
            }
        };
        check("wavelength", self.wavelength)?;
        check("distance", self.distance)?;
        check("tx_spacing", self.tx_spacing)?;
        check("rx_spacing", self.rx_spacing)?;
        if self.antennas == 0 {
            return Err(Error::InvalidParameter { name: "antennas", reason: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// Spherical-wave LOS channel between two ULAs, unit-modulus entries
/// `exp(j 2 pi r_mn / lambda)`.
pub fn ula_channel(g: &UlaGeometry) -> Result<CMatrix> {
    g.validate()?;
    let n = g.antennas;
    let centre = (n as f64 - 1.0) / 2.0;
    Ok(CMatrix::from_fn(n, n, |m, k| {
        let y_rx = (m as f64 - centre) * g.rx_spacing;
        let y_tx = (k as f64 - centre) * g.tx_spacing;
        let r = g.distance.hypot(y_rx - y_tx);
        C64::from_polar(1.0, 2.0 * PI * (r / g.wavelength).fract())
    }))
}

/// Spacing product `d_t * d_r = lambda R / N` that makes a ULA pair unitary up
/// to scale.
pub fn optimal_spacing(wavelength: f64, distance: f64, antennas: usize) -> f64 {
    wavelength * distance / antennas as f64
}

/// `H = sqrt(K/(1+K)) H_los + sqrt(1/(1+K)) H_nlos`.
pub fn rician_mix(h_los: &CMatrix, h_nlos: &CMatrix, k: RicianFactor) -> Result<ChannelMatrix> {
    if h_los.rows() != h_nlos.rows() || h_los.cols() != h_nlos.cols() {
        return Err(Error::DimensionMismatch(format!(
            "LOS part is {}x{}, NLOS part is {}x{}",
            h_los.rows(),
            h_los.cols(),
            h_nlos.rows(),
            h_nlos.cols()
        )));
    }
    let h = if k.is_pure_los() {
        h_los.clone()
    } else if k.value() == 0.0 {
        h_nlos.clone()
    } else {
        let (w_los, w_nlos) = k.weights();
        h_los.scale(w_los).add(&h_nlos.scale(w_nlos))
    };
    Ok(ChannelMatrix { h, h_los: h_los.clone(), h_nlos: h_nlos.clone(), k })
}

/// `N x N` matrix of i.i.d. CN(0, 1) entries.
pub fn sample_nlos(n: usize, rs: &mut RandomSource) -> CMatrix {
    // Fill row by row so the draw order does not depend on storage layout.
    let data: Vec<C64> = (0..n * n).map(|_| rs.cgauss(1.0)).collect();
    CMatrix::from_row_slice(n, n, &data)
}

/// `|| H^H H / N - I ||_F`, the distance of `H` from scaled-unitary.
pub fn unitarity_error(h: &CMatrix) -> f64 {
    let n = h.cols() as f64;
    (&h.adjoint() * h).scale(1.0 / n).sub(&CMatrix::identity(h.cols())).frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pinv;

    fn geometry(n: usize, spacing: f64) -> UlaGeometry {
        UlaGeometry { wavelength: 5e-3, distance: 100.0, tx_spacing: spacing, rx_spacing: spacing, antennas: n }
    }

    #[test]
    fn los_dft_properties() {
        assert!((los_dft(1)[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let h = los_dft(4);
        assert!(h.inner().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(unitarity_error(&h) < 1e-12);
        assert!((h.condition_number() - 1.0).abs() < 1e-9);
        for s in h.singular_values() {
            assert!((s - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zf_noise_covariance_on_canonical_los() {
        // pinv(H) w for w ~ CN(0, s2 I) has covariance (s2 / N) I.
        let n = 4;
        let s2 = 0.5;
        let g = pinv(&los_dft(n)).unwrap();
        let mut rs = RandomSource::new(3, 9);
        let trials = 100_000;
        let mut cov = vec![C64::new(0.0, 0.0); n * n];
        for _ in 0..trials {
            let w: Vec<C64> = (0..n).map(|_| rs.cgauss(s2)).collect();
            let z = g.mul_vec(&w);
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] += z[i] * z[j].conj();
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let c = cov[i * n + j] / trials as f64;
                if i == j {
                    assert!((c.re / (s2 / n as f64) - 1.0).abs() < 0.03, "diag {c}");
                } else {
                    assert!(c.norm() < 0.03 * s2 / n as f64, "off-diag {c}");
                }
            }
        }
    }

    #[test]
    fn ula_single_antenna_is_unit_scalar() {
        let h = ula_channel(&geometry(1, 0.5)).unwrap();
        assert!((h[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ula_at_design_spacing_is_near_unitary() {
        assert!((optimal_spacing(5e-3, 100.0, 2) - 0.25).abs() < 1e-15);
        assert!((optimal_spacing(5e-3, 100.0, 4) - 0.125).abs() < 1e-15);
        let h = ula_channel(&geometry(2, 0.5)).unwrap();
        assert!(unitarity_error(&h) < 0.01);
        assert!(h.condition_number() < 1.05);
        let bad = ula_channel(&geometry(2, 0.25)).unwrap();
        assert!(unitarity_error(&bad) > 0.5);
    }

    #[test]
    fn ula_design_rule_holds_up_to_eight_antennas() {
        for n in 1..=8 {
            let d = optimal_spacing(5e-3, 100.0, n).sqrt();
            let h = ula_channel(&geometry(n, d)).unwrap();
            assert!(unitarity_error(&h) <= 0.02, "N={n}: {}", unitarity_error(&h));
            assert!(h.condition_number() < 1.05, "N={n}");
        }
    }

    #[test]
    fn ula_rejects_bad_geometry() {
        assert!(ula_channel(&geometry(2, 0.0)).is_err());
        assert!(ula_channel(&geometry(0, 0.5)).is_err());
    }

    #[test]
    fn rician_limits_and_weights() {
        let mut rs = RandomSource::new(5, 0);
        let los = los_dft(4);
        let nlos = sample_nlos(4, &mut rs);
        assert_eq!(rician_mix(&los, &nlos, RicianFactor::PURE_LOS).unwrap().h, los);
        assert_eq!(rician_mix(&los, &nlos, RicianFactor::linear(0.0).unwrap()).unwrap().h, nlos);
        let (a, b) = RicianFactor::from_db(10.0).unwrap().weights();
        assert!((a - 0.95346).abs() < 5e-6 && (b - 0.30151).abs() < 5e-6);
        assert!(rician_mix(&los, &CMatrix::zeros(3, 3), RicianFactor::PURE_LOS).is_err());
        assert!(RicianFactor::linear(-1.0).is_err());
    }

    #[test]
    fn nlos_moments() {
        let mut rs = RandomSource::new(8, 1);
        let draws = 10_000;
        let n = 4;
        let mut gram = CMatrix::zeros(n, n);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..draws {
            let h = sample_nlos(n, &mut rs);
            gram = gram.add(&(&h.adjoint() * &h));
            sum_sq += h.inner().iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += n * n;
        }
        let var = sum_sq / count as f64;
        assert!((0.99..=1.01).contains(&var), "entry variance {var}");
        let mean_gram = gram.scale(1.0 / (draws as f64 * n as f64));
        assert!(mean_gram.sub(&CMatrix::identity(n)).max_abs() < 0.02);
    }

    #[test]
    fn nlos_is_reproducible() {
        let a = sample_nlos(4, &mut RandomSource::new(1, 1));
        let b = sample_nlos(4, &mut RandomSource::new(1, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn rician_preserves_expected_frobenius_norm() {
        let n = 4;
        let los = los_dft(n);
        for k_db in [f64::INFINITY, 10.0, 0.0, -10.0] {
            let k = RicianFactor::from_db(k_db).unwrap();
            let mut rs = RandomSource::new(21, 0);
            let draws = 10_000;
            let mean: f64 = (0..draws)
                .map(|_| rician_mix(&los, &sample_nlos(n, &mut rs), k).unwrap().h.frobenius_norm().powi(2))
                .sum::<f64>()
                / draws as f64;
            assert!((mean / (n * n) as f64 - 1.0).abs() < 0.02, "K={k_db} dB: {mean}");
        }
    }
}
