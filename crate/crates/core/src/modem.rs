//! Constellations, hard-decision detection and frame assembly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, hadamard, CMatrix, RandomSource, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Bpsk,
    Qam16,
    Qam64,
    Psk8,
    Psk16,
}

impl ConstellationKind {
    pub const ALL: [ConstellationKind; 5] = [Self::Bpsk, Self::Qam16, Self::Qam64, Self::Psk8, Self::Psk16];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bpsk => "bpsk",
            Self::Qam16 => "qam16",
            Self::Qam64 => "qam64",
            Self::Psk8 => "psk8",
            Self::Psk16 => "psk16",
        }
    }

    pub fn order(self) -> usize {
        match self {
            Self::Bpsk => 2,
            Self::Qam16 | Self::Psk16 => 16,
            Self::Qam64 => 64,
            Self::Psk8 => 8,
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| *c != '-' && *c != '_').collect();
        match key.as_str() {
            "bpsk" => Ok(Self::Bpsk),
            "qam16" | "16qam" => Ok(Self::Qam16),
            "qam64" | "64qam" => Ok(Self::Qam64),
            "psk8" | "8psk" => Ok(Self::Psk8),
            "psk16" | "16psk" => Ok(Self::Psk16),
            _ => Err(Error::UnknownConstellation(s.to_string())),
        }
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Unit-energy, Gray-labelled constellation. `points[label]` is the symbol
/// carrying bit label `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<C64>,
    /// For square QAM: maps an axis level position to its Gray label bits.
    axis_labels: Vec<usize>,
    scale: f64,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let m = kind.order();
        let c = match kind {
            ConstellationKind::Bpsk => Self {
                kind,
                points: vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
                axis_labels: Vec::new(),
                scale: 1.0,
            },
            ConstellationKind::Psk8 | ConstellationKind::Psk16 => Self {
                kind,
                points: (0..m).map(|label| C64::from_polar(1.0, 2.0 * PI * gray_inverse(label) as f64 / m as f64)).collect(),
                axis_labels: Vec::new(),
                scale: 1.0,
            },
            ConstellationKind::Qam16 | ConstellationKind::Qam64 => {
                let side = (m as f64).sqrt() as usize;
                let bits = side.trailing_zeros();
                // Mean energy of square M-QAM on odd-integer grid is 2(M-1)/3.
                let scale = (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
                let level = |pos: usize| (2.0 * pos as f64 - (side as f64 - 1.0)) / scale;
                let points = (0..m)
                    .map(|label| {
                        let ip = gray_inverse(label >> bits);
                        let qp = gray_inverse(label & (side - 1));
                        C64::new(level(ip), level(qp))
                    })
                    .collect();
                Self { kind, points, axis_labels: (0..side).map(gray).collect(), scale }
            }
        };
        debug_assert!((c.average_energy() - 1.0).abs() < 1e-12);
        c
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.points.len().trailing_zeros()
    }

    pub fn point(&self, label: usize) -> C64 {
        self.points[label]
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    fn closest_of(&self, z: C64, candidates: impl Iterator<Item = usize>) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for label in candidates {
            let d = (z - self.points[label]).norm_sqr();
            if d < best_d || (d == best_d && label < best) {
                best = label;
                best_d = d;
            }
        }
        best
    }

    /// Exhaustive minimum-distance search with lowest-label tie-break.
    pub fn nearest_exhaustive(&self, z: C64) -> usize {
        self.closest_of(z, 0..self.points.len())
    }

    /// Minimum-distance (ML under AWGN) decision with lowest-label tie-break.
    ///
    /// Slices to the nearest region and then compares exact distances over
    /// the neighbouring points, so ties on decision boundaries resolve the same
    /// way as an exhaustive search.
    pub fn nearest(&self, z: C64) -> usize {
        match self.kind {
            ConstellationKind::Bpsk => self.closest_of(z, 0..2),
            ConstellationKind::Psk8 | ConstellationKind::Psk16 => {
                if z.norm_sqr() == 0.0 {
                    // Every point is at distance 1; rounding in the stored
                    // points would otherwise pick an arbitrary one.
                    return 0;
                }
                let m = self.points.len() as i64;
                let pos = (z.arg() * m as f64 / (2.0 * PI)).round() as i64;
                self.closest_of(z, (-1..=1).map(|d| gray((pos + d).rem_euclid(m) as usize)))
            }
            ConstellationKind::Qam16 | ConstellationKind::Qam64 => {
                let side = self.axis_labels.len();
                let bits = side.trailing_zeros();
                let axis = |v: f64| {
                    let p = ((v * self.scale + side as f64 - 1.0) / 2.0).round();
                    p.clamp(0.0, side as f64 - 1.0) as usize
                };
                let window = |p: usize| p.saturating_sub(1)..=(p + 1).min(side - 1);
                let (ip, qp) = (axis(z.re), axis(z.im));
                let labels = window(ip)
                    .flat_map(|i| window(qp).map(move |q| (i, q)))
                    .map(|(i, q)| (self.axis_labels[i] << bits) | self.axis_labels[q]);
                self.closest_of(z, labels)
            }
        }
    }
}

/// Training sequence used for channel estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Training {
    /// BPSK Hadamard columns; fails if no Hadamard matrix of order N is
    /// constructible.
    Hadamard,
    /// Hadamard where possible, otherwise the unit-modulus DFT matrix.
    HadamardOrDft,
}

/// One transmitted frame: `L_t` training columns followed by `L_d` data
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub n: usize,
    pub l_t: usize,
    pub l_d: usize,
    /// `N x L_f` transmit symbols.
    pub x: CMatrix,
    /// Data labels, `data_indices[t * N + i]` for stream `i` at data slot `t`.
    pub data_indices: Vec<u16>,
    pub dft_training: bool,
}

impl Frame {
    pub fn l_f(&self) -> usize {
        self.l_t + self.l_d
    }

    pub fn training(&self) -> CMatrix {
        self.x.columns(0, self.l_t)
    }

    pub fn data_label(&self, stream: usize, t: usize) -> usize {
        self.data_indices[t * self.n + stream] as usize
    }
}

/// Training block for `n` streams (`L_t = n`).
pub fn training_block(n: usize, training: Training) -> Result<(CMatrix, bool)> {
    match hadamard(n) {
        Ok(h) => Ok((h.to_cmatrix(), false)),
        Err(e @ Error::HadamardOrder(_)) => match training {
            Training::Hadamard => Err(e),
            Training::HadamardOrDft => Ok((dft_matrix(n), true)),
        },
        Err(e) => Err(e),
    }
}

/// Assemble a frame with i.i.d. uniform data symbols.
pub fn build_frame(n: usize, l_d: usize, c: &Constellation, training: Training, rs: &mut RandomSource) -> Result<Frame> {
    let (xt, dft_training) = training_block(n, training)?;
    frame_with_training(&xt, dft_training, l_d, c, rs)
}

/// Assemble a frame around a precomputed training block.
pub fn frame_with_training(
    xt: &CMatrix,
    dft_training: bool,
    l_d: usize,
    c: &Constellation,
    rs: &mut RandomSource,
) -> Result<Frame> {
    if !xt.is_square() || xt.rows() == 0 {
        return Err(Error::NotSquare { rows: xt.rows(), cols: xt.cols() });
    }
    let n = xt.rows();
    let l_t = xt.cols();
    let m = c.order();
    let data_indices: Vec<u16> = (0..n * l_d).map(|_| rs.index(m) as u16).collect();
    let x = CMatrix::from_fn(n, l_t + l_d, |i, col| {
        if col < l_t {
            xt[(i, col)]
        } else {
            c.point(data_indices[(col - l_t) * n + i] as usize)
        }
    });
    Ok(Frame { n, l_t, l_d, x, data_indices, dft_training })
}
