//! Scenario files and phase-noise model specifications.
//!
//! A scenario is a flat `key = value` text file. `#` starts a comment, blank
//! lines are ignored, keys may appear at most once and unknown keys are
//! rejected.
//!
//! | key            | value                                                  | default      |
//! |----------------|--------------------------------------------------------|--------------|
//! | `id`           | free text used in the CSV `scenario_id` column         | file stem    |
//! | `antennas`     | N, or a comma-separated list of N values to sweep      | 4            |
//! | `snr_db`       | `a,b,c` list or inclusive `start:step:stop` range      | required     |
//! | `k_db`         | Rician factor in dB, `inf` for pure LOS                | `inf`        |
//! | `constellation`| `bpsk`, `qam16`, `qam64`, `psk8`, `psk16`              | `qam16`      |
//! | `data_len`     | L_d                                                    | 1000         |
//! | `frame_len`    | L_f = N + L_d, fixed across N (instead of `data_len`)  |              |
//! | `trials`       | frames per SNR point                                   | 2000         |
//! | `pn`           | `none`, `wiener`, `stationary`                         | `none`       |
//! | `sigma2`       | Wiener increment variance (with `pn = wiener`)         |              |
//! | `mask`         | preset name, mask file path or `f=dB,f=dB` inline      |              |
//! | `filter_len`   | stationary FIR length (odd)                            | 4097         |
//! | `topology`     | `tx/rx` with `common` or `individual` on each side     | `individual/individual` |
//! | `compensation` | `off`, `on`, `both`                                    | `off`        |
//! | `alpha`        | tracker loop gain in [0, 1]                            | 0.1          |
//! | `tracker`      | `auto`, `per_stream`, `averaged`                       | `auto`       |
//! | `perfect_csi`  | `true`/`false`                                         | `false`      |
//! | `training_noise` | add AWGN to the training block                       | `false`      |
//! | `training`     | `hadamard` or `hadamard_or_dft`                        | `hadamard`   |
//! | `seed`         | master seed                                            | 1            |

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::modem::{ConstellationKind, Training};
use crate::phasenoise::{sigma_from_beta, OscillatorTopology, PsdMask, DEFAULT_FILTER_LEN, DEFAULT_TS, MAX_FILTER_LEN};
use crate::receiver::{TrackerMode, TrackerSelect};

pub const DEFAULT_TRIALS: u64 = 2000;
pub const DEFAULT_DATA_LEN: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;

/// Where a stationary mask comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    Preset(String),
    Inline(PsdMask),
    File(PathBuf),
}

impl MaskSource {
    /// Preset name, `f=dB,f=dB,...` inline points, or a file path.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidMask("empty mask reference".into()));
        }
        if PsdMask::preset(s).is_some() {
            return Ok(Self::Preset(s.to_string()));
        }
        if s.contains('=') {
            let mut points = Vec::new();
            for pair in s.split(',') {
                let (f, l) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidMask(format!("`{pair}` is not `offset_hz=level_dbc`")))?;
                let num = |v: &str| {
                    v.trim().parse::<f64>().map_err(|_| Error::InvalidMask(format!("`{v}` is not a number")))
                };
                points.push((num(f)?, num(l)?));
            }
            return Ok(Self::Inline(PsdMask::new(points)?));
        }
        Ok(Self::File(PathBuf::from(s)))
    }

    /// Load the mask, reading files relative to `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<PsdMask> {
        match self {
            Self::Preset(name) => PsdMask::preset(name).ok_or_else(|| Error::UnknownPreset(name.clone())),
            Self::Inline(mask) => Ok(mask.clone()),
            Self::File(path) => {
                let full = match base {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full).map_err(|source| Error::File { path: full.clone(), source })?;
                PsdMask::parse(&text)
            }
        }
    }
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Preset(name) => f.write_str(name),
            Self::Inline(mask) => {
                let parts: Vec<String> = mask.points().iter().map(|(o, l)| format!("{o}={l}")).collect();
                f.write_str(&parts.join(","))
            }
            Self::File(path) => write!(f, "{}", path.display()),
        }
    }
}

/// Phase-noise configuration shared by both link ends.
#[derive(Debug, Clone, PartialEq)]
pub enum PnSpec {
    None,
    Wiener { sigma2: f64 },
    Stationary { mask: MaskSource, filter_len: usize },
}

impl PnSpec {
    pub fn model_name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Wiener { .. } => "wiener",
            Self::Stationary { .. } => "stationary",
        }
    }

    /// Value of the `sigma2_or_mask` CSV column.
    pub fn parameter_label(&self) -> String {
        match self {
            Self::None => String::new(),
            Self::Wiener { sigma2 } => format!("{sigma2:e}"),
            Self::Stationary { mask, .. } => mask.to_string(),
        }
    }
}

/// Model specification string used on the command line:
///
/// * `none`
/// * `wiener:<sigma2>`, e.g. `wiener:1e-4`
/// * `beta:<hz>`, Wiener model given by its 3 dB linewidth
/// * `mask:<preset | f=dB,f=dB,...>`
/// * `maskfile:<path>`
///
/// followed by optional `;taps=<odd count>` for stationary models.
impl FromStr for PnSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let err = |reason: String| Error::ModelSpec { spec: spec.to_string(), reason };
        let mut parts = spec.trim().split(';');
        let head = parts.next().unwrap_or("").trim();
        let mut taps = None;
        for opt in parts {
            match opt.trim().split_once('=') {
                Some(("taps", v)) => {
                    let n = v.trim().parse::<usize>().map_err(|_| err(format!("`{v}` is not a tap count")))?;
                    if n % 2 == 0 || n > MAX_FILTER_LEN {
                        return Err(err(format!("taps must be odd and at most {MAX_FILTER_LEN}, got {n}")));
                    }
                    taps = Some(n);
                }
                _ => return Err(err(format!("unknown option `{opt}`"))),
            }
        }
        let (kind, arg) = head.split_once(':').unwrap_or((head, ""));
        let number = |v: &str, what: &str| -> Result<f64> {
            let x = v.trim().parse::<f64>().map_err(|_| err(format!("`{v}` is not a {what}")))?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(err(format!("{what} must be finite and non-negative")));
            }
            Ok(x)
        };
        let spec = match kind.trim() {
            "none" if arg.is_empty() => Self::None,
            "wiener" => Self::Wiener { sigma2: number(arg, "variance")? },
            "beta" => Self::Wiener { sigma2: sigma_from_beta(number(arg, "linewidth")?, DEFAULT_TS) },
            "mask" => Self::Stationary {
                mask: match MaskSource::parse(arg)? {
                    MaskSource::File(_) => return Err(err(format!("`{arg}` is neither a preset nor inline points"))),
                    m => m,
                },
                filter_len: DEFAULT_FILTER_LEN,
            },
            "maskfile" if !arg.trim().is_empty() => {
                Self::Stationary { mask: MaskSource::File(PathBuf::from(arg.trim())), filter_len: DEFAULT_FILTER_LEN }
            }
            other => return Err(err(format!("unknown model `{other}`"))),
        };
        match (spec, taps) {
            (Self::Stationary { mask, .. }, Some(filter_len)) => Ok(Self::Stationary { mask, filter_len }),
            (_, Some(_)) => Err(err("taps only applies to stationary models".into())),
            (s, None) => Ok(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    Off,
    On,
    /// Run both receivers on the same received frames.
    Both,
}

impl Compensation {
    pub fn variants(self) -> &'static [bool] {
        match self {
            Self::Off => &[false],
            Self::On => &[true],
            Self::Both => &[false, true],
        }
    }
}

/// Frame length, given either as the data part alone or as the whole frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameLength {
    Data(usize),
    Frame(usize),
}

impl FrameLength {
    /// `L_d` for `n` antennas (training length `L_t = n`).
    pub fn data_len(self, n: usize) -> Result<usize> {
        match self {
            Self::Data(l_d) if l_d > 0 => Ok(l_d),
            Self::Frame(l_f) if l_f > n => Ok(l_f - n),
            _ => Err(Error::InvalidParameter {
                name: "frame_len",
                reason: format!("{self:?} leaves no data symbols after {n} training symbols"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub antennas: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub k_db: f64,
    pub constellation: ConstellationKind,
    pub length: FrameLength,
    pub trials: u64,
    pub pn: PnSpec,
    pub topology: OscillatorTopology,
    pub compensation: Compensation,
    pub alpha: f64,
    pub tracker: TrackerSelect,
    pub perfect_csi: bool,
    pub training_noise: bool,
    pub training: Training,
    pub seed: u64,
    /// Directory used to resolve relative mask paths.
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    /// Defaults for every key, with the given id and SNR grid.
    pub fn new(id: impl Into<String>, snr_db: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            antennas: vec![4],
            snr_db,
            k_db: f64::INFINITY,
            constellation: ConstellationKind::Qam16,
            length: FrameLength::Data(DEFAULT_DATA_LEN),
            trials: DEFAULT_TRIALS,
            pn: PnSpec::None,
            topology: OscillatorTopology::INDIVIDUAL,
            compensation: Compensation::Off,
            alpha: 0.1,
            tracker: TrackerSelect::Auto,
            perfect_csi: false,
            training_noise: false,
            training: Training::Hadamard,
            seed: DEFAULT_SEED,
            base_dir: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_scenario(text, None)
    }

    /// Read a scenario file; the id defaults to the file stem and relative
    /// mask paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        let mut s = parse_scenario(&text, stem)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.antennas.is_empty() || self.antennas.contains(&0) {
            return bad("antennas", "every antenna count must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db", "needs at least one finite value".into());
        }
        if self.k_db.is_nan() || self.k_db == f64::NEG_INFINITY {
            return bad("k_db", format!("{} is not a Rician factor", self.k_db));
        }
        for &n in &self.antennas {
            self.length.data_len(n)?;
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", format!("{} is outside [0, 1]", self.alpha));
        }
        match &self.pn {
            PnSpec::Wiener { sigma2 } if !(sigma2.is_finite() && *sigma2 >= 0.0) => {
                bad("sigma2", format!("{sigma2} is not a variance"))
            }
            PnSpec::Stationary { filter_len, .. } if filter_len % 2 == 0 || *filter_len > MAX_FILTER_LEN => {
                bad("filter_len", format!("must be odd and at most {MAX_FILTER_LEN}, got {filter_len}"))
            }
            _ => Ok(()),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn parse_f64(v: &str) -> Option<f64> {
    match v.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        other => other.parse().ok().filter(|x: &f64| x.is_finite()),
    }
}

/// `a,b,c` or inclusive `start:step:stop`.
pub fn parse_snr_list(v: &str) -> Option<Vec<f64>> {
    let fields: Vec<&str> = v.split(':').map(str::trim).collect();
    match fields.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (parse_f64(start)?, parse_f64(step)?, parse_f64(stop)?);
            if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
                return None;
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 10_000 {
                return None;
            }
            Some((0..count).map(|i| start + step * i as f64).collect())
        }
        [_] => v
            .split(',')
            .map(|s| parse_f64(s.trim()).filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .filter(|l| !l.is_empty()),
        _ => None,
    }
}

fn parse_scenario(text: &str, default_id: Option<String>) -> Result<Scenario> {
    let mut s = Scenario::new(default_id.unwrap_or_else(|| "scenario".into()), Vec::new());
    let mut seen = HashSet::new();
    let mut snr_seen = false;
    let mut pn_kind: Option<(usize, String)> = None;
    let mut sigma2: Option<(usize, f64)> = None;
    let mut mask: Option<(usize, MaskSource)> = None;
    let mut filter_len: Option<(usize, usize)> = None;
    let mut frame_len: Option<(usize, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |message: String| Error::Scenario { line: line_no, message };
        let (key, value) = line.split_once('=').ok_or_else(|| fail("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(fail(format!("`{key}` has no value")));
        }
        if !seen.insert(key.to_string()) {
            return Err(fail(format!("`{key}` given more than once")));
        }
        let invalid = |what: &str| fail(format!("invalid {what} `{value}`"));
        let uint = |what: &str| value.parse::<u64>().map_err(|_| invalid(what));
        let size = |what: &str| usize::try_from(uint(what)?).map_err(|_| invalid(what));
        let flag = |what: &str| parse_bool(value).ok_or_else(|| invalid(what));
        match key {
            "id" => s.id = value.to_string(),
            "antennas" => {
                s.antennas = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().ok().filter(|&n| (1..=1024).contains(&n)))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| invalid("antenna count"))?
            }
            "snr_db" => {
                s.snr_db = parse_snr_list(value).ok_or_else(|| invalid("SNR list"))?;
                snr_seen = true;
            }
            "k_db" => s.k_db = parse_f64(value).ok_or_else(|| invalid("Rician factor"))?,
            "constellation" => s.constellation = value.parse().map_err(|e: Error| fail(e.to_string()))?,
            "data_len" => s.length = FrameLength::Data(size("data length")?),
            "frame_len" => frame_len = Some((line_no, size("frame length")?)),
            "trials" => s.trials = uint("trial count")?,
            "pn" => pn_kind = Some((line_no, value.to_ascii_lowercase())),
            "sigma2" => sigma2 = Some((line_no, parse_f64(value).filter(|x| x.is_finite()).ok_or_else(|| invalid("variance"))?)),
            "mask" => mask = Some((line_no, MaskSource::parse(value).map_err(|e| fail(e.to_string()))?)),
            "filter_len" => filter_len = Some((line_no, size("filter length")?)),
            "topology" => s.topology = value.parse().map_err(|e: Error| fail(e.to_string()))?,
            "compensation" => {
                s.compensation = match value.to_ascii_lowercase().as_str() {
                    "both" => Compensation::Both,
                    other => match parse_bool(other) {
                        Some(true) => Compensation::On,
                        Some(false) => Compensation::Off,
                        None => return Err(invalid("compensation")),
                    },
                }
            }
            "alpha" => s.alpha = parse_f64(value).filter(|x| x.is_finite()).ok_or_else(|| invalid("loop gain"))?,
            "tracker" => {
                s.tracker = match value.to_ascii_lowercase().as_str() {
                    "auto" => TrackerSelect::Auto,
                    "per_stream" | "per-stream" => TrackerSelect::Fixed(TrackerMode::PerStream),
                    "averaged" => TrackerSelect::Fixed(TrackerMode::Averaged),
                    _ => return Err(invalid("tracker mode")),
                }
            }
            "perfect_csi" => s.perfect_csi = flag("boolean")?,
            "training_noise" => s.training_noise = flag("boolean")?,
            "training" => {
                s.training = match value.to_ascii_lowercase().as_str() {
                    "hadamard" => Training::Hadamard,
                    "hadamard_or_dft" | "hadamard-or-dft" => Training::HadamardOrDft,
                    _ => return Err(invalid("training kind")),
                }
            }
            "seed" => s.seed = uint("seed")?,
            other => return Err(Error::UnknownKey { line: line_no, key: other.to_string() }),
        }
    }

    if !snr_seen {
        return Err(Error::Scenario { line: 0, message: "missing required key `snr_db`".into() });
    }
    if let Some((line, l_f)) = frame_len {
        if seen.contains("data_len") {
            return Err(Error::Scenario { line, message: "give either `frame_len` or `data_len`, not both".into() });
        }
        s.length = FrameLength::Frame(l_f);
    }
    let stray = |line: usize, key: &str, pn: &str| Error::Scenario { line, message: format!("`{key}` does not apply to pn = {pn}") };
    let (pn_line, kind) = pn_kind.unwrap_or((0, "none".into()));
    s.pn = match kind.as_str() {
        "none" => {
            if let Some((l, _)) = sigma2 {
                return Err(stray(l, "sigma2", "none"));
            }
            if let Some((l, _)) = mask {
                return Err(stray(l, "mask", "none"));
            }
            if let Some((l, _)) = filter_len {
                return Err(stray(l, "filter_len", "none"));
            }
            PnSpec::None
        }
        "wiener" => {
            if let Some((l, _)) = mask {
                return Err(stray(l, "mask", "wiener"));
            }
            if let Some((l, _)) = filter_len {
                return Err(stray(l, "filter_len", "wiener"));
            }
            let (_, sigma2) = sigma2.ok_or(Error::Scenario { line: pn_line, message: "pn = wiener needs `sigma2`".into() })?;
            PnSpec::Wiener { sigma2 }
        }
        "stationary" => {
            if let Some((l, _)) = sigma2 {
                return Err(stray(l, "sigma2", "stationary"));
            }
            let (_, mask) = mask.ok_or(Error::Scenario { line: pn_line, message: "pn = stationary needs `mask`".into() })?;
            PnSpec::Stationary { mask, filter_len: filter_len.map_or(DEFAULT_FILTER_LEN, |(_, n)| n) }
        }
        other => {
            return Err(Error::Scenario { line: pn_line, message: format!("unknown phase-noise model `{other}`") });
        }
    };
    s.validate().map_err(|e| Error::Scenario { line: 0, message: e.to_string() })?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = Scenario::parse("snr_db = 10,20").unwrap();
        assert_eq!(s.snr_db, vec![10.0, 20.0]);
        assert_eq!(s.antennas, vec![4]);
        assert_eq!(s.k_db, f64::INFINITY);
        assert_eq!(s.trials, DEFAULT_TRIALS);
        assert_eq!(s.pn, PnSpec::None);
    }

    #[test]
    fn full_scenario() {
        let text = "
            # Wiener floor
            id = fig
            antennas = 8
            snr_db = 0:5:20   # inclusive
            k_db = 10
            constellation = 64qam
            frame_len = 108
            trials = 50
            pn = wiener
            sigma2 = 1e-4
            topology = ind/com
            compensation = both
            alpha = 0.2
            tracker = averaged
            perfect_csi = yes
            training_noise = true
            seed = 99
        ";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.id, "fig");
        assert_eq!(s.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(s.antennas, vec![8]);
        assert_eq!(s.length.data_len(8).unwrap(), 100);
        assert_eq!(s.constellation, ConstellationKind::Qam64);
        assert_eq!(s.pn, PnSpec::Wiener { sigma2: 1e-4 });
        assert_eq!(s.topology, OscillatorTopology::IND_TX_COM_RX);
        assert_eq!(s.compensation, Compensation::Both);
        assert_eq!(s.tracker, TrackerSelect::Fixed(TrackerMode::Averaged));
        assert!(s.perfect_csi && s.training_noise);
        assert_eq!(s.seed, 99);
    }

    #[test]
    fn antenna_lists() {
        let s = Scenario::parse("snr_db = 25\nantennas = 2, 4,96\nframe_len = 1000").unwrap();
        assert_eq!(s.antennas, vec![2, 4, 96]);
        assert_eq!(s.length.data_len(96).unwrap(), 904);
    }

    #[test]
    fn stationary_masks() {
        let s = Scenario::parse("snr_db=25\npn=stationary\nmask=reynolds85\nfilter_len=1025").unwrap();
        assert_eq!(s.pn, PnSpec::Stationary { mask: MaskSource::Preset("reynolds85".into()), filter_len: 1025 });
        let s = Scenario::parse("snr_db=25\npn=stationary\nmask=1e6=-115,1e7=-135").unwrap();
        let PnSpec::Stationary { mask: MaskSource::Inline(m), .. } = s.pn else { panic!() };
        assert_eq!(m.points(), &[(1e6, -115.0), (1e7, -135.0)]);
        let s = Scenario::parse("snr_db=25\npn=stationary\nmask=masks/osc.txt").unwrap();
        assert!(matches!(s.pn, PnSpec::Stationary { mask: MaskSource::File(_), .. }));
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            ("", "missing snr"),
            ("snr_db = 10\nfoo = 1", "unknown key"),
            ("snr_db = 10\nsnr_db = 20", "duplicate"),
            ("snr_db 10", "no equals"),
            ("snr_db =", "empty value"),
            ("snr_db = 10:0:20", "zero step"),
            ("snr_db = 10,x", "bad number"),
            ("snr_db = 10\nantennas = 0", "zero antennas"),
            ("snr_db = 10\nantennas = 4,,8", "empty list entry"),
            ("snr_db = 10\nantennas = 4,100000", "huge array"),
            ("snr_db = 10\ndata_len = 0", "zero data"),
            ("snr_db = 10\nantennas = 4,16\nframe_len = 16", "frame too short for larger N"),
            ("snr_db = 10\ntrials = 0", "zero trials"),
            ("snr_db = 10\npn = wiener", "no sigma2"),
            ("snr_db = 10\npn = stationary", "no mask"),
            ("snr_db = 10\nsigma2 = 1e-4", "sigma2 without wiener"),
            ("snr_db = 10\npn = wiener\nsigma2 = 1e-4\nmask = reynolds85", "mask with wiener"),
            ("snr_db = 10\npn = stationary\nmask = reynolds85\nfilter_len = 4096", "even taps"),
            ("snr_db = 10\npn = stationary\nmask = reynolds85\nfilter_len = 4000000001", "huge taps"),
            ("snr_db = 10\nalpha = 1.5", "alpha"),
            ("snr_db = 10\nconstellation = qam32", "constellation"),
            ("snr_db = 10\ntopology = common", "topology"),
            ("snr_db = 10\nframe_len = 4", "frame too short"),
            ("snr_db = 10\nframe_len = 100\ndata_len = 96", "both lengths"),
            ("snr_db = 10\nk_db = nan", "nan K"),
            ("snr_db = 10\npn = pll", "pn kind"),
            ("snr_db = 10\nseed = -1", "negative seed"),
        ];
        for (text, what) in cases {
            assert!(Scenario::parse(text).is_err(), "{what} accepted");
        }
        assert!(matches!(Scenario::parse("snr_db = 10\nfoo = 1"), Err(Error::UnknownKey { line: 2, .. })));
    }

    #[test]
    fn model_specs() {
        assert_eq!("none".parse::<PnSpec>().unwrap(), PnSpec::None);
        assert_eq!("wiener:1e-4".parse::<PnSpec>().unwrap(), PnSpec::Wiener { sigma2: 1e-4 });
        let PnSpec::Wiener { sigma2 } = "beta:7957.747".parse::<PnSpec>().unwrap() else { panic!() };
        assert!((sigma2 - 1e-4).abs() < 1e-10);
        assert_eq!(
            "mask:dancila115;taps=1025".parse::<PnSpec>().unwrap(),
            PnSpec::Stationary { mask: MaskSource::Preset("dancila115".into()), filter_len: 1025 }
        );
        assert!(matches!(
            "maskfile:/tmp/m.txt".parse::<PnSpec>().unwrap(),
            PnSpec::Stationary { mask: MaskSource::File(_), filter_len: DEFAULT_FILTER_LEN }
        ));
        for bad in ["", "wiener", "wiener:-1", "wiener:abc", "mask:nosuch", "maskfile:", "wiener:1e-4;taps=5", "mask:reynolds85;taps=4", "mask:reynolds85;taps=99999999", "mask:reynolds85;x=1", "lorentz:3"] {
            assert!(bad.parse::<PnSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn mask_files_resolve_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.txt"), "1e6 -100\n1e7 -120\n").unwrap();
        let src = MaskSource::parse("m.txt").unwrap();
        assert_eq!(src.resolve(Some(dir.path())).unwrap().points(), &[(1e6, -100.0), (1e7, -120.0)]);
        assert!(matches!(src.resolve(None), Err(Error::File { .. })));
    }

    #[test]
    fn load_uses_file_stem_and_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("floor.scn");
        std::fs::write(&path, "snr_db = 30\n").unwrap();
        let s = Scenario::load(&path).unwrap();
        assert_eq!(s.id, "floor");
        assert_eq!(s.base_dir.as_deref(), Some(dir.path()));
    }
}
