//! Run configuration: a flat `key = value` text format with `[section]`
//! headers.
//!
//! ```text
//! experiment = stability_run
//! b = 0.1
//! seed = 42
//!
//! [grid]
//! n_points = 513
//!
//! [perturbation]
//! amplitude = 1e-3, 3e-3
//! ```
//!
//! Top-level keys may also be written under `[run]`. Lists are comma
//! separated; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::cauchy::Profile;
use crate::error::{Result, WmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ExactResiduals,
    TransportDecay,
    DescentRoundtrip,
    SpectrumScan,
    StabilityRun,
    EnergyMonotonicity,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::ExactResiduals,
        Experiment::TransportDecay,
        Experiment::DescentRoundtrip,
        Experiment::SpectrumScan,
        Experiment::StabilityRun,
        Experiment::EnergyMonotonicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ExactResiduals => "exact_residuals",
            Experiment::TransportDecay => "transport_decay",
            Experiment::DescentRoundtrip => "descent_roundtrip",
            Experiment::SpectrumScan => "spectrum_scan",
            Experiment::StabilityRun => "stability_run",
            Experiment::EnergyMonotonicity => "energy_monotonicity",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub n_points: usize,
    /// Outer radius; `None` means the experiment's natural choice: `R(b)`
    /// for the flow and spectrum, `1` for the 1D transport (any radius above
    /// 1/2 is an outflow boundary, and a small one keeps the CFL limit mild).
    pub r_max: Option<f64>,
    /// Nodes of the Cauchy grid used by `stability_run`.
    pub cauchy_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationConfig {
    /// One sub-run per amplitude.
    pub amplitude: Vec<f64>,
    pub g_amplitude: f64,
    /// `None` means `epsilon / 6`.
    pub width: Option<f64>,
    pub center: f64,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumConfig {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

/// Pass/fail thresholds. Every entry must be positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub order_min: f64,
    pub order_max: f64,
    pub gauge: f64,
    pub eigenvalue: f64,
    pub eigenfunction: f64,
    pub rate: f64,
    pub roundtrip_factor: f64,
    pub norm_constant: f64,
    pub quadratic: f64,
    pub finite_speed: f64,
    pub energy: f64,
    pub t_window: f64,
    pub t_tol: f64,
    pub min_decay: f64,
    pub fit_residual: f64,
    pub gap_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            order_min: 1.8,
            order_max: 2.2,
            gauge: 1e-3,
            eigenvalue: 1e-6,
            eigenfunction: 1e-8,
            rate: 0.05,
            roundtrip_factor: 10.0,
            norm_constant: 100.0,
            quadratic: 0.05,
            finite_speed: 1e-10,
            energy: 1e-8,
            t_window: 0.05,
            t_tol: 1e-20,
            min_decay: 0.05,
            fit_residual: 0.1,
            gap_factor: 2.0,
        }
    }
}

impl Tolerances {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "order_min" => &mut self.order_min,
            "order_max" => &mut self.order_max,
            "gauge" => &mut self.gauge,
            "eigenvalue" => &mut self.eigenvalue,
            "eigenfunction" => &mut self.eigenfunction,
            "rate" => &mut self.rate,
            "roundtrip_factor" => &mut self.roundtrip_factor,
            "norm_constant" => &mut self.norm_constant,
            "quadratic" => &mut self.quadratic,
            "finite_speed" => &mut self.finite_speed,
            "energy" => &mut self.energy,
            "t_window" => &mut self.t_window,
            "t_tol" => &mut self.t_tol,
            "min_decay" => &mut self.min_decay,
            "fit_residual" => &mut self.fit_residual,
            "gap_factor" => &mut self.gap_factor,
            _ => return None,
        })
    }

    fn entries(&self) -> [(&'static str, f64); 16] {
        [
            ("order_min", self.order_min),
            ("order_max", self.order_max),
            ("gauge", self.gauge),
            ("eigenvalue", self.eigenvalue),
            ("eigenfunction", self.eigenfunction),
            ("rate", self.rate),
            ("roundtrip_factor", self.roundtrip_factor),
            ("norm_constant", self.norm_constant),
            ("quadratic", self.quadratic),
            ("finite_speed", self.finite_speed),
            ("energy", self.energy),
            ("t_window", self.t_window),
            ("t_tol", self.t_tol),
            ("min_decay", self.min_decay),
            ("fit_residual", self.fit_residual),
            ("gap_factor", self.gap_factor),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub grid: GridConfig,
    pub b: f64,
    pub epsilon: f64,
    pub perturbation: PerturbationConfig,
    pub s_max: f64,
    pub spectrum: SpectrumConfig,
    pub tolerances: Tolerances,
    /// Not echoed into manifests, so runs written to different places compare equal.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for `experiment`; every other field can be overridden.
    pub fn new(experiment: Experiment) -> Self {
        let n_points = match experiment {
            Experiment::TransportDecay => 2048,
            Experiment::StabilityRun => 513,
            Experiment::EnergyMonotonicity => 801,
            _ => 1024,
        };
        Self {
            experiment,
            grid: GridConfig { n_points, r_max: None, cauchy_points: 1601 },
            b: 0.5,
            epsilon: 0.05,
            perturbation: PerturbationConfig {
                amplitude: vec![1e-3, 3e-3],
                g_amplitude: 0.0,
                width: None,
                center: 0.0,
                profile: Profile::GaussianBump,
            },
            s_max: 8.0,
            spectrum: SpectrumConfig { re: (0.0, 2.5), im: (-4.0, 4.0), n_re: 60, n_im: 80 },
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("output"),
            seed: 42,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = parse_entries(text)?;
        let Some(exp) = raw.get("experiment") else {
            return Err(config_error("experiment", "missing required key"));
        };
        let experiment = exp.value.parse::<Experiment>().map_err(|m| config_error(&exp.location(), &m))?;
        let mut cfg = RunConfig::new(experiment);
        for (key, entry) in &raw {
            cfg.assign(key, entry)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(&path.display().to_string(), &format!("cannot read: {e}")))?;
        Self::parse(&text)
    }

    fn assign(&mut self, key: &str, e: &Entry) -> Result<()> {
        match key {
            "experiment" => {}
            "b" => self.b = e.real()?,
            "epsilon" => self.epsilon = e.real()?,
            "s_max" => self.s_max = e.real()?,
            "seed" => self.seed = e.parse::<u64>()?,
            "output_dir" => self.output_dir = PathBuf::from(&e.value),
            "grid.n_points" => self.grid.n_points = e.parse::<usize>()?,
            "grid.r_max" | "grid.R" => self.grid.r_max = Some(e.real()?),
            "grid.cauchy_points" => self.grid.cauchy_points = e.parse::<usize>()?,
            "perturbation.amplitude" => self.perturbation.amplitude = e.reals()?,
            "perturbation.g_amplitude" => self.perturbation.g_amplitude = e.real()?,
            "perturbation.width" => self.perturbation.width = Some(e.real()?),
            "perturbation.center" => self.perturbation.center = e.real()?,
            "perturbation.profile" => {
                self.perturbation.profile = match e.value.as_str() {
                    "gaussian" => Profile::GaussianBump,
                    "polynomial" => Profile::PolynomialBump,
                    other => return Err(e.error(&format!("unknown profile '{other}' (gaussian or polynomial)"))),
                }
            }
            "spectrum.re" => self.spectrum.re = e.pair()?,
            "spectrum.im" => self.spectrum.im = e.pair()?,
            "spectrum.n_re" => self.spectrum.n_re = e.parse::<usize>()?,
            "spectrum.n_im" => self.spectrum.n_im = e.parse::<usize>()?,
            _ => {
                let slot = key.strip_prefix("tolerances.").and_then(|k| self.tolerances.slot(k));
                match slot {
                    Some(v) => *v = e.real()?,
                    None => return Err(e.error("unknown key")),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b <= 0.9) {
            return Err(config_error("b", &format!("must lie in (0, 0.9], got {}", self.b)));
        }
        if self.grid.n_points < 64 {
            return Err(config_error("grid.n_points", &format!("must be at least 64, got {}", self.grid.n_points)));
        }
        if self.grid.n_points > 4096 {
            return Err(config_error("grid.n_points", &format!("at most 4096 nodes are supported, got {}", self.grid.n_points)));
        }
        if self.grid.cauchy_points < 64 {
            return Err(config_error("grid.cauchy_points", "must be at least 64"));
        }
        if let Some(r) = self.grid.r_max {
            if !(r > 0.0 && r.is_finite()) {
                return Err(config_error("grid.r_max", &format!("must be positive, got {r}")));
            }
            if self.experiment.uses_hsc_grid() && r <= 0.5 {
                return Err(config_error("grid.r_max", "hyperboloidal grids need R > 1/2 for an outflow boundary"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.25) {
            return Err(config_error("epsilon", &format!("must lie in (0, 0.25), got {}", self.epsilon)));
        }
        if !(self.s_max.is_finite() && self.s_max > 0.0) {
            return Err(config_error("s_max", &format!("must be positive, got {}", self.s_max)));
        }
        let p = &self.perturbation;
        if p.amplitude.is_empty() || p.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(config_error("perturbation.amplitude", "needs at least one finite value"));
        }
        if let Some(w) = p.width {
            if !(w > 0.0) {
                return Err(config_error("perturbation.width", &format!("must be positive, got {w}")));
            }
        }
        let sp = &self.spectrum;
        if sp.re.0 > sp.re.1 || sp.im.0 > sp.im.1 {
            return Err(config_error("spectrum", "box bounds must be ordered"));
        }
        for (k, v) in self.tolerances.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(&format!("tolerances.{k}"), &format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Experiment {
    fn uses_hsc_grid(self) -> bool {
        matches!(self, Experiment::TransportDecay | Experiment::SpectrumScan | Experiment::StabilityRun)
    }
}

fn config_error(location: &str, message: &str) -> WmError {
    WmError::Config { location: location.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

impl Entry {
    fn location(&self) -> String {
        format!("line {} ({})", self.line, self.key)
    }

    fn error(&self, message: &str) -> WmError {
        config_error(&self.location(), message)
    }

    fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.value.parse::<T>().map_err(|e| self.error(&format!("cannot parse '{}': {e}", self.value)))
    }

    fn real(&self) -> Result<f64> {
        let v = self.parse::<f64>()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error("value must be finite"))
        }
    }

    fn reals(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|e| self.error(&format!("cannot parse '{}': {e}", p.trim())))
            })
            .collect()
    }

    fn pair(&self) -> Result<(f64, f64)> {
        match self.reals()?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(self.error("expected two comma-separated numbers")),
        }
    }
}

/// Flatten the file into `section.key → entry`, rejecting duplicates.
fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_error(&format!("line {line_no}"), "unterminated section header"))?
                .trim();
            if !matches!(name, "run" | "grid" | "perturbation" | "spectrum" | "tolerances") {
                return Err(config_error(&format!("line {line_no}"), &format!("unknown section [{name}]")));
            }
            section = if name == "run" { String::new() } else { name.to_string() };
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_error(&format!("line {line_no}"), "expected 'key = value'"));
        };
        let (k, v) = (k.trim(), v.trim().trim_matches('"'));
        if k.is_empty() {
            return Err(config_error(&format!("line {line_no}"), "empty key"));
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        let entry = Entry { key: key.clone(), value: v.to_string(), line: line_no };
        if let Some(prev) = out.insert(key.clone(), entry) {
            return Err(config_error(&format!("line {line_no} ({key})"), &format!("duplicate of line {}", prev.line)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn location_of(err: WmError) -> String {
        match err {
            WmError::Config { location, .. } => location,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_apply() {
        let c = RunConfig::parse("experiment = spectrum_scan\n").unwrap();
        assert_eq!(c.b, 0.5);
        assert_eq!(c.epsilon, 0.05);
        assert_eq!(c.s_max, 8.0);
        assert_eq!(c.seed, 42);
        assert_eq!(c.grid.r_max, None);
    }

    #[test]
    fn sections_and_lists() {
        let text = "# stability\n[run]\nexperiment = stability_run\nb = 0.1\n\n[grid]\nn_points = 257\nR = 2.0\n\
                    [perturbation]\namplitude = 1e-3, 3e-3 # two runs\nprofile = polynomial\n\
                    [tolerances]\nfit_residual = 0.2\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.experiment, Experiment::StabilityRun);
        assert_eq!(c.grid.n_points, 257);
        assert_eq!(c.grid.r_max, Some(2.0));
        assert_eq!(c.perturbation.amplitude, vec![1e-3, 3e-3]);
        assert_eq!(c.perturbation.profile, Profile::PolynomialBump);
        assert_eq!(c.tolerances.fit_residual, 0.2);
    }

    #[test]
    fn out_of_range_b_names_the_field() {
        let err = RunConfig::parse("experiment = spectrum_scan\nb = 1.2\n").unwrap_err();
        assert_eq!(location_of(err), "b");
    }

    #[test]
    fn small_grid_rejected() {
        let err = RunConfig::parse("experiment = exact_residuals\n[grid]\nn_points = 32\n").unwrap_err();
        assert_eq!(location_of(err), "grid.n_points");
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = RunConfig::parse("experiment = exact_residuals\nseed 4\n").unwrap_err();
        assert_eq!(location_of(err), "line 2");
        let err = RunConfig::parse("experiment = exact_residuals\nepsilon = abc\n").unwrap_err();
        assert_eq!(location_of(err), "line 2 (epsilon)");
        let err = RunConfig::parse("experiment = exact_residuals\n[tolerances]\nwhatever = 1\n").unwrap_err();
        assert_eq!(location_of(err), "line 3 (tolerances.whatever)");
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let err = RunConfig::parse("experiment = exact_residuals\n[tolerances]\ngauge = 0\n").unwrap_err();
        assert_eq!(location_of(err), "tolerances.gauge");
    }

    #[test]
    fn missing_or_unknown_experiment() {
        assert_eq!(location_of(RunConfig::parse("b = 0.5\n").unwrap_err()), "experiment");
        assert!(RunConfig::parse("experiment = nope\n").is_err());
        assert!(RunConfig::parse("experiment = exact_residuals\nb = 0.3\nb = 0.4\n").is_err());
    }
}
