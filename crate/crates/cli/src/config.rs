//! Run configuration read from TOML.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bathcert::fock_bound::{BathState, QuadratureSpec};
use bathcert::fock_space::{hermitian_norm, SpinSystem, TruncationSpec, DEFAULT_DIMENSION_CAP};
use bathcert::spectral_chain::{spectral_density_from_dispersion, DispersionSpec, MappingKind, SpectralDensity};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// An integer or a list of integers.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub spectral_chain: ChainSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub truncation: Option<TruncationSection>,
    #[serde(default)]
    pub time: Option<TimeSection>,
    #[serde(default)]
    pub observable: ObservableSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub spatial_bound: SpatialSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub mapping: MappingKind,
    pub alpha: Option<f64>,
    pub s: Option<f64>,
    pub omega_c: Option<f64>,
    /// CSV with header `omega,J`.
    pub density_table: Option<PathBuf>,
    /// CSV with header `k,g,h`.
    pub dispersion_table: Option<PathBuf>,
    /// Sites written by `chain-coeffs`.
    pub length: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "up")]
    pub initial_state: String,
    #[serde(default = "vacuum")]
    pub bath_state: String,
    pub beta: Option<f64>,
    pub bath_occupations: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

fn up() -> String {
    "up".into()
}

fn vacuum() -> String {
    "vacuum".into()
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { delta: 1.0, initial_state: up(), bath_state: vacuum(), beta: None, bath_occupations: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub l: OneOrMany,
    pub m: Option<OneOrMany>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    #[serde(default = "sigma_z")]
    pub kind: String,
    /// Headerless CSV of complex entries such as `0.5`, `-1i`, `1+2i`.
    pub matrix_file: Option<PathBuf>,
}

fn sigma_z() -> String {
    "sigma_z".into()
}

impl Default for ObservableSection {
    fn default() -> Self {
        Self { kind: sigma_z(), matrix_file: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default = "default_tol")]
    pub propagation: f64,
    #[serde(default = "default_ppu")]
    pub points_per_unit_time: usize,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_ppu() -> usize {
    QuadratureSpec::default().points_per_unit_time
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self { propagation: default_tol(), points_per_unit_time: default_ppu(), dimension_cap: default_cap() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialSection {
    /// Use `‖P_L X_L‖^{1/2}` instead of `ω_max` for `c`.
    #[serde(default)]
    pub computed_c: bool,
    #[serde(default)]
    pub extra_baths: Vec<ExtraBath>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraBath {
    pub mapping: MappingKind,
    pub alpha: f64,
    pub s: f64,
    #[serde(default = "one")]
    pub omega_c: f64,
    #[serde(default = "half")]
    pub a_s_norm: f64,
}

fn half() -> f64 {
    0.5
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mapping: MappingKind,
    pub density: SpectralDensity,
    pub chain_length: Option<usize>,
    pub system: SpinSystem,
    pub psi_s: Vec<Complex64>,
    pub bath_state: BathState,
    pub l_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub times: Vec<f64>,
    /// `‖Ô‖` of the configured observable.
    pub o_norm: f64,
    pub tol: f64,
    pub quad: QuadratureSpec,
    pub dimension_cap: usize,
    pub out_dir: PathBuf,
    pub computed_c: bool,
    pub extra_baths: Vec<(MappingKind, SpectralDensity, f64)>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_raw(raw, &base)
    }

    pub fn from_raw(raw: RawConfig, base: &Path) -> Result<Self, ConfigError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let density = density(&raw.spectral_chain, &resolve)?;
        let sc = &raw.spectral_chain;
        if sc.length == Some(0) {
            return Err(bad("spectral_chain.length must be >= 1"));
        }

        let sys = &raw.system;
        if !(sys.delta.is_finite()) {
            return Err(bad(format!("system.delta must be finite, got {}", sys.delta)));
        }
        let psi_s = spin_state(&sys.initial_state)?;

        let (l_values, m_values) = match &raw.truncation {
            Some(t) => {
                let l = t.l.values();
                let m = t.m.as_ref().map(OneOrMany::values).unwrap_or_default();
                if l.is_empty() || l.contains(&0) {
                    return Err(bad("truncation.l must be a non-empty list of positive integers"));
                }
                if m.contains(&0) {
                    return Err(bad("truncation.m entries must be >= 1"));
                }
                (l, m)
            }
            None => (Vec::new(), Vec::new()),
        };
        let bath_state = match sys.bath_state.as_str() {
            "vacuum" => BathState::Vacuum,
            "thermal" => {
                let beta = sys.beta.ok_or_else(|| bad("system.beta is required for bath_state = \"thermal\""))?;
                if !(beta > 0.0) {
                    return Err(bad(format!("system.beta must be > 0, got {beta}")));
                }
                BathState::Thermal { beta }
            }
            "fock" => BathState::ProductFock(
                sys.bath_occupations
                    .clone()
                    .ok_or_else(|| bad("system.bath_occupations is required for bath_state = \"fock\""))?,
            ),
            other => return Err(bad(format!("system.bath_state: unknown value {other:?} (vacuum, thermal, fock)"))),
        };

        let times = match &raw.time {
            Some(t) => time_grid(t)?,
            None => Vec::new(),
        };

        let o_norm = hermitian_norm(&observable(&raw.observable, &resolve)?);

        let tol = &raw.tolerances;
        if !(tol.propagation > 0.0) {
            return Err(bad(format!("tolerances.propagation must be > 0, got {}", tol.propagation)));
        }
        if tol.points_per_unit_time == 0 {
            return Err(bad("tolerances.points_per_unit_time must be >= 1"));
        }

        let mut extra_baths = Vec::new();
        for (i, b) in raw.spatial_bound.extra_baths.iter().enumerate() {
            let j = SpectralDensity::power_law(b.alpha, b.s, b.omega_c)
                .map_err(|e| bad(format!("spatial_bound.extra_baths[{i}]: {e}")))?;
            if !(b.a_s_norm >= 0.0) {
                return Err(bad(format!("spatial_bound.extra_baths[{i}].a_s_norm must be >= 0")));
            }
            extra_baths.push((b.mapping, j, b.a_s_norm));
        }

        Ok(Self {
            mapping: sc.mapping,
            density,
            chain_length: sc.length,
            system: SpinSystem::spin_boson(sys.delta),
            psi_s,
            bath_state,
            l_values,
            m_values,
            times,
            o_norm,
            tol: tol.propagation,
            quad: QuadratureSpec { points_per_unit_time: tol.points_per_unit_time },
            dimension_cap: tol.dimension_cap,
            out_dir: raw.output.dir.clone().map(|d| resolve(&d)).unwrap_or_else(|| PathBuf::from(".")),
            computed_c: raw.spatial_bound.computed_c,
            extra_baths,
        })
    }

    pub fn require_times(&self) -> Result<&[f64], ConfigError> {
        if self.times.is_empty() {
            return Err(bad("[time] section is required for this command"));
        }
        Ok(&self.times)
    }

    pub fn require_l(&self) -> Result<&[usize], ConfigError> {
        if self.l_values.is_empty() {
            return Err(bad("[truncation] l is required for this command"));
        }
        Ok(&self.l_values)
    }

    pub fn require_m(&self) -> Result<&[usize], ConfigError> {
        if self.m_values.is_empty() {
            return Err(bad("truncation.m is required for this command"));
        }
        Ok(&self.m_values)
    }

    pub fn a_s_norm(&self) -> f64 {
        self.system.a_s_norm()
    }

    /// Uniform cutoff `m` on `l` sites, checked against the dimension cap.
    pub fn truncation(&self, l: usize, m: usize) -> Result<TruncationSpec, bathcert::Error> {
        let t = TruncationSpec::uniform(l, m)?;
        t.checked_dim(self.system.dim(), self.dimension_cap)?;
        Ok(t)
    }
}

fn density(sc: &ChainSection, resolve: &dyn Fn(&Path) -> PathBuf) -> Result<SpectralDensity, ConfigError> {
    let sources = [sc.alpha.is_some() || sc.s.is_some(), sc.density_table.is_some(), sc.dispersion_table.is_some()];
    if sources.iter().filter(|v| **v).count() != 1 {
        return Err(bad(
            "spectral_chain: give exactly one of (alpha, s[, omega_c]), density_table or dispersion_table",
        ));
    }
    if let Some(path) = &sc.density_table {
        let cols = read_columns(&resolve(path), &["omega", "J"])?;
        return SpectralDensity::tabulated(cols[0].clone(), cols[1].clone())
            .map_err(|e| bad(format!("spectral_chain.density_table: {e}")));
    }
    if let Some(path) = &sc.dispersion_table {
        let cols = read_columns(&resolve(path), &["k", "g", "h"])?;
        let spec = DispersionSpec { k: cols[0].clone(), g: cols[1].clone(), h: cols[2].clone() };
        return spectral_density_from_dispersion(&spec).map_err(|e| bad(format!("spectral_chain.dispersion_table: {e}")));
    }
    let alpha = sc.alpha.ok_or_else(|| bad("spectral_chain.alpha is required with s"))?;
    let s = sc.s.ok_or_else(|| bad("spectral_chain.s is required with alpha"))?;
    let omega_c = sc.omega_c.unwrap_or(1.0);
    if !(alpha > 0.0) {
        return Err(bad(format!("spectral_chain.alpha must be > 0, got {alpha}")));
    }
    if !(s > 0.0) {
        return Err(bad(format!("spectral_chain.s must be > 0, got {s}")));
    }
    if !(omega_c > 0.0) {
        return Err(bad(format!("spectral_chain.omega_c must be > 0, got {omega_c}")));
    }
    SpectralDensity::power_law(alpha, s, omega_c).map_err(|e| bad(format!("spectral_chain: {e}")))
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| bad(format!("{}: {e}", path.display())))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| bad(format!("{}: missing column {n:?}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("{}: {e}", path.display())))?;
        for (c, &i) in idx.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("{}: row {}: column {:?}: not a number: {cell:?}", path.display(), line + 2, names[c])))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn spin_state(name: &str) -> Result<Vec<Complex64>, ConfigError> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Ok(match name {
        "up" => vec![c(1.0, 0.0), c(0.0, 0.0)],
        "down" => vec![c(0.0, 0.0), c(1.0, 0.0)],
        "plus" => vec![c(r, 0.0), c(r, 0.0)],
        "minus" => vec![c(r, 0.0), c(-r, 0.0)],
        other => return Err(bad(format!("system.initial_state: unknown value {other:?} (up, down, plus, minus)"))),
    })
}

fn time_grid(t: &TimeSection) -> Result<Vec<f64>, ConfigError> {
    let times = match (&t.times, t.t_max, t.points) {
        (Some(list), None, None) => list.clone(),
        (None, Some(t_max), Some(points)) => {
            if !(t_max > 0.0) || points < 2 {
                return Err(bad("time: need t_max > 0 and points >= 2"));
            }
            (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
        }
        _ => return Err(bad("time: give either times = [...] or both t_max and points")),
    };
    if times.is_empty() || times.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(bad("time: times must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("time: times must be strictly ascending"));
    }
    Ok(times)
}

fn observable(o: &ObservableSection, resolve: &dyn Fn(&Path) -> PathBuf) -> Result<DMatrix<Complex64>, ConfigError> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let m = match o.kind.as_str() {
        "sigma_z" => DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
        "sigma_x" => DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        "sigma_y" => DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
        "custom" => {
            let path = o.matrix_file.as_ref().ok_or_else(|| bad("observable.matrix_file is required for kind = \"custom\""))?;
            read_matrix(&resolve(path))?
        }
        other => {
            return Err(bad(format!("observable.kind: unknown value {other:?} (sigma_z, sigma_x, sigma_y, custom)")))
        }
    };
    if o.kind != "custom" && o.matrix_file.is_some() {
        return Err(bad("observable.matrix_file is only used with kind = \"custom\""));
    }
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(bad(format!("observable must be 2x2, got {}x{}", m.nrows(), m.ncols())));
    }
    let defect = (&m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if defect > 1e-12 {
        return Err(bad(format!("observable must be Hermitian (defect {defect:.3e})")));
    }
    Ok(m)
}

fn read_matrix(path: &Path) -> Result<DMatrix<Complex64>, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|cell| {
                Complex64::from_str(cell)
                    .map_err(|_| bad(format!("{}: row {}: not a complex number: {cell:?}", path.display(), line + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(bad(format!("{}: matrix must be square", path.display())));
    }
    Ok(DMatrix::from_fn(n, n, |r, k| rows[r][k]))
}
