use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bathcert::fock_bound::{
    certificates_to_csv, certify, delta_m_bound, fock_bounds_on_curve, initial_correlations, initial_state,
    report_grid, tail_weight, CertificateReport, CertifyInput, EpsilonProblem, FockBound,
};
use bathcert::quadratic_dynamics::bound_constants;
use bathcert::spatial_bound::{
    certified_bound, multi_bath_bound, reports_to_csv, SpatialBoundInput, SpatialBoundReport,
};
use bathcert::spectral_chain::{chain_for, fmt17, MappingKind, SpectralDensity};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerics(bathcert::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bathcert::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Numerics(E::DimensionOverflow { .. }) => 3,
            Self::Numerics(
                E::InvalidInput(_)
                | E::InvalidDensity(_)
                | E::NonMonotoneDispersion { .. }
                | E::GridTooCoarse { .. }
                | E::DimensionMismatch { .. }
                | E::UnsupportedState(_),
            ) => 2,
            Self::Numerics(_) | Self::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerics(e) => write!(f, "{e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<bathcert::Error> for CliError {
    fn from(e: bathcert::Error) -> Self {
        Self::Numerics(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn chain_coeffs(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let length = match cfg.chain_length {
        Some(l) => l,
        None => *cfg
            .l_values
            .iter()
            .max()
            .ok_or_else(|| CliError::Config("set spectral_chain.length or truncation.l".into()))?,
    };
    let chain = chain_for(&cfg.density, cfg.mapping, length)?;
    Ok(vec![write_file(&cfg.out_dir, "chain_coeffs.csv", &chain.to_csv())?])
}

/// Bound input for truncating the chain of `(kind, j)` at `l`.
fn spatial_input(
    cfg: &RunConfig,
    kind: MappingKind,
    j: &SpectralDensity,
    a_s_norm: f64,
    l: usize,
    t: f64,
) -> Result<SpatialBoundInput> {
    let chain = chain_for(j, kind, l)?;
    let gamma0 = initial_correlations(&cfg.bath_state, &chain)?;
    let mut constants = bound_constants(&chain);
    if cfg.computed_c {
        constants = constants.with_computed_c();
    }
    Ok(SpatialBoundInput {
        constants,
        gamma0_norm_sqrt: gamma0.norm().sqrt(),
        h_norm: chain.h_coeff.abs() * a_s_norm,
        o_norm: cfg.o_norm,
        t,
        l,
        chain,
    })
}

struct SpatialRow {
    report: SpatialBoundReport,
    summed: Option<f64>,
}

pub fn spatial_bound(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let times = cfg.require_times()?;
    let ls = cfg.require_l()?;
    let points: Vec<(f64, usize)> = times.iter().flat_map(|&t| ls.iter().map(move |&l| (t, l))).collect();
    let rows = points
        .par_iter()
        .map(|&(t, l)| -> Result<SpatialRow> {
            let main = spatial_input(cfg, cfg.mapping, &cfg.density, cfg.a_s_norm(), l, t)?;
            let report = certified_bound(&main)?;
            let summed = if cfg.extra_baths.is_empty() {
                None
            } else {
                let mut baths = vec![main];
                for (kind, j, a) in &cfg.extra_baths {
                    baths.push(spatial_input(cfg, *kind, j, *a, l, t)?);
                }
                Some(multi_bath_bound(&baths)?)
            };
            Ok(SpatialRow { report, summed })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from(SpatialBoundReport::CSV_HEADER);
    if !cfg.extra_baths.is_empty() {
        csv.push_str(",summed_delta_bound");
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.report.csv_row());
        if let Some(s) = row.summed {
            let _ = write!(csv, ",{}", fmt17(s));
        }
        csv.push('\n');
    }
    Ok(vec![write_file(&cfg.out_dir, "spatial_bound.csv", &csv)?])
}

#[derive(Serialize)]
struct FockRun {
    l: usize,
    m: usize,
    mapping: MappingKind,
    tail_weight: f64,
    points_per_unit_time: usize,
    tolerance: f64,
    bounds: Vec<FockBound>,
    #[serde(skip)]
    epsilon_at_times: Vec<f64>,
    #[serde(skip)]
    epsilon_csv: String,
}

fn fock_run(cfg: &RunConfig, l: usize, m: usize, times: &[f64]) -> Result<FockRun> {
    let trunc = cfg.truncation(l, m)?;
    let chain = chain_for(&cfg.density, cfg.mapping, l)?;
    let problem = EpsilonProblem::with_cap(&cfg.system, &chain, &trunc, cfg.dimension_cap)?;
    let psi0 = initial_state(&cfg.psi_s, &cfg.bath_state, &trunc)?;
    let tail = tail_weight(&cfg.bath_state, &chain, &trunc)?;
    let positive: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0).collect();
    let (grid, idx) = report_grid(&positive, &cfg.quad)?;
    let curve = problem.curve(&psi0, &grid, cfg.tol)?;
    let on_grid = fock_bounds_on_curve(&curve, &idx, cfg.o_norm, tail);
    let mut bounds = Vec::with_capacity(times.len());
    let mut epsilon_at_times = Vec::with_capacity(times.len());
    for &t in times {
        match positive.iter().position(|p| *p == t) {
            Some(k) => {
                bounds.push(on_grid[k]);
                epsilon_at_times.push(curve.epsilon[idx[k]]);
            }
            None => {
                bounds.push(delta_m_bound(&problem, &psi0, 0.0, cfg.o_norm, tail, &cfg.quad, cfg.tol)?);
                epsilon_at_times.push(curve.epsilon[0]);
            }
        }
    }
    Ok(FockRun {
        l,
        m,
        mapping: cfg.mapping,
        tail_weight: tail,
        points_per_unit_time: cfg.quad.points_per_unit_time,
        tolerance: cfg.tol,
        bounds,
        epsilon_at_times,
        epsilon_csv: curve.to_csv(),
    })
}

pub const FOCK_CSV_HEADER: &str = "L,m,t,epsilon,tail,fock_bound";

pub fn fock_bound(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let times = cfg.require_times()?;
    let ls = cfg.require_l()?;
    let ms = cfg.require_m()?;
    // check every dimension before starting any propagation
    for &l in ls {
        for &m in ms {
            cfg.truncation(l, m)?;
        }
    }
    let jobs: Vec<(usize, usize)> = ls.iter().flat_map(|&l| ms.iter().map(move |&m| (l, m))).collect();
    let runs = jobs.par_iter().map(|&(l, m)| fock_run(cfg, l, m, times)).collect::<Result<Vec<_>>>()?;

    let mut written = Vec::new();
    let mut csv = format!("{FOCK_CSV_HEADER}\n");
    for run in &runs {
        for (b, e) in run.bounds.iter().zip(&run.epsilon_at_times) {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                run.l,
                run.m,
                fmt17(b.t),
                fmt17(*e),
                fmt17(b.tail),
                fmt17(b.value)
            );
        }
        written.push(write_file(&cfg.out_dir, &format!("epsilon_L{}_m{}.csv", run.l, run.m), &run.epsilon_csv)?);
    }
    written.push(write_file(&cfg.out_dir, "fock_bound.csv", &csv)?);
    written.push(write_file(&cfg.out_dir, "fock_bound.json", &to_json(&runs)?)?);
    Ok(written)
}

pub const CERTIFICATE_SCHEMA_ID: &str = "bathcert-certificate-v1";

#[derive(Serialize)]
struct CertificateFile<'a> {
    schema: &'static str,
    mapping: MappingKind,
    l: usize,
    m: usize,
    observable_norm: f64,
    tolerance: f64,
    reports: &'a [CertificateReport],
}

pub fn certify_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let times = cfg.require_times()?;
    let (l, m) = match (cfg.require_l()?, cfg.require_m()?) {
        ([l], [m]) => (*l, *m),
        _ => return Err(CliError::Config("certify needs a single truncation.l and a single truncation.m".into())),
    };
    let trunc = cfg.truncation(l, m)?;
    let reports = certify(&CertifyInput {
        sys: &cfg.system,
        density: &cfg.density,
        kind: cfg.mapping,
        trunc: &trunc,
        o_norm: cfg.o_norm,
        psi_s: &cfg.psi_s,
        bath_state: cfg.bath_state.clone(),
        times,
        quad: cfg.quad,
        tol: cfg.tol,
    })?;
    let spatial: Vec<SpatialBoundReport> = reports.iter().map(|r| r.spatial.clone()).collect();
    let mut fock = String::from("t,fock_bound\n");
    for r in &reports {
        let _ = writeln!(fock, "{},{}", fmt17(r.t), fmt17(r.fock_bound));
    }
    let file = CertificateFile {
        schema: CERTIFICATE_SCHEMA_ID,
        mapping: cfg.mapping,
        l,
        m,
        observable_norm: cfg.o_norm,
        tolerance: cfg.tol,
        reports: &reports,
    };
    Ok(vec![
        write_file(&cfg.out_dir, "certificate.json", &to_json(&file)?)?,
        write_file(&cfg.out_dir, "certificate.csv", &certificates_to_csv(&reports))?,
        write_file(&cfg.out_dir, "certificate_spatial.csv", &reports_to_csv(&spatial))?,
        write_file(&cfg.out_dir, "certificate_fock.csv", &fock)?,
    ])
}
