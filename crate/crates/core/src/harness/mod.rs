//! Configuration-driven runs, sweeps and CSV reports.
//!
//! Every mode writes into an output directory (created if missing):
//!
//! | mode | files |
//! |---|---|
//! | single | `trajectory_full.csv`, `trajectory_nNNNNNN.csv`, `estimates.csv`, `identities.csv`, `diagnostics.csv` |
//! | convergence study | `errors.csv`, `rates.csv` |
//! | a-priori sweep | `estimates.csv`, `uniformity.csv` |
//! | source-average study | `source_average.csv`, `rates.csv` |
//!
//! Floats are written with 17 significant digits; column order is fixed.

mod config;
mod families;
mod io;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{GridSpec, InitialSpec, Mode, RunConfig, SchemeSpec, REFERENCE_FACTOR, SCHEMA_VERSION};
pub use families::{average_source, BoundSource, InitialFamily, ManufacturedProblem, SourceSpec, TimeRegularity};
pub use io::{
    fmt_float, read_trajectory, write_diagnostics, write_errors, write_estimates, write_identities, write_level,
    write_rates, write_trajectory, RunLabel,
};

use crate::error::{Error, Result};
use crate::estimates::{error_report, norm_report, loglog_slope, source_average_error, ErrorReport, NormReport};
use crate::grid::{Field, Grid};
use crate::interpolants::{check_identities, IdentityReport};
use crate::source::forcing_for;
use crate::stepper::{run, Trajectory};

/// Convergence studies pass when every error slope reaches this.
pub const RATE_THRESHOLD: f64 = 0.4;
/// Source-average studies pass when the slope reaches this.
pub const SOURCE_RATE_THRESHOLD: f64 = 0.5;
/// A-priori sweeps pass when every monitored norm varies by at most this factor.
pub const UNIFORMITY_RATIO: f64 = 10.0;
/// Tolerated violation of the one-step energy inequality.
pub const ENERGY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SingleOutcome {
    pub trajectory: Trajectory<f64>,
    pub norms: NormReport,
    pub identities: IdentityReport,
    /// Whether `h < h1`, so that the energy inequality is guaranteed.
    pub below_estimate_threshold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOutcome {
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    pub hs: Vec<f64>,
    pub errors: Vec<ErrorReport>,
    /// Log-log slopes in [`ErrorReport::NAMES`] order.
    pub slopes: Vec<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub hs: Vec<f64>,
    pub reports: Vec<NormReport>,
    /// max/min of each monitored norm across the sweep, in [`NormReport::MONITORED`] order.
    pub ratios: Vec<f64>,
    pub max_energy_violation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceAverageOutcome {
    pub hs: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub enum Outcome {
    Single(Box<SingleOutcome>),
    Convergence(ConvergenceOutcome),
    Sweep(SweepOutcome),
    SourceAverage(SourceAverageOutcome),
}

impl Outcome {
    pub fn pass(&self) -> bool {
        match self {
            Outcome::Single(_) => true,
            Outcome::Convergence(c) => c.pass,
            Outcome::Sweep(s) => s.pass,
            Outcome::SourceAverage(s) => s.pass,
        }
    }
}

/// Validates `cfg` and runs its mode; `out` overrides `cfg.output_dir`.
pub fn execute(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    Ok(match cfg.mode {
        Mode::Single => Outcome::Single(Box::new(run_single(cfg, &dir)?)),
        Mode::ConvergenceStudy => Outcome::Convergence(run_convergence_study(cfg, &dir)?),
        Mode::AprioriSweep => Outcome::Sweep(run_apriori_sweep(cfg, &dir)?),
        Mode::SourceAverageStudy => Outcome::SourceAverage(run_source_average_study(cfg, &dir)?),
    })
}

fn prepare(cfg: &RunConfig, dir: &Path) -> Result<Arc<Grid<f64>>> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    cfg.grid.build()
}

fn label(cfg: &RunConfig, n: usize) -> RunLabel {
    RunLabel {
        run_id: format!("{}-n{n:06}", cfg.name),
        h: cfg.scheme.t_final / n as f64,
        grid: cfg.grid.label(),
        potential: cfg.potential.name(),
    }
}

fn simulate(cfg: &RunConfig, grid: &Arc<Grid<f64>>, n: usize, monitor: bool) -> Result<Trajectory<f64>> {
    let params = cfg.scheme_params(n, monitor)?;
    let (theta0, phi0) = cfg.initial_fields(grid)?;
    let forcing = forcing_for(&cfg.source.bind(cfg.scheme.ell), grid, cfg.scheme.t_final, n);
    run(&params, &theta0, &phi0, forcing)
}

/// Writes the failure next to the other artifacts and points the error at it.
fn record_failure(dir: &Path, err: Error) -> Error {
    if matches!(err, Error::InvalidParameter { .. } | Error::Config(_)) {
        return err;
    }
    let path = dir.join("failure.txt");
    match std::fs::write(&path, format!("{err}\n")) {
        Ok(()) => Error::RunFailed { path, source: Box::new(err) },
        Err(_) => err,
    }
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = io::create(&path)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// One run: trajectory, checkpoints, monitored norms, identity checks and solver diagnostics.
pub fn run_single(cfg: &RunConfig, dir: &Path) -> Result<SingleOutcome> {
    let grid = prepare(cfg, dir)?;
    let n = cfg.scheme.n_steps.expect("validated");
    let traj = simulate(cfg, &grid, n, false).map_err(|e| record_failure(dir, e))?;
    let norms = norm_report(&traj)?;
    let identities = check_identities(&traj)?;

    write_file(dir.join("trajectory_full.csv"), |w| write_trajectory(w, &traj))?;
    let every = cfg.checkpoint_every.unwrap_or(n);
    for level in (0..=n).filter(|&k| k % every == 0 || k == n) {
        write_file(dir.join(format!("trajectory_n{level:06}.csv")), |w| write_level(w, &traj, level))?;
    }
    write_file(dir.join("estimates.csv"), |w| write_estimates(w, &[(label(cfg, n), norms)]))?;
    write_file(dir.join("identities.csv"), |w| write_identities(w, &identities))?;
    write_file(dir.join("diagnostics.csv"), |w| write_diagnostics(w, &traj.diagnostics))?;
    let below = traj.h() < traj.params.potential.estimate_threshold();
    Ok(SingleOutcome { trajectory: traj, norms, identities, below_estimate_threshold: below })
}

/// Errors of every `N` in the list against a same-grid reference run, and their log-log slopes.
pub fn run_convergence_study(cfg: &RunConfig, dir: &Path) -> Result<ConvergenceOutcome> {
    let grid = prepare(cfg, dir)?;
    let n_list = cfg.step_counts();
    let n_ref = cfg.reference_steps().expect("validated");
    let mut all = n_list.clone();
    all.push(n_ref);
    let trajs: Vec<Trajectory<f64>> = all
        .par_iter()
        .map(|&n| simulate(cfg, &grid, n, false))
        .collect::<Result<_>>()
        .map_err(|e| record_failure(dir, e))?;
    let (reference, coarse) = trajs.split_last().expect("non-empty");
    let errors: Vec<ErrorReport> = coarse.par_iter().map(|t| error_report(t, reference)).collect::<Result<_>>()?;
    let hs: Vec<f64> = n_list.iter().map(|&n| cfg.scheme.t_final / n as f64).collect();
    let slopes: Vec<f64> = (0..ErrorReport::NAMES.len())
        .map(|k| loglog_slope(&hs, &errors.iter().map(|e| e.as_array()[k]).collect::<Vec<_>>()))
        .collect();
    let pass = slopes.iter().all(|&s| s >= RATE_THRESHOLD);

    let rows: Vec<(RunLabel, ErrorReport)> = n_list.iter().zip(&errors).map(|(&n, e)| (label(cfg, n), *e)).collect();
    write_file(dir.join("errors.csv"), |w| write_errors(w, &rows))?;
    let rates: Vec<(String, f64, f64)> =
        ErrorReport::NAMES.iter().zip(&slopes).map(|(name, &s)| (name.to_string(), s, RATE_THRESHOLD)).collect();
    write_file(dir.join("rates.csv"), |w| write_rates(w, &rates))?;
    Ok(ConvergenceOutcome { n_list, n_ref, hs, errors, slopes, pass })
}

/// Monitored norms over a range of step sizes below `h1`.
pub fn run_apriori_sweep(cfg: &RunConfig, dir: &Path) -> Result<SweepOutcome> {
    let grid = prepare(cfg, dir)?;
    let n_list = cfg.step_counts();
    let reports: Vec<NormReport> = n_list
        .par_iter()
        .map(|&n| simulate(cfg, &grid, n, true).and_then(|t| norm_report(&t)))
        .collect::<Result<_>>()
        .map_err(|e| record_failure(dir, e))?;
    let hs: Vec<f64> = n_list.iter().map(|&n| cfg.scheme.t_final / n as f64).collect();
    let ratios: Vec<f64> = (0..NormReport::MONITORED.len())
        .map(|k| {
            let vals: Vec<f64> = reports.iter().map(|r| r.monitored()[k]).collect();
            spread(&vals)
        })
        .collect();
    let max_energy_violation = reports.iter().map(|r| r.energy_step_violation).fold(0.0, f64::max);
    let pass = ratios.iter().all(|&r| r <= UNIFORMITY_RATIO) && max_energy_violation <= ENERGY_TOL;

    let rows: Vec<(RunLabel, NormReport)> = n_list.iter().zip(&reports).map(|(&n, r)| (label(cfg, n), *r)).collect();
    write_file(dir.join("estimates.csv"), |w| write_estimates(w, &rows))?;
    write_file(dir.join("uniformity.csv"), |w| {
        writeln!(w, "quantity,min,max,ratio,status")?;
        for (k, name) in NormReport::MONITORED.iter().enumerate() {
            let vals: Vec<f64> = reports.iter().map(|r| r.monitored()[k]).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(0.0, f64::max);
            let status = if ratios[k] <= UNIFORMITY_RATIO { "PASS" } else { "FAIL" };
            writeln!(w, "{name},{},{},{},{status}", fmt_float(min), fmt_float(max), fmt_float(ratios[k]))?;
        }
        Ok(())
    })?;
    Ok(SweepOutcome { hs, reports, ratios, max_energy_violation, pass })
}

/// `max / min` of non-negative values; 1 when all vanish.
pub fn spread(vals: &[f64]) -> f64 {
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `|bar f_h - f|_{L2 H}` over the step counts of the list, and its slope.
pub fn run_source_average_study(cfg: &RunConfig, dir: &Path) -> Result<SourceAverageOutcome> {
    let grid = prepare(cfg, dir)?;
    let n_list = cfg.step_counts();
    let src = cfg.source.bind(cfg.scheme.ell);
    let t_final = cfg.scheme.t_final;
    let hs: Vec<f64> = n_list.iter().map(|&n| t_final / n as f64).collect();
    let errors: Vec<f64> = hs.par_iter().map(|&h| source_average_error(&src, &grid, t_final, h)).collect::<Result<_>>()?;
    let slope = loglog_slope(&hs, &errors);
    let pass = slope >= SOURCE_RATE_THRESHOLD;

    write_file(dir.join("source_average.csv"), |w| {
        writeln!(w, "run_id,h,grid,potential,source_average_error")?;
        for (&n, e) in n_list.iter().zip(&errors) {
            let l = label(cfg, n);
            writeln!(w, "{},{},{},{},{}", l.run_id, fmt_float(l.h), l.grid, l.potential, fmt_float(*e))?;
        }
        Ok(())
    })?;
    write_file(dir.join("rates.csv"), |w| {
        write_rates(w, &[("source_average_error".to_string(), slope, SOURCE_RATE_THRESHOLD)])
    })?;
    Ok(SourceAverageOutcome { hs, errors, slope, pass })
}

/// Re-runs the interpolant checks on a stored trajectory.
pub fn check_trajectory_file(path: &Path) -> Result<IdentityReport> {
    check_identities(&read_trajectory(path)?)
}

/// Initial data of a config, for inspection.
pub fn initial_data(cfg: &RunConfig) -> Result<(Field<f64>, Field<f64>)> {
    cfg.initial_fields(&cfg.grid.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialKind;

    fn single(dir: &Path) -> RunConfig {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            name: "t".into(),
            mode: Mode::Single,
            grid: GridSpec::line(1.0, 33),
            scheme: SchemeSpec { t_final: 0.25, n_steps: Some(16), n_list: None, n_ref: None, ell: 1.0 },
            potential: PotentialKind::DoubleObstacle { c2: 1.0 },
            initial: Some(InitialSpec {
                theta: InitialFamily::CosineBump { amplitude: 0.5, mode: 1 },
                phi: InitialFamily::TanhInterface { center: 0.5, width: 0.1, amplitude: 0.9 },
            }),
            source: SourceSpec::SeparableSinusoid { amplitudes: vec![0.0, 1.0], frequency: 1.0 },
            solver: Default::default(),
            output_dir: dir.to_path_buf(),
            checkpoint_every: Some(8),
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = single(Path::new("out"));
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let mut sweep = cfg.clone();
        sweep.mode = Mode::ConvergenceStudy;
        sweep.scheme.n_steps = None;
        sweep.scheme.n_list = Some(vec![4, 8, 16, 32]);
        assert_eq!(RunConfig::from_json(&sweep.to_json()).unwrap(), sweep);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Config(_))));
        let mut v: serde_json::Value = serde_json::from_str(&single(Path::new("o")).to_json()).unwrap();
        v["schema_version"] = 2.into();
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::InvalidParameter { .. })));
        v["schema_version"] = 1.into();
        v["unexpected"] = 0.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    fn field_of(r: Result<()>) -> String {
        match r {
            Err(Error::InvalidParameter { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn validation_messages_name_fields() {
        let base = single(Path::new("o"));
        base.validate().unwrap();

        let mut c = base.clone();
        c.potential = PotentialKind::Regular;
        c.scheme.n_steps = Some(1);
        c.scheme.t_final = 1.0;
        match c.validate() {
            Err(Error::InvalidParameter { field, reason }) => {
                assert_eq!(field, "scheme.n_steps");
                assert!(reason.contains("solvability threshold"), "{reason}");
            }
            other => panic!("{other:?}"),
        }

        let mut c = base.clone();
        c.mode = Mode::ConvergenceStudy;
        c.scheme.n_steps = None;
        c.scheme.n_list = Some(vec![4, 8, 8, 16]);
        assert_eq!(field_of(c.validate()), "scheme.n_list");
        c.scheme.n_list = Some(vec![4, 8, 16]);
        assert_eq!(field_of(c.validate()), "scheme.n_list");
        c.scheme.n_list = Some(vec![4, 8, 16, 32]);
        c.validate().unwrap();
        assert_eq!(c.reference_steps(), Some(512));
        c.scheme.n_ref = Some(256);
        assert_eq!(field_of(c.validate()), "scheme.n_ref");
        c.scheme.n_list = Some(vec![3, 8, 16, 32]);
        c.scheme.n_ref = Some(520);
        assert_eq!(field_of(c.validate()), "scheme.n_ref");
        c.scheme.n_ref = None;
        assert_eq!(c.reference_steps(), Some(576));
        c.validate().unwrap();

        let mut c = base.clone();
        c.initial.as_mut().unwrap().phi = InitialFamily::Constant { value: 1.5 };
        assert_eq!(field_of(c.validate()), "initial.phi");

        let mut c = base.clone();
        c.initial = None;
        assert_eq!(field_of(c.validate()), "initial");

        let mut c = base.clone();
        c.source = SourceSpec::ManufacturedResidual { problem: ManufacturedProblem::RegularCosine };
        c.initial = None;
        assert_eq!(field_of(c.validate()), "source.problem");

        let mut c = base;
        c.mode = Mode::AprioriSweep;
        c.scheme.n_steps = None;
        c.scheme.n_list = Some(vec![4, 64]);
        assert_eq!(field_of(c.validate()), "scheme.n_list");
    }

    #[test]
    fn single_run_writes_artifacts_into_new_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("nested").join("out");
        let cfg = single(&dir);
        let out = execute(&cfg, None).unwrap();
        assert!(out.pass());
        for f in [
            "trajectory_full.csv",
            "trajectory_n000000.csv",
            "trajectory_n000008.csv",
            "trajectory_n000016.csv",
            "estimates.csv",
            "identities.csv",
            "diagnostics.csv",
        ] {
            assert!(dir.join(f).exists(), "{f}");
        }
        let diag = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
        assert_eq!(diag.lines().count(), 17);
        let report = check_trajectory_file(&dir.join("trajectory_full.csv")).unwrap();
        assert!(report.max_defect() <= 1e-10);
    }

    #[test]
    fn zero_data_gives_zero_reports() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = single(tmp.path());
        cfg.initial = Some(InitialSpec { theta: InitialFamily::Constant { value: 0.0 }, phi: InitialFamily::Constant { value: 0.0 } });
        cfg.source = SourceSpec::Zero;
        let Outcome::Single(out) = execute(&cfg, None).unwrap() else { unreachable!() };
        assert!(out.norms.monitored().iter().all(|&v| v == 0.0));
        assert_eq!(out.identities.max_defect(), 0.0);
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = single(tmp.path());
        cfg.initial.as_mut().unwrap().theta = InitialFamily::RandomSmooth { seed: 11, cutoff: 5, amplitude: 0.7 };
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        execute(&cfg, Some(&a)).unwrap();
        execute(&cfg, Some(&b)).unwrap();
        for f in ["trajectory_full.csv", "estimates.csv", "identities.csv", "diagnostics.csv"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn spread_edge_cases() {
        assert_eq!(spread(&[0.0, 0.0]), 1.0);
        assert_eq!(spread(&[0.0, 1.0]), f64::INFINITY);
        assert_eq!(spread(&[2.0, 1.0, 4.0]), 4.0);
    }
}
