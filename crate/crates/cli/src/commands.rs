use std::fs;
use std::path::{Path, PathBuf};

use herald_core::estimation::{
    klyshko_efficiencies, monte_carlo_reconstruction_uncertainty, purity_to_schmidt, CalibrationPrior, MatrixSource, MonteCarloOptions,
};
use herald_core::gaussian::{detection_probabilities, g2_heralded, g2_unconditional, improvement_ratio};
use herald_core::oracle::exact_event_probabilities;
use herald_core::pnr::{characterize_from_poisson, CalibrationData, CharacterizationOptions, DetectorProfile};
use herald_core::sim::{simulate_run, write_timetags};
use herald_core::statistics::{g2_heralded_from_counts, g2_unconditional_from_counts, CountRecord};
use herald_core::{Error, HeraldDetectorModel, IdlerArmConfig, ReadoutMode, SourceConfig};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_inputs, digest_outputs, RunManifest};
use crate::tables::{self, opt};

/// What a command produced, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub outputs: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

pub fn config_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::ModelSweep(a) => a.config.as_deref(),
        Command::Simulate(a) => a.config.as_deref(),
        Command::OracleCheck(a) => a.config.as_deref(),
        _ => None,
    }
}

/// Input paths made absolute so a manifest stays valid from any directory.
pub fn absolutize(cmd: &mut Command) -> CliResult<()> {
    let abs = |p: &mut PathBuf| -> CliResult<()> {
        *p = std::path::absolute(&*p)?;
        Ok(())
    };
    match cmd {
        Command::Reconstruct(a) => {
            abs(&mut a.clicks)?;
            if let Some(p) = a.profile.as_mut() {
                abs(p)?;
            }
        }
        Command::Characterize(a) => abs(&mut a.calibration)?,
        _ => {}
    }
    Ok(())
}

pub fn execute(cmd: &Command, config: Option<&str>) -> CliResult<Outcome> {
    match cmd {
        Command::ModelSweep(a) => model_sweep(a, config),
        Command::Simulate(a) => simulate(a, config),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Characterize(a) => characterize(a),
        Command::OracleCheck(a) => oracle_check(a, config),
        Command::Validate(a) => validate(a),
        Command::Replay(a) => replay(a),
    }
}

fn run_config(config: Option<&str>) -> CliResult<RunConfig> {
    config.map_or_else(|| Ok(RunConfig::default()), RunConfig::parse)
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

/// Maps an undefined quantity to `None`, keeping every other error.
fn defined(r: herald_core::Result<f64>) -> CliResult<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn check_grid(grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(CliError::Usage("mean photon number grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|mu| !(mu.is_finite() && **mu >= 0.0)) {
        return Err(CliError::Usage(format!("mean photon number {bad} must be finite and >= 0")));
    }
    Ok(())
}

fn model_sweep(a: &SweepArgs, config: Option<&str>) -> CliResult<Outcome> {
    let cfg = run_config(config)?;
    let grid = a.mu_grid.clone().unwrap_or_else(|| cfg.sweep.mu_grid.clone());
    check_grid(&grid)?;
    let modes = if a.mode.is_empty() { cfg.sweep.modes.clone() } else { a.mode.clone() };
    if modes.is_empty() {
        return Err(CliError::Usage("no readout modes selected".into()));
    }
    let arm = cfg.arm()?;
    let herald = cfg.herald(ReadoutMode::Threshold)?;

    // the pure curve always; a mixed-source curve from the fitted polynomial
    // or, failing that, from the configured spectrum
    let mut variants: Vec<(&str, Box<dyn Fn(f64) -> CliResult<SourceConfig>>)> = vec![("pure", Box::new(|mu| Ok(SourceConfig::pure(mu)?)))];
    if let Some([c0, c1, c2]) = cfg.sweep.purity_polynomial {
        variants.push((
            "fitted",
            Box::new(move |mu| {
                let p = (c0 + mu * (c1 + mu * c2)).clamp(0.5 + 1e-12, 1.0);
                Ok(SourceConfig::new(mu, purity_to_schmidt(p)?)?)
            }),
        ));
    } else if cfg.spectrum()?.purity() < 1.0 {
        let spectrum = cfg.spectrum()?;
        variants.push(("configured", Box::new(move |mu| Ok(SourceConfig::new(mu, spectrum.clone())?))));
    }

    prepare_dir(&a.out_dir)?;
    let file = "model_sweep.csv";
    let mut w = tables::SWEEP.writer(&a.out_dir.join(file))?;
    for &mode in &modes {
        let h = herald.with_readout(mode);
        for (name, make) in &variants {
            for &mu in &grid {
                let source = make(mu)?;
                let p = detection_probabilities(&source, &h, &arm)?;
                let g2_h = defined(g2_heralded(&source, &h, &arm))?;
                let g2_unc = defined(g2_unconditional(&source, &arm))?;
                let ratio = defined(improvement_ratio(&source, &h, &arm))?;
                let mut row = vec![mode.to_string(), name.to_string(), source.spectrum().purity().to_string(), mu.to_string()];
                row.extend(p.values().iter().map(f64::to_string));
                row.extend([opt(g2_h), opt(g2_unc), opt(ratio)]);
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    println!("wrote {} rows to {}", modes.len() * variants.len() * grid.len(), a.out_dir.join(file).display());
    Ok(Outcome { out_dir: Some(a.out_dir.clone()), outputs: vec![file.into()], ..Default::default() })
}

fn simulate(a: &SimulateArgs, config: Option<&str>) -> CliResult<Outcome> {
    let mut cfg = run_config(config)?;
    if let Some(s) = a.seed {
        cfg.experiment.seed = s;
    }
    if let Some(p) = a.pulses {
        cfg.experiment.pulses = p;
    }
    if let Some(w) = a.window_ps {
        cfg.experiment.window_ps = w;
    }
    let exp = cfg.experiment()?;
    let emit = a.timetags || cfg.experiment.timetags;
    let out = simulate_run(&exp, emit)?;

    prepare_dir(&a.out_dir)?;
    let mut outputs = vec!["counts.csv".to_string(), "count_g2.csv".to_string()];
    out.counts.write_csv(fs::File::create(a.out_dir.join("counts.csv"))?)?;
    write_count_g2(&a.out_dir.join("count_g2.csv"), &out.counts)?;
    if let Some(tags) = &out.tags {
        write_timetags(tags, std::io::BufWriter::new(fs::File::create(a.out_dir.join("timetags.csv"))?))?;
        outputs.push("timetags.csv".into());
    }
    let c = &out.counts;
    println!("{} pulses: C_h = {}, C_a = {}, C_b = {}, C_hab = {}", c.pulses, c.c_h, c.c_a, c.c_b, c.c_hab);
    Ok(Outcome { out_dir: Some(a.out_dir.clone()), outputs, seed: Some(exp.seed), ..Default::default() })
}

fn write_count_g2(path: &Path, counts: &CountRecord) -> CliResult<()> {
    let mut w = tables::COUNT_G2.writer(path)?;
    let ratio = |r: herald_core::Result<herald_core::statistics::RatioEstimate>| -> CliResult<[String; 2]> {
        match r {
            Ok(e) => Ok([e.value.to_string(), e.std_error.to_string()]),
            Err(Error::Undefined(_)) => Ok([String::new(), String::new()]),
            Err(e) => Err(e.into()),
        }
    };
    for mode in [ReadoutMode::Threshold, ReadoutMode::ExactlyOneClick] {
        let [v, s] = ratio(g2_heralded_from_counts(&counts.for_readout(mode)?))?;
        w.write_record(["g2_h", mode.as_str(), &v, &s])?;
    }
    let [v, s] = ratio(g2_unconditional_from_counts(counts))?;
    w.write_record(["g2_unc", "none", &v, &s])?;
    match klyshko_efficiencies(counts) {
        Ok(k) => {
            w.write_record(["eta_s", "threshold", &k.eta_s.value.to_string(), &k.eta_s.std_error.to_string()])?;
            w.write_record(["eta_i", "threshold", &k.eta_i.value.to_string(), &k.eta_i.std_error.to_string()])?;
        }
        Err(Error::Undefined(_)) => {
            w.write_record(["eta_s", "threshold", "", ""])?;
            w.write_record(["eta_i", "threshold", "", ""])?;
        }
        Err(e) => return Err(e.into()),
    }
    w.flush()?;
    Ok(())
}

fn reconstruct(a: &ReconstructArgs) -> CliResult<Outcome> {
    let observed = tables::read_clicks(&a.clicks)?;
    let (profile, mut inputs) = match &a.profile {
        Some(p) => {
            let profile = DetectorProfile::read(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            (profile, vec![p.clone()])
        }
        None => (DetectorProfile::reference(), vec![]),
    };
    inputs.insert(0, a.clicks.clone());
    let pixels = profile.matrix.pixel_count();
    let max_photons = profile.matrix.max_photons();
    if observed.len() != pixels + 1 {
        return Err(CliError::Validation(format!(
            "{}: {} click classes but the detector has {pixels} pixels",
            a.clicks.display(),
            observed.len()
        )));
    }
    let (source, nominal_mu) = match &profile.calibration {
        Some(cal) => (MatrixSource::Calibrated(cal.clone()), cal.mu),
        None => (MatrixSource::Fixed(profile.matrix.clone()), herald_core::presets::CALIBRATION_MU),
    };
    let opts = MonteCarloOptions {
        iterations: a.iterations,
        seed: a.seed,
        prior: CalibrationPrior { mu_mean: a.calibration_mu.unwrap_or(nominal_mu), sigma: a.sigma },
        resample_counts: !a.calibration_only,
        ..Default::default()
    };
    let s = monte_carlo_reconstruction_uncertainty(&observed, pixels, max_photons, &source, &opts)?;

    prepare_dir(&a.out_dir)?;
    let mut w = tables::RECONSTRUCTION.writer(&a.out_dir.join("reconstruction.csv"))?;
    for (m, (p, e)) in s.point.distribution.probabilities().iter().zip(&s.per_entry).enumerate() {
        w.write_record([m.to_string(), p.to_string(), e.mean.to_string(), e.std.to_string(), e.lower95.to_string(), e.upper95.to_string()])?;
    }
    w.flush()?;
    let mut w = tables::G2_SUMMARY.writer(&a.out_dir.join("g2.csv"))?;
    w.write_record([
        s.point_g2.to_string(),
        s.g2.mean.to_string(),
        s.g2.std.to_string(),
        s.g2.lower95.to_string(),
        s.g2.upper95.to_string(),
        s.point.residual_norm.to_string(),
        s.point.iterations.to_string(),
        s.successes.to_string(),
        s.failures.to_string(),
    ])?;
    w.flush()?;
    println!("g2 = {} ± {} (95% interval [{}, {}])", s.point_g2, s.g2.std, s.g2.lower95, s.g2.upper95);
    if s.failures > 0 {
        eprintln!("warning: {} of {} Monte-Carlo iterations failed", s.failures, a.iterations);
    }
    Ok(Outcome {
        out_dir: Some(a.out_dir.clone()),
        outputs: vec!["reconstruction.csv".into(), "g2.csv".into()],
        inputs,
        seed: Some(a.seed),
    })
}

fn characterize(a: &CharacterizeArgs) -> CliResult<Outcome> {
    let counts = tables::read_clicks(&a.calibration)?;
    let pixels = counts.len() - 1;
    if let Some(n) = a.pixels {
        if n != pixels {
            return Err(CliError::Validation(format!("{}: {} click classes for {n} pixels", a.calibration.display(), counts.len())));
        }
    }
    if a.name.is_empty() || a.name.contains(['/', '\\']) {
        return Err(CliError::Usage(format!("profile name '{}' must be a plain file stem", a.name)));
    }
    let opts = CharacterizationOptions { model: a.model, ..Default::default() };
    let fit = characterize_from_poisson(&counts, a.mu, pixels, a.max_photons, &opts)?;
    let profile = DetectorProfile {
        name: a.name.clone(),
        matrix: fit.matrix.clone(),
        click_probabilities: Some(fit.click_probabilities.clone()),
        standard_errors: Some(fit.standard_errors.clone()),
        calibration: Some(CalibrationData { mu: a.mu, counts, model: a.model }),
    };

    prepare_dir(&a.out_dir)?;
    profile.write(&a.out_dir, &a.name)?;
    let mut w = tables::PIXELS.writer(&a.out_dir.join("characterization.csv"))?;
    for (k, (d, se)) in fit.click_probabilities.iter().zip(&fit.standard_errors).enumerate() {
        w.write_record([(k + 1).to_string(), d.to_string(), se.to_string()])?;
        println!("d_{} = {d} ± {se}", k + 1);
    }
    w.flush()?;
    if fit.at_boundary {
        eprintln!("warning: the fit sits on the boundary of the feasible region");
    }
    Ok(Outcome {
        out_dir: Some(a.out_dir.clone()),
        outputs: vec![format!("{}.toml", a.name), format!("{}_matrix.csv", a.name), "characterization.csv".into()],
        inputs: vec![a.calibration.clone()],
        seed: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Grid {
    mu: Vec<f64>,
    eta_h: Vec<f64>,
    eta_a: Vec<f64>,
    eta_b: Vec<f64>,
    pixels: Vec<usize>,
    /// "uniform", or "skewed" for T_k proportional to N − k + 1.
    splittings: Vec<String>,
    purities: Vec<f64>,
    readouts: Vec<ReadoutMode>,
}

impl Default for Grid {
    fn default() -> Self {
        let etas = vec![0.3, 0.635, 0.9];
        Self {
            mu: vec![0.01, 0.05, 0.1, 0.3],
            eta_h: etas.clone(),
            eta_a: etas.clone(),
            eta_b: etas,
            pixels: vec![1, 2, 4],
            splittings: vec!["uniform".into(), "skewed".into()],
            purities: vec![1.0, 0.84],
            readouts: vec![ReadoutMode::Threshold, ReadoutMode::ExactlyOneClick],
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    grid: Grid,
}

/// Splitting fractions for a grid entry, or None when the entry duplicates
/// another (every splitting of one pixel is uniform).
fn splitting(kind: &str, n: usize) -> CliResult<Option<Vec<f64>>> {
    match kind {
        "uniform" => Ok(Some(vec![1.0 / n as f64; n])),
        "skewed" if n == 1 => Ok(None),
        "skewed" => {
            let total = (n * (n + 1) / 2) as f64;
            Ok(Some((0..n).map(|k| (n - k) as f64 / total).collect()))
        }
        other => Err(CliError::Usage(format!("unknown splitting '{other}' (expected uniform or skewed)"))),
    }
}

fn oracle_check(a: &OracleArgs, config: Option<&str>) -> CliResult<Outcome> {
    let mut grid = match config {
        Some(text) => toml::from_str::<GridFile>(text).map_err(|e| CliError::Usage(format!("grid config: {}", e.message())))?.grid,
        None => Grid::default(),
    };
    if let Some(mu) = &a.mu_grid {
        grid.mu = mu.clone();
    }
    check_grid(&grid.mu)?;
    let sizes = [grid.eta_h.len(), grid.eta_a.len(), grid.eta_b.len(), grid.pixels.len(), grid.splittings.len(), grid.purities.len(), grid.readouts.len()];
    if sizes.contains(&0) {
        return Err(CliError::Usage("every grid axis needs at least one value".into()));
    }
    if grid.readouts.contains(&ReadoutMode::PerfectPnr) {
        return Err(CliError::Usage("perfect readout has no closed form to check".into()));
    }
    if !(a.tolerance > 0.0) {
        return Err(CliError::Usage(format!("tolerance must be > 0, got {}", a.tolerance)));
    }

    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &mu in &grid.mu {
        for &purity in &grid.purities {
            let source = SourceConfig::new(mu, purity_to_schmidt(purity)?)?;
            for &n in &grid.pixels {
                for kind in &grid.splittings {
                    let Some(t) = splitting(kind, n)? else { continue };
                    for &eta_h in &grid.eta_h {
                        let herald = HeraldDetectorModel::with_splitting(eta_h, t.clone(), ReadoutMode::Threshold)?;
                        for &eta_a in &grid.eta_a {
                            for &eta_b in &grid.eta_b {
                                let arm = IdlerArmConfig::new(eta_a, eta_b)?;
                                let table = exact_event_probabilities(&source, &herald, &arm, None)?;
                                for &mode in &grid.readouts {
                                    let exact = match mode {
                                        ReadoutMode::Threshold => table.threshold_probabilities(),
                                        _ => table.exactly_one_click_probabilities(),
                                    };
                                    let mut closed = detection_probabilities(&source, &herald.with_readout(mode), &arm)?;
                                    if a.corrupt_formula {
                                        closed.p_ha += 1e-6;
                                    }
                                    let delta = closed.max_abs_diff(&exact);
                                    worst = worst.max(delta);
                                    rows.push([
                                        mu.to_string(),
                                        eta_h.to_string(),
                                        eta_a.to_string(),
                                        eta_b.to_string(),
                                        n.to_string(),
                                        kind.clone(),
                                        purity.to_string(),
                                        mode.to_string(),
                                        delta.to_string(),
                                        (delta < a.tolerance).to_string(),
                                    ]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut outcome = Outcome::default();
    if let Some(dir) = &a.out_dir {
        prepare_dir(dir)?;
        let mut w = tables::ORACLE.writer(&dir.join("oracle_check.csv"))?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
        outcome.out_dir = Some(dir.clone());
        outcome.outputs.push("oracle_check.csv".into());
    }
    let failed = rows.iter().filter(|r| r[9] == "false").count();
    println!("max |delta| = {worst:e} over {} configurations (tolerance {:e})", rows.len(), a.tolerance);
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} configurations exceed the tolerance")));
    }
    println!("PASS");
    Ok(outcome)
}

fn validate(a: &ValidateArgs) -> CliResult<Outcome> {
    let mut bad = 0;
    for f in &a.files {
        match tables::validate_file(f) {
            Ok(schema) => println!("ok      {} ({schema})", f.display()),
            Err(e) => {
                bad += 1;
                println!("invalid {}: {e}", f.display());
            }
        }
    }
    if bad > 0 {
        return Err(CliError::Validation(format!("{bad} of {} files invalid", a.files.len())));
    }
    Ok(Outcome::default())
}

fn replay(a: &ReplayArgs) -> CliResult<Outcome> {
    let manifest = RunManifest::read(&a.manifest)?;
    for input in &manifest.inputs {
        let now = digest_inputs(&[PathBuf::from(&input.path)])?;
        if now[0].sha256 != input.sha256 {
            return Err(CliError::Validation(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let out_dir = match &a.out_dir {
        Some(d) => d.clone(),
        None => a.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let mut cmd = manifest.command.clone();
    match &mut cmd {
        Command::ModelSweep(x) => x.out_dir = out_dir.clone(),
        Command::Simulate(x) => x.out_dir = out_dir.clone(),
        Command::Reconstruct(x) => x.out_dir = out_dir.clone(),
        Command::Characterize(x) => x.out_dir = out_dir.clone(),
        Command::OracleCheck(x) => x.out_dir = Some(out_dir.clone()),
        Command::Validate(_) | Command::Replay(_) => return Err(CliError::Validation("manifest records a command that writes no outputs".into())),
    }
    execute(&cmd, manifest.config.as_deref())?;
    let names: Vec<String> = manifest.outputs.iter().map(|o| o.path.clone()).collect();
    let replayed = digest_outputs(&out_dir, &names)?;
    let mut differ = 0;
    for (old, new) in manifest.outputs.iter().zip(&replayed) {
        let same = old.sha256 == new.sha256;
        differ += !same as usize;
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, old.path);
    }
    if differ > 0 {
        return Err(CliError::Validation(format!("{differ} outputs differ from the manifest")));
    }
    Ok(Outcome::default())
}
