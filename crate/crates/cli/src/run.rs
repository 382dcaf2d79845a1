//! Command execution: flag resolution, the simulate/analyze/calc pipelines
//! and manifest bookkeeping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sps_core::analysis::{analyze_g2, analyze_hom, analyze_lifetime, hom_histogram, sweep};
use sps_core::budget::{
    chain_efficiency, infer_collection_efficiency, multiphoton_correct, reference_detector_stage, BudgetReport,
    EfficiencyStage,
};
use sps_core::correlate::Histogram;
use sps_core::fitting::fit_saturation;
use sps_core::mc::{calibrate_p_multi, hbt_simulate, hom_simulate, run_with_workers, Detections};
use sps_core::model::{beta_factor, purcell_factor, spectral_factor};
use sps_core::polarization::{fit_cos2, polarization_ratio};
use sps_core::spatial::{calibrate_profile, purcell_map, GridSpec};

use crate::cli::{AnalyzeArgs, AnalyzeCmd, CalcCmd, Cli, Command, Format, SimArgs, SimulateCmd};
use crate::config::{load_config, Config};
use crate::error::{CliError, CliResult};
use crate::io::{
    digest_at, digest_in, read_json, read_saturation, read_scan, read_timestamps, timestamp_file_name, write_json,
    write_timestamps, write_with,
};
use crate::manifest::{
    acquisition_of, read_manifest, require_all_ok, verify, version, write_manifest, Acquisition, Check, Manifest,
    Provenance, MANIFEST_NAME,
};

/// Entry point shared by the binary and the tests.
pub fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    match &cli.command {
        Command::Verify { manifest } => {
            let checks = verify(manifest)?;
            for c in &checks {
                match c {
                    Check::Ok(p) => println!("ok        {}", p.display()),
                    Check::Mismatch(p) => println!("MISMATCH  {}", p.display()),
                    Check::Missing(p) => println!("MISSING   {}", p.display()),
                }
            }
            require_all_ok(&checks)
        }
        Command::Reproduce { manifest, out } => reproduce(manifest, out, argv),
        cmd => {
            let cfg = resolve(cmd, load_config(cli.config.as_deref())?)?;
            execute(cmd, &cfg, argv).map(|_| ())
        }
    }
}

/// Applies command-line overrides to `cfg` and validates the result.
/// Applying the same command twice gives the same settings.
pub fn resolve(cmd: &Command, mut cfg: Config) -> CliResult<Config> {
    match cmd {
        Command::Simulate(s) => {
            let (args, train) = match s {
                SimulateCmd::Hbt(a) => (a, &mut cfg.hbt.pulse_train),
                SimulateCmd::Hom { common, .. } => (common, &mut cfg.hom.pulse_train),
            };
            if let Some(n) = args.n_pulses {
                train.n_pulses = n;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let SimulateCmd::Hom { pol: Some(p), .. } = s {
                cfg.hom.interferometer.pol_mode = (*p).into();
            }
        }
        Command::Analyze(a) => match a {
            AnalyzeCmd::G2 { common, .. } => {
                if let Some(w) = common.bin_width_ps {
                    cfg.g2.bin_width_ps = w;
                }
            }
            AnalyzeCmd::Hom { common, .. } | AnalyzeCmd::Sweep { common, .. } => {
                if let Some(w) = common.bin_width_ps {
                    cfg.hom_analysis.bin_width_ps = w;
                }
                if let AnalyzeCmd::Sweep { windows_ps: Some(w), .. } = a {
                    cfg.sweep.windows_ps = w.clone();
                }
            }
            AnalyzeCmd::Lifetime { common, model, .. } => {
                if let Some(w) = common.bin_width_ps {
                    cfg.lifetime.bin_width_ps = w;
                }
                if let Some(m) = model {
                    cfg.lifetime.model = (*m).into();
                }
            }
            AnalyzeCmd::Saturation { weighting, .. } => {
                if let Some(w) = weighting {
                    cfg.saturation.weighting = (*w).into();
                }
            }
            AnalyzeCmd::Polarization { .. } => {}
        },
        Command::Calc(c) => match c {
            CalcCmd::Purcell { q, v_norm, detuning_nm, spatial_mismatch, pol_mismatch, .. } => {
                set(&mut cfg.cavity.q, *q);
                set(&mut cfg.cavity.v_norm, *v_norm);
                set(&mut cfg.geometry.detuning_nm, *detuning_nm);
                set(&mut cfg.geometry.spatial_mismatch, *spatial_mismatch);
                set(&mut cfg.geometry.pol_mismatch, *pol_mismatch);
            }
            CalcCmd::PurcellMap { q, v_norm, step_nm, half_extent_nm, .. } => {
                set(&mut cfg.cavity.q, *q);
                set(&mut cfg.cavity.v_norm, *v_norm);
                set(&mut cfg.spatial.step_nm, *step_nm);
                set(&mut cfg.spatial.half_extent_nm, *half_extent_nm);
            }
            CalcCmd::Budget { stages, with_detector, .. } => {
                if let Some(path) = stages {
                    cfg.budget.stages = read_json::<Vec<EfficiencyStage>>(path)?;
                }
                if *with_detector {
                    cfg.budget.include_detector = true;
                }
            }
            CalcCmd::Beta { .. } => {}
        },
        Command::Verify { .. } | Command::Reproduce { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set(field: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *field = v;
    }
}

/// Files a command wrote, plus what the manifest should say about them.
#[derive(Default)]
struct Written {
    dir: PathBuf,
    manifest_name: String,
    outputs: Vec<String>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    acquisition: Option<Acquisition>,
    derived: BTreeMap<String, f64>,
}

impl Written {
    fn in_dir(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), manifest_name: MANIFEST_NAME.into(), ..Default::default() }
    }
}

/// Runs a resolved command and writes its manifest. Returns the manifest
/// path, or `None` when the result went to standard output only.
pub fn execute(cmd: &Command, cfg: &Config, argv: Vec<String>) -> CliResult<Option<PathBuf>> {
    let start = Instant::now();
    let written = match cmd {
        Command::Simulate(s) => simulate(s, cfg)?,
        Command::Analyze(a) => analyze(cmd, a, cfg)?,
        Command::Calc(c) => match calc(c, cfg)? {
            Some(w) => w,
            None => return Ok(None),
        },
        Command::Verify { .. } | Command::Reproduce { .. } => {
            return Err(CliError::Config("verify and reproduce do not produce a manifest".into()))
        }
    };
    let outputs = written.outputs.iter().map(|name| digest_in(&written.dir, name)).collect::<CliResult<Vec<_>>>()?;
    let inputs = digest_inputs(&written.inputs)?;
    let manifest = Manifest {
        tool: "sps".into(),
        version: version(),
        argv,
        command: cmd.clone(),
        config: cfg.clone(),
        seed: written.seed,
        inputs,
        outputs,
        wall_clock_s: start.elapsed().as_secs_f64(),
        acquisition: written.acquisition,
        derived: written.derived,
    };
    let path = written.dir.join(&written.manifest_name);
    write_manifest(&path, &manifest)?;
    Ok(Some(path))
}

fn digest_inputs(paths: &[PathBuf]) -> CliResult<Vec<crate::io::FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let abs = std::fs::canonicalize(p).map_err(|e| CliError::io(p, e))?;
            digest_at(&abs)
        })
        .collect()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn simulate(s: &SimulateCmd, cfg: &Config) -> CliResult<Written> {
    let args: &SimArgs = match s {
        SimulateCmd::Hbt(a) => a,
        SimulateCmd::Hom { common, .. } => common,
    };
    create_dir(&args.out)?;
    let mut w = Written::in_dir(&args.out);
    let seed = cfg.seed;
    let (train, detections): (_, Detections) = match s {
        SimulateCmd::Hbt(_) => {
            let train = cfg.hbt.pulse_train;
            let mut em = cfg.emitter;
            if let Some(g) = cfg.hbt.target_g2 {
                em.p_multi = calibrate_p_multi(g, train.excitation_probability())?;
                w.derived.insert("p_multi".into(), em.p_multi);
            }
            let det = cfg.detector;
            (train, run_with_workers(args.workers, || hbt_simulate(&em, &train, &det, seed))??)
        }
        SimulateCmd::Hom { .. } => {
            let train = cfg.hom.pulse_train;
            let (em, hom, det) = (cfg.emitter, cfg.hom.interferometer, cfg.detector);
            w.derived.insert("effective_visibility".into(), hom.effective_visibility());
            (train, run_with_workers(args.workers, || hom_simulate(&em, &train, &hom, &det, seed))??)
        }
    };
    for (ch, recs) in [(0u8, &detections.ch0), (1u8, &detections.ch1)] {
        let name = timestamp_file_name(ch);
        write_timestamps(&args.out.join(&name), recs)?;
        w.outputs.push(name);
    }
    w.seed = Some(seed);
    w.acquisition = Some(Acquisition {
        duration_ps: train.duration_ps().round() as i64,
        rep_period_ps: train.rep_period_ps(),
        n_pulses: train.n_pulses,
    });
    println!(
        "wrote {} + {} detections to {}",
        detections.ch0.len(),
        detections.ch1.len(),
        args.out.display()
    );
    Ok(w)
}

/// Both channels of a timestamp directory and the acquisition time.
fn load_pair(dir: &Path, common: &AnalyzeArgs, inputs: &mut Vec<PathBuf>) -> CliResult<(Vec<i64>, Vec<i64>, i64)> {
    let mut chans = Vec::new();
    for ch in [0u8, 1] {
        let path = dir.join(timestamp_file_name(ch));
        chans.push(read_timestamps(&path, ch)?);
        inputs.push(path);
    }
    let duration = match common.duration_ps {
        Some(d) => d,
        None => acquisition_of(dir)?.map(|a| a.duration_ps).ok_or_else(|| {
            CliError::Config(format!("{}: no manifest with the acquisition time; pass --duration-ps", dir.display()))
        })?,
    };
    if duration <= 0 {
        return Err(CliError::Config(format!("duration_ps must be > 0, got {duration}")));
    }
    let ch1 = chans.pop().unwrap();
    Ok((chans.pop().unwrap(), ch1, duration))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: Provenance,
    converged: bool,
    result: &'a T,
}

fn write_report<T: Serialize>(
    w: &mut Written,
    cmd: &Command,
    cfg: &Config,
    converged: bool,
    result: &T,
) -> CliResult<()> {
    let provenance = Provenance {
        tool: "sps".into(),
        version: version(),
        // the output location is left out so that replays match byte for byte
        command: cmd.redirected(Path::new(".")),
        config: cfg.clone(),
        inputs: digest_inputs(&w.inputs)?,
    };
    if !converged {
        eprintln!("warning: a fit did not converge; see `converged` in the report");
    }
    write_json(&w.dir.join("report.json"), &Report { provenance, converged, result })?;
    w.outputs.push("report.json".into());
    Ok(())
}

fn write_histogram(w: &mut Written, stem: &str, hist: &Histogram, background_per_bin: Option<f64>) -> CliResult<()> {
    let csv = format!("{stem}.csv");
    write_with(&w.dir.join(&csv), |out| hist.write_csv(out))?;
    w.outputs.push(csv);
    if let Some(bg) = background_per_bin {
        let meta = format!("{stem}.json");
        write_json(&w.dir.join(&meta), &hist.metadata(bg))?;
        w.outputs.push(meta);
    }
    Ok(())
}

fn analyze(cmd: &Command, a: &AnalyzeCmd, cfg: &Config) -> CliResult<Written> {
    let out = match a {
        AnalyzeCmd::G2 { common, .. }
        | AnalyzeCmd::Hom { common, .. }
        | AnalyzeCmd::Sweep { common, .. }
        | AnalyzeCmd::Lifetime { common, .. } => &common.out,
        AnalyzeCmd::Saturation { out, .. } | AnalyzeCmd::Polarization { out, .. } => out,
    };
    create_dir(out)?;
    let mut w = Written::in_dir(out);
    match a {
        AnalyzeCmd::G2 { input, common } => {
            let (ch0, ch1, dur) = load_pair(input, common, &mut w.inputs)?;
            let g = cfg.g2;
            let r = run_with_workers(common.workers, || analyze_g2(&ch0, &ch1, dur, &g))??;
            write_histogram(&mut w, "histogram", &r.histogram, Some(r.background_per_bin))?;
            write_report(&mut w, cmd, cfg, r.fit.fit.converged, &r)?;
            println!(
                "g2(0) fit {:.4} ± {:.4}, window areas {:.4} ± {:.4}, tau1 {:.1} ± {:.1} ps",
                r.fit.g2_0.value, r.fit.g2_0.sigma, r.g2_0_area.value, r.g2_0_area.sigma, r.fit.tau1.value, r.fit.tau1.sigma
            );
        }
        AnalyzeCmd::Hom { parallel, orthogonal, common } => {
            let h = cfg.hom_analysis;
            let (p0, p1, pd) = load_pair(parallel, common, &mut w.inputs)?;
            let (o0, o1, od) = load_pair(orthogonal, common, &mut w.inputs)?;
            let r = run_with_workers(common.workers, || -> sps_core::Result<_> {
                let hp = hom_histogram(&p0, &p1, pd, &h)?;
                let ho = hom_histogram(&o0, &o1, od, &h)?;
                analyze_hom(&hp, &ho, &h)
            })??;
            write_histogram(&mut w, "hist_parallel", &r.hist_parallel, Some(r.peaks_parallel.background_per_bin))?;
            write_histogram(&mut w, "hist_orthogonal", &r.hist_orthogonal, Some(r.peaks_orthogonal.background_per_bin))?;
            let converged = r.fit.parallel.converged && r.fit.orthogonal.converged;
            write_report(&mut w, cmd, cfg, converged, &r)?;
            let f = &r.fit;
            println!(
                "V {:.4}, V̄ {:.3} ± {:.3}, v {:.3} ± {:.3}, tau2 {:.1} ± {:.1} ps, g⊥(0) {:.3}",
                r.visibility_raw, f.vbar.value, f.vbar.sigma, f.v.value, f.v.sigma, f.tau2_ps.value, f.tau2_ps.sigma,
                f.g2_orth_0.value
            );
        }
        AnalyzeCmd::Sweep { parallel, orthogonal, common, .. } => {
            let h = cfg.hom_analysis;
            let (p0, p1, pd) = load_pair(parallel, common, &mut w.inputs)?;
            let (o0, o1, od) = load_pair(orthogonal, common, &mut w.inputs)?;
            let windows = cfg.sweep.windows_ps.clone();
            let points = run_with_workers(common.workers, || -> sps_core::Result<_> {
                let hp = hom_histogram(&p0, &p1, pd, &h)?;
                let ho = hom_histogram(&o0, &o1, od, &h)?;
                sweep(&hp, &ho, h.spacing_ps, &windows)
            })??;
            write_with(&w.dir.join("sweep.csv"), |out| {
                writeln!(out, "window_ps,visibility,retained_fraction,g2_parallel,g2_orthogonal")?;
                for p in &points {
                    writeln!(out, "{},{},{},{},{}", p.window_ps, p.visibility, p.retained_fraction, p.g2_parallel, p.g2_orthogonal)?;
                }
                Ok(())
            })?;
            w.outputs.push("sweep.csv".into());
            write_report(&mut w, cmd, cfg, true, &points)?;
            println!("{} windows written to sweep.csv", points.len());
        }
        AnalyzeCmd::Lifetime { input, common, channel, .. } => {
            if *channel > 1 {
                return Err(CliError::Config(format!("channel must be 0 or 1, got {channel}")));
            }
            let path = if input.is_dir() { input.join(timestamp_file_name(*channel)) } else { input.clone() };
            let times = read_timestamps(&path, *channel)?;
            w.inputs.push(path);
            let l = cfg.lifetime;
            let (hist, fit) = run_with_workers(common.workers, || {
                analyze_lifetime(&times, l.rep_period_ps, l.bin_width_ps, l.irf_sigma_ps, l.model)
            })??;
            write_histogram(&mut w, "decay", &hist, None)?;
            write_report(&mut w, cmd, cfg, fit.fit.converged, &fit)?;
            println!("tau {:.1} ± {:.1} ps", fit.tau_ps.value, fit.tau_ps.sigma);
        }
        AnalyzeCmd::Saturation { input, .. } => {
            let points = read_saturation(input)?;
            w.inputs.push(input.clone());
            let fit = fit_saturation(&points, cfg.saturation.weighting)?;
            write_report(&mut w, cmd, cfg, fit.fit.converged, &fit)?;
            println!(
                "I_max {:.4e} ± {:.2e}, P_sat {:.2} ± {:.2} nW",
                fit.i_max.value, fit.i_max.sigma, fit.p_sat.value, fit.p_sat.sigma
            );
        }
        AnalyzeCmd::Polarization { input, .. } => {
            let scan = read_scan(input)?;
            w.inputs.push(input.clone());
            let fit = fit_cos2(&scan)?;
            let rho = polarization_ratio(&scan)?;
            let result = json!({
                "rho": rho,
                "axis_deg": fit.axis_deg,
                "offset": fit.offset,
                "amplitude": fit.amplitude,
                "i_max": fit.i_max(),
                "i_min": fit.i_min(),
            });
            write_report(&mut w, cmd, cfg, true, &result)?;
            println!("rho {rho:.4}, axis {:.1}°", fit.axis_deg);
        }
    }
    Ok(w)
}

/// Calc results go to standard output, or to `--out` with a manifest
/// named after the file.
fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<Option<Written>> {
    let Some(path) = out else {
        print!("{text}");
        return Ok(None);
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut w = Written::in_dir(&dir);
    w.manifest_name = format!("{name}.manifest.json");
    w.outputs.push(name);
    Ok(Some(w))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn calc(c: &CalcCmd, cfg: &Config) -> CliResult<Option<Written>> {
    match c {
        CalcCmd::Purcell { out, .. } => {
            let fp = purcell_factor(&cfg.cavity, &cfg.geometry)?;
            let v = json!({
                "purcell_factor": fp,
                "q": cfg.cavity.q,
                "v_norm": cfg.cavity.v_norm,
                "spectral_factor": spectral_factor(&cfg.cavity, cfg.geometry.detuning_nm),
                "spatial_mismatch": cfg.geometry.spatial_mismatch,
                "pol_mismatch": cfg.geometry.pol_mismatch,
            });
            emit(out, &pretty(&v))
        }
        CalcCmd::PurcellMap { out, .. } => {
            let s = cfg.spatial;
            let profile = calibrate_profile(s.drop_x_nm, s.drop_y_nm, s.drop_factor)?;
            let map = purcell_map(&cfg.cavity, &profile, &GridSpec::centered(s.half_extent_nm, s.step_nm))?;
            let mut buf = Vec::new();
            map.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            emit(out, &String::from_utf8(buf).expect("csv is utf-8"))
        }
        CalcCmd::Budget { detected_prob, g2, format, out, .. } => {
            let mut stages = cfg.budget.stages.clone();
            if cfg.budget.include_detector {
                stages.push(reference_detector_stage());
            }
            let report = BudgetReport::new(stages)?;
            let eta = chain_efficiency(&report.stages)?.eta;
            let collection = detected_prob.map(|d| infer_collection_efficiency(d, eta)).transpose()?;
            let corrected = match (collection, g2) {
                (Some(c), Some(g)) => Some(multiphoton_correct(c, *g)?),
                _ => None,
            };
            let text = match format {
                Format::Json => pretty(&json!({
                    "stages": report.stages,
                    "total": { "eta": report.total.eta, "rel_sigma": report.total.rel_sigma, "abs_sigma": report.total.abs_sigma() },
                    "collection_efficiency": collection,
                    "collection_efficiency_corrected": corrected,
                })),
                Format::Table => {
                    let mut t = format!("{report}\n");
                    if let Some(c) = collection {
                        writeln!(t, "collection efficiency  {c:.4}").unwrap();
                    }
                    if let Some(c) = corrected {
                        writeln!(t, "multi-photon corrected {c:.4}").unwrap();
                    }
                    t
                }
            };
            emit(out, &text)
        }
        CalcCmd::Beta { tau_c_ps, tau_uc_ps, out } => {
            let beta = beta_factor(*tau_c_ps, *tau_uc_ps)?;
            emit(out, &pretty(&json!({ "beta": beta, "tau_c_ps": tau_c_ps, "tau_uc_ps": tau_uc_ps })))
        }
    }
}

/// Replays a manifest's command with its recorded settings into `out` and
/// checks that every output digest matches.
pub fn reproduce(manifest: &Path, out: &Path, argv: Vec<String>) -> CliResult<()> {
    let old = read_manifest(manifest)?;
    create_dir(out)?;
    let cmd = old.command.redirected(out);
    let cfg = resolve(&cmd, old.config.clone())?;
    let Some(path) = execute(&cmd, &cfg, argv)? else {
        return Err(CliError::Config("the recorded command wrote no files".into()));
    };
    let new = read_manifest(&path)?;
    let mut bad = Vec::new();
    for d in &old.outputs {
        match new.outputs.iter().find(|n| n.path == d.path) {
            Some(n) if n.sha256 == d.sha256 => println!("identical {}", d.path.display()),
            _ => {
                println!("DIFFERS   {}", d.path.display());
                bad.push(d.path.display().to_string());
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Analysis(format!("reproduced outputs differ: {}", bad.join(", "))))
    }
}
