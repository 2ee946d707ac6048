//! Runs a configured experiment and writes its files plus a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use super::config::{Experiment, RunConfig};
use super::emit::{
    gap_map_table, loop_sweep_table, ratio_sweep_table, timeseries_table, write_csv, write_json,
    write_table_json, Table,
};
use crate::averaging::{
    decompose, mc_orientation_average, CVec3, MicroscopicParams, ISOTROPIC_KAPPA,
};
use crate::dynamics::{
    loop_time_sweep, run_encirclement, Direction, EncircleOptions, EncirclementPath, InitialState,
    Tolerances,
};
use crate::ep::{
    closed_form_eps, gap_map, geometric_ladder, ratio_sweep, refine_ep, response_scaling_at,
    EpPoint, GridAxis, MapAxis,
};
use crate::model::{EffectiveParams, Handedness};
use crate::{Error, Result};

pub const TOOL_NAME: &str = "chiral-ep";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            kind: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    output_format: &'static str,
    output_dir: String,
    parameters: &'a BTreeMap<String, String>,
    /// The resolved configuration in the input format.
    resolved_config: String,
    outputs: Vec<String>,
    status: &'static str,
    error: Option<ErrorRecord>,
}

/// What a dispatch produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchReport {
    pub exit_code: i32,
    /// File names written into the output directory, manifest last.
    pub outputs: Vec<String>,
    pub error: Option<ErrorRecord>,
}

struct Emitter<'a> {
    dir: &'a Path,
    cfg: &'a RunConfig,
    written: Vec<String>,
}

impl Emitter<'_> {
    fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        if self.cfg.output_format.csv() {
            let name = format!("{stem}.csv");
            write_csv(&self.dir.join(&name), table)?;
            self.written.push(name);
        }
        if self.cfg.output_format.json() {
            let name = format!("{stem}.json");
            write_table_json(&self.dir.join(&name), table)?;
            self.written.push(name);
        }
        Ok(())
    }

    fn record<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Run `cfg` and write its outputs and `manifest.json` into
/// `cfg.output_dir`. Experiment errors are recorded in the manifest and
/// mapped to exit status 2 (configuration) or 3 (numerical).
pub fn dispatch(cfg: &RunConfig) -> DispatchReport {
    let dir = cfg.output_dir.as_path();
    if let Err(source) = fs::create_dir_all(dir) {
        let err = Error::Io {
            path: dir.to_path_buf(),
            source,
        };
        return DispatchReport {
            exit_code: err.exit_code(),
            outputs: Vec::new(),
            error: Some((&err).into()),
        };
    }
    let mut em = Emitter {
        dir,
        cfg,
        written: Vec::new(),
    };
    let outcome = run(cfg, &mut em);
    let error = outcome.as_ref().err().map(ErrorRecord::from);
    let mut outputs = em.written;
    let manifest = Manifest {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        experiment: cfg.experiment.as_str(),
        seed: cfg.seed,
        output_format: cfg.output_format.as_str(),
        output_dir: dir.display().to_string(),
        parameters: &cfg.parameters,
        resolved_config: cfg.serialize(),
        outputs: outputs.clone(),
        status: if error.is_none() { "ok" } else { "error" },
        error: error.clone(),
    };
    let mut exit_code = error.as_ref().map_or(0, |e| e.exit_code);
    let mut error = error;
    match write_json(&dir.join("manifest.json"), &manifest) {
        Ok(()) => outputs.push("manifest.json".into()),
        Err(e) => {
            if error.is_none() {
                exit_code = e.exit_code();
                error = Some((&e).into());
            }
        }
    }
    DispatchReport {
        exit_code,
        outputs,
        error,
    }
}

fn run(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    match cfg.experiment {
        Experiment::EpLocate => ep_locate(cfg, em),
        Experiment::RatioSweep => {
            let ratios = cfg.floats("ratios")?.unwrap_or_default();
            let table = ratio_sweep(cfg.float("gamma1")?, &ratios)?;
            em.table("ratio_sweep", &ratio_sweep_table(&table))
        }
        Experiment::EigengapMap => {
            let base = EffectiveParams::new(
                cfg.float("gamma1")?,
                cfg.float("gamma2")?,
                cfg.float("delta")?,
                cfg.float("omega12")?,
            );
            let x = GridAxis::new(
                cfg.parsed::<MapAxis>("x_axis")?,
                cfg.float("x_min")?,
                cfg.float("x_max")?,
                cfg.count("x_count")?,
            );
            let y = GridAxis::new(
                cfg.parsed::<MapAxis>("y_axis")?,
                cfg.float("y_min")?,
                cfg.float("y_max")?,
                cfg.count("y_count")?,
            );
            let map = gap_map(&base, x, y)?;
            em.table("eigengap_map", &gap_map_table(&map))
        }
        Experiment::Encircle => encircle(cfg, em),
        Experiment::LoopSweep => loop_sweep(cfg, em),
        Experiment::Average => average(cfg, em),
        Experiment::ScalingProbe => scaling(cfg, em),
    }
}

#[derive(Serialize)]
struct EpRecord {
    enantiomer: Handedness,
    branch: u8,
    delta: f64,
    omega12: f64,
    residual: f64,
    closed_form_delta: f64,
    closed_form_omega12: f64,
    refined: bool,
}

#[derive(Serialize)]
struct EpLocateOutput {
    gamma1: f64,
    gamma2: f64,
    ratio: f64,
    records: Vec<EpRecord>,
}

fn ep_locate(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    let g1 = cfg.float("gamma1")?;
    let g2 = match cfg.float_opt("gamma2")? {
        Some(g2) => g2,
        None => cfg.float("ratio")? * g1,
    };
    let refine = cfg.flag("refine")?;
    let mut records = Vec::with_capacity(4);
    for hand in Handedness::BOTH {
        for ep in closed_form_eps(g1, g2, hand)? {
            let point = if refine {
                refine_ep(&ep, g1, g2, hand, None)?
            } else {
                ep
            };
            records.push(EpRecord {
                enantiomer: hand,
                branch: ep.branch_index,
                delta: point.delta,
                omega12: point.omega12,
                residual: point.residual,
                closed_form_delta: ep.delta,
                closed_form_omega12: ep.omega12,
                refined: refine,
            });
        }
    }
    let ratio = if g1 > 0.0 { g2 / g1 } else { f64::NAN };
    em.record(
        "ep_locate.json",
        &EpLocateOutput {
            gamma1: g1,
            gamma2: g2,
            ratio,
            records,
        },
    )
}

/// Center and radius of the loop: explicit keys, or the refined Right EP of
/// `ep_branch` with ρ = |Ω₁₂ᴱᴾ|.
fn loop_geometry(cfg: &RunConfig, g1: f64, g2: f64) -> Result<(f64, f64, f64)> {
    let (cd, co) = match (
        cfg.float_opt("center_delta")?,
        cfg.float_opt("center_omega")?,
    ) {
        (Some(d), Some(o)) => (d, o),
        _ => {
            let ep = refined_ep(cfg, g1, g2, Handedness::Right)?;
            (ep.delta, ep.omega12)
        }
    };
    let radius = match cfg.float_opt("radius")? {
        Some(r) => r,
        None => co.abs(),
    };
    if !(radius > 0.0) {
        return Err(Error::config(
            None,
            format!("loop radius must be positive, got {radius}"),
        ));
    }
    Ok((cd, co, radius))
}

fn refined_ep(cfg: &RunConfig, g1: f64, g2: f64, hand: Handedness) -> Result<EpPoint> {
    let branch = cfg.count("ep_branch")?;
    if branch > 1 {
        return Err(Error::config(
            None,
            format!("ep_branch must be 0 or 1, got {branch}"),
        ));
    }
    let ep = closed_form_eps(g1, g2, hand)?[branch];
    refine_ep(&ep, g1, g2, hand, None)
}

fn encircle_options(cfg: &RunConfig) -> Result<EncircleOptions> {
    Ok(EncircleOptions {
        tolerances: Tolerances {
            rel_tol: cfg.float("rel_tol")?,
            abs_tol: cfg.float("abs_tol")?,
        },
        samples: cfg.count("samples")?,
        branch_samples: cfg.count("branch_samples")?,
    })
}

#[derive(Serialize)]
struct LoopSetup {
    gamma1: f64,
    gamma2: f64,
    center_delta: f64,
    center_omega: f64,
    radius: f64,
    start_phase: f64,
    initial: &'static str,
    rel_tol: f64,
    abs_tol: f64,
}

#[derive(Serialize)]
struct EncircleOutput {
    setup: LoopSetup,
    enantiomer: Handedness,
    direction: Direction,
    loop_time: f64,
    final_pop_plus_norm: f64,
    final_pop_minus_norm: f64,
    final_pop_plus_raw: f64,
    final_pop_minus_raw: f64,
    eigenvalue_swap: bool,
    dominant_final_state: &'static str,
    branch_cut_crossings: Vec<f64>,
    nonadiabatic_transitions: Vec<f64>,
    accepted_steps: usize,
    rejected_steps: usize,
}

fn encircle(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    let (g1, g2) = (cfg.float("gamma1")?, cfg.float("gamma2")?);
    let hand: Handedness = cfg.parsed("enantiomer")?;
    let (cd, co, radius) = loop_geometry(cfg, g1, g2)?;
    let direction: Direction = cfg.parsed("direction")?;
    let loop_time = cfg.float("loop_time")?;
    let start_phase = cfg.float("start_phase")?;
    let initial: InitialState = cfg.parsed("initial")?;
    let opts = encircle_options(cfg)?;
    let path =
        EncirclementPath::new(cd, co, radius, loop_time, direction).with_start_phase(start_phase);
    path.validate()?;
    let params = EffectiveParams::new(g1, g2, 0.0, 0.0).with_handedness(hand);
    let result = run_encirclement(&params, &path, initial, &opts)?;
    em.table("encircle_timeseries", &timeseries_table(&result.timeseries))?;
    let s = result.summary;
    em.record(
        "encircle_summary.json",
        &EncircleOutput {
            setup: LoopSetup {
                gamma1: g1,
                gamma2: g2,
                center_delta: cd,
                center_omega: co,
                radius,
                start_phase,
                initial: initial.name(),
                rel_tol: opts.tolerances.rel_tol,
                abs_tol: opts.tolerances.abs_tol,
            },
            enantiomer: hand,
            direction,
            loop_time,
            final_pop_plus_norm: s.final_pop_plus_norm,
            final_pop_minus_norm: s.final_pop_minus_norm,
            final_pop_plus_raw: s.final_pop_plus_raw,
            final_pop_minus_raw: s.final_pop_minus_raw,
            eigenvalue_swap: s.eigenvalue_swap,
            dominant_final_state: s.dominant_final_state.as_str(),
            branch_cut_crossings: result.branches.cut_crossings.clone(),
            nonadiabatic_transitions: result.nonadiabatic_transitions.clone(),
            accepted_steps: result.stats.accepted,
            rejected_steps: result.stats.rejected,
        },
    )
}

fn loop_sweep(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    let (g1, g2) = (cfg.float("gamma1")?, cfg.float("gamma2")?);
    let (cd, co, radius) = loop_geometry(cfg, g1, g2)?;
    let times = match cfg.floats("loop_times")? {
        Some(t) => t,
        None => {
            let (lo, hi, n) = (
                cfg.float("t_min")?,
                cfg.float("t_max")?,
                cfg.count("t_count")?,
            );
            if !(lo > 0.0 && hi >= lo && n >= 1) {
                return Err(Error::config(
                    None,
                    "need 0 < t_min <= t_max and t_count >= 1",
                ));
            }
            geometric_ladder(lo, hi, n)
        }
    };
    let initial: InitialState = cfg.parsed("initial")?;
    let opts = encircle_options(cfg)?;
    let template = EncirclementPath::new(cd, co, radius, 1.0, Direction::AsWritten)
        .with_start_phase(cfg.float("start_phase")?);
    let params = EffectiveParams::new(g1, g2, 0.0, 0.0);
    let rows = loop_time_sweep(&params, &template, &times, initial, &opts)?;
    em.table("loop_sweep", &loop_sweep_table(&rows))?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| r.status.as_str())
        .collect();
    if let Some(first) = failed.first() {
        return Err(Error::PartialFailure {
            failed: failed.len(),
            total: rows.len(),
            first: first.to_string(),
        });
    }
    Ok(())
}

fn cvec(cfg: &RunConfig, key: &str) -> Result<CVec3> {
    let v = cfg.floats(key)?.unwrap_or_default();
    match v.len() {
        3 => Ok([
            Complex64::new(v[0], 0.0),
            Complex64::new(v[1], 0.0),
            Complex64::new(v[2], 0.0),
        ]),
        6 => Ok([
            Complex64::new(v[0], v[1]),
            Complex64::new(v[2], v[3]),
            Complex64::new(v[4], v[5]),
        ]),
        n => Err(Error::config(
            None,
            format!("{key}: expected 3 or 6 numbers, got {n}"),
        )),
    }
}

#[derive(Serialize)]
struct AverageOutput {
    kappa: f64,
    chi_m: Complex64,
    h3: Complex64,
    phi_m: f64,
    phi_l: f64,
    analytic: f64,
    monte_carlo: f64,
    monte_carlo_std_error: f64,
    samples: usize,
    seed: u64,
    loop_closed: bool,
}

fn average(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    let (w1, w2) = (cfg.float("omega1")?, cfg.float("omega2")?);
    let micro = MicroscopicParams {
        d1e: cvec(cfg, "d1e")?,
        d2e: cvec(cfg, "d2e")?,
        d12: cvec(cfg, "d12")?,
        f1: cvec(cfg, "f1")?,
        f2: cvec(cfg, "f2")?,
        f3: cvec(cfg, "f3")?,
        omega1: w1,
        omega2: w2,
        omega3: cfg.float_opt("omega3")?.unwrap_or(w1 - w2),
        e1: cfg.float("e1")?,
        e2: cfg.float("e2")?,
    };
    micro.validate()?;
    let d = decompose(&micro);
    let mc = mc_orientation_average(&micro, cfg.count("samples")?, cfg.seed)?;
    em.record(
        "average.json",
        &AverageOutput {
            kappa: ISOTROPIC_KAPPA,
            chi_m: d.chi_m,
            h3: d.h3,
            phi_m: d.phi_m,
            phi_l: d.phi_l,
            analytic: d.averaged_value,
            monte_carlo: mc.estimate,
            monte_carlo_std_error: mc.std_error,
            samples: mc.samples,
            seed: cfg.seed,
            loop_closed: micro.loop_closed(),
        },
    )
}

#[derive(Serialize)]
struct ScalingOutput {
    gamma1: f64,
    gamma2: f64,
    enantiomer: Handedness,
    base_delta: f64,
    base_omega12: f64,
    direction: [f64; 2],
    exponent: f64,
    epsilons: Vec<f64>,
    gaps: Vec<f64>,
}

fn scaling(cfg: &RunConfig, em: &mut Emitter) -> Result<()> {
    let (g1, g2) = (cfg.float("gamma1")?, cfg.float("gamma2")?);
    let hand: Handedness = cfg.parsed("enantiomer")?;
    let (bd, bo) = match (cfg.float_opt("at_delta")?, cfg.float_opt("at_omega")?) {
        (Some(d), Some(o)) => (d, o),
        _ => {
            let ep = refined_ep(cfg, g1, g2, hand)?;
            (ep.delta, ep.omega12)
        }
    };
    let unit = if g1 + g2 > 0.0 { g1 + g2 } else { 1.0 };
    let (lo, hi, n) = (
        cfg.float("eps_min")?,
        cfg.float("eps_max")?,
        cfg.count("eps_count")?,
    );
    if !(lo > 0.0 && hi > lo && n >= 3) {
        return Err(Error::config(
            None,
            "need 0 < eps_min < eps_max and eps_count >= 3",
        ));
    }
    let eps = geometric_ladder(lo * unit, hi * unit, n);
    let direction = [cfg.float("direction_delta")?, cfg.float("direction_omega")?];
    let base = EffectiveParams::new(g1, g2, bd, bo).with_handedness(hand);
    let fit = response_scaling_at(&base, direction, &eps)?;
    em.record(
        "scaling.json",
        &ScalingOutput {
            gamma1: g1,
            gamma2: g2,
            enantiomer: hand,
            base_delta: bd,
            base_omega12: bo,
            direction,
            exponent: fit.exponent,
            epsilons: fit.epsilons,
            gaps: fit.gaps,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_config;

    fn run_doc(doc: &str) -> (tempfile::TempDir, DispatchReport) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(doc)
            .unwrap()
            .with_overrides(&[("output_dir", dir.path().to_str().unwrap())])
            .unwrap();
        let report = dispatch(&cfg);
        (dir, report)
    }

    #[test]
    fn ep_locate_writes_four_records() {
        let (dir, report) = run_doc("[ep-locate]\ngamma1 = 6.2e-3\nratio = 2.25\n");
        assert_eq!(report.exit_code, 0, "{:?}", report.error);
        assert_eq!(report.outputs, vec!["ep_locate.json", "manifest.json"]);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("ep_locate.json")).unwrap())
                .unwrap();
        let recs = v["records"].as_array().unwrap();
        assert_eq!(recs.len(), 4);
        let r0 = &recs[0];
        assert_eq!(r0["enantiomer"], "right");
        assert!((r0["delta"].as_f64().unwrap() - 9.3e-3).abs() < 1e-9);
        assert!((r0["omega12"].as_f64().unwrap() + 1.9375e-3).abs() < 1e-9);
        assert!((recs[2]["omega12"].as_f64().unwrap() - 1.9375e-3).abs() < 1e-9);
    }

    #[test]
    fn hermitian_limit_is_numerical_failure() {
        let (dir, report) = run_doc("[ep-locate]\ngamma1 = 0\ngamma2 = 0\n");
        assert_eq!(report.exit_code, 3);
        assert_eq!(report.error.as_ref().unwrap().kind, "hermitian_limit");
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(m["status"], "error");
        assert_eq!(m["error"]["kind"], "hermitian_limit");
        assert_eq!(m["tool"], TOOL_NAME);
    }

    #[test]
    fn map_output_format_json_only() {
        let doc = "[map]\ngamma1 = 1.5e-4\ngamma2 = 8.8e-5\nx_min = -2e-4\nx_max = 2e-4\ny_min = -5e-5\ny_max = 5e-5\nx_count = 5\ny_count = 3\noutput_format = json\n";
        let (dir, report) = run_doc(doc);
        assert_eq!(report.exit_code, 0);
        assert_eq!(report.outputs, vec!["eigengap_map.json", "manifest.json"]);
        let v: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join("eigengap_map.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(v.as_array().unwrap().len(), 15);
    }

    #[test]
    fn scaling_probe_at_ep() {
        let (dir, report) = run_doc("[scaling-probe]\ngamma1 = 1.5e-4\ngamma2 = 8.8e-5\n");
        assert_eq!(report.exit_code, 0, "{:?}", report.error);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("scaling.json")).unwrap())
                .unwrap();
        assert!((v["exponent"].as_f64().unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn average_writes_both_estimates() {
        let doc = "[average]\nd1e = 1,0,0\nd2e = 0,1,0\nd12 = 0,0,1\nf1 = 1,0,0\nf2 = 0,1,0\nf3 = 0,0,1\nomega1 = 3\nomega2 = 1\nsamples = 2000\nseed = 5\n";
        let (dir, report) = run_doc(doc);
        assert_eq!(report.exit_code, 0, "{:?}", report.error);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("average.json")).unwrap())
                .unwrap();
        assert!((v["analytic"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(v["seed"], 5);
    }

    #[test]
    fn resonance_violation_is_config_error() {
        let doc = "[average]\nd1e = 1,0,0\nd2e = 0,1,0\nd12 = 0,0,1\nf1 = 1,0,0\nf2 = 0,1,0\nf3 = 0,0,1\nomega1 = 3\nomega2 = 1\nomega3 = 1\n";
        let (_dir, report) = run_doc(doc);
        assert_eq!(report.exit_code, 2);
        assert_eq!(report.error.unwrap().kind, "resonance");
    }
}
