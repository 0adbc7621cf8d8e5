//! One function per subcommand; each writes its artifacts and a manifest.

use std::fmt::Write as _;

use anyhow::Result;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use nsf_layers::characteristic::eigen_frame;
use nsf_layers::composer::OrderLog;
use nsf_layers::harness::RateFit;
use nsf_layers::io::{fmt_f64, snapshot_csv, study_csv, write_block};
use nsf_layers::model::{assemble_matrices, eval_background};

use crate::config::RunConfig;
use crate::manifest::{ArtifactWriter, RunManifest};
use crate::pipeline::{run_build, run_converge, run_reference, OrderStudy, StageRecord};
use crate::svg::study_svg;
use crate::verify::{run_verify, VerifyReport};

/// What a subcommand produced and whether every gate it checks passed.
pub struct Outcome {
    pub passed: bool,
    pub manifest: RunManifest,
}

fn rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    [0, 1, 2, 3].map(|i| [0, 1, 2, 3].map(|j| m[(i, j)]))
}

#[derive(Serialize)]
struct MatrixDump {
    epsilon: f64,
    x2: f64,
    alpha: f64,
    eigenvalues: [f64; 4],
    a0: [[f64; 4]; 4],
    a1: [[f64; 4]; 4],
    a2: [[f64; 4]; 4],
    a1m: [[f64; 4]; 4],
    a1r: [[f64; 4]; 4],
    i1: [[f64; 4]; 4],
    i2: [[f64; 4]; 4],
    k11: [[f64; 4]; 4],
    k12: [[f64; 4]; 4],
    k22: [[f64; 4]; 4],
    q: [[f64; 4]; 4],
    q_a1m_qt: [[f64; 4]; 4],
}

/// Coefficient matrices and the wall frame at `(0, x2)` for each `x2` node of
/// a coarse sampling, at `t = 0` and the first configured `ε`.
pub fn matrices(cfg: &RunConfig, mut out: ArtifactWriter) -> Result<Outcome> {
    let bg = cfg.background_state()?;
    let eps = cfg.epsilons[0];
    let s = cfg.scaling_for(eps)?;
    let mut dumps = Vec::new();
    for k in 0..4 {
        let x2 = k as f64 * cfg.grid.x2_len / 4.0;
        let alpha = bg.alpha(x2, 0.0)?;
        let m = assemble_matrices(&eval_background(&bg, 0.0, x2, 0.0)?, alpha, &s);
        let [k11, k12, k22] = bg.jets(0.0, x2, 0.0)?.viscous_blocks(&s).map(|b| b.value());
        let f = eigen_frame(alpha);
        dumps.push(MatrixDump {
            epsilon: eps,
            x2,
            alpha,
            eigenvalues: f.eigenvalues,
            a0: rows(&m.a0),
            a1: rows(&m.a1),
            a2: rows(&m.a2),
            a1m: rows(&m.a1m),
            a1r: rows(&m.a1r),
            i1: rows(&m.i1),
            i2: rows(&m.i2),
            k11: rows(&k11),
            k12: rows(&k12),
            k22: rows(&k22),
            q: rows(&f.q),
            q_a1m_qt: rows(&(f.q * m.a1m * f.q.transpose())),
        });
    }
    out.write_json("matrices.json", &dumps)?;
    let manifest = out.finish("matrices", cfg, Vec::new())?;
    Ok(Outcome { passed: true, manifest })
}

/// Wall checks of one order, without timings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildCheck {
    pub order: usize,
    pub b0_outgoing: f64,
    pub initial_layer: f64,
    pub coupling: f64,
    pub acoustic_bc: f64,
    pub tail: f64,
    pub passed: bool,
}

pub fn build_checks(log: &[OrderLog], bc_tol: f64) -> Vec<BuildCheck> {
    log.iter()
        .map(|l| {
            let coupling = l.coupling_b0.max(l.coupling_b1).max(l.coupling_ii);
            BuildCheck {
                order: l.order,
                b0_outgoing: l.b0_outgoing,
                initial_layer: l.initial_layer,
                coupling,
                acoustic_bc: l.acoustic_bc,
                tail: l.tail,
                passed: l.b0_outgoing == 0.0 && l.initial_layer == 0.0 && coupling <= 10.0 * bc_tol,
            }
        })
        .collect()
}

/// Builds the expansion and stores the inner and layer terms at the snapshot
/// levels as binary blocks.
pub fn build(cfg: &RunConfig, mut out: ArtifactWriter) -> Result<Outcome> {
    let b = run_build(cfg)?;
    let exp = &b.expansion;
    let checks = build_checks(&exp.log, cfg.tol.bc_tol);
    out.write_json("build_checks.json", &checks)?;
    out.write_json("build_log.json", &exp.log)?;
    let per = exp.time.levels / cfg.time.intervals;
    let dt = per as f64 * exp.time.dt_layer();
    for (i, (inner, layer)) in exp.inner.iter().zip(&exp.layer).enumerate() {
        let mut buf = Vec::new();
        write_block(&mut buf, dt, &inner.snapshots)?;
        out.write(&format!("inner_order{i}.nsfl"), &buf)?;
        let levels: Vec<_> = exp.snapshot_levels.iter().map(|&l| layer.levels[l].clone()).collect();
        let mut buf = Vec::new();
        write_block(&mut buf, dt, &levels)?;
        out.write(&format!("layer_order{i}.nsfl"), &buf)?;
    }
    let passed = checks.iter().all(|c| c.passed);
    let manifest = out.finish("build", cfg, vec![b.stage])?;
    Ok(Outcome { passed, manifest })
}

fn eps_tag(e: f64) -> String {
    format!("{e}").replace('.', "p")
}

/// Reference solves at every configured `ε`: all snapshots as a binary block
/// and the final one as CSV.
pub fn reference(cfg: &RunConfig, mut out: ArtifactWriter) -> Result<Outcome> {
    let mut stages = Vec::new();
    for &e in &cfg.epsilons {
        let r = run_reference(cfg, e)?;
        let mut buf = Vec::new();
        write_block(&mut buf, r.solution.dt, &r.solution.snapshots)?;
        out.write(&format!("reference_eps{}.nsfl", eps_tag(e)), &buf)?;
        let last = r.solution.snapshots.last().expect("final snapshot");
        out.write(&format!("reference_eps{}_final.csv", eps_tag(e)), snapshot_csv(&r.grid, last)?.as_bytes())?;
        stages.push(r.stage);
    }
    let manifest = out.finish("reference", cfg, stages)?;
    Ok(Outcome { passed: true, manifest })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSummary {
    pub config_hash: String,
    pub studies: Vec<OrderStudy>,
    pub build: Vec<BuildCheck>,
    pub passed: bool,
}

pub fn energy_csv(epsilons: &[f64], functional: &[f64], fit: &RateFit) -> String {
    let mut s = String::from("epsilon,energy_functional\n");
    for (e, f) in epsilons.iter().zip(functional) {
        let _ = writeln!(s, "{},{}", fmt_f64(*e), fmt_f64(*f));
    }
    let _ = writeln!(s, "slope,{}", fmt_f64(fit.slope));
    s
}

/// Full study: CSV, energy CSV and SVG per order, plus a JSON summary.
pub fn converge(cfg: &RunConfig, mut out: ArtifactWriter) -> Result<Outcome> {
    let run = run_converge(cfg)?;
    let build = build_checks(&run.build.expansion.log, cfg.tol.bc_tol);
    for s in &run.studies {
        let n = s.study.order;
        out.write(&format!("study_N{n}.csv"), study_csv(&s.study).as_bytes())?;
        out.write(
            &format!("energy_N{n}.csv"),
            energy_csv(&s.study.epsilons, &s.energy_functional, &s.energy_fit).as_bytes(),
        )?;
        out.write(&format!("study_N{n}.svg"), study_svg(&s.study).as_bytes())?;
    }
    let passed = build.iter().all(|c| c.passed)
        && run
            .studies
            .iter()
            .all(|s| s.rate_passes.iter().chain(&s.monotone).all(|&p| p));
    let summary = ConvergeSummary {
        config_hash: cfg.hash(),
        studies: run.studies,
        build,
        passed,
    };
    out.write_json("summary.json", &summary)?;
    let mut stages = vec![run.build.stage];
    stages.extend(run.per_epsilon.into_iter().flat_map(|r| r.stages));
    let manifest = out.finish("converge", cfg, stages)?;
    Ok(Outcome { passed, manifest })
}

pub fn verify(cfg: &RunConfig, mut out: ArtifactWriter) -> Result<(Outcome, VerifyReport)> {
    let report = run_verify(cfg);
    out.write_json("verify.json", &report)?;
    let stages = report
        .checks
        .iter()
        .map(|c| StageRecord {
            name: c.name.clone(),
            seconds: c.seconds,
            residual: if c.passed { 0.0 } else { 1.0 },
        })
        .collect();
    let manifest = out.finish("verify", cfg, stages)?;
    Ok((
        Outcome {
            passed: report.all_passed(),
            manifest,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_tags_are_file_safe() {
        assert_eq!(eps_tag(0.025), "0p025");
        assert_eq!(eps_tag(0.2), "0p2");
    }

    #[test]
    fn build_check_gate() {
        let mut l = OrderLog {
            coupling_ii: 5e-10,
            ..Default::default()
        };
        assert!(build_checks(std::slice::from_ref(&l), 1e-10)[0].passed);
        l.coupling_ii = 2e-9;
        assert!(!build_checks(std::slice::from_ref(&l), 1e-10)[0].passed);
        l.coupling_ii = 0.0;
        l.initial_layer = 1e-300;
        assert!(!build_checks(&[l], 1e-10)[0].passed);
    }

    #[test]
    fn energy_csv_layout() {
        let fit = RateFit {
            slope: 3.0,
            intercept: 0.0,
            residual: 0.0,
        };
        let s = energy_csv(&[0.2, 0.1], &[8e-3, 1e-3], &fit);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "epsilon,energy_functional");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("slope,3.0000000000000000e0"));
    }
}
