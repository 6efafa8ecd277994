use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cone::{self, MarginReport, RhsForm};
use crate::dilation::check_field_homogeneity;
use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::parallel::Exec;
use crate::reproduce;
use crate::simulation::{build_rhs, min_barrier, simulate, Feedback, PerturbationSpec, Signal, Trace};
use crate::synthesis::{full_pipeline, PipelineOptions};

use super::artifact::ControllerArtifact;
use super::config::{check_degree, read_config, ControllerKind, Problem};
use super::{CommonArgs, EXIT_OK, EXIT_VERIFY_FAILED};

const DEFAULT_OUT: &str = "homcone-out";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_problem(common: &CommonArgs, mu: Option<f64>) -> Result<(Problem, PathBuf)> {
    let mut cfg = read_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(count) = common.samples {
        cfg.sampling.count = count;
    }
    if let Some(mu) = mu {
        check_degree(mu, cfg.positive_degree)?;
        cfg.mu = mu;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let problem = Problem::from_config(cfg)?;
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok((problem, out))
}

fn load_controller(problem: &Problem, out: &Path, path: Option<&Path>) -> Result<ControllerArtifact> {
    let path = path.map_or_else(|| out.join("controller.toml"), Path::to_path_buf);
    let art = ControllerArtifact::load(&path)?;
    let plant = art.controller.plant();
    let same = plant.a().shape() == problem.plant.a().shape()
        && plant.b().shape() == problem.plant.b().shape()
        && (plant.a() - problem.plant.a()).amax() <= 1e-12
        && (plant.b() - problem.plant.b()).amax() <= 1e-12;
    if !same {
        return Err(Error::InvalidInput(format!(
            "controller {} was built for a different plant",
            path.display()
        )));
    }
    Ok(art)
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn margin_lines(out: &mut String, report: &MarginReport) {
    for c in &report.constraints {
        let witness = c.witness.as_ref().map_or("-".to_string(), fmt_vec);
        let _ = writeln!(
            out,
            "  {:<14} margin {:>12.4e}  samples {:>6}  {}  witness {}",
            c.label,
            c.margin,
            c.samples,
            if c.required { "required" } else { "reported" },
            witness
        );
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn cmd_synth(common: &CommonArgs, mu: Option<f64>) -> Result<i32> {
    let (problem, out) = load_problem(common, mu)?;
    let cfg = &problem.config;
    let opts = PipelineOptions {
        max_iters: cfg.max_iters,
        sampling: problem.sampling(),
        positive_degree: cfg.positive_degree,
    };
    let (ctrl, report) = full_pipeline(&problem.plant, &problem.cone, cfg.rho, cfg.mu, &opts)?;
    let mut s = String::new();
    let lin = &report.linear;
    let _ = writeln!(s, "linear gain: J = {:.6}, {} iterations, ell = {}", lin.cost, lin.iterations, fmt_vec(&lin.ell));
    let rows: Vec<String> = lin.k.row_iter().map(|r| fmt_vec(&r.transpose())).collect();
    let _ = writeln!(s, "  K = [{}]", rows.join(", "));
    let h = &report.homogenization;
    let _ = writeln!(s, "homogenization: residuals ({:.2e}, {:.2e})", h.residual.0, h.residual.1);
    let _ = writeln!(s, "degree range: tau = {}, mu in {}, chosen mu = {}", report.range.tau_min, report.range, cfg.mu);
    let m = &report.lmi.margins;
    let _ = writeln!(
        s,
        "weight: {:?}, decay {:.4e}, monotone {:.4e}, positive {:.4e}",
        report.lmi.source, m.decay, m.monotone, m.positive
    );
    let _ = writeln!(s, "invariance: {} (worst {:.4e})", verdict(report.invariance.pass), report.invariance.worst_margin());
    margin_lines(&mut s, &report.invariance);
    let _ = writeln!(s, "homogeneity: {} (margin {:.3e})", verdict(report.homogeneity.pass), report.homogeneity.margin);
    let _ = writeln!(
        s,
        "embedding: {} ({} samples, Metzler {})",
        verdict(report.embedding.pass),
        report.embedding.checked,
        report.embedding.metzler
    );
    let art = ControllerArtifact {
        controller: ctrl,
        range: report.range,
    };
    let path = out.join("controller.toml");
    art.save(&path)?;
    let _ = writeln!(s, "wrote {}", path.display());
    print!("{s}");
    let rpt = out.join("synth_report.txt");
    std::fs::write(&rpt, s).map_err(io_err(&rpt))?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(common: &CommonArgs, controller: Option<&Path>) -> Result<i32> {
    let (problem, out) = load_problem(common, None)?;
    let art = load_controller(&problem, &out, controller)?;
    let ctrl = &art.controller;
    let dil = ctrl.dilation();
    let opts = problem.sampling();
    let field = |x: &Vector| ctrl.closed_loop_field(x);
    let mut s = String::new();
    let mut all = true;

    let inv = cone::invariance_margin(field, dil, &problem.cone, RhsForm::Generator, &opts)?;
    all &= inv.pass;
    let _ = writeln!(s, "invariance: {}", verdict(inv.pass));
    margin_lines(&mut s, &inv);

    match problem.perturbation()? {
        PerturbationSpec::StateMultiplicative {
            channel,
            selector,
            exponent,
            signal,
        } => {
            let amplitude = match signal {
                Signal::Sine { amplitude, .. } => amplitude.abs(),
                _ => 1.0,
            };
            let q_max = problem.config.verify.iss_q_max * amplitude;
            let k = problem.config.verify.iss_q_points;
            let grid: Vec<Vector> = (0..k)
                .map(|j| {
                    let t = if k == 1 { 1.0 } else { -1.0 + 2.0 * j as f64 / (k - 1) as f64 };
                    Vector::from_element(1, q_max * t)
                })
                .collect();
            let pert_field = |x: &Vector, q: &Vector| -> Result<Vector> {
                Ok(ctrl.closed_loop_field(x)? + &channel * (q[0] * selector.dot(x)).abs().powf(exponent))
            };
            let iss = cone::iss_margin(pert_field, dil, &problem.cone, &grid, RhsForm::Generator, &opts)?
                .require_only(&problem.safe);
            all &= iss.pass;
            let _ = writeln!(s, "iss (|q| <= {q_max}): {}", verdict(iss.pass));
            margin_lines(&mut s, &iss);
        }
        _ => {
            let _ = writeln!(s, "iss: skipped (no state-multiplicative perturbation configured)");
        }
    }

    match problem.issf_offset() {
        Some(r) => {
            let issf = cone::issf_check(ctrl, &problem.cone, &r, &opts)?;
            all &= issf.pass();
            let _ = writeln!(
                s,
                "issf (r = {}, window {}): {}; static certificate {} {}",
                fmt_vec(&r),
                issf.window,
                verdict(issf.pass()),
                fmt_vec(&issf.static_certificate),
                verdict(issf.static_pass)
            );
            margin_lines(&mut s, &issf.sampled);
        }
        None => {
            let _ = writeln!(s, "issf: skipped (verify.issf_r not set)");
        }
    }

    let emb = cone::embedding_check(&problem.cone, dil, ctrl.g0(), &opts)?;
    all &= emb.pass;
    let _ = writeln!(
        s,
        "embedding: {} ({} samples, Metzler {}, counterexample {})",
        verdict(emb.pass),
        emb.checked,
        emb.metzler,
        emb.counterexample.as_ref().map_or("-".to_string(), fmt_vec)
    );

    let hom = check_field_homogeneity(field, dil, ctrl.mu(), opts.count.min(256), opts.seed, opts.exec)?;
    all &= hom.pass;
    let _ = writeln!(
        s,
        "homogeneity: {} (margin {:.3e} at {} s = {})",
        verdict(hom.pass),
        hom.margin,
        fmt_vec(&hom.worst_point),
        hom.worst_s
    );

    let lmi = ctrl.lmi_margins();
    all &= lmi.strict();
    let _ = writeln!(
        s,
        "weight: {} (decay {:.4e}, monotone {:.4e}, positive {:.4e})",
        verdict(lmi.strict()),
        lmi.decay,
        lmi.monotone,
        lmi.positive
    );
    let _ = writeln!(s, "overall: {}", verdict(all));
    print!("{s}");
    let rpt = out.join("verify_report.txt");
    std::fs::write(&rpt, s).map_err(io_err(&rpt))?;
    Ok(if all { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Removes the sign of zero so that clamped rows print as `0`.
fn cell(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

pub fn write_csv(path: &Path, trace: &Trace) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    let n = trace.states.first().map_or(0, |x| x.len());
    let m = trace.inputs.first().map_or(0, |u| u.len());
    let p = trace.barriers.first().map_or(0, |b| b.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend((1..=p).map(|i| format!("phi{i}")));
    header.push("homnorm".into());
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..trace.len() {
        let mut row = vec![cell(trace.times[k])];
        row.extend(trace.states[k].iter().map(|&v| cell(v)));
        row.extend(trace.inputs[k].iter().map(|&v| cell(v)));
        row.extend(trace.barriers[k].iter().map(|&v| cell(v)));
        row.push(cell(trace.hom_norms[k]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Matplotlib script plotting states, inputs and barriers from a trace CSV.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path, newline="") as f:
    rows = list(csv.DictReader(f))
cols = list(rows[0].keys())
t = [float(r["t"]) for r in rows]
groups = [("state", "x"), ("input", "u"), ("barrier", "phi")]
fig, axes = plt.subplots(len(groups) + 1, 1, sharex=True, figsize=(8, 10))
for ax, (title, prefix) in zip(axes, groups):
    for c in cols:
        if c.startswith(prefix) and c[len(prefix):].isdigit():
            ax.plot(t, [float(r[c]) for r in rows], label=c)
    ax.set_ylabel(title)
    ax.grid(True)
    ax.legend(loc="upper right")
axes[-1].semilogy(t, [max(float(r["homnorm"]), 1e-16) for r in rows])
axes[-1].set_ylabel("homogeneous norm")
axes[-1].set_xlabel("t")
axes[-1].grid(True)
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"#
    )
}

pub fn cmd_simulate(common: &CommonArgs, controller: Option<&Path>) -> Result<i32> {
    let (problem, out) = load_problem(common, None)?;
    let art = load_controller(&problem, &out, controller)?;
    let ctrl = art.controller;
    let x0 = problem.x0()?;
    let cfg = problem.sim_config()?;
    let feedback = match problem.config.sim.controller {
        ControllerKind::Homogeneous => Feedback::Homogeneous(ctrl.clone()),
        ControllerKind::Linear => Feedback::Linear(ctrl.k().clone()),
        ControllerKind::Mixed => Feedback::Mixed(ctrl.clone()),
    };
    let lp = build_rhs(&problem.plant, feedback, problem.perturbation()?)?;
    let trace = simulate(&lp, &problem.cone, ctrl.dilation(), &x0, &cfg, Exec::Parallel)?;
    let csv_path = out.join("trace.csv");
    write_csv(&csv_path, &trace)?;
    let script = out.join("plot_trace.py");
    std::fs::write(&script, plot_script("trace.csv")).map_err(io_err(&script))?;
    let mins = min_barrier(&trace);
    println!("rows: {}", trace.len());
    match trace.clamped_at {
        Some(t) => println!("origin reached at t = {t:.6}"),
        None => println!("origin not reached"),
    }
    println!("sup |x| = {:.6}", trace.sup_norm());
    for (label, v) in problem.cone.labels().iter().zip(mins.iter()) {
        println!("min {label} barrier = {v:.6e}");
    }
    println!("wrote {} and {}", csv_path.display(), script.display());
    Ok(EXIT_OK)
}

pub fn cmd_reproduce_paper(list: bool, seed: u64, samples: usize) -> Result<i32> {
    let criteria = reproduce::criteria();
    if list {
        for c in &criteria {
            println!("{:>2}  {}", c.id, c.title);
        }
        return Ok(EXIT_OK);
    }
    let mut all = true;
    for c in &criteria {
        let o = c.run();
        all &= o.pass;
        println!(
            "[{}] {:>2}  {}: {} ({:.2}s)",
            verdict(o.pass),
            c.id,
            c.title,
            o.detail,
            o.elapsed.as_secs_f64()
        );
    }
    println!("sampled diagnostics ({samples} samples, seed {seed}):");
    for line in reproduce::sampled_summary(samples, seed)? {
        println!("  {line}");
    }
    println!("overall: {}", verdict(all));
    Ok(if all { EXIT_OK } else { EXIT_VERIFY_FAILED })
}
