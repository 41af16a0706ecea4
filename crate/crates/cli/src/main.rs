mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_config, prepare, ConfigError, Prepared};
use gdr_core::diagnostics::{momenta, quotient_i, quotient_ii, MomentaSample, QuotientSeries};
use gdr_core::dgrad::{DissipationConfig, ForceScheme, ForceVariant};
use gdr_core::integrator::{integrate, Trajectory};
use gdr_core::linalg::Vector;
use gdr_core::model::SystemModel;

#[derive(Parser)]
#[command(name = "gdr", version, about = "Conservative/dissipative time integration")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one initial-value problem and write the time series.
    Run(CommonArgs),
    /// Run the h, h/2, h/4 study and write the precision-quotient series.
    Quotient(CommonArgs),
    /// Run the same problem under all applicable force variants and
    /// tabulate drift and cost.
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; overrides the config's `output` field.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for randomized test-system generation (reserved).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, which) = match &cli.cmd {
        Cmd::Run(a) => (a, "run"),
        Cmd::Quotient(a) => (a, "quotient"),
        Cmd::Compare(a) => (a, "compare"),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let prepared = match parse_config(&text).and_then(|c| {
        if let Some(cmd) = &c.command {
            if cmd != which {
                eprintln!("note: config says command = {cmd:?}; the {which} subcommand takes precedence");
            }
        }
        let mut p = prepare(&c)?;
        if let Some(out) = &args.output {
            p.output = Some(out.display().to_string());
        }
        Ok(p)
    }) {
        Ok(p) => p,
        Err(e @ (ConfigError::Parse(_) | ConfigError::Invalid(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match which {
        "run" => cmd_run(&prepared),
        "quotient" => cmd_quotient(&prepared),
        _ => cmd_compare(&prepared),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &str, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("cannot write {path}: {e}"))
}

fn momenta_drift(a: &MomentaSample, b: &MomentaSample) -> Option<(f64, f64)> {
    let dl = match (a.linear, b.linear) {
        (Some(x), Some(y)) => {
            ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
        }
        _ => return None,
    };
    let (x, y) = (a.angular?, b.angular?);
    let dj = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
    Some((dl, dj))
}

struct RunStats {
    final_sample: MomentaSample,
    max_energy_drift: f64,
    max_linear_drift: Option<f64>,
    max_angular_drift: Option<f64>,
    mean_iters: f64,
    fallback_steps: usize,
}

/// Drift maxima are taken after the load has ended (from t = 0 when there
/// is no load), mirroring the stationary-value reporting of free-flight
/// experiments.
fn run_stats(sys: &dyn SystemModel, traj: &Trajectory, load_end: f64) -> RunStats {
    let reference_idx = traj
        .records
        .iter()
        .position(|r| r.state.t >= load_end)
        .unwrap_or(0);
    let reference = momenta(sys, &traj.records[reference_idx].state);
    let mut max_energy_drift: f64 = 0.0;
    let mut max_l: Option<f64> = reference.linear.map(|_| 0.0);
    let mut max_j: Option<f64> = reference.angular.map(|_| 0.0);
    for rec in &traj.records[reference_idx..] {
        let sample = momenta(sys, &rec.state);
        max_energy_drift = max_energy_drift
            .max((sample.energy - reference.energy).abs() / reference.energy.abs().max(1e-300));
        if let Some((dl, dj)) = momenta_drift(&sample, &reference) {
            max_l = max_l.map(|m| m.max(dl));
            max_j = max_j.map(|m| m.max(dj));
        }
    }
    let steps = traj.records.len() - 1;
    let total_iters: usize = traj.records.iter().map(|r| r.iters).sum();
    RunStats {
        final_sample: momenta(sys, &traj.final_state().clone()),
        max_energy_drift,
        max_linear_drift: max_l,
        max_angular_drift: max_j,
        mean_iters: if steps == 0 {
            0.0
        } else {
            total_iters as f64 / steps as f64
        },
        fallback_steps: traj.records.iter().filter(|r| r.degenerate_fallback).count(),
    }
}

fn trajectory_csv(sys: &dyn SystemModel, traj: &Trajectory) -> String {
    let n = sys.dim();
    let mut header = String::from("t");
    for i in 0..n {
        write!(header, ",q{i}").unwrap();
    }
    for i in 0..n {
        write!(header, ",s{i}").unwrap();
    }
    header.push_str(",T,V,E,l_x,l_y,l_z,j_x,j_y,j_z,diss_f,diss_s,newton_iters\n");
    let mut out = header;
    for rec in &traj.records {
        let sample = momenta(sys, &rec.state);
        let mut row = fmt17(rec.state.t);
        for i in 0..n {
            write!(row, ",{}", fmt17(rec.state.q[i])).unwrap();
        }
        for i in 0..n {
            write!(row, ",{}", fmt17(rec.state.s[i])).unwrap();
        }
        write!(
            row,
            ",{},{},{}",
            fmt17(rec.kinetic),
            fmt17(rec.potential),
            fmt17(rec.energy)
        )
        .unwrap();
        match (sample.linear, sample.angular) {
            (Some(l), Some(j)) => {
                for v in l.iter().chain(j.iter()) {
                    write!(row, ",{}", fmt17(*v)).unwrap();
                }
            }
            _ => row.push_str(",,,,,,"),
        }
        write!(
            row,
            ",{},{},{}\n",
            fmt17(rec.diss_f),
            fmt17(rec.diss_s),
            rec.iters
        )
        .unwrap();
        out.push_str(&row);
    }
    out
}

fn stats_json(stats: &RunStats) -> serde_json::Value {
    serde_json::json!({
        "final": {
            "t": stats.final_sample.t,
            "kinetic": stats.final_sample.kinetic,
            "potential": stats.final_sample.potential,
            "energy": stats.final_sample.energy,
            "linear_momentum": stats.final_sample.linear,
            "angular_momentum": stats.final_sample.angular,
        },
        "max_relative_energy_drift": stats.max_energy_drift,
        "max_linear_momentum_drift": stats.max_linear_drift,
        "max_angular_momentum_drift": stats.max_angular_drift,
        "mean_newton_iterations": stats.mean_iters,
        "degenerate_fallback_steps": stats.fallback_steps,
    })
}

fn print_stats(label: &str, stats: &RunStats) {
    println!("{label}: stationary values after load removal");
    println!("  final t            {:.6}", stats.final_sample.t);
    println!("  final E            {:.12e}", stats.final_sample.energy);
    println!(
        "  max |ΔE|/|E|       {:.3e}",
        stats.max_energy_drift
    );
    if let (Some(l), Some(j)) = (stats.max_linear_drift, stats.max_angular_drift) {
        println!("  max ‖Δl‖           {l:.3e}");
        println!("  max ‖Δj‖           {j:.3e}");
    }
    println!("  mean Newton iters  {:.2}", stats.mean_iters);
    if stats.fallback_steps > 0 {
        println!("  fallback steps     {}", stats.fallback_steps);
    }
}

fn cmd_run(p: &Prepared) -> Result<(), String> {
    let sys = p.system.as_model();
    let traj = integrate(sys, &p.scheme, &p.solver, &p.initial, p.initial.t + p.duration)
        .map_err(|e| e.to_string())?;
    let out = p.output.clone().unwrap_or_else(|| "gdr_run.csv".into());
    write_file(&out, &trajectory_csv(sys, &traj))?;
    let stats = run_stats(sys, &traj, p.load_end);
    write_file(
        &format!("{out}.summary.json"),
        &format!("{:#}\n", stats_json(&stats)),
    )?;
    print_stats("run", &stats);
    println!("wrote {out}");
    Ok(())
}

fn quotient_csv(q2: &QuotientSeries, q1: Option<&QuotientSeries>) -> String {
    let mut out = String::from("t,q_ii,log2_q_ii,masked_ii");
    if q1.is_some() {
        out.push_str(",q_i,log2_q_i,masked_i");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for (k, &t) in q2.times.iter().enumerate() {
        write!(
            out,
            "{},{},{},{}",
            fmt17(t),
            opt(q2.q[k]),
            opt(q2.log2_q[k]),
            q2.masked[k]
        )
        .unwrap();
        if let Some(q1) = q1 {
            write!(out, ",{},{},{}", opt(q1.q[k]), opt(q1.log2_q[k]), q1.masked[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn cmd_quotient(p: &Prepared) -> Result<(), String> {
    let sys = p.system.as_model();
    let h = p.solver.dt;
    let t_end = p.initial.t + p.duration;
    let steps = (p.duration / h).round() as usize;
    if steps == 0 {
        return Err("quotient needs a nonzero duration".into());
    }
    // at most ~50 samples, on the coarse grid
    let stride = (steps / 50).max(1);
    let samples: Vec<f64> = (1..=steps / stride)
        .map(|k| p.initial.t + (k * stride) as f64 * h)
        .collect();

    let run_at = |hk: f64| -> Result<Vec<(f64, Vector)>, String> {
        let scheme = ForceScheme {
            variant: p.scheme.variant,
            dissipation: DissipationConfig::new(
                p.scheme.dissipation.chi_f,
                p.scheme.dissipation.chi_s,
                p.scheme.dissipation.matrix.clone(),
                hk,
            ),
        };
        let mut solver = p.solver.clone();
        solver.dt = hk;
        Ok(integrate(sys, &scheme, &solver, &p.initial, t_end)
            .map_err(|e| e.to_string())?
            .stacked_states())
    };

    // the three resolution runs are independent
    let (r1, (r2, r4)) = std::thread::scope(|scope| {
        let h2 = scope.spawn(|| run_at(0.5 * h));
        let h4 = scope.spawn(|| run_at(0.25 * h));
        let r1 = run_at(h);
        (r1, (h2.join().unwrap(), h4.join().unwrap()))
    });
    let (r1, r2, r4) = (r1?, r2?, r4?);
    let pick = move |hk: f64| {
        if hk == h {
            r1.clone()
        } else if hk == 0.5 * h {
            r2.clone()
        } else {
            r4.clone()
        }
    };
    let q2 = quotient_ii(&pick, h, &samples).map_err(|e| e.to_string())?;

    let q1 = match p.system.exact_linear() {
        Some(lin) => {
            let exact = |t: f64| lin.analytic_state(&p.initial, t - p.initial.t).stacked();
            Some(quotient_i(exact, &pick, h, &samples).map_err(|e| e.to_string())?)
        }
        None => None,
    };

    let out = p.output.clone().unwrap_or_else(|| "gdr_quotient.csv".into());
    write_file(&out, &quotient_csv(&q2, q1.as_ref()))?;
    let masked = q2.masked.iter().filter(|&&m| m).count();
    let summary = serde_json::json!({
        "h": h,
        "samples": q2.times.len(),
        "masked_samples": masked,
        "median_log2_q_ii": q2.median_log2(),
        "median_log2_q_i": q1.as_ref().and_then(|s| s.median_log2()),
    });
    write_file(&format!("{out}.summary.json"), &format!("{summary:#}\n"))?;
    println!("quotient study at h = {h:e} ({} samples, {masked} masked)", q2.times.len());
    if let Some(m) = q2.median_log2() {
        println!("  median log2 Q_II  {m:.3}");
    }
    if let Some(m) = q1.as_ref().and_then(|s| s.median_log2()) {
        println!("  median log2 Q_I   {m:.3}");
    }
    println!("wrote {out}");
    Ok(())
}

fn cmd_compare(p: &Prepared) -> Result<(), String> {
    let sys = p.system.as_model();
    let mut variants = vec![
        ("midpoint", ForceVariant::Midpoint),
        ("average", ForceVariant::Average),
        ("gonzalez", ForceVariant::Gonzalez),
        ("new_conservative", ForceVariant::NewConservative),
    ];
    if sys.symmetry().is_some() {
        variants.push(("g_equivariant", ForceVariant::GEquivariant));
    }
    let mut csv = String::from(
        "variant,max_relative_energy_drift,max_linear_momentum_drift,max_angular_momentum_drift,mean_newton_iters\n",
    );
    println!(
        "{:<18} {:>14} {:>14} {:>14} {:>8}",
        "variant", "max|ΔE|/|E|", "max‖Δl‖", "max‖Δj‖", "iters"
    );
    for (name, variant) in variants {
        let scheme = ForceScheme {
            variant,
            dissipation: p.scheme.dissipation.clone(),
        };
        let traj = integrate(sys, &scheme, &p.solver, &p.initial, p.initial.t + p.duration)
            .map_err(|e| format!("{name}: {e}"))?;
        let stats = run_stats(sys, &traj, p.load_end);
        let fmt_opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        writeln!(
            csv,
            "{name},{},{},{},{}",
            fmt17(stats.max_energy_drift),
            fmt_opt(stats.max_linear_drift),
            fmt_opt(stats.max_angular_drift),
            stats.mean_iters
        )
        .unwrap();
        println!(
            "{:<18} {:>14.3e} {:>14} {:>14} {:>8.2}",
            name,
            stats.max_energy_drift,
            stats
                .max_linear_drift
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "-".into()),
            stats
                .max_angular_drift
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "-".into()),
            stats.mean_iters
        );
    }
    let out = p.output.clone().unwrap_or_else(|| "gdr_compare.csv".into());
    write_file(&out, &csv)?;
    println!("wrote {out}");
    Ok(())
}
