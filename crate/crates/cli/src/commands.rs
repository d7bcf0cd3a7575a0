use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use sdtw_core::{
    solve_barycenter, with_threads, AdamOptions, BarycenterProblem, CostMode, Init, Real, SdtwConfig, SeriesBatch,
    SoftDtw,
};

use crate::bench::{self, BenchConfigRow, BenchOptions};
use crate::format::{list_series_dir, read_manifest, read_series, write_series};
use crate::generate::{self, GenSpec};
use crate::gradcheck::{self, GradcheckOptions};
use crate::{
    BarycenterArgs, BenchArgs, Cli, Command, GenerateArgs, GradcheckArgs, InitArg, Precision, SdtwArgs,
    EXIT_CHECK_FAILED, EXIT_OK,
};

/// Runs a parsed command line, returning the process exit code.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<i32> {
    match cli.threads {
        Some(0) => bail!("--threads must be >= 1"),
        Some(t) => with_threads(t, || dispatch(cli, out))?,
        None => dispatch(cli, out),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Sdtw(a) => match cli.precision {
            Precision::F32 => cmd_sdtw::<f32>(a, out),
            Precision::F64 => cmd_sdtw::<f64>(a, out),
        },
        Command::Gradcheck(a) => cmd_gradcheck(a, cli, out),
        Command::Bench(a) => cmd_bench(a, cli, out),
        Command::Generate(a) => cmd_generate(a, cli, out),
        Command::Barycenter(a) => match cli.precision {
            Precision::F32 => cmd_barycenter::<f32>(a, out),
            Precision::F64 => cmd_barycenter::<f64>(a, out),
        },
    }
}

fn open_output(path: Option<&PathBuf>, out: &mut dyn Write, body: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("cannot write {}", p.display())),
        None => Ok(out.write_all(body)?),
    }
}

fn cmd_sdtw<T: Real>(a: &SdtwArgs, out: &mut dyn Write) -> Result<i32> {
    ensure!(
        !(a.normalized && a.grad.is_some()),
        "--grad cannot be combined with --normalized"
    );
    let paths = match (&a.manifest, &a.x, &a.y) {
        (Some(m), _, _) => read_manifest(m)?,
        (None, Some(x), Some(y)) => vec![(x.clone(), y.clone())],
        _ => bail!("give two series files or --manifest"),
    };
    let mut pairs = Vec::with_capacity(paths.len());
    for (k, (px, py)) in paths.iter().enumerate() {
        let (x, y) = (read_series(px)?, read_series(py)?);
        ensure!(
            x.feature_dim() == y.feature_dim(),
            "pair {k}: feature dims differ ({} in {}, {} in {})",
            x.feature_dim(),
            px.display(),
            y.feature_dim(),
            py.display()
        );
        ensure!(
            !a.normalized || x.len() == y.len(),
            "pair {k}: --normalized needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        );
        pairs.push((x.cast::<T>(), y.cast::<T>()));
    }

    let cfg = SdtwConfig::new(T::lit(a.algo.gamma))
        .with_bandwidth(a.algo.bandwidth)
        .with_cost_mode(a.algo.mode)
        .with_backward(a.algo.backward)
        .with_normalized(a.normalized);
    let engine = SoftDtw::new(cfg)?;
    if let Some(dir) = &a.grad {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }

    // Pairs with identical shapes run as one batch.
    let mut groups: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, (x, y)) in pairs.iter().enumerate() {
        groups.entry((x.len(), y.len(), x.feature_dim())).or_default().push(k);
    }
    let mut losses = vec![T::nan(); pairs.len()];
    for members in groups.values() {
        let x = SeriesBatch::stack(&members.iter().map(|&k| pairs[k].0.clone()).collect::<Vec<_>>())?;
        let y = SeriesBatch::stack(&members.iter().map(|&k| pairs[k].1.clone()).collect::<Vec<_>>())?;
        let batch_losses = if a.normalized {
            engine.normalized_loss(&x, &y)?
        } else if let Some(dir) = &a.grad {
            let (l, g) = engine.loss_and_grad(&x, &y)?;
            let (gx, gy) = (g.grad_x_series()?, g.grad_y_series()?);
            for (b, &k) in members.iter().enumerate() {
                write_series(&dir.join(format!("pair_{k}_grad_x.sdtw")), &gx, b)?;
                write_series(&dir.join(format!("pair_{k}_grad_y.sdtw")), &gy, b)?;
            }
            l
        } else {
            engine.loss(&x, &y)?
        };
        for (b, &k) in members.iter().enumerate() {
            losses[k] = batch_losses[b];
        }
    }

    let mut csv = String::from("pair_index,loss\n");
    for (k, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{k},{l:?}\n"));
    }
    open_output(a.output.as_ref(), out, csv.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: &GradcheckArgs, cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let opts = GradcheckOptions {
        sizes: a.sizes.clone(),
        gammas: a.gammas.clone(),
        dims: a.dims.clone(),
        modes: if a.mode.is_empty() {
            vec![CostMode::Unfused, CostMode::Fused]
        } else {
            a.mode.clone()
        },
        backward: a.backward,
        precision: cli.precision,
        seed: cli.seed,
        tolerance: a.tolerance,
        scale: a.scale,
        ..GradcheckOptions::default()
    };
    let report = gradcheck::run(&opts)?;
    let mut text = report.to_string();
    if report.passed() {
        text.push_str(&format!(
            "# all checks passed; worst relative error {:e}\n",
            report.worst()
        ));
    } else {
        for g in report.groups.iter().filter(|g| !g.passed(report.tolerance)) {
            let (n, m, d) = g.worst_shape;
            text.push_str(&format!(
                "# FAILED gamma={:?} mode={} backward={} precision={}: worst relative error {:e} at {n}x{m}x{d}, {} non-finite entries\n",
                g.gamma, g.mode, opts.backward, opts.precision, g.worst_rel_err, g.non_finite
            ));
        }
    }
    open_output(a.output.as_ref(), out, text.as_bytes())?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_bench(a: &BenchArgs, cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let rows = match &a.config {
        Some(p) => bench::read_matrix(p)?,
        None => {
            let mut rows = Vec::new();
            for &b in &a.batch {
                for &l in &a.length {
                    for &d in &a.dim {
                        for &mode in &a.mode {
                            rows.push(BenchConfigRow {
                                gamma: a.gamma,
                                backward_space: a.backward,
                                repeats: a.repeats,
                                warmup: a.warmup,
                                ..BenchConfigRow::new(b, l, d, mode)
                            });
                        }
                    }
                }
            }
            rows
        }
    };
    let opts = BenchOptions {
        seed: cli.seed,
        mem_limit: a.mem_limit,
        skip_mode_check: false,
    };
    match &a.output {
        Some(p) => {
            let mut f = fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            bench::run_matrix(&rows, cli.precision, &opts, &mut f)?;
        }
        None => {
            bench::run_matrix(&rows, cli.precision, &opts, out)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_generate(a: &GenerateArgs, cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let spec = GenSpec {
        kind: a.kind,
        count: a.count,
        length: a.length,
        dim: a.dim,
        noise: a.noise,
        seed: cli.seed,
    };
    let series = generate::generate(&spec)?;
    let paths = generate::write_dataset(&a.output, &series)?;
    writeln!(out, "wrote {} {} series to {}", paths.len(), a.kind, a.output.display())?;
    Ok(EXIT_OK)
}

fn barycenter_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        return list_series_dir(input);
    }
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let base = input.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn cmd_barycenter<T: Real>(a: &BarycenterArgs, out: &mut dyn Write) -> Result<i32> {
    let paths = barycenter_inputs(&a.input)?;
    ensure!(!paths.is_empty(), "no input series in {}", a.input.display());
    let series = paths
        .iter()
        .map(|p| Ok(read_series(p)?.cast::<T>()))
        .collect::<Result<Vec<_>>>()?;
    let length = a.length.unwrap_or_else(|| series[0].len());
    let prob = BarycenterProblem::new(series, length, T::lit(a.gamma))?.with_bandwidth(a.bandwidth);
    let init = match a.init {
        InitArg::Auto => Init::default_for(&prob),
        InitArg::Mean => Init::EuclideanMean,
        InitArg::Member => Init::MemberCopy(a.member),
    };
    let opts = AdamOptions {
        max_iters: a.iters,
        lr: T::lit(a.lr),
        tol: T::lit(a.tol),
        ..AdamOptions::default()
    };
    let trace = solve_barycenter(&prob, &init, &opts)?;
    write_series(&a.output, &trace.final_z, 0)?;
    if let Some(p) = &a.trace {
        let mut csv = String::from("iteration,objective\n");
        for (k, v) in trace.objective_per_iteration.iter().enumerate() {
            csv.push_str(&format!("{k},{v:?}\n"));
        }
        fs::write(p, csv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    writeln!(
        out,
        "members={} length={} iterations={} converged={} initial_objective={:?} best_objective={:?}",
        prob.member_count(),
        length,
        trace.iterations_run,
        trace.converged,
        trace.objective_per_iteration[0],
        trace.best_objective
    )?;
    Ok(EXIT_OK)
}
