use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use hjmp_core::grid::{memory_estimate, read_field, solve_brt, write_field, Grid};
use hjmp_core::neural::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, train, train_from, validate_against_oracle, LogRow,
    TrainLog, Validator, CHECKPOINT_MAGIC,
};
use hjmp_core::sim::{run_benchmark, trials_csv, Method, TraceRow, ValueSource};
use hjmp_core::{ValueField, ValueFunction, Variant};
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::{CliError, Global};

type Res<T> = Result<T, CliError>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Res<()> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn write_manifest<C: Serialize>(g: &Global, command: &str, config: &C) -> Res<()> {
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: g.seed,
        workers: g.workers,
        deterministic: g.deterministic,
        config,
    };
    write_json(&g.out.join(MANIFEST), &manifest)
}

fn absolute(base: &Path, p: &Path) -> Res<PathBuf> {
    let p = resolve(base, p);
    fs::canonicalize(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn read_oracle(path: &Path) -> Res<ValueField> {
    Ok(read_field(path)?)
}

pub fn solve_grid(g: &Global) -> Res<()> {
    let config: SolveGridConfig = load(&g.config, "solve-grid")?;
    config.system.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let counts = match &config.resolution {
        Resolution::Uniform(n) => vec![*n; config.system.joint_dim()],
        Resolution::PerDim(c) => c.clone(),
    };
    let grid = Grid::for_system(&config.system, &counts).map_err(|e| CliError::Config(e.to_string()))?;
    let bytes = memory_estimate(&config.system, &grid, &config.solver);
    let cap = config.memory_cap_mb * 1024 * 1024;
    if bytes > cap {
        return Err(CliError::Resource(format!(
            "solving a {counts:?} grid needs about {} MiB, above the {} MiB cap",
            bytes.div_ceil(1024 * 1024),
            config.memory_cap_mb
        )));
    }
    write_manifest(g, "solve-grid", &config)?;
    let started = Instant::now();
    let (field, stats) = solve_brt(&config.system, &grid, &config.solver)?;
    let runtime = if g.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
    let max_deviation = grid
        .nodes()
        .zip(field.initial_slice())
        .map(|(x, v)| (v - config.system.boundary_value(&x)).abs())
        .fold(0.0, f64::max);
    write_field(&field, &g.out.join("field.bin"))?;
    write_json(
        &g.out.join("summary.json"),
        &json!({
            "system": config.system.kind().name(),
            "resolution": counts,
            "max_spacing": grid.max_spacing(),
            "steps": stats.steps,
            "dt": stats.dt,
            "stored_slices": stats.stored_slices,
            "runtime_seconds": runtime,
            "brt_volume_fraction": field.safe_fraction(),
            "max_deviation_from_boundary": max_deviation,
        }),
    )?;
    log(g, &format!("solved {counts:?} in {} steps", stats.steps));
    Ok(())
}

fn parse_log(path: &Path) -> Res<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let bad = |line: &str| CliError::Config(format!("{}: bad log row `{line}`", path.display()));
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(line));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
        rows.push(LogRow {
            step: f[0].parse().map_err(|_| bad(line))?,
            samples: f[1].parse().map_err(|_| bad(line))?,
            window: num(f[2])?,
            loss: num(f[3])?,
            validation: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            wall_seconds: num(f[5])?,
        });
    }
    Ok(rows)
}

pub fn train_cmd(g: &Global) -> Res<()> {
    let mut config: TrainCommandConfig = load(&g.config, "train")?;
    config.system.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = g.seed {
        config.train.seed = seed;
        config.seeds.clear();
    }
    if config.sym_half_data && config.train.variant == Variant::BcSym {
        config.train.batch_size = (config.train.batch_size / 2).max(1);
        config.train.total_samples /= 2;
        config.train.decay_every = (config.train.decay_every / 2).max(1);
    }
    config.sym_half_data = false;
    for p in [&mut config.oracle, &mut config.resume, &mut config.resume_log].into_iter().flatten() {
        *p = absolute(&g.config, p)?;
    }
    config.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if config.resume.is_some() && config.seeds.len() > 1 {
        return Err(CliError::Config("resume continues a single run".into()));
    }
    let oracle = config.oracle.as_deref().map(read_oracle).transpose()?;
    let seeds = if config.seeds.is_empty() { vec![config.train.seed] } else { config.seeds.clone() };
    write_manifest(g, "train", &config)?;

    let mut summary = String::from("seed,variant,samples,final_validation,wall_seconds\n");
    for seed in seeds {
        let run = hjmp_core::TrainConfig { seed, ..config.train.clone() };
        let validator = oracle.as_ref().map_or(Validator::Residual, Validator::Oracle);
        let started = Instant::now();
        let (net, log_rows) = match &config.resume {
            Some(path) => {
                let net = load_checkpoint_for(path, &config.system)?;
                train_from(net, &run, validator)?
            }
            None => train(&config.system, &run, validator)?,
        };
        let wall = if g.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
        let mut rows = match &config.resume_log {
            Some(path) => parse_log(path)?,
            None => Vec::new(),
        };
        let (step0, samples0) = rows.last().map_or((0, 0), |r| (r.step, r.samples));
        rows.extend(log_rows.rows.iter().map(|r| LogRow { step: r.step + step0, samples: r.samples + samples0, ..r.clone() }));
        let full = TrainLog { rows };
        save_checkpoint(&net, &g.out.join(format!("checkpoint_seed{seed}.bin")))?;
        write(&g.out.join(format!("log_seed{seed}.csv")), full.to_csv(g.deterministic))?;
        let final_validation = log_rows.final_validation().map(|v| format!("{v:.8e}")).unwrap_or_default();
        let _ = writeln!(summary, "{seed},{},{},{final_validation},{wall:.3}", run.variant.name(), run.total_samples);
        log(g, &format!("seed {seed}: final validation {final_validation}"));
    }
    write(&g.out.join("summary.csv"), summary)
}

pub fn eval_value(g: &Global) -> Res<()> {
    let mut config: EvalConfig = load(&g.config, "eval-value")?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if config.samples == 0 {
        return Err(CliError::Config("samples must be positive".into()));
    }
    config.checkpoint = absolute(&g.config, &config.checkpoint)?;
    config.field = absolute(&g.config, &config.field)?;
    write_manifest(g, "eval-value", &config)?;
    let net = load_checkpoint(&config.checkpoint)?;
    let field = read_oracle(&config.field)?;
    let report = validate_against_oracle(&net, &field, config.samples, config.seed)?;
    write(
        &g.out.join("eval.csv"),
        format!(
            "system,variant,samples,mean_abs_error,mean_abs_error_t0\n{},{},{},{:.8e},{:.8e}\n",
            net.system.kind().name(),
            net.variant.name(),
            report.samples,
            report.mean_abs_error,
            report.mean_abs_error_t0
        ),
    )
}

pub fn bench(g: &Global) -> Res<()> {
    let mut config: BenchConfig = load(&g.config, "bench")?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if g.deterministic {
        config.planner.enforce_timeout = false;
    }
    if let Some(p) = &mut config.checkpoint {
        *p = absolute(&g.config, p)?;
    }
    let value = match &config.checkpoint {
        Some(path) => {
            let net = load_checkpoint(path)?;
            if net.system.kind() != config.system {
                return Err(CliError::Config(format!(
                    "checkpoint is for {}, the benchmark for {}",
                    net.system.kind().name(),
                    config.system.name()
                )));
            }
            ValueSource::Network(Arc::new(net))
        }
        None => ValueSource::Boundary,
    };
    let methods: Vec<Method> = config
        .methods
        .iter()
        .map(|m| match m {
            MethodName::Nehmo => Method::Nehmo { value: value.clone(), config: config.planner.clone() },
            MethodName::Naive => Method::Naive { gain: config.naive_gain },
        })
        .collect();
    write_manifest(g, "bench", &config)?;
    let (table, records) =
        run_benchmark(config.system, &config.agent_counts, config.scenarios, config.seed, &methods, &config.sim)?;
    write(&g.out.join("metrics.csv"), table.to_csv(g.deterministic))?;
    write(&g.out.join("trials.csv"), trials_csv(&records, g.deterministic))?;
    if config.sim.record_trace {
        let dir = g.out.join("traces");
        fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
        for r in &records {
            let name = format!("{}_m{}_s{}.jsonl", r.method, r.agents, r.scenario);
            write(&dir.join(name), r.result.trace_jsonl()?)?;
        }
    }
    for row in &table.rows {
        log(g, &format!("{} m={} SR {:.1} CR {:.1}", row.method, row.agents, row.success_rate(), row.collision_rate()));
    }
    Ok(())
}

fn load_value(path: &Path) -> Res<Box<dyn ValueFunction>> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        Ok(Box::new(hjmp_core::neural::decode_checkpoint(&bytes)?))
    } else {
        Ok(Box::new(hjmp_core::grid::decode_field(&bytes)?))
    }
}

pub fn plot(g: &Global) -> Res<()> {
    let mut config: PlotConfig = load(&g.config, "plot")?;
    if config.trace.is_none() && config.slice.is_none() {
        return Err(CliError::Config("nothing to plot: give a trace, a slice or both".into()));
    }
    if let Some(p) = &mut config.trace {
        *p = absolute(&g.config, p)?;
    }
    if let Some(s) = &mut config.slice {
        s.source = absolute(&g.config, &s.source)?;
    }
    write_manifest(g, "plot", &config)?;
    if let Some(path) = &config.trace {
        let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut agents: Vec<String> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: TraceRow = serde_json::from_str(line).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            if agents.len() <= row.agent {
                agents.resize(row.agent + 1, String::new());
            }
            let csv = &mut agents[row.agent];
            if csv.is_empty() {
                csv.push('t');
                for k in 0..row.state.len() {
                    let _ = write!(csv, ",x{k}");
                }
                csv.push('\n');
            }
            let _ = write!(csv, "{:.4}", row.time);
            for v in &row.state {
                let _ = write!(csv, ",{v:.6}");
            }
            csv.push('\n');
        }
        for (i, csv) in agents.iter().enumerate().filter(|(_, c)| !c.is_empty()) {
            write(&g.out.join(format!("agent_{i}.csv")), csv)?;
        }
    }
    if let Some(slice) = &config.slice {
        let value = load_value(&slice.source)?;
        let sys = value.system().clone();
        let bounds = sys.state_bounds();
        let [a, b] = slice.dims;
        if slice.fixed.len() != sys.joint_dim() || a >= bounds.len() || b >= bounds.len() || a == b {
            return Err(CliError::Config("slice needs a full joint state and two distinct dimensions".into()));
        }
        if slice.resolution < 2 {
            return Err(CliError::Config("slice resolution must be at least 2".into()));
        }
        let n = slice.resolution;
        let coord = |d: usize, i: usize| bounds[d][0] + (bounds[d][1] - bounds[d][0]) * i as f64 / (n - 1) as f64;
        let mut csv = String::new();
        for i in 0..n {
            let _ = write!(csv, ",{:.6}", coord(a, i));
        }
        csv.push('\n');
        for j in 0..n {
            let _ = write!(csv, "{:.6}", coord(b, j));
            for i in 0..n {
                let mut x = slice.fixed.clone();
                x[a] = coord(a, i);
                x[b] = coord(b, j);
                let _ = write!(csv, ",{:.8}", value.value(slice.t, &x)?);
            }
            csv.push('\n');
        }
        write(&g.out.join("slice.csv"), csv)?;
    }
    Ok(())
}

fn log(g: &Global, msg: &str) {
    if g.verbose {
        eprintln!("{msg}");
    }
}
