use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fmmnn::constructive::{
    build_floor_net, build_theorem_net_1d, search_sine_match, sintu_relu_approx, MatchError,
    TheoremConfig, TheoremError,
};
use fmmnn::landscape::{
    analytic_grid, default_scan_dataset, pick_random_coords, scan_pair, LandscapeGrid,
};
use fmmnn::{
    analytic_deriv, build_model, count_params, evaluate, fmt_float, sample, train, ActivationKind,
    Dataset, InitMode, Model, ModelSpec, Prng, SampleMode, Target, TrainReport,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::CliError;
use crate::{Arch, Cli, Command, Construct, LandscapeArgs, ParamsArgs};

type Result<T> = std::result::Result<T, CliError>;

/// Runs one CLI invocation and returns the line to print on success.
pub fn run(cli: Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let overrides = Overrides {
        seed: cli.seed,
        precision: cli.precision,
        out: cli.out.clone(),
    };
    let load = || -> Result<ExperimentConfig> {
        let path = cli.config.as_deref().ok_or_else(|| CliError::Config {
            field: "--config".into(),
            message: "this command needs a config".into(),
        })?;
        let mut cfg = ExperimentConfig::load(path)?;
        cfg.apply(&overrides);
        cfg.validate()?;
        Ok(cfg)
    };
    let out_dir = |cfg: Option<&ExperimentConfig>| -> PathBuf {
        cli.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out"))
    };
    match &cli.command {
        Command::Train => {
            let cfg = load()?;
            let dir = out_dir(Some(&cfg));
            let o = train_workflow(&cfg)?;
            write_train_outputs(&dir, &cfg, &o, "")?;
            write_json(&dir.join("summary.json"), &train_summary(&cfg, &o)?)?;
            Ok(format!(
                "final test MSE {} (report in {})",
                fmt_float(o.report.last().test_mse),
                dir.display()
            ))
        }
        Command::Eval { model } => {
            let cfg = load()?;
            let dir = out_dir(Some(&cfg));
            let text = fs::read_to_string(model)?;
            let m = Model::from_json(&text)?;
            eval_command(&dir, &cfg, &m)
        }
        Command::InitCompare => {
            let cfg = load()?;
            let dir = out_dir(Some(&cfg));
            let c = init_compare(&cfg)?;
            write_train_outputs(&dir, &cfg, &c.default, "_default")?;
            write_train_outputs(&dir, &cfg, &c.scaled, "_scaled")?;
            let summary = json!({
                "default": train_summary(&cfg, &c.default)?,
                "scaled": train_summary(&cfg, &c.scaled)?,
                "delta_test_mse": c.scaled.report.last().test_mse - c.default.report.last().test_mse,
                "scaled_better": c.scaled_better(),
            });
            write_json(&dir.join("summary.json"), &summary)?;
            Ok(format!(
                "test MSE default {} vs scaled {}",
                fmt_float(c.default.report.last().test_mse),
                fmt_float(c.scaled.report.last().test_mse)
            ))
        }
        Command::Params(args) => {
            params_command(args, cli.config.as_deref().map(|_| load()).transpose()?)
        }
        Command::Landscape(args) => {
            let cfg = if cli.config.is_some() {
                Some(load()?)
            } else {
                None
            };
            let dir = out_dir(cfg.as_ref());
            landscape_command(&dir, args, cfg.as_ref(), cli.seed.unwrap_or(0))
        }
        Command::Construct { which } => {
            construct_command(&out_dir(None), which, cli.seed.unwrap_or(0))
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub report: TrainReport,
    pub test: Dataset,
}

pub fn datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let train = sample(
        cfg.target,
        cfg.data.train_n,
        cfg.data.sampling,
        cfg.train_data_seed(),
    )?;
    let test = sample(
        cfg.target,
        cfg.data.test_n,
        SampleMode::UniformRandom,
        cfg.test_data_seed(),
    )?;
    Ok((train, test))
}

pub fn train_workflow(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    train_with_init(cfg, cfg.init)
}

fn train_with_init(cfg: &ExperimentConfig, init: InitMode) -> Result<TrainOutcome> {
    let (train_set, test) = datasets(cfg)?;
    let mut model = build_model(&cfg.model, cfg.seed, init)?;
    let report = train(&mut model, &train_set, &test, &cfg.train_config())?;
    Ok(TrainOutcome {
        model,
        report,
        test,
    })
}

pub struct InitComparison {
    pub default: TrainOutcome,
    pub scaled: TrainOutcome,
}

impl InitComparison {
    pub fn scaled_better(&self) -> bool {
        self.scaled.report.last().test_mse < self.default.report.last().test_mse
    }
}

/// Same data, seeds and schedule; only the initialization differs.
pub fn init_compare(cfg: &ExperimentConfig) -> Result<InitComparison> {
    Ok(InitComparison {
        default: train_with_init(cfg, InitMode::Default)?,
        scaled: train_with_init(cfg, InitMode::Scaled)?,
    })
}

fn write_train_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    o: &TrainOutcome,
    suffix: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    o.report.write_csv(BufWriter::new(File::create(
        dir.join(format!("report{suffix}.csv")),
    )?))?;
    fs::write(dir.join(format!("model{suffix}.json")), o.model.to_json()?)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn train_summary(cfg: &ExperimentConfig, o: &TrainOutcome) -> Result<Value> {
    let (trainable, total) = count_params(&cfg.model)?;
    let last = o.report.last();
    let m = evaluate(&o.model, &o.test, 0, None)?;
    Ok(json!({
        "target": cfg.target.name(),
        "model": cfg.model.to_string(),
        "init": o.model.init_mode(),
        "seed": cfg.seed,
        "params_trainable": trainable,
        "params_total": total,
        "epochs": last.epoch,
        "train_mse": last.train_mse,
        "test_mse": last.test_mse,
        "test_max": last.test_max,
        "test_rel_mse": m.rel_mse,
        "test_rel_max": m.rel_max,
        "model_checksum": format!("{:016x}", o.model.checksum()),
        "wall_time_s": o.report.wall_time_s,
    }))
}

fn eval_command(dir: &Path, cfg: &ExperimentConfig, m: &Model) -> Result<String> {
    if m.input_dim() != cfg.target.dim() {
        return Err(CliError::Config {
            field: "target".into(),
            message: format!(
                "model takes {} inputs, {} has {}",
                m.input_dim(),
                cfg.target,
                cfg.target.dim()
            ),
        });
    }
    let (_, test) = datasets(cfg)?;
    let mut rows = vec![(0u8, evaluate(m, &test, 0, None)?)];
    if cfg.target.has_derivatives() {
        for order in [1u8, 2] {
            let t: Vec<f64> = (0..test.len())
                .map(|r| analytic_deriv(cfg.target.name(), test.x.get(r, 0), order))
                .collect::<fmmnn::Result<_>>()?;
            rows.push((order, evaluate(m, &test, order, Some(&t))?));
        }
    }
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("eval.csv"))?);
    writeln!(w, "order,mse,max,rel_mse,rel_max")?;
    for (o, r) in &rows {
        writeln!(
            w,
            "{o},{},{},{},{}",
            fmt_float(r.mse),
            fmt_float(r.max),
            fmt_float(r.rel_mse),
            fmt_float(r.rel_max)
        )?;
    }
    w.flush()?;
    let (trainable, total) = count_params(m.spec())?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "target": cfg.target.name(),
            "model": m.spec().to_string(),
            "params_trainable": trainable,
            "params_total": total,
            "test_n": test.len(),
            "metrics": rows.iter().map(|(o, r)| json!({"order": o, "mse": r.mse, "max": r.max, "rel_mse": r.rel_mse, "rel_max": r.rel_max})).collect::<Vec<_>>(),
            "model_checksum": format!("{:016x}", m.checksum()),
        }),
    )?;
    Ok(format!(
        "test MSE {} MAX {}",
        fmt_float(rows[0].1.mse),
        fmt_float(rows[0].1.max)
    ))
}

fn params_command(args: &ParamsArgs, cfg: Option<ExperimentConfig>) -> Result<String> {
    let spec = match (args.kind, cfg) {
        (Some(kind), _) => {
            let need = |v: Option<usize>, name: &str| {
                v.ok_or_else(|| CliError::Config {
                    field: format!("--{name}"),
                    message: "required with --kind".into(),
                })
            };
            let width = need(args.width, "width")?;
            let depth = need(args.depth, "depth")?;
            let act = ActivationKind::Sine;
            let spec = match kind {
                fmmnn::ModelKind::Fcnn => ModelSpec::fcnn(width, depth, act),
                fmmnn::ModelKind::Mmnn => {
                    ModelSpec::mmnn(width, need(args.rank, "rank")?, depth, act)
                }
                fmmnn::ModelKind::Resmmnn => {
                    ModelSpec::resmmnn(width, need(args.rank, "rank")?, depth, act)
                }
            };
            spec.with_dims(args.input_dim, 1)
        }
        (None, Some(cfg)) => cfg.model,
        (None, None) => {
            return Err(CliError::Config {
                field: "--kind".into(),
                message: "give --kind/--width/--depth or --config".into(),
            })
        }
    };
    let (trainable, total) = count_params(&spec)?;
    Ok(format!("{trainable}/{total}"))
}

fn parse_range(v: &[f64]) -> Result<[(f64, f64); 2]> {
    match v {
        [a, b] => Ok([(*a, *b), (*a, *b)]),
        [a, b, c, d] => Ok([(*a, *b), (*c, *d)]),
        _ => Err(CliError::Config {
            field: "--range".into(),
            message: "expected lo,hi or lo1,hi1,lo2,hi2".into(),
        }),
    }
}

fn write_grid(dir: &Path, g: &LandscapeGrid, extra: Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("landscape.csv"))?);
    g.write_csv(&mut w)?;
    w.flush()?;
    let mut side = g.sidecar();
    if let (Some(obj), Value::Object(more)) = (side.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&dir.join("landscape.json"), &side)
}

fn landscape_command(
    dir: &Path,
    a: &LandscapeArgs,
    cfg: Option<&ExperimentConfig>,
    seed: u64,
) -> Result<String> {
    let ranges = parse_range(&a.range)?;
    if let Some(case) = a.case {
        let ws = match a.wstar.as_slice() {
            [x, y] => (*x, *y),
            _ => {
                return Err(CliError::Config {
                    field: "--wstar".into(),
                    message: "expected two values".into(),
                })
            }
        };
        let g = analytic_grid(case, ws, ranges, a.resolution)?;
        write_grid(
            dir,
            &g,
            json!({"case": case.to_string(), "wstar": [ws.0, ws.1]}),
        )?;
        return Ok(format!(
            "{case} grid in [{}, {}]",
            fmt_float(g.min()),
            fmt_float(g.max())
        ));
    }
    let model = if let Some(path) = &a.model {
        Model::from_json(&fs::read_to_string(path)?)?
    } else if let Some(arch) = a.arch {
        let spec = match arch {
            Arch::FcnnEg => ModelSpec::fcnn(64, 2, a.activation),
            Arch::MmnnEg => ModelSpec::mmnn(128, 32, 2, a.activation),
        };
        build_model(&spec, seed, InitMode::Default)?
    } else if let Some(cfg) = cfg {
        build_model(&cfg.model, cfg.seed, cfg.init)?
    } else {
        return Err(CliError::Config {
            field: "--model".into(),
            message: "give --case, --model, --arch or --config".into(),
        });
    };
    let data = if a.config_data {
        let cfg = cfg.ok_or_else(|| CliError::Config {
            field: "--config".into(),
            message: "--config-data needs a config".into(),
        })?;
        datasets(cfg)?.0
    } else {
        default_scan_dataset()?
    };
    let (p1, p2) = match (&a.pick, a.p1, a.p2) {
        (Some(pick), _, _) => {
            let (mode, s) = pick.split_once(':').unwrap_or((pick.as_str(), "0"));
            let s: u64 = s.parse().map_err(|_| CliError::Config {
                field: "--pick".into(),
                message: format!("bad seed in {pick:?}"),
            })?;
            match mode {
                "random" => pick_random_coords(&model, s, false)?,
                "random-trainable" => pick_random_coords(&model, s, true)?,
                _ => {
                    return Err(CliError::Config {
                        field: "--pick".into(),
                        message: format!("unknown mode {mode:?}"),
                    })
                }
            }
        }
        (None, Some(p1), Some(p2)) => (p1, p2),
        _ => {
            return Err(CliError::Config {
                field: "--p1".into(),
                message: "give --p1 and --p2, or --pick".into(),
            })
        }
    };
    let g = scan_pair(&model, &data, p1, p2, ranges, a.resolution)?;
    write_grid(
        dir,
        &g,
        json!({
            "model": model.spec().to_string(),
            "trainable": [model.is_trainable(&p1), model.is_trainable(&p2)],
            "base_values": [model.get_param(&p1)?, model.get_param(&p2)?],
            "data_points": data.len(),
        }),
    )?;
    Ok(format!(
        "scanned {p1} x {p2}: loss in [{}, {}]",
        fmt_float(g.min()),
        fmt_float(g.max())
    ))
}

/// `x, artifact, oracle, abs_err` rows plus max/mean of the error column.
fn write_verification(path: &Path, header: &str, rows: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    let (mut mx, mut sum) = (0.0f64, 0.0);
    for &(x, a, o) in rows {
        let e = (a - o).abs();
        mx = mx.max(e);
        sum += e;
        writeln!(
            w,
            "{},{},{},{}",
            fmt_float(x),
            fmt_float(a),
            fmt_float(o),
            fmt_float(e)
        )?;
    }
    w.flush()?;
    Ok((mx, sum / rows.len().max(1) as f64))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(
        path,
        serde_json::to_string_pretty(v).expect("json value serializes") + "\n",
    )?;
    Ok(())
}

fn theorem_function(name: &str) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
    match name {
        "identity" => Ok(Box::new(|x| x)),
        "abs-half" => Ok(Box::new(|x: f64| (x - 0.5).abs())),
        other => {
            let t: Target = other.parse().map_err(|e: fmmnn::Error| CliError::Config {
                field: "--f".into(),
                message: e.to_string(),
            })?;
            if t.dim() != 1 {
                return Err(CliError::Config {
                    field: "--f".into(),
                    message: format!("{t} is not one-dimensional"),
                });
            }
            Ok(Box::new(move |x: f64| t.eval_unchecked(&[2.0 * x - 1.0])))
        }
    }
}

fn construct_command(dir: &Path, which: &Construct, seed: u64) -> Result<String> {
    match which {
        Construct::Floor {
            n,
            l,
            delta,
            samples,
        } => {
            let net = build_floor_net(*n, *l, *delta)?;
            let mut rng = Prng::new(seed);
            let rows: Vec<(f64, f64, f64)> = (0..*samples)
                .map(|_| {
                    let k = rng.index(net.cells()) as f64;
                    let x = k + (1.0 - delta) * rng.next_f64();
                    (x, net.eval(x), x.floor())
                })
                .collect();
            let (mx, mean) =
                write_verification(&dir.join("floor.csv"), "x,artifact,oracle,abs_err", &rows)?;
            let (w, r, d) = net.dims();
            fs::write(
                dir.join("floor_net.json"),
                serde_json::to_string_pretty(&net).expect("floor net serializes"),
            )?;
            write_json(
                &dir.join("summary.json"),
                &json!({"artifact": "floor", "N": n, "L": l, "delta": delta, "width": w, "rank": r, "depth": d,
                        "samples": samples, "max_abs_error": mx, "mean_abs_error": mean}),
            )?;
            Ok(format!(
                "floor net ({w}, {r}, {d}): max abs error {}",
                fmt_float(mx)
            ))
        }
        Construct::Sinematch {
            targets,
            eps,
            budget,
        } => {
            let (m, failure) = match search_sine_match(targets, *eps, *budget, seed) {
                Ok(m) => (m, None),
                Err(MatchError::Exhausted(f)) => (f.best.clone(), Some(f)),
                Err(MatchError::Invalid(e)) => return Err(e.into()),
            };
            let rows: Vec<(f64, f64, f64)> = targets
                .iter()
                .enumerate()
                .map(|(i, &y)| ((i + 1) as f64, m.eval((i + 1) as f64), y))
                .collect();
            let (mx, mean) = write_verification(
                &dir.join("sinematch.csv"),
                "k,artifact,oracle,abs_err",
                &rows,
            )?;
            write_json(
                &dir.join("summary.json"),
                &json!({"artifact": "sinematch", "success": failure.is_none(), "u": m.u, "v": m.v, "w": m.w,
                        "eps": eps, "achieved_eps": m.achieved_eps, "evaluations": m.evaluations, "budget": budget,
                        "max_abs_error": mx, "mean_abs_error": mean}),
            )?;
            match failure {
                None => Ok(format!(
                    "matched {} targets to {}",
                    m.k,
                    fmt_float(m.achieved_eps)
                )),
                Some(f) => Err(fmmnn::Error::from(f).into()),
            }
        }
        Construct::SintuRelu {
            s,
            eps,
            bound,
            samples,
        } => {
            let phi = sintu_relu_approx(*s, *eps)?;
            let n = (*samples).max(2);
            let rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|i| {
                    let x = -bound + 2.0 * bound * i as f64 / (n - 1) as f64;
                    (x, phi.eval(x), x.max(0.0))
                })
                .collect();
            let (mx, mean) = write_verification(
                &dir.join("sintu_relu.csv"),
                "x,artifact,oracle,abs_err",
                &rows,
            )?;
            write_json(
                &dir.join("summary.json"),
                &json!({"artifact": "sintu-relu", "s": s, "eps": eps, "eta": phi.eta, "neurons": phi.width(),
                        "bound": bound, "max_abs_error": mx, "mean_abs_error": mean}),
            )?;
            Ok(format!(
                "sup error on [-{b}, {b}]: {}",
                fmt_float(mx),
                b = fmt_float(*bound)
            ))
        }
        Construct::Theorem1d {
            func,
            n,
            l,
            delta,
            budget,
            window,
            samples,
        } => {
            let f = theorem_function(func)?;
            let mut cfg = TheoremConfig::new(*n, *l);
            cfg.delta = *delta;
            cfg.match_budget = *budget;
            cfg.seed = seed;
            cfg.window = *window;
            let (build, err) = match build_theorem_net_1d(&f, &cfg) {
                Ok(b) => (b, None),
                Err(TheoremError::Failed(b, e)) => (*b, Some(e)),
                Err(TheoremError::Invalid(e)) => return Err(e.into()),
            };
            let net = &build.net;
            let k = (*samples).max(2);
            let rows: Vec<(f64, f64, f64)> = (0..k)
                .map(|i| {
                    let x = i as f64 / (k - 1) as f64;
                    (x, net.eval(x), f(x))
                })
                .collect();
            let (mx, mean) = write_verification(
                &dir.join("theorem1d.csv"),
                "x,artifact,oracle,abs_err",
                &rows,
            )?;
            write_json(
                &dir.join("summary.json"),
                &json!({"artifact": "theorem1d", "f": func, "N": n, "L": l, "M": net.m, "delta": delta,
                        "success": err.is_none(), "error": err.as_ref().map(|e| e.to_string()),
                        "omega": build.omega, "eps": net.eps, "bound": build.bound, "measured_l1": build.measured_l1,
                        "u": net.sine.u, "v": net.sine.v, "w": net.sine.w, "achieved_eps": net.sine.achieved_eps,
                        "evaluations": net.sine.evaluations, "representatives": net.representatives,
                        "max_abs_error": mx, "mean_abs_error": mean}),
            )?;
            match err {
                None => Ok(format!(
                    "L1 error {} <= bound {}",
                    fmt_float(build.measured_l1),
                    fmt_float(build.bound)
                )),
                Some(e) => Err(e.into()),
            }
        }
    }
}
