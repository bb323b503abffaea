use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;

use super::config::{ExperimentConfig, Preset};
use super::{
    write_atomic, BenchArgs, BoundArgs, Command, DataFlags, EvalArgs, GenArgs, MilpArgs, TrainArgs,
    SEED_ENV,
};
use crate::datagen::{generate_grouped_expert_with, metadata, SyntheticSource};
use crate::defer::{
    read_csv, read_pair, write_csv, write_pair, ClassifierWeights, DeferDataset, HalfspacePair,
};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    coverage_curve, evaluate, generalization_bound, run_benchmark, split_70_10_20, write_curve_csv,
    write_results_csv, write_summary_csv, write_svg, BenchmarkSpec, DataSpec, DeferralSystem,
};
use crate::milp::{build_milp, solve_milp, MilpStatus};
use crate::rng::{stream, streams};
use crate::train::{read_system, train_method, write_system, Architecture, Method, TrainedSystem};

pub(super) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Milp(a) => cmd_milp(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Bound(a) => cmd_bound(a),
    }
}

fn with_path<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = with_path(p, fs::read_to_string(p))?;
            ExperimentConfig::parse(&text)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))
        }
    }
}

/// Flag, then config, then `DEFERLAB_SEED`, then 0.
fn settle_seeds(cfg: &mut ExperimentConfig, flag: Option<u64>) -> Result<()> {
    if let Some(s) = flag {
        cfg.data.seed = Some(s);
        cfg.train_seed = Some(s);
        cfg.eval.seed = Some(s);
    }
    let env = match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
        })?,
        Err(_) => 0,
    };
    cfg.resolve_seeds(env);
    Ok(())
}

fn apply_data_flags(cfg: &mut ExperimentConfig, f: &DataFlags) {
    let d = &mut cfg.data;
    if let Some(v) = f.preset {
        d.preset = v;
    }
    macro_rules! take {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = f.$field.clone() { d.$target = v; })*
        };
    }
    take!(dim => dim, n => n, k => k, classes => classes, distribution => distribution,
        components => components, p_m => p_m, p_h0 => p_h0, p_h1 => p_h1, test_size => test_size);
}

fn read_data(path: &Path, classes: Option<usize>) -> Result<DeferDataset> {
    let file = with_path(path, fs::File::open(path))?;
    read_csv(BufReader::new(file), classes).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Reads several CSVs with one class count: the flag, else the largest
/// inferred count.
fn read_aligned(paths: &[&Path], classes: Option<usize>) -> Result<Vec<DeferDataset>> {
    let sets: Vec<DeferDataset> = paths
        .iter()
        .map(|p| read_data(p, classes))
        .collect::<Result<_>>()?;
    let c = sets
        .iter()
        .map(DeferDataset::num_classes)
        .max()
        .unwrap_or(2);
    if sets.iter().all(|s| s.num_classes() == c) {
        return Ok(sets);
    }
    paths.iter().map(|p| read_data(p, Some(c))).collect()
}

fn out_dir(out: &Path) -> Result<()> {
    with_path(out, fs::create_dir_all(out))
}

fn save(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = out.join(name);
    with_path(&path, write_atomic(&path, bytes))
}

fn csv_bytes(ds: &DeferDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(ds, &mut buf)?;
    Ok(buf)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    apply_data_flags(&mut cfg, &a.data);
    settle_seeds(&mut cfg, a.seed)?;
    let seed = cfg.data.seed.unwrap_or_default();
    out_dir(&a.out)?;
    let (train, val, test) = match cfg.data.preset {
        Preset::Synthetic => {
            let sc = cfg.data.synthetic(seed)?;
            let source = SyntheticSource::new(&sc)?;
            let n_val = ((sc.n as f64 * cfg.train.val_fraction).ceil() as usize).max(1);
            let mut pair = Vec::new();
            write_pair(source.planted_pair(), &mut pair)?;
            save(&a.out, "planted.txt", &pair)?;
            save(
                &a.out,
                "meta.txt",
                metadata(&sc, source.planted_pair()).as_bytes(),
            )?;
            (
                source.instance()?.dataset,
                source.sample(n_val, streams::SPLIT)?,
                source.heldout(cfg.data.test_size)?,
            )
        }
        Preset::Grouped => {
            let data = generate_grouped_expert_with(&cfg.data.grouped(seed))?;
            let s = split_70_10_20(&data, seed)?;
            (s.train, s.val, s.test)
        }
        Preset::Csv => {
            return invalid("gen produces synthetic or grouped data; csv is an input preset")
        }
    };
    save(&a.out, "train.csv", &csv_bytes(&train)?)?;
    save(&a.out, "val.csv", &csv_bytes(&val)?)?;
    save(&a.out, "test.csv", &csv_bytes(&test)?)?;
    save(&a.out, "run.cfg", cfg.render().as_bytes())?;
    println!(
        "wrote {} train, {} val, {} test points (d={}, C={}) to {}",
        train.len(),
        val.len(),
        test.len(),
        train.dim(),
        train.num_classes(),
        a.out.display()
    );
    Ok(())
}

fn read_groups(path: &Path) -> Result<Vec<usize>> {
    let text = with_path(path, fs::read_to_string(path))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| {
                Error::InvalidArgument(format!("{}: bad group id {t:?}", path.display()))
            })
        })
        .collect()
}

fn cmd_milp(a: MilpArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    let s = &mut cfg.solver;
    if let Some(v) = a.gamma {
        s.gamma = v;
    }
    if let Some(v) = a.box_bound {
        s.box_bound = v;
    }
    if let Some(v) = a.lambda {
        s.lambda_reg = v;
    }
    if let Some(v) = a.coverage {
        s.coverage_beta = Some(v);
    }
    if let Some(v) = a.time_limit {
        s.time_limit_s = (v > 0.0).then_some(v);
    }
    if let Some(g) = a.groups {
        cfg.groups = Some(g);
    }
    settle_seeds(&mut cfg, a.seed)?;
    let data = read_data(&a.data, a.classes)?;
    if let Some(g) = &cfg.groups {
        cfg.solver.fairness_groups = Some(read_groups(g)?);
    }
    let problem = build_milp(&data, &cfg.solver)?;
    let sol = solve_milp(&problem, &cfg.solver)?;
    let pair = match (&sol.pair, sol.status) {
        (Some(p), s) if s != MilpStatus::Infeasible => p.clone(),
        _ => return Err(Error::Solver("the program is infeasible".into())),
    };
    out_dir(&a.out)?;
    let mut buf = Vec::new();
    write_pair(&pair, &mut buf)?;
    save(&a.out, "pair.txt", &buf)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "status={}", sol.status.as_str());
    let _ = writeln!(summary, "objective={}", sol.objective);
    let _ = writeln!(summary, "best_bound={}", sol.best_bound);
    let _ = writeln!(summary, "train_loss={}", sol.train_loss);
    let _ = writeln!(summary, "nodes={}", sol.nodes_explored);
    let _ = writeln!(summary, "seconds={:.3}", sol.wall_time_s);
    save(&a.out, "solution.txt", summary.as_bytes())?;
    save(&a.out, "run.cfg", cfg.render().as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = &a.method {
        cfg.method = m.parse()?;
    }
    if let Some(g) = &a.alpha_grid {
        cfg.train.alpha_grid = g
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad alpha {t:?}")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(alpha) = a.alpha {
        match cfg.method {
            Method::Surrogate(loss) if loss.alpha().is_some() => {
                cfg.method = Method::Surrogate(loss.with_alpha(alpha));
                cfg.train.alpha_grid = vec![alpha];
            }
            m => return invalid(format!("method {m} has no alpha")),
        }
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = &a.architecture {
        cfg.train.architecture = v.parse::<Architecture>()?;
    }
    settle_seeds(&mut cfg, a.seed)?;
    cfg.train.validate()?;
    let seed = cfg.train.seed;
    let (train, val) = match &a.val {
        Some(v) => {
            let mut sets = read_aligned(&[&a.data, v], a.classes)?;
            let val = sets.pop().expect("two sets");
            (sets.pop().expect("two sets"), val)
        }
        None => {
            let all = read_data(&a.data, a.classes)?;
            let n_val = ((all.len() as f64 * cfg.train.val_fraction).ceil() as usize).max(1);
            if n_val >= all.len() {
                return invalid("too few points to hold out a validation set");
            }
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.shuffle(&mut stream(seed, streams::SPLIT));
            (all.subset(&idx[n_val..])?, all.subset(&idx[..n_val])?)
        }
    };
    let system = train_method(cfg.method, &train, &val, &cfg.train)?;
    out_dir(&a.out)?;
    let mut buf = Vec::new();
    write_system(&system, &mut buf)?;
    save(&a.out, "model.txt", &buf)?;
    save(&a.out, "run.cfg", cfg.render().as_bytes())?;
    println!(
        "method={} tau={} best_epoch={} train_acc={:.4} val_acc={:.4}",
        system.method,
        system.tau,
        system.best_epoch,
        1.0 - system.system_loss(&train)?,
        1.0 - system.system_loss(&val)?
    );
    Ok(())
}

enum Loaded {
    Pair(HalfspacePair),
    System(TrainedSystem),
}

impl Loaded {
    fn as_system(&self) -> &dyn DeferralSystem {
        match self {
            Loaded::Pair(p) => p,
            Loaded::System(s) => s,
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            Loaded::Pair(p) => p.num_classes(),
            Loaded::System(s) => s.num_classes(),
        }
    }
}

fn load_model(path: &Path) -> Result<Loaded> {
    let text = with_path(path, fs::read_to_string(path))?;
    let named = |e: Error| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    };
    if text.starts_with("pair,") {
        read_pair(text.as_bytes()).map(Loaded::Pair).map_err(named)
    } else if text.starts_with("system,") {
        read_system(text.as_bytes())
            .map(Loaded::System)
            .map_err(named)
    } else {
        invalid(format!(
            "{}: neither a pair nor a model file",
            path.display()
        ))
    }
}

/// Zero classifier with a constant rejector: defers everything when
/// `defer` holds, nothing otherwise.
fn constant_pair(d: usize, classes: usize, defer: bool) -> Result<HalfspacePair> {
    let classifier = if classes == 2 {
        ClassifierWeights::Binary(vec![0.0; d + 1])
    } else {
        ClassifierWeights::Multiclass(vec![vec![0.0; d + 1]; classes])
    };
    let mut rejector = vec![0.0; d + 1];
    rejector[d] = if defer { 1.0 } else { -1.0 };
    HalfspacePair::new(classifier, rejector)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (model, data) = match &a.model {
        Some(path) => {
            let model = load_model(path)?;
            let classes = a.classes.unwrap_or(model.num_classes());
            let data = read_data(&a.data, Some(classes))?;
            (model, data)
        }
        None if a.defer_all || a.defer_none => {
            let data = read_data(&a.data, a.classes)?;
            let pair = constant_pair(data.dim(), data.num_classes(), a.defer_all)?;
            (Loaded::Pair(pair), data)
        }
        None => return invalid("pass --model, --defer-all or --defer-none"),
    };
    let system = model.as_system();
    let report = evaluate(system, &data)?;
    let curve = coverage_curve(system, &data, a.grid_size)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let line = format!(
        "{},{},{},{},{}",
        report.coverage,
        report.system_accuracy,
        opt(report.classifier_accuracy_nondeferred),
        opt(report.human_accuracy_deferred),
        report.n_points
    );
    println!(
        "system_acc={:.4} coverage={:.4} clf_acc_nondef={} hum_acc_def={} n={}",
        report.system_accuracy,
        report.coverage,
        report
            .classifier_accuracy_nondeferred
            .map_or("-".into(), |v| format!("{v:.4}")),
        report
            .human_accuracy_deferred
            .map_or("-".into(), |v| format!("{v:.4}")),
        report.n_points
    );
    if let Some(out) = &a.out {
        out_dir(out)?;
        let report_csv =
            format!("coverage,system_acc,clf_acc_nondef,hum_acc_def,n_points\n{line}\n");
        save(out, "report.csv", report_csv.as_bytes())?;
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf)?;
        save(out, "curve.csv", &buf)?;
        let mut svg = Vec::new();
        write_svg(&[("system".to_string(), &curve)], &mut svg)?;
        save(out, "curve.svg", &svg)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    apply_data_flags(&mut cfg, &a.data);
    if let Some(p) = &a.csv {
        cfg.data.preset = Preset::Csv;
        cfg.data.path = Some(p.clone());
    }
    if let Some(m) = &a.methods {
        cfg.methods = m
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_>>()?;
    }
    if let Some(v) = a.trials {
        cfg.eval.trials = v;
    }
    if let Some(v) = a.jobs {
        cfg.eval.jobs = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.time_limit {
        cfg.solver.time_limit_s = (v > 0.0).then_some(v);
    }
    settle_seeds(&mut cfg, a.seed)?;
    if cfg.groups.is_some() {
        return invalid("fairness groups are per-point and cannot follow benchmark resampling");
    }
    let data = match cfg.data.preset {
        Preset::Synthetic => DataSpec::Synthetic {
            config: cfg.data.synthetic(0)?,
            test_size: cfg.data.test_size,
        },
        Preset::Grouped => DataSpec::Grouped(cfg.data.grouped(0)),
        Preset::Csv => {
            let path = cfg.data.path.clone().ok_or_else(|| {
                Error::InvalidArgument("the csv preset needs [data] path or --csv".into())
            })?;
            DataSpec::Dataset(read_data(&path, None)?)
        }
    };
    let spec = BenchmarkSpec {
        data,
        methods: cfg.methods.clone(),
        trials: cfg.eval.trials,
        seed: cfg.eval.seed.unwrap_or_default(),
        train: cfg.train.clone(),
        milp: cfg.solver.clone(),
        grid_size: cfg.eval.grid_size,
        jobs: cfg.eval.jobs.max(1),
    };
    let results = run_benchmark(&spec)?;
    out_dir(&a.out)?;
    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf)?;
    save(&a.out, "results.csv", &buf)?;
    let mut buf = Vec::new();
    write_summary_csv(&results, &mut buf)?;
    save(&a.out, "summary.csv", &buf)?;
    let curves = a.out.join("curves");
    out_dir(&curves)?;
    for row in &results.rows {
        let mut buf = Vec::new();
        write_curve_csv(&row.curve, &mut buf)?;
        let name = format!(
            "{}_trial{}.csv",
            row.method.to_string().replace(':', "-"),
            row.trial
        );
        save(&curves, &name, &buf)?;
    }
    if cfg.eval.svg {
        let first: Vec<(String, &_)> = results
            .rows
            .iter()
            .filter(|r| r.trial == 0)
            .map(|r| (r.method.to_string(), &r.curve))
            .collect();
        let mut svg = Vec::new();
        write_svg(&first, &mut svg)?;
        save(&a.out, "curves.svg", &svg)?;
    }
    save(&a.out, "run.cfg", cfg.render().as_bytes())?;
    println!(
        "{:<14} {:>7} {:>18} {:>10} {:>9}",
        "method", "trials", "test acc ± se", "train acc", "coverage"
    );
    for s in &results.summaries {
        let se = s.std_error.map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "{:<14} {:>7} {:>10.4} ± {:<6} {:>10.4} {:>9.3}",
            s.method.to_string(),
            s.trials,
            s.mean_test_accuracy,
            se,
            s.mean_train_accuracy,
            s.mean_coverage
        );
    }
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let b = generalization_bound(a.train_loss, a.km, a.kr, a.d, a.n, a.perr, a.delta)?;
    println!("{b:.4}");
    Ok(())
}
