use std::env;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use rand::Rng;

use ksmp::oracle::{check_tree_sampling, SIGNIFICANCE};
use ksmp::rng::{stream, SeededRng};
use ksmp::trainer::generate_synthetic;
use ksmp::trainer::experiments::{run_bias_experiment_with, run_convergence_experiment_with, BiasAnalysis};
use ksmp::tree::{default_leaf_capacity, DEFAULT_FEATURE_CAP};
use ksmp::{EmbeddingMatrix, ExperimentConfig, KernelKind, KernelSpec, SamplingTree};

use crate::options::{BenchArgs, BiasArgs, ConfigArgs, ConvergenceArgs, DumpConfigArgs, SampleCheckArgs, SEED_ENV};
use crate::Failure;

type CmdResult = Result<(), Failure>;

const PATH_TOLERANCE: f64 = 1e-9;
const BENCH_QUERIES: usize = 64;

fn env_seed() -> Result<Option<u64>, Failure> {
    match env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::invalid(anyhow!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn parse_kernel(name: &str, alpha: Option<f64>) -> Result<KernelKind, Failure> {
    let kind: KernelKind = name.parse()?;
    match (kind, alpha) {
        (k, None) => Ok(k),
        (KernelKind::Polynomial { degree, .. }, Some(alpha)) => Ok(KernelKind::Polynomial { degree, alpha }),
        (k, Some(_)) => Err(Failure::invalid(anyhow!("--alpha does not apply to the {k} kernel"))),
    }
}

fn random_vector(d: usize, scale: f64, rng: &mut SeededRng) -> Result<Vec<f64>, Failure> {
    Ok(EmbeddingMatrix::random_normal(1, d, scale, rng)?.row(0).to_vec())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(Failure::runtime)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn build_config(args: &ConfigArgs, m: Option<&str>) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::default();
    if let Some(seed) = env_seed()? {
        config.seed = seed;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(Failure::invalid)?;
        config.merge_kv(&text)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::invalid(anyhow!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k, v)?;
    }
    for (k, v) in args.flag_pairs() {
        config.set(k, v)?;
    }
    if let Some(m) = m {
        config.set("m", m)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn sample_check(args: SampleCheckArgs) -> CmdResult {
    let seed = resolve_seed(args.seed)?;
    let kind = parse_kernel(&args.kernel, args.alpha)?;
    let mut rng = stream(seed, 0);
    let embeddings = match &args.embeddings {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("cannot open {}", path.display()))
                .map_err(Failure::invalid)?;
            EmbeddingMatrix::read_from(io::BufReader::new(file))?
        }
        None => {
            let scale = args.scale.unwrap_or(1.0 / (args.d as f64).sqrt());
            EmbeddingMatrix::random_normal(args.n as usize, args.d as usize, scale, &mut rng)?
        }
    };
    let d = embeddings.d();
    let scale = args.scale.unwrap_or(1.0 / (d as f64).sqrt());
    let spec = KernelSpec::new(kind, d)?;
    let tau = args.tau.unwrap_or_else(|| default_leaf_capacity(&spec));
    let tree = SamplingTree::build_with(embeddings, spec, tau, DEFAULT_FEATURE_CAP)?;
    let h = random_vector(d, scale, &mut rng)?;
    let check = check_tree_sampling(&tree, &h, args.draws, &mut rng)?;

    println!(
        "kernel={kind} n={} d={d} tau={} leaves={} height={} draws={} seed={seed}",
        tree.n(),
        tree.leaf_capacity(),
        tree.leaf_count(),
        tree.height(),
        check.draws
    );
    println!(
        "statistic={:.4} dof={} critical={:.4} p_value={:.6} significance={SIGNIFICANCE}",
        check.gof.statistic, check.gof.degrees_of_freedom, check.gof.critical_value, check.gof.p_value
    );
    println!(
        "max_path_error={:.3e} max_prob_error={:.3e} tolerance={PATH_TOLERANCE:e}",
        check.max_path_error, check.max_prob_error
    );
    let pass = check.pass(PATH_TOLERANCE);
    println!("result={}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(Failure::runtime(anyhow!("sampling check failed")))
    }
}

fn print_bias_summary(analysis: &BiasAnalysis) {
    for b in &analysis.baselines {
        eprintln!("baseline full/{}: mean={:.5} band={:.5}", b.mode, b.mean(), b.band());
    }
    for c in &analysis.curves {
        let means: Vec<String> = c.means().iter().map(|(m, l)| format!("{m}:{l:.4}")).collect();
        eprintln!("{}: {}", c.label, means.join(" "));
        if let Some(b) = analysis.baseline_for(c) {
            let entry = c.entry_m(b).map_or_else(|| "none".to_string(), |m| m.to_string());
            eprintln!(
                "  spread={:.5} flat={} non_increasing={} entry_m={entry}",
                c.spread(),
                c.is_flat(b.band()),
                c.is_non_increasing(b.band())
            );
        }
    }
}

pub fn bias(args: BiasArgs) -> CmdResult {
    let config = build_config(&args.config, args.m.as_deref())?;
    let quiet = args.quiet;
    let table = run_bias_experiment_with(&config, |r| {
        if !quiet {
            eprintln!(
                "{} m={} seed={} best_eval={:.5} epochs={} wall_ms={}",
                r.run.label(),
                r.run.m,
                r.run.seed,
                r.best_eval_loss,
                r.epochs_run,
                r.wall_ms
            );
        }
    })?;
    let mut out = open_out(args.out.as_deref())?;
    table.to_metrics().write_csv(&mut out)?;
    out.flush()?;
    if !quiet {
        let data = generate_synthetic(&config, config.seed)?;
        eprintln!("ground-truth eval loss {:.5}", data.truth_eval_loss());
        print_bias_summary(&table.analyze());
    }
    Ok(())
}

pub fn convergence(args: ConvergenceArgs) -> CmdResult {
    let config = build_config(&args.config, None)?;
    let quiet = args.quiet;
    let table = run_convergence_experiment_with(&config, args.m as usize, |run| {
        if !quiet {
            eprintln!("{} m={} seed={} done", run.label(), run.m, run.seed);
        }
    })?;
    let mut out = open_out(args.out.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// `ceil(log2(ceil(n / tau)))`.
fn expected_visits(n: usize, tau: usize) -> usize {
    let leaves = n.div_ceil(tau);
    leaves.next_power_of_two().trailing_zeros() as usize
}

pub fn bench(args: BenchArgs) -> CmdResult {
    let seed = resolve_seed(args.seed)?;
    let kind = parse_kernel(&args.kernel, args.alpha)?;
    let d = args.d as usize;
    let ns: Vec<usize> = args
        .n
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Failure::invalid(anyhow!("--n expects positive integers, got `{}`", args.n)))?;
    if ns.is_empty() {
        return Err(Failure::invalid(anyhow!("--n lists no class counts")));
    }
    let spec = KernelSpec::new(kind, d)?;
    let tau = args.tau.unwrap_or_else(|| default_leaf_capacity(&spec));
    let scale = 1.0 / (d as f64).sqrt();

    let mut writer = csv::Writer::from_writer(open_out(args.out.as_deref())?);
    writer.write_record([
        "n",
        "d",
        "kernel",
        "tau",
        "feature_dim",
        "leaves",
        "height",
        "expected_visits",
        "draws",
        "min_internal_visits",
        "max_internal_visits",
        "max_leaf_evals",
        "mean_leaf_evals",
        "build_ms",
        "ns_per_draw",
        "ns_per_update",
    ])?;
    for n in ns {
        let mut rng = stream(seed, n as u64);
        let embeddings = EmbeddingMatrix::random_normal(n, d, scale, &mut rng)?;
        let started = Instant::now();
        let mut tree = SamplingTree::build_with(embeddings, spec, tau, DEFAULT_FEATURE_CAP)?;
        let build_ms = started.elapsed().as_secs_f64() * 1e3;

        let queries = EmbeddingMatrix::random_normal(BENCH_QUERIES, d, scale, &mut rng)?;
        let (mut min_visits, mut max_visits, mut max_leaf, mut leaf_total) = (usize::MAX, 0, 0, 0u64);
        let started = Instant::now();
        for k in 0..args.draws {
            let query = tree.query(queries.row(k as usize % BENCH_QUERIES))?;
            let (_, trace) = query.sample_traced(&mut rng);
            min_visits = min_visits.min(trace.internal_visits);
            max_visits = max_visits.max(trace.internal_visits);
            max_leaf = max_leaf.max(trace.leaf_evals);
            leaf_total += trace.leaf_evals as u64;
        }
        let ns_per_draw = started.elapsed().as_nanos() as f64 / args.draws as f64;

        let updates = EmbeddingMatrix::random_normal(BENCH_QUERIES, d, scale, &mut rng)?;
        let started = Instant::now();
        for k in 0..args.draws {
            let class = rng.random_range(0..n);
            tree.update_embedding(class, updates.row(k as usize % BENCH_QUERIES))?;
        }
        let ns_per_update = started.elapsed().as_nanos() as f64 / args.draws as f64;

        writer.write_record([
            n.to_string(),
            d.to_string(),
            kind.to_string(),
            tree.leaf_capacity().to_string(),
            tree.feature_dim().to_string(),
            tree.leaf_count().to_string(),
            tree.height().to_string(),
            expected_visits(n, tree.leaf_capacity()).to_string(),
            args.draws.to_string(),
            min_visits.to_string(),
            max_visits.to_string(),
            max_leaf.to_string(),
            format!("{:.3}", leaf_total as f64 / args.draws as f64),
            format!("{build_ms:.3}"),
            format!("{ns_per_draw:.1}"),
            format!("{ns_per_update:.1}"),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn dump_config(args: DumpConfigArgs) -> CmdResult {
    let config = build_config(&args.config, args.m.as_deref())?;
    print!("{}", config.to_kv());
    Ok(())
}
