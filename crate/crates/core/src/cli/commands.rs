use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Days;

use runoff::data::{
    add_noisy_product, compute_norm_stats, load_dataset, synth_linear_reservoir, write_dataset, BasinRecord, DataLayout,
    SplitSpec,
};
use runoff::metrics::{
    cdf_series, report_from_simulations, simulate, summarize_ensemble, write_cdf_csv, write_report_csv,
    write_summary_csv, write_summary_table, Metric, MetricReport, ReplayOracle,
};
use runoff::tensor::{FaultGuard, OpKind, RngStream};
use runoff::train::{load_checkpoint, save_checkpoint, train_ensemble, Checkpoint};
use runoff::verify::gradient_suite;

use super::config::{LoadedConfig, RunConfig};
use super::manifest::{RunManifest, MANIFEST_FILE};
use super::{CliError, EvaluateArgs, GradcheckArgs, RunArgs};

fn load(args: &RunArgs) -> Result<LoadedConfig, CliError> {
    let mut loaded = LoadedConfig::load(args.config.as_deref())?;
    if !args.seeds.is_empty() {
        loaded.config.seeds = args.seeds.clone();
    }
    Ok(loaded)
}

fn config_snapshot(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
}

/// Fails on any existing target unless `force` is set.
fn guard_outputs(targets: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    match targets.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Usage(format!("{} already exists; pass --force to overwrite", p.display()))),
        None => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn generate_synthetic(args: &RunArgs) -> Result<(), CliError> {
    let mut loaded = LoadedConfig::load(args.config.as_deref())?;
    match args.seeds[..] {
        [] => {}
        [s] => loaded.config.synthetic.seed = s,
        _ => return Err(CliError::Usage("generate-synthetic takes a single --seed".into())),
    }
    let out = args.out.clone().unwrap_or_else(|| loaded.data_root());
    let syn = loaded.config.synthetic.clone();
    let rng = RngStream::new(syn.seed);
    let mut records = synth_linear_reservoir(syn.n_basins, syn.n_days, &syn.reservoir, &rng.split(0))?;
    let mut products = vec![syn.reservoir.product.clone()];
    if let Some(noisy) = &syn.noisy_product {
        add_noisy_product(&mut records, &syn.reservoir.product, noisy, syn.noise_std, &rng.split(1))?;
        products.push(noisy.clone());
    }

    let layout = DataLayout::new(&out);
    let config_path = out.join("config.toml");
    guard_outputs(&[layout.manifest(), layout.attributes(), config_path.clone(), out.join(MANIFEST_FILE)], args.force)?;
    create_dir(&out)?;
    let written = write_dataset(&layout, &records)?;

    // First quarter tests, the rest trains.
    let start = syn.reservoir.start;
    let n_test = (syn.n_days / 4).max(1);
    let day = |i: usize| start + Days::new(i as u64);
    let mut run = loaded.config.clone();
    run.data = Default::default();
    run.data.products = products;
    run.split = SplitSpec {
        test_start: day(0),
        test_end: day(n_test - 1),
        train_start: day(n_test),
        train_end: day(syn.n_days.max(n_test + 1) - 1),
    };
    run.out = Some("runs".into());
    let text = config_snapshot(&run)?;
    fs::write(&config_path, &text).map_err(|e| CliError::io(&config_path, e))?;

    let mut manifest = RunManifest::new("generate-synthetic", config_snapshot(&loaded.config)?, vec![syn.seed]);
    for p in written.iter().chain([&config_path]) {
        manifest.add(&out, p)?;
    }
    manifest.write(&out)?;
    eprintln!("wrote {} basins x {} days to {}", records.len(), syn.n_days, out.display());
    Ok(())
}

fn load_records(loaded: &LoadedConfig) -> Result<Vec<BasinRecord>, CliError> {
    let layout = loaded.validate_data()?;
    let records = load_dataset(&layout, &loaded.config.data.products)?;
    if records.is_empty() {
        return Err(CliError::Config("no basin has every requested forcing product".into()));
    }
    Ok(records)
}

pub fn checkpoint_name(ckpt_variant: &str, seed: u64) -> String {
    format!("{ckpt_variant}_seed{seed}.ckpt")
}

pub fn train(args: &RunArgs) -> Result<(), CliError> {
    let mut loaded = load(args)?;
    let out = loaded.out_dir(args.out.as_deref());
    loaded.config.out = Some(out.clone());
    let seeds = loaded.seeds()?;
    let cfg = &loaded.config;
    let variant = cfg.model.variant.name();
    let targets: Vec<PathBuf> = seeds
        .iter()
        .flat_map(|&s| [out.join(checkpoint_name(variant, s)), out.join(format!("{variant}_seed{s}_loss.csv"))])
        .chain([out.join(MANIFEST_FILE)])
        .collect();
    guard_outputs(&targets, args.force)?;

    let records = load_records(&loaded)?;
    let spec = cfg.model.spec(records[0].input_dim(), cfg.train.seq_len);
    spec.validate()?;
    cfg.train.validate()?;
    eprintln!(
        "training {variant} on {} basins, input_dim {}, seeds {seeds:?}",
        records.len(),
        spec.input_dim
    );
    let results = train_ensemble(&spec, &records, &cfg.split, &cfg.train, &seeds, cfg.parallel)?;

    create_dir(&out)?;
    let mut manifest = RunManifest::new("train", config_snapshot(cfg)?, seeds.clone());
    let mut first_error = None;
    for (&seed, result) in seeds.iter().zip(results) {
        match result {
            Ok(outcome) => {
                let ckpt = out.join(checkpoint_name(variant, seed));
                save_checkpoint(&outcome.checkpoint, &ckpt)?;
                let trace = out.join(format!("{variant}_seed{seed}_loss.csv"));
                write_file(&trace, |w| {
                    writeln!(w, "iteration,loss")?;
                    outcome.trace.iter().try_for_each(|(i, l)| writeln!(w, "{i},{l}"))
                })?;
                let last = outcome.trace.last().map_or(f64::NAN, |t| t.1);
                eprintln!("seed {seed}: final loss {last:.6} -> {}", ckpt.display());
                manifest.add(&out, &ckpt)?;
                manifest.add(&out, &trace)?;
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                first_error.get_or_insert(CliError::from(e));
            }
        }
    }
    manifest.write(&out)?;
    first_error.map_or(Ok(()), Err)
}

/// Sorted `.ckpt` files in `dir`.
fn find_checkpoints(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(CliError::Config(format!("no checkpoints in {}", dir.display())));
    }
    Ok(found)
}

fn check_dims(ckpt: &Checkpoint, path: &Path, records: &[BasinRecord]) -> Result<(), CliError> {
    let spec = ckpt.model.spec();
    let data_dim = records[0].input_dim();
    if data_dim != spec.input_dim {
        return Err(CliError::Config(format!(
            "input_dim mismatch: {} expects input_dim = {}, the configured data provides {data_dim} \
             (forcing columns + static attributes)",
            path.display(),
            spec.input_dim
        )));
    }
    if ckpt.stats.input_dim() != data_dim {
        return Err(CliError::Config(format!(
            "input_dim mismatch: normalization statistics in {} cover {} inputs, data provides {data_dim}",
            path.display(),
            ckpt.stats.input_dim()
        )));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let loaded = load(&args.run)?;
    let run_dir = loaded.out_dir(None);
    let out = args.run.out.clone().unwrap_or_else(|| run_dir.join("evaluation"));
    let records = load_records(&loaded)?;
    let opts = loaded.config.metrics;

    // (label, simulations)
    let mut members = Vec::new();
    let summary_label;
    let mut member_seeds = Vec::new();
    if args.replay_oracle {
        let cfg = &loaded.config;
        let stats = compute_norm_stats(&records, &cfg.split)?;
        for seed in loaded.seeds()? {
            let sims = simulate(&ReplayOracle, &records, &stats, &cfg.split, cfg.train.seq_len)?;
            members.push((format!("replay_oracle_seed{seed}"), sims));
            member_seeds.push(seed);
        }
        summary_label = "replay_oracle".to_string();
    } else {
        let paths = if args.checkpoints.is_empty() { find_checkpoints(&run_dir)? } else { args.checkpoints.clone() };
        let mut variants = Vec::new();
        for path in &paths {
            let ckpt = load_checkpoint(path)?;
            check_dims(&ckpt, path, &records)?;
            let sims = simulate(&ckpt.model, &records, &ckpt.stats, &ckpt.split, ckpt.model.spec().seq_len)?;
            let label = path.file_stem().map_or_else(|| "member".into(), |s| s.to_string_lossy().into_owned());
            eprintln!("evaluated {label}");
            let v = ckpt.model.spec().variant.name();
            if !variants.contains(&v) {
                variants.push(v);
            }
            member_seeds.push(ckpt.seed);
            members.push((label, sims));
        }
        summary_label = variants.join("+");
    }

    let mut targets = vec![out.join("summary.txt"), out.join("summary.csv"), out.join(MANIFEST_FILE)];
    for (label, _) in &members {
        targets.push(out.join(format!("report_{label}.csv")));
        targets.extend(Metric::ALL.iter().map(|m| out.join(format!("cdf_{}_{label}.csv", m.name()))));
    }
    guard_outputs(&targets, args.run.force)?;
    create_dir(&out)?;

    let mut manifest = RunManifest::new("evaluate", config_snapshot(&loaded.config)?, member_seeds);
    let mut reports: Vec<MetricReport> = Vec::new();
    for (label, sims) in &members {
        let report = report_from_simulations(sims, &opts);
        let path = out.join(format!("report_{label}.csv"));
        write_file(&path, |w| write_report_csv(&report, w))?;
        manifest.add(&out, &path)?;
        for m in Metric::ALL {
            let series = cdf_series(&report.values(m), m.name());
            let path = out.join(format!("cdf_{}_{label}.csv", m.name()));
            write_file(&path, |w| write_cdf_csv(&series, w))?;
            manifest.add(&out, &path)?;
        }
        reports.push(report);
    }
    let summary = summarize_ensemble(&reports)?;
    let txt = out.join("summary.txt");
    write_file(&txt, |w| write_summary_table(&summary, &summary_label, w))?;
    let csv = out.join("summary.csv");
    write_file(&csv, |w| write_summary_csv(&summary, w))?;
    manifest.add(&out, &txt)?;
    manifest.add(&out, &csv)?;
    manifest.write(&out)?;

    let mut stdout = std::io::stdout().lock();
    write_summary_table(&summary, &summary_label, &mut stdout).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be > 0, got {}", args.tol)));
    }
    let _fault = match &args.inject_fault {
        None => None,
        Some(name) => {
            let kind = OpKind::from_name(name).ok_or_else(|| {
                let names: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Usage(format!("unknown op `{name}`; expected one of {}", names.join(", ")))
            })?;
            Some(FaultGuard::inject(kind))
        }
    };
    let rows = gradient_suite(args.tol);
    println!("{:<28} {:>12}  result", "check", "max_rel_err");
    let mut worst: Option<(&str, String, f64)> = None;
    for row in &rows {
        let (err, shown) = match &row.outcome {
            Ok(r) => (r.max_rel_error, format!("{:>12.3e}", r.max_rel_error)),
            Err(_) => (f64::INFINITY, format!("{:>12}", "error")),
        };
        println!("{:<28} {shown}  {}", row.name, if row.passed() { "PASS" } else { "FAIL" });
        if !row.passed() && worst.as_ref().map_or(true, |w| err > w.2) {
            let detail = match &row.outcome {
                Ok(r) => r.to_string(),
                Err(e) => e.clone(),
            };
            worst = Some((&row.name, detail, err));
        }
    }
    let failed = rows.iter().filter(|r| !r.passed()).count();
    match worst {
        None => {
            println!("all {} checks passed (tol {:.0e})", rows.len(), args.tol);
            Ok(())
        }
        Some((name, detail, _)) => Err(CliError::Verification(format!(
            "{failed} of {} gradient checks failed; worst: {name}: {detail}",
            rows.len()
        ))),
    }
}
