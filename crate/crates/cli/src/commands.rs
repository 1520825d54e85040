use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use dyad_core::config::KvConfig;
use dyad_core::eval::{self, GridConfig, GridRequest};
use dyad_core::learn::ModelKind;
use dyad_core::model::{Gender, Modality, Target};
use dyad_core::pipeline::{
    self, Corpus, ExtractOptions, Funnel, GridOptions, Manifest, PipelineOptions, FUNNEL_JSON, LABELS_CSV,
    METRICS_JSON, MODEL_JSON, PREPROCESS_REPORT, QA_REPORT,
};
use dyad_core::qa::{self, RatingsMatrix, ICC_VARIANT};
use dyad_core::sim::{generate_world, SimConfig};

use crate::{Failure, GridArgs};

pub const SEED_ENV: &str = "DYAD_SEED";

const GRID_KEYS: [&str; 7] = [
    "seed",
    "grid.svm_c",
    "grid.svm_epochs",
    "grid.rf_trees",
    "grid.rf_depth",
    "grid.models",
    "grid.balanced",
];

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<KvConfig, Failure> {
    if !path.is_file() {
        return Err(usage(format!("config file {} does not exist", path.display())));
    }
    Ok(KvConfig::load(path)?)
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Failure>
where
    T::Err: ToString,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| usage(format!("{what}: {}", e.to_string()))))
        .collect()
}

fn parse_depth(raw: &str) -> Result<Option<usize>, Failure> {
    match raw.trim() {
        "none" => Ok(None),
        d => d
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("grid.rf_depth: expected `none` or an integer, got `{d}`"))),
    }
}

fn parse_rows(raw: &str) -> Result<Vec<Vec<Modality>>, Failure> {
    let rows = raw
        .split(',')
        .map(|row| {
            row.split('+')
                .map(|m| m.trim().parse::<Modality>().map_err(usage))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(usage("--modalities is empty"));
    }
    Ok(rows)
}

fn both_or<T: FromStr + Copy>(raw: &str, all: &[T]) -> Result<Vec<T>, Failure>
where
    T::Err: ToString,
{
    if raw == "both" {
        Ok(all.to_vec())
    } else {
        Ok(vec![raw.parse::<T>().map_err(|e| usage(e.to_string()))?])
    }
}

/// Resolves the evaluation grid from the optional config file and flags.
/// The seed comes from `--seed`, then DYAD_SEED, then the file, then 0.
pub fn grid_options(args: &GridArgs) -> Result<(GridOptions, Manifest), Failure> {
    let mut manifest = Manifest::default();
    let kv = match &args.config {
        Some(path) => {
            let kv = load_config(path)?;
            kv.reject_unknown(|k| GRID_KEYS.contains(&k))?;
            manifest.add_file("config", path)?;
            kv
        }
        None => KvConfig::default(),
    };
    let mut grid = GridConfig::default();
    if let Some(raw) = kv.raw("grid.svm_c") {
        grid.svm_c = parse_list(raw, "grid.svm_c")?;
    }
    kv.read_into("grid.svm_epochs", &mut grid.svm_epochs)?;
    if let Some(raw) = kv.raw("grid.rf_trees") {
        grid.rf_trees = parse_list(raw, "grid.rf_trees")?;
    }
    if let Some(raw) = kv.raw("grid.rf_depth") {
        grid.rf_depth = raw.split(',').map(parse_depth).collect::<Result<_, _>>()?;
    }
    if let Some(raw) = kv.raw("grid.models") {
        grid.kinds = parse_list(raw, "grid.models")?;
    }
    kv.read_into("grid.balanced", &mut grid.balanced)?;
    if grid.cells().is_empty() {
        return Err(usage("the hyperparameter grid is empty"));
    }
    let seed = match (args.seed, env_seed()?) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => kv.get("seed")?.unwrap_or(0),
    };
    let rows = match &args.modalities {
        Some(raw) => parse_rows(raw)?,
        None => eval::modality_rows(),
    };
    let opts = GridOptions {
        genders: both_or(&args.gender, &[Gender::Male, Gender::Female])?,
        request: GridRequest {
            targets: both_or(&args.target, &Target::ALL)?,
            rows,
            grid,
            seed,
        },
    };
    pipeline::describe_grid(&mut manifest, &opts);
    Ok((opts, manifest))
}

pub fn feature_options(acoustic: &str, linguistic: &str, text_scope: &str) -> Result<ExtractOptions, Failure> {
    Ok(ExtractOptions {
        acoustic: acoustic.parse().map_err(usage)?,
        linguistic: linguistic.parse().map_err(usage)?,
        text_scope: text_scope.parse().map_err(usage)?,
        ..ExtractOptions::default()
    })
}

fn create_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn print_funnel(f: &Funnel) {
    println!(
        "sessions {}, usable signals {}, selected {}{}",
        f.sessions,
        f.usable_signals,
        f.selected,
        f.extracted.map(|n| format!(", extracted {n}")).unwrap_or_default()
    );
}

fn write_funnel(out: &Path, funnel: &Funnel, manifest: &Manifest) -> Result<(), Failure> {
    let value = serde_json::json!({ "inputs": manifest.flat(), "funnel": funnel });
    Ok(pipeline::write_json(&out.join(FUNNEL_JSON), &value)?)
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>, couples: Option<u32>, days: Option<u32>) -> Result<(), Failure> {
    let mut kv = load_config(config)?;
    if let Some(s) = seed.or(env_seed()?) {
        kv.set("seed", s);
    }
    if let Some(n) = couples {
        kv.set("n_couples", n);
    }
    if let Some(d) = days {
        kv.set("days", d);
    }
    let cfg = SimConfig::from_kv(&kv)?;
    create_out(out)?;
    let world = generate_world(&cfg, out)?;
    let mut manifest = Manifest::default();
    manifest.add_file("config", config)?;
    manifest.set("seed", cfg.seed);
    manifest.set("n_couples", cfg.n_couples);
    manifest.set("days", cfg.days);
    manifest.write(out)?;
    let retained = world.sessions.iter().filter(|s| s.audio.is_some()).count();
    println!(
        "{} couples over {} days: {} recordings, {retained} with audio, {} protocol errors",
        cfg.n_couples,
        cfg.days,
        world.sessions.len(),
        world.run.protocol_errors()
    );
    Ok(())
}

fn select_and_extract(corpus_root: &Path, out: &Path, opts: &ExtractOptions) -> Result<(pipeline::Extraction, Manifest), Failure> {
    create_out(out)?;
    let corpus = Corpus::load(corpus_root)?;
    let selection = corpus.select();
    let extraction = pipeline::extract_features(&corpus, &selection.samples, opts)?;
    let funnel = Funnel::new(corpus.sessions.len(), &selection, Some(&extraction));
    let mut manifest = Manifest::default();
    manifest.add_corpus(corpus_root)?;
    pipeline::add_ingest_inputs(&mut manifest, opts)?;
    for (k, v) in opts.describe() {
        manifest.set(&k, v);
    }
    manifest.write(out)?;
    write_funnel(out, &funnel, &manifest)?;
    pipeline::write_preprocess_report(&out.join(PREPROCESS_REPORT), &selection, &extraction.checks)?;
    print_funnel(&funnel);
    Ok((extraction, manifest))
}

/// Selection and signal conditioning only; no features are computed.
pub fn preprocess(corpus: &Path, out: &Path) -> Result<(), Failure> {
    let opts = ExtractOptions {
        modalities: BTreeSet::new(),
        ..ExtractOptions::default()
    };
    select_and_extract(corpus, out, &opts).map(|_| ())
}

pub fn extract(corpus: &Path, out: &Path, opts: &ExtractOptions, modalities: &str) -> Result<(), Failure> {
    let opts = ExtractOptions {
        modalities: parse_list(modalities, "--modalities")?.into_iter().collect(),
        ..opts.clone()
    };
    if opts.modalities.is_empty() {
        return Err(usage("--modalities is empty"));
    }
    let (extraction, _) = select_and_extract(corpus, out, &opts)?;
    pipeline::write_dataset(out, &extraction.samples, &opts)?;
    Ok(())
}

fn add_dataset(manifest: &mut Manifest, dir: &Path) -> Result<(), Failure> {
    manifest.add_file(LABELS_CSV, &dir.join(LABELS_CSV))?;
    for m in Modality::ALL {
        let name = pipeline::features_file(m);
        let path = dir.join(&name);
        if path.exists() {
            manifest.add_file(&name, &path)?;
        }
    }
    Ok(())
}

fn read_dataset(dir: &Path) -> Result<Vec<dyad_core::model::DatasetSample>, Failure> {
    if !dir.join(LABELS_CSV).is_file() {
        return Err(usage(format!("{} has no {LABELS_CSV}; run `extract` first", dir.display())));
    }
    Ok(pipeline::read_dataset(dir)?)
}

pub fn train(dataset: &Path, out: &Path, args: &GridArgs, model: &str) -> Result<(), Failure> {
    let kind: ModelKind = model.parse().map_err(usage)?;
    let (opts, mut manifest) = grid_options(args)?;
    let ([gender], [target], [mods]) = (
        opts.genders.as_slice(),
        opts.request.targets.as_slice(),
        opts.request.rows.as_slice(),
    ) else {
        return Err(usage("train needs exactly one --gender, one --target and one --modalities row"));
    };
    let samples = read_dataset(dataset)?;
    add_dataset(&mut manifest, dataset)?;
    manifest.set("model", kind);
    let trained = pipeline::train_model(&samples, *gender, *target, mods, &opts.request.grid, kind, opts.request.seed)?;
    create_out(out)?;
    manifest.write(out)?;
    let model_json: serde_json::Value = serde_json::from_str(&trained.to_json()?).map_err(|e| Failure::Runtime(e.to_string()))?;
    pipeline::write_json(
        &out.join(MODEL_JSON),
        &serde_json::json!({ "inputs": manifest.flat(), "model": model_json }),
    )?;
    println!(
        "trained {kind} for {gender} {} on {}",
        target.as_str(),
        eval::modality_label(mods)
    );
    Ok(())
}

fn evaluate_and_write(samples: &[dyad_core::model::DatasetSample], out: &Path, opts: &GridOptions, manifest: &Manifest) -> Result<(), Failure> {
    let cells = pipeline::evaluate(samples, opts)?;
    pipeline::write_metrics(out, &cells, manifest)?;
    print!("{}", eval::format_table(&cells));
    Ok(())
}

pub fn eval(dataset: &Path, out: &Path, args: &GridArgs) -> Result<(), Failure> {
    let (opts, mut manifest) = grid_options(args)?;
    let samples = read_dataset(dataset)?;
    add_dataset(&mut manifest, dataset)?;
    create_out(out)?;
    manifest.write(out)?;
    evaluate_and_write(&samples, out, &opts, &manifest)
}

pub fn pipeline(corpus: &Path, out: &Path, extract: ExtractOptions, args: &GridArgs) -> Result<(), Failure> {
    let (grid, _) = grid_options(args)?;
    let result = pipeline::run_pipeline(corpus, out, &PipelineOptions { extract, grid })?;
    print_funnel(&result.funnel);
    print!("{}", eval::format_table(&result.cells));
    Ok(())
}

pub fn qa(corpus: Option<&Path>, out: Option<&Path>, icc_csv: Option<&Path>) -> Result<(), Failure> {
    if corpus.is_none() && icc_csv.is_none() {
        return Err(usage("qa needs --corpus and --out, or --icc"));
    }
    if let Some(path) = icc_csv {
        let file = fs::File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
        let ratings = RatingsMatrix::read_csv(file)?;
        println!(
            "{ICC_VARIANT}: {:.4} ({} items, {} raters)",
            qa::icc(&ratings),
            ratings.items(),
            ratings.raters()
        );
    }
    if let (Some(root), Some(out)) = (corpus, out) {
        let corpus = Corpus::load(root)?;
        let rows = pipeline::run_qa(&corpus)?;
        create_out(out)?;
        let mut manifest = Manifest::default();
        manifest.add_corpus(root)?;
        manifest.write(out)?;
        pipeline::write_qa(&out.join(QA_REPORT), &rows)?;
        let flagged: BTreeSet<&str> = rows
            .iter()
            .filter(|r| r.check.starts_with("violation:"))
            .map(|r| r.session_id.as_str())
            .collect();
        println!("{} violations in {} sessions", pipeline::violations(&rows), flagged.len());
        for id in flagged {
            println!("flagged {id}");
        }
    }
    Ok(())
}

pub fn report(out: &Path) -> Result<(), Failure> {
    let read = |name: &str| -> Result<Option<serde_json::Value>, Failure> {
        let path = out.join(name);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    };
    let funnel = read(FUNNEL_JSON)?;
    let metrics = read(METRICS_JSON)?;
    if funnel.is_none() && metrics.is_none() {
        return Err(Failure::Runtime(format!(
            "{} holds neither {FUNNEL_JSON} nor {METRICS_JSON}",
            out.display()
        )));
    }
    if let Some(f) = funnel {
        let f: Funnel = serde_json::from_value(f["funnel"].clone()).map_err(|e| Failure::Runtime(e.to_string()))?;
        print_funnel(&f);
        for (reason, n) in &f.rejections {
            println!("  rejected {reason}: {n}");
        }
        for (reason, n) in &f.dropped {
            println!("  dropped {reason}: {n}");
        }
    }
    if let Some(m) = metrics {
        print!("{}", pipeline::table_from_metrics(&m)?);
    }
    Ok(())
}
