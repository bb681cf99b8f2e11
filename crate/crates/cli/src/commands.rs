use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use convctx::corpus::{corpus_stats, gap_histogram, load_corpus, save_corpus, transition_matrix, GapDirection};
use convctx::evaluation::{self, combine_folds, evaluate, EvalReport, PredictionSet};
use convctx::experiment::ExperimentConfig;
use convctx::model::checkpoint_bytes;
use convctx::synthgen::{bayes_optimal_ua, exact_bayes_ua, generate, GeneratorSpec};
use convctx::training::{cross_validate, hierarchical_cross_validate, make_folds, token_sweep, with_jobs};
use convctx::Corpus;

use crate::rundir::StagedDir;

pub struct Context {
    pub out_root: Option<PathBuf>,
    pub verbose: bool,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Train,
    Sweep,
    Hier,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Train => "train",
            Kind::Sweep => "sweep",
            Kind::Hier => "hier",
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(ctx: &Context, spec: Option<&Path>, n_dialogues: usize, seed: u64, out: &Path) -> Result<()> {
    let spec = match spec {
        Some(p) => GeneratorSpec::load(p)?,
        None => GeneratorSpec::default(),
    };
    if n_dialogues == 0 {
        eprintln!("warning: n_dialogues = 0, writing an empty corpus");
    }
    let corpus = generate(&spec, n_dialogues, seed)?;
    if let Some(p) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    save_corpus(&corpus, out)?;
    write_file(&out.with_extension("spec.toml"), spec.to_toml())?;
    ctx.log("computing Bayes oracle");
    let oracle = match exact_bayes_ua(&spec) {
        Ok(r) => r,
        Err(_) => bayes_optimal_ua(&spec, true, 200_000, seed)?,
    };
    write_file(&out.with_extension("oracle.json"), json(&oracle)?)?;
    println!(
        "{} dialogues, {} segments; Bayes UA without context {:.4}, with previous segment {:.4}",
        corpus.dialogues().len(),
        corpus.n_segments(),
        oracle.bayes_ua_no_context,
        oracle.bayes_ua_with_prev_context.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn stats(corpus: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let mut buf = Vec::new();
    corpus_stats(&corpus)?.write_csv(&mut buf)?;
    write_file(out, buf)
}

pub fn transitions(corpus: &Path, out: &Path, min_count: u64) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let mut buf = Vec::new();
    transition_matrix(&corpus, min_count).write_csv(&mut buf)?;
    write_file(out, buf)
}

pub fn gaps(corpus: &Path, out: &Path, bin_width: f64) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    for (dir, name) in [
        (GapDirection::PreviousToTarget, "gaps_previous.csv"),
        (GapDirection::TargetToNext, "gaps_next.csv"),
    ] {
        let mut buf = Vec::new();
        gap_histogram(&corpus, dir, bin_width)?.write_csv(&mut buf)?;
        write_file(&out.join(name), buf)?;
    }
    Ok(())
}

fn output_root(ctx: &Context, cfg: &ExperimentConfig) -> PathBuf {
    ctx.out_root
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os("CONVCTX_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Predictions, the evaluation report and its CSV files under `rel`.
fn write_evaluation(stage: &StagedDir, rel: &str, preds: &PredictionSet, corpus: &Corpus) -> Result<EvalReport> {
    let report = evaluate(preds, Some(corpus))?;
    let dir = stage.path().join(rel);
    let mut csv = Vec::new();
    preds.write_csv(&mut csv)?;
    write_file(&dir.join("predictions.json"), json(preds)?)?;
    write_file(&dir.join("predictions.csv"), csv)?;
    write_file(&dir.join("report.json"), json(&report)?)?;
    evaluation::report(&report, None, &dir)?;
    Ok(report)
}

pub fn run(ctx: &Context, kind: Kind, config: &Path, seed: Option<u64>, jobs: usize) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(c) = &cfg.corpus {
        cfg.corpus = Some(fs::canonicalize(c).with_context(|| format!("corpus {}", c.display()))?);
    }
    let hash = cfg.hash();
    let dest = output_root(ctx, &cfg).join(format!("{}-{}", kind.name(), &hash[..12]));
    let corpus = cfg.corpus()?;
    let plan = make_folds(&corpus, cfg.folds, cfg.seed)?;
    ctx.log(format!("{} segments, {} folds", corpus.n_segments(), plan.k));

    let stage = StagedDir::new(dest)?;
    stage.write("config.toml", cfg.to_toml())?;
    stage.write("folds.json", json(&plan)?)?;
    match kind {
        Kind::Train => {
            let cv = with_jobs(jobs, || cross_validate(&corpus, &plan, &cfg.train_config()))??;
            for (r, p) in cv.records.iter().zip(&cv.params) {
                stage.write(format!("records/fold{}.json", r.fold), json(r)?)?;
                stage.write(format!("checkpoints/fold{}.ckpt", r.fold), checkpoint_bytes(p))?;
            }
            let report = write_evaluation(&stage, "", &cv.combined, &corpus)?;
            println!("UA {:.4}", report.ua);
        }
        Kind::Sweep => {
            let results = with_jobs(jobs, || token_sweep(&corpus, &plan, &cfg.sweep.windows, &cfg.train_config()))??;
            let mut rows = Vec::new();
            for (row, cv) in &results {
                let rel = format!("window_{}_{}", row.n_prev, row.n_next);
                for r in &cv.records {
                    stage.write(format!("{rel}/records/fold{}.json", r.fold), json(r)?)?;
                }
                write_evaluation(&stage, &rel, &cv.combined, &corpus)?;
                println!("prev {:>4} next {:>4}  UA {:.4}", row.n_prev, row.n_next, row.ua);
                rows.push(*row);
            }
            stage.write("sweep.csv", evaluation::sweep_csv(&rows)?)?;
        }
        Kind::Hier => {
            let phase1 = cfg.phase1_config();
            let phase2 = cfg.train_config();
            let h = with_jobs(jobs, || hierarchical_cross_validate(&corpus, &plan, &phase1, &phase2))??;
            for r in &h.records {
                stage.write(format!("records/fold{}.json", r.phase1.fold), json(r)?)?;
            }
            write_evaluation(&stage, "context", &h.context, &corpus)?;
            write_evaluation(&stage, "control", &h.control, &corpus)?;
            let hashes: Vec<String> = h.records.iter().map(|r| r.phase1_checkpoint.clone()).collect();
            stage.write("phase1_checkpoints.txt", hashes.join("\n") + "\n")?;
            println!("context UA {:.4}, control UA {:.4}", h.context_ua, h.control_ua);
        }
    }
    let dest = stage.commit()?;
    println!("{}", dest.display());
    Ok(())
}

fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn eval(predictions: &[PathBuf], corpus: Option<&Path>, out: &Path) -> Result<()> {
    let sets = predictions.iter().map(|p| read_predictions(p)).collect::<Result<Vec<_>>>()?;
    let combined = combine_folds(&sets)?;
    let corpus = corpus.map(load_corpus).transpose()?;
    let report = evaluate(&combined, corpus.as_ref())?;
    evaluation::report(&report, None, out)?;
    write_file(&out.join("report.json"), json(&report)?)?;
    println!("UA {:.4} over {} predictions", report.ua, report.n_predictions);
    Ok(())
}

fn prediction_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("predictions.json").is_file() {
        out.push(dir.to_path_buf());
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        prediction_dirs(&d, out)?;
    }
    Ok(())
}

pub fn report(run: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(&run.join("config.toml"))?;
    let corpus = cfg.corpus()?;
    let mut dirs = Vec::new();
    prediction_dirs(run, &mut dirs)?;
    if dirs.is_empty() {
        bail!("{} contains no predictions.json", run.display());
    }
    for d in dirs {
        let preds = read_predictions(&d.join("predictions.json"))?;
        let report = evaluate(&preds, Some(&corpus))?;
        evaluation::report(&report, None, &d)?;
        write_file(&d.join("report.json"), json(&report)?)?;
        println!("{}: UA {:.4}", d.display(), report.ua);
    }
    Ok(())
}
