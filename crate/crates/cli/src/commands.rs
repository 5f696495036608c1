use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use cce_core::harness::{record_suite, severity_sweep, suite_specs, summarize, EmbeddingFile, SuiteRecord};
use cce_core::scenarios::{collect_ood_mistakes, generate_world};
use cce_core::{
    build_bank, cce_batch, cce_explain, cce_univariate, css_ranking, BaselineReport, CceError, ConceptBank,
    ConceptExamples, ExplanationReport, ModelHead, RngState, SvmConfig, Vector,
};
use serde::{Deserialize, Serialize};

use crate::args::*;

/// Writes `bytes` to `out`, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(v).map_err(CceError::from)?)
}

#[derive(Debug, Deserialize)]
struct ConceptSource {
    name: String,
    positives: PathBuf,
    negatives: PathBuf,
}

pub fn learn_bank(a: &LearnBankArgs, seed: u64) -> anyhow::Result<()> {
    let text = fs::read(&a.concepts).with_context(|| format!("reading {}", a.concepts.display()))?;
    let sources: Vec<ConceptSource> = serde_json::from_slice(&text).map_err(CceError::from)?;
    let base = a.concepts.parent().unwrap_or(Path::new("."));
    let examples = sources
        .iter()
        .map(|s| {
            Ok(ConceptExamples {
                name: s.name.clone(),
                positives: EmbeddingFile::read(base.join(&s.positives))?.embeddings,
                negatives: EmbeddingFile::read(base.join(&s.negatives))?.embeddings,
            })
        })
        .collect::<cce_core::Result<Vec<_>>>()?;
    let svm = SvmConfig {
        lambda: a.lambda,
        epochs: a.epochs,
    };
    let bank = build_bank(&examples, a.threshold, a.split, &RngState::new(seed), &svm)?;
    eprintln!("kept {} of {} concepts", bank.len(), examples.len());
    bank.save(&a.out)?;
    Ok(())
}

struct Loaded {
    head: ModelHead,
    bank: ConceptBank,
    /// (sample id, embedding, label)
    samples: Vec<(String, Vector, usize)>,
}

fn load(inputs: &ModelInputs) -> anyhow::Result<Loaded> {
    check_top_k(inputs.top_k)?;
    let ctx = |p: &Path| format!("loading {}", p.display());
    let head = ModelHead::load(&inputs.head).with_context(|| ctx(&inputs.head))?;
    let bank = ConceptBank::load(&inputs.bank).with_context(|| ctx(&inputs.bank))?;
    let file = EmbeddingFile::read(&inputs.embeddings).with_context(|| ctx(&inputs.embeddings))?;
    let pairs = file.samples()?;
    let mut samples: Vec<(String, Vector, usize)> = file
        .sample_ids
        .iter()
        .cloned()
        .zip(pairs)
        .map(|(id, (e, y))| (id, e, y))
        .collect();
    if let Some(i) = inputs.index {
        if i >= samples.len() {
            return Err(CceError::IndexOutOfRange { index: i, len: samples.len() }.into());
        }
        samples = vec![samples.swap_remove(i)];
    }
    if samples.is_empty() {
        return Err(CceError::InvalidInput("embedding file has no rows".into()).into());
    }
    Ok(Loaded { head, bank, samples })
}

pub fn explain(a: &ExplainArgs) -> anyhow::Result<()> {
    let cfg = a.optim.config()?;
    let l = load(&a.inputs)?;
    let mut reports = Vec::with_capacity(l.samples.len());
    for (id, e, y) in &l.samples {
        let t = Instant::now();
        let r = cce_explain(e, *y, &l.head, &l.bank, &cfg)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        reports.push(ExplanationReport::new(id.clone(), *y, &r, a.inputs.top_k, ms));
    }
    emit(a.inputs.out.as_deref(), &to_json(&reports)?)
}

pub fn explain_batch(a: &ExplainArgs) -> anyhow::Result<()> {
    let cfg = a.optim.config()?;
    let l = load(&a.inputs)?;
    let samples: Vec<(Vector, usize)> = l.samples.iter().map(|(_, e, y)| (e.clone(), *y)).collect();
    let label = samples[0].1;
    let t = Instant::now();
    let r = cce_batch(&samples, &l.head, &l.bank, &cfg)?;
    let ms = t.elapsed().as_secs_f64() * 1e3;
    let report = ExplanationReport::new("batch", label, &r, a.inputs.top_k, ms);
    emit(a.inputs.out.as_deref(), &to_json(&report)?)
}

pub fn baseline(a: &BaselineArgs, css: bool) -> anyhow::Result<()> {
    let l = load(&a.inputs)?;
    let method = if css { "css" } else { "cce_univariate" };
    let reports = l
        .samples
        .iter()
        .map(|(id, e, y)| {
            let ranking = if css {
                css_ranking(e, *y, &l.head, &l.bank)?
            } else {
                cce_univariate(e, *y, &l.head, &l.bank)?
            };
            Ok(BaselineReport::new(id.clone(), *y, method, &ranking, a.inputs.top_k))
        })
        .collect::<cce_core::Result<Vec<_>>>()?;
    emit(a.inputs.out.as_deref(), &to_json(&reports)?)
}

#[derive(Debug, Serialize)]
struct WorldSummary<'a> {
    target_concept: &'a str,
    confounded_class: usize,
    lookalike_class: usize,
    bank_size: usize,
    ood_samples: usize,
    ood_mistakes: usize,
    accuracy_with_concept: f64,
    accuracy_without_concept: f64,
    warnings: &'a [String],
}

pub fn gen_scenario(a: &GenScenarioArgs, seed: u64) -> anyhow::Result<()> {
    let spec = a.scenario.spec(seed)?;
    let world = generate_world(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let dir = &a.out;
    fs::write(dir.join("spec.json"), to_json(&spec)?)?;
    world.trained_head.save(dir.join("head.json"))?;
    world.bank.save(dir.join("bank.json"))?;

    let write_set = |name: &str, set: &[cce_core::scenarios::LabeledEmbedding]| -> cce_core::Result<()> {
        let rows = set.iter().map(|s| s.embedding.clone()).collect();
        let labels = set.iter().map(|s| s.label).collect();
        EmbeddingFile::labeled(rows, labels)?.write(dir.join(name))
    };
    write_set("train.emb", &world.train_set)?;
    write_set("ood.emb", &world.ood_set)?;

    let mistakes = collect_ood_mistakes(&world);
    if !mistakes.is_empty() {
        // ids point back into ood.emb
        let ids: Vec<String> = world
            .ood_set
            .iter()
            .enumerate()
            .filter(|(_, s)| world.trained_head.forward(&s.embedding).map(|p| p.predicted_class != s.label).unwrap_or(false))
            .map(|(i, _)| i.to_string())
            .take(mistakes.len())
            .collect();
        let (rows, labels): (Vec<_>, Vec<_>) = mistakes.iter().cloned().unzip();
        let mut f = EmbeddingFile::labeled(rows, labels)?;
        f.sample_ids = ids;
        f.write(dir.join("mistakes.emb"))?;
    }

    let (with, without) = world.confounder_accuracy(200, seed);
    let summary = WorldSummary {
        target_concept: world.target_concept(),
        confounded_class: spec.confounded_class,
        lookalike_class: world.geometry.lookalike_class(),
        bank_size: world.bank.len(),
        ood_samples: world.ood_set.len(),
        ood_mistakes: mistakes.len(),
        accuracy_with_concept: with,
        accuracy_without_concept: without,
        warnings: &world.warnings,
    };
    let bytes = to_json(&summary)?;
    fs::write(dir.join("world.json"), &bytes)?;
    emit(None, &bytes)
}

#[derive(Debug, Serialize)]
struct SweepReport {
    points: Vec<cce_core::harness::SweepPoint>,
}

pub fn run_suite(a: &RunSuiteArgs, seed: u64) -> anyhow::Result<()> {
    let cfg = a.optim.config()?;
    let methods = a.methods()?;
    if a.scenarios == 0 {
        return Err(CceError::InvalidInput("--scenarios must be at least 1".into()).into());
    }
    let base = a.scenario.spec(seed)?;
    let specs = suite_specs(&base, a.scenarios);
    let record = record_suite(&specs, &methods, &cfg)?;
    let summary = summarize(&record)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    // all writing happens here, after the parallel work
    if let Some(p) = &a.records {
        fs::write(p, to_json(&record)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.table {
        fs::write(p, summary.to_table()).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(a.out.as_deref(), &to_json(&summary)?)?;
    if !a.sweep.is_empty() {
        let points = severity_sweep(&specs, &a.sweep, &cfg)?;
        eprintln!("severity\tscenarios\tmedian_rank\tprec@3");
        for p in &points {
            eprintln!("{}\t{}\t{:.3}\t{:.4}", p.severity, p.scenarios_used, p.mean_median_rank, p.mean_precision_at_3);
        }
        if let Some(out) = &a.out {
            let path = out.with_extension("sweep.json");
            fs::write(&path, to_json(&SweepReport { points })?)?;
        }
    }
    Ok(())
}

pub fn export_report(a: &ExportReportArgs) -> anyhow::Result<()> {
    let text = fs::read(&a.records).with_context(|| format!("reading {}", a.records.display()))?;
    let record: SuiteRecord = serde_json::from_slice(&text).map_err(CceError::from)?;
    let summary = summarize(&record)?;
    if let Some(p) = &a.table {
        fs::write(p, summary.to_table()).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(a.out.as_deref(), &to_json(&summary)?)
}
