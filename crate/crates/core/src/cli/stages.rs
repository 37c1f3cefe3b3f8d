//! One function per subcommand. Each stage validates its inputs before
//! writing anything, saves checkpoints atomically and ends with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::{file_checksum, generator_checkpoint, teacher_checkpoint, Checkpoint};
use crate::corpus::{
    build_vocab, generate_synthetic_corpus, load_lexicon, read_corpus, split_train_dev, tokenize, write_corpus,
    EncodedRecipe, EventLexicon, Grammar, RecipeRecord, SegmentedDoc, Vocab,
};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_corpus;
use crate::generator::{pretrain, GeneratorParams, PretrainConfig};
use crate::policy::{train_policy, PolicyConfig, RewardKind};
use crate::seeding::{stream, PURPOSE_SAMPLE};
use crate::teacher::{train_teacher, Teacher, TeacherConfig, TeacherKind};

use super::config::{DecodeMode, RunConfig};
use super::rundir::{JsonLines, Manifest, RunDir};

/// Lexicon covering the verbs of the synthetic kitchen grammar.
pub const KITCHEN_LEXICON: &str = include_str!("../../data/kitchen_lexicon.tsv");

/// One line of a generations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub title: String,
    pub generated: String,
    pub gold: String,
}

struct Stage<'c> {
    name: &'static str,
    cfg: &'c RunConfig,
    config: serde_json::Value,
    dir: RunDir,
    started: Instant,
    outputs: Vec<String>,
}

impl<'c> Stage<'c> {
    /// Takes the output lock. Returns `None` when an identical run already
    /// completed in the same directory.
    fn open(name: &'static str, cfg: &'c RunConfig) -> Result<Option<Self>> {
        let dir = RunDir::acquire(&cfg.out_dir)?;
        let config = cfg.to_json();
        if dir.completed(name, &config).is_some() {
            eprintln!("{name}: outputs in {} are up to date", cfg.out_dir.display());
            return Ok(None);
        }
        Ok(Some(Stage {
            name,
            cfg,
            config,
            dir,
            started: Instant::now(),
            outputs: Vec::new(),
        }))
    }

    /// Configuration stored inside checkpoints; the output location is left
    /// out so reruns elsewhere produce identical bytes.
    fn model_config(&self) -> serde_json::Value {
        let mut c = self.config.clone();
        if let Some(m) = c.as_object_mut() {
            m.remove("out_dir");
        }
        c
    }

    fn output(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.dir.path(file)
    }

    fn finish(self, dev_scores: serde_json::Value) -> Result<()> {
        let mut checksums = BTreeMap::new();
        for f in &self.outputs {
            checksums.insert(f.clone(), file_checksum(&self.dir.path(f))?);
        }
        let m = Manifest {
            stage: self.name.to_string(),
            seed: self.cfg.seed,
            config: self.config,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            checksums,
            dev_scores,
        };
        self.dir.write_manifest(&m)?;
        eprintln!("{}: wrote {} in {:.1}s", self.name, self.cfg.out_dir.display(), m.wall_time_secs);
        Ok(())
    }
}

/// The path set for `key`, which must exist.
fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("--{} is required", key.replace('_', "-"))))?;
    existing(p)
}

fn existing(p: &Path) -> Result<&Path> {
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", p.display()),
        )))
    }
}

/// (train, dev) records: `dev_corpus` when set, else the trailing `n_dev`
/// records of `corpus`.
fn load_split(cfg: &RunConfig) -> Result<(Vec<RecipeRecord>, Vec<RecipeRecord>)> {
    let records = read_corpus(required(&cfg.corpus, "corpus")?)?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(dev) = &cfg.dev_corpus {
        return Ok((records, read_corpus(existing(dev)?)?));
    }
    if cfg.n_dev == 0 || cfg.n_dev >= records.len() {
        return Err(Error::invalid(format!(
            "n_dev = {} leaves no train or dev records out of {}",
            cfg.n_dev,
            records.len()
        )));
    }
    Ok(split_train_dev(&records, cfg.n_dev))
}

fn vocab_for(cfg: &RunConfig, train: &[RecipeRecord]) -> Result<Vocab> {
    build_vocab(train, cfg.min_count, &cfg.delimiter_list())
}

fn encode_all(records: &[RecipeRecord], vocab: &Vocab) -> Vec<EncodedRecipe> {
    records.iter().map(|r| r.encode(vocab)).collect()
}

fn documents(records: &[RecipeRecord], vocab: &Vocab) -> Vec<SegmentedDoc> {
    records
        .iter()
        .map(|r| r.encode(vocab).segmented_body(vocab))
        .filter(|d| !d.is_empty())
        .collect()
}

pub fn make_synthetic(cfg: &RunConfig) -> Result<()> {
    if cfg.n_recipes == 0 {
        return Err(Error::invalid("n_recipes must be positive"));
    }
    let Some(mut stage) = Stage::open("make-synthetic", cfg)? else {
        return Ok(());
    };
    let records: Vec<RecipeRecord> = generate_synthetic_corpus(cfg.seed, cfg.n_recipes, &Grammar::kitchen())
        .into_iter()
        .map(|s| s.record)
        .collect();
    write_corpus(&stage.output("corpus.jsonl"), &records)?;
    let lex = EventLexicon::parse(KITCHEN_LEXICON, Path::new("kitchen_lexicon.tsv"))?;
    lex.save(&stage.output("lexicon.tsv"))?;
    stage.finish(json!({ "records": records.len(), "lexicon_entries": lex.len() }))
}

pub fn train_teacher_stage(cfg: &RunConfig) -> Result<()> {
    let (train, dev) = load_split(cfg)?;
    let vocab = vocab_for(cfg, &train)?;
    let Some(mut stage) = Stage::open("train-teacher", cfg)? else {
        return Ok(());
    };
    let tcfg = TeacherConfig {
        kind: cfg.teacher_kind,
        embed_dim: cfg.teacher_embed,
        hidden: cfg.teacher_hidden,
        dropout: cfg.teacher_dropout,
        lr: cfg.teacher_lr,
        epochs: cfg.teacher_epochs,
        patience: cfg.patience,
        batch_size: cfg.teacher_batch_size,
        l_min: cfg.l_min,
        l_max: cfg.l_max,
        samples_per_doc: cfg.samples_per_doc,
        seed: cfg.seed,
    };
    let dev_docs = documents(&dev, &vocab);
    let t = train_teacher(&documents(&train, &vocab), &dev_docs, vocab.len(), &tcfg)?;

    let mut log = JsonLines::create(&stage.output("train_log.jsonl"))?;
    for e in &t.log {
        log.write(e)?;
    }
    log.finish()?;
    teacher_checkpoint(&t.teacher, &vocab, cfg.seed, stage.model_config()).save(&stage.output("model.ckpt"))?;

    // Whole held-out documents in gold order versus their reversal.
    let multi: Vec<&SegmentedDoc> = dev_docs.iter().filter(|d| d.len() >= 2).collect();
    let mut preferred = 0usize;
    for d in &multi {
        if t.teacher.loss_value(d)? < 1.0 {
            preferred += 1;
        }
    }
    stage.finish(json!({
        "kind": cfg.teacher_kind.to_string(),
        "initial_dev_loss": t.initial_dev_loss,
        "best_dev_loss": t.best_dev_loss,
        "best_epoch": t.best_epoch,
        "epochs_run": t.log.len(),
        "dev_forward_preferred": if multi.is_empty() { 0.0 } else { preferred as f64 / multi.len() as f64 },
    }))
}

pub fn pretrain_stage(cfg: &RunConfig) -> Result<()> {
    let (train, dev) = load_split(cfg)?;
    let vocab = vocab_for(cfg, &train)?;
    let Some(mut stage) = Stage::open("pretrain", cfg)? else {
        return Ok(());
    };
    let pcfg = PretrainConfig {
        embed: cfg.embed,
        enc_hidden: cfg.enc_hidden,
        dec_hidden: cfg.dec_hidden,
        dropout: cfg.dropout,
        bag: cfg.bag,
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        beta: cfg.beta,
        scheduled_sampling: cfg.scheduled_sampling,
        seed: cfg.seed,
    };
    let p = pretrain(&encode_all(&train, &vocab), &encode_all(&dev, &vocab), vocab.len(), &pcfg)?;
    let mut log = JsonLines::create(&stage.output("train_log.jsonl"))?;
    for e in &p.log {
        log.write(e)?;
    }
    log.finish()?;
    generator_checkpoint(&p.params, &vocab, cfg.seed, stage.model_config()).save(&stage.output("model.ckpt"))?;
    stage.finish(json!({
        "initial_dev_loss": p.initial_dev_loss,
        "best_dev_loss": p.best_dev_loss,
        "best_epoch": p.best_epoch,
        "epochs_run": p.log.len(),
    }))
}

fn load_generator(cfg: &RunConfig) -> Result<(GeneratorParams, Vocab)> {
    let ck = Checkpoint::load(required(&cfg.generator, "generator")?)?;
    let params = ck.generator()?;
    Ok((params, ck.meta.vocab))
}

fn load_teacher(path: &Path, want: TeacherKind, vocab: &Vocab) -> Result<Teacher> {
    let ck = Checkpoint::load(path)?;
    let t = ck.teacher()?;
    if t.kind != want {
        return Err(Error::Checkpoint(format!(
            "{} holds a teacher of kind {} but kind {} is required",
            path.display(),
            t.kind,
            want
        )));
    }
    if ck.meta.vocab_checksum != vocab.checksum() {
        return Err(Error::Checkpoint(format!(
            "vocabulary checksum mismatch: generator {} but teacher {} has {}",
            vocab.checksum(),
            path.display(),
            ck.meta.vocab_checksum
        )));
    }
    Ok(t)
}

pub fn train_policy_stage(cfg: &RunConfig) -> Result<()> {
    let (train, dev) = load_split(cfg)?;
    let (pretrained, vocab) = load_generator(cfg)?;
    let teacher = |path: &Option<PathBuf>, key: &str, kind: TeacherKind, needed: bool| -> Result<Option<Teacher>> {
        match path {
            Some(p) => Ok(Some(load_teacher(existing(p)?, kind, &vocab)?)),
            None if needed => required(path, key).map(|_| None),
            None => Ok(None),
        }
    };
    let absolute = if cfg.reward == RewardKind::Ao {
        teacher(&cfg.absolute_teacher, "absolute_teacher", TeacherKind::Absolute, !cfg.mle_only)?
    } else {
        None
    };
    // A relative teacher is optional for other kinds; it adds dev diagnostics.
    let relative = teacher(
        &cfg.relative_teacher,
        "relative_teacher",
        TeacherKind::Relative,
        cfg.reward.uses_relative() && !cfg.mle_only,
    )?;
    // MLE-only runs without the reward's teacher report dev BLEU-4 instead.
    let kind = match (cfg.reward, &absolute, &relative) {
        (RewardKind::Ao, None, _) | (RewardKind::Ro | RewardKind::RoB4, _, None) => RewardKind::Bleu4,
        (k, _, _) => k,
    };
    let Some(mut stage) = Stage::open("train-policy", cfg)? else {
        return Ok(());
    };
    let pcfg = PolicyConfig {
        kind,
        gamma: cfg.gamma,
        l_min: cfg.l_min,
        l_max: cfg.l_max,
        lr: cfg.rl_lr,
        max_len: cfg.max_len,
        beta: cfg.beta,
        epochs: cfg.rl_epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        mle_only: cfg.mle_only,
    };
    let mut log = JsonLines::create(&stage.output("train_log.jsonl"))?;
    let mut log_err = None;
    let run = train_policy(
        &pretrained,
        absolute.as_ref(),
        relative.as_ref(),
        vocab.delimiters(),
        &encode_all(&train, &vocab),
        &encode_all(&dev, &vocab),
        &pcfg,
        |b| {
            if let Err(e) = log.write(b) {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.finish()?;
    generator_checkpoint(&run.params, &vocab, cfg.seed, stage.model_config()).save(&stage.output("model.ckpt"))?;
    generator_checkpoint(&run.final_params, &vocab, cfg.seed, stage.model_config())
        .save(&stage.output("final.ckpt"))?;
    stage.finish(json!({
        "reward": kind.name(),
        "initial": run.initial,
        "epochs": run.epochs,
        "best_epoch": run.best_epoch,
    }))
}

pub fn generate_stage(cfg: &RunConfig) -> Result<()> {
    let (_, dev) = load_split(cfg)?;
    let (params, vocab) = load_generator(cfg)?;
    let Some(mut stage) = Stage::open("generate", cfg)? else {
        return Ok(());
    };
    let mut out = JsonLines::create(&stage.output("generations.jsonl"))?;
    let mut total_len = 0usize;
    for (i, r) in dev.iter().enumerate() {
        let ctx = params.encode(&r.encode(&vocab))?;
        let d = match cfg.decode {
            DecodeMode::Greedy => params.greedy_decode(&ctx, cfg.max_len),
            DecodeMode::Sample => {
                let mut rng = stream(cfg.seed, &[PURPOSE_SAMPLE, i as u64]);
                params.sample_decode(&ctx, cfg.beta, cfg.max_len, &mut rng)?
            }
        };
        total_len += d.body().len();
        out.write(&GenerationRow {
            title: r.title_tokens.join(" "),
            generated: vocab.detokenize(d.body()),
            gold: r.body_tokens.join(" "),
        })?;
    }
    out.finish()?;
    stage.finish(json!({
        "records": dev.len(),
        "decode": cfg.decode.to_string(),
        "mean_length": total_len as f64 / dev.len().max(1) as f64,
    }))
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRow>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn evaluate_stage(cfg: &RunConfig) -> Result<()> {
    let rows = read_generations(required(&cfg.generations, "generations")?)?;
    let lex = load_lexicon(required(&cfg.lexicon, "lexicon")?)?;
    let golds: Vec<Vec<String>> = match &cfg.references {
        Some(p) => read_corpus(existing(p)?)?.into_iter().map(|r| r.body_tokens).collect(),
        None => rows.iter().map(|r| tokenize(&r.gold)).collect(),
    };
    let gens: Vec<Vec<String>> = rows.iter().map(|r| tokenize(&r.generated)).collect();
    let report = evaluate_corpus(&gens, &golds, &lex)?;
    let Some(mut stage) = Stage::open("evaluate", cfg)? else {
        return Ok(());
    };
    let table = report.to_table();
    std::fs::write(stage.output("report.txt"), &table)?;
    let mut j = serde_json::to_vec_pretty(&report.to_map())?;
    j.push(b'\n');
    std::fs::write(stage.output("report.json"), j)?;
    print!("{table}");
    stage.finish(json!({ "records": rows.len(), "scores": report.to_map() }))
}
