use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kmpn_core::content::{content_split_embeddings, export_embeddings};
use kmpn_core::eval::{evaluate_embeddings, evaluate_kmpn};
use kmpn_core::train::{
    format_loss_log, grad_check, train_content, train_kmpn_observed, GradCheckSpec, ModelKind,
};
use kmpn_core::{
    make_synthetic_dataset, ContentDims, ContentEmbeddings, ContentParams, Dataset, EmbeddingFormat,
    EmbeddingMatrixFile, KmpnParams, LossWeights, ModelDims, Split, SynthSpec, TrainConfig,
};

use crate::config::Resolver;
use crate::meta::write_run_meta;
use crate::{Cli, Command, EvalArgs, ExportArgs, FormatArg, GradKind, GradcheckArgs, SynthArgs, TrainArgs, TrainMode};

pub const KMPN_CHECKPOINT: &str = "checkpoint.kmpn";
pub const CONTENT_CHECKPOINT: &str = "checkpoint.clite";
pub const LOSS_LOG: &str = "loss_log.tsv";
pub const EVAL_LOG: &str = "eval_log.tsv";
pub const REPORT: &str = "report.tsv";
pub const SUMMARY: &str = "summary.tsv";
pub const GRADCHECK: &str = "gradcheck.tsv";

/// Settings every command shares.
struct Ctx {
    resolver: Resolver,
    data: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn new(cli: &Cli, command: &str) -> Result<Self> {
        let s = &cli.shared;
        let mut resolver = Resolver::new(s.config.as_deref())?;
        if let Some(c) = resolver.get_opt::<String>("command", None)? {
            if c != command {
                bail!("config file is for command {c}, not {command}");
            }
        }
        resolver.record("command", &command);
        let data = resolver
            .get_opt("data", s.data.as_ref().map(|p| p.display().to_string()))?
            .map(PathBuf::from);
        let Some(out) = resolver.get_opt("out", s.out.as_ref().map(|p| p.display().to_string()))? else {
            bail!("--out is required");
        };
        let deterministic = resolver.get_bool("deterministic", s.deterministic)?;
        let seed = match resolver.get_opt("seed", s.seed)? {
            Some(seed) => seed,
            None => {
                let seed = if deterministic { 7 } else { rand::random() };
                resolver.record("seed", &seed);
                seed
            }
        };
        let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let threads = resolver.get("threads", s.threads, default_threads)?;
        if threads == 0 {
            bail!("--threads must be ≥ 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
        let out = PathBuf::from(out);
        fs::create_dir_all(&out).with_context(|| format!("{}", out.display()))?;
        Ok(Ctx {
            resolver,
            data,
            out,
            seed,
        })
    }

    fn data(&self) -> Result<&Path> {
        self.data.as_deref().context("--data is required")
    }

    fn load(&self) -> Result<Dataset> {
        Ok(Dataset::load(self.data()?)?)
    }

    fn finish(self) -> Result<()> {
        self.resolver.check_unused(&[])?;
        write_run_meta(&self.out, self.resolver.resolved())
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Prepare => prepare(Ctx::new(&cli, "prepare")?),
        Command::Synth(a) => synth(Ctx::new(&cli, "synth")?, a),
        Command::Train(a) => train(Ctx::new(&cli, "train")?, a),
        Command::Eval(a) => eval(Ctx::new(&cli, "eval")?, a),
        Command::Gradcheck(a) => gradcheck(Ctx::new(&cli, "gradcheck")?, a),
        Command::ExportContent(a) => export(Ctx::new(&cli, "export-content")?, a),
    }
}

fn enum_name<E: ValueEnum>(v: &E) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn value_enum<E: ValueEnum>(s: String) -> Result<E> {
    E::from_str(&s, true).map_err(|e| anyhow::anyhow!(e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("{}", path.display()))
}

fn prepare(ctx: Ctx) -> Result<ExitCode> {
    let ds = ctx.load()?;
    let summary = ds.summary();
    let dups = ds.interactions.duplicates_collapsed();
    if dups > 0 {
        log::warn!("{dups} duplicate interactions collapsed");
    }
    println!("{summary}");
    write(ctx.out.join(SUMMARY), &format!("{summary}\n"))?;
    ctx.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn synth(mut ctx: Ctx, a: &SynthArgs) -> Result<ExitCode> {
    let d = SynthSpec::default();
    let r = &mut ctx.resolver;
    let spec = SynthSpec {
        num_users: r.get("users", a.users, d.num_users)?,
        num_items: r.get("items", a.items, d.num_items)?,
        num_clusters: r.get("clusters", a.clusters, d.num_clusters)?,
        density: r.get("density", a.density, d.density)?,
        noise: r.get("noise", a.noise, d.noise)?,
        cold_start_fraction: r.get("cold_fraction", a.cold_fraction, d.cold_start_fraction)?,
        ..d
    };
    let (ds, _) = make_synthetic_dataset(&spec, ctx.seed)?;
    ds.write(&ctx.out)?;
    println!("{}", ds.summary());
    ctx.finish()?;
    Ok(ExitCode::SUCCESS)
}

struct TrainSettings {
    mode: TrainMode,
    config: TrainConfig,
    dims: ModelDims,
    content_dims: ContentDims,
    content_users: Option<PathBuf>,
    content_items: Option<PathBuf>,
}

fn train_settings(r: &mut Resolver, a: &TrainArgs, seed: u64) -> Result<TrainSettings> {
    let mode: TrainMode = value_enum(r.get("mode", a.mode.map(|m| enum_name(&m)), "kmpn".to_string())?)?;
    let td = TrainConfig::default();
    let wd = LossWeights::default();
    let md = ModelDims::default();
    let cd = ContentDims::default();
    let default_lr = if mode == TrainMode::Content { 1e-3 } else { td.lr_start };
    let config = TrainConfig {
        epochs: r.get("epochs", a.epochs, if mode == TrainMode::Content { 20 } else { td.epochs })?,
        batch_size: r.get("batch_size", a.batch_size, if mode == TrainMode::Content { 64 } else { td.batch_size })?,
        lr_start: r.get("lr", a.lr, default_lr)?,
        lr_end: r.get("lr_end", a.lr_end, td.lr_end)?,
        adam: td.adam,
        weights: LossWeights {
            lambda1: r.get("lambda1", a.lambda1, wd.lambda1)?,
            lambda2: r.get("lambda2", a.lambda2, wd.lambda2)?,
            lambda_cs: r.get("lambda_cs", a.lambda_cs, wd.lambda_cs)?,
            epsilon: r.get("epsilon", a.epsilon, wd.epsilon)?,
        },
        seed,
        deterministic: true,
        eval_every: r.get("eval_every", a.eval_every, 0)?,
    };
    let hidden = r.get("h", a.h, md.hidden)?;
    let dims = ModelDims {
        hidden,
        layers: r.get("layers", a.layers, md.layers)?,
        n_meta: r.get("n_meta", a.n_meta, md.n_meta)?,
        n_pref: r.get("n_pref", a.n_pref, md.n_pref)?,
    };
    let content_dims = ContentDims {
        hidden,
        buckets: r.get("buckets", a.buckets, cd.buckets)?,
        history: r.get("history", a.history, cd.history)?,
        negatives: r.get("negatives", a.negatives, cd.negatives)?,
    };
    let path_flag = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let content_users = r.get_opt("content_users", path_flag(&a.content_users))?.map(PathBuf::from);
    let content_items = r.get_opt("content_items", path_flag(&a.content_items))?.map(PathBuf::from);
    Ok(TrainSettings {
        mode,
        config,
        dims,
        content_dims,
        content_users,
        content_items,
    })
}

fn train(mut ctx: Ctx, a: &TrainArgs) -> Result<ExitCode> {
    let s = train_settings(&mut ctx.resolver, a, ctx.seed)?;
    let ds = ctx.load()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    init_rng.set_stream(1);
    if s.mode == TrainMode::Content {
        let params = ContentParams::init(s.content_dims, &mut init_rng)?;
        let outcome = train_content(&ds.corpus, &ds.interactions, params, &s.config)?;
        outcome.params.save(&ctx.out.join(CONTENT_CHECKPOINT))?;
        let mut log = String::from("epoch\tclick_loss\n");
        for (e, l) in outcome.losses.iter().enumerate() {
            log.push_str(&format!("{}\t{l}\n", e + 1));
        }
        write(ctx.out.join(LOSS_LOG), &log)?;
        ctx.finish()?;
        return Ok(ExitCode::SUCCESS);
    }
    let content = match (s.mode, &s.content_users, &s.content_items) {
        (TrainMode::Ckmpn, Some(u), Some(i)) => Some(ContentEmbeddings::from_files(
            &EmbeddingMatrixFile::read(u)?,
            &EmbeddingMatrixFile::read(i)?,
            ds.interactions.num_users(),
            ds.interactions.num_items(),
            s.dims.hidden,
        )?),
        (TrainMode::Ckmpn, _, _) => bail!("--mode ckmpn requires --content-users and --content-items"),
        (_, None, None) => None,
        _ => bail!("--content-users/--content-items are only valid with --mode ckmpn"),
    };
    let params = KmpnParams::init(
        s.dims,
        ds.kg.num_entities(),
        ds.kg.num_relations(),
        ds.interactions.num_users(),
        &mut init_rng,
    )?;
    let mut eval_log = String::new();
    let has_valid = ds.interactions.valid_lists().is_some();
    let mut observer = |entry: &kmpn_core::EpochLog, p: &KmpnParams| -> kmpn_core::Result<()> {
        if has_valid {
            let rep = evaluate_kmpn(p, &ds.kg, &ds.interactions, Split::Valid, &kmpn_core::DEFAULT_KS)?;
            eval_log.push_str(&format!("{}", entry.epoch));
            for (k, v) in rep.ks.iter().zip(&rep.recall) {
                eval_log.push_str(&format!("\trecall@{k}={v}"));
            }
            eval_log.push('\n');
        }
        Ok(())
    };
    let (trained, log) = train_kmpn_observed(
        &ds.kg,
        &ds.interactions,
        params,
        content.as_ref(),
        &s.config,
        &mut observer,
    )?;
    trained.save(&ctx.out.join(KMPN_CHECKPOINT))?;
    write(ctx.out.join(LOSS_LOG), &format_loss_log(&log))?;
    if !eval_log.is_empty() {
        write(ctx.out.join(EVAL_LOG), &eval_log)?;
    }
    if let Some(last) = log.last() {
        println!("{last}");
    }
    ctx.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let ks = s
        .split(',')
        .map(|k| k.trim().parse::<usize>().with_context(|| format!("bad K value {k:?}")))
        .collect::<Result<Vec<_>>>()?;
    if ks.is_empty() || ks.contains(&0) {
        bail!("K values must be ≥ 1");
    }
    Ok(ks)
}

enum Checkpoint {
    Kmpn(KmpnParams),
    Content(ContentParams),
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("{}", path.display()))?;
    if bytes.starts_with(b"KMPN1") {
        Ok(Checkpoint::Kmpn(KmpnParams::from_checkpoint_bytes(&bytes).with_context(|| format!("{}", path.display()))?))
    } else if bytes.starts_with(b"CLITE1") {
        Ok(Checkpoint::Content(
            ContentParams::from_checkpoint_bytes(&bytes).with_context(|| format!("{}", path.display()))?,
        ))
    } else {
        bail!("{}: not a kmpn or content checkpoint", path.display())
    }
}

fn eval(mut ctx: Ctx, a: &EvalArgs) -> Result<ExitCode> {
    let r = &mut ctx.resolver;
    let split: Split = r.get("split", a.split.clone(), "test".to_string())?.parse()?;
    let ks = parse_ks(&r.get("k", a.k.clone(), "20,60,100".to_string())?)?;
    let path_flag = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let checkpoint = r.get_opt("checkpoint", path_flag(&a.checkpoint))?.map(PathBuf::from);
    let users = r.get_opt("content_users", path_flag(&a.content_users))?.map(PathBuf::from);
    let items = r.get_opt("content_items", path_flag(&a.content_items))?.map(PathBuf::from);
    let ds = ctx.load()?;
    let report = match (checkpoint, users, items) {
        (Some(path), None, None) => match read_checkpoint(&path)? {
            Checkpoint::Kmpn(p) => {
                if p.num_entities() != ds.kg.num_entities() || p.num_users() != ds.interactions.num_users() {
                    bail!(
                        "checkpoint has {} entities and {} users, dataset has {} and {}",
                        p.num_entities(),
                        p.num_users(),
                        ds.kg.num_entities(),
                        ds.interactions.num_users()
                    );
                }
                evaluate_kmpn(&p, &ds.kg, &ds.interactions, split, &ks)?
            }
            Checkpoint::Content(p) => {
                ds.interactions.held_out(split)?;
                let (u, i) = content_split_embeddings(&p, &ds.corpus, &ds.interactions, split)?;
                evaluate_embeddings(&u, &i, &ds.interactions, split, &ks)?
            }
        },
        (None, Some(u), Some(i)) => {
            let uf = EmbeddingMatrixFile::read(&u)?;
            let itf = EmbeddingMatrixFile::read(&i)?;
            let emb =
                ContentEmbeddings::from_files(&uf, &itf, ds.interactions.num_users(), ds.interactions.num_items(), uf.dim)?;
            evaluate_embeddings(&emb.users, &emb.items, &ds.interactions, split, &ks)?
        }
        _ => bail!("eval needs either --checkpoint or both --content-users and --content-items"),
    };
    print!("{report}");
    write(ctx.out.join(REPORT), &report.to_string())?;
    ctx.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(mut ctx: Ctx, a: &GradcheckArgs) -> Result<ExitCode> {
    let r = &mut ctx.resolver;
    let kind: GradKind = value_enum(r.get("kind", a.kind.map(|k| enum_name(&k)), "all".to_string())?)?;
    let tolerance = r.get("tolerance", a.tolerance, 1e-4)?;
    let kinds: Vec<ModelKind> = match kind {
        GradKind::Kmpn => vec![ModelKind::Kmpn],
        GradKind::Ckmpn => vec![ModelKind::Ckmpn],
        GradKind::Content => vec![ModelKind::Content],
        GradKind::All => vec![ModelKind::Kmpn, ModelKind::Ckmpn, ModelKind::Content],
    };
    let spec = GradCheckSpec {
        seed: ctx.seed,
        ..GradCheckSpec::default()
    };
    let mut text = String::new();
    let mut failed = Vec::new();
    for kind in kinds {
        let report = grad_check(kind, &spec, tolerance)?;
        text.push_str(&format!("{report}\n"));
        if !report.passed() {
            failed.push(format!("{} (max relative error {:.3e})", kind.name(), report.max_rel_err()));
        }
    }
    print!("{text}");
    write(ctx.out.join(GRADCHECK), &text)?;
    ctx.finish()?;
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: gradient check failed for {}", failed.join(", "));
        Ok(ExitCode::from(2))
    }
}

fn export(mut ctx: Ctx, a: &ExportArgs) -> Result<ExitCode> {
    let r = &mut ctx.resolver;
    let path = r
        .get_opt("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))?
        .map(PathBuf::from)
        .context("--checkpoint is required")?;
    let format = match value_enum::<FormatArg>(r.get("format", a.format.map(|f| enum_name(&f)), "text".to_string())?)? {
        FormatArg::Text => EmbeddingFormat::Text,
        FormatArg::Binary => EmbeddingFormat::Binary,
    };
    let ds = ctx.load()?;
    let Checkpoint::Content(params) = read_checkpoint(&path)? else {
        bail!("{}: export-content needs a content checkpoint", path.display());
    };
    let (users, items) = export_embeddings(&params, &ds.corpus, &ds.interactions)?;
    let ext = if format == EmbeddingFormat::Text { "txt" } else { "bin" };
    users.write(&ctx.out.join(format!("user_emb.{ext}")), format)?;
    items.write(&ctx.out.join(format!("item_emb.{ext}")), format)?;
    ctx.finish()?;
    Ok(ExitCode::SUCCESS)
}
