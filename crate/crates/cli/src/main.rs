use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use symsearch::embedding::{EmbeddingProvider, ProviderSpec};
use symsearch::env::EpisodeSpec;
use symsearch::extraction::{extract, AnnotatedScene, ExtractConfig};
use symsearch::forge::{build_contain_dataset, build_cooccur_dataset, build_household_set, synth_oracle, OracleResponseSet};
use symsearch::geodesics::DEFAULT_DILATION;
use symsearch::harness::{load_scene_dir, run_suite, write_outputs, SuiteConfig};
use symsearch::occupancy::OccupancyGrid;
use symsearch::policy::{Agent, Backends, Selector};
use symsearch::relational::{Mlp, RelationalDataset, Relation, TrainConfig};
use symsearch::scoring::{CosineBackend, LearnedBackend};
use symsearch::synth::{synth_suite, table_from_responses, SynthConfig};

#[derive(Parser)]
#[command(name = "symsearch", version, about = "Symbolic object-search benchmark on 3D scene graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scene graph from an annotated scene and its occupancy grid.
    Extract(ExtractArgs),
    /// Train a relational prior (co-occurrence or room containment).
    TrainPriors(TrainArgs),
    /// Turn recorded oracle responses into training datasets.
    Forge(ForgeArgs),
    /// Run agents over a scene set and write records, summary and SR curve.
    Run(RunArgs),
    /// Write the synthetic benchmark suite (scenes, episodes, embeddings, responses).
    SynthSuite(SynthArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    occ: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    kmax: usize,
    #[arg(long, default_value_t = 0.15)]
    door_dilation: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    relation: Relation,
    #[arg(long)]
    data: PathBuf,
    /// Embedding table path or `hash:<seed>:<dim>`.
    #[arg(long)]
    embeddings: ProviderSpec,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "64,32")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
}

#[derive(Args)]
struct ForgeArgs {
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    responses: Option<PathBuf>,
    /// Generate a planted world instead: `seed,rooms,objects`.
    #[arg(long, value_parser = parse_synth)]
    synth: Option<(u64, usize, usize)>,
    /// Also save the (possibly generated) response set.
    #[arg(long)]
    out_responses: Option<PathBuf>,
    #[arg(long)]
    out_cooccur: Option<PathBuf>,
    #[arg(long)]
    out_contain: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long, default_value = "scout:delta=0.1,random,similarity:preset=hash")]
    agents: String,
    /// Number of seeds; seed indices run 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    global_seed: u64,
    /// Embedding table path or `hash:<seed>:<dim>`; enables the cosine backend.
    #[arg(long)]
    embeddings: Option<ProviderSpec>,
    /// Containment weights; with --cooccur and --embeddings enables the learned backend.
    #[arg(long, requires_all = ["cooccur", "embeddings"])]
    contain: Option<PathBuf>,
    #[arg(long, requires_all = ["contain", "embeddings"])]
    cooccur: Option<PathBuf>,
    /// Response set scored by exact lookup (table backend).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DILATION)]
    dilation: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    scenes: usize,
    #[arg(long, default_value_t = 10)]
    episodes_per_scene: usize,
}

fn parse_synth(s: &str) -> Result<(u64, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || format!("expected seed,rooms,objects, got {s:?}");
    let [seed, rooms, objects] = parts.as_slice() else { return Err(bad()) };
    Ok((seed.parse().map_err(|_| bad())?, rooms.parse().map_err(|_| bad())?, objects.parse().map_err(|_| bad())?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract(a) => cmd_extract(a),
        Command::TrainPriors(a) => cmd_train(a),
        Command::Forge(a) => cmd_forge(a),
        Command::Run(a) => cmd_run(a),
        Command::SynthSuite(a) => cmd_synth(a),
    }
}

fn parent_of(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let mut scene = AnnotatedScene::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let grid = OccupancyGrid::load(&a.occ).with_context(|| format!("reading {}", a.occ.display()))?;
    // the scene refers to its grid by a path relative to itself; keep the grid
    // where it is when it already sits beside the output, otherwise copy it there
    let out_dir = parent_of(&a.out);
    let same_dir = fs::canonicalize(parent_of(&a.occ)).ok() == fs::canonicalize(&out_dir).ok();
    let occ_ref = if same_dir {
        a.occ.file_name().context("--occ has no file name")?.to_string_lossy().into_owned()
    } else {
        let stem = a.out.file_stem().context("--out has no file name")?.to_string_lossy().into_owned();
        let name = format!("{stem}.occ");
        grid.save(out_dir.join(&name))?;
        name
    };
    scene.occupancy = Some(grid);
    let cfg = ExtractConfig { seed: a.seed, k_max: a.kmax, door_dilation: a.door_dilation, occupancy_ref: occ_ref, ..Default::default() };
    let ex = extract(&scene, &cfg)?;
    for w in &ex.warnings {
        eprintln!("warning: {w}");
    }
    ex.graph.save(&a.out)?;
    println!("{}: {} nodes, {} doors", ex.graph.scene_id(), ex.graph.nodes().len(), ex.graph.doors().len());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let provider = a.embeddings.build()?;
    let data = RelationalDataset::load(a.relation, &a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let (train, val) = data.embed::<f64>(provider.as_ref())?;
    let mut mlp = Mlp::new(a.relation, provider.dim(), &a.hidden, a.seed).with_fingerprint(provider.fingerprint());
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        ..Default::default()
    };
    let report = mlp.train(&train, &val, &cfg)?;
    mlp.save(&a.out)?;
    let last = report.train_loss.last().copied().unwrap_or(f64::NAN);
    match report.final_val_loss {
        Some(v) => println!("{} epochs, best {}, train loss {last:.4}, val loss {v:.4}", report.train_loss.len(), report.best_epoch),
        None => println!("{} epochs, train loss {last:.4}", report.train_loss.len()),
    }
    Ok(())
}

fn cmd_forge(a: ForgeArgs) -> Result<()> {
    if a.out_cooccur.is_none() && a.out_contain.is_none() && a.out_responses.is_none() {
        bail!("nothing to write: give --out-cooccur, --out-contain or --out-responses");
    }
    let responses = match (&a.responses, a.synth) {
        (Some(p), _) => OracleResponseSet::load(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some((seed, rooms, objects))) => synth_oracle(seed, rooms, objects)?.0,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(p) = &a.out_responses {
        responses.save(p)?;
    }
    let household = build_household_set(&responses);
    let outputs = [(a.out_cooccur.as_ref(), Relation::CoOccur), (a.out_contain.as_ref(), Relation::Contain)];
    for (path, relation) in outputs {
        let Some(path) = path else { continue };
        let forged = match relation {
            Relation::CoOccur => build_cooccur_dataset(&responses, &household, a.seed)?,
            Relation::Contain => build_contain_dataset(&responses, &household, a.seed)?,
        };
        for w in &forged.warnings {
            eprintln!("warning: {w}");
        }
        forged.dataset.save(path)?;
        println!("{relation}: {} rows -> {}", forged.dataset.rows.len(), path.display());
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    ensure!(a.seeds > 0, "--seeds must be at least 1");
    let scenes = load_scene_dir(&a.scenes, a.dilation).with_context(|| format!("loading scenes from {}", a.scenes.display()))?;
    let episodes = EpisodeSpec::load_list(&a.episodes).with_context(|| format!("reading {}", a.episodes.display()))?;
    let agents = Agent::parse_list(&a.agents)?;

    let provider: Option<Arc<dyn EmbeddingProvider>> = a.embeddings.as_ref().map(ProviderSpec::build).transpose()?;
    let mut backends = Backends::default();
    if let Some(p) = &provider {
        backends.cosine = Some(Arc::new(CosineBackend::new(p.clone())));
    }
    if let (Some(contain), Some(cooccur), Some(p)) = (&a.contain, &a.cooccur, &provider) {
        let contain = Mlp::load(contain).with_context(|| format!("reading {}", contain.display()))?;
        let cooccur = Mlp::load(cooccur).with_context(|| format!("reading {}", cooccur.display()))?;
        backends.learned = Some(Arc::new(LearnedBackend::new(p.clone(), contain, cooccur)?));
    }
    if let Some(t) = &a.table {
        let responses = OracleResponseSet::load(t).with_context(|| format!("reading {}", t.display()))?;
        backends.table = Some(Arc::new(table_from_responses(&responses)));
    }
    for agent in &agents {
        if matches!(agent.selector, Selector::Scout { .. }) && backends.get(agent.backend).is_none() {
            bail!("agent {:?} needs the {} backend; see --help for the flags that provide it", agent.name, agent.backend);
        }
    }

    let cfg = SuiteConfig { global_seed: a.global_seed, seeds: (0..a.seeds).collect(), dilation: a.dilation, ..Default::default() };
    let result = run_suite(&scenes, &episodes, &agents, &backends, &cfg)?;
    fs::create_dir_all(&a.out)?;
    write_outputs(&result, &a.out)?;
    for s in &result.report.agents {
        println!(
            "{:<40} SR {:.3} ± {:.3}  SPL {:.3} ± {:.3}  steps {:.2}  errors {}",
            s.agent, s.sr_mean, s.sr_std, s.spl_mean, s.spl_std, s.steps_mean, s.errors
        );
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig { seed: a.seed, scenes: a.scenes, episodes_per_scene: a.episodes_per_scene, ..Default::default() };
    let suite = synth_suite(&cfg)?;
    let scene_dir = a.out.join("scenes");
    fs::create_dir_all(&scene_dir)?;
    for g in &suite.scenes {
        let grid = g.occupancy().context("synthetic scene without a grid")?;
        grid.save(scene_dir.join(g.occupancy_ref()))?;
        g.save(scene_dir.join(format!("{}.json", g.scene_id())))?;
    }
    EpisodeSpec::save_list(&suite.episodes, a.out.join("episodes.json"))?;
    suite.embeddings.save(a.out.join("embeddings.txt"))?;
    suite.responses.save(a.out.join("responses.json"))?;
    println!("{} scenes, {} episodes -> {}", suite.scenes.len(), suite.episodes.len(), a.out.display());
    Ok(())
}
