//! One function per subcommand. Each reads its settings from a [`Config`],
//! writes artifacts into the output directory and finishes with a manifest.

use crate::config::Config;
use crate::error::CliError;
use crate::ingest::{self, Dataset, Filters};
use crate::manifest::Manifest;
use anyhow::{anyhow, bail, Context};
use dfa_core::consensus::{
    merge_rho, merged_predict, run_shards, shard_moments, split_users, MergeManifest, ShardPlan, SplitStrategy,
};
use dfa_core::draws::{read_draws, write_draws};
use dfa_core::mf::{cv_select_rank, mf_rating, predict_mf, rmse, train_mf, CvGrid, MfParams};
use dfa_core::predict::{
    ensemble_score, exact_accuracy, pairwise_preference_eval, predict_all, within_k_star_accuracy, write_report,
    Prediction, ReportRow,
};
use dfa_core::simulate::{generate_dataset, holdout_split, write_truth, HoldoutMode};
use dfa_core::summarize::{conditional_estimates, dahl_estimate_a, map_k, min_hamming_distance_padded, tradeoff_table, write_estimate, write_tradeoff};
use dfa_core::{derive, BinaryMatrix, McmcDraw, Purpose, Rating, RatingMatrix};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

type CmdResult = Result<(), CliError>;

struct Run {
    cfg: Config,
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn new(command: &str, cfg: Config) -> Result<Self, CliError> {
        let out = PathBuf::from(cfg.require::<String>("out")?);
        std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Run { cfg, out, manifest: Manifest::new(command) })
    }

    /// Creates `name` in the output directory, writes it with `f` and records it.
    fn emit<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        self.manifest.output(path);
        Ok(())
    }

    fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        Ok(PathBuf::from(self.cfg.require::<String>(key)?))
    }

    fn finish(self) -> CmdResult {
        self.manifest.write(&self.out, &self.cfg)?;
        Ok(())
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn filters(cfg: &Config) -> Result<Filters, CliError> {
    Ok(Filters { top_items: cfg.get("top_items")?, min_user_ratings: cfg.get("min_user_ratings")? })
}

/// Ingests `data`, splits it and writes `index.csv`, `train.csv`, `test.csv`.
fn prepare_data(run: &mut Run) -> Result<(Dataset, RatingMatrix, RatingMatrix), CliError> {
    let path = run.path("data")?;
    let data = ingest::ingest_path(&path, filters(&run.cfg)?)?;
    run.manifest.input("data", &path);
    let mode = run.cfg.holdout()?;
    let (train, test) = holdout_split(&data.ratings, mode, &mut derive(run.cfg.seed()?, Purpose::Holdout, 0))?;
    run.emit("index.csv", |w| Ok(ingest::write_index(w, &data)?))?;
    run.emit("train.csv", |w| Ok(train.write_csv(w)?))?;
    run.emit("test.csv", |w| Ok(test.write_csv(w)?))?;
    log::info!("{} users, {} items: {} train / {} test ratings", train.users(), train.items(), train.len(), test.len());
    Ok((data, train, test))
}

fn write_model_info(run: &mut Run, kind: &str, users: usize, items: usize, shards: usize) -> CmdResult {
    run.emit("model.txt", |w| {
        writeln!(w, "# dfa-model v1")?;
        writeln!(w, "kind={kind}")?;
        writeln!(w, "users={users}")?;
        writeln!(w, "items={items}")?;
        writeln!(w, "shards={shards}")?;
        Ok(())
    })
}

pub fn simulate(cfg: Config) -> CmdResult {
    let mut run = Run::new("simulate", cfg)?;
    let sim = run.cfg.sim()?;
    let observed = run.cfg.sim_observed()?;
    let seed = run.cfg.seed()?;
    let (truth, mut ratings) = generate_dataset(&sim, &mut derive(seed, Purpose::Simulate, 0))?;
    if observed < 1.0 {
        let mode = HoldoutMode::GlobalFraction(1.0 - observed);
        ratings = holdout_split(&ratings, mode, &mut derive(seed, Purpose::Simulate, 1))?.0;
    }
    log::info!("simulated {}x{} ratings with K = {}", sim.users, sim.items, truth.alloc.k());
    run.emit("ratings.csv", |w| Ok(ratings.write_csv(w)?))?;
    run.emit("truth.txt", |w| Ok(write_truth(w, &truth)?))?;
    run.finish()
}

pub fn train(cfg: Config) -> CmdResult {
    let mut run = Run::new("train", cfg)?;
    let config = run.cfg.chain()?;
    let (_, train, _) = prepare_data(&mut run)?;
    let draws = dfa_core::run_chain(&train, &config)?;
    log::info!("stored {} draws", draws.len());
    let b0 = config.hyper.b0;
    run.emit("draws.txt", |w| Ok(write_draws(w, train.users(), train.items(), b0, &draws)?))?;
    write_model_info(&mut run, "single", train.users(), train.items(), 1)?;
    run.finish()
}

fn strategy_name(s: SplitStrategy) -> String {
    match s {
        SplitStrategy::RoundRobin => "round-robin".into(),
        SplitStrategy::Contiguous => "contiguous".into(),
        SplitStrategy::SeededShuffle(seed) => format!("shuffle:{seed}"),
    }
}

fn parse_strategy(s: &str) -> anyhow::Result<SplitStrategy> {
    match s {
        "round-robin" => Ok(SplitStrategy::RoundRobin),
        "contiguous" => Ok(SplitStrategy::Contiguous),
        _ => s
            .strip_prefix("shuffle:")
            .and_then(|v| v.parse().ok())
            .map(SplitStrategy::SeededShuffle)
            .ok_or_else(|| anyhow!("unknown split strategy {s:?}")),
    }
}

fn shard_file(s: usize) -> String {
    format!("shard_{s:03}.txt")
}

pub fn train_cmc(cfg: Config, jobs: Option<usize>) -> CmdResult {
    let mut run = Run::new("train-cmc", cfg)?;
    let config = run.cfg.chain()?;
    let shards: usize = run.cfg.require("shards")?;
    let strategy = run.cfg.split()?;
    let (rule, mode, prior) = (run.cfg.filter()?, run.cfg.resample()?, run.cfg.merge_prior()?);
    let (_, train, _) = prepare_data(&mut run)?;
    let plan = split_users(train.users(), shards, strategy)?;
    let shard_draws = run_shards(&train, &plan, &config, jobs)?;
    let b0 = config.hyper.b0;
    let mut moments = Vec::with_capacity(shards);
    for (s, draws) in shard_draws.iter().enumerate() {
        let users = plan.users(s).len();
        run.emit(&shard_file(s), |w| Ok(write_draws(w, users, train.items(), b0, draws)?))?;
        moments.push(shard_moments(s, draws)?);
    }
    let global = merge_rho(&moments, prior)?;
    let merge = MergeManifest {
        shards,
        seed: config.seed,
        strategy: strategy_name(strategy),
        rule,
        mode,
        prior,
        global,
    };
    run.emit("merge.txt", |w| Ok(merge.write(w)?))?;
    write_model_info(&mut run, "cmc", train.users(), train.items(), shards)?;
    run.finish()
}

/// A trained model loaded back from its directory.
enum Model {
    Single(Vec<McmcDraw>),
    Cmc { plan: ShardPlan, merge: MergeManifest, shards: Vec<Vec<McmcDraw>> },
}

struct LoadedModel {
    dir: PathBuf,
    users: usize,
    items: usize,
    model: Model,
}

fn load_model(dir: &Path) -> anyhow::Result<LoadedModel> {
    let info: HashMap<String, String> = open(&dir.join("model.txt"))?
        .lines()
        .skip(1)
        .filter_map(|l| l.ok()?.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let field = |k: &str| -> anyhow::Result<usize> {
        info.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| anyhow!("model.txt lacks {k}"))
    };
    let (users, items) = (field("users")?, field("items")?);
    let read = |name: &str| -> anyhow::Result<Vec<McmcDraw>> {
        let path = dir.join(name);
        let (_, draws) = read_draws(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
        if draws.is_empty() {
            bail!("{} holds no draws", path.display());
        }
        Ok(draws)
    };
    let model = match info.get("kind").map(String::as_str) {
        Some("single") => Model::Single(read("draws.txt")?),
        Some("cmc") => {
            let merge = MergeManifest::read(open(&dir.join("merge.txt"))?)?;
            let plan = split_users(users, merge.shards, parse_strategy(&merge.strategy)?)?;
            let shards = (0..merge.shards).map(|s| read(&shard_file(s))).collect::<anyhow::Result<_>>()?;
            Model::Cmc { plan, merge, shards }
        }
        other => bail!("unknown model kind {other:?}"),
    };
    Ok(LoadedModel { dir: dir.to_path_buf(), users, items, model })
}

/// Per-shard prediction ensembles, after the consensus merge when `merged`.
fn ensembles(model: &Model, merged: bool) -> anyhow::Result<Vec<Vec<McmcDraw>>> {
    Ok(match model {
        Model::Single(draws) => vec![draws.clone()],
        Model::Cmc { shards, .. } if !merged => shards.clone(),
        Model::Cmc { shards, merge, .. } => merged_predict(shards, &merge.global, merge.rule, merge.mode, merge.seed)?
            .into_iter()
            .map(|e| e.draws)
            .collect(),
    })
}

/// Shard and within-shard index of a global user.
fn locate(model: &Model, u: usize) -> (usize, usize) {
    match model {
        Model::Single(_) => (0, u),
        Model::Cmc { plan, .. } => (plan.shard_of(u), plan.local_index(u)),
    }
}

fn predict_queries(m: &LoadedModel, ens: &[Vec<McmcDraw>], queries: &[(usize, usize)]) -> anyhow::Result<Vec<Prediction>> {
    let mut groups: Vec<Vec<(usize, (usize, usize))>> = vec![Vec::new(); ens.len()];
    for (q, &(u, i)) in queries.iter().enumerate() {
        if u >= m.users || i >= m.items {
            bail!("query ({}, {}) outside the {}x{} model", u + 1, i + 1, m.users, m.items);
        }
        let (s, local) = locate(&m.model, u);
        groups[s].push((q, (local, i)));
    }
    let mut out: Vec<Option<Prediction>> = vec![None; queries.len()];
    for (s, group) in groups.iter().enumerate() {
        let local: Vec<(usize, usize)> = group.iter().map(|&(_, q)| q).collect();
        for (&(q, _), mut p) in group.iter().zip(predict_all(&local, &ens[s])?) {
            p.user = queries[q].0;
            out[q] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every query is assigned to a shard")).collect())
}

pub fn predict(cfg: Config) -> CmdResult {
    let mut run = Run::new("predict", cfg)?;
    let dir = run.path("model")?;
    let model = load_model(&dir)?;
    let queries_path = match run.cfg.get::<String>("queries")? {
        Some(q) => PathBuf::from(q),
        None => dir.join("test.csv"),
    };
    let queries: Vec<(usize, usize)> = ingest::read_dense(&queries_path, model.users, model.items)?
        .entries()
        .iter()
        .map(|e| (e.user, e.item))
        .collect();
    run.manifest.input("queries", &queries_path);
    let merged: bool = run.cfg.require("merge")?;
    let ens = ensembles(&model.model, merged)?;
    let preds = predict_queries(&model, &ens, &queries)?;
    run.emit("predictions.csv", |w| {
        writeln!(w, "user,item,rating,score,score_lo,score_hi,p1,p2,p3,p4,p5")?;
        for p in &preds {
            write!(w, "{},{},{},{:.6},{:.6},{:.6}", p.user + 1, p.item + 1, p.rating().value(), p.score, p.score_lo, p.score_hi)?;
            for pr in p.probs {
                write!(w, ",{pr:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    run.finish()
}

fn read_rated(path: &Path) -> anyhow::Result<Vec<(u64, u64, Rating)>> {
    ingest::read_triples(path)
}

pub fn eval(cfg: Config) -> CmdResult {
    let mut run = Run::new("eval", cfg)?;
    let model = match run.cfg.get::<String>("model")? {
        Some(d) => Some(load_model(Path::new(&d))?),
        None => None,
    };
    let pred_path = run.path("predictions")?;
    let truth_path = match (run.cfg.get::<String>("truth")?, &model) {
        (Some(t), _) => PathBuf::from(t),
        (None, Some(m)) => m.dir.join("test.csv"),
        (None, None) => return Err(CliError::Usage("eval needs truth or model".into())),
    };
    run.manifest.input("predictions", &pred_path);
    run.manifest.input("truth", &truth_path);
    let predicted: HashMap<(u64, u64), Rating> =
        read_rated(&pred_path)?.into_iter().map(|(u, i, r)| ((u, i), r)).collect();
    let truth = read_rated(&truth_path)?;
    let mut pairs = Vec::with_capacity(truth.len());
    for &(u, i, r) in &truth {
        let p = predicted.get(&(u, i)).ok_or_else(|| anyhow!("no prediction for user {u} item {i}"))?;
        pairs.push((u, r, *p));
    }
    let shard_of = |u: u64| model.as_ref().map_or(0, |m| locate(&m.model, u as usize - 1).0);
    let shard_count = match model.as_ref().map(|m| &m.model) {
        Some(Model::Cmc { plan, .. }) => plan.shard_count(),
        _ => 1,
    };
    let mut rows = Vec::new();
    let metrics = |subset: &[&(u64, Rating, Rating)]| -> anyhow::Result<(ReportRowValue, ReportRowValue)> {
        let t: Vec<Rating> = subset.iter().map(|p| p.1).collect();
        let p: Vec<Rating> = subset.iter().map(|p| p.2).collect();
        Ok((exact_accuracy(&t, &p)?, within_k_star_accuracy(&t, &p, 1)?))
    };
    let all: Vec<&(u64, Rating, Rating)> = pairs.iter().collect();
    let (exact, within) = metrics(&all)?;
    rows.push(ReportRow { metric: "exact_accuracy".into(), shard: None, value: exact });
    rows.push(ReportRow { metric: "within_one_accuracy".into(), shard: None, value: within });
    if shard_count > 1 {
        for s in 0..shard_count {
            let subset: Vec<_> = pairs.iter().filter(|p| shard_of(p.0) == s).collect();
            if subset.is_empty() {
                continue;
            }
            let (exact, within) = metrics(&subset)?;
            rows.push(ReportRow { metric: "exact_accuracy".into(), shard: Some(s), value: exact });
            rows.push(ReportRow { metric: "within_one_accuracy".into(), shard: Some(s), value: within });
        }
    }
    if let Some(m) = &model {
        rows.extend(pairwise_rows(m, run.cfg.require("merge")?)?);
    }
    run.emit("report.csv", |w| Ok(write_report(w, &rows)?))?;
    run.finish()
}

type ReportRowValue = dfa_core::predict::Proportion;

fn pairwise_rows(m: &LoadedModel, merged: bool) -> anyhow::Result<Vec<ReportRow>> {
    let train = ingest::read_dense(&m.dir.join("train.csv"), m.users, m.items)?;
    let test = ingest::read_dense(&m.dir.join("test.csv"), m.users, m.items)?;
    let ens = ensembles(&m.model, merged)?;
    let mut rows = Vec::new();
    let counts = match &m.model {
        Model::Single(_) => pairwise_preference_eval(&train, &test, |u, i| ensemble_score(u, i, &ens[0]))?,
        Model::Cmc { plan, .. } => {
            let mut total = dfa_core::predict::PairwiseCounts::default();
            for (s, e) in ens.iter().enumerate() {
                let tr = train.restrict_users(plan.users(s))?;
                let te = test.restrict_users(plan.users(s))?;
                let c = pairwise_preference_eval(&tr, &te, |u, i| ensemble_score(u, i, e))?;
                if c.counted > 0 {
                    rows.push(ReportRow { metric: "pairwise_accuracy".into(), shard: Some(s), value: c.accuracy()? });
                }
                total.add(c);
            }
            total
        }
    };
    rows.insert(0, ReportRow { metric: "pairwise_accuracy".into(), shard: None, value: counts.accuracy()? });
    Ok(rows)
}

fn read_truth_a(path: &Path) -> anyhow::Result<BinaryMatrix> {
    let mut lines = open(path)?.lines();
    let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))??;
    let rest = header.strip_prefix("# dfa-truth v1").ok_or_else(|| anyhow!("{} is not a truth file", path.display()))?;
    let field = |key: &str| -> anyhow::Result<usize> {
        rest.split_whitespace()
            .find_map(|f| f.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
            .ok_or_else(|| anyhow!("truth header lacks {key}"))
    };
    let (m, k) = (field("m")?, field("K")?);
    for line in lines {
        let line = line?;
        if let Some(bits) = line.strip_prefix("A\t") {
            return Ok(if k == 0 { BinaryMatrix::new(m) } else { BinaryMatrix::from_row_major_bits(m, k, bits)? });
        }
    }
    bail!("{} has no A line", path.display())
}

fn restrict_rows(a: &BinaryMatrix, rows: &[usize]) -> anyhow::Result<BinaryMatrix> {
    let cols = (0..a.cols()).map(|c| rows.iter().map(|&r| a.get(r, c)).collect()).collect();
    Ok(BinaryMatrix::from_columns(rows.len(), cols)?)
}

pub fn summarize(cfg: Config) -> CmdResult {
    let mut run = Run::new("summarize", cfg)?;
    let model = load_model(&run.path("model")?)?;
    let (draws, users): (&[McmcDraw], Option<&[usize]>) = match &model.model {
        Model::Single(d) => (d, None),
        Model::Cmc { plan, shards, .. } => {
            let s: usize = run.cfg.require("shard")?;
            if s >= shards.len() {
                return Err(CliError::Usage(format!("shard {s} does not exist (model has {})", shards.len())));
            }
            (&shards[s], Some(plan.users(s)))
        }
    };
    let dahl = dahl_estimate_a(draws)?;
    let (b_hat, theta_hat) = conditional_estimates(draws, &dahl.a)?;
    run.emit("estimate.txt", |w| Ok(write_estimate(w, &dahl.a, &b_hat, &theta_hat)?))?;
    let mut lines = vec![
        ("draws".to_string(), draws.len().to_string()),
        ("map_k".into(), map_k(draws)?.to_string()),
        ("dahl_k".into(), dahl.k.to_string()),
        ("dahl_draw".into(), draws[dahl.index].iteration.to_string()),
        ("dahl_mean_distance".into(), format!("{:.6}", dahl.mean_distance)),
    ];
    if let Some(t) = run.cfg.get::<String>("truth")? {
        let path = PathBuf::from(t);
        let mut truth = read_truth_a(&path)?;
        run.manifest.input("truth", &path);
        if let Some(rows) = users {
            truth = restrict_rows(&truth, rows)?;
        }
        if truth.rows() != dahl.a.rows() {
            return Err(CliError::Runtime(anyhow!(
                "truth has {} users but the estimate has {}",
                truth.rows(),
                dahl.a.rows()
            )));
        }
        let d = min_hamming_distance_padded(&dahl.a, &truth)?;
        let cells = truth.rows() * truth.cols().max(1);
        lines.push(("true_k".into(), truth.cols().to_string()));
        lines.push(("hamming".into(), d.to_string()));
        lines.push(("hamming_fraction".into(), format!("{:.6}", d as f64 / cells as f64)));
    }
    run.emit("summary.csv", |w| {
        writeln!(w, "metric,value")?;
        for (k, v) in &lines {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    })?;
    run.finish()
}

pub fn mf(cfg: Config) -> CmdResult {
    let mut run = Run::new("mf", cfg)?;
    let base = run.cfg.mf_params()?;
    let folds: usize = run.cfg.require("mf_folds")?;
    let fixed = run.cfg.mf_fixed_rank()?;
    let seed = run.cfg.seed()?;
    let (_, train, test) = prepare_data(&mut run)?;
    let (params, cv_rmse) = match fixed {
        Some(_) => (base, None),
        None => {
            let sel = cv_select_rank(&train, &CvGrid::default(), base, folds, &mut derive(seed, Purpose::Baseline, 0))?;
            (MfParams { rank: sel.rank, lambda_p: sel.lambda_p, lambda_q: sel.lambda_q, ..base }, Some(sel.mean_rmse))
        }
    };
    let model = train_mf(&train, params, &mut derive(seed, Purpose::Baseline, 1))?;
    run.emit("mf_model.txt", |w| Ok(model.write_text(w)?))?;
    let truth: Vec<Rating> = test.entries().iter().map(|e| e.rating).collect();
    let predicted: Vec<Rating> = test.entries().iter().map(|e| mf_rating(&model, e.user, e.item)).collect();
    run.emit("predictions.csv", |w| {
        writeln!(w, "user,item,rating,score")?;
        for (e, r) in test.entries().iter().zip(&predicted) {
            writeln!(w, "{},{},{},{:.6}", e.user + 1, e.item + 1, r.value(), predict_mf(&model, e.user, e.item))?;
        }
        Ok(())
    })?;
    let exact = exact_accuracy(&truth, &predicted)?;
    let within = within_k_star_accuracy(&truth, &predicted, 1)?;
    let test_rmse = rmse(&model, &test);
    run.emit("mf_report.csv", |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "rank,{}", params.rank)?;
        writeln!(w, "lambda,{}", params.lambda_p)?;
        if let Some(cv) = cv_rmse {
            writeln!(w, "cv_rmse,{cv:.6}")?;
        }
        writeln!(w, "test_rmse,{test_rmse:.6}")?;
        writeln!(w, "exact_accuracy,{:.6}", exact.value)?;
        writeln!(w, "within_one_accuracy,{:.6}", within.value)?;
        Ok(())
    })?;
    run.finish()
}

pub fn tradeoff(cfg: Config) -> CmdResult {
    let mut run = Run::new("tradeoff", cfg)?;
    let rows = tradeoff_table(
        run.cfg.require("tradeoff_users")?,
        run.cfg.require("tradeoff_items")?,
        &run.cfg.usize_list("tradeoff_shards")?,
    )?;
    run.emit("tradeoff.csv", |w| Ok(write_tradeoff(w, &rows)?))?;
    run.finish()
}
