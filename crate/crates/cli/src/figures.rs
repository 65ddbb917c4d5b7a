//! Figure pipelines. Each writes a CSV/JSON bundle under `figures/<id>/` and a
//! `figure-<id>.manifest.json` next to the other manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use basinscope_core::basin::{fit_basin, ErrorRate, FitOptions, FitOutcome};
use basinscope_core::criticality::{criticality_map, module_path, network_criticality, rewind_probe, CriticalityMap, Endpoint, ModuleLoss};
use basinscope_core::dataops::{relative_accuracy_drop, BlockSize, Dataset, DomainId, ShuffleSpec};
use basinscope_core::exec;
use basinscope_core::landscape::{barrier_curve, BarrierCurve, EvalSet, LambdaGrid, Metric, SplitSel};
use basinscope_core::model::{ArchDescriptor, ParamVector};
use basinscope_core::persistence::{Cell, ColumnKind, Table};
use basinscope_core::similarity::{class_size_correlation, compare, mistake_table, subsample_indices, GroupBy, MistakeRow};
use basinscope_core::spectrum::{network_spectrum, norm_ratio_term, threshold_count_curve, threshold_table, SpectrumReport};
use basinscope_core::trainer::{evaluate, spearman, Checkpoint, DataSpec};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::workspace::{domains_name, emit, emit_json, init_checkpoint, Finetuned, Run, Workspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FigureId {
    ShuffleSweep,
    Barrier,
    BarrierExtrapolate,
    BarrierCrossdomain,
    BasinFit,
    CriticalityHeatmaps,
    CheckpointSweep,
    SimilarityTables,
    SpectrumCurves,
}

impl FigureId {
    pub const ALL: [FigureId; 9] = [
        FigureId::ShuffleSweep,
        FigureId::Barrier,
        FigureId::BarrierExtrapolate,
        FigureId::BarrierCrossdomain,
        FigureId::BasinFit,
        FigureId::CriticalityHeatmaps,
        FigureId::CheckpointSweep,
        FigureId::SimilarityTables,
        FigureId::SpectrumCurves,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::ShuffleSweep => "shuffle_sweep",
            FigureId::Barrier => "barrier",
            FigureId::BarrierExtrapolate => "barrier_extrapolate",
            FigureId::BarrierCrossdomain => "barrier_crossdomain",
            FigureId::BasinFit => "basin_fit",
            FigureId::CriticalityHeatmaps => "criticality_heatmaps",
            FigureId::CheckpointSweep => "checkpoint_sweep",
            FigureId::SimilarityTables => "similarity_tables",
            FigureId::SpectrumCurves => "spectrum_curves",
        }
    }

    pub fn manifest_id(&self) -> String {
        format!("figure-{}", self.as_str())
    }
}

pub struct FigureOutput {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub outputs: Vec<PathBuf>,
}

/// Two runs whose connecting segment is analysed.
#[derive(Clone, Copy, Debug)]
pub struct Pair {
    pub name: &'static str,
    pub a: Run,
    pub b: Run,
}

/// P-T replicates, RI-T replicates, and RI-T replicates sharing initial weights.
pub fn standard_pairs(ws: &Workspace) -> [Pair; 3] {
    let [s1, s2] = ws.config.replicate_seeds();
    [
        Pair { name: "pt", a: Run::pt(s1), b: Run::pt(s2) },
        Pair { name: "rit", a: Run::rit(s1, s1), b: Run::rit(s2, s2) },
        Pair { name: "rit_same_init", a: Run::rit(s1, s1), b: Run::rit(s1, s2) },
    ]
}

/// Trained runs on one dataset, deduplicated and keyed by run.
struct Trained {
    sets: (Dataset, Dataset),
    runs: Vec<(Run, Finetuned)>,
}

impl Trained {
    fn get(&self, r: Run) -> &Finetuned {
        &self.runs.iter().find(|(x, _)| *x == r).expect("run was trained").1
    }
}

/// Output directory, written files and consumed inputs of one command.
pub(crate) struct Ctx<'a> {
    pub ws: &'a Workspace,
    pub arch: ArchDescriptor,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pretrained: Option<Checkpoint>,
}

impl<'a> Ctx<'a> {
    /// Starts a bundle in `dir`, clearing what a previous run left there.
    pub fn new(ws: &'a Workspace, dir: PathBuf) -> CliResult<Self> {
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        Ok(Ctx { ws, arch: ws.arch()?, dir, files: Vec::new(), inputs: Vec::new(), pretrained: None })
    }

    pub fn finish(self, run_id: &str, command: &[String]) -> CliResult<FigureOutput> {
        let manifest = self.ws.write_manifest(run_id, command, &self.inputs, &self.files)?;
        Ok(FigureOutput { dir: self.dir, manifest, outputs: self.files })
    }

    fn pretrained(&mut self) -> CliResult<Checkpoint> {
        if self.pretrained.is_none() {
            let (c, p) = self.ws.load_pretrain()?;
            self.inputs.push(p);
            self.pretrained = Some(c);
        }
        Ok(self.pretrained.clone().expect("loaded"))
    }

    fn train(&mut self, runs: &[Run], data: &DataSpec, epochs: usize) -> CliResult<Trained> {
        let mut unique: Vec<Run> = Vec::new();
        for r in runs {
            if !unique.contains(r) {
                unique.push(*r);
            }
        }
        let pre = if unique.iter().any(|r| r.pretrained) { Some(self.pretrained()?) } else { None };
        let sets = self.ws.load_data(data)?;
        let done = self.ws.finetune_many(&unique, data, &sets, pre.as_ref(), epochs)?;
        Ok(Trained { sets, runs: unique.into_iter().zip(done).collect() })
    }

    fn target(&mut self, runs: &[Run]) -> CliResult<Trained> {
        let spec = self.ws.target_spec(self.ws.config.shuffle()?);
        self.train(runs, &spec, self.ws.config.train.finetune_epochs)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn table(&mut self, name: &str, t: &Table) -> CliResult<()> {
        let p = self.path(name);
        emit(&mut self.files, t, &p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) -> CliResult<()> {
        let p = self.path(name);
        emit_json(&mut self.files, v, &p)
    }
}

pub fn run_figure(ws: &Workspace, id: FigureId, command: &[String]) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, ws.out_dir.join("figures").join(id.as_str()))?;
    match id {
        FigureId::ShuffleSweep => shuffle_sweep(&mut ctx)?,
        FigureId::Barrier => barrier(&mut ctx, &ws.config.grid()?)?,
        FigureId::BarrierExtrapolate => barrier(&mut ctx, &ws.config.extrapolate_grid()?)?,
        FigureId::BarrierCrossdomain => barrier_crossdomain(&mut ctx)?,
        FigureId::BasinFit => basin_fit(&mut ctx)?,
        FigureId::CriticalityHeatmaps => criticality_heatmaps(&mut ctx)?,
        FigureId::CheckpointSweep => checkpoint_sweep(&mut ctx)?,
        FigureId::SimilarityTables => similarity_tables(&mut ctx)?,
        FigureId::SpectrumCurves => spectrum_curves(&mut ctx)?,
    }
    ctx.finish(&id.manifest_id(), command)
}

fn runs_table() -> Table {
    Table::new(&[
        ("run", ColumnKind::Text),
        ("pretrained", ColumnKind::Bool),
        ("init_seed", ColumnKind::Int),
        ("batch_seed", ColumnKind::Int),
        ("final_train_acc", ColumnKind::Real),
        ("final_test_acc", ColumnKind::Real),
        ("optimization_speed", ColumnKind::Real),
        ("speed_epochs", ColumnKind::Int),
    ])
}

fn push_runs(t: &mut Table, prefix: &str, runs: &[(Run, Finetuned)]) {
    for (r, f) in runs {
        let m = f.record.final_metrics();
        t.push(vec![
            Cell::Text(format!("{prefix}{}", r.label())),
            Cell::Bool(r.pretrained),
            Cell::from(if r.pretrained { 0 } else { r.init_seed as usize }),
            Cell::from(r.batch_seed as usize),
            m.train_acc.into(),
            m.test_acc.into(),
            f.record.optimization_speed.unwrap_or(f64::NAN).into(),
            Cell::from(f.record.speed_epochs),
        ]);
    }
}

pub(crate) fn barrier_summary_table() -> Table {
    Table::new(&[
        ("pair", ColumnKind::Text),
        ("dataset", ColumnKind::Text),
        ("train_loss_barrier", ColumnKind::Real),
        ("test_loss_barrier", ColumnKind::Real),
        ("train_acc_barrier", ColumnKind::Real),
        ("test_acc_barrier", ColumnKind::Real),
    ])
}

pub(crate) fn push_barriers(t: &mut Table, pair: &str, curve: &BarrierCurve) -> CliResult<()> {
    for (d, name) in curve.datasets.iter().enumerate() {
        t.push(vec![
            Cell::Text(pair.into()),
            Cell::Text(name.clone()),
            curve.barrier_height(d, SplitSel::Train, Metric::Loss)?.into(),
            curve.barrier_height(d, SplitSel::Test, Metric::Loss)?.into(),
            curve.barrier_height(d, SplitSel::Train, Metric::Accuracy)?.into(),
            curve.barrier_height(d, SplitSel::Test, Metric::Accuracy)?.into(),
        ]);
    }
    Ok(())
}

fn curve(arch: &ArchDescriptor, trained: &Trained, pair: &Pair, grid: &LambdaGrid, sets: &[EvalSet]) -> CliResult<BarrierCurve> {
    let a = &trained.get(pair.a).final_checkpoint.params;
    let b = &trained.get(pair.b).final_checkpoint.params;
    Ok(barrier_curve(a, b, arch, grid, sets, (pair.a.label(), pair.b.label()))?)
}

/// Loss and accuracy along the segment between replicate pairs on the target task.
fn barrier(ctx: &mut Ctx, grid: &LambdaGrid) -> CliResult<()> {
    let pairs = standard_pairs(ctx.ws);
    let runs: Vec<Run> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    let trained = ctx.target(&runs)?;
    let sets = [EvalSet { name: domains_name(&ctx.ws.config.data.target), train: trained.sets.0.clone(), test: trained.sets.1.clone() }];
    let mut summary = barrier_summary_table();
    for p in &pairs {
        let c = curve(&ctx.arch, &trained, p, grid, &sets)?;
        ctx.table(&format!("curve_{}.csv", p.name), &c.to_table())?;
        push_barriers(&mut summary, p.name, &c)?;
    }
    ctx.table("barrier_summary.csv", &summary)?;
    let mut runs = runs_table();
    push_runs(&mut runs, "", &trained.runs);
    ctx.table("runs.csv", &runs)
}

fn eval_set(ws: &Workspace, name: String, domains: &[(DomainId, u64)]) -> CliResult<EvalSet> {
    let (train, test) = ws.load_data(&ws.domains_spec(domains, None))?;
    Ok(EvalSet { name, train, test })
}

/// Target-task pairs evaluated on other domains, plus pairs trained on a union of domains.
fn barrier_crossdomain(ctx: &mut Ctx) -> CliResult<()> {
    let grid = ctx.ws.config.grid()?;
    let [pt, rit, _] = standard_pairs(ctx.ws);
    let cfg = ctx.ws.config.clone();
    let mut summary = barrier_summary_table();

    let trained = ctx.target(&[pt.a, pt.b, rit.a, rit.b])?;
    let mut sets = vec![EvalSet { name: domains_name(&cfg.data.target), train: trained.sets.0.clone(), test: trained.sets.1.clone() }];
    for &(d, seed) in &cfg.interpolate.eval_domains {
        sets.push(eval_set(ctx.ws, d.as_str().into(), &[(d, seed)])?);
    }
    for p in [&pt, &rit] {
        let c = curve(&ctx.arch, &trained, p, &grid, &sets)?;
        ctx.table(&format!("curve_{}.csv", p.name), &c.to_table())?;
        push_barriers(&mut summary, p.name, &c)?;
    }
    let mut runs = runs_table();
    push_runs(&mut runs, "", &trained.runs);

    let combined = &cfg.interpolate.combined_domains;
    if !combined.is_empty() {
        let spec = ctx.ws.domains_spec(combined, None);
        let union = ctx.train(&[pt.a, pt.b, rit.a, rit.b], &spec, cfg.train.finetune_epochs)?;
        let mut sets = vec![EvalSet { name: domains_name(combined), train: union.sets.0.clone(), test: union.sets.1.clone() }];
        if combined.len() > 1 {
            for &(d, seed) in combined {
                sets.push(eval_set(ctx.ws, d.as_str().into(), &[(d, seed)])?);
            }
        }
        for p in [&pt, &rit] {
            let name = format!("combined_{}", p.name);
            let c = curve(&ctx.arch, &union, p, &grid, &sets)?;
            ctx.table(&format!("curve_{name}.csv"), &c.to_table())?;
            push_barriers(&mut summary, &name, &c)?;
        }
        push_runs(&mut runs, "combined_", &union.runs);
    }
    ctx.table("barrier_summary.csv", &summary)?;
    ctx.table("runs.csv", &runs)
}

pub(crate) fn basin_summary_table() -> Table {
    Table::new(&[
        ("pair", ColumnKind::Text),
        ("verdict", ColumnKind::Text),
        ("mu_interval", ColumnKind::Real),
        ("radius", ColumnKind::Real),
        ("epsilon_certified", ColumnKind::Real),
        ("delta_certified", ColumnKind::Real),
    ])
}

/// Fits an error-rate basin around the segment `a`–`b`; appends a summary row and
/// returns the outcome as JSON, without the ball centre.
pub(crate) fn fit_pair(ctx: &Ctx, pair: &str, a: &ParamVector, b: &ParamVector, data: &Dataset, summary: &mut Table) -> CliResult<serde_json::Value> {
    let cfg = &ctx.ws.config.basin;
    let opts = FitOptions {
        interval_points: cfg.interval_points,
        samples: cfg.samples,
        seed: cfg.seed,
        delta_bisection_steps: cfg.delta_bisection_steps,
        walk_bisection_steps: cfg.walk_bisection_steps,
        max_doublings: cfg.max_doublings,
        ..FitOptions::default()
    };
    let landscape = ErrorRate { arch: &ctx.arch, template: a.clone(), data };
    let outcome = fit_basin(&a.to_f64(), &b.to_f64(), &landscape, cfg.epsilon, &opts)?;
    let mut value = serde_json::to_value(&outcome).map_err(basinscope_core::Error::from)?;
    let (verdict, mu, radius, eps, delta) = match &outcome {
        FitOutcome::Fitted { set, mu_interval, epsilon_certified, delta_certified, .. } => {
            // One coordinate per parameter; keep the bundle small.
            if let Some(s) = value.get_mut("set") {
                s["center"] = json!(null);
            }
            ("fitted", *mu_interval, set.radius, *epsilon_certified, delta_certified.unwrap_or(f64::NAN))
        }
        FitOutcome::NotInOneBasin { mu_interval, .. } => ("not_in_one_basin", *mu_interval, f64::NAN, f64::NAN, f64::NAN),
        FitOutcome::Unbounded { mu_interval, .. } => ("unbounded", *mu_interval, f64::INFINITY, f64::NAN, f64::NAN),
    };
    summary.push(vec![Cell::Text(pair.into()), Cell::Text(verdict.into()), mu.into(), radius.into(), eps.into(), delta.into()]);
    Ok(json!({ "pair": pair, "outcome": value }))
}

/// Error-rate basin fits for the P-T and RI-T pairs.
fn basin_fit(ctx: &mut Ctx) -> CliResult<()> {
    let [pt, rit, _] = standard_pairs(ctx.ws);
    let trained = ctx.target(&[pt.a, pt.b, rit.a, rit.b])?;
    let data = trained.sets.1.head(ctx.ws.config.basin.eval_examples.min(trained.sets.1.len()));
    let mut summary = basin_summary_table();
    let mut entries = Vec::new();
    for p in [&pt, &rit] {
        let (a, b) = (&trained.get(p.a).final_checkpoint.params, &trained.get(p.b).final_checkpoint.params);
        entries.push(fit_pair(ctx, p.name, a, b, &data, &mut summary)?);
    }
    let eps = ctx.ws.config.basin.epsilon;
    ctx.json("basin_fit.json", &json!({ "epsilon": eps, "eval_examples": data.len(), "pairs": entries }))?;
    ctx.table("basin_summary.csv", &summary)
}

pub(crate) fn rewind_table() -> Table {
    Table::new(&[
        ("model", ColumnKind::Text),
        ("module", ColumnKind::Text),
        ("test_loss", ColumnKind::Real),
        ("test_acc", ColumnKind::Real),
    ])
}

/// Criticality maps of every requested module of one trained model, written as
/// `<model>_<module>.csv`; returns the model's summary and appends rewind rows.
pub(crate) fn criticality_model(
    ctx: &mut Ctx,
    model: &str,
    init: &Checkpoint,
    saved: &[Checkpoint],
    final_ckpt: &Checkpoint,
    sets: (&Dataset, &Dataset),
    rewind: &mut Table,
) -> CliResult<serde_json::Value> {
    let c = ctx.ws.config.criticality.clone();
    let cfg = ctx.ws.config.criticality_config();
    let known = ctx.arch.module_names();
    let modules = if c.modules.is_empty() { known.clone() } else { c.modules.clone() };
    if let Some(m) = modules.iter().find(|m| !known.contains(m)) {
        return Err(CliError::Config(format!("[criticality] unknown module {m:?}; known: {}", known.join(", "))));
    }
    let train = sets.0.head(c.eval_examples.min(sets.0.len()));
    let test = sets.1.head(c.eval_examples.min(sets.1.len()));
    let end = match c.endpoint {
        Endpoint::Final => final_ckpt,
        Endpoint::Optimal => saved.iter().chain([final_ckpt]).find(|s| s.meta.is_best).unwrap_or(final_ckpt),
    };
    let mids: Vec<&Checkpoint> = saved.iter().filter(|s| s.meta.epoch < end.meta.epoch).collect();
    let maps = modules
        .iter()
        .map(|m| {
            let path = module_path(m, init, &mids, end, c.path)?;
            let loss = ModuleLoss { arch: &ctx.arch, base: end.params.clone(), module: m.clone(), train: &train, test: &test };
            criticality_map(m, &path, &loss, &cfg)
        })
        .collect::<basinscope_core::Result<Vec<CriticalityMap>>>()?;
    for map in &maps {
        ctx.table(&format!("{model}_{}.csv", map.module), &map.to_table())?;
    }
    let rows: Vec<_> = maps
        .iter()
        .map(|m| {
            json!({
                "module": m.module,
                "feasible": m.feasible(),
                "mu": if m.feasible() { json!(m.mu) } else { json!(null) },
                "argmin": m.argmin,
                "displacement": m.displacement,
            })
        })
        .collect();
    for m in &modules {
        let e = rewind_probe(end, init, m, &test)?;
        rewind.push(vec![Cell::Text(model.into()), Cell::Text(m.clone()), e.loss.into(), e.accuracy.into()]);
    }
    Ok(json!({
        "endpoint_epoch": end.meta.epoch,
        "network_criticality": network_criticality(&maps).ok(),
        "modules": rows,
    }))
}

/// Module criticality maps for one P-T and one RI-T run, plus module rewinding.
fn criticality_heatmaps(ctx: &mut Ctx) -> CliResult<()> {
    let [pt, rit, _] = standard_pairs(ctx.ws);
    let trained = ctx.target(&[pt.a, rit.a])?;
    let mut summary = BTreeMap::new();
    let mut rewind = rewind_table();
    for (model, run) in [("pt", pt.a), ("rit", rit.a)] {
        let f = trained.get(run);
        let init = init_checkpoint(&ctx.arch, f.init.clone());
        let sets = (&trained.sets.0, &trained.sets.1);
        let v = criticality_model(ctx, model, &init, &f.saved, &f.final_checkpoint, sets, &mut rewind)?;
        summary.insert(model, v);
    }
    let cfg = ctx.ws.config.criticality_config();
    ctx.json("criticality_summary.json", &json!({ "config": cfg, "models": summary }))?;
    ctx.table("rewind.csv", &rewind)
}

/// Fine-tunes each saved pre-training checkpoint and ranks optimization speed by epoch.
fn checkpoint_sweep(ctx: &mut Ctx) -> CliResult<()> {
    let epochs = ctx.ws.config.sweep.checkpoint_epochs.clone();
    let ckpts = epochs
        .iter()
        .map(|&e| {
            let (c, p) = ctx.ws.load_pretrain_epoch(e)?;
            ctx.inputs.push(p);
            Ok(c)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let [s1, _] = ctx.ws.config.replicate_seeds();
    let data = ctx.ws.target_spec(ctx.ws.config.shuffle()?);
    let sets = ctx.ws.load_data(&data)?;
    let n_epochs = ctx.ws.config.sweep.finetune_epochs;
    let prepared = ckpts
        .iter()
        .map(|c| Ok((ctx.ws.finetune_config(data.clone(), Run::pt(s1), &c.params, n_epochs)?, c.params.clone())))
        .collect::<CliResult<Vec<_>>>()?;
    let done = exec::try_map_indexed(prepared.len(), |i| ctx.ws.finetune(&prepared[i].0, prepared[i].1.clone(), &sets.0, &sets.1))?;

    let mut t = Table::new(&[
        ("ckpt_epoch", ColumnKind::Int),
        ("pretrain_test_acc", ColumnKind::Real),
        ("final_test_acc", ColumnKind::Real),
        ("optimization_speed", ColumnKind::Real),
        ("speed_epochs", ColumnKind::Int),
    ]);
    let mut speeds = Vec::new();
    for (c, f) in ckpts.iter().zip(&done) {
        let speed = f.record.optimization_speed.unwrap_or(f64::NAN);
        speeds.push(speed);
        t.push(vec![
            Cell::from(c.meta.epoch),
            c.meta.test_acc.into(),
            f.record.final_metrics().test_acc.into(),
            speed.into(),
            Cell::from(f.record.speed_epochs),
        ]);
    }
    let x: Vec<f64> = epochs.iter().map(|&e| e as f64).collect();
    let rho = if x.len() >= 2 { spearman(&x, &speeds).ok() } else { None };
    ctx.table("checkpoint_sweep.csv", &t)?;
    ctx.json(
        "checkpoint_sweep_summary.json",
        &json!({ "spearman_epoch_vs_speed": rho, "speed_epochs": done.first().map(|f| f.record.speed_epochs), "finetune_epochs": n_epochs }),
    )
}

/// Mistake table with columns suffixed by the two model names.
pub(crate) fn mistakes_csv(rows: &[MistakeRow], m1: &str, m2: &str) -> Table {
    let names = [
        "class".to_string(),
        "n".into(),
        format!("acc_{m1}"),
        format!("acc_{m2}"),
        format!("only_{m1}_correct"),
        format!("only_{m2}_correct"),
        "common_mistakes".into(),
        "both_correct".into(),
        format!("r_{m1}"),
        format!("r_{m2}"),
    ];
    let kinds = [
        ColumnKind::Text,
        ColumnKind::Int,
        ColumnKind::Real,
        ColumnKind::Real,
        ColumnKind::Int,
        ColumnKind::Int,
        ColumnKind::Int,
        ColumnKind::Int,
        ColumnKind::Real,
        ColumnKind::Real,
    ];
    let cols: Vec<(&str, ColumnKind)> = names.iter().map(String::as_str).zip(kinds).collect();
    let mut t = Table::new(&cols);
    let ratio = |r: basinscope_core::similarity::Ratio| if r.zero_denominator { f64::NAN } else { r.value };
    for r in rows {
        t.push(vec![
            Cell::Text(r.class.map_or("all".into(), |c| c.to_string())),
            Cell::from(r.n),
            r.acc1.into(),
            r.acc2.into(),
            Cell::from(r.g1),
            Cell::from(r.g2),
            Cell::from(r.common),
            Cell::from(r.both_correct),
            ratio(r.r1).into(),
            ratio(r.r2).into(),
        ]);
    }
    t
}

/// `cka.csv` and `l2.csv` for each named pair of parameter vectors.
pub(crate) fn similarity_pairs(ctx: &mut Ctx, pairs: &[(&str, &ParamVector, &ParamVector)], data: &Dataset) -> CliResult<usize> {
    let sim = ctx.ws.config.similarity.clone();
    let sub = data.subset(&subsample_indices(data.len(), sim.max_examples, sim.seed));
    let mut cka = Table::new(&[
        ("pair", ColumnKind::Text),
        ("module", ColumnKind::Text),
        ("cka", ColumnKind::Real),
        ("degenerate", ColumnKind::Bool),
    ]);
    let mut l2 = Table::new(&[("pair", ColumnKind::Text), ("module", ColumnKind::Text), ("l2", ColumnKind::Real)]);
    for &(name, pa, pb) in pairs {
        let rep = compare(pa, pb, &ctx.arch, &sub, sim.seed)?;
        for (m, c) in &rep.cka {
            cka.push(vec![Cell::Text(name.into()), Cell::Text(m.clone()), c.value.into(), Cell::Bool(c.degenerate)]);
        }
        for (m, d) in &rep.l2.per_module {
            l2.push(vec![Cell::Text(name.into()), Cell::Text(m.clone()), (*d).into()]);
        }
        l2.push(vec![Cell::Text(name.into()), Cell::Text("total".into()), rep.l2.total.into()]);
    }
    ctx.table("cka.csv", &cka)?;
    ctx.table("l2.csv", &l2)?;
    Ok(sub.len())
}

/// Per-class and overall common-mistake rows between two models.
pub(crate) fn mistakes(arch: &ArchDescriptor, a: &ParamVector, b: &ParamVector, data: &Dataset) -> CliResult<Vec<MistakeRow>> {
    let p1 = evaluate(a, arch, data)?.predictions;
    let p2 = evaluate(b, arch, data)?.predictions;
    let mut rows = mistake_table(&p1, &p2, &data.labels, GroupBy::Class)?;
    rows.extend(mistake_table(&p1, &p2, &data.labels, GroupBy::Overall)?);
    Ok(rows)
}

/// Feature similarity, parameter distances and common mistakes between runs.
fn similarity_tables(ctx: &mut Ctx) -> CliResult<()> {
    let [pt, rit, _] = standard_pairs(ctx.ws);
    let trained = ctx.target(&[pt.a, pt.b, rit.a, rit.b])?;
    let test = &trained.sets.1;
    let p = |r: Run| &trained.get(r).final_checkpoint.params;
    let examples = similarity_pairs(ctx, &[("pt_pt", p(pt.a), p(pt.b)), ("rit_rit", p(rit.a), p(rit.b)), ("pt_rit", p(pt.a), p(rit.a))], test)?;
    let rows = mistakes(&ctx.arch, p(pt.a), p(rit.a), test)?;
    ctx.table("mistakes.csv", &mistakes_csv(&rows, "pt", "rit"))?;

    let sizes: Vec<f64> = trained.sets.0.class_counts().iter().map(|&c| c as f64).collect();
    let mut corr = BTreeMap::new();
    for (name, r) in [("pt", pt.a), ("rit", rit.a)] {
        let e = evaluate(p(r), &ctx.arch, test)?;
        let v = match class_size_correlation(&e.per_class_accuracy, &sizes) {
            Ok(c) => json!({ "r": c.r, "p_value": c.p_value }),
            Err(err) => json!({ "undefined": err.to_string() }),
        };
        corr.insert(name, v);
    }
    ctx.json("similarity_summary.json", &json!({ "examples": examples, "class_size_correlation": corr }))
}

pub(crate) fn write_spectrum(ctx: &mut Ctx, model: &str, rep: &SpectrumReport, thresholds: &[f64]) -> CliResult<serde_json::Value> {
    ctx.table(&format!("{model}_values.csv"), &rep.values_table())?;
    ctx.table(&format!("{model}_norms.csv"), &rep.norms_table())?;
    ctx.table(&format!("{model}_histogram.csv"), &rep.histogram_table())?;
    ctx.table(&format!("{model}_threshold.csv"), &threshold_table(&threshold_count_curve(&rep.all, thresholds)))?;
    Ok(match norm_ratio_term(rep) {
        Ok(n) => json!(n),
        Err(e) => json!({ "undefined": e.to_string() }),
    })
}

/// Singular value spectra of the pre-trained, P-T and RI-T weights.
fn spectrum_curves(ctx: &mut Ctx) -> CliResult<()> {
    let [pt, rit, _] = standard_pairs(ctx.ws);
    let pre = ctx.pretrained()?;
    let trained = ctx.target(&[pt.a, rit.a])?;
    let models: Vec<(&str, &ParamVector)> = vec![
        ("pretrained", &pre.params),
        ("rit_init", &trained.get(rit.a).init),
        ("pt", &trained.get(pt.a).final_checkpoint.params),
        ("rit", &trained.get(rit.a).final_checkpoint.params),
    ];
    let reports = exec::try_map_indexed(models.len(), |i| network_spectrum(models[i].1, &ctx.arch))?;
    let max = reports.iter().flat_map(|r| r.all.first().copied()).fold(0.0, f64::max);
    let k = ctx.ws.config.spectrum.threshold_points;
    let thresholds: Vec<f64> = (0..k).map(|i| max * i as f64 / (k - 1) as f64).collect();
    let mut norms = BTreeMap::new();
    for ((name, _), rep) in models.iter().zip(&reports) {
        norms.insert(*name, write_spectrum(ctx, name, rep, &thresholds)?);
    }
    let note = reports.first().map(|r| r.note.clone());
    ctx.json("spectrum_summary.json", &json!({ "note": note, "norm_terms": norms }))
}

/// Accuracy of P-T and RI-T runs as the target images are block-shuffled.
fn shuffle_sweep(ctx: &mut Ctx) -> CliResult<()> {
    let [s1, _] = ctx.ws.config.replicate_seeds();
    let d = ctx.ws.config.data.clone();
    let sizes = ctx.ws.config.sweep.block_sizes.clone();
    let mut t = Table::new(&[
        ("block_size", ColumnKind::Text),
        ("pt_test_acc", ColumnKind::Real),
        ("rit_test_acc", ColumnKind::Real),
        ("relative_accuracy_drop", ColumnKind::Real),
    ]);
    let mut all_runs = Vec::new();
    for b in sizes {
        let spec = ctx.ws.target_spec(shuffle_for(b, &d));
        let trained = ctx.train(&[Run::pt(s1), Run::rit(s1, s1)], &spec, ctx.ws.config.train.finetune_epochs)?;
        let a_pt = trained.get(Run::pt(s1)).record.final_metrics().test_acc;
        let a_rit = trained.get(Run::rit(s1, s1)).record.final_metrics().test_acc;
        let drop = relative_accuracy_drop(a_pt, a_rit).unwrap_or(f64::NAN);
        t.push(vec![Cell::Text(b.to_string()), a_pt.into(), a_rit.into(), drop.into()]);
        all_runs.extend(trained.runs.into_iter().map(|(r, f)| (b, r, f)));
    }
    ctx.table("shuffle_sweep.csv", &t)?;
    let mut runs = Table::new(&[("block_size", ColumnKind::Text), ("run", ColumnKind::Text), ("cache_key", ColumnKind::Text)]);
    for (b, r, f) in &all_runs {
        runs.push(vec![Cell::Text(b.to_string()), Cell::Text(r.label()), Cell::Text(f.key.clone())]);
    }
    ctx.table("runs.csv", &runs)
}

fn shuffle_for(b: BlockSize, d: &crate::config::DataSection) -> Option<ShuffleSpec> {
    Some(ShuffleSpec { block: b, seed: d.shuffle_seed, shared: d.shared_permutation })
}

/// Every file a figure bundle lists, for digest comparisons.
pub fn bundle_digests(manifest: &Path) -> CliResult<Vec<(PathBuf, String)>> {
    Ok(basinscope_core::persistence::RunManifest::load(manifest)?.output_digests())
}
