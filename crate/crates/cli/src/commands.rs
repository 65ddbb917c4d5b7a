//! Single-run subcommands. Each writes into `<out>/<command>/<name>/` and a
//! `<command>-<name>.manifest.json`.

use std::path::{Path, PathBuf};

use basinscope_core::dataops::{BlockSize, ShuffleSpec};
use basinscope_core::landscape::{barrier_curve, EvalSet, LambdaGrid};
use basinscope_core::persistence::{load_checkpoint, save_checkpoint};
use basinscope_core::spectrum::network_spectrum;
use basinscope_core::trainer::Checkpoint;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::figures::{
    barrier_summary_table, basin_summary_table, criticality_model, fit_pair, mistakes, mistakes_csv, push_barriers, rewind_table,
    similarity_pairs, write_spectrum, Ctx, FigureOutput,
};
use crate::workspace::{domains_name, init_checkpoint, record_table, Run, Workspace};

/// Loads a checkpoint and checks it against the configured architecture.
fn load_matching(ws: &Workspace, path: &Path) -> CliResult<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let arch = ws.arch()?;
    if ckpt.arch != arch {
        return Err(CliError::Config(format!(
            "checkpoint {} has architecture {} but the config specifies {}",
            path.display(),
            ckpt.arch.to_text(),
            arch.to_text()
        )));
    }
    Ok(ckpt)
}

fn command_dir(ws: &Workspace, command: &str, name: &str) -> CliResult<PathBuf> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::Config(format!("bad run name {name:?}")));
    }
    Ok(ws.out_dir.join(command).join(name))
}

pub fn pretrain(ws: &Workspace, argv: &[String]) -> CliResult<PathBuf> {
    let files = ws.run_pretrain()?;
    ws.write_manifest("pretrain", argv, &[], &files)
}

/// Fine-tunes on the target task from `init`, or from random weights when absent.
pub fn finetune(ws: &Workspace, init: Option<&Path>, shuffle: Option<BlockSize>, name: Option<&str>, argv: &[String]) -> CliResult<FigureOutput> {
    let shuffle = match shuffle {
        Some(block) => Some(ShuffleSpec { block, seed: ws.config.data.shuffle_seed, shared: ws.config.data.shared_permutation }),
        None => ws.config.shuffle()?,
    };
    let [s1, _] = ws.config.replicate_seeds();
    let (run, pre) = match init {
        Some(p) => (Run::pt(s1), Some(load_matching(ws, p)?)),
        None => (Run::rit(s1, s1), None),
    };
    let default_name = match &shuffle {
        Some(s) => format!("{}_shuffle{}", if run.pretrained { "pt" } else { "rit" }, s.block),
        None => (if run.pretrained { "pt" } else { "rit" }).to_string(),
    };
    let name = name.unwrap_or(&default_name);
    let mut ctx = Ctx::new(ws, command_dir(ws, "finetune", name)?)?;
    ctx.inputs.extend(init.map(Path::to_path_buf));

    let init_params = ws.initial_params(run, pre.as_ref())?;
    let cfg = ws.finetune_config(ws.target_spec(shuffle), run, &init_params, ws.config.train.finetune_epochs)?;
    let (train, test) = ws.load_data(&cfg.data)?;
    let done = ws.finetune(&cfg, init_params, &train, &test)?;
    for c in &done.saved {
        let p = ctx.dir.join(format!("e{:03}.llck", c.meta.epoch));
        save_checkpoint(c, &p)?;
        ctx.files.push(p);
    }
    let p = ctx.dir.join("final.llck");
    save_checkpoint(&done.final_checkpoint, &p)?;
    ctx.files.push(p);
    ctx.table("record.csv", &record_table(&done.record))?;
    ctx.json("train_config.json", &cfg)?;
    ctx.finish(&format!("finetune-{name}"), argv)
}

fn load_pair(ws: &Workspace, ctx: &mut Ctx, a: &Path, b: &Path) -> CliResult<(Checkpoint, Checkpoint)> {
    let ca = load_matching(ws, a)?;
    let cb = load_matching(ws, b)?;
    ctx.inputs.extend([a.to_path_buf(), b.to_path_buf()]);
    Ok((ca, cb))
}

/// Loss and accuracy along the segment from `a` to `b` on the target task.
pub fn interpolate(ws: &Workspace, a: &Path, b: &Path, extrapolate: bool, name: &str, argv: &[String]) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, command_dir(ws, "interpolate", name)?)?;
    let (ca, cb) = load_pair(ws, &mut ctx, a, b)?;
    let grid: LambdaGrid = if extrapolate { ws.config.extrapolate_grid()? } else { ws.config.grid()? };
    let (train, test) = ws.load_data(&ws.target_spec(ws.config.shuffle()?))?;
    let sets = [EvalSet { name: domains_name(&ws.config.data.target), train, test }];
    let labels = (a.display().to_string(), b.display().to_string());
    let curve = barrier_curve(&ca.params, &cb.params, &ctx.arch, &grid, &sets, labels)?;
    ctx.table("curve.csv", &curve.to_table())?;
    let mut summary = barrier_summary_table();
    push_barriers(&mut summary, name, &curve)?;
    ctx.table("barrier_summary.csv", &summary)?;
    ctx.finish(&format!("interpolate-{name}"), argv)
}

pub fn basin(ws: &Workspace, a: &Path, b: &Path, name: &str, argv: &[String]) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, command_dir(ws, "basin", name)?)?;
    let (ca, cb) = load_pair(ws, &mut ctx, a, b)?;
    let (_, test) = ws.load_data(&ws.target_spec(ws.config.shuffle()?))?;
    let data = test.head(ws.config.basin.eval_examples.min(test.len()));
    let mut summary = basin_summary_table();
    let v = fit_pair(&ctx, name, &ca.params, &cb.params, &data, &mut summary)?;
    ctx.json("basin_fit.json", &json!({ "epsilon": ws.config.basin.epsilon, "eval_examples": data.len(), "pairs": [v] }))?;
    ctx.table("basin_summary.csv", &summary)?;
    ctx.finish(&format!("basin-{name}"), argv)
}

/// Criticality of each module along the path from `init` through `intermediates` to `final_ckpt`.
pub fn criticality(
    ws: &Workspace,
    init: &Path,
    final_ckpt: &Path,
    intermediates: &[PathBuf],
    name: &str,
    argv: &[String],
) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, command_dir(ws, "criticality", name)?)?;
    let (ci, cf) = load_pair(ws, &mut ctx, init, final_ckpt)?;
    let mut mids = intermediates.iter().map(|p| load_matching(ws, p)).collect::<CliResult<Vec<_>>>()?;
    mids.sort_by_key(|c| c.meta.epoch);
    ctx.inputs.extend(intermediates.iter().cloned());
    let (train, test) = ws.load_data(&ws.target_spec(ws.config.shuffle()?))?;
    let init = init_checkpoint(&ci.arch, ci.params);
    let mut rewind = rewind_table();
    let v = criticality_model(&mut ctx, name, &init, &mids, &cf, (&train, &test), &mut rewind)?;
    ctx.json("criticality_summary.json", &json!({ "config": ws.config.criticality_config(), "models": { name: v } }))?;
    ctx.table("rewind.csv", &rewind)?;
    ctx.finish(&format!("criticality-{name}"), argv)
}

pub fn compare(ws: &Workspace, a: &Path, b: &Path, name: &str, argv: &[String]) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, command_dir(ws, "compare", name)?)?;
    let (ca, cb) = load_pair(ws, &mut ctx, a, b)?;
    let (_, test) = ws.load_data(&ws.target_spec(ws.config.shuffle()?))?;
    similarity_pairs(&mut ctx, &[("a_b", &ca.params, &cb.params)], &test)?;
    let rows = mistakes(&ctx.arch, &ca.params, &cb.params, &test)?;
    ctx.table("mistakes.csv", &mistakes_csv(&rows, "a", "b"))?;
    ctx.finish(&format!("compare-{name}"), argv)
}

pub fn spectrum(ws: &Workspace, ckpt: &Path, name: &str, argv: &[String]) -> CliResult<FigureOutput> {
    let mut ctx = Ctx::new(ws, command_dir(ws, "spectrum", name)?)?;
    let c = load_matching(ws, ckpt)?;
    ctx.inputs.push(ckpt.to_path_buf());
    let rep = network_spectrum(&c.params, &c.arch)?;
    let max = rep.all.first().copied().unwrap_or(0.0);
    let k = ws.config.spectrum.threshold_points;
    let thresholds: Vec<f64> = (0..k).map(|i| max * i as f64 / (k - 1) as f64).collect();
    let norms = write_spectrum(&mut ctx, "model", &rep, &thresholds)?;
    ctx.json("spectrum_summary.json", &json!({ "note": rep.note, "norm_terms": norms }))?;
    ctx.finish(&format!("spectrum-{name}"), argv)
}
