//! The five subcommands. Each one loads the config, claims a run directory,
//! does its work, and leaves behind artifacts plus a run log and manifest.

use std::path::{Path, PathBuf};

use gamestock_core::game::{parse_events_csv, GameEvent};
use gamestock_core::graph::{
    build_graph, graph_statistics, parse_holdings_csv, parse_industry_csv, HeteroGraph,
};
use gamestock_core::metrics::{evaluate, DayVectors};
use gamestock_core::model::{
    anchors_in_range, predict_range, prepare_samples, resolve_events, Checkpoint,
    CHECKPOINT_VERSION,
};
use gamestock_core::panel::StockPanel;
use gamestock_core::synth::{generate, OracleBundle, SynthError};
use gamestock_core::train::{log_to_csv, train};

use crate::config::{effective_toml, load_config, runtime, CliError, CliResult, RunConfig};
use crate::io::{newest_run_with, RunContext};

pub fn run(command: &'static str, config_path: &Path, overrides: &[String]) -> CliResult<()> {
    let config = load_config(config_path, overrides)?;
    let seed = if command == "generate" {
        config.synth.seed
    } else {
        config.train.seed
    };
    let mut ctx = RunContext::create(command, Path::new(&config.output.dir), seed)?;
    println!("run directory: {}", ctx.dir.display());
    ctx.log(format!("command: {command}"));
    ctx.log(format!("config file: {}", config_path.display()));
    ctx.read_input(config_path)?;
    for ov in overrides {
        ctx.log(format!("override: --set {ov}"));
    }
    ctx.log("effective config (defaults applied):");
    for line in effective_toml(&config).lines() {
        ctx.log(format!("  {line}"));
    }
    let result = match command {
        "generate" => cmd_generate(&config, &mut ctx),
        "train" => cmd_train(&config, &mut ctx),
        "evaluate" => cmd_evaluate(&config, &mut ctx),
        "predict" => cmd_predict(&config, &mut ctx),
        "graph-stats" => cmd_graph_stats(&config, &mut ctx),
        other => unreachable!("unknown command {other}"),
    };
    match result {
        Ok(()) => {
            ctx.finish(&config, overrides, Ok(()))?;
            Ok(())
        }
        Err(e) => {
            let _ = ctx.finish(&config, overrides, Err(&e));
            Err(e)
        }
    }
}

fn resolve_data_dir(config: &RunConfig) -> CliResult<PathBuf> {
    if let Some(d) = &config.data.dir {
        return Ok(PathBuf::from(d));
    }
    newest_run_with(Path::new(&config.output.dir), "data/panel.csv")
        .map(|p| p.join("data"))
        .ok_or_else(|| {
            CliError::Config(format!(
                "no dataset found under {:?}: run generate first or set data.dir",
                config.output.dir
            ))
        })
}

fn resolve_checkpoint(explicit: &Option<String>, config: &RunConfig) -> CliResult<PathBuf> {
    if let Some(p) = explicit {
        return Ok(PathBuf::from(p));
    }
    newest_run_with(Path::new(&config.output.dir), "checkpoint.json")
        .map(|p| p.join("checkpoint.json"))
        .ok_or_else(|| {
            CliError::Config(format!(
                "no checkpoint found under {:?}: run train first or set the checkpoint key",
                config.output.dir
            ))
        })
}

struct Dataset {
    dir: PathBuf,
    panel: StockPanel,
    events: Vec<GameEvent>,
    graph: HeteroGraph,
}

fn load_dataset(
    config: &RunConfig,
    ctx: &mut RunContext,
    need_events: bool,
) -> CliResult<Dataset> {
    let dir = resolve_data_dir(config)?;
    ctx.log(format!("data directory: {}", dir.display()));
    let panel_text = ctx.read_input(&dir.join("panel.csv"))?;
    let (panel, report) =
        StockPanel::load_str(&panel_text, config.data.min_presence).map_err(runtime)?;
    if !report.dropped.is_empty() {
        ctx.log(format!(
            "dropped {} stocks below {:.0}% presence",
            report.dropped.len(),
            config.data.min_presence * 100.0
        ));
    }
    if report.filled > 0 {
        ctx.log(format!("forward-filled {} missing values", report.filled));
    }
    if report.backfilled > 0 {
        ctx.log(format!("backfilled {} leading values", report.backfilled));
    }
    let industry_text = ctx.read_input(&dir.join("industry.csv"))?;
    let industry = parse_industry_csv(&industry_text).map_err(runtime)?;
    let holdings_text = ctx.read_input(&dir.join("holdings.csv"))?;
    let holdings = parse_holdings_csv(&holdings_text).map_err(runtime)?;
    let events_path = dir.join("events.csv");
    let events = if need_events || events_path.is_file() {
        let text = ctx.read_input(&events_path)?;
        parse_events_csv(&text).map_err(runtime)?
    } else {
        ctx.log("no events.csv present; proceeding with zero events");
        Vec::new()
    };
    let (graph, warnings) = build_graph(panel.stocks(), &industry, &holdings).map_err(runtime)?;
    for w in &warnings {
        ctx.log(format!("graph warning: {w}"));
    }
    Ok(Dataset {
        dir,
        panel,
        events,
        graph,
    })
}

fn cmd_generate(config: &RunConfig, ctx: &mut RunContext) -> CliResult<()> {
    let spec = config.synth_spec();
    let market = generate(&spec).map_err(|e| match e {
        SynthError::BadSpec(_) => CliError::Config(format!("synth: {e}")),
        other => runtime(other),
    })?;
    ctx.write_output("data/panel.csv", market.panel_csv.as_bytes())?;
    ctx.write_output("data/industry.csv", market.industry_csv.as_bytes())?;
    ctx.write_output("data/holdings.csv", market.holdings_csv.as_bytes())?;
    ctx.write_output("data/events.csv", market.events_csv.as_bytes())?;
    let oracle = serde_json::to_string_pretty(&market.bundle)
        .map_err(|e| runtime(format!("oracle bundle serialization: {e}")))?
        + "\n";
    ctx.write_output("data/oracle.json", oracle.as_bytes())?;
    let event_rows = market.events_csv.lines().count().saturating_sub(1);
    let summary = format!(
        "generated {} stocks x {} days across {} industries, {} events",
        spec.n_stocks, spec.n_days, spec.n_industries, event_rows
    );
    ctx.log(&summary);
    match market.bundle.mean_ic {
        Some(ic) => ctx.log(format!(
            "oracle mean daily IC {:.6} over {} days",
            ic, market.bundle.days_used
        )),
        None => ctx.log("oracle mean daily IC undefined (no cross-sectional variance)"),
    }
    println!("{summary}");
    Ok(())
}

fn cmd_train(config: &RunConfig, ctx: &mut RunContext) -> CliResult<()> {
    let model_config = config.model_config()?;
    let ds = load_dataset(config, ctx, model_config.use_gre)?;
    let split_spec = config.split_spec(ds.panel.dates())?;
    ctx.log(format!(
        "split: train [{} .. {}], valid [{} .. {}], test [{} .. {}]",
        split_spec.train.0,
        split_spec.train.1,
        split_spec.valid.0,
        split_spec.valid.1,
        split_spec.test.0,
        split_spec.test.1
    ));
    let split = split_spec
        .resolve(ds.panel.dates())
        .map_err(|e| CliError::Config(format!("split: {e}")))?;
    let (std_panel, std_report) = ds.panel.standardize(&split).map_err(runtime)?;
    if !std_report.floored.is_empty() {
        ctx.log(format!(
            "{} (stock, channel) pairs hit the variance floor during standardization",
            std_report.floored.len()
        ));
    }
    if !std_report.no_train_data.is_empty() {
        ctx.log(format!(
            "{} stocks had no observations in the training range",
            std_report.no_train_data.len()
        ));
    }
    let (events, skipped) = resolve_events(&ds.events, &std_panel);
    if skipped > 0 {
        ctx.log(format!(
            "skipped {skipped} events referencing unknown stocks or dates"
        ));
    }
    let n_days = std_panel.dates().len();
    let train_anchors = anchors_in_range(split.train, n_days, model_config.lookback, true);
    let valid_anchors = anchors_in_range(split.valid, n_days, model_config.lookback, true);
    let train_samples =
        prepare_samples(&std_panel, &events, &model_config, &train_anchors, true)
            .map_err(runtime)?;
    let valid_samples =
        prepare_samples(&std_panel, &events, &model_config, &valid_anchors, true)
            .map_err(runtime)?;
    ctx.log(format!(
        "{} training days, {} validation days",
        train_samples.len(),
        valid_samples.len()
    ));
    let outcome = train(&train_samples, &valid_samples, &ds.graph, &model_config)
        .map_err(runtime)?;
    let stats = std_panel
        .train_stats()
        .expect("standardized panel carries train statistics")
        .clone();
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: model_config,
        stocks: std_panel.stocks().to_vec(),
        params: outcome.params,
        stats,
    };
    let ckpt_json = serde_json::to_string(&ckpt)
        .map_err(|e| runtime(format!("checkpoint serialization: {e}")))?
        + "\n";
    ctx.write_output("checkpoint.json", ckpt_json.as_bytes())?;
    ctx.write_output("training_log.csv", log_to_csv(&outcome.log).as_bytes())?;
    let summary = format!(
        "trained {} epochs (stopped early: {}); best epoch {} with validation loss {:.6e}",
        outcome.log.len(),
        outcome.stopped_early,
        outcome.best_epoch,
        outcome.best_valid
    );
    ctx.log(&summary);
    if let Some(ic) = outcome.log.last().and_then(|r| r.valid_ic) {
        ctx.log(format!("final-epoch validation IC {ic:.4}"));
    }
    println!("{summary}");
    Ok(())
}

fn load_checkpoint(path: &Path, ctx: &mut RunContext) -> CliResult<Checkpoint> {
    let text = ctx.read_input(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| runtime(format!("checkpoint {} does not parse: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(runtime(format!(
            "checkpoint version {} is unsupported (this build reads version {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ctx.log(format!("checkpoint: {}", path.display()));
    Ok(ckpt)
}

fn cmd_evaluate(config: &RunConfig, ctx: &mut RunContext) -> CliResult<()> {
    let ckpt_path = resolve_checkpoint(&config.evaluate.checkpoint, config)?;
    let ckpt = load_checkpoint(&ckpt_path, ctx)?;
    let ds = load_dataset(config, ctx, ckpt.config.use_gre)?;
    let split = config
        .split_spec(ds.panel.dates())?
        .resolve(ds.panel.dates())
        .map_err(|e| CliError::Config(format!("split: {e}")))?;
    let dates = ds.panel.dates();
    let range = (dates[split.test.0].clone(), dates[split.test.1].clone());
    ctx.log(format!("evaluating test range [{} .. {}]", range.0, range.1));
    let table = predict_range(&ckpt, &ds.panel, &ds.graph, &ds.events, (&range.0, &range.1))
        .map_err(runtime)?;
    let mut days: Vec<DayVectors> = Vec::new();
    for (i, date) in table.dates.iter().enumerate() {
        let t = ds
            .panel
            .date_index(date)
            .expect("predicted dates come from the panel calendar");
        let batch = ds
            .panel
            .window_at(t, ckpt.config.lookback)
            .map_err(runtime)?;
        let mut pred = Vec::new();
        let mut actual = Vec::new();
        for s in 0..table.stocks.len() {
            if batch.label_available[s] {
                pred.push(table.scores.at(i, s));
                actual.push(batch.labels[s]);
            }
        }
        if !pred.is_empty() {
            days.push(DayVectors {
                date: date.clone(),
                pred,
                actual,
            });
        }
    }
    let (report, series) = evaluate(&days).map_err(runtime)?;
    let oracle_path = ds.dir.join("oracle.json");
    let oracle_mean_ic = if oracle_path.is_file() {
        let text = ctx.read_input(&oracle_path)?;
        let bundle: OracleBundle = serde_json::from_str(&text)
            .map_err(|e| runtime(format!("oracle bundle does not parse: {e}")))?;
        bundle.mean_ic
    } else {
        None
    };
    let report_json = serde_json::json!({
        "ic": report.ic,
        "rank_ic": report.rank_ic,
        "icir": report.icir,
        "rank_icir": report.rank_icir,
        "days_used": report.days_used,
        "days_excluded": report.days_excluded,
        "test_range": {"start": range.0, "end": range.1},
        "oracle_mean_ic": oracle_mean_ic,
    });
    let report_text = serde_json::to_string_pretty(&report_json)
        .map_err(|e| runtime(format!("report serialization: {e}")))?
        + "\n";
    ctx.write_output("report.json", report_text.as_bytes())?;
    let mut csv = String::from("date,ic,rank_ic,stocks_used\n");
    for i in 0..series.dates.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            series.dates[i], series.ic[i], series.rank_ic[i], series.stocks_used[i]
        ));
    }
    ctx.write_output("daily_series.csv", csv.as_bytes())?;
    for (date, why) in &series.excluded {
        ctx.log(format!("excluded {date}: {why}"));
    }
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "undefined".to_string(),
    };
    let summary = format!(
        "IC {:.4}  RankIC {:.4}  ICIR {}  RankICIR {}  ({} days used, {} excluded)",
        report.ic,
        report.rank_ic,
        fmt_opt(report.icir),
        fmt_opt(report.rank_icir),
        report.days_used,
        report.days_excluded
    );
    ctx.log(&summary);
    if let Some(oracle_ic) = oracle_mean_ic {
        ctx.log(format!("oracle mean daily IC {oracle_ic:.6}"));
    }
    println!("{summary}");
    Ok(())
}

fn cmd_predict(config: &RunConfig, ctx: &mut RunContext) -> CliResult<()> {
    let ckpt_path = resolve_checkpoint(&config.predict.checkpoint, config)?;
    let ckpt = load_checkpoint(&ckpt_path, ctx)?;
    let ds = load_dataset(config, ctx, ckpt.config.use_gre)?;
    let range = match &config.predict.range {
        Some((a, b)) => (a.clone(), b.clone()),
        None => {
            let split = config
                .split_spec(ds.panel.dates())?
                .resolve(ds.panel.dates())
                .map_err(|e| CliError::Config(format!("split: {e}")))?;
            let dates = ds.panel.dates();
            (dates[split.test.0].clone(), dates[split.test.1].clone())
        }
    };
    ctx.log(format!("predicting range [{} .. {}]", range.0, range.1));
    let table = predict_range(&ckpt, &ds.panel, &ds.graph, &ds.events, (&range.0, &range.1))
        .map_err(runtime)?;
    let mut csv = String::from("date");
    for s in &table.stocks {
        csv.push(',');
        csv.push_str(s);
    }
    csv.push('\n');
    for i in 0..table.dates.len() {
        csv.push_str(&table.dates[i]);
        for j in 0..table.stocks.len() {
            csv.push_str(&format!(",{}", table.scores.at(i, j)));
        }
        csv.push('\n');
    }
    ctx.write_output("predictions.csv", csv.as_bytes())?;
    let summary = format!(
        "wrote {} prediction days x {} stocks",
        table.dates.len(),
        table.stocks.len()
    );
    ctx.log(&summary);
    println!("{summary}");
    Ok(())
}

fn cmd_graph_stats(config: &RunConfig, ctx: &mut RunContext) -> CliResult<()> {
    let ds = load_dataset(config, ctx, false)?;
    let stats = graph_statistics(&ds.graph);
    let json = serde_json::json!({
        "stocks": stats.n_stocks,
        "industries": stats.n_industries,
        "investors": stats.n_investors,
        "edges": {
            "same_industry": stats.edge_counts[0],
            "in_industry": stats.edge_counts[1],
            "held_by": stats.edge_counts[2],
        },
        "connected_components": stats.components,
        "mean_stock_closeness": stats.mean_stock_closeness,
        "isolated_stocks": stats.isolated_stocks,
    });
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| runtime(format!("stats serialization: {e}")))?
        + "\n";
    ctx.write_output("graph_stats.json", text.as_bytes())?;
    let summary = format!(
        "{} stocks, {} industries, {} investors; edges same_industry={} in_industry={} held_by={}; {} components; mean stock closeness {:.4}; {} isolated stocks",
        stats.n_stocks,
        stats.n_industries,
        stats.n_investors,
        stats.edge_counts[0],
        stats.edge_counts[1],
        stats.edge_counts[2],
        stats.components,
        stats.mean_stock_closeness,
        stats.isolated_stocks
    );
    ctx.log(&summary);
    println!("{summary}");
    Ok(())
}
