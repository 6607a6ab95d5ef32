//! Temporary diagnostic probe; not part of the shipped test suite.

use std::time::Instant;

use gamestock_core::game::parse_events_csv;
use gamestock_core::graph::{build_graph, parse_holdings_csv, parse_industry_csv, HeteroGraph};
use gamestock_core::metrics::{evaluate, DayVectors};
use gamestock_core::model::{
    anchors_in_range, evaluate_sample, prepare_samples, resolve_events, ModelConfig,
};
use gamestock_core::panel::{SplitIndices, StockPanel};
use gamestock_core::synth::{generate, SyntheticSpec};
use gamestock_core::train::train;

struct Bundle {
    graph: HeteroGraph,
    train_s: Vec<gamestock_core::model::PreparedSample>,
    valid_s: Vec<gamestock_core::model::PreparedSample>,
    test_s: Vec<gamestock_core::model::PreparedSample>,
    oracle_ic: f64,
}

fn setup(spec: &SyntheticSpec, config: &ModelConfig) -> Bundle {
    let market = generate(spec).unwrap();
    let (panel, _) = StockPanel::load_str(&market.panel_csv, 0.95).unwrap();
    let industries = parse_industry_csv(&market.industry_csv).unwrap();
    let holdings = parse_holdings_csv(&market.holdings_csv).unwrap();
    let (graph, _) = build_graph(panel.stocks(), &industries, &holdings).unwrap();
    let events = parse_events_csv(&market.events_csv).unwrap();

    let t = panel.n_days();
    let split = SplitIndices {
        train: (0, t * 7 / 10 - 1),
        valid: (t * 7 / 10, t * 85 / 100 - 1),
        test: (t * 85 / 100, t - 1),
    };
    let (std_panel, _) = panel.standardize(&split).unwrap();
    let (resolved, _) = resolve_events(&events, &std_panel);
    let prep = |range: (usize, usize)| {
        let anchors = anchors_in_range(range, std_panel.n_days(), config.lookback, true);
        prepare_samples(&std_panel, &resolved, config, &anchors, true).unwrap()
    };
    Bundle {
        train_s: prep(split.train),
        valid_s: prep(split.valid),
        test_s: prep(split.test),
        graph,
        oracle_ic: market.bundle.mean_ic.unwrap(),
    }
}

fn test_ic(b: &Bundle, params: &gamestock_core::model::ModelParams, config: &ModelConfig) -> f64 {
    let mut days = Vec::new();
    for s in &b.test_s {
        let (fwd, _) = evaluate_sample(s, &b.graph, params, config).unwrap();
        let mut pred = Vec::new();
        let mut actual = Vec::new();
        for i in 0..fwd.yhat.len() {
            if s.label_available[i] {
                pred.push(fwd.yhat[i]);
                actual.push(s.labels[i]);
            }
        }
        days.push(DayVectors {
            date: s.date.clone(),
            pred,
            actual,
        });
    }
    evaluate(&days).unwrap().0.ic
}

#[test]
#[ignore]
fn probe_production_schedule() {
    let mut ratios = Vec::new();
    for seed in 1..=5u64 {
        let started = Instant::now();
        let spec = SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        };
        let config = ModelConfig {
            seed,
            ..ModelConfig::default()
        };
        let b = setup(&spec, &config);
        let out = train(&b.train_s, &b.valid_s, &b.graph, &config).unwrap();
        let ic = test_ic(&b, &out.params, &config);
        let last = out.log.last().unwrap();
        println!(
            "seed {seed}: oracle {:.4} thresh {:.4} model {:+.4} ratio {:.3} | best_epoch {} last_epoch {} lr_end {:.2e} stopped_early {} | {:.0} s",
            b.oracle_ic,
            0.7 * b.oracle_ic,
            ic,
            ic / b.oracle_ic,
            out.best_epoch,
            last.epoch,
            last.lr,
            out.stopped_early,
            started.elapsed().as_secs_f64()
        );
        ratios.push(ic / b.oracle_ic);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("mean ratio {mean:.3} (need >= 0.7)");
}
