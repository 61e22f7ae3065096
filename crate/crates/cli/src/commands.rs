use std::fmt;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use vvkrein::assembly::{assemble, Boundary};
use vvkrein::catalog::{validate_catalog, Catalog};
use vvkrein::eigensolve::{counting_function, eigenvalue};
use vvkrein::measure::{decompose, fmt17, refine_uniform};
use vvkrein::rng::{derive_seed, Stream};
use vvkrein::spectral::{
    bracketing_check, counting_slope, cutset_stats_check, default_window, geometric_grid, solve_gamma,
    solve_gamma_homogeneous, solve_gamma_recursive, MonteCarloF, SolveOptions,
};
use vvkrein::vtree::{build_tree, TreeOptions, VTree};

use crate::config::RunConfig;
use crate::output::{meta, OutDir};

/// Stream indices under the run seed.
const TREE_STREAM: u64 = 0;
const MONTE_CARLO_STREAM: u64 = 1;

const DEFAULT_COUNT_POINTS: usize = 200;
const DEFAULT_BRACKET_GRID: (f64, f64, usize) = (1.0, 1e5, 16);

/// Configuration or catalog problems; reported with exit status 2.
#[derive(Debug)]
pub struct InvalidConfig(pub String);

impl fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidConfig {}

fn checked_catalog(config: &RunConfig) -> Result<Catalog> {
    let catalog = config.catalog.to_catalog();
    let report = validate_catalog(&catalog);
    if !report.is_valid() {
        let text = serde_json::to_string_pretty(&json!({ "violations": report.violations }))?;
        return Err(InvalidConfig(format!("catalog failed validation:\n{text}")).into());
    }
    Ok(catalog)
}

fn tree(config: &RunConfig, catalog: &Catalog) -> Result<VTree> {
    let options = config.root_type.map(TreeOptions::with_root).unwrap_or_default();
    let mut rng = Stream::substream(config.seed, TREE_STREAM);
    build_tree(catalog, config.v, config.level, options, &mut rng).context("building tree")
}

fn error_value(e: impl fmt::Display) -> Value {
    json!({ "error": e.to_string() })
}

pub fn validate(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = config.catalog.to_catalog();
    let report = validate_catalog(&catalog);
    let messages: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    out.json(
        "validate.json",
        &json!({ "meta": meta("validate", config), "report": report, "messages": messages }),
    )?;
    if !report.is_valid() {
        let text = serde_json::to_string_pretty(&json!({ "violations": report.violations, "messages": messages }))?;
        return Err(InvalidConfig(format!("catalog failed validation:\n{text}")).into());
    }
    Ok(format!("catalog valid: {} systems", catalog.len()))
}

pub fn tree_cmd(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    let tree = tree(config, &catalog)?;
    out.with_buffer("tree.jsonl", |buf| tree.write_jsonl(buf))?;
    let mut necks = Vec::new();
    for (j, &level) in tree.necks().iter().enumerate() {
        let ty = tree.environments()[level - 1].neck_type().expect("neck environment");
        necks.push(json!({ "index": j + 1, "level": level, "type": ty }));
    }
    out.with_buffer("necks.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["index", "level", "type"])?;
        for n in &necks {
            w.write_record([n["index"].to_string(), n["level"].to_string(), n["type"].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let environments: Value = serde_json::from_str(&tree.environments_json()?)?;
    out.json(
        "tree.json",
        &json!({
            "meta": meta("tree", config),
            "v": tree.v(),
            "root_type": tree.root_type(),
            "depth": tree.depth(),
            "node_count": tree.node_count(),
            "necks": necks,
            "environments": environments,
        }),
    )?;
    Ok(format!(
        "tree: depth {}, {} nodes, {} necks",
        tree.depth(),
        tree.node_count(),
        tree.necks().len()
    ))
}

pub fn measure(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    let tree = tree(config, &catalog)?;
    let d = refine_uniform(&decompose(&tree, config.level)?, config.splits)?;
    out.with_buffer("cells.csv", |buf| d.write_csv(buf))?;
    out.json(
        "measure.json",
        &json!({
            "meta": meta("measure", config),
            "level": d.level,
            "splits": d.splits,
            "cells": d.len(),
            "gaps": d.gaps.len(),
            "total_mass": d.total_mass(),
        }),
    )?;
    Ok(format!("measure: {} cells, total mass {:.15}", d.len(), d.total_mass()))
}

pub fn count(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    let tree = tree(config, &catalog)?;
    let d = refine_uniform(&decompose(&tree, config.level)?, config.splits)?;
    let pd = assemble(&d, Boundary::Dirichlet)?;
    let pn = assemble(&d, Boundary::Neumann)?;
    let xs = match config.grid {
        Some(g) => geometric_grid(g.x_lo, g.x_hi, g.count)?,
        None => {
            let (lo, hi) = default_window(&pd)?;
            geometric_grid(lo, hi, DEFAULT_COUNT_POINTS)?
        }
    };
    let cd = counting_function(&pd, &xs)?;
    let cn = counting_function(&pn, &xs)?;
    out.with_buffer("counts.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["x", "N_D", "N_N"])?;
        for (a, b) in cd.iter().zip(&cn) {
            w.write_record([fmt17(a.x), a.count.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let lambda_1 = eigenvalue(&pd, 1)?;
    out.json(
        "count.json",
        &json!({
            "meta": meta("count", config),
            "level": config.level,
            "splits": config.splits,
            "dimension_dirichlet": pd.dim(),
            "dimension_neumann": pn.dim(),
            "lambda_1_dirichlet": lambda_1,
            "points": xs.len(),
        }),
    )?;
    Ok(format!("count: {} grid points, lambda_1 = {lambda_1:.10e}", xs.len()))
}

pub fn exponent(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    // One system or V = 1: every level is a neck and f has a closed form.
    let exact = if config.v == 1 || catalog.len() == 1 {
        Some(solve_gamma_homogeneous(&catalog)?)
    } else {
        None
    };
    let recursive = solve_gamma_recursive(&catalog)?;
    let mc_seed = derive_seed(config.seed, MONTE_CARLO_STREAM);
    let mut mc = MonteCarloF::new(&catalog, config.v, config.blocks, mc_seed)?;
    let monte_carlo = solve_gamma(&mut mc, SolveOptions::monte_carlo());

    let empirical = tree(config, &catalog).and_then(|tree| {
        let d = refine_uniform(&decompose(&tree, config.level)?, config.splits)?;
        let pd = assemble(&d, Boundary::Dirichlet)?;
        let window = config.grid.map(|g| (g.x_lo, g.x_hi));
        let points = config.grid.map_or(DEFAULT_COUNT_POINTS, |g| g.count);
        Ok(counting_slope(&pd, window, points)?)
    });

    let (gamma, method) = match (&exact, &monte_carlo) {
        (Some(r), _) => (r.gamma, serde_json::to_value(r.method)?),
        (None, Ok(r)) => (r.gamma, serde_json::to_value(r.method)?),
        (None, Err(e)) => return Err(anyhow::anyhow!("Monte Carlo root failed: {e}")),
    };
    if let Ok((_, samples)) = &empirical {
        out.with_buffer("exponent_counts.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["x", "N_D"])?;
            for s in samples {
                w.write_record([fmt17(s.x), s.count.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let to_value = |r: Result<Value>| r.unwrap_or_else(error_value);
    out.json(
        "exponent.json",
        &json!({
            "meta": meta("exponent", config),
            "gamma": gamma,
            "gamma_method": method,
            "exact": exact,
            "monte_carlo": to_value(monte_carlo.map_err(anyhow::Error::from).and_then(|r| Ok(serde_json::to_value(r)?))),
            "recursive_oracle": { "gamma": recursive },
            "empirical": to_value(empirical.and_then(|(fit, _)| Ok(serde_json::to_value(fit)?))),
        }),
    )?;
    Ok(format!("gamma = {gamma:.10}"))
}

fn bracket_grid(config: &RunConfig) -> Result<Vec<f64>> {
    let (lo, hi, n) = config.grid.map_or(DEFAULT_BRACKET_GRID, |g| (g.x_lo, g.x_hi, g.count));
    Ok(geometric_grid(lo, hi, n)?)
}

pub fn bracket(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    let tree = tree(config, &catalog)?;
    let xs = bracket_grid(config)?;
    let mut results = Vec::new();
    for k in config.k.min..=config.k.max {
        let res = bracketing_check(&tree, k, &xs, config.level, config.splits)
            .with_context(|| format!("bracketing at k = {k}"))?;
        out.with_buffer(&format!("bracket_k{k}.csv"), |buf| res.write_csv(buf))?;
        results.push(res);
    }
    let passed = results.iter().all(|r| r.passed);
    out.json(
        "bracket.json",
        &json!({ "meta": meta("bracket", config), "passed": passed, "results": results }),
    )?;
    Ok(format!(
        "bracket: k = {}..{}: {}",
        config.k.min,
        config.k.max,
        if passed { "all chains hold" } else { "violations found" }
    ))
}

pub fn cutsets(config: &RunConfig, out: &mut OutDir) -> Result<String> {
    let catalog = checked_catalog(config)?;
    let tree = tree(config, &catalog)?;
    let ks: Vec<u32> = (config.k.min..=config.k.max).collect();
    let rows = cutset_stats_check(&tree, &ks, config.level, config.splits, 1.0)?;
    out.with_buffer("cutsets.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "k",
            "M_k",
            "T_k",
            "y_k",
            "min_product",
            "max_product",
            "chain_floor",
            "chain_holds",
            "N_D_T",
            "N_D_kT",
            "ratio_lower",
            "ratio_upper",
        ])?;
        for r in &rows {
            w.write_record([
                r.k.to_string(),
                r.m_k.to_string(),
                fmt17(r.t_k),
                r.y_k.to_string(),
                fmt17(r.min_product),
                fmt17(r.max_product),
                fmt17(r.chain_floor),
                r.chain_holds.to_string(),
                r.n_dirichlet_at_t.to_string(),
                r.n_dirichlet_at_kt.to_string(),
                fmt17(r.ratio_lower),
                fmt17(r.ratio_upper),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let chain = rows.iter().all(|r| r.chain_holds);
    out.json(
        "cutsets.json",
        &json!({ "meta": meta("cutsets", config), "chain_holds": chain, "rows": rows }),
    )?;
    Ok(format!(
        "cutsets: {} rows, chain {}",
        rows.len(),
        if chain { "holds" } else { "violated" }
    ))
}
