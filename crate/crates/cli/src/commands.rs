use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use flexload::agent::dpg::GreedyBernoulli;
use flexload::agent::dqn::GreedyQ;
use flexload::metrics::{build_report, merge_tables, read_table_csv, render_markdown, write_table_csv};
use flexload::oracle::{best_schedule, oracle_evaluation, unoptimized_evaluation};
use flexload::profiles::load_profiles_csv;
use flexload::{
    evaluate_policy, greedy_valley_fill, train_dpg, train_dqn, AgentRng, BuildingEvaluation, Method, Network,
    Objective, OutputMode, RandomPolicy,
};
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::artifacts::Artifacts;
use crate::config::{AgentKind, ExperimentConfig};
use crate::{Baseline, Common, EvalArgs, OracleArgs, ReportArgs, TrainArgs};

struct Resolved {
    config: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

fn resolve(common: &Common) -> Result<Resolved> {
    let config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = common.seed.unwrap_or(config.seed);
    let out = common.out.clone().unwrap_or_else(|| config.out.clone());
    Ok(Resolved { config, seed, out })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn train(args: TrainArgs) -> Result<Vec<PathBuf>> {
    let Resolved { mut config, seed, out } = resolve(&args.common)?;
    let agent = args.agent.unwrap_or(config.agent);
    config.agent = agent;
    config.seed = seed;
    if let Some(n) = args.episodes {
        config.dpg.episodes = n;
        config.dqn.episodes = n;
    }
    let household = config.train_household()?;
    let mut rng = AgentRng::seed_from_u64(seed);
    let outcome = match agent {
        AgentKind::Dpg => train_dpg(&household, &config.dpg, &config.rewards, &mut rng)?,
        AgentKind::Dqn => train_dqn(&household, &config.dqn, &config.rewards, &mut rng)?,
    };

    let mut checkpoint = Vec::new();
    outcome.network.write_checkpoint(&mut checkpoint)?;
    let mut artifacts = Artifacts::new(&out)?;
    let name = agent.name();
    artifacts.write(&format!("{name}_checkpoint.bin"), |w| Ok(w.write_all(&checkpoint)?))?;
    artifacts.write(&format!("{name}_curve.csv"), |w| Ok(outcome.curve.write_csv(w)?))?;
    artifacts.write(&format!("{name}_config.json"), |w| Ok(serde_json::to_writer_pretty(w, &config)?))?;
    if let Some(last) = outcome.curve.points.last() {
        eprintln!(
            "{name}: {} episodes, last episode reward {:.2}, peak {:.3} kW",
            outcome.curve.len(),
            last.mean_reward,
            last.mean_peak
        );
    }
    eprintln!("checkpoint sha256 {}", sha256_hex(&checkpoint));
    Ok(artifacts.keep())
}

fn infer_agent(net: &Network, requested: Option<AgentKind>) -> Result<AgentKind> {
    let inferred = match net.output_mode() {
        OutputMode::SigmoidPerUnit => AgentKind::Dpg,
        OutputMode::Linear => AgentKind::Dqn,
    };
    match requested {
        Some(a) if a != inferred => {
            bail!("checkpoint holds a {} network but --agent {} was given", inferred.name(), a.name())
        }
        _ => Ok(inferred),
    }
}

pub fn eval(args: EvalArgs) -> Result<Vec<PathBuf>> {
    let Resolved { config, seed, out } = resolve(&args.common)?;
    let household = config.eval_household(args.days.as_deref())?;
    let threads = args.parallel_days.max(1);
    let coeff = &config.rewards;

    let evaluation: BuildingEvaluation = match (&args.checkpoint, args.baseline) {
        (Some(path), _) => {
            let net = Network::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            if net.input_size() != household.config.state_dim() {
                bail!(
                    "checkpoint expects {} state features but the {:?} problem has {}",
                    net.input_size(),
                    household.problem(),
                    household.config.state_dim()
                );
            }
            match infer_agent(&net, args.agent)? {
                AgentKind::Dpg => {
                    evaluate_policy(&household, Method::Dpg, || GreedyBernoulli(&net), coeff, seed, threads)?
                }
                AgentKind::Dqn => evaluate_policy(&household, Method::Dqn, || GreedyQ(&net), coeff, seed, threads)?,
            }
        }
        (None, Some(Baseline::Unoptimized)) => unoptimized_evaluation(&household)?,
        (None, Some(Baseline::Random)) => {
            evaluate_policy(&household, Method::Random, || RandomPolicy, coeff, seed, threads)?
        }
        (None, Some(Baseline::OraclePeak)) => oracle_evaluation(&household, Objective::Peak)?,
        (None, Some(Baseline::OracleCost)) => oracle_evaluation(&household, Objective::Cost)?,
        (None, None) => bail!("pass --checkpoint or --baseline"),
    };
    let report = build_report(std::slice::from_ref(&evaluation))?;

    let method = report.method.to_string();
    let mut artifacts = Artifacts::new(&out)?;
    artifacts.write(&format!("{method}_table.csv"), |w| Ok(report.write_table_csv(w)?))?;
    artifacts.write(&format!("{method}_annual_costs.csv"), |w| Ok(report.write_annual_costs_csv(w)?))?;
    artifacts.write(&format!("{method}_report.json"), |w| Ok(serde_json::to_writer_pretty(w, &report)?))?;
    let row = &report.buildings[0];
    eprintln!(
        "{method}: {} days, mean peak {:.3} -> {:.3} kW, mean cost {:.3} -> {:.3}",
        row.days,
        row.unoptimized_peak.mean,
        row.optimized_peak.mean,
        row.unoptimized_cost.mean,
        row.optimized_cost.mean
    );
    Ok(artifacts.keep())
}

pub fn oracle(args: OracleArgs) -> Result<Vec<PathBuf>> {
    let Resolved { config, out, .. } = resolve(&args.common)?;
    let grid = config.grid()?;
    let days = load_profiles_csv(&args.day, grid).with_context(|| format!("loading {}", args.day.display()))?;
    let day = match args.date {
        Some(date) => days
            .iter()
            .find(|d| d.date == date)
            .ok_or_else(|| anyhow!("{} has no complete day on {date}", args.day.display()))?,
        None => days
            .first()
            .ok_or_else(|| anyhow!("{} holds no complete day on a {}-step grid", args.day.display(), grid.steps()))?,
    };
    let tariff = config.tariffs()?.schedule_for(day.date, grid)?;
    let devices = config.devices()?;
    let result = if args.greedy {
        greedy_valley_fill(day, &devices, grid, &tariff, args.objective)?
    } else {
        best_schedule(day, &devices, grid, &tariff, args.objective)?
    };
    let mut artifacts = Artifacts::new(&out)?;
    let objective = match args.objective {
        Objective::Peak => "peak",
        Objective::Cost => "cost",
    };
    let json = serde_json::json!({
        "date": day.date,
        "objective": objective,
        "value": result.value,
        "evaluated": result.evaluated,
        "candidate": result.candidate,
        "net_load": result.realized.net_load,
    });
    artifacts
        .write(&format!("oracle_{}_{objective}.json", day.date), |w| Ok(serde_json::to_writer_pretty(w, &json)?))?;
    eprintln!("{} {objective}: {:.4} over {} candidates", day.date, result.value, result.evaluated);
    Ok(artifacts.keep())
}

pub fn report(args: ReportArgs) -> Result<Vec<PathBuf>> {
    let tables = args
        .inputs
        .iter()
        .map(|p| {
            let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_table_csv(file).with_context(|| format!("reading {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_tables(&tables);
    let markdown = render_markdown(&merged);
    let mut artifacts = Artifacts::new(&args.out)?;
    artifacts.write("table.csv", |w| Ok(write_table_csv(w, &merged)?))?;
    artifacts.write("table.md", |w| Ok(w.write_all(markdown.as_bytes())?))?;
    print!("{markdown}");
    Ok(artifacts.keep())
}
