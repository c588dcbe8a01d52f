use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use mico_core::embedding::{extract_reduced, fit_embeddings, FitConfig, LossKind};
use mico_core::mdp::{
    build_dayan_grid, build_four_rooms, build_garnet, build_garnet_state_rewards, build_mirrored_rooms,
};
use mico_core::metrics::{bisimulation_metric, mico_metric, pi_bisimulation_metric, reduced_mico};
use mico_core::sampled::{online_mico, OnlineConfig, StepSchedule};
use mico_core::{DiagonalMode, FiniteMdp, FixedPointConfig, FixedPointReport};

use crate::cli::{
    Cli, Command, Environment, ExperimentArgs, FitArgs, GenerateArgs, LossArg, MetricArgs, MetricKind, OnlineArgs,
    ScheduleKind, ValidateArgs,
};
use crate::error::{CliError, CliResult};
use crate::experiments::{self, ExperimentSettings};
use crate::io::{self, Provenance};
use crate::validate::validate_file;

/// Output of a finished command: the files written and a JSON summary for
/// stdout.
#[derive(Debug, Serialize)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub summary: Value,
    /// Set when results were written but a solver did not converge or a
    /// check failed; decides the exit code.
    #[serde(skip)]
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(written: Vec<PathBuf>, summary: Value) -> Self {
        Self {
            written,
            summary,
            failure: None,
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Generate(args) => generate(cli, args),
        Command::Metric(args) => metric(cli, args),
        Command::Online(args) => online(cli, args),
        Command::Fit(args) => fit(cli, args),
        Command::Experiment(args) => experiment(cli, args),
        Command::Validate(args) => validate(args),
    }
}

fn out_path(cli: &Cli, stem: &str, ext: &str) -> PathBuf {
    cli.out_dir.join(format!("{stem}.{ext}"))
}

fn require_seed(cli: &Cli, command: &str) -> CliResult<u64> {
    cli.seed
        .ok_or_else(|| CliError::input(format!("{command} is stochastic and needs --seed")))
}

fn mdp_summary(mdp: &FiniteMdp) -> Value {
    let deterministic = (0..mdp.n_states())
        .all(|x| (0..mdp.n_actions()).all(|a| mdp.transition(x, a).iter().all(|&p| p == 0.0 || p == 1.0)));
    json!({
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "gamma": mdp.gamma(),
        "max_row_defect": mdp.max_row_defect(),
        "deterministic_transitions": deterministic,
        "state_only_rewards": mdp.has_state_only_rewards(),
    })
}

fn generate(cli: &Cli, args: &GenerateArgs) -> CliResult<Outcome> {
    let garnet_only = args.states.is_some() || args.actions.is_some() || args.state_rewards;
    if args.environment != Environment::Garnet && garnet_only {
        return Err(CliError::input(
            "--states, --actions and --state-rewards apply to garnet only",
        ));
    }
    let (mdp, stem) = match args.environment {
        Environment::Garnet => {
            let (Some(n), Some(a)) = (args.states, args.actions) else {
                return Err(CliError::input("garnet needs --states and --actions"));
            };
            let seed = require_seed(cli, "generate garnet")?;
            let mdp = if args.state_rewards {
                build_garnet_state_rewards(n, a, seed)?
            } else {
                build_garnet(n, a, seed)?
            };
            (mdp, format!("garnet-{n}x{a}-s{seed}"))
        }
        Environment::FourRooms => (build_four_rooms(), "four-rooms".to_string()),
        Environment::MirroredRooms => (build_mirrored_rooms(), "mirrored-rooms".to_string()),
        Environment::DayanGrid => (build_dayan_grid(), "dayan-grid".to_string()),
    };
    let mdp = match args.gamma {
        Some(g) => mdp.with_gamma(g)?,
        None => mdp,
    };
    let config = json!({
        "environment": format!("{:?}", args.environment),
        "states": args.states,
        "actions": args.actions,
        "state_rewards": args.state_rewards,
        "gamma": mdp.gamma(),
        "seed": cli.seed,
    });
    let path = out_path(cli, args.name.as_deref().unwrap_or(&stem), "json");
    io::write_text(&path, &io::mdp_json(&mdp, Some(Provenance::new("generate", config))))?;
    Ok(Outcome::ok(vec![path], mdp_summary(&mdp)))
}

fn metric(cli: &Cli, args: &MetricArgs) -> CliResult<Outcome> {
    let mdp = args.source.mdp.build()?;
    let fp = FixedPointConfig {
        epsilon: args.epsilon,
        max_iterations: args.max_iterations,
    };
    let (table, report): (_, FixedPointReport) = match args.metric {
        MetricKind::Mico => mico_metric(&mdp, &args.source.policy.build(&mdp)?, &fp)?,
        MetricKind::ReducedMico => {
            let (u, r) = mico_metric(&mdp, &args.source.policy.build(&mdp)?, &fp)?;
            (reduced_mico(&u), r)
        }
        MetricKind::Bisim => bisimulation_metric(&mdp, &fp)?,
        MetricKind::PiBisim => pi_bisimulation_metric(&mdp, &args.source.policy.build(&mdp)?, &fp)?,
    };
    let config = json!({
        "mdp": args.source.mdp.to_string(),
        "policy": (args.metric != MetricKind::Bisim).then(|| args.source.policy.to_string()),
        "metric": args.metric.as_str(),
        "fixed_point": fp,
    });
    let report_value = serde_json::to_value(report).expect("report serializes");
    let path = out_path(
        cli,
        args.name.as_deref().unwrap_or(args.metric.as_str()),
        cli.format.extension(),
    );
    io::write_table(
        &path,
        table.matrix(),
        table.mode(),
        Some(report_value.clone()),
        Some(Provenance::new("metric", config)),
    )?;
    let failure = (!report.converged).then(|| {
        CliError::NonConvergence(format!(
            "{} did not converge: residual {:e} after {} iterations",
            args.metric.as_str(),
            report.final_residual,
            report.iterations
        ))
    });
    Ok(Outcome {
        written: vec![path],
        summary: json!({ "metric": args.metric.as_str(), "report": report_value }),
        failure,
    })
}

fn online(cli: &Cli, args: &OnlineArgs) -> CliResult<Outcome> {
    let seed = require_seed(cli, "online")?;
    let mdp = args.source.mdp.build()?;
    let policy = args.source.policy.build(&mdp)?;
    let schedule = match args.schedule {
        ScheduleKind::Constant => StepSchedule::constant(args.c)?,
        ScheduleKind::Polynomial => StepSchedule::polynomial(args.c, args.p)?,
    };
    let config = OnlineConfig {
        schedule,
        steps: args.steps,
        seed,
        probe_every: args.probe_every,
        reference_epsilon: args.reference_epsilon,
    };
    let run = online_mico(&mdp, &policy, &config)?;
    if run.action_dependent_rewards {
        log::warn!("rewards depend on the action; sampled pairs use the policy-averaged reward");
    }
    let prov = Provenance::new(
        "online",
        json!({ "mdp": args.source.mdp.to_string(), "policy": args.source.policy.to_string(), "online": config }),
    );
    let estimate = out_path(cli, "online-estimate", cli.format.extension());
    io::write_table(
        &estimate,
        &run.estimate.u,
        DiagonalMode::Diffuse,
        None,
        Some(prov.clone()),
    )?;
    let trace = out_path(cli, "online-trace", "csv");
    io::write_text(&trace, &io::online_trace_csv(&run.trace, Some(&prov)))?;
    Ok(Outcome::ok(
        vec![estimate, trace],
        json!({
            "steps": args.steps,
            "final_sup_error": run.final_sup_error(),
            "action_dependent_rewards": run.action_dependent_rewards,
        }),
    ))
}

fn fit(cli: &Cli, args: &FitArgs) -> CliResult<Outcome> {
    let seed = require_seed(cli, "fit")?;
    let mdp = args.source.mdp.build()?;
    let policy = args.source.policy.build(&mdp)?;
    let config = FitConfig {
        learning_rate: args.learning_rate,
        target_sync_every: args.target_sync_every,
        batch_size: args.batch_size,
        loss: match args.loss {
            LossArg::Squared => LossKind::Squared,
            LossArg::Huber => LossKind::Huber { delta: args.delta },
        },
        max_steps: args.steps,
        beta: args.beta,
        init_scale: args.init_scale,
    };
    let result = fit_embeddings(&mdp, &policy, args.dim, &config, seed)?;
    if result.action_dependent_rewards {
        log::warn!("rewards depend on the action; sampled pairs use the policy-averaged reward");
    }
    let prov = Provenance::new(
        "fit",
        json!({
            "mdp": args.source.mdp.to_string(),
            "policy": args.source.policy.to_string(),
            "dim": args.dim,
            "seed": seed,
            "fit": config,
        }),
    );
    let ext = cli.format.extension();
    let embedding = out_path(cli, "embedding", "json");
    io::write_text(&embedding, &io::embedding_json(&result.table, Some(prov.clone())))?;
    let loss = out_path(cli, "fit-loss", "csv");
    io::write_text(&loss, &io::loss_trace_csv(&result.loss_trace, Some(&prov)))?;
    let distances = out_path(cli, "fit-distances", ext);
    io::write_table(
        &distances,
        &result.table.distance_matrix(),
        DiagonalMode::Diffuse,
        None,
        Some(prov.clone()),
    )?;
    let reduced = extract_reduced(&result.table);
    let reduced_path = out_path(cli, "fit-reduced", ext);
    io::write_table(&reduced_path, reduced.matrix(), reduced.mode(), None, Some(prov))?;
    Ok(Outcome::ok(
        vec![embedding, loss, distances, reduced_path],
        json!({ "steps": result.loss_trace.len(), "final_loss": result.loss_trace.last() }),
    ))
}

fn experiment_flags(cli: &Cli, args: &ExperimentArgs) -> ExperimentSettings {
    ExperimentSettings {
        experiment: args.experiment,
        sizes: args.sizes.clone(),
        actions: args.actions.clone(),
        seeds: args.seeds.clone().or_else(|| cli.seed.map(|s| vec![s])),
        dims: args.dims.clone(),
        n_policies: args.n_policies,
        n_trials: args.n_trials,
        repeats: args.repeats,
        mdp: args.mdp.clone(),
        policy: args.policy.clone(),
        include_pi_bisim: args.no_pi_bisim.then_some(false),
        reduced_transform: args.reduced_transform.map(Into::into),
        bisim_sizes: args.bisim_sizes.clone(),
        n_actions: args.n_actions,
        metric: args.metric.map(Into::into),
        optimal_policy: args.optimal_policy.then_some(true),
        max_witnesses: None,
        tolerances: None,
    }
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> CliResult<Outcome> {
    let mut settings = experiment_flags(cli, args);
    if let Some(path) = &args.config {
        let file = ExperimentSettings::load(path)?;
        if let (Some(a), Some(b)) = (args.experiment, file.experiment) {
            if a != b {
                return Err(CliError::input(format!(
                    "{}: experiment = {:?} conflicts with the requested {}",
                    path.display(),
                    b.as_str(),
                    a.as_str()
                )));
            }
        }
        settings = settings.overlay(file);
    }
    let kind = settings
        .experiment
        .ok_or_else(|| CliError::input("name an experiment or set `experiment` in the config file"))?;
    let resolved = experiments::resolve(kind, &settings)?;
    let report = experiments::run(&resolved)?;
    let json_path = out_path(cli, kind.as_str(), "json");
    io::write_text(&json_path, &experiments::report_json(&report))?;
    let csv_path = out_path(cli, kind.as_str(), "csv");
    io::write_text(&csv_path, &experiments::report_csv(&report))?;
    let failure = (!report.all_converged())
        .then(|| CliError::NonConvergence(format!("{}: a metric solve hit its iteration cap", kind.as_str())));
    Ok(Outcome {
        written: vec![json_path, csv_path],
        summary: experiments::summary(&report),
        failure,
    })
}

fn validate(args: &ValidateArgs) -> CliResult<Outcome> {
    let report = validate_file(&args.file, args.tol)?;
    let failure = (!report.passed)
        .then(|| CliError::Validation(format!("{}: {}", args.file.display(), report.violations.join("; "))));
    Ok(Outcome {
        written: Vec::new(),
        summary: serde_json::to_value(&report).expect("report serializes"),
        failure,
    })
}
