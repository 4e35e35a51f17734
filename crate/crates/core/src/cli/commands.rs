use std::fs;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{run_suite, SuiteConfig};
use crate::error::{Error, Result};
use crate::objectives::{Objective, TailrConfig};
use crate::seqmodel::{load_checkpoint, save_checkpoint, SequenceModel, TrainOutcome};
use crate::synth::{
    error_map, evaluate, learner_exacc_at, learner_traces, make_datasets, max_overestimation_by_length,
    overestimation_slope, prepare, normal_pdf, toy_gaussian_fit, train_learner, write_traces_csv, Datasets,
    LearnerMetrics, Oracle, Quadrature, ToyFit, ToyObjective, DEFAULT_BUCKETS,
};

use super::config::{default_objective, Metric, RunConfig};
use super::output::{num, Outputs};
use super::plot::{Cell, Chart, Heatmap, Series, Style};
use super::{Command, CommonArgs, EXIT_OK, EXIT_VERIFY_FAILED};

/// A row source: the oracle itself or a learner trained under an objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Learner {
    Oracle,
    Trained(Objective),
}

impl Learner {
    pub fn tag(&self) -> &'static str {
        match self {
            Learner::Oracle => "oracle",
            Learner::Trained(o) => o.tag(),
        }
    }
}

/// Learners of `cfg`, oracle first when scored.
pub fn resolve_learners(cfg: &RunConfig) -> Vec<Learner> {
    let mut out = Vec::new();
    if cfg.score_oracle {
        out.push(Learner::Oracle);
    }
    out.extend(cfg.objectives.iter().copied().map(Learner::Trained));
    out
}

/// Applies `--objectives`: configured parameters win, unknown tags fall back
/// to defaults, `oracle` switches on the oracle row.
fn apply_filter(cfg: &mut RunConfig, tags: &[String]) -> Result<()> {
    let mut objectives = Vec::new();
    let mut oracle = false;
    for (i, tag) in tags.iter().enumerate() {
        if tags[..i].contains(tag) {
            return Err(Error::Config(format!("objective {tag:?} listed twice")));
        }
        if tag == "oracle" {
            oracle = true;
            continue;
        }
        let o = cfg
            .objectives
            .iter()
            .find(|o| o.tag() == tag)
            .copied()
            .or_else(|| default_objective(tag))
            .ok_or_else(|| Error::Config(format!("unknown objective {tag:?}")))?;
        objectives.push(o);
    }
    if objectives.is_empty() && !oracle {
        return Err(Error::Config("--objectives is empty".into()));
    }
    cfg.objectives = objectives;
    cfg.score_oracle = oracle;
    Ok(())
}

/// `init` treats a missing config path as the file to create.
fn resolve(args: &CommonArgs, init: bool) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) if !(init && !p.exists()) => RunConfig::load(p)?,
        _ => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.verify.trials = t;
    }
    if args.no_plots {
        cfg.plots = false;
    }
    if let Some(tags) = &args.objectives {
        apply_filter(&mut cfg, tags)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub(super) fn dispatch(cmd: &Command) -> Result<i32> {
    let args = cmd.args();
    let init = matches!(cmd, Command::Init(_));
    let cfg = resolve(args, init)?;
    if init {
        let path = args.config.clone().unwrap_or_else(|| args.out.join("config.json"));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, cfg.to_json())?;
        println!("wrote {}", path.display());
        return Ok(EXIT_OK);
    }
    let mut out = Outputs::new(&args.out)?;
    out.write("config.json", cfg.to_json().as_bytes())?;
    let code = match cmd {
        Command::Init(_) => unreachable!("handled above"),
        Command::Verify(_) => verify(&cfg, args.inject_fault, &mut out)?,
        Command::ToyGaussian(_) => toy(&cfg, &mut out)?,
        Command::Synth(_) => synth(&cfg, &mut out)?,
        Command::Perturb(_) => perturb(&cfg, &mut out)?,
        Command::Exacc(_) => exacc(&cfg, &mut out)?,
        Command::SweepGamma(_) => sweep_gamma(&cfg, &mut out)?,
    };
    let manifest = out.finish(cmd.name(), &cfg.hash())?;
    println!("{}: {} files in {}", cmd.name(), manifest.files.len(), args.out.display());
    Ok(code)
}

fn verify(cfg: &RunConfig, inject_fault: bool, out: &mut Outputs) -> Result<i32> {
    let reports = run_suite(&SuiteConfig {
        seed: cfg.seed,
        trials: cfg.verify.trials,
        inject_fault,
    })?;
    let mut rows = Vec::new();
    for r in &reports {
        let violation = if r.max_violation.is_finite() {
            num(r.max_violation)?
        } else {
            "inf".to_string()
        };
        rows.push(vec![
            r.check_name.clone(),
            r.trials.to_string(),
            num(r.tolerance)?,
            violation,
            r.passed().to_string(),
        ]);
    }
    out.write_csv("bounds.csv", &["check_name", "trials", "tolerance", "max_violation", "pass"], &rows)?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    for r in &failed {
        eprintln!(
            "FAILED {}: max violation {:e} exceeds tolerance {:e}",
            r.check_name, r.max_violation, r.tolerance
        );
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn toy(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let t = &cfg.toy;
    let fits: Vec<ToyFit> = [ToyObjective::Kld, ToyObjective::Tvd]
        .into_iter()
        .map(|o| toy_gaussian_fit(&t.mixture, o, &t.grid, &t.descent))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for f in &fits {
        if !f.converged {
            eprintln!("warning: {:?} fit stopped after {} steps without converging", f.objective, f.steps);
        }
        let (lo, hi) = match f.void_interval {
            Some((a, b)) => (num(a)?, num(b)?),
            None => (String::new(), String::new()),
        };
        rows.push(vec![
            match f.objective {
                ToyObjective::Kld => "kld",
                ToyObjective::Tvd => "tvd",
            }
            .to_string(),
            num(f.mu)?,
            num(f.sigma)?,
            num(f.divergence)?,
            lo,
            hi,
            num(f.void_mass)?,
            f.steps.to_string(),
            f.converged.to_string(),
        ]);
    }
    out.write_csv(
        "toy_fits.csv",
        &["objective", "mu", "sigma", "divergence", "void_lo", "void_hi", "void_mass", "steps", "converged"],
        &rows,
    )?;
    let quad = Quadrature::new(&t.mixture, &t.grid)?;
    let mut curves = Vec::new();
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 3];
    for &x in quad.xs.iter().step_by(t.curve_stride) {
        let ys = [
            t.mixture.density(x),
            normal_pdf(x, fits[0].mu, fits[0].sigma),
            normal_pdf(x, fits[1].mu, fits[1].sigma),
        ];
        let mut row = vec![num(x)?];
        for (k, &y) in ys.iter().enumerate() {
            row.push(num(y)?);
            series[k].push((x, y));
        }
        curves.push(row);
    }
    out.write_csv("toy_curves.csv", &["x", "mixture", "kld_fit", "tvd_fit"], &curves)?;
    if cfg.plots {
        let labels = ["mixture", "KLD fit", "TVD fit"];
        let chart = Chart {
            title: "Single Gaussian fitted to a two-component mixture".into(),
            x_label: "x".into(),
            y_label: "density".into(),
            log_x: false,
            series: series
                .into_iter()
                .zip(labels)
                .map(|(points, label)| Series {
                    label: label.into(),
                    points,
                    style: Style::Line,
                })
                .collect(),
        };
        out.write("toy_gaussian.svg", chart.to_svg().as_bytes())?;
    }
    Ok(EXIT_OK)
}

struct Session {
    oracle: Oracle,
    data: Datasets,
}

fn session(cfg: &RunConfig, out: &mut Outputs) -> Result<Session> {
    let oracle = prepare(&cfg.experiment)?;
    let data = make_datasets(&cfg.experiment, &oracle, cfg.seed)?;
    data.persist(&out.path("data"))?;
    for f in ["train.txt", "dev.txt", "test.txt", "dataset_manifest.json"] {
        out.register(&format!("data/{f}"));
    }
    fs::create_dir_all(out.path("checkpoints"))?;
    save_checkpoint(&oracle.model, &out.path("checkpoints/oracle.ckpt"))?;
    out.register("checkpoints/oracle.ckpt");
    Ok(Session { oracle, data })
}

/// Identifies a trained checkpoint: everything that determines its weights.
fn checkpoint_key(cfg: &RunConfig, objective: &Objective) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        seed: u64,
        experiment: &'a crate::synth::ExperimentConfig,
        objective: &'a Objective,
    }
    let json = serde_json::to_string(&Key {
        seed: cfg.seed,
        experiment: &cfg.experiment,
        objective,
    })
    .expect("key serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn store_learner(cfg: &RunConfig, out: &mut Outputs, objective: &Objective, model: &SequenceModel) -> Result<()> {
    let tag = objective.tag();
    save_checkpoint(model, &out.path(&format!("checkpoints/{tag}.ckpt")))?;
    out.write(&format!("checkpoints/{tag}.key"), checkpoint_key(cfg, objective).as_bytes())?;
    out.register(&format!("checkpoints/{tag}.ckpt"));
    Ok(())
}

/// Reuses a checkpoint trained under the same key, or trains inline.
fn obtain_model(cfg: &RunConfig, sess: &Session, learner: Learner, out: &mut Outputs) -> Result<SequenceModel> {
    let objective = match learner {
        Learner::Oracle => return Ok(sess.oracle.model.clone()),
        Learner::Trained(o) => o,
    };
    let tag = objective.tag();
    let key_path = out.path(&format!("checkpoints/{tag}.key"));
    let ckpt_path = out.path(&format!("checkpoints/{tag}.ckpt"));
    if fs::read_to_string(&key_path).ok().as_deref() == Some(checkpoint_key(cfg, &objective).as_str()) {
        let model = load_checkpoint(&ckpt_path)?;
        if model.vocab_size() != sess.oracle.model.vocab_size() {
            return Err(Error::VocabMismatch(model.vocab_size(), sess.oracle.model.vocab_size()));
        }
        out.register(&format!("checkpoints/{tag}.key"));
        out.register(&format!("checkpoints/{tag}.ckpt"));
        return Ok(model);
    }
    let outcome = train_learner(&cfg.experiment, &sess.data, objective, cfg.seed)?;
    report_training(tag, &outcome);
    store_learner(cfg, out, &objective, &outcome.model)?;
    Ok(outcome.model)
}

fn report_training(tag: &str, outcome: &TrainOutcome) {
    if let Some(best) = outcome.log.iter().find(|l| l.epoch == outcome.best_epoch) {
        eprintln!("{tag}: best epoch {} of {}, dev ppl {:.4}", best.epoch, outcome.log.len(), best.dev_ppl);
    }
}

fn metric_value(m: &LearnerMetrics, metric: Metric) -> f64 {
    match metric {
        Metric::PplOracle => m.ppl_oracle,
        Metric::PplTest => m.ppl_test,
        Metric::Bleu4 => m.bleu4,
        Metric::SelfBleu4 => m.self_bleu4,
        Metric::Distinct4 => m.distinct4,
        Metric::MeanLength => m.mean_length,
    }
}

fn metric_cells(cfg: &RunConfig, m: &LearnerMetrics) -> Result<Vec<String>> {
    cfg.metrics.iter().map(|&k| num(metric_value(m, k))).collect()
}

fn synth(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let sess = session(cfg, out)?;
    let x = &cfg.experiment;
    let mut rows = Vec::new();
    let mut log_rows = Vec::new();
    for learner in resolve_learners(cfg) {
        let model = match learner {
            Learner::Oracle => sess.oracle.model.clone(),
            Learner::Trained(objective) => {
                let outcome = train_learner(x, &sess.data, objective, cfg.seed)?;
                report_training(objective.tag(), &outcome);
                for l in &outcome.log {
                    log_rows.push(vec![
                        objective.tag().to_string(),
                        l.epoch.to_string(),
                        l.steps.to_string(),
                        num(l.train_loss)?,
                        num(l.mean_weight)?,
                        num(l.dev_ppl)?,
                    ]);
                }
                store_learner(cfg, out, &objective, &outcome.model)?;
                outcome.model
            }
        };
        let m = evaluate(x, &sess.oracle, &sess.data, &model, learner.tag(), cfg.seed)?;
        let mut row = vec![learner.tag().to_string()];
        row.extend(metric_cells(cfg, &m)?);
        rows.push(row);
    }
    let mut header = vec!["model"];
    header.extend(cfg.metrics.iter().map(|m| m.column()));
    out.write_csv("results.csv", &header, &rows)?;
    out.write_csv(
        "train_log.csv",
        &["objective", "epoch", "steps", "train_loss", "mean_weight", "dev_ppl"],
        &log_rows,
    )?;
    Ok(EXIT_OK)
}

fn perturb(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let sess = session(cfg, out)?;
    let mut summary = Vec::new();
    let mut length_series = Vec::new();
    for learner in resolve_learners(cfg) {
        let tag = learner.tag();
        let model = obtain_model(cfg, &sess, learner, out)?;
        let traces = learner_traces(&cfg.experiment, &sess.oracle, &sess.data, &model, cfg.seed)?;
        let rel = format!("traces_{tag}.csv");
        write_traces_csv(&out.path(&rel), &traces)?;
        out.register(&rel);

        let cells = error_map(&traces, DEFAULT_BUCKETS)?;
        let rows = cells
            .iter()
            .map(|c| {
                Ok(vec![
                    c.bucket.to_string(),
                    num(c.log_p_o_lo)?,
                    num(c.log_p_o_hi)?,
                    c.step.to_string(),
                    num(c.mean_error)?,
                    c.count.to_string(),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        out.write_csv(
            &format!("error_map_{tag}.csv"),
            &["bucket", "log_p_o_lo", "log_p_o_hi", "step", "mean_error", "count"],
            &rows,
        )?;

        let by_len = max_overestimation_by_length(&traces)?;
        let rows = by_len
            .iter()
            .map(|r| Ok(vec![r.length.to_string(), num(r.mean_max_error)?, r.origins.to_string()]))
            .collect::<Result<Vec<_>>>()?;
        out.write_csv(&format!("overestimation_{tag}.csv"), &["length", "mean_max_error", "origins"], &rows)?;

        let slope = overestimation_slope(&traces);
        let skipped: usize = traces.iter().map(|t| t.skipped.len()).sum();
        summary.push(vec![
            tag.to_string(),
            slope.map(num).transpose()?.unwrap_or_default(),
            traces.len().to_string(),
            skipped.to_string(),
        ]);
        if cfg.plots {
            let heat = Heatmap {
                title: format!("Estimation error, {tag}"),
                x_label: "log p_o".into(),
                y_label: "perturbations".into(),
                cells: cells
                    .iter()
                    .map(|c| Cell {
                        x0: c.log_p_o_lo,
                        x1: c.log_p_o_hi,
                        y0: c.step as f64 - 0.5,
                        y1: c.step as f64 + 0.5,
                        value: c.mean_error,
                    })
                    .collect(),
            };
            out.write(&format!("error_map_{tag}.svg"), heat.to_svg().as_bytes())?;
            length_series.push(Series {
                label: tag.into(),
                points: by_len.iter().map(|r| (r.length as f64, r.mean_max_error)).collect(),
                style: Style::Line,
            });
        }
    }
    out.write_csv("perturb_summary.csv", &["model", "slope", "origins", "skipped_edits"], &summary)?;
    if cfg.plots {
        let chart = Chart {
            title: "Maximum overestimation error by length".into(),
            x_label: "origin length".into(),
            y_label: "mean max error".into(),
            log_x: false,
            series: length_series,
        };
        out.write("overestimation.svg", chart.to_svg().as_bytes())?;
    }
    Ok(EXIT_OK)
}

fn exacc(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let sess = session(cfg, out)?;
    let mode = if cfg.experiment.exacc.importance_sampling {
        "importance_sampling"
    } else {
        "exact"
    };
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for learner in resolve_learners(cfg) {
        let model = obtain_model(cfg, &sess, learner, out)?;
        let mut pts = Vec::new();
        for &l in &cfg.exacc_lengths {
            let r = learner_exacc_at(&cfg.experiment, &sess.oracle, &model, cfg.seed, l)?;
            rows.push(vec![
                learner.tag().to_string(),
                l.to_string(),
                num(r.percent)?,
                num(r.regret)?,
                num(r.epsilon)?,
                mode.to_string(),
            ]);
            pts.push((l as f64, r.percent));
        }
        series.push(Series {
            label: learner.tag().into(),
            points: pts,
            style: Style::Line,
        });
    }
    out.write_csv("exacc.csv", &["objective", "l", "exacc_percent", "regret", "epsilon", "mode"], &rows)?;
    if cfg.plots {
        let chart = Chart {
            title: "Excess accumulated error".into(),
            x_label: "context length".into(),
            y_label: "ExAccErr (%)".into(),
            log_x: false,
            series,
        };
        out.write("exacc.svg", chart.to_svg().as_bytes())?;
    }
    Ok(EXIT_OK)
}

fn sweep_gamma(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let sess = session(cfg, out)?;
    let x = &cfg.experiment;
    let mut rows = Vec::new();
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cfg.metrics.len()];
    for &gamma in &cfg.sweep.gammas {
        let objective = Objective::Tailr(TailrConfig::new(gamma, cfg.sweep.weight_floor)?);
        let outcome = train_learner(x, &sess.data, objective, cfg.seed)?;
        report_training(&format!("tailr gamma={gamma}"), &outcome);
        let m = evaluate(x, &sess.oracle, &sess.data, &outcome.model, "tailr", cfg.seed)?;
        let mut row = vec![num(gamma)?];
        row.extend(metric_cells(cfg, &m)?);
        rows.push(row);
        for (k, &metric) in cfg.metrics.iter().enumerate() {
            points[k].push((gamma, metric_value(&m, metric)));
        }
    }
    let mut header = vec!["gamma"];
    header.extend(cfg.metrics.iter().map(|m| m.column()));
    out.write_csv("sweep_gamma.csv", &header, &rows)?;
    if cfg.plots {
        for (k, metric) in cfg.metrics.iter().enumerate() {
            let chart = Chart {
                title: format!("{} against gamma", metric.column()),
                x_label: "gamma".into(),
                y_label: metric.column().into(),
                log_x: true,
                series: vec![Series {
                    label: metric.column().into(),
                    points: points[k].clone(),
                    style: Style::Line,
                }],
            };
            out.write(&format!("sweep_gamma_{}.svg", metric.column()), chart.to_svg().as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_keeps_order_and_config_params() {
        let mut cfg = RunConfig::default();
        cfg.objectives = vec![Objective::Tailr(TailrConfig::new(0.5, 0.2).unwrap())];
        apply_filter(&mut cfg, &["oracle".into(), "mle".into(), "tailr".into()]).unwrap();
        let tags: Vec<_> = resolve_learners(&cfg).iter().map(Learner::tag).collect();
        assert_eq!(tags, ["oracle", "mle", "tailr"]);
        assert_eq!(cfg.objectives[1], Objective::Tailr(TailrConfig::new(0.5, 0.2).unwrap()));
    }

    #[test]
    fn filter_rejects_unknown_and_duplicate_tags() {
        let mut cfg = RunConfig::default();
        assert!(apply_filter(&mut cfg, &["nope".into()]).is_err());
        assert!(apply_filter(&mut cfg, &["mle".into(), "mle".into()]).is_err());
    }
}
