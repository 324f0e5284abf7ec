use std::fmt::Write as _;

use hre_core::estimators::{
    component_series, default_horizon, fuk_nagaev_check, heyde_scan, lower_bound_check, max_term_series_streaming,
    permutation_stress, tail_series_streaming, uniform_bounds, upper_additive_constant, BoundReport, McConfig,
    TailSeriesEstimate, UPPER_VARIANCE_COEFFICIENT,
};
use hre_core::measures::{dyadic_profile, ConditionalMeasureTable};
use hre_core::models::{derive_seed, to_discrete, DiscreteRealization, SequenceModel};
use hre_core::prob::RandomVariable;
use hre_core::subsequence::{
    default_schedule, disjoint_support_series, kpr_decompose, omnibus_check, quantize, select_md_subsequence,
    truncation_split, RefinementTree, SupportMode, ThresholdRule,
};

use crate::config::{Command, ExperimentConfig};
use crate::CliError;

const DEFAULT_REPLICAS: u64 = 10_000;
const DEFAULT_SPACE_BUDGET: usize = 1 << 16;

/// Artifacts and assertion results of one command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// `(file name, contents)`.
    pub files: Vec<(String, String)>,
    /// `(check name, passed)`.
    pub checks: Vec<(String, bool)>,
    pub notes: Vec<String>,
}

impl Outcome {
    /// A construction that stopped because a hypothesis or budget failed.
    pub fn failed(check: &str, reason: &str) -> Self {
        Outcome {
            files: Vec::new(),
            checks: vec![(check.to_string(), false)],
            notes: vec![reason.to_string()],
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.checks.push((name.into(), pass));
    }

    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Series => series(cfg),
        Command::Heyde => heyde(cfg),
        Command::Bounds => bounds(cfg),
        Command::Maxterm => maxterm(cfg),
        Command::Select => select(cfg),
        Command::Kpr => kpr(cfg),
        Command::Split => split(cfg),
        Command::Refine => refine(cfg),
        Command::Omnibus => omnibus(cfg),
        Command::Permute => permute(cfg),
        Command::Dyadic => dyadic(cfg),
    }
}

fn mc(cfg: &ExperimentConfig) -> McConfig {
    McConfig::new(cfg.params.replicas.unwrap_or(DEFAULT_REPLICAS), cfg.seed()).workers(cfg.workers())
}

fn epsilons(cfg: &ExperimentConfig, default: &[f64]) -> Vec<f64> {
    cfg.params.epsilon.clone().unwrap_or_else(|| default.to_vec())
}

fn realize(cfg: &ExperimentConfig, default_n: usize) -> Result<DiscreteRealization, CliError> {
    let n = cfg.params.n_max.unwrap_or(default_n);
    let budget = cfg.params.space_budget.unwrap_or(DEFAULT_SPACE_BUDGET);
    Ok(to_discrete(cfg.require_model()?, n, budget)?)
}

/// Oracle agreement within three summed Wilson half-widths.
fn oracle_agrees(est: &TailSeriesEstimate) -> Option<bool> {
    est.oracle_cumulative()
        .map(|o| (est.cumulative() - o).abs() <= 3.0 * est.summed_half_width() + 1e-12)
}

fn series(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let n_max = cfg.params.n_max.unwrap_or(200);
    let mut out = Outcome::default();
    for eps in epsilons(cfg, &[1.0]) {
        let est = tail_series_streaming(model, eps, n_max, mc(cfg))?;
        if let Some(ok) = oracle_agrees(&est) {
            out.check(format!("oracle_eps{eps}"), ok);
        }
        out.notes.push(format!("eps={eps}: cumulative {}", est.cumulative()));
        out.file(format!("series_eps{eps}.csv"), est.to_csv());
    }
    Ok(out)
}

fn heyde(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let eps = epsilons(cfg, &[1.0, 0.5, 0.25, 0.125]);
    let scale = cfg.params.horizon_scale;
    let horizon = |e: f64| match scale {
        Some(s) => (s / (e * e)).ceil() as usize,
        None => default_horizon(e),
    };
    let scan = heyde_scan(model, &eps, horizon, mc(cfg))?;
    let mut csv = String::from("epsilon,horizon,scaled,scaled_half_width,scaled_oracle\n");
    let mut out = Outcome::default();
    for (p, est) in scan.points.iter().zip(&scan.series) {
        let oracle = p.scaled_oracle.map(|o| o.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{},{}", p.epsilon, p.horizon, p.scaled, p.scaled_half_width, oracle)
            .expect("writing to a string");
        if let Some(o) = p.scaled_oracle {
            let close = (p.scaled - o).abs() <= (0.02 * o).max(3.0 * p.scaled_half_width) + 1e-12;
            out.check(format!("oracle_eps{}", p.epsilon), close);
        }
        out.file(format!("heyde_series_eps{}.csv", p.epsilon), est.to_csv());
    }
    out.files.insert(0, ("heyde.csv".into(), csv));
    Ok(out)
}

fn bound_rows(report: &BoundReport, csv: &mut String) {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.cases {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            report.name,
            c.label,
            opt(c.lower),
            c.empirical,
            c.ci_low,
            c.ci_high,
            opt(c.upper),
            c.pass
        )
        .expect("writing to a string");
    }
}

fn bounds(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut csv = String::from("report,label,lower,empirical,ci_low,ci_high,upper,pass\n");
    let mut reports = Vec::new();
    if let Some(model) = &cfg.model {
        match model {
            SequenceModel::Iid { .. } => {
                let horizons = cfg.params.horizons.clone().unwrap_or_else(|| (1..=200).collect());
                reports.push(fuk_nagaev_check(model, &horizons, mc(cfg))?);
                reports.push(lower_bound_check(model, cfg.params.n_max.unwrap_or(50), mc(cfg))?);
            }
            SequenceModel::DeFinetti { components } => {
                let eps = epsilons(cfg, &[0.5])[0];
                let n_max = cfg.params.n_max.unwrap_or_else(|| default_horizon(eps));
                let per = component_series(model, eps, n_max, mc(cfg))?;
                let e2 = eps * eps;
                let mut report = BoundReport {
                    name: "component-uniform-upper".into(),
                    cases: Vec::new(),
                    notes: Vec::new(),
                };
                for (k, (c, est)) in components.iter().zip(&per).enumerate() {
                    let sigma2 = c.law.variance();
                    let upper = UPPER_VARIANCE_COEFFICIENT * sigma2 + upper_additive_constant() * e2;
                    let hw = est.summed_half_width();
                    let value = e2 * (est.cumulative() + 1.0);
                    let ci_high = e2 * (est.cumulative() + hw + 1.0);
                    report.cases.push(hre_core::estimators::BoundCase {
                        label: format!("component {} eps={eps}", k + 1),
                        lower: None,
                        empirical: value,
                        ci_low: e2 * ((est.cumulative() - hw).max(0.0) + 1.0),
                        ci_high,
                        upper: Some(upper),
                        pass: ci_high <= upper,
                    });
                }
                reports.push(report);
            }
            _ => out.notes.push("model is neither iid nor a mixture: single-model bounds skipped".into()),
        }
    }
    if !cfg.models.is_empty() {
        let models: Vec<(String, SequenceModel)> =
            cfg.models.iter().map(|m| (m.name.clone(), m.model.clone())).collect();
        reports.push(uniform_bounds(&models, &epsilons(cfg, &[1.0, 0.5]), mc(cfg))?);
    }
    if reports.is_empty() {
        return Err(CliError::Config("bounds needs `model` or `models`".into()));
    }
    for r in &reports {
        bound_rows(r, &mut csv);
        out.check(r.name.clone(), r.pass());
        out.notes.extend(r.notes.iter().map(|n| format!("{}: {n}", r.name)));
    }
    out.file("bounds.csv", csv);
    Ok(out)
}

fn maxterm(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let divisor = cfg.params.divisor.unwrap_or(1.0);
    let est = max_term_series_streaming(model, divisor, cfg.params.n_max.unwrap_or(200), mc(cfg))?;
    let mut out = Outcome::default();
    if let Some(ok) = oracle_agrees(&est) {
        out.check("oracle", ok);
    }
    out.notes.push(format!("cumulative {}", est.cumulative()));
    out.file("maxterm.csv", est.to_csv());
    Ok(out)
}

fn select(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let real = realize(cfg, 8)?;
    let stages = cfg.params.stages.unwrap_or(4);
    let h: Vec<RandomVariable> = real
        .variables
        .iter()
        .enumerate()
        .map(|(i, f)| quantize(f, i as u32 + 1).h)
        .collect();
    let rep = select_md_subsequence(&h, stages, Some(&real.variables))?;
    let mut out = Outcome::default();
    out.check("corrections", rep.corrections_within_targets());
    out.check("martingale_differences", rep.md.pass);
    out.check("l2_gaps", rep.l2_certified());
    out.file("select.csv", rep.to_text());
    Ok(out)
}

fn kpr(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let real = realize(cfg, 6)?;
    let f = &real.variables;
    let l1 = cfg
        .params
        .l1_bound
        .unwrap_or_else(|| f.iter().map(RandomVariable::l1_norm).fold(0.0, f64::max));
    let rule = cfg.params.threshold.unwrap_or(ThresholdRule::DyadicTailMass);
    let d = kpr_decompose(f, l1, rule, None)?;
    let mut csv = String::from("n,threshold,spike_mass,spike_l1,residual_l1,remainder_l1\n");
    let mut exact = true;
    for (n, f_n) in f.iter().enumerate() {
        let mass = real.space.prob(|a| d.support_masks[n][a]);
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            n + 1,
            d.thresholds[n],
            mass,
            d.spikes[n].l1_norm(),
            d.residuals[n].l1_norm(),
            d.remainders[n].l1_norm()
        )
        .expect("writing to a string");
        let rebuilt = d.spikes[n].add(&d.residuals[n])?.add(&d.remainders[n])?;
        exact &= rebuilt.sub(f_n)?.max_abs() <= 1e-12;
    }
    let mut ui = String::from("level,sup_tail_moment\n");
    for (k, v) in &d.ui_profile {
        writeln!(ui, "{k},{v}").expect("writing to a string");
    }
    let mode = cfg.params.support.unwrap_or(SupportMode::Sufficient);
    let support = disjoint_support_series(&d.spikes, mode)?;
    let mut out = Outcome::default();
    out.check("reconstruction", exact);
    out.check("support_series", support.pass);
    out.notes.push(format!(
        "series {}, dominating {}, l1 total {}",
        support.series, support.dominating, support.l1_total
    ));
    out.file("kpr.csv", csv);
    out.file("kpr_ui.csv", ui);
    Ok(out)
}

fn split(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let grid = cfg.params.grid.unwrap_or_default();
    let s = truncation_split(model, cfg.params.n_max.unwrap_or(20), grid)?;
    let mut csv = String::from("n,level,prob_kept,l1_tail,l2_truncated\n");
    for i in 0..s.levels.len() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            s.levels[i],
            s.prob_kept[i],
            s.l1_tail[i],
            s.l2_truncated[i]
        )
        .expect("writing to a string");
    }
    let mut out = Outcome::default();
    out.check("certified", s.certified());
    out.notes.push(format!("l2 bound {}", s.l2_bound));
    if s.l2_unbounded == Some(true) {
        out.notes.push("infinite second moment: truncated second moments grow without bound".into());
    }
    out.file("split.csv", csv);
    Ok(out)
}

fn refine(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let real = realize(cfg, 6)?;
    let table = ConditionalMeasureTable::new(&real.label_partition(), &real.variables)?;
    let tree = RefinementTree::build(&table, &default_schedule(cfg.params.depth.unwrap_or(3)))?;
    let mut out = Outcome::default();
    out.check("invariants", tree.invariants_hold());
    out.file("refine.csv", tree.to_text());
    Ok(out)
}

fn omnibus(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let real = realize(cfg, 6)?;
    let eps = epsilons(cfg, &[1.0])[0];
    let f_star = &real.variables;
    // one grid for every index keeps conditionally iid sequences iid
    let h: Vec<RandomVariable> = f_star.iter().map(|f| quantize(f, 1).h).collect();
    let rep = omnibus_check(&real.label_partition(), &h, f_star, None, eps)?;
    let mut csv = String::from("N,series_target,series_h,series_difference\n");
    for i in 0..h.len() {
        writeln!(
            csv,
            "{},{},{},{}",
            i + 1,
            rep.series_target[i],
            rep.series_h[i],
            rep.series_difference[i]
        )
        .expect("writing to a string");
    }
    let mut blocks = String::from("block,mass,iid_gap,conditional_mse\n");
    for (b, blk) in rep.blocks.iter().enumerate() {
        writeln!(blocks, "{},{},{},{}", b + 1, blk.mass, blk.iid_gap, blk.conditional_mse)
            .expect("writing to a string");
    }
    let mut out = Outcome::default();
    out.check("conditionally_iid", rep.conditionally_iid);
    out.check("conditional_mse", rep.mse_within_one);
    out.check("decomposition", rep.decomposition_holds);
    out.file("omnibus.csv", csv);
    out.file("omnibus_blocks.csv", blocks);
    Ok(out)
}

fn permute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let eps = epsilons(cfg, &[1.0])[0];
    let perm_seed = cfg
        .params
        .permutation_seed
        .unwrap_or_else(|| derive_seed(cfg.seed(), "permutation"));
    let rep = permutation_stress(model, perm_seed, eps, cfg.params.n_max.unwrap_or(100), mc(cfg))?;
    let mut csv = String::from("N,identity,permuted\n");
    for (a, b) in rep.identity.rows.iter().zip(&rep.permuted.rows) {
        writeln!(csv, "{},{},{}", a.n, a.cumulative, b.cumulative).expect("writing to a string");
    }
    let mut out = Outcome::default();
    out.check("agree", rep.agree);
    out.notes.push(format!("max gap {} standard errors", rep.max_gap_in_se));
    out.notes.extend(rep.warning);
    out.file("permute.csv", csv);
    Ok(out)
}

fn dyadic(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.require_model()?;
    let law = model
        .common_law()
        .ok_or_else(|| CliError::Config("dyadic needs an iid `model`".into()))?;
    let profile = dyadic_profile(|t| law.tail(t), cfg.params.i_max.unwrap_or(40));
    let mut csv = String::from("i,a_i,partial_sum\n");
    for (i, (a, s)) in profile.a.iter().zip(&profile.partial_sums).enumerate() {
        writeln!(csv, "{i},{a},{s}").expect("writing to a string");
    }
    let check = profile.check_second_moment(law.second_moment());
    let mut out = Outcome::default();
    out.check("lower_sandwich", check.lower_holds);
    if let Some(i) = profile.first_exceeding(1e3) {
        out.notes.push(format!("partial sums exceed 1000 at i={i}"));
    }
    out.file("dyadic.csv", csv);
    Ok(out)
}
