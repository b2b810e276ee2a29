//! Subcommand implementations.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use uaelab::blocks::{BlockKind, LAYERS_PER_STAGE};
use uaelab::descriptor::{golden_corpus, load_corpus, ModuleDescriptor};
use uaelab::gradient_lab::{
    epsilon_grid, jacobian_recurrence_sweep, spectral_gain_sweep, verify_jacobian_bounds, EpsilonSetup, DEFAULT_EIGEN_RANGE, TABLE_PAIRS,
};
use uaelab::harness::correlation::correlate_metrics;
use uaelab::harness::study::{convergence_runs, measure_module, score_series, StudyModule};
use uaelab::harness::{MetricRecord, ToySetup, TrainConfig};
use uaelab::uae::attribution::EvalShift;
use uaelab::uae::{ablate as ablate_one, rank_modules, ranking_invariance, sensitivity as sensitivity_one, FactorSubset, ShapleyRule};
use uaelab::{evaluate_uae, UaeForm};

use crate::output::{cell, opt, slug, Run};
use crate::{AblateArgs, CorpusArgs, CorrelateArgs, EpsilonArgs, InvariantFailure, RuleArg, SensitivityArgs, TrainArgs, UaeArgs, UsageError, VerifyArgs, VerifyKind};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load(corpus: &CorpusArgs) -> Result<Vec<ModuleDescriptor>> {
    match &corpus.corpus {
        Some(path) => {
            let descs = load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?;
            if descs.is_empty() {
                bail!("corpus {} contains no descriptors", path.display());
            }
            Ok(descs)
        }
        None => Ok(golden_corpus()),
    }
}

fn corpus_label(corpus: &CorpusArgs) -> String {
    corpus.corpus.as_ref().map_or("golden".into(), |p| p.display().to_string())
}

fn forms(list: &str) -> Result<Vec<UaeForm>> {
    let forms = UaeForm::parse_list(list).map_err(|e| usage(e.to_string()))?;
    if forms.is_empty() {
        return Err(usage("--forms must name at least one form (phi1..phi6)"));
    }
    Ok(forms)
}

fn seeds_from(base: u64, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    Ok((0..count as u64).map(|i| base.wrapping_add(i)).collect())
}

pub fn uae(a: UaeArgs) -> Result<()> {
    let descs = load(&a.corpus)?;
    let forms = forms(&a.forms)?;
    if !(0.0..1.0).contains(&a.tie_tolerance) {
        return Err(usage(format!("--tie-tolerance must lie in [0, 1), got {}", a.tie_tolerance)));
    }
    let mut run = Run::new(
        "uae",
        &a.common.out,
        a.common.seed,
        vec![
            ("corpus".into(), corpus_label(&a.corpus)),
            ("forms".into(), a.forms.clone()),
            ("tie_tolerance".into(), a.tie_tolerance.to_string()),
        ],
    )?;

    let mut rows = Vec::new();
    for f in &forms {
        for d in &descs {
            rows.push(vec![f.label.clone(), d.name.clone(), cell(evaluate_uae(f, d)?)]);
        }
    }
    run.csv("uae.csv", &["form", "module", "phi"], rows)?;

    let rankings = forms.iter().map(|f| rank_modules(f, &descs)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for r in &rankings {
        for (i, (name, v)) in r.entries.iter().rev().enumerate() {
            rows.push(vec![r.form.clone(), cell(i + 1), name.clone(), cell(v)]);
        }
    }
    run.csv("ranking.csv", &["form", "rank", "module", "phi"], rows)?;

    let (invariant, conflicts) = if forms.len() >= 2 {
        let v = ranking_invariance(&forms, &descs, a.tie_tolerance)?;
        (v.invariant, v.conflicts)
    } else {
        (true, Vec::new())
    };
    run.csv(
        "conflicts.csv",
        &["lower", "higher", "form_agreeing", "gap_agreeing", "form_disagreeing", "gap_disagreeing"],
        conflicts.iter().map(|c| {
            vec![
                c.lower.clone(),
                c.higher.clone(),
                c.form_agreeing.clone(),
                cell(c.gap_agreeing),
                c.form_disagreeing.clone(),
                cell(c.gap_disagreeing),
            ]
        }),
    )?;
    println!(
        "{} modules x {} forms; ranking invariant at tolerance {}: {} ({} conflicting pairs)",
        descs.len(),
        forms.len(),
        a.tie_tolerance,
        invariant,
        conflicts.len()
    );
    for c in &conflicts {
        println!(
            "  {} < {} under {} (gap {:.3}) but > under {} (gap {:.3})",
            c.lower, c.higher, c.form_agreeing, c.gap_agreeing, c.form_disagreeing, c.gap_disagreeing
        );
    }
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let descs = load(&a.corpus)?;
    let forms = forms(&a.forms)?;
    let subsets: Vec<FactorSubset> = if a.only.is_empty() {
        FactorSubset::TABLE_ORDER.to_vec()
    } else {
        a.only.iter().map(|s| s.parse::<FactorSubset>().map_err(usage)).collect::<Result<_>>()?
    };
    let mut run = Run::new(
        "ablate",
        &a.common.out,
        a.common.seed,
        vec![
            ("corpus".into(), corpus_label(&a.corpus)),
            ("forms".into(), a.forms.clone()),
            ("subsets".into(), subsets.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")),
        ],
    )?;
    let mut rows = Vec::new();
    for f in &forms {
        for s in &subsets {
            for d in &descs {
                rows.push(vec![f.label.clone(), d.name.clone(), s.to_string(), cell(ablate_one(f, d, *s)?)]);
            }
        }
    }
    println!("{} ablation cells", rows.len());
    run.csv("ablation.csv", &["form", "module", "subset", "phi"], rows)?;
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}

pub fn sensitivity(a: SensitivityArgs) -> Result<()> {
    let descs = load(&a.corpus)?;
    let forms = forms(&a.forms)?;
    if !a.v_empty.is_finite() {
        return Err(usage("--v-empty must be finite"));
    }
    let rule = match a.shapley_rule {
        RuleArg::Standard => ShapleyRule::Standard,
        RuleArg::MarginalMean => ShapleyRule::MarginalMean,
    };
    let shift = if a.shift_k { EvalShift::K_PLUS_ONE } else { EvalShift::NONE };
    let mut run = Run::new(
        "sensitivity",
        &a.common.out,
        a.common.seed,
        vec![
            ("corpus".into(), corpus_label(&a.corpus)),
            ("forms".into(), a.forms.clone()),
            ("shapley_rule".into(), format!("{:?}", rule).to_lowercase()),
            ("v_empty".into(), a.v_empty.to_string()),
            ("beta_shift".into(), shift.beta.to_string()),
        ],
    )?;
    for f in &forms {
        let mut rows = Vec::new();
        for d in &descs {
            let r = sensitivity_one(f, d, shift, a.v_empty, rule)?;
            let resid = r.efficiency_residual();
            println!("{} {}: sum C - (v_full - v_empty) = {:e}", f.label, d.name, resid);
            let mut row = vec![d.name.clone()];
            row.extend(r.s.iter().chain(&r.shapley).map(cell));
            row.push(cell(resid));
            rows.push(row);
        }
        run.csv(
            &format!("sensitivity_{}.csv", f.label),
            &["module", "S_alpha", "S_beta", "S_theta", "C_alpha", "C_beta", "C_theta", "efficiency_residual"],
            rows,
        )?;
    }
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}

fn dump_matrix(out: &mut String, name: &str, m: &nalgebra::DMatrix<f64>) {
    let _ = writeln!(out, "{name} ({}x{}):", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.17e}", m[(r, c)])).collect();
        let _ = writeln!(out, "  {}", row.join(" "));
    }
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    if a.trials == Some(0) {
        return Err(usage("--trials must be at least 1"));
    }
    let seed = a.common.seed;
    let kind = format!("{:?}", a.kind).to_lowercase();
    let mut config = vec![("kind".into(), kind.clone())];
    match a.kind {
        VerifyKind::Spectral => {
            let trials = a.trials.unwrap_or(1000);
            let dims = if a.d.is_empty() { (2..=8).collect() } else { a.d.clone() };
            config.push(("trials".into(), trials.to_string()));
            config.push(("d".into(), join(&dims)));
            let mut run = Run::new("verify", &a.common.out, seed, config)?;
            let s = spectral_gain_sweep(trials, &dims, DEFAULT_EIGEN_RANGE, seed)?;
            run.csv(
                "verify_spectral.csv",
                &["trials", "passed", "strict_failures", "closed_form_failures", "max_closed_form_error", "min_margin"],
                [vec![
                    cell(s.trials),
                    cell(s.trials - s.failures.len()),
                    cell(s.strict_failures),
                    cell(s.closed_form_failures),
                    cell(s.max_closed_form_error),
                    cell(s.min_margin),
                ]],
            )?;
            println!(
                "spectral gain: {}/{} pass, max closed-form error {:e}, min margin {:e}",
                s.trials - s.failures.len(),
                s.trials,
                s.max_closed_form_error,
                s.min_margin
            );
            if !s.passed() {
                let mut dump = String::new();
                for f in &s.failures {
                    let _ = writeln!(dump, "trial {} seed {}: {:?}", f.trial, f.seed, f.verdict);
                    dump_matrix(&mut dump, "A", &f.pair.a);
                    dump_matrix(&mut dump, "B", &f.pair.b);
                }
                run.text("failures_spectral.txt", &dump)?;
                run.finish()?;
                return Err(InvariantFailure(format!("{} of {} spectral-gain trials failed", s.failures.len(), s.trials)).into());
            }
            println!("manifest: {}", run.finish()?.display());
        }
        VerifyKind::Jacobian => {
            let trials = a.trials.unwrap_or(20);
            let dims = if a.d.is_empty() { (1..=8).collect() } else { a.d.clone() };
            config.push(("trials".into(), trials.to_string()));
            config.push(("d".into(), join(&dims)));
            config.push(("l".into(), join(&a.l)));
            config.push(("epsilon".into(), join(&a.epsilon)));
            let mut run = Run::new("verify", &a.common.out, seed, config)?;
            let s = jacobian_recurrence_sweep(&dims, &a.l, &a.epsilon, trials as u64, seed)?;
            run.csv(
                "verify_jacobian.csv",
                &["cases", "passed", "max_error"],
                [vec![cell(s.cases), cell(s.cases - s.failures.len()), cell(s.max_error)]],
            )?;
            println!("jacobian recurrence: {}/{} cases agree, max error {:e}", s.cases - s.failures.len(), s.cases, s.max_error);
            if !s.passed() {
                let mut dump = String::new();
                for c in &s.failures {
                    let _ = writeln!(dump, "d={} l={} epsilon={} seed={} error={:e}", c.d, c.l, c.epsilon, c.seed, c.error);
                    dump_matrix(&mut dump, "closed form", &c.closed);
                    dump_matrix(&mut dump, "finite difference", &c.finite_difference);
                }
                run.text("failures_jacobian.txt", &dump)?;
                run.finish()?;
                return Err(InvariantFailure(format!("{} of {} Jacobian cases disagree", s.failures.len(), s.cases)).into());
            }
            println!("manifest: {}", run.finish()?.display());
        }
        VerifyKind::Bounds => {
            let trials = a.trials.unwrap_or(200);
            if !a.coefficients.is_empty() && a.l.len() != 1 {
                return Err(usage("--coefficients needs exactly one --l"));
            }
            config.push(("trials".into(), trials.to_string()));
            config.push(("l".into(), join(&a.l)));
            config.push(("eta".into(), join(&a.eta)));
            if !a.coefficients.is_empty() {
                config.push(("coefficients".into(), join(&a.coefficients)));
            }
            let mut run = Run::new("verify", &a.common.out, seed, config)?;
            let mut rows = Vec::new();
            let mut violations = Vec::new();
            for &l in &a.l {
                if l < 2 * LAYERS_PER_STAGE || l % LAYERS_PER_STAGE != 0 {
                    return Err(usage(format!("--l values must be multiples of {LAYERS_PER_STAGE} with at least two stages, got {l}")));
                }
                let coeffs = if a.coefficients.is_empty() { vec![1.0; l / LAYERS_PER_STAGE - 1] } else { a.coefficients.clone() };
                for &eta in &a.eta {
                    let r = verify_jacobian_bounds(l, &coeffs, eta, trials, seed)?;
                    let asserted = eta > 0.0 && eta <= 0.05;
                    let rate = r.membership_rate();
                    println!(
                        "l={l} eta={eta}: membership {:.1}% in ({}, {}), observed [{:.6}, {:.6}]{}{}",
                        100.0 * rate,
                        r.lower,
                        r.upper,
                        r.min(),
                        r.max(),
                        if r.boundary { ", boundary case" } else { "" },
                        if asserted { "" } else { " (reported only)" }
                    );
                    if asserted && rate < 1.0 {
                        violations.push(format!("l={l} eta={eta} rate={rate}"));
                    }
                    rows.push(vec![
                        cell(l),
                        cell(eta),
                        cell(trials),
                        cell(r.lower),
                        cell(r.upper),
                        cell(rate),
                        cell(r.min()),
                        cell(r.max()),
                        cell(r.boundary),
                        cell(asserted),
                    ]);
                }
            }
            run.csv(
                "verify_bounds.csv",
                &["l", "eta", "trials", "lower", "upper", "membership_rate", "min_norm", "max_norm", "boundary", "asserted"],
                rows,
            )?;
            let manifest = run.finish()?;
            if !violations.is_empty() {
                return Err(InvariantFailure(format!("interval membership below 100%: {}", violations.join(", "))).into());
            }
            println!("manifest: {}", manifest.display());
        }
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn train_config(epochs: usize, lr: f64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs,
        lr,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn check_cascade(cascade: usize) -> Result<()> {
    if cascade == 0 {
        return Err(usage("--cascade must be at least 1"));
    }
    Ok(())
}

pub fn epsilon(a: EpsilonArgs) -> Result<()> {
    let pairs: Vec<(usize, usize)> = match (a.l.is_empty(), a.epsilon.is_empty()) {
        (true, true) => TABLE_PAIRS.to_vec(),
        (false, false) => a.l.iter().flat_map(|&l| a.epsilon.iter().map(move |&e| (l, e))).collect(),
        _ => return Err(usage("--l and --epsilon must be given together (or both omitted for the reference grid)")),
    };
    if !(a.delta_safe.is_finite() && a.delta_safe >= 0.0) {
        return Err(usage(format!("--delta-safe must be finite and non-negative, got {}", a.delta_safe)));
    }
    check_cascade(a.cascade)?;
    if a.cascade < 2 {
        return Err(usage("--cascade must be at least 2 to compare gradient ordering"));
    }
    let seeds = seeds_from(a.common.seed, a.seeds)?;
    let mut setup = EpsilonSetup {
        delta_safe: a.delta_safe,
        ..EpsilonSetup::default()
    };
    setup.toy.blocks = a.cascade;
    setup.toy.train = train_config(a.epochs, setup.toy.train.lr)?;

    let mut run = Run::new(
        "epsilon",
        &a.common.out,
        a.common.seed,
        vec![
            ("pairs".into(), pairs.iter().map(|(l, e)| format!("{l}:{e}")).collect::<Vec<_>>().join(";")),
            ("epochs".into(), a.epochs.to_string()),
            ("seeds".into(), join(&seeds)),
            ("delta_safe".into(), a.delta_safe.to_string()),
            ("cascade".into(), a.cascade.to_string()),
        ],
    )?;
    let outcomes = epsilon_grid(&setup, &pairs, &seeds)?;
    let mut rows = Vec::new();
    for o in &outcomes {
        println!(
            "l={:>2} eps={} seed={}: admissible={} diverged={} min_l1={:.4} (baseline {:.4}) ordering={}",
            o.l,
            o.epsilon,
            o.seed,
            o.admissible,
            o.diverged,
            o.min_l1,
            o.baseline_min_l1,
            o.ordering.name()
        );
        rows.push(vec![
            cell(o.l),
            cell(o.epsilon),
            cell(o.admissible),
            cell(o.min_l1),
            cell(o.diverged),
            o.ordering.name().to_string(),
            cell(o.seed),
        ]);
        run.csv(
            &format!("heatmap_l{}_eps{}_seed{}.csv", o.l, o.epsilon, o.seed),
            &["block", "epoch", "grad_norm"],
            o.trace.rows().into_iter().map(|(b, e, g)| vec![cell(b), cell(e), cell(g)]),
        )?;
    }
    run.csv("epsilon.csv", &["l", "epsilon", "admissible", "min_l1", "diverged", "ordering", "seed"], rows)?;
    let matching = outcomes.iter().filter(|o| o.admissible != o.diverged).count();
    println!("{matching}/{} runs match the admissible/diverged pattern", outcomes.len());
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}

fn parse_kinds(kinds: &[String]) -> Result<Vec<BlockKind>> {
    if kinds.is_empty() {
        return Err(usage(format!("--blocks must name at least one kind ({})", BlockKind::VALID)));
    }
    kinds.iter().map(|k| k.parse::<BlockKind>().map_err(usage)).collect()
}

fn metric_row(r: &MetricRecord) -> Vec<String> {
    vec![
        r.module.clone(),
        opt(r.psnr),
        opt(r.ssim),
        cell(r.params),
        opt(r.flops),
        opt(r.cpu_ms),
        opt(r.param_eff()),
    ]
}

const METRIC_HEADER: [&str; 7] = ["module", "psnr", "ssim", "params", "flops", "cpu_ms", "param_eff"];

pub fn train(a: TrainArgs) -> Result<()> {
    let kinds = parse_kinds(&a.blocks)?;
    let seeds = seeds_from(a.common.seed, a.seeds)?;
    check_cascade(a.cascade)?;
    let setup = ToySetup {
        blocks: a.cascade,
        train: train_config(a.epochs, a.lr)?,
        ..ToySetup::default()
    };
    let modules: Vec<StudyModule> = kinds.into_iter().map(StudyModule::kind).collect();
    let mut run = Run::new(
        "train",
        &a.common.out,
        a.common.seed,
        vec![
            ("blocks".into(), modules.iter().map(|m| m.label.clone()).collect::<Vec<_>>().join(",")),
            ("epochs".into(), a.epochs.to_string()),
            ("seeds".into(), join(&seeds)),
            ("cascade".into(), a.cascade.to_string()),
            ("lr".into(), a.lr.to_string()),
        ],
    )?;
    let runs = convergence_runs(&modules, &seeds, &setup)?;
    let mut rows = Vec::new();
    for r in &runs {
        let h = &r.outcome.history;
        run.csv(
            &format!("loss_{}_seed{}.csv", slug(&r.label), r.seed),
            &["epoch", "mean_l1"],
            h.iter().enumerate().map(|(e, v)| vec![cell(e), cell(v)]),
        )?;
        rows.push(vec![
            r.label.clone(),
            cell(r.seed),
            opt(r.outcome.mean_loss_first(h.len())),
            opt(r.outcome.min_loss()),
            cell(r.outcome.diverged()),
        ]);
    }
    run.csv("convergence.csv", &["block", "seed", "mean_l1", "min_l1", "diverged"], rows)?;

    let pair = |x: &str, y: &str| {
        let mean = |label: &str, seed: u64| {
            runs.iter()
                .find(|r| r.label == label && r.seed == seed)
                .and_then(|r| r.outcome.mean_loss_first(r.outcome.history.len()))
        };
        seeds.iter().filter(|&&s| matches!((mean(x, s), mean(y, s)), (Some(a), Some(b)) if a <= b)).count()
    };
    for m in &modules {
        if m.label != "RB" && modules.iter().any(|x| x.label == "RB") {
            println!("{} mean L1 <= RB in {}/{} paired seeds", m.label, pair(&m.label, "RB"), seeds.len());
        }
    }

    let records = modules
        .iter()
        .map(|m| measure_module(m, &setup, a.common.seed, 15).map(|(rec, _)| rec))
        .collect::<Result<Vec<_>, _>>()?;
    run.csv("metrics.csv", &METRIC_HEADER, records.iter().map(metric_row))?;
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}

pub fn correlate(a: CorrelateArgs) -> Result<()> {
    let mut descs = load(&a.corpus)?;
    let forms = forms(&a.forms)?;
    check_cascade(a.cascade)?;
    let setup = ToySetup {
        blocks: a.cascade,
        train: train_config(a.epochs, TrainConfig::default().lr)?,
        ..ToySetup::default()
    };
    let mut run = Run::new(
        "correlate",
        &a.common.out,
        a.common.seed,
        vec![
            ("corpus".into(), corpus_label(&a.corpus)),
            ("forms".into(), a.forms.clone()),
            ("epochs".into(), a.epochs.to_string()),
            ("cascade".into(), a.cascade.to_string()),
            ("timing_reps".into(), a.timing_reps.to_string()),
        ],
    )?;
    let modules = StudyModule::defaults();
    let mut records = Vec::new();
    for m in &modules {
        let (rec, _) = measure_module(m, &setup, a.common.seed, a.timing_reps)?;
        records.push(rec);
        if !descs.iter().any(|d| d.name == m.label) {
            descs.push(m.descriptor()?);
        }
    }
    for d in &descs {
        if !records.iter().any(|r| r.module == d.name) {
            records.push(MetricRecord::new(d.name.clone(), d.n));
        }
    }
    let series = score_series(&forms, &descs)?;
    let cells = correlate_metrics(&records, &series);
    run.csv("metrics.csv", &METRIC_HEADER, records.iter().map(metric_row))?;
    run.csv(
        "correlation.csv",
        &["variant", "metric", "pairs", "rho", "low_power"],
        cells.iter().map(|c| vec![c.variant.clone(), c.metric.to_string(), cell(c.pairs), opt(c.rho), cell(c.low_power)]),
    )?;
    for c in cells.iter().filter(|c| !c.variant.contains(':')) {
        println!(
            "{:<5} vs {:<9} rho={:>7} (n={}{})",
            c.variant,
            c.metric,
            c.rho.map_or("undef".into(), |r| format!("{r:.3}")),
            c.pairs,
            if c.low_power { ", low power" } else { "" }
        );
    }
    println!("manifest: {}", run.finish()?.display());
    Ok(())
}
