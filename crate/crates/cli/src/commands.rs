use std::path::Path;
use std::time::Instant;

use asgd_core::blockdyn::{decay_rate, eigenpair, sgd_decay_rate};
use asgd_core::bounds::{
    asgd_bound, classical_bound, compare_report, decay_winner, onehot_bound, sgd_bound, shb_bound, BoundReport, Variant,
};
use asgd_core::hyper::{compute_cutoffs, BoundConstants};
use asgd_core::oracle;
use asgd_core::simulate::{monte_carlo, monte_carlo_decomposed};
use asgd_core::verify::{run_all, Failure, VerifyOptions};
use asgd_core::{HyperParams, ProblemInstance, Spectrum};
use rayon::prelude::*;

use crate::config::{Algorithm, Design, Engine, ExperimentConfig, RegimeSpec};
use crate::error::CliError;
use crate::output::{num, Document, ResultRow};

fn bound_report(cfg: &ExperimentConfig, inst: &ProblemInstance, alg: &Algorithm, s: usize) -> Result<BoundReport, CliError> {
    let n = cfg.n;
    let variant = Variant::from(cfg.variant);
    let report = match (alg.label, alg.regime) {
        ("sgd", _) => sgd_bound(inst, alg.hp.delta, cfg.psi, s, n)?,
        (_, RegimeSpec::Shb) => shb_bound(inst, &alg.hp, s, n)?,
        (_, RegimeSpec::Classical) => {
            let r = classical_bound(inst, cfg.psi, s, n)?;
            match variant {
                Variant::Main => r.corollary,
                Variant::Appendix => r.appendix,
            }
        }
        (_, RegimeSpec::Overparam) if cfg.design == Design::Onehot => onehot_bound(inst, &alg.hp, s, n, variant)?,
        (_, RegimeSpec::Overparam) => asgd_bound(inst, &alg.hp, s, n, variant)?,
        (_, RegimeSpec::Manual) => {
            return Err(CliError::Config("the bound engine needs regime overparam, classical or shb".into()));
        }
    };
    Ok(report)
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn cell_rows(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    engine: Engine,
    alg: &Algorithm,
    s: usize,
) -> Result<Vec<ResultRow>, CliError> {
    let start = Instant::now();
    let row = |rep: String, risk: f64, bias: Option<f64>, variance: Option<f64>, stderr: Option<f64>, ms: f64| ResultRow {
        engine: engine.label(),
        algorithm: alg.label,
        s,
        n: cfg.n,
        rep,
        excess_risk: risk,
        bias,
        variance,
        stderr,
        wall_time_ms: ms,
    };
    match engine {
        Engine::Bound => {
            let b = bound_report(cfg, inst, alg, s)?;
            Ok(vec![row("bound".into(), b.total, Some(b.effective_bias), Some(b.effective_variance), None, elapsed_ms(start))])
        }
        Engine::Oracle => {
            let fm = cfg.fourth_moment(&inst.spectrum);
            let rb = oracle::risk_breakdown(inst, &alg.hp, &fm, s, cfg.n)?;
            Ok(vec![row("exact".into(), rb.total, Some(rb.bias), Some(rb.variance), None, elapsed_ms(start))])
        }
        Engine::Montecarlo => {
            let model = cfg.data_model(inst)?;
            let mut rows = Vec::with_capacity(cfg.reps + 1);
            if cfg.decomposed {
                let mc = monte_carlo_decomposed(&model, &alg.hp, s, cfg.n, cfg.reps, cfg.seed)?;
                let per_rep = elapsed_ms(start) / cfg.reps as f64;
                for i in 0..cfg.reps {
                    rows.push(row(i.to_string(), mc.full.per_rep[i], Some(mc.bias.per_rep[i]), Some(mc.variance.per_rep[i]), None, per_rep));
                }
                let se = mc.full.stderr_defined.then_some(mc.full.stderr);
                rows.push(row("mean".into(), mc.full.mean, Some(mc.bias.mean), Some(mc.variance.mean), se, elapsed_ms(start)));
            } else {
                let mc = monte_carlo(&model, &alg.hp, s, cfg.n, cfg.reps, cfg.seed)?;
                let per_rep = elapsed_ms(start) / cfg.reps as f64;
                for (i, &v) in mc.per_rep.iter().enumerate() {
                    rows.push(row(i.to_string(), v, None, None, None, per_rep));
                }
                let se = mc.stderr_defined.then_some(mc.stderr);
                rows.push(row("mean".into(), mc.mean, None, None, se, elapsed_ms(start)));
            }
            Ok(rows)
        }
    }
}

/// Evaluates every `(engine, algorithm, s)` cell on the worker pool and
/// returns rows in that key order, independent of completion order.
pub fn run_grid(cfg: &ExperimentConfig, engines: &[Engine]) -> Result<Vec<ResultRow>, CliError> {
    let sp = cfg.spectrum()?;
    let inst = cfg.instance(&sp)?;
    let algs = cfg.algorithms(&sp)?;
    let mut cells = Vec::new();
    for &engine in engines {
        for alg in &algs {
            for &s in &cfg.s {
                cells.push((engine, alg, s));
            }
        }
    }
    let chunks = cells
        .par_iter()
        .map(|&(engine, alg, s)| cell_rows(cfg, &inst, engine, alg, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn decay_table(name: &str, cfg: &ExperimentConfig, sp: &Spectrum, hp: &HyperParams, cap: usize) -> Document {
    let mut doc = Document::new(name, "decay-rate table", Some(cfg));
    doc.line("index,lambda,regime,asgd_base,sgd_base,winner");
    let sgd = cfg.sgd_step();
    for (i, &lam) in sp.eigenvalues().iter().take(cap).enumerate() {
        let (a, b) = (decay_rate(lam, hp), sgd_decay_rate(lam, sgd));
        doc.line(format!(
            "{},{},{:?},{},{},{:?}",
            i + 1,
            num(lam),
            eigenpair(lam, hp).regime,
            num(a),
            num(b),
            decay_winner(a, b)
        ));
    }
    doc
}

pub fn cutoffs(cfg: &ExperimentConfig, cap: usize) -> Result<Vec<Document>, CliError> {
    let sp = cfg.spectrum()?;
    let hp = cfg.hyper(&sp)?;
    let cut = compute_cutoffs(&sp, &hp, cfg.n, cfg.sgd_step());
    let k = BoundConstants::evaluate(&sp, &hp);
    let mut doc = Document::new("cutoffs", "parameters and cutoffs", Some(cfg));
    doc.line("quantity,value");
    for (name, v) in [
        ("alpha", hp.alpha),
        ("beta", hp.beta),
        ("gamma", hp.gamma),
        ("delta", hp.delta),
        ("c", hp.c),
        ("q", hp.q),
        ("l", k.l),
        ("r", k.r),
    ] {
        doc.line(format!("{name},{}", num(v)));
    }
    for (name, v) in [
        ("k_ddagger", cut.k_ddagger),
        ("k_hat", cut.k_hat),
        ("k_dagger", cut.k_dagger),
        ("k_star", cut.k_star),
        ("k_star_sgd", cut.k_star_sgd),
    ] {
        doc.line(format!("{name},{v}"));
    }
    Ok(vec![doc, decay_table("decay", cfg, &sp, &hp, cap)])
}

pub fn single_engine(cfg: &ExperimentConfig, engine: Engine) -> Result<Vec<Document>, CliError> {
    let rows = run_grid(cfg, &[engine])?;
    Ok(vec![Document::results(engine.label(), engine.label(), cfg, &rows)])
}

pub fn compare(cfg: &ExperimentConfig, cap: usize) -> Result<Vec<Document>, CliError> {
    let sp = cfg.spectrum()?;
    let inst = cfg.instance(&sp)?;
    let hp = cfg.hyper(&sp)?;
    let mut totals = Document::new("compare", "ASGD vs SGD bounds", Some(cfg));
    totals.line("s,N,k_hat,asgd_total,asgd_bias,asgd_variance,sgd_total,sgd_bias,sgd_variance,flip_at_k_hat");
    for &s in &cfg.s {
        let r = compare_report(&inst, &hp, cfg.sgd_step(), s, cfg.n, cfg.variant.into())?;
        totals.line(format!(
            "{s},{},{},{},{},{},{},{},{},{}",
            cfg.n,
            r.k_hat,
            num(r.asgd.total),
            num(r.asgd.effective_bias),
            num(r.asgd.effective_variance),
            num(r.sgd.total),
            num(r.sgd.effective_bias),
            num(r.sgd.effective_variance),
            r.flip_at_k_hat
        ));
    }
    Ok(vec![totals, decay_table("compare_decay", cfg, &sp, &hp, cap)])
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// One row per `κ̃` with `γ = 1/(2ψ Σ_{i>κ̃} λ_i)`, the largest admissible
/// value, and `β = δ/(ψκ̃γ)`. Infeasible values give a warning row.
pub fn sweep_kappa(cfg: &ExperimentConfig, kappas: &[usize], cap: usize) -> Result<Vec<Document>, CliError> {
    let sp = cfg.spectrum()?;
    let inst = cfg.instance(&sp)?;
    let s = *cfg.s.last().expect("s list is non-empty");
    let mut doc = Document::new("sweep_kappa", "kappa sweep", Some(cfg));
    doc.line("kappa_tilde,status,gamma,beta,c,k_hat,total_bound,decay_bases,message");
    for &kappa in kappas {
        let attempt = || -> Result<(HyperParams, usize, f64), CliError> {
            let tail = sp.tail_sum(kappa)?;
            let gamma = 1.0 / (2.0 * cfg.psi * tail);
            let hp = HyperParams::derive_overparam(cfg.delta, gamma, kappa, cfg.psi, &sp)?;
            let k_hat = compute_cutoffs(&sp, &hp, cfg.n, cfg.sgd_step()).k_hat;
            let total = asgd_bound(&inst, &hp, s, cfg.n, cfg.variant.into())?.total;
            Ok((hp, k_hat, total))
        };
        match attempt() {
            Ok((hp, k_hat, total)) => {
                let bases: Vec<String> = sp.eigenvalues().iter().take(cap).map(|&l| num(decay_rate(l, &hp))).collect();
                doc.line(format!(
                    "{kappa},ok,{},{},{},{k_hat},{},{},",
                    num(hp.gamma),
                    num(hp.beta),
                    num(hp.c),
                    num(total),
                    bases.join(";")
                ));
            }
            Err(e) => {
                eprintln!("warning: kappa_tilde = {kappa} skipped: {e}");
                doc.line(format!("{kappa},warning,,,,,,,{}", quote(&e.to_string())));
            }
        }
    }
    Ok(vec![doc])
}

pub fn verify(opts: &VerifyOptions, out: Option<&Path>) -> Result<(), CliError> {
    let results = run_all(opts);
    println!("suite,cases,failures,elapsed_ms,status");
    for r in &results {
        println!("{},{},{},{:.1},{}", r.name, r.cases, r.failures.len(), r.elapsed_ms, if r.passed() { "pass" } else { "FAIL" });
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let failures: Vec<&Failure> = results.iter().flat_map(|r| &r.failures).collect();
    let json = serde_json::to_string_pretty(&failures).map_err(|e| CliError::Run(e.to_string()))?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("verify_replay.json");
            std::fs::write(&path, json)?;
            eprintln!("replay records written to {}", path.display());
        }
        None => eprintln!("{json}"),
    }
    Err(CliError::Verify(format!("failing suites: {}", failed.join(", "))))
}
