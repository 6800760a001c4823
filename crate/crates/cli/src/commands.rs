//! Command pipelines: validate parameters, run the toolkit, shape payloads
//! and CSV tables.

use crate::config::RunConfig;
use crate::report::{fmt, CsvFile};
use qcurv::bubble::{self, FModel};
use qcurv::conformal::{self, ConformalFactor, HypothesisVariant};
use qcurv::constants::{self, DimensionSpec};
use qcurv::grid::RadialGrid;
use qcurv::minimizer::{self, Init, MinimizeOpts, SingularWeightConfig};
use qcurv::regularity::{self, KatoStummelQuery, RadialDensity};
use qcurv::report::Warning;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub struct CommandOutput {
    pub payload: Value,
    pub csvs: Vec<CsvFile>,
    pub warnings: Vec<Warning>,
    /// Set when a decision-style command evaluated to "does not hold".
    pub hypothesis_failed: bool,
}

fn val(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn num(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn dim_of(cfg: &RunConfig) -> Result<DimensionSpec, CliError> {
    let n = cfg.u64("n", 6).map_err(CliError::Validation)? as u32;
    DimensionSpec::new(n).map_err(val)
}

pub fn run_command(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    match cfg.command.as_str() {
        "constants" => constants_cmd(cfg),
        "audit-derivatives" => audit_cmd(cfg),
        "thresholds" => thresholds_cmd(cfg),
        "check-hypothesis" => hypothesis_cmd(cfg),
        "bubble" => bubble_cmd(cfg),
        "minimize" => minimize_cmd(cfg),
        "continuation" => continuation_cmd(cfg),
        "regularity" => regularity_cmd(cfg),
        other => Err(CliError::Validation(format!("unknown command '{other}'"))),
    }
}

fn constants_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let dim = dim_of(cfg)?;
    let p_max = cfg.u64("lattice_p_max", 16).map_err(CliError::Validation)? as u32;
    let mut rows = Vec::new();
    let mut max_gap = 0.0_f64;
    let mut max_rec = 0.0_f64;
    for p in 3..=p_max {
        for q in 0..=(p - 2) {
            let (pf, qf) = (p as f64, q as f64);
            let closed = constants::beta_integral(pf, qf).map_err(val)?;
            let quad = constants::beta_integral_quadrature(pf, qf).map_err(num)?;
            let gap = (closed - quad).abs() / quad;
            max_gap = max_gap.max(gap);
            let rec = if p as i64 - q as i64 - 2 > 0 {
                let next = constants::beta_recursion_step(pf, qf, closed).map_err(val)?;
                let direct = constants::beta_integral(pf, qf + 1.0).map_err(val)?;
                (next - direct).abs() / direct
            } else {
                0.0
            };
            max_rec = max_rec.max(rec);
            rows.push(format!(
                "{p},{q},{},{},{},{}",
                fmt(closed),
                fmt(quad),
                fmt(gap),
                fmt(rec)
            ));
        }
    }
    let k2_inv = constants::best_sobolev_sq_inv(&dim);
    let (cn, cd) = dim.critical_exponent_rational();
    let payload = json!({
        "n": dim.n(),
        "omega": dim.omega(),
        "critical_exponent": { "num": cn, "den": cd, "value": dim.critical_exponent() },
        "best_sobolev_sq_inv": k2_inv,
        "i_n_half_minus_one": constants::beta_integral(dim.n() as f64, dim.n() as f64 / 2.0 - 1.0).map_err(val)?,
        "lattice": { "p_max": p_max, "entries": rows.len(), "max_rel_gap": max_gap, "max_recursion_residual": max_rec },
    });
    let csv = CsvFile::new(
        "beta_lattice.csv",
        "p,q,closed_form,quadrature,rel_gap,recursion_residual",
        rows,
    );
    Ok(CommandOutput {
        payload,
        csvs: vec![csv],
        warnings: vec![],
        hypothesis_failed: false,
    })
}

fn audit_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let n = cfg.u64("n", 6).map_err(CliError::Validation)? as u32;
    let alpha = cfg.f64("alpha", 1.5).map_err(CliError::Validation)?;
    let lo = cfg.f64("sample_lo", 0.2).map_err(CliError::Validation)?;
    let hi = cfg.f64("sample_hi", 0.9).map_err(CliError::Validation)?;
    let count = cfg.u64("samples", 8).map_err(CliError::Validation)? as usize;
    let cf = ConformalFactor::new(n, alpha).map_err(val)?;
    let audit = conformal::derivative_audit(&cf, lo, hi, count).map_err(num)?;
    let mut rows = Vec::new();
    for e in &audit.entries {
        for (k, t) in e.derived.terms().iter().enumerate() {
            let ref_coeff = e
                .reference
                .terms()
                .iter()
                .find(|rt| (rt.exponent - t.exponent).abs() < 1e-9)
                .map(|rt| rt.coeff);
            rows.push(format!(
                "{},{k},{},{},{},{},{},{}",
                e.name,
                fmt(t.exponent),
                fmt(t.coeff),
                ref_coeff.map_or("".to_string(), fmt),
                e.reference_agrees,
                fmt(e.oracle.max_rel_dev),
                e.oracle.pass
            ));
        }
    }
    let payload = serde_json::to_value(&audit).expect("audit serializes");
    let warnings = audit.warnings.clone();
    Ok(CommandOutput {
        payload,
        csvs: vec![CsvFile::new(
            "derivative_audit.csv",
            "quantity,term,exponent,coeff_derived,coeff_reference,reference_agrees,oracle_max_rel_dev,oracle_pass",
            rows,
        )],
        warnings,
        hypothesis_failed: false,
    })
}

fn thresholds_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let n = cfg.u64("n", 6).map_err(CliError::Validation)? as u32;
    let alpha = cfg.f64("alpha", 1.5).map_err(CliError::Validation)?;
    let lo = cfg.f64("sample_lo", 0.01).map_err(CliError::Validation)?;
    let cap = cfg.f64("sample_cap", 1.0).map_err(CliError::Validation)?;
    let count = cfg.u64("samples", 800).map_err(CliError::Validation)? as usize;
    let cf = ConformalFactor::new(n, alpha).map_err(val)?;
    let th = conformal::thresholds_sampled(&cf, lo, cap, count).map_err(num)?;
    let rows = th
        .sign_checks
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{}",
                c.name,
                fmt(c.interval.0),
                fmt(c.interval.1),
                c.holds,
                c.first_violation.map_or("".to_string(), fmt)
            )
        })
        .collect();
    let warnings = th.warnings.clone();
    let payload = serde_json::to_value(&th).expect("thresholds serialize");
    Ok(CommandOutput {
        payload,
        csvs: vec![CsvFile::new(
            "sign_checks.csv",
            "condition,interval_lo,interval_hi,holds,first_violation",
            rows,
        )],
        warnings,
        hypothesis_failed: false,
    })
}

fn hypothesis_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let dim = dim_of(cfg)?;
    let variant = match cfg
        .string("variant", "main")
        .map_err(CliError::Validation)?
        .as_str()
    {
        "main" => HypothesisVariant::Main,
        "corollary" => HypothesisVariant::Corollary,
        "n6" | "n6-main" => HypothesisVariant::N6Main,
        "n6-corollary" | "corollary-n6" => HypothesisVariant::N6Corollary,
        other => {
            return Err(CliError::Validation(format!(
                "unknown variant '{other}' (main, corollary, n6-main, n6-corollary)"
            )))
        }
    };
    let rg = cfg.f64("rg", 0.0).map_err(CliError::Validation)?;
    let a = cfg.f64("a", 0.0).map_err(CliError::Validation)?;
    let f = cfg.f64("f", 1.0).map_err(CliError::Validation)?;
    let lap_f = cfg.f64("lap_f", 0.0).map_err(CliError::Validation)?;
    let rep = conformal::check_theorem_hypothesis(&dim, rg, a, f, lap_f, variant).map_err(val)?;
    let warnings = rep.warnings.clone();
    let failed = !rep.holds;
    Ok(CommandOutput {
        payload: serde_json::to_value(&rep).expect("report serializes"),
        csvs: vec![],
        warnings,
        hypothesis_failed: failed,
    })
}

fn weights_from(cfg: &RunConfig) -> Result<Option<SingularWeightConfig>, CliError> {
    let gamma = cfg.f64("gamma", 0.0).map_err(CliError::Validation)?;
    let alpha = cfg.f64("alpha", 0.0).map_err(CliError::Validation)?;
    let a0 = cfg.f64("a0", 0.0).map_err(CliError::Validation)?;
    let b0 = cfg.f64("b0", 0.0).map_err(CliError::Validation)?;
    let rho_min = cfg.f64("rho_min", 1e-3).map_err(CliError::Validation)?;
    if gamma == 0.0 && alpha == 0.0 && a0 == 0.0 && b0 == 0.0 {
        return Ok(None);
    }
    SingularWeightConfig::constant_parts(gamma, alpha, a0, b0, rho_min)
        .map(Some)
        .map_err(val)
}

fn bubble_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let dim = dim_of(cfg)?;
    let default_eps = [0.04, 0.028, 0.02, 0.014, 0.01];
    let epsilons = cfg
        .f64_list("epsilons", &default_eps)
        .map_err(CliError::Validation)?;
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Validation(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    let f_p = cfg.f64("f_p", 1.0).map_err(CliError::Validation)?;
    let lap_f_p = cfg.f64("lap_f_p", 0.0).map_err(CliError::Validation)?;
    let s_g = cfg.f64("s_g", 0.0).map_err(CliError::Validation)?;
    let f_model = FModel { f_p, lap_f_p };
    let set = bubble::verify_expansion(&dim, f_model, s_g, &epsilons).map_err(num)?;
    let mut warnings = set.warnings.clone();

    let mut energy_rows = Vec::new();
    let weights = weights_from(cfg)?;
    let nf = dim.n() as f64;
    let f_radial = move |r: f64| f_p - lap_f_p / (2.0 * nf) * r * r;
    for &eps in &epsilons {
        let profile = bubble::BubbleProfile::new(dim, eps, 1.0, None).map_err(val)?;
        let e = bubble::bubble_energy(&profile, weights.as_ref(), f_radial, s_g).map_err(num)?;
        energy_rows.push(format!(
            "{},{},{},{},{},{}",
            fmt(eps),
            fmt(e.bilap),
            fmt(e.grad_weighted),
            fmt(e.pot_weighted),
            fmt(e.f_mass),
            fmt(e.max_rel_err)
        ));
    }

    let term_rows = set
        .terms
        .iter()
        .map(|t| {
            format!(
                "{:?},{},{},{},{:?},{},{},{},{}",
                t.term,
                fmt(t.leading.predicted),
                fmt(t.leading.measured),
                fmt(t.leading.rel_gap),
                t.correction.order,
                fmt(t.correction.measured_rel),
                t.correction
                    .predicted_measure_part_rel
                    .map_or("".into(), fmt),
                t.correction.predicted_full_rel.map_or("".into(), fmt),
                t.correction.reference_rel.map_or("".into(), fmt)
            )
        })
        .collect();

    let scaling = match cfg.params.get("p") {
        Some(pv) => {
            let p = pv
                .as_f64()
                .ok_or_else(|| CliError::Validation("p must be a number".into()))?;
            let rep = bubble::giraud_scaling(&dim, p, &epsilons, weights.as_ref()).map_err(num)?;
            warnings.extend(rep.warnings.clone());
            Some(rep)
        }
        None => None,
    };

    let mut csvs = vec![
        CsvFile::new(
            "expansion_terms.csv",
            "term,leading_predicted,leading_measured,leading_rel_gap,correction_order,\
             correction_measured,correction_predicted_measure,correction_predicted_full,\
             correction_reference",
            term_rows,
        ),
        CsvFile::new(
            "energies.csv",
            "epsilon,bilap,grad_weighted,pot_weighted,f_mass,max_rel_err",
            energy_rows,
        ),
    ];
    if let Some(rep) = &scaling {
        let rows = [&rep.bilap, &rep.bprime, &rep.c_term]
            .iter()
            .map(|s| {
                format!(
                    "{:?},{},{},{},{},{}",
                    s.term,
                    fmt(s.measured),
                    fmt(s.reference),
                    fmt(s.derived),
                    s.matches_reference,
                    s.matches_derived
                )
            })
            .collect();
        csvs.push(CsvFile::new(
            "scaling.csv",
            "term,measured_slope,reference_exponent,derived_exponent,matches_reference,matches_derived",
            rows,
        ));
    }

    let payload = json!({
        "expansion": set,
        "scaling": scaling,
    });
    Ok(CommandOutput {
        payload,
        csvs,
        warnings,
        hypothesis_failed: false,
    })
}

fn solver_opts(cfg: &RunConfig) -> Result<MinimizeOpts, CliError> {
    let mut opts = MinimizeOpts::default();
    opts.el_tol = cfg.f64("el_tol", opts.el_tol).map_err(CliError::Validation)?;
    opts.max_iter = cfg
        .u64("max_iter", opts.max_iter as u64)
        .map_err(CliError::Validation)? as usize;
    opts.full_history = false;
    if let Some(v) = cfg.params.get("init_epsilon") {
        opts.init_epsilon = Some(
            v.as_f64()
                .ok_or_else(|| CliError::Validation("init_epsilon must be a number".into()))?,
        );
    }
    Ok(opts)
}

fn minimize_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let dim = dim_of(cfg)?;
    let cells = cfg.u64("cells", 2048).map_err(CliError::Validation)? as usize;
    let rho_max = cfg.f64("rho_max", 1.0).map_err(CliError::Validation)?;
    let grid = RadialGrid::uniform(dim, rho_max, cells).map_err(val)?;
    let w = weights_from(cfg)?.unwrap_or_else(SingularWeightConfig::inert);
    let f_p = cfg.f64("f_p", 1.0).map_err(CliError::Validation)?;
    let lap_f_p = cfg.f64("lap_f_p", 0.0).map_err(CliError::Validation)?;
    let nf = dim.n() as f64;
    let opts = solver_opts(cfg)?;
    let res = minimizer::minimize(
        &grid,
        &w,
        move |r| f_p - lap_f_p / (2.0 * nf) * r * r,
        Init::Bubble,
        &opts,
    )
    .map_err(num)?;
    let profile_rows = grid
        .nodes()
        .iter()
        .zip(res.minimizer.values())
        .map(|(r, u)| format!("{},{}", fmt(*r), fmt(*u)))
        .collect();
    let history_rows = res
        .history
        .iter()
        .enumerate()
        .map(|(i, q)| format!("{i},{}", fmt(*q)))
        .collect();
    let warnings = res.warnings.clone();
    Ok(CommandOutput {
        payload: serde_json::to_value(&res).expect("solve result serializes"),
        csvs: vec![
            CsvFile::new("minimizer_profile.csv", "rho,u", profile_rows),
            CsvFile::new("history.csv", "step,quotient", history_rows),
        ],
        warnings,
        hypothesis_failed: false,
    })
}

fn continuation_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let dim = dim_of(cfg)?;
    let cells = cfg.u64("cells", 2048).map_err(CliError::Validation)? as usize;
    let rho_max = cfg.f64("rho_max", 1.0).map_err(CliError::Validation)?;
    let grid = RadialGrid::uniform(dim, rho_max, cells).map_err(val)?;
    let a0 = cfg.f64("a0", 1.0).map_err(CliError::Validation)?;
    let b0 = cfg.f64("b0", 1.0).map_err(CliError::Validation)?;
    let rho_min = cfg.f64("rho_min", 0.1).map_err(CliError::Validation)?;
    let base = SingularWeightConfig::constant_parts(2.0, 4.0, a0, b0, rho_min).map_err(val)?;
    let default_path = [(1.5, 3.0), (1.8, 3.6), (1.95, 3.9)];
    let path = cfg
        .pair_list("path", &default_path)
        .map_err(CliError::Validation)?;
    let f_p = cfg.f64("f_p", 1.0).map_err(CliError::Validation)?;
    let opts = solver_opts(cfg)?;
    let rep = minimizer::sharp_continuation(&grid, &base, &path, move |_| f_p, &opts)
        .map_err(num)?;
    let mut rows: Vec<String> = rep
        .path
        .iter()
        .zip(&rep.steps)
        .zip(&rep.gaps)
        .map(|(((g, a), s), gap)| {
            format!(
                "{},{},{},{},{},{}",
                fmt(*g),
                fmt(*a),
                fmt(s.quotient),
                fmt(s.el_residual),
                s.iterations,
                fmt(*gap)
            )
        })
        .collect();
    rows.push(format!(
        "2,4,{},{},{},0",
        fmt(rep.sharp.quotient),
        fmt(rep.sharp.el_residual),
        rep.sharp.iterations
    ));
    let warnings = rep.warnings.clone();
    Ok(CommandOutput {
        payload: serde_json::to_value(&rep).expect("continuation serializes"),
        csvs: vec![CsvFile::new(
            "continuation.csv",
            "gamma,alpha,quotient,el_residual,iterations,gap_to_sharp",
            rows,
        )],
        warnings,
        hypothesis_failed: false,
    })
}

fn regularity_cmd(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let n = cfg.u64("n", 8).map_err(CliError::Validation)? as u32;
    let p = cfg.f64("p", 3.0).map_err(CliError::Validation)?;
    let j_max = cfg.u64("j_max", n as u64).map_err(CliError::Validation)? as u32;
    let mut rows = Vec::new();
    let mut iterates = Vec::new();
    for j in 0..=j_max {
        let it = regularity::giraud_classify(n, p, j).map_err(val)?;
        rows.push(format!(
            "{j},{},{:?},{}",
            fmt((j as f64 + 1.0) * p / (p + j as f64)),
            it.regime,
            it.exponent.map_or("".into(), fmt)
        ));
        iterates.push(it);
    }
    let first_bounded = regularity::first_bounded_iterate(n, p).map_err(val)?;
    let class = regularity::regularity_class(n, p).map_err(val)?;

    let mut csvs = vec![CsvFile::new(
        "classification.csv",
        "j,comparison_quantity,regime,exponent",
        rows,
    )];
    let kato = if let Some(lv) = cfg.params.get("kato_l") {
        let l = lv
            .as_f64()
            .ok_or_else(|| CliError::Validation("kato_l must be a number".into()))?;
        let t = cfg.f64("kato_t", 0.5).map_err(CliError::Validation)?;
        let dim = DimensionSpec::new(n).map_err(val)?;
        let q = KatoStummelQuery {
            density: RadialDensity::new(|_| 1.0),
            l,
            t,
        };
        let rep = regularity::kato_stummel_phi(&q, &dim).map_err(num)?;
        csvs.push(CsvFile::new(
            "kato_decay.csv",
            "t,phi",
            rep.decay_table
                .iter()
                .map(|(t, v)| format!("{},{}", fmt(*t), fmt(*v)))
                .collect(),
        ));
        Some(rep)
    } else {
        None
    };

    let payload = json!({
        "n": n,
        "p": p,
        "iterates": iterates,
        "first_bounded_iterate": first_bounded,
        "regularity_class": class,
        "kato": kato,
    });
    Ok(CommandOutput {
        payload,
        csvs,
        warnings: vec![],
        hypothesis_failed: false,
    })
}
