use std::str::FromStr;

use crate::config::RunConfig;
use crate::error::{input, Result};
use crate::field::{FieldConfig, PathEnsemble, SimulationPlan};
use crate::noise::{derive_seed, refine_time, sample_white_noise};
use crate::quadrature::{k_eps_x, kx_table, KxTable, QuadratureConfig};
use crate::stats::{pairwise_sum, variance, variance_std_error};

use super::{
    dyadic_lags, expectation_ito, gaussian_semigroup_check, holder_estimate, pathwise_ito_eps, variance_identity,
    HolderEstimate, VerificationReport,
};

/// Deliberate corruptions used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Every `K_x` table is halved.
    KxHalved,
}

impl FromStr for Mutation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kx-halved" => Ok(Self::KxHalved),
            other => input(format!("unknown mutation '{other}'")),
        }
    }
}

// stream offsets so the suite's random inputs never share seeds
const PATHWISE_STREAM: u64 = 0x7061_7468;
const BRIDGE_STREAM: u64 = 0x6272_6964;
const BOOTSTRAP_STREAM: u64 = 0x626f_6f74;

fn record(out: &mut Vec<VerificationReport>, name: String, r: Result<VerificationReport>) {
    out.push(r.unwrap_or_else(|e| VerificationReport::errored(name, &e)));
}

/// Every check of the configured matrix. Only an invalid configuration is an
/// error; a check that cannot be evaluated is recorded as a failed report.
pub fn run_suite(cfg: &RunConfig, mutation: Option<Mutation>) -> Result<Vec<VerificationReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    if cfg.x_probes.is_empty() || cfg.t_probes.is_empty() {
        return Ok(out);
    }
    let hurst = cfg.hurst_param()?;
    let grid = cfg.grid()?;
    let n_h = cfg
        .t_probes
        .iter()
        .filter_map(|&t| grid.time_index(t))
        .max()
        .expect("validated probes")
        .max(2);
    let sim = grid.prefix(n_h)?;
    let allowance = cfg.c_disc * sim.dt().sqrt();
    let target = 2.0 * hurst.get() - 0.5;
    let fcfg = FieldConfig {
        hurst,
        modes: cfg.modes,
    };
    let qcfg = QuadratureConfig::new(hurst);
    let functions = cfg.test_functions()?;
    let xs = &cfg.x_probes;

    let tables: Vec<Result<KxTable>> = xs
        .iter()
        .map(|&x| {
            let tab = kx_table(&sim, x, &qcfg)?;
            Ok(match mutation {
                Some(Mutation::KxHalved) => tab.scaled(0.5),
                None => tab,
            })
        })
        .collect();

    let ens0 = SimulationPlan::new(&sim, xs, 0.0, &fcfg, false).and_then(|p| p.ensemble(cfg.n_paths, cfg.seed));
    let mut base_holder: Vec<Option<HolderEstimate>> = vec![None; xs.len()];
    for (q, &x) in xs.iter().enumerate() {
        for &t in &cfg.t_probes {
            let with = |f: &dyn Fn(&PathEnsemble, &KxTable) -> Result<VerificationReport>| -> Result<VerificationReport> {
                let ens = ens0.as_ref().map_err(Clone::clone)?;
                let tab = tables[q].as_ref().map_err(Clone::clone)?;
                f(&ens[q], tab)
            };
            record(
                &mut out,
                format!("variance_identity[t={t},x={x}]"),
                with(&|e, tab| variance_identity(e, tab, t, allowance)),
            );
            for f in &functions {
                record(
                    &mut out,
                    format!("expectation_ito[f={},t={t},x={x}]", f.name),
                    with(&|e, tab| expectation_ito(e, f, tab, t, allowance)),
                );
                let semigroup = tables[q].as_ref().map_err(Clone::clone).and_then(|tab| {
                    let (mut rep, _) = gaussian_semigroup_check(f, tab, t)?;
                    rep.tolerance = cfg.semigroup_tol;
                    rep.pass = rep.residual.abs() <= rep.tolerance;
                    Ok(rep)
                });
                record(&mut out, format!("gaussian_semigroup[f={},t={t},x={x}]", f.name), semigroup);
            }
        }
        let est = ens0
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|ens| holder_estimate(&ens[q], &dyadic_lags(&sim), derive_seed(cfg.seed ^ BOOTSTRAP_STREAM, q as u64)));
        let rep = est.as_ref().map_err(Clone::clone).map(|e| {
            let mut r = VerificationReport::new(format!("holder_slope[eps=0,x={x}]"), e.slope - target, cfg.slope_halfwidth);
            r.n_paths = Some(cfg.n_paths);
            r.grid = Some(sim);
            r
        });
        record(&mut out, format!("holder_slope[eps=0,x={x}]"), rep);
        base_holder[q] = est.ok();
    }
    drop(ens0);

    // regularised ensembles: one-sided regularity with an eps-free constant,
    // and the variance of X^ε against 2 K_{ε,x}
    let mut gaps: Vec<Vec<Vec<Option<f64>>>> = vec![vec![Vec::new(); cfg.t_probes.len()]; xs.len()];
    for (k, &eps) in cfg.eps_ladder.iter().enumerate() {
        let ens = SimulationPlan::new(&sim, xs, eps, &fcfg, false).and_then(|p| p.ensemble(cfg.n_paths, cfg.seed));
        for (q, &x) in xs.iter().enumerate() {
            let est = ens.as_ref().map_err(Clone::clone).and_then(|e| {
                holder_estimate(&e[q], &dyadic_lags(&sim), derive_seed(cfg.seed ^ BOOTSTRAP_STREAM, (100 + k * 10 + q) as u64))
            });
            let name = format!("holder_slope_lower[eps={eps},x={x}]");
            record(
                &mut out,
                name,
                est.as_ref()
                    .map_err(Clone::clone)
                    .map(|e| VerificationReport::new(format!("holder_slope_lower[eps={eps},x={x}]"), (target - cfg.slope_halfwidth - e.slope).max(0.0), 0.0)),
            );
            let name = format!("holder_constant[eps={eps},x={x}]");
            let rep = match (&est, &base_holder[q]) {
                (Ok(e), Some(b)) => Ok(VerificationReport::new(
                    name.clone(),
                    (e.constant(target) - b.constant(target)).max(0.0),
                    0.0,
                )),
                (Err(err), _) => Err(err.clone()),
                (_, None) => input("no unregularised estimate to compare against"),
            };
            record(&mut out, name, rep);
            for (j, &t) in cfg.t_probes.iter().enumerate() {
                let keps = k_eps_x(t, x, eps, &qcfg);
                gaps[q][j].push(match (&keps, &tables[q]) {
                    (Ok(v), Ok(tab)) => sim.time_index(t).map(|i| (v - 0.5 * tab.values[i]).abs()),
                    _ => None,
                });
                let rep = ens.as_ref().map_err(Clone::clone).and_then(|e| {
                    let i = sim.time_index(t).expect("validated probe");
                    let col = e[q].column(i);
                    let keps = keps.clone()?;
                    let se = 0.5 * variance_std_error(&col);
                    let mut r = VerificationReport::new(
                        format!("k_eps_variance[eps={eps},t={t},x={x}]"),
                        keps - 0.5 * variance(&col),
                        3.0 * se + allowance,
                    );
                    r.std_error = Some(se);
                    r.n_paths = Some(cfg.n_paths);
                    r.grid = Some(sim);
                    Ok(r)
                });
                record(&mut out, format!("k_eps_variance[eps={eps},t={t},x={x}]"), rep);
            }
        }
    }
    if !cfg.eps_ladder.is_empty() {
        for (q, &x) in xs.iter().enumerate() {
            for (j, &t) in cfg.t_probes.iter().enumerate() {
                let name = format!("k_eps_ladder[t={t},x={x}]");
                let g: Option<Vec<f64>> = gaps[q][j].iter().copied().collect();
                let rep = match g {
                    Some(g) => {
                        let worst = g.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                        // strict decrease: a tie counts as a failure
                        let residual = if worst >= 0.0 { worst.max(f64::MIN_POSITIVE) } else { 0.0 };
                        Ok(VerificationReport::new(name.clone(), residual, 0.0))
                    }
                    None => input("K_eps or K_x unavailable"),
                };
                record(&mut out, name, rep);
            }
        }
    }

    // pathwise identity for X^ε and its refinement
    let fine = crate::noise::GridSpec::new(sim.t_max, 2 * sim.n_time, sim.n_space)?;
    let plans = SimulationPlan::new(&sim, xs, cfg.pathwise_eps, &fcfg, true)
        .and_then(|c| Ok((c, SimulationPlan::new(&fine, xs, cfg.pathwise_eps, &fcfg, true)?)));
    let mut coarse_res = vec![vec![Vec::new(); xs.len()]; functions.len()];
    let mut fine_res = coarse_res.clone();
    let mut failure = None;
    if let Ok((pc, pf)) = &plans {
        for s in 0..cfg.pathwise_seeds as u64 {
            let w = sample_white_noise(&sim, derive_seed(cfg.seed ^ PATHWISE_STREAM, s));
            let step = refine_time(&w, derive_seed(cfg.seed ^ BRIDGE_STREAM, s)).and_then(|wf| {
                let (xc, dc) = pc.run_noise(&w)?;
                let (xf, df) = pf.run_noise(&wf)?;
                Ok((xc, dc.expect("derivative plan"), xf, df.expect("derivative plan")))
            });
            let (xc, dc, xf, df) = match step {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            for (fi, f) in functions.iter().enumerate() {
                for q in 0..xs.len() {
                    let mk = |g, vals: &Vec<f64>, d: &Vec<f64>| {
                        let sample = crate::field::FieldSample {
                            grid: g,
                            x: xs[q],
                            eps: cfg.pathwise_eps,
                            seed: w.seed,
                            values: vals.clone(),
                        };
                        pathwise_ito_eps(&sample, d, f, cfg.pathwise_tol).map(|r| r.residual)
                    };
                    match (mk(sim, &xc[q], &dc[q]), mk(fine, &xf[q], &df[q])) {
                        (Ok(a), Ok(b)) => {
                            coarse_res[fi][q].push(a);
                            fine_res[fi][q].push(b);
                        }
                        (Err(e), _) | (_, Err(e)) => failure = Some(e),
                    }
                }
            }
        }
    }
    let failure = match plans {
        Err(e) => Some(e),
        Ok(_) => failure,
    };
    for (fi, f) in functions.iter().enumerate() {
        for (q, &x) in xs.iter().enumerate() {
            let name = format!("pathwise_ito[f={},eps={},x={x}]", f.name, cfg.pathwise_eps);
            let rname = format!("pathwise_refinement[f={},eps={},x={x}]", f.name, cfg.pathwise_eps);
            if let Some(e) = &failure {
                out.push(VerificationReport::errored(name, e));
                out.push(VerificationReport::errored(rname, e));
                continue;
            }
            let worst = coarse_res[fi][q].iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let mut rep = VerificationReport::new(name, worst, cfg.pathwise_tol);
            rep.n_paths = Some(cfg.pathwise_seeds);
            rep.grid = Some(sim);
            out.push(rep);
            // root-mean-square over seeds: a single seed of an odd f can cross zero
            let sq = |v: &[f64]| pairwise_sum(&v.iter().map(|r| r * r).collect::<Vec<_>>());
            let (c2, f2) = (sq(&coarse_res[fi][q]), sq(&fine_res[fi][q]));
            if c2 <= 1e-26 * coarse_res[fi][q].len() as f64 {
                continue;
            }
            let ratio = (c2 / f2).sqrt();
            let mut rep = VerificationReport::new(rname, (cfg.refinement_ratio - ratio).max(0.0), 0.0);
            rep.n_paths = Some(cfg.pathwise_seeds);
            rep.grid = Some(sim);
            out.push(rep);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            t_max: 0.5,
            n_time: 64,
            n_space: 32,
            x_probes: vec![0.5],
            t_probes: vec![0.25],
            eps_ladder: vec![0.1, 0.01],
            n_paths: 500,
            functions: vec!["cos".into(), "z2".into()],
            modes: 16,
            pathwise_seeds: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn empty_matrix_gives_an_empty_report() {
        let cfg = RunConfig {
            x_probes: vec![],
            ..small()
        };
        assert!(run_suite(&cfg, None).unwrap().is_empty());
    }

    #[test]
    fn small_suite_structure_and_mutation() {
        let reports = run_suite(&small(), None).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.check.as_str()).collect();
        for want in [
            "variance_identity[t=0.25,x=0.5]",
            "expectation_ito[f=z2,t=0.25,x=0.5]",
            "gaussian_semigroup[f=cos,t=0.25,x=0.5]",
            "holder_slope[eps=0,x=0.5]",
            "holder_constant[eps=0.01,x=0.5]",
            "k_eps_ladder[t=0.25,x=0.5]",
            "pathwise_ito[f=cos,eps=0.05,x=0.5]",
            "pathwise_refinement[f=cos,eps=0.05,x=0.5]",
        ] {
            assert!(names.contains(&want), "missing {want} in {names:?}");
        }
        for r in &reports {
            assert_eq!(r.pass, r.residual.abs() <= r.tolerance, "{r:?}");
        }
        let z2 = |rs: &[VerificationReport]| rs.iter().find(|r| r.check.starts_with("expectation_ito[f=z2")).unwrap().clone();
        assert!(z2(&reports).pass);
        let mutated = run_suite(&small(), Some(Mutation::KxHalved)).unwrap();
        assert!(!z2(&mutated).pass);
        assert_eq!("kx-halved".parse::<Mutation>().unwrap(), Mutation::KxHalved);
        assert!("nothing".parse::<Mutation>().is_err());
    }
}
