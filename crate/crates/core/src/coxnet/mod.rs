//! Cox partial-likelihood machinery: unpenalized Newton–Raphson fitting with
//! Breslow tie handling, the Grambsch–Therneau proportional-hazards
//! diagnostic, and elastic-net penalized fitting with cross-validated
//! selection of the mixing and tuning parameters.

mod enet;

pub use enet::{
    cv_select, enet_path, CvCell, CvConfig, CvSelection, EnetPath, LambdaRule, DEFAULT_PSI_GRID,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numeric::normal;
use crate::survdata::{CovariateKind, CovariateSpec, TrialDataset};
use crate::{Error, Result};

/// Newton–Raphson stopping rules.
const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;
const RELATIVE_LL_TOL: f64 = 1e-10;
/// |β̂| beyond this on standardized covariates flags monotone likelihood.
const DIVERGENCE_BOUND: f64 = 15.0;

/// A prepared proportional-hazards regression problem: subjects sorted by
/// (stratum, time), with column-major covariates.
#[derive(Debug, Clone)]
pub(crate) struct CoxProblem {
    pub names: Vec<String>,
    /// Column-major covariate values in sorted subject order.
    pub columns: Vec<Vec<f64>>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    /// Half-open subject ranges per stratum, in sorted order.
    pub stratum_ranges: Vec<(usize, usize)>,
}

impl CoxProblem {
    pub fn build(
        times: &[f64],
        events: &[bool],
        columns: &[(String, Vec<f64>)],
        strata: Option<&[usize]>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty input".into()));
        }
        let labels: Vec<usize> = match strata {
            Some(s) => {
                if s.len() != n {
                    return Err(Error::InvalidInput("stratum label per subject required".into()));
                }
                s.to_vec()
            }
            None => vec![0; n],
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            labels[a]
                .cmp(&labels[b])
                .then(times[a].partial_cmp(&times[b]).unwrap())
        });
        let time: Vec<f64> = order.iter().map(|&i| times[i]).collect();
        let event: Vec<bool> = order.iter().map(|&i| events[i]).collect();
        let cols: Vec<Vec<f64>> = columns
            .iter()
            .map(|(_, c)| order.iter().map(|&i| c[i]).collect())
            .collect();
        let names = columns.iter().map(|(n, _)| n.clone()).collect();

        let mut stratum_ranges = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || labels[order[i]] != labels[order[start]] {
                stratum_ranges.push((start, i));
                start = i;
            }
        }
        for &(s, e) in &stratum_ranges {
            if !event[s..e].iter().any(|&x| x) {
                return Err(Error::Degenerate(
                    "a stratum contains no events; cannot fit Cox model".into(),
                ));
            }
        }
        let _ = &order;
        Ok(Self { names, columns: cols, time, event, stratum_ranges })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Log partial likelihood, score vector, and observed information at β.
    pub fn derivatives(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.columns.len();
        let n = self.n();
        let mut eta = vec![0.0; n];
        for (k, col) in self.columns.iter().enumerate() {
            if beta[k] != 0.0 {
                for i in 0..n {
                    eta[i] += beta[k] * col[i];
                }
            }
        }
        let w: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();

        let mut ll = 0.0;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let mut s1 = vec![0.0; p];
        let mut s2 = DMatrix::zeros(p, p);

        for &(lo, hi) in &self.stratum_ranges {
            let mut s0 = 0.0;
            s1.iter_mut().for_each(|v| *v = 0.0);
            s2.fill(0.0);
            let mut i = hi;
            while i > lo {
                // Find the tie block [j, i) sharing this time.
                let t = self.time[i - 1];
                let mut j = i;
                while j > lo && self.time[j - 1] == t {
                    j -= 1;
                }
                // Everyone in the block enters the risk set first.
                for m in j..i {
                    s0 += w[m];
                    for k in 0..p {
                        let xw = self.columns[k][m] * w[m];
                        s1[k] += xw;
                        for l in k..p {
                            s2[(k, l)] += xw * self.columns[l][m];
                        }
                    }
                }
                let d = self.event[j..i].iter().filter(|&&e| e).count() as f64;
                if d > 0.0 {
                    ll -= d * s0.ln();
                    for m in j..i {
                        if self.event[m] {
                            ll += eta[m];
                        }
                    }
                    for k in 0..p {
                        let mk = s1[k] / s0;
                        let mut ev_x = 0.0;
                        for m in j..i {
                            if self.event[m] {
                                ev_x += self.columns[k][m];
                            }
                        }
                        score[k] += ev_x - d * mk;
                        for l in k..p {
                            let ml = s1[l] / s0;
                            let v = d * (s2[(k, l)] / s0 - mk * ml);
                            info[(k, l)] += v;
                            if l != k {
                                info[(l, k)] += v;
                            }
                        }
                    }
                }
                i = j;
            }
        }
        (ll, score, info)
    }

    /// Log partial likelihood only.
    #[cfg(test)]
    pub fn loglik(&self, beta: &[f64]) -> f64 {
        let p = self.columns.len();
        let n = self.n();
        let mut eta = vec![0.0; n];
        for k in 0..p {
            if beta[k] != 0.0 {
                let col = &self.columns[k];
                for i in 0..n {
                    eta[i] += beta[k] * col[i];
                }
            }
        }
        let mut ll = 0.0;
        for &(lo, hi) in &self.stratum_ranges {
            let mut s0 = 0.0;
            let mut i = hi;
            while i > lo {
                let t = self.time[i - 1];
                let mut j = i;
                while j > lo && self.time[j - 1] == t {
                    j -= 1;
                }
                for m in j..i {
                    s0 += eta[m].exp();
                }
                let mut d = 0.0;
                for m in j..i {
                    if self.event[m] {
                        d += 1.0;
                        ll += eta[m];
                    }
                }
                if d > 0.0 {
                    ll -= d * s0.ln();
                }
                i = j;
            }
        }
        ll
    }
}

/// Fitted Cox proportional hazards model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    /// Coefficients on the log hazard ratio scale.
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate.
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    /// Score vector at β = 0.
    pub score_at_zero: Vec<f64>,
    /// Observed information at β = 0.
    pub info_at_zero: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    pub n_events: usize,
    pub stratified: bool,
    #[serde(skip)]
    pub(crate) problem: Option<CoxProblem>,
}

impl CoxFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|k| self.covariance[k][k].sqrt()).collect()
    }

    /// Score-test z at β = 0 for a single-covariate fit (signed).
    pub fn score_z(&self) -> Option<f64> {
        if self.coefficients.len() != 1 {
            return None;
        }
        let i = self.info_at_zero[0][0];
        if i <= 0.0 {
            return None;
        }
        Some(self.score_at_zero[0] / i.sqrt())
    }

    /// Hazard ratio with a two-sided (1−α) confidence interval for one
    /// coefficient.
    pub fn hazard_ratio(&self, k: usize, alpha: f64) -> (f64, f64, f64) {
        let z = normal::quantile(1.0 - alpha / 2.0);
        let b = self.coefficients[k];
        let se = self.covariance[k][k].sqrt();
        ((b).exp(), (b - z * se).exp(), (b + z * se).exp())
    }
}

/// Expand covariates into numeric design columns. Nominal covariates are
/// one-hot encoded against their first declared level; ordinal covariates
/// enter as level indices. Returns (name, values, parent-spec-index) per
/// expanded column.
pub(crate) fn expand_columns<F>(
    specs: &[CovariateSpec],
    wanted: &[String],
    value_of: F,
    n: usize,
) -> Result<Vec<(String, Vec<f64>, usize)>>
where
    F: Fn(usize, usize) -> f64,
{
    let mut out = Vec::new();
    for name in wanted {
        let j = specs
            .iter()
            .position(|s| &s.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{name}`")))?;
        match &specs[j].kind {
            CovariateKind::Nominal { levels } => {
                for (li, level) in levels.iter().enumerate().skip(1) {
                    let col: Vec<f64> = (0..n)
                        .map(|i| if value_of(i, j) == li as f64 { 1.0 } else { 0.0 })
                        .collect();
                    out.push((format!("{name}={level}"), col, j));
                }
            }
            _ => {
                let col: Vec<f64> = (0..n).map(|i| value_of(i, j)).collect();
                out.push((name.clone(), col, j));
            }
        }
    }
    Ok(out)
}

/// Fit a Cox model on named covariates of a dataset, optionally stratified.
pub fn cox_fit(
    data: &TrialDataset,
    covariates: &[String],
    strata: Option<&[usize]>,
) -> Result<CoxFit> {
    let records = data.records();
    let cols = expand_columns(
        data.specs(),
        covariates,
        |i, j| records[i].covariates[j].as_f64(),
        data.n(),
    )?;
    let named: Vec<(String, Vec<f64>)> = cols.into_iter().map(|(n, c, _)| (n, c)).collect();
    let problem = CoxProblem::build(&data.times(), &data.events(), &named, strata)?;
    fit_breslow(problem)
}

/// Fit a Cox model on the treatment indicator (1 = test arm).
pub fn cox_fit_arm(data: &TrialDataset, strata: Option<&[usize]>) -> Result<CoxFit> {
    let named = vec![("arm".to_string(), data.arm_indicator())];
    let problem = CoxProblem::build(&data.times(), &data.events(), &named, strata)?;
    fit_breslow(problem)
}

/// Newton–Raphson maximization of the Breslow partial likelihood.
pub(crate) fn fit_breslow(problem: CoxProblem) -> Result<CoxFit> {
    let p = problem.columns.len();
    let n = problem.n();
    // Standard deviations for the divergence check.
    let sds: Vec<f64> = problem
        .columns
        .iter()
        .map(|c| {
            let m = crate::numeric::mean(c);
            (c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();

    let mut beta = vec![0.0; p];
    let (ll0, score0, info0) = problem.derivatives(&beta);
    if info0.clone().cholesky().is_none() {
        return Err(Error::RankDeficient(
            "observed information at the null model is singular".into(),
        ));
    }

    let mut ll = ll0;
    let mut score = score0.clone();
    let mut info = info0.clone();
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=MAX_ITER {
        iterations = iter;
        let max_score = score.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
        if max_score < SCORE_TOL {
            converged = true;
            break;
        }
        let chol = match info.clone().cholesky() {
            Some(c) => c,
            None => {
                return Err(Error::RankDeficient(
                    "observed information became singular during fitting".into(),
                ))
            }
        };
        let delta = chol.solve(&score);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> =
                beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let (ll_new, score_new, info_new) = problem.derivatives(&cand);
            if ll_new >= ll - 1e-12 {
                let rel_change = (ll_new - ll).abs() / (ll.abs() + 1.0);
                beta = cand;
                ll = ll_new;
                score = score_new;
                info = info_new;
                accepted = true;
                if rel_change < RELATIVE_LL_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            if accepted {
                converged = true;
            }
            break;
        }
    }
    // Final convergence state by the score criterion.
    if score.iter().fold(0.0f64, |a, &s| a.max(s.abs())) < SCORE_TOL {
        converged = true;
    }
    // Monotone likelihood: runaway standardized coefficient.
    if beta.iter().zip(&sds).any(|(b, s)| (b * s).abs() > DIVERGENCE_BOUND) {
        converged = false;
    }

    let covariance = match info.clone().cholesky() {
        Some(c) => {
            let inv = c.inverse();
            (0..p).map(|i| (0..p).map(|j| inv[(i, j)]).collect()).collect()
        }
        None => vec![vec![f64::NAN; p]; p],
    };

    Ok(CoxFit {
        names: problem.names.clone(),
        coefficients: beta,
        covariance,
        log_likelihood: ll,
        null_log_likelihood: ll0,
        score_at_zero: score0.iter().cloned().collect(),
        info_at_zero: (0..p).map(|i| (0..p).map(|j| info0[(i, j)]).collect()).collect(),
        iterations,
        converged,
        n,
        n_events: problem.n_events(),
        stratified: problem.stratum_ranges.len() > 1,
        problem: Some(problem),
    })
}

/// Grambsch–Therneau proportional-hazards test result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtResult {
    /// (name, chi-square, p) per covariate, df = 1.
    pub per_covariate: Vec<(String, f64, f64)>,
    pub global_chi2: f64,
    pub global_df: usize,
    pub global_p: f64,
}

/// Score test for a time-varying coefficient based on scaled Schoenfeld
/// residuals against the Kaplan–Meier time transform g(t) = 1 − Ŝ(t).
pub fn gt_test(fit: &CoxFit) -> Result<GtResult> {
    if !fit.converged {
        return Err(Error::NonConvergence("GT test requires a converged fit".into()));
    }
    let problem = fit
        .problem
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("fit carries no data (deserialized?)".into()))?;
    let p = problem.columns.len();
    let n = problem.n();
    if fit.n_events == 0 {
        return Err(Error::Degenerate("no events".into()));
    }

    // Pooled KM transform over all subjects.
    let km = crate::nonparam::km(&problem.time, &problem.event)?;

    // Schoenfeld residuals per event and transformed times.
    let mut eta = vec![0.0; n];
    for k in 0..p {
        for i in 0..n {
            eta[i] += fit.coefficients[k] * problem.columns[k][i];
        }
    }
    let w: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();

    let mut resid: Vec<Vec<f64>> = Vec::new();
    let mut gtimes: Vec<f64> = Vec::new();
    for &(lo, hi) in &problem.stratum_ranges {
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut i = hi;
        while i > lo {
            let t = problem.time[i - 1];
            let mut j = i;
            while j > lo && problem.time[j - 1] == t {
                j -= 1;
            }
            for m in j..i {
                s0 += w[m];
                for k in 0..p {
                    s1[k] += problem.columns[k][m] * w[m];
                }
            }
            for m in j..i {
                if problem.event[m] {
                    let mut r = vec![0.0; p];
                    for k in 0..p {
                        r[k] = problem.columns[k][m] - s1[k] / s0;
                    }
                    resid.push(r);
                    gtimes.push(1.0 - km.value_at(t));
                }
            }
            i = j;
        }
    }

    let d = resid.len() as f64;
    let gbar = crate::numeric::mean(&gtimes);
    let gc: Vec<f64> = gtimes.iter().map(|g| g - gbar).collect();
    let sum_g2: f64 = gc.iter().map(|g| g * g).sum();
    if sum_g2 <= 0.0 {
        return Err(Error::Degenerate("degenerate time transform".into()));
    }

    // a = Σ g_c,i s_i and the fit covariance V.
    let mut a = DVector::zeros(p);
    for (r, &g) in resid.iter().zip(&gc) {
        for k in 0..p {
            a[k] += g * r[k];
        }
    }
    let v = DMatrix::from_fn(p, p, |i, j| fit.covariance[i][j]);
    let va = &v * &a;

    let global_chi2 = d * a.dot(&va) / sum_g2;
    let global_p = normal::chisq_sf(global_chi2, p as f64);
    let per_covariate = (0..p)
        .map(|k| {
            let chi2 = d * va[k] * va[k] / (v[(k, k)] * sum_g2);
            (fit.names[k].clone(), chi2, normal::chisq_sf(chi2, 1.0))
        })
        .collect();

    Ok(GtResult { per_covariate, global_chi2, global_df: p, global_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::{Arm, CovValue, CovariateSpec, SubjectRecord, TrialDataset};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn dataset_with_cov(rows: &[(f64, bool, Arm, Vec<f64>)], specs: Vec<CovariateSpec>) -> TrialDataset {
        let records: Vec<SubjectRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, e, a, x))| SubjectRecord {
                id: format!("s{i}"),
                time: *t,
                event: *e,
                arm: *a,
                covariates: x.iter().map(|&v| CovValue::Continuous(v)).collect(),
            })
            .collect();
        TrialDataset::new(specs, records, ("A".into(), "B".into())).unwrap()
    }

    /// Weibull PH generator: hazard h(t) = rate * shape * t^{shape-1} * exp(xβ).
    fn gen_weibull_ph(
        n: usize,
        betas: &[f64],
        shape: f64,
        censor_rate: f64,
        seed: u64,
    ) -> TrialDataset {
        let mut rng = crate::numeric::seed::rng(seed, &[crate::numeric::seed::tag("wph")]);
        let p = betas.len();
        let rows: Vec<(f64, bool, Arm, Vec<f64>)> = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..p)
                    .map(|j| if j == 0 { (i % 2) as f64 } else { rng.gen::<f64>() * 2.0 - 1.0 })
                    .collect();
                let lin: f64 = x.iter().zip(betas).map(|(a, b)| a * b).sum();
                let u: f64 = rng.gen();
                let t = (-u.ln() / lin.exp()).powf(1.0 / shape);
                let c = -rng.gen::<f64>().ln() / censor_rate;
                let arm = if x[0] > 0.5 { Arm::Test } else { Arm::Control };
                (t.min(c), t <= c, arm, x)
            })
            .collect();
        let specs: Vec<CovariateSpec> =
            (0..p).map(|j| CovariateSpec::continuous(&format!("x{j}"))).collect();
        dataset_with_cov(&rows, specs)
    }

    #[test]
    fn symmetric_arms_give_zero_coefficient() {
        // Identical (time,event) multisets in both arms.
        let rows: Vec<(f64, bool, Arm, Vec<f64>)> = (0..40)
            .flat_map(|i| {
                let t = 1.0 + i as f64 * 0.25;
                let e = i % 4 != 0;
                vec![(t, e, Arm::Test, vec![]), (t, e, Arm::Control, vec![])]
            })
            .collect();
        let data = dataset_with_cov(&rows, vec![]);
        let fit = cox_fit_arm(&data, None).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn score_test_equals_logrank_on_tie_free_data() {
        let data = gen_weibull_ph(150, &[-0.4], 1.2, 0.25, 42);
        let fit = cox_fit_arm(&data, None).unwrap();
        let z_score = fit.score_z().unwrap();
        let lr = crate::nonparam::weighted_logrank(&data, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(z_score, lr.z, epsilon = 1e-6);
        // Squared score z equals the score chi-square.
        let chi = fit.score_at_zero[0] * fit.score_at_zero[0] / fit.info_at_zero[0][0];
        assert_abs_diff_eq!(z_score * z_score, chi, epsilon = 1e-6);
    }

    #[test]
    fn recovers_true_coefficients_within_3_se() {
        let true_beta = [0.7f64.ln(), 0.0];
        let data = gen_weibull_ph(200, &true_beta, 1.5, 0.2, 7);
        let fit = cox_fit(
            &data,
            &["x0".to_string(), "x1".to_string()],
            None,
        )
        .unwrap();
        assert!(fit.converged);
        let se = fit.standard_errors();
        for k in 0..2 {
            assert!(
                (fit.coefficients[k] - true_beta[k]).abs() < 3.0 * se[k],
                "beta[{k}] = {} (se {})",
                fit.coefficients[k],
                se[k]
            );
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let mut rng = crate::numeric::seed::rng(3, &[]);
        let rows: Vec<(f64, bool, Arm, Vec<f64>)> = (0..50)
            .map(|i| {
                let x = rng.gen::<f64>();
                (
                    rng.gen::<f64>() * 5.0 + 0.01,
                    true,
                    if i % 2 == 0 { Arm::Test } else { Arm::Control },
                    vec![x, 2.0 * x], // collinear
                )
            })
            .collect();
        let specs = vec![CovariateSpec::continuous("a"), CovariateSpec::continuous("b")];
        let data = dataset_with_cov(&rows, specs);
        let err = cox_fit(&data, &["a".to_string(), "b".to_string()], None).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    #[test]
    fn monotone_likelihood_flagged_not_converged() {
        // Perfect separation: all test-arm events before all control times.
        let rows: Vec<(f64, bool, Arm, Vec<f64>)> = (0..20)
            .map(|i| {
                if i < 10 {
                    (1.0 + i as f64 * 0.1, true, Arm::Test, vec![])
                } else {
                    (10.0 + i as f64 * 0.1, true, Arm::Control, vec![])
                }
            })
            .collect();
        let data = dataset_with_cov(&rows, vec![]);
        let fit = cox_fit_arm(&data, None).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn stratified_fit_uses_within_stratum_risk_sets() {
        // Two strata with opposite baseline scales; a stratified fit on the
        // arm must behave like pooling the per-stratum scores.
        let data = gen_weibull_ph(120, &[-0.5], 1.0, 0.2, 9);
        let strata: Vec<usize> = (0..data.n()).map(|i| i % 2).collect();
        let fit = cox_fit_arm(&data, Some(&strata)).unwrap();
        assert!(fit.converged);
        assert!(fit.stratified);
    }

    #[test]
    fn gt_null_pvalues_approximately_uniform() {
        // Exact PH (Weibull, constant HR): GT p across replications should be
        // close to Uniform(0,1); Kolmogorov–Smirnov distance < 0.05 at 2000
        // replications.
        let reps = 2000;
        let mut ps = Vec::with_capacity(reps);
        for r in 0..reps {
            let data = gen_weibull_ph(150, &[-0.3], 1.5, 0.25, 1000 + r as u64);
            let fit = match cox_fit_arm(&data, None) {
                Ok(f) if f.converged => f,
                _ => continue,
            };
            if let Ok(gt) = gt_test(&fit) {
                ps.push(gt.global_p);
            }
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ps.len() as f64;
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let u = (i + 1) as f64 / n;
                let l = i as f64 / n;
                (p - l).abs().max((u - p).abs())
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.05, "KS distance {ks} with {} replications", ps.len());
    }

    #[test]
    fn gt_detects_crossing_hazards() {
        // Two Weibulls with different shapes cross; GT should reject far
        // above the nominal level at n = 600.
        let mut rejections = 0;
        let reps = 60;
        for r in 0..reps {
            let mut rng = crate::numeric::seed::rng(77 + r, &[]);
            let rows: Vec<(f64, bool, Arm, Vec<f64>)> = (0..600)
                .map(|i| {
                    let test_arm = i % 2 == 0;
                    let u: f64 = rng.gen();
                    let t = if test_arm {
                        1.1 * (-u.ln()).powf(1.0 / 0.8)
                    } else {
                        1.0 * (-u.ln()).powf(1.0 / 2.0)
                    };
                    let c = 2.5 * rng.gen::<f64>() + 0.2;
                    (
                        t.min(c),
                        t <= c,
                        if test_arm { Arm::Test } else { Arm::Control },
                        vec![],
                    )
                })
                .collect();
            let data = dataset_with_cov(&rows, vec![]);
            let fit = cox_fit_arm(&data, None).unwrap();
            if fit.converged {
                let gt = gt_test(&fit).unwrap();
                if gt.global_p < 0.05 {
                    rejections += 1;
                }
            }
        }
        assert!(
            rejections as f64 / reps as f64 > 0.5,
            "GT rejected only {rejections}/{reps} under crossing hazards"
        );
    }

    #[test]
    fn gt_single_covariate_global_equals_marginal() {
        let data = gen_weibull_ph(300, &[-0.2], 1.3, 0.3, 55);
        let fit = cox_fit_arm(&data, None).unwrap();
        let gt = gt_test(&fit).unwrap();
        assert_abs_diff_eq!(gt.per_covariate[0].2, gt.global_p, epsilon = 1e-12);
        assert_abs_diff_eq!(gt.per_covariate[0].1, gt.global_chi2, epsilon = 1e-10);
    }
}
