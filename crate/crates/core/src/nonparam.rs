//! Nonparametric estimators and tests: Kaplan–Meier, Nelson–Aalen, pooled
//! logrank scores, the G(ρ,γ) weighted logrank family, MaxCombo, restricted
//! mean survival time comparison, and the stratified logrank test.
//!
//! Conventions used throughout:
//! - Breslow tie handling: tied events are processed together with
//!   hypergeometric moments per distinct event time; censorings at an event
//!   time are processed after the events.
//! - Test statistics are oriented so that a negative z favors the test arm.
//! - One-tailed p-values are Φ(z).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::numeric::{mvn, normal};
use crate::survdata::{BlindedDataset, TrialDataset};
use crate::{Error, Result};

/// Right-continuous step estimate with event-time knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    /// Value at time 0 (1 for survival curves, 0 for cumulative hazards).
    pub initial: f64,
    /// Strictly increasing distinct event times.
    pub knots: Vec<f64>,
    /// Estimate at each knot (right-continuous).
    pub values: Vec<f64>,
    /// Variance estimate at each knot.
    pub variances: Vec<f64>,
    /// Number at risk just before each knot.
    pub at_risk: Vec<usize>,
    /// Number of events at each knot.
    pub events: Vec<usize>,
}

impl StepFunction {
    /// Value at time `t` (right-continuous).
    pub fn value_at(&self, t: f64) -> f64 {
        match self.knots.iter().rposition(|&k| k <= t) {
            Some(i) => self.values[i],
            None => self.initial,
        }
    }

    /// Left limit at time `t`.
    pub fn left_value_at(&self, t: f64) -> f64 {
        match self.knots.iter().rposition(|&k| k < t) {
            Some(i) => self.values[i],
            None => self.initial,
        }
    }

    /// Area under the step function on [0, tau].
    pub fn restricted_area(&self, tau: f64) -> f64 {
        let mut area = 0.0;
        let mut t_prev = 0.0;
        let mut s_prev = self.initial;
        for (i, &t) in self.knots.iter().enumerate() {
            if t > tau {
                break;
            }
            area += s_prev * (t - t_prev);
            t_prev = t;
            s_prev = self.values[i];
        }
        area + s_prev * (tau - t_prev)
    }
}

/// Per-distinct-event-time bookkeeping for two-sample rank tests.
#[derive(Debug, Clone)]
struct EventTally {
    #[allow(dead_code)]
    time: f64,
    n_risk: f64,
    n_events: f64,
    n_risk_test: f64,
    n_events_test: f64,
    /// Pooled Kaplan–Meier left limit Ŝ(t−).
    km_left: f64,
}

/// Build per-event-time tallies; `group` marks membership in the test arm.
fn event_tallies(times: &[f64], events: &[bool], group: &[f64]) -> Vec<EventTally> {
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let mut remaining = n as f64;
    let mut remaining_test: f64 = group.iter().sum();
    let mut km = 1.0;
    let mut tallies = Vec::new();

    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0.0;
        let mut d_test = 0.0;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                d += 1.0;
                d_test += group[order[j]];
            }
            j += 1;
        }
        if d > 0.0 {
            tallies.push(EventTally {
                time: t,
                n_risk: remaining,
                n_events: d,
                n_risk_test: remaining_test,
                n_events_test: d_test,
                km_left: km,
            });
            km *= 1.0 - d / remaining;
        }
        for &k in &order[i..j] {
            remaining -= 1.0;
            remaining_test -= group[k];
        }
        i = j;
    }
    tallies
}

/// Kaplan–Meier product-limit estimate with Greenwood variance.
pub fn km(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    let group = vec![0.0; times.len()];
    let tallies = event_tallies(times, events, &group);
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut out = StepFunction {
        initial: 1.0,
        knots: Vec::with_capacity(tallies.len()),
        values: Vec::with_capacity(tallies.len()),
        variances: Vec::with_capacity(tallies.len()),
        at_risk: Vec::with_capacity(tallies.len()),
        events: Vec::with_capacity(tallies.len()),
    };
    for t in &tallies {
        s *= 1.0 - t.n_events / t.n_risk;
        if t.n_risk > t.n_events {
            greenwood += t.n_events / (t.n_risk * (t.n_risk - t.n_events));
        }
        out.knots.push(t.time);
        out.values.push(s);
        out.variances.push(if s > 0.0 { s * s * greenwood } else { 0.0 });
        out.at_risk.push(t.n_risk as usize);
        out.events.push(t.n_events as usize);
    }
    Ok(out)
}

/// Nelson–Aalen cumulative hazard estimate with variance Σ d/n².
pub fn nelson_aalen(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    let group = vec![0.0; times.len()];
    let tallies = event_tallies(times, events, &group);
    let mut lambda = 0.0;
    let mut var = 0.0;
    let mut out = StepFunction {
        initial: 0.0,
        knots: Vec::new(),
        values: Vec::new(),
        variances: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    for t in &tallies {
        lambda += t.n_events / t.n_risk;
        var += t.n_events / (t.n_risk * t.n_risk);
        out.knots.push(t.time);
        out.values.push(lambda);
        out.variances.push(var);
        out.at_risk.push(t.n_risk as usize);
        out.events.push(t.n_events as usize);
    }
    Ok(out)
}

/// Logrank scores from the pooled Nelson–Aalen estimate, in record order:
/// aᵢ = eventᵢ − Λ̂(tᵢ).
pub fn logrank_scores(blinded: &BlindedDataset) -> Result<Vec<f64>> {
    let times = blinded.times();
    let events = blinded.events();
    scores_from(&times, &events)
}

/// Logrank scores for raw time/event arrays (used per tree node).
pub(crate) fn scores_from(times: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    if !events.iter().any(|&e| e) {
        return Err(Error::Degenerate("no events; logrank scores undefined".into()));
    }
    let na = nelson_aalen(times, events)?;
    Ok(times
        .iter()
        .zip(events)
        .map(|(&t, &e)| (if e { 1.0 } else { 0.0 }) - na.value_at(t))
        .collect())
}

/// Weighted logrank test result for weight (ρ, γ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedLogrankResult {
    pub rho: f64,
    pub gamma: f64,
    /// Weighted observed-minus-expected events in the test arm.
    pub numerator: f64,
    /// Weighted hypergeometric variance sum.
    pub variance: f64,
    /// numerator / sqrt(variance); negative favors the test arm.
    pub z: f64,
    /// Φ(z).
    pub p_one_tailed: f64,
}

fn check_two_arms(data: &TrialDataset) -> Result<()> {
    let ind = data.arm_indicator();
    let n_test: f64 = ind.iter().sum();
    if n_test == 0.0 || n_test == ind.len() as f64 {
        return Err(Error::InvalidInput("both treatment arms must be present".into()));
    }
    Ok(())
}

/// G(ρ,γ) weighted logrank test with weights from the pooled Kaplan–Meier
/// left limit, w(t) = Ŝ(t−)^ρ (1 − Ŝ(t−))^γ. (0, 0) is the plain logrank.
pub fn weighted_logrank(data: &TrialDataset, rho: f64, gamma: f64) -> Result<WeightedLogrankResult> {
    check_two_arms(data)?;
    if !data.events().iter().any(|&e| e) {
        return Err(Error::Degenerate("no events".into()));
    }
    let times = data.times();
    let events = data.events();
    let group = data.arm_indicator();
    let tallies = event_tallies(&times, &events, &group);
    let (num, var) = weighted_sums(&tallies, rho, gamma);
    let z = if var > 0.0 { num / var.sqrt() } else { 0.0 };
    Ok(WeightedLogrankResult {
        rho,
        gamma,
        numerator: num,
        variance: var,
        z,
        p_one_tailed: normal::cdf(z),
    })
}

fn weight(t: &EventTally, rho: f64, gamma: f64) -> f64 {
    let s = t.km_left;
    let a = if rho == 0.0 { 1.0 } else { s.powf(rho) };
    let b = if gamma == 0.0 { 1.0 } else { (1.0 - s).powf(gamma) };
    a * b
}

fn hypergeometric_variance(t: &EventTally) -> f64 {
    if t.n_risk <= 1.0 {
        return 0.0;
    }
    let p = t.n_risk_test / t.n_risk;
    t.n_events * p * (1.0 - p) * (t.n_risk - t.n_events) / (t.n_risk - 1.0)
}

fn weighted_sums(tallies: &[EventTally], rho: f64, gamma: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut var = 0.0;
    for t in tallies {
        let w = weight(t, rho, gamma);
        num += w * (t.n_events_test - t.n_events * t.n_risk_test / t.n_risk);
        var += w * w * hypergeometric_variance(t);
    }
    (num, var)
}

/// The four weight pairs combined by MaxCombo.
pub const MAXCOMBO_WEIGHTS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// MaxCombo combination test over G(0,0), G(1,0), G(1,1), G(0,1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxComboResult {
    /// (Z₁, Z₂, Z₃, Z₄) for (ρ,γ) ∈ {(0,0),(1,0),(1,1),(0,1)}.
    pub z: [f64; 4],
    /// Estimated 4×4 correlation matrix of the z statistics.
    pub correlation: Vec<Vec<f64>>,
    /// min(Z₁..Z₄); negative favors the test arm.
    pub statistic: f64,
    /// One-tailed p-value from the 4-variate normal null law.
    pub p_one_tailed: f64,
    /// Standard error of the quasi–Monte Carlo p-value integration.
    pub p_se: f64,
}

/// MaxCombo test. The p-value integrates the 4-variate standard normal with
/// the estimated correlation by randomized quasi–Monte Carlo (fixed seed,
/// absolute precision near 5e-4).
pub fn maxcombo(data: &TrialDataset, seed: u64) -> Result<MaxComboResult> {
    check_two_arms(data)?;
    if data.events().iter().filter(|&&e| e).count() < 2 {
        return Err(Error::Degenerate("MaxCombo requires at least two events".into()));
    }
    let times = data.times();
    let events = data.events();
    let group = data.arm_indicator();
    let tallies = event_tallies(&times, &events, &group);

    let mut z = [0.0; 4];
    let mut sd = [0.0; 4];
    let mut cov = DMatrix::zeros(4, 4);
    for (a, &(ra, ga)) in MAXCOMBO_WEIGHTS.iter().enumerate() {
        for (b, &(rb, gb)) in MAXCOMBO_WEIGHTS.iter().enumerate() {
            let mut c = 0.0;
            for t in &tallies {
                c += weight(t, ra, ga) * weight(t, rb, gb) * hypergeometric_variance(t);
            }
            cov[(a, b)] = c;
        }
    }
    for (a, &(ra, ga)) in MAXCOMBO_WEIGHTS.iter().enumerate() {
        let (num, var) = weighted_sums(&tallies, ra, ga);
        if var <= 0.0 {
            return Err(Error::Degenerate(format!(
                "weighted logrank ({ra},{ga}) has zero variance"
            )));
        }
        sd[a] = var.sqrt();
        z[a] = num / sd[a];
    }
    let mut corr = DMatrix::identity(4, 4);
    for a in 0..4 {
        for b in 0..4 {
            corr[(a, b)] = cov[(a, b)] / (sd[a] * sd[b]);
        }
    }

    let statistic = z.iter().cloned().fold(f64::INFINITY, f64::min);
    // P(min Zᵢ ≤ m) = 1 − P(all −Zᵢ ≤ −m); −Z has the same correlation.
    let (joint, se) = mvn::cdf(&[-statistic; 4], &corr, seed, 2.0e-4)?;
    let p = (1.0 - joint).clamp(0.0, 1.0);

    let correlation = (0..4).map(|i| (0..4).map(|j| corr[(i, j)]).collect()).collect();
    Ok(MaxComboResult { z, correlation, statistic, p_one_tailed: p, p_se: se })
}

/// Label-permutation reference p-value for MaxCombo (fallback mode).
pub fn maxcombo_permutation(data: &TrialDataset, n_perms: usize, seed: u64) -> Result<f64> {
    use rand::seq::SliceRandom;
    let base = maxcombo(data, seed)?;
    let times = data.times();
    let events = data.events();
    let mut group = data.arm_indicator();
    let mut rng = crate::numeric::seed::rng(seed, &[crate::numeric::seed::tag("maxcombo-perm")]);
    let mut count = 0usize;
    for _ in 0..n_perms {
        group.shuffle(&mut rng);
        let tallies = event_tallies(&times, &events, &group);
        let mut min_z = f64::INFINITY;
        for &(r, g) in MAXCOMBO_WEIGHTS.iter() {
            let (num, var) = weighted_sums(&tallies, r, g);
            if var > 0.0 {
                min_z = min_z.min(num / var.sqrt());
            }
        }
        if min_z <= base.statistic {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (n_perms + 1) as f64)
}

/// Restricted mean survival time comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmstResult {
    pub tau: f64,
    pub rmst_test: f64,
    pub rmst_control: f64,
    pub var_test: f64,
    pub var_control: f64,
    /// ψ̂(τ) = rmst_test − rmst_control.
    pub difference: f64,
    pub variance: f64,
    /// −ψ̂/√V; negative favors the test arm.
    pub z: f64,
    pub p_one_tailed: f64,
}

/// Restricted mean (area under KM on [0, τ]) and its variance for one arm.
fn rmst_one_arm(times: &[f64], events: &[bool], tau: f64) -> Result<(f64, f64)> {
    let sf = km(times, events)?;
    let area = sf.restricted_area(tau);
    // Var = Σ_j A_j² d_j / (n_j (n_j − d_j)), A_j = ∫_{t_j}^τ Ŝ(u) du.
    let k = sf.knots.iter().take_while(|&&t| t <= tau).count();
    let mut var = 0.0;
    let mut tail_area = 0.0;
    for j in (0..k).rev() {
        let seg_end = if j + 1 < k { sf.knots[j + 1].min(tau) } else { tau };
        tail_area += sf.values[j] * (seg_end - sf.knots[j]);
        let n = sf.at_risk[j] as f64;
        let d = sf.events[j] as f64;
        if n > d {
            var += tail_area * tail_area * d / (n * (n - d));
        }
    }
    Ok((area, var))
}

/// Compare restricted mean survival between arms up to horizon τ.
///
/// The default τ is the minimax observed time: the smaller of the two arms'
/// largest observed times.
pub fn rmst_compare(data: &TrialDataset, tau: Option<f64>) -> Result<RmstResult> {
    check_two_arms(data)?;
    let ind = data.arm_indicator();
    let split = |want: f64| -> (Vec<f64>, Vec<bool>) {
        let mut t = Vec::new();
        let mut e = Vec::new();
        for (r, &g) in data.records().iter().zip(&ind) {
            if g == want {
                t.push(r.time);
                e.push(r.event);
            }
        }
        (t, e)
    };
    let (t_test, e_test) = split(1.0);
    let (t_ctl, e_ctl) = split(0.0);
    let max_test = t_test.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_ctl = t_ctl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let feasible = max_test.min(max_ctl);
    let tau = tau.unwrap_or(feasible);
    if tau > feasible || tau <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tau {tau} exceeds feasible range (0, {feasible}]"
        )));
    }
    let (rmst_test, var_test) = rmst_one_arm(&t_test, &e_test, tau)?;
    let (rmst_control, var_control) = rmst_one_arm(&t_ctl, &e_ctl, tau)?;
    let difference = rmst_test - rmst_control;
    let variance = var_test + var_control;
    let z = if variance > 0.0 { -difference / variance.sqrt() } else { 0.0 };
    Ok(RmstResult {
        tau,
        rmst_test,
        rmst_control,
        var_test,
        var_control,
        difference,
        variance,
        z,
        p_one_tailed: normal::cdf(z),
    })
}

/// Stratified logrank test result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratifiedLogrankResult {
    /// Σ(O−E) / sqrt(ΣV); negative favors the test arm.
    pub z: f64,
    pub p_one_tailed: f64,
    pub strata_used: usize,
    pub strata_dropped: usize,
    pub warnings: Vec<String>,
}

/// Stratified logrank: per-stratum O−E and variances are summed, then
/// standardized. Strata missing an arm (or without events) are dropped with
/// a warning.
pub fn stratified_logrank(data: &TrialDataset, stratum: &[usize]) -> Result<StratifiedLogrankResult> {
    if stratum.len() != data.n() {
        return Err(Error::InvalidInput("stratum label per subject required".into()));
    }
    let times = data.times();
    let events = data.events();
    let group = data.arm_indicator();
    let max_label = *stratum.iter().max().unwrap_or(&0);

    let mut num = 0.0;
    let mut var = 0.0;
    let mut used = 0;
    let mut dropped = 0;
    let mut warnings = Vec::new();
    for s in 0..=max_label {
        let idx: Vec<usize> = (0..data.n()).filter(|&i| stratum[i] == s).collect();
        if idx.is_empty() {
            continue;
        }
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        let g: Vec<f64> = idx.iter().map(|&i| group[i]).collect();
        let n_test: f64 = g.iter().sum();
        let any_event = e.iter().any(|&x| x);
        if n_test == 0.0 || n_test == g.len() as f64 || !any_event || g.len() < 2 {
            dropped += 1;
            warnings.push(format!("stratum {s} dropped (single arm, too small, or no events)"));
            continue;
        }
        let tallies = event_tallies(&t, &e, &g);
        let (o_minus_e, v) = weighted_sums(&tallies, 0.0, 0.0);
        num += o_minus_e;
        var += v;
        used += 1;
    }
    if used == 0 || var <= 0.0 {
        return Err(Error::Degenerate("all strata degenerate in stratified logrank".into()));
    }
    let z = num / var.sqrt();
    Ok(StratifiedLogrankResult {
        z,
        p_one_tailed: normal::cdf(z),
        strata_used: used,
        strata_dropped: dropped,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::{Arm, CovariateSpec, SubjectRecord, TrialDataset};
    use approx::assert_abs_diff_eq;

    pub(crate) fn dataset(rows: &[(f64, bool, Arm)]) -> TrialDataset {
        let records: Vec<SubjectRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(time, event, arm))| SubjectRecord {
                id: format!("s{i}"),
                time,
                event,
                arm,
                covariates: vec![],
            })
            .collect();
        TrialDataset::new(Vec::<CovariateSpec>::new(), records, ("A".into(), "B".into())).unwrap()
    }

    #[test]
    fn km_no_censoring() {
        let sf = km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(sf.knots, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(sf.values[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn km_single_censored_subject() {
        let sf = km(&[5.0], &[false]).unwrap();
        assert!(sf.knots.is_empty());
        assert_eq!(sf.value_at(10.0), 1.0);
    }

    #[test]
    fn km_with_censoring_hand_product() {
        // times (1, 2+, 3, 4): S(1)=3/4, S(3)=3/4 * 1/2 = 3/8, S(4)=0.
        let sf = km(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true]).unwrap();
        assert_eq!(sf.knots, vec![1.0, 3.0, 4.0]);
        assert_abs_diff_eq!(sf.values[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[1], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn nelson_aalen_hand_sums() {
        let sf = nelson_aalen(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_abs_diff_eq!(sf.values[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[1], 1.0 / 3.0 + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.values[2], 1.0 / 3.0 + 0.5 + 1.0, epsilon = 1e-15);

        let all_censored = nelson_aalen(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(all_censored.knots.is_empty());
        assert_eq!(all_censored.value_at(5.0), 0.0);

        let single = nelson_aalen(&[3.0], &[true]).unwrap();
        assert_abs_diff_eq!(single.values[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn km_and_na_monotone_and_order_invariant() {
        let times = [3.0, 1.0, 4.0, 1.5, 2.0, 5.0, 2.5];
        let events = [true, false, true, true, false, true, true];
        let sf = km(&times, &events).unwrap();
        for w in sf.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let na = nelson_aalen(&times, &events).unwrap();
        for w in na.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
        // Shuffle subject order; estimates unchanged.
        let perm = [6usize, 0, 3, 2, 5, 1, 4];
        let t2: Vec<f64> = perm.iter().map(|&i| times[i]).collect();
        let e2: Vec<bool> = perm.iter().map(|&i| events[i]).collect();
        assert_eq!(km(&t2, &e2).unwrap(), sf);
        assert_eq!(nelson_aalen(&t2, &e2).unwrap(), na);
    }

    #[test]
    fn logrank_scores_small_cases() {
        use crate::survdata::{blind, BlindedDataset};
        let one = dataset(&[(1.0, true, Arm::Test)]);
        let scores = logrank_scores(&blind(&one)).unwrap();
        assert_abs_diff_eq!(scores[0], 0.0, epsilon = 1e-15);

        let two = dataset(&[(1.0, true, Arm::Test), (2.0, false, Arm::Control)]);
        let scores = logrank_scores(&blind(&two)).unwrap();
        assert_abs_diff_eq!(scores[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(scores[1], -0.5, epsilon = 1e-15);

        // Censored after the last event carry score −Λ̂(t_max).
        let d = dataset(&[
            (1.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (3.0, false, Arm::Test),
            (4.0, false, Arm::Control),
        ]);
        let scores = logrank_scores(&blind(&d)).unwrap();
        let lambda_max = 0.25 + 1.0 / 3.0;
        assert_abs_diff_eq!(scores[2], -lambda_max, epsilon = 1e-15);
        assert_abs_diff_eq!(scores[3], -lambda_max, epsilon = 1e-15);
        let _: &BlindedDataset = &blind(&d);
    }

    #[test]
    fn logrank_scores_sum_to_zero_without_ties() {
        let mut rng = crate::numeric::seed::rng(3, &[]);
        use rand::Rng;
        for _ in 0..20 {
            let n = 30;
            let rows: Vec<(f64, bool, Arm)> = (0..n)
                .map(|_| {
                    (
                        rng.gen::<f64>() * 10.0,
                        rng.gen_bool(0.7),
                        if rng.gen_bool(0.5) { Arm::Test } else { Arm::Control },
                    )
                })
                .collect();
            if !rows.iter().any(|r| r.1) {
                continue;
            }
            let d = dataset(&rows);
            let scores = logrank_scores(&crate::survdata::blind(&d)).unwrap();
            assert_abs_diff_eq!(scores.iter().sum::<f64>(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn weighted_logrank_symmetric_interleaving_is_zero() {
        // Identical (time,event) multisets in both arms, all distinct times
        // interleaved: observed = expected at every event time only when the
        // pattern is exactly balanced; use paired identical times instead.
        let d = dataset(&[
            (1.0, true, Arm::Test),
            (1.0, true, Arm::Control),
            (2.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (3.0, false, Arm::Test),
            (3.0, false, Arm::Control),
        ]);
        let r = weighted_logrank(&d, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.numerator, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.z, 0.0, epsilon = 1e-12);
    }

    /// Exhaustive hypergeometric tabulation oracle for the logrank numerator
    /// and variance, independent of the production code path.
    fn logrank_oracle(rows: &[(f64, bool, Arm)]) -> (f64, f64) {
        let mut times: Vec<f64> = rows.iter().filter(|r| r.1).map(|r| r.0).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut num = 0.0;
        let mut var = 0.0;
        for &t in &times {
            let at_risk: Vec<&(f64, bool, Arm)> = rows.iter().filter(|r| r.0 >= t).collect();
            let n = at_risk.len() as f64;
            let n1 = at_risk.iter().filter(|r| r.2 == Arm::Test).count() as f64;
            let d = rows.iter().filter(|r| r.1 && r.0 == t).count() as f64;
            let d1 = rows.iter().filter(|r| r.1 && r.0 == t && r.2 == Arm::Test).count() as f64;
            num += d1 - d * n1 / n;
            if n > 1.0 {
                var += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
            }
        }
        (num, var)
    }

    #[test]
    fn weighted_logrank_matches_hand_tally() {
        let rows = [
            (1.0, true, Arm::Test),
            (3.0, true, Arm::Test),
            (5.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (4.0, true, Arm::Control),
            (6.0, true, Arm::Control),
        ];
        let d = dataset(&rows);
        let r = weighted_logrank(&d, 0.0, 0.0).unwrap();
        let (num, var) = logrank_oracle(&rows);
        assert_abs_diff_eq!(r.numerator, num, epsilon = 1e-12);
        assert_abs_diff_eq!(r.variance, var, epsilon = 1e-12);
        assert_abs_diff_eq!(r.z, num / var.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn arm_swap_negates_z_exactly() {
        let rows = [
            (1.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (2.5, false, Arm::Test),
            (3.0, true, Arm::Control),
            (4.0, true, Arm::Test),
            (5.0, false, Arm::Control),
            (6.0, true, Arm::Test),
        ];
        let d = dataset(&rows);
        let swapped: Vec<(f64, bool, Arm)> = rows
            .iter()
            .map(|&(t, e, a)| (t, e, if a == Arm::Test { Arm::Control } else { Arm::Test }))
            .collect();
        let ds = dataset(&swapped);
        for &(rho, gamma) in MAXCOMBO_WEIGHTS.iter() {
            let z1 = weighted_logrank(&d, rho, gamma).unwrap().z;
            let z2 = weighted_logrank(&ds, rho, gamma).unwrap().z;
            assert_abs_diff_eq!(z1, -z2, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_arm_rejected() {
        let d = dataset(&[(1.0, true, Arm::Test), (2.0, true, Arm::Test)]);
        assert!(weighted_logrank(&d, 0.0, 0.0).is_err());
    }

    fn simulate_ph_dataset(n: usize, hr: f64, seed: u64) -> TrialDataset {
        use rand::Rng;
        let mut rng = crate::numeric::seed::rng(seed, &[crate::numeric::seed::tag("ph-sim")]);
        let rows: Vec<(f64, bool, Arm)> = (0..n)
            .map(|i| {
                let arm = if i % 2 == 0 { Arm::Test } else { Arm::Control };
                let rate = if arm == Arm::Test { hr } else { 1.0 };
                let t: f64 = -rng.gen::<f64>().ln() / rate;
                let c: f64 = -rng.gen::<f64>().ln() / 0.3;
                (t.min(c), t <= c, arm)
            })
            .collect();
        dataset(&rows)
    }

    #[test]
    fn maxcombo_diagonal_and_psd() {
        let d = simulate_ph_dataset(120, 0.7, 5);
        let r = maxcombo(&d, 11).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(r.correlation[i][i], 1.0, epsilon = 1e-12);
        }
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = r.correlation[i][j];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn maxcombo_perfect_correlation_degeneracy() {
        // Two events only, at distinct early times while everyone is at risk:
        // all four statistics share the same single-event-time structure when
        // gamma weights vanish... instead verify against the analytic normal
        // tail by forcing correlations ≈ 1 with rho=gamma=0-dominated data:
        // many events at distinct times, so the four weights differ; here we
        // check instead the documented identity at the estimator level via a
        // synthetic result: p(min=z, corr→1) → Φ(z).
        let z0 = -1.3;
        let corr = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.999_999 });
        let (joint, _) = mvn::cdf(&[-z0; 4], &corr, 3, 1e-4).unwrap();
        let p = 1.0 - joint;
        assert_abs_diff_eq!(p, normal::cdf(z0), epsilon = 1e-3);
    }

    #[test]
    fn maxcombo_agrees_with_permutation_oracle() {
        let d = simulate_ph_dataset(100, 0.6, 17);
        let analytic = maxcombo(&d, 11).unwrap();
        let n_perms = 2000;
        let p_perm = maxcombo_permutation(&d, n_perms, 23).unwrap();
        let mc_se = (p_perm * (1.0 - p_perm) / n_perms as f64).sqrt();
        assert!(
            (analytic.p_one_tailed - p_perm).abs() <= 3.0 * mc_se.max(1e-3),
            "analytic {} vs permutation {} (se {})",
            analytic.p_one_tailed,
            p_perm,
            mc_se
        );
    }

    #[test]
    fn rmst_flat_curves_and_rectangles() {
        // Both arms S ≡ 1 on [0, τ]: all censored except a late event to make
        // the dataset valid; use events after τ.
        let d = dataset(&[
            (3.0, true, Arm::Test),
            (3.0, true, Arm::Control),
            (2.5, false, Arm::Test),
            (2.5, false, Arm::Control),
        ]);
        let r = rmst_compare(&d, Some(2.0)).unwrap();
        assert_abs_diff_eq!(r.rmst_test, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rmst_control, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.difference, 0.0, epsilon = 1e-12);

        // Single subject with event at t=1: area of unit-height rectangle.
        let (a, _) = rmst_one_arm(&[1.0], &[true], 2.0).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rmst_matches_rectangle_oracle() {
        // 4 subjects per arm with known KM steps.
        let d = dataset(&[
            (1.0, true, Arm::Test),
            (2.0, false, Arm::Test),
            (3.0, true, Arm::Test),
            (6.0, false, Arm::Test),
            (1.5, true, Arm::Control),
            (2.5, true, Arm::Control),
            (4.0, false, Arm::Control),
            (5.0, true, Arm::Control),
        ]);
        let tau = 5.0;
        let r = rmst_compare(&d, Some(tau)).unwrap();
        // Arm A KM: S=3/4 on [1,3), then 3/4*1/2=3/8 on [3,τ].
        let a_area = 1.0 * 1.0 + 0.75 * (3.0 - 1.0) + 0.375 * (5.0 - 3.0);
        // Arm B KM: S=3/4 on [1.5,2.5), 1/2 on [2.5,5), 0 at 5.
        let b_area = 1.5 + 0.75 * 1.0 + 0.5 * 2.5;
        assert_abs_diff_eq!(r.rmst_test, a_area, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rmst_control, b_area, epsilon = 1e-12);
        assert_abs_diff_eq!(r.difference, a_area - b_area, epsilon = 1e-12);
    }

    #[test]
    fn rmst_full_horizon_and_monotonicity() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = [true, true, false, true, true, true];
        let sf = km(&times, &events).unwrap();
        let last = *sf.knots.last().unwrap();
        let full = sf.restricted_area(last);
        let mut prev = 0.0;
        for i in 1..=20 {
            let tau = last * i as f64 / 20.0;
            let a = sf.restricted_area(tau);
            assert!(a >= prev - 1e-12);
            prev = a;
        }
        assert_abs_diff_eq!(full, sf.restricted_area(last), epsilon = 1e-12);
    }

    #[test]
    fn rmst_tau_out_of_range_rejected() {
        let d = dataset(&[(1.0, true, Arm::Test), (2.0, true, Arm::Control)]);
        assert!(rmst_compare(&d, Some(1.5)).is_err());
    }

    #[test]
    fn stratified_logrank_single_stratum_equals_unstratified() {
        let d = simulate_ph_dataset(80, 0.8, 9);
        let labels = vec![0usize; d.n()];
        let strat = stratified_logrank(&d, &labels).unwrap();
        let plain = weighted_logrank(&d, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(strat.z, plain.z, epsilon = 1e-12);
    }

    #[test]
    fn stratified_logrank_two_copies_scale_by_sqrt2() {
        let rows = [
            (1.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (3.0, true, Arm::Test),
            (4.0, true, Arm::Control),
            (5.0, false, Arm::Test),
            (6.0, true, Arm::Control),
        ];
        let single = dataset(&rows);
        let z1 = stratified_logrank(&single, &vec![0; 6]).unwrap().z;

        let mut doubled = rows.to_vec();
        doubled.extend_from_slice(&rows);
        let d2 = dataset(&doubled);
        let labels: Vec<usize> = (0..12).map(|i| if i < 6 { 0 } else { 1 }).collect();
        let z2 = stratified_logrank(&d2, &labels).unwrap().z;
        assert_abs_diff_eq!(z2, z1 * 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn stratified_logrank_drops_degenerate_stratum() {
        let rows = [
            (1.0, true, Arm::Test),
            (2.0, true, Arm::Control),
            (3.0, true, Arm::Test),
            (4.0, true, Arm::Control),
            (9.0, true, Arm::Test), // singleton stratum
        ];
        let d = dataset(&rows);
        let labels = vec![0, 0, 0, 0, 1];
        let r = stratified_logrank(&d, &labels).unwrap();
        assert_eq!(r.strata_used, 1);
        assert_eq!(r.strata_dropped, 1);
        assert!(!r.warnings.is_empty());
    }
}
