//! Censoring imputation, median-split labelling, Kaplan-Meier curves and the two-group log-rank test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub os_months: f64,
    /// `true` when death was observed, `false` when censored at last follow-up.
    pub event: bool,
    pub age: f64,
    pub gender: u8,
    pub immune: [f64; 3],
}

/// A survival observation `(time, event)`.
pub type Observation = (f64, bool);

/// Uncensored times are kept; a censored time becomes the mean of uncensored times at or beyond
/// it, or stays as-is when no death occurs that late.
pub fn impute_censored(observations: &[Observation]) -> Result<Vec<f64>> {
    let deaths: Vec<f64> = observations.iter().filter(|o| o.1).map(|o| o.0).collect();
    if deaths.is_empty() {
        return Err(Error::NoEvents);
    }
    Ok(observations
        .iter()
        .map(|&(t, event)| {
            if event {
                return t;
            }
            let later: Vec<f64> = deaths.iter().copied().filter(|&d| d >= t).collect();
            if later.is_empty() {
                t
            } else {
                later.iter().sum::<f64>() / later.len() as f64
            }
        })
        .collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Label 0 (short-term) when `time <= median`, else 1. Returns the labels and the median.
pub fn median_split(times: &[f64]) -> Result<(Vec<u8>, f64)> {
    let m = median(times).ok_or(Error::EmptySamples)?;
    Ok((times.iter().map(|&t| u8::from(t > m)).collect(), m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub deaths: usize,
    pub survival: f64,
}

/// Product-limit estimate; one step per distinct death time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub steps: Vec<KmStep>,
    pub median_survival: Option<f64>,
    pub n: usize,
    /// Censoring times, for plot tick marks.
    pub censored: Vec<f64>,
}

impl KmCurve {
    /// `S(t)`, right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps.iter().take_while(|s| s.time <= t).last().map_or(1.0, |s| s.survival)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,at_risk,deaths,survival\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{},{}\n", s.time, s.at_risk, s.deaths, s.survival));
        }
        out
    }
}

pub fn km_estimate(group: &[Observation]) -> KmCurve {
    let mut obs = group.to_vec();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut steps = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut deaths = 0;
        let mut leaving = 0;
        while i < obs.len() && obs[i].0 == t {
            deaths += usize::from(obs[i].1);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            steps.push(KmStep { time: t, at_risk, deaths, survival: s });
        }
        at_risk -= leaving;
    }
    let median_survival = steps.iter().find(|st| st.survival <= 0.5).map(|st| st.time);
    let censored = obs.iter().filter(|o| !o.1).map(|o| o.0).collect();
    KmCurve { steps, median_survival, n: group.len(), censored }
}

/// Upper tail of the chi-square distribution with one degree of freedom, `erfc(sqrt(x/2))`.
pub fn chi2_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTestResult {
    pub chi2: f64,
    pub p_value: f64,
    pub observed: [f64; 2],
    pub expected: [f64; 2],
    /// `(O_A/E_A) / (O_B/E_B)`; `None` when either expected count is zero.
    pub hazard_ratio: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub group_medians: (Option<f64>, Option<f64>),
}

/// Two-group log-rank test with a Mantel-Haenszel hazard ratio of A relative to B.
pub fn logrank_test(group_a: &[Observation], group_b: &[Observation]) -> Result<SurvivalTestResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut all: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|&(t, e)| (t, e, true))
        .chain(group_b.iter().map(|&(t, e)| (t, e, false)))
        .collect();
    if !all.iter().any(|o| o.1) {
        return Err(Error::NoEvents);
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut n_a, mut n) = (group_a.len() as f64, all.len() as f64);
    let (mut o_a, mut e_a, mut o_b, mut e_b, mut var) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (mut d, mut d_a, mut leave, mut leave_a) = (0.0, 0.0, 0.0, 0.0);
        while i < all.len() && all[i].0 == t {
            let (_, event, in_a) = all[i];
            if event {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            leave += 1.0;
            if in_a {
                leave_a += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            let frac_a = n_a / n;
            o_a += d_a;
            o_b += d - d_a;
            e_a += d * frac_a;
            e_b += d * (1.0 - frac_a);
            if n > 1.0 {
                var += d * frac_a * (1.0 - frac_a) * (n - d) / (n - 1.0);
            }
        }
        n -= leave;
        n_a -= leave_a;
    }

    let diff = o_a - e_a;
    let chi2 = if var > 0.0 { diff * diff / var } else { 0.0 };
    let p_value = chi2_sf(chi2).max(f64::MIN_POSITIVE);
    let (hazard_ratio, ci95) = if e_a > 0.0 && e_b > 0.0 && o_a > 0.0 && o_b > 0.0 {
        let hr = (o_a / e_a) / (o_b / e_b);
        let half = 1.96 * (1.0 / e_a + 1.0 / e_b).sqrt();
        (Some(hr), Some(((hr.ln() - half).exp(), (hr.ln() + half).exp())))
    } else if e_a > 0.0 && e_b > 0.0 {
        ((Some((o_a / e_a) / (o_b / e_b))).filter(|h| h.is_finite() && *h > 0.0), None)
    } else {
        (None, None)
    };
    Ok(SurvivalTestResult {
        chi2,
        p_value,
        observed: [o_a, o_b],
        expected: [e_a, e_b],
        hazard_ratio,
        ci95,
        group_medians: (km_estimate(group_a).median_survival, km_estimate(group_b).median_survival),
    })
}
