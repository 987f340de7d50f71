//! Two-sample comparison of elicited utilities: a pooled-variance t test per
//! outcome and Hotelling's T² over the whole vector, with the covariance
//! inverted through a Moore–Penrose pseudoinverse.
//!
//! Rank deficiency is the normal case here (anchor columns are constant, and
//! there are fewer error degrees of freedom than outcomes in small studies),
//! so the F transform uses the numerical rank of the pooled covariance as
//! its dimension.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::outcome::Outcome;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("samples cover different outcomes")]
    MismatchedColumns,
    #[error("each group needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

/// Singular values below `rtol · σ_max` are treated as zero, with
/// `rtol = 1e-10 · max(rows, cols)`.
pub fn default_rtol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

/// Moore–Penrose pseudoinverse via SVD, default tolerance.
pub fn pseudoinverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    pseudoinverse_with_rtol(m, default_rtol(m.nrows(), m.ncols()))
}

pub fn pseudoinverse_with_rtol(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let Some((u, sigma, v)) = thin_svd(m) else {
        return DMatrix::zeros(cols, rows);
    };
    let cutoff = rtol * sigma.iter().copied().fold(0.0, f64::max);
    let mut result = DMatrix::zeros(cols, rows);
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // V[:, i] · (1/s) · U[:, i]ᵀ
            result += (v.column(i) / s) * u.column(i).transpose();
        }
    }
    result
}

/// `M = U diag(σ) Vᵀ` with `k = min(rows, cols)` columns in `U` and `V`.
///
/// The decomposition itself comes from faer: nalgebra's SVD is unreliable
/// on rank-deficient input, which is the usual case for covariance matrices
/// here.
fn thin_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return None;
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().expect("SVD converges on finite input");
    let k = rows.min(cols);
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let u = DMatrix::from_fn(rows, k, |i, j| fu[(i, j)]);
    let v = DMatrix::from_fn(cols, k, |i, j| fv[(i, j)]);
    let sigma = (0..k).map(|i| fs[i]).collect();
    Some((u, sigma, v))
}

/// Count of singular values above the default cutoff.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let Some((_, sigma, _)) = thin_svd(m) else {
        return 0;
    };
    let cutoff = default_rtol(m.nrows(), m.ncols()) * sigma.iter().copied().fold(0.0, f64::max);
    sigma.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Respondents × outcomes matrix of midpoint utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    outcomes: Vec<Outcome>,
    respondents: Vec<String>,
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(outcomes: Vec<Outcome>, respondents: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        if respondents.len() != rows.len() {
            return Err(StatsError::InvalidSample("one label per row required".into()));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != outcomes.len() {
                return Err(StatsError::InvalidSample(format!(
                    "row {r} has {} entries for {} outcomes",
                    row.len(),
                    outcomes.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(StatsError::InvalidSample(format!("row {r} has entry {v} outside [0, 1]")));
            }
        }
        let data = DMatrix::from_fn(rows.len(), outcomes.len(), |i, j| rows[i][j]);
        Ok(Self { outcomes, respondents, data })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn respondents(&self) -> &[String] {
        &self.respondents
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn column_means(&self) -> DVector<f64> {
        DVector::from_iterator(self.data.ncols(), self.data.column_iter().map(|c| c.mean()))
    }

    fn centered(&self) -> DMatrix<f64> {
        let means = self.column_means();
        let mut c = self.data.clone();
        for mut row in c.row_iter_mut() {
            row -= means.transpose();
        }
        c
    }

    /// One row per respondent, one column per outcome.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["respondent".to_string()];
        header.extend(self.outcomes.iter().map(Outcome::to_string));
        w.write_record(&header).expect("in-memory write");
        for (i, label) in self.respondents.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend(self.data.row(i).iter().map(f64::to_string));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn check_pair(a: &SampleMatrix, b: &SampleMatrix) -> Result<(), StatsError> {
    if a.outcomes != b.outcomes {
        return Err(StatsError::MismatchedColumns);
    }
    for m in [a, b] {
        if m.rows() < 2 {
            return Err(StatsError::TooFewRows(m.rows()));
        }
    }
    Ok(())
}

/// Per-outcome pooled two-sample t scores. Positive `t` means group A's
/// mean is higher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateBattery {
    pub outcomes: Vec<Outcome>,
    pub df: f64,
    pub t: Vec<f64>,
    pub p_values: Vec<f64>,
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
}

fn t_distribution(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom")
}

pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    (2.0 * t_distribution(df).sf(t.abs())).clamp(0.0, 1.0)
}

/// `|t|` needed for two-tailed significance at `alpha`.
pub fn critical_t(df: f64, alpha: f64) -> f64 {
    t_distribution(df).inverse_cdf(1.0 - alpha / 2.0)
}

pub fn t_test_per_outcome(a: &SampleMatrix, b: &SampleMatrix) -> Result<UnivariateBattery, StatsError> {
    check_pair(a, b)?;
    let (na, nb) = (a.rows() as f64, b.rows() as f64);
    let df = na + nb - 2.0;
    let (mut t, mut p_values, mut mean_a, mut mean_b) = (vec![], vec![], vec![], vec![]);
    for j in 0..a.outcomes.len() {
        let (ca, cb) = (a.data.column(j), b.data.column(j));
        let (ma, mb) = (ca.mean(), cb.mean());
        let ss_a: f64 = ca.iter().map(|x| (x - ma).powi(2)).sum();
        let ss_b: f64 = cb.iter().map(|x| (x - mb).powi(2)).sum();
        let pooled = (ss_a + ss_b) / df;
        let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
        let diff = ma - mb;
        let scale = ma.abs().max(mb.abs()).max(1.0);
        let tj = if se <= 1e-12 * scale {
            if diff.abs() <= 1e-12 * scale {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            }
        } else {
            diff / se
        };
        t.push(tj);
        p_values.push(two_tailed_p(tj, df));
        mean_a.push(ma);
        mean_b.push(mb);
    }
    Ok(UnivariateBattery { outcomes: a.outcomes.clone(), df, t, p_values, mean_a, mean_b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub t2: f64,
    /// Numerical rank of the pooled covariance, used as the F numerator df.
    pub rank: usize,
    pub f: Option<f64>,
    pub df1: usize,
    pub df2: Option<f64>,
    pub p_value: Option<f64>,
    pub warning: Option<String>,
    pub method: String,
}

/// Pooled within-group covariance `S`.
pub fn pooled_covariance(a: &SampleMatrix, b: &SampleMatrix) -> DMatrix<f64> {
    let (ca, cb) = (a.centered(), b.centered());
    let df = (a.rows() + b.rows()) as f64 - 2.0;
    (ca.transpose() * &ca + cb.transpose() * &cb) / df
}

/// `T² = (n_A n_B / (n_A + n_B)) δᵀ S⁺ δ`, with `p` from
/// `F = (n − d − 1) / (d (n − 2)) · T²` on `(d, n − d − 1)` degrees of
/// freedom, `d = rank(S)`.
pub fn hotelling_t2(a: &SampleMatrix, b: &SampleMatrix) -> Result<HotellingResult, StatsError> {
    check_pair(a, b)?;
    let (na, nb) = (a.rows() as f64, b.rows() as f64);
    let n = na + nb;
    let delta = a.column_means() - b.column_means();
    let s = pooled_covariance(a, b);
    let s_plus = pseudoinverse(&s);
    let quad = (delta.transpose() * &s_plus * &delta)[(0, 0)];
    let t2 = (na * nb / n * quad).max(0.0);
    let d = numerical_rank(&s);
    let method = "pseudoinverse T^2; F on (rank(S), n - rank(S) - 1) df".to_string();
    let df2 = n - d as f64 - 1.0;
    let (f, df2, p_value, warning) = if d == 0 {
        (None, None, None, Some("pooled covariance has rank 0; p undefined".to_string()))
    } else if df2 <= 0.0 {
        (
            None,
            Some(df2),
            None,
            Some(format!(
                "dimension {d} leaves no error degrees of freedom for {n} respondents; p undefined"
            )),
        )
    } else {
        let f = df2 / (d as f64 * (n - 2.0)) * t2;
        let dist = FisherSnedecor::new(d as f64, df2).expect("positive degrees of freedom");
        (Some(f), Some(df2), Some(dist.sf(f).clamp(0.0, 1.0)), None)
    };
    Ok(HotellingResult { t2, rank: d, f, df1: d, df2, p_value, warning, method })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub outcome: Outcome,
    pub t: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub alpha: f64,
    pub df: f64,
    pub critical_t: f64,
    pub mean_t: f64,
    pub rows: Vec<SignificanceRow>,
}

impl SignificanceTable {
    pub fn flagged(&self) -> Vec<Outcome> {
        self.rows.iter().filter(|r| r.significant).map(|r| r.outcome).collect()
    }
}

pub fn summarize(battery: &UnivariateBattery, alpha: f64) -> SignificanceTable {
    let critical = critical_t(battery.df, alpha);
    let rows: Vec<SignificanceRow> = battery
        .outcomes
        .iter()
        .zip(battery.t.iter().zip(&battery.p_values))
        .map(|(&outcome, (&t, &p_value))| SignificanceRow {
            outcome,
            t,
            p_value,
            significant: t.abs() > critical,
        })
        .collect();
    let finite: Vec<f64> = rows.iter().map(|r| r.t).filter(|t| t.is_finite()).collect();
    let mean_t = if finite.is_empty() { 0.0 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    SignificanceTable { alpha, df: battery.df, critical_t: critical, mean_t, rows }
}

impl fmt::Display for SignificanceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "two-tailed pooled t, df = {}, alpha = {}, critical |t| = {:.3}",
            self.df, self.alpha, self.critical_t
        )?;
        writeln!(f, "{:<12} {:>9} {:>9}  sig", "outcome", "t", "p")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>9.3} {:>9.4}  {}",
                r.outcome.to_string(),
                r.t,
                r.p_value,
                if r.significant { "*" } else { "" }
            )?;
        }
        write!(f, "mean t = {:.3}", self.mean_t)
    }
}
