//! Scale-free spectral summaries of kernels and cross-method comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::numerics::{powerlaw_fit, FitRange, EIGEN_FLOOR_REL};

pub const DEFAULT_TOP_K: usize = 5;

pub const CSV_HEADER: &str = "method,sparsity,width,seed,alpha,eff_rank,gap,energy_top5";

/// Where a kernel came from; carried through to CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportMeta {
    pub method: String,
    pub sparsity: f64,
    pub width: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Power-law decay exponent; NaN when fewer than three positive
    /// eigenvalues fall inside the fit range.
    pub alpha: f64,
    pub effective_rank: f64,
    /// `λ₁/λ₂`, `+inf` for rank-one kernels (see `gap_infinite`).
    pub spectral_gap: f64,
    pub gap_infinite: bool,
    pub energy_topk: f64,
    pub k: usize,
    pub fit_range: FitRange,
    pub meta: ReportMeta,
}

impl SpectralReport {
    pub fn with_meta(mut self, meta: ReportMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.meta.method,
            self.meta.sparsity,
            self.meta.width,
            self.meta.seed,
            self.alpha,
            self.effective_rank,
            self.spectral_gap,
            self.energy_topk
        )
    }

    /// Inverse of [`csv_row`](Self::csv_row); `k` and `fit_range` are not stored in rows.
    pub fn from_csv_row(row: &str, k: usize, fit_range: FitRange) -> Result<Self> {
        let fields: Vec<&str> = row.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Format(format!("expected 8 fields, got {}: '{row}'", fields.len())));
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|e| Error::Format(format!("field {i} '{}': {e}", fields[i])));
        let int = |i: usize| fields[i].parse::<u64>().map_err(|e| Error::Format(format!("field {i} '{}': {e}", fields[i])));
        let spectral_gap = num(6)?;
        Ok(Self {
            alpha: num(4)?,
            effective_rank: num(5)?,
            spectral_gap,
            gap_infinite: spectral_gap.is_infinite(),
            energy_topk: num(7)?,
            k,
            fit_range,
            meta: ReportMeta { method: fields[0].to_string(), sparsity: num(1)?, width: int(2)? as usize, seed: int(3)? },
        })
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Alpha => self.alpha,
            Metric::EffectiveRank => self.effective_rank,
            Metric::Gap => self.spectral_gap,
            Metric::Energy => self.energy_topk,
        }
    }
}

pub fn reports_to_csv(reports: &[SpectralReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Report for a kernel; `fit_range` defaults to `[2, B/2]`.
pub fn spectral_report(kernel: &KernelMatrix, k: usize, fit_range: Option<FitRange>) -> Result<SpectralReport> {
    let spectrum = kernel.checked_spectrum()?;
    report_from_eigenvalues(spectrum.values(), k, fit_range)
}

/// Same as [`spectral_report`] on an already computed descending spectrum.
pub fn report_from_eigenvalues(eigenvalues: &[f64], k: usize, fit_range: Option<FitRange>) -> Result<SpectralReport> {
    let b = eigenvalues.len();
    if k == 0 || b < k + 1 {
        return Err(Error::InsufficientData(format!("top-{k} energy needs at least {} eigenvalues, got {b}", k + 1)));
    }
    let lambda1 = eigenvalues[0];
    if !(lambda1 > 0.0) {
        return Err(Error::Domain(format!("leading eigenvalue {lambda1} is not positive")));
    }
    let floor = EIGEN_FLOOR_REL * lambda1;
    let values: Vec<f64> = eigenvalues.iter().map(|&v| if v < floor { 0.0 } else { v }).collect();
    let total: f64 = values.iter().sum();
    let top: f64 = values[..k].iter().sum();
    let gap_infinite = values[1] == 0.0;
    let range = fit_range.unwrap_or_else(|| FitRange::default_for(b));
    let positive = values.iter().take_while(|&&v| v > 0.0).count();
    let alpha = if range.k_max.min(positive) >= range.k_min + 2 {
        // `+ 0.0` folds a flat spectrum's −0 slope into 0.
        powerlaw_fit(&values, range.k_min, range.k_max.min(positive))? + 0.0
    } else {
        f64::NAN
    };
    Ok(SpectralReport {
        alpha,
        effective_rank: total / lambda1,
        spectral_gap: if gap_infinite { f64::INFINITY } else { lambda1 / values[1] },
        gap_infinite,
        energy_topk: top / total,
        k,
        fit_range: range,
        meta: ReportMeta::default(),
    })
}

/// Top-`k` energy for every `k = 1..=B` from one spectrum.
pub fn energy_profile(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    let n = eigenvalues.len();
    eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            acc += v;
            if i + 1 == n {
                1.0
            } else {
                acc / total
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Alpha,
    EffectiveRank,
    Gap,
    Energy,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Alpha, Metric::EffectiveRank, Metric::Gap, Metric::Energy];
}

/// Methods ordered by one metric (largest first) at one sparsity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub sparsity: f64,
    pub metric: Metric,
    pub order: Vec<(String, f64)>,
}

/// Spearman correlation of a metric against sparsity for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub method: String,
    pub metric: Metric,
    pub spearman: f64,
    /// Seed-averaged metric per sparsity level, ascending in sparsity.
    pub means: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Comparison {
    pub rankings: Vec<Ranking>,
    pub trends: Vec<Trend>,
}

impl Comparison {
    pub fn trend(&self, method: &str, metric: Metric) -> Option<&Trend> {
        self.trends.iter().find(|t| t.method == method && t.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,spearman\n");
        for t in &self.trends {
            let _ = writeln!(out, "{},{:?},{}", t.method, t.metric, t.spearman);
        }
        out
    }
}

/// Averages reports over seeds per (method, sparsity), ranks methods per
/// sparsity level and computes each method's trend against sparsity.
pub fn compare_methods(reports: &[SpectralReport]) -> Comparison {
    // Sparsity keys go through their bit pattern so grouping is exact.
    let mut groups: BTreeMap<(String, u64), Vec<&SpectralReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.meta.method.clone(), r.meta.sparsity.to_bits())).or_default().push(r);
    }
    let mean_of = |rs: &[&SpectralReport], m: Metric| rs.iter().map(|r| r.metric(m)).sum::<f64>() / rs.len() as f64;

    let mut levels: Vec<f64> = groups.keys().map(|(_, s)| f64::from_bits(*s)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut rankings = Vec::new();
    for &p in &levels {
        for metric in Metric::ALL {
            let mut order: Vec<(String, f64)> = groups
                .iter()
                .filter(|((_, s), _)| *s == p.to_bits())
                .map(|((m, _), rs)| (m.clone(), mean_of(rs, metric)))
                .collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            rankings.push(Ranking { sparsity: p, metric, order });
        }
    }

    let mut methods: Vec<String> = groups.keys().map(|(m, _)| m.clone()).collect();
    methods.dedup();
    let mut trends = Vec::new();
    for method in &methods {
        for metric in Metric::ALL {
            let means: Vec<(f64, f64)> = groups
                .iter()
                .filter(|((m, _), _)| m == method)
                .map(|((_, s), rs)| (f64::from_bits(*s), mean_of(rs, metric)))
                .collect();
            let xs: Vec<f64> = means.iter().map(|m| m.0).collect();
            let ys: Vec<f64> = means.iter().map(|m| m.1).collect();
            trends.push(Trend { method: method.clone(), metric, spearman: spearman(&xs, &ys), means });
        }
    }
    Comparison { rankings, trends }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            out[t] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman's ρ as the Pearson correlation of average ranks; NaN when
/// either side has fewer than two distinct values.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(&xs[..n]), ranks(&ys[..n]));
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}
