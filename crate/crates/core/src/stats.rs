//! Metric aggregation, the Wilcoxon signed-rank test, and CSV/PGM emission.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;
use std::path::Path;

/// Arithmetic mean and sample standard deviation (divisor n-1; a single
/// value has std 0).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean_std of no values".to_string()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Full enumeration of the 2^n sign assignments (n <= 12).
    Exact,
    /// Normal approximation with continuity correction.
    NormalApprox,
    /// Every paired difference was zero; the test carries no evidence.
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-) over the non-zero differences.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub significant_at_5pct: bool,
    pub method: WilcoxonMethod,
    /// Number of pairs remaining after zero differences are dropped.
    pub n_used: usize,
}

const EXACT_ENUMERATION_LIMIT: usize = 12;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; ties in |difference| receive average ranks. For n <= 12 the
/// null distribution is enumerated exactly, otherwise a continuity-corrected
/// normal approximation is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "wilcoxon_signed_rank",
            format!("{} values", a.len()),
            format!("{} values", b.len()),
        ));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("wilcoxon on empty samples".to_string()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            significant_at_5pct: false,
            method: WilcoxonMethod::NoEvidence,
            n_used: 0,
        });
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "wilcoxon needs >= 5 non-zero differences, got {n}"
        )));
    }

    let ranks = average_ranks(&diffs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let w_minus = total - w_plus;
    let w_min = w_plus.min(w_minus);

    let (p_value, method) = if n <= EXACT_ENUMERATION_LIMIT {
        (exact_two_sided_p(&ranks, w_min, total), WilcoxonMethod::Exact)
    } else {
        (
            normal_two_sided_p(&ranks, w_min, n),
            WilcoxonMethod::NormalApprox,
        )
    };

    Ok(WilcoxonResult {
        statistic: w_min,
        p_value,
        significant_at_5pct: p_value < 0.05,
        method,
        n_used: n,
    })
}

/// Ranks of |diffs| (1-based), with tied values assigned their average rank.
fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; diffs.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[pos]].abs() {
            end += 1;
        }
        // ranks pos+1 ..= end averaged over the tie group
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = avg;
        }
        pos = end;
    }
    ranks
}

/// Enumerates every sign assignment: p = P(T <= w_min) + P(T >= total - w_min).
fn exact_two_sided_p(ranks: &[f64], w_min: f64, total: f64) -> f64 {
    let n = ranks.len();
    let assignments = 1u64 << n;
    let upper = total - w_min;
    let mut count = 0u64;
    for mask in 0..assignments {
        let mut t_plus = 0.0;
        for (j, &rank) in ranks.iter().enumerate() {
            if (mask >> j) & 1 == 1 {
                t_plus += rank;
            }
        }
        // tolerance guards against float drift when ranks are averaged
        if t_plus <= w_min + 1e-9 || t_plus >= upper - 1e-9 {
            count += 1;
        }
    }
    (count as f64 / assignments as f64).min(1.0)
}

/// Continuity-corrected normal approximation with tie correction.
fn normal_two_sided_p(ranks: &[f64], w_min: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    // ties: subtract sum(t^3 - t) / 48 over tie groups
    let mut sorted: Vec<f64> = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        if t > 1.0 {
            var -= (t * t * t - t) / 48.0;
        }
        i = j;
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_min - mean + 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * normal.cdf(z)).clamp(0.0, 1.0)
}

/// Writes a per-epoch series as CSV with a `epoch,value` header. Values are
/// rendered with 9 significant digits.
pub fn emit_curve(series: &[f64], value_name: &str, path: &Path) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptyInput("emit_curve with empty series".to_string()));
    }
    let mut out = String::with_capacity(series.len() * 20);
    out.push_str(&format!("epoch,{value_name}\n"));
    for (epoch, value) in series.iter().enumerate() {
        out.push_str(&format!("{},{:.8e}\n", epoch + 1, value));
    }
    write_text(path, &out)
}

/// Writes paired loss curves as CSV: `epoch,loss_d,loss_g`.
pub fn emit_loss_curves(series: &[(f64, f64)], path: &Path) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptyInput("emit_loss_curves with empty series".to_string()));
    }
    let mut out = String::with_capacity(series.len() * 30);
    out.push_str("epoch,loss_d,loss_g\n");
    for (epoch, (loss_d, loss_g)) in series.iter().enumerate() {
        out.push_str(&format!("{},{:.8e},{:.8e}\n", epoch + 1, loss_d, loss_g));
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes pixels in [0, 1] as a binary PGM (P5, maxval 255). `width *
/// height` must match the pixel count; byte = round(255 * v).
pub fn emit_image(pixels: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape(
            "emit_image",
            format!("{} pixels", pixels.len()),
            format!("{width}x{height}"),
        ));
    }
    if pixels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidArgument("pixel outside [0, 1]".to_string()));
    }
    let mut out = Vec::with_capacity(32 + pixels.len());
    write!(&mut out, "P5\n{width} {height}\n255\n")
        .map_err(|e| Error::io("formatting PGM header".to_string(), e))?;
    out.extend(pixels.iter().map(|&p| (255.0 * p).round() as u8));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
