//! Mutual information assembly, the future-context gain, uncertainty
//! coefficients, correlations and report rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Column, ContextType};
use crate::density::EntropyEstimate;

/// Entropy floor of a feature measured to three decimal places, in nats.
pub const DEFAULT_H_MIN_NATS: f64 = -6.907;

pub const FLAG_NEGATIVE_MI: &str = "negative_mi";
pub const FLAG_UC_CLAMPED: &str = "uc_clamped";
pub const FLAG_UC_UNDEFINED: &str = "uc_undefined";

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, InfoError>;

/// An entropy estimate together with what it was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntropy {
    pub feature: String,
    /// Whether the feature column was z-scored before estimation.
    pub zscored: bool,
    pub estimate: EntropyEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiResult {
    pub feature: String,
    pub context_type: ContextType,
    pub model_name: String,
    pub h_nats: f64,
    pub h_std: f64,
    pub h_cond_nats: f64,
    pub h_cond_std: f64,
    pub mi_nats: f64,
    pub mi_std: f64,
    pub flags: Vec<String>,
}

impl MiResult {
    pub fn is_negative(&self) -> bool {
        self.mi_nats < 0.0
    }
}

/// `MI = H − H_cond`. Spreads are combined as if the two estimates were
/// independent. A negative result is kept and flagged.
pub fn mutual_information(
    h: &LabeledEntropy,
    h_cond: &LabeledEntropy,
    context_type: ContextType,
    model_name: &str,
) -> Result<MiResult> {
    if h.feature != h_cond.feature {
        return Err(InfoError::Consistency(format!(
            "entropies are for different features: `{}` and `{}`",
            h.feature, h_cond.feature
        )));
    }
    if h.zscored != h_cond.zscored {
        return Err(InfoError::Consistency(format!(
            "feature `{}` is z-scored in one estimate and not in the other",
            h.feature
        )));
    }
    let (a, b) = (&h.estimate, &h_cond.estimate);
    let mi = a.value_nats - b.value_nats;
    let mut flags = Vec::new();
    if mi < 0.0 {
        flags.push(FLAG_NEGATIVE_MI.to_string());
    }
    Ok(MiResult {
        feature: h.feature.clone(),
        context_type,
        model_name: model_name.to_string(),
        h_nats: a.value_nats,
        h_std: a.std_nats,
        h_cond_nats: b.value_nats,
        h_cond_std: b.std_nats,
        mi_nats: mi,
        mi_std: a.std_nats.hypot(b.std_nats),
        flags,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FutureGain {
    pub mi_nats: f64,
    pub std_nats: f64,
    pub negative: bool,
}

/// Information the following words add beyond the preceding ones:
/// `MI_bidirectional − MI_past`.
pub fn future_context_mi(bidirectional: &MiResult, past: &MiResult) -> Result<FutureGain> {
    if bidirectional.context_type != ContextType::Bidirectional || past.context_type != ContextType::PastContext {
        return Err(InfoError::Consistency(format!(
            "expected bidirectional and past_context results, got {} and {}",
            bidirectional.context_type.as_str(),
            past.context_type.as_str()
        )));
    }
    if bidirectional.feature != past.feature {
        return Err(InfoError::Consistency(format!(
            "results are for different features: `{}` and `{}`",
            bidirectional.feature, past.feature
        )));
    }
    let gain = bidirectional.mi_nats - past.mi_nats;
    Ok(FutureGain {
        mi_nats: gain,
        std_nats: bidirectional.mi_std.hypot(past.mi_std),
        negative: gain < 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyCoefficient {
    /// Clamped to `[0, 1]`.
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `MI / (H − H_min)`, clamped to `[0, 1]`.
pub fn uncertainty_coefficient(mi: &MiResult, h_min_nats: f64) -> Result<UncertaintyCoefficient> {
    if !(mi.h_nats > h_min_nats) {
        return Err(InfoError::Parameter(format!(
            "entropy {} is not above the floor {h_min_nats}",
            mi.h_nats
        )));
    }
    let raw = mi.mi_nats / (mi.h_nats - h_min_nats);
    let value = raw.clamp(0.0, 1.0);
    Ok(UncertaintyCoefficient {
        value,
        raw,
        clamped: value != raw,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub n: usize,
}

/// Pearson and Spearman correlation; ties get average ranks.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(InfoError::Consistency(format!(
            "columns have {} and {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(InfoError::Parameter(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(InfoError::Parameter("columns contain non-finite values".into()));
    }
    let pearson_r = pearson(x, y).ok_or_else(|| InfoError::Degenerate("a column has zero variance".into()))?;
    let spearman_rho = pearson(&average_ranks(x), &average_ranks(y)).expect("ranks of a non-constant column vary");
    Ok(Correlation {
        pearson_r,
        spearman_rho,
        n: x.len(),
    })
}

/// Correlates two columns over the token ids they share.
pub fn correlate_columns(a: &Column, b: &Column) -> Result<Correlation> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .values
        .iter()
        .filter_map(|(id, &va)| b.get(id).map(|vb| (va, vb)))
        .unzip();
    correlate(&x, &y)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = crate::stats::mean(x);
    let my = crate::stats::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub correlations: Option<PathBuf>,
    pub charts: Vec<PathBuf>,
}

const CONTEXT_COLORS: [(ContextType, &str); 3] = [
    (ContextType::CurrentWord, "#4e79a7"),
    (ContextType::PastContext, "#f28e2b"),
    (ContextType::Bidirectional, "#59a14f"),
];

/// Writes `mi_report.csv`, `correlations.csv` (when there are any) and one
/// `mi_<feature>.svg` chart per feature into `out_dir`. Every file starts
/// with `header` as a comment. Rows are sorted by feature, context and
/// model, so the output depends only on the set of results.
pub fn emit_report(
    results: &[MiResult],
    correlations: &[(String, Correlation)],
    header: &str,
    h_min_nats: f64,
    out_dir: &Path,
) -> Result<ReportFiles> {
    if results.is_empty() {
        return Err(InfoError::Parameter("no results to report".into()));
    }
    let mut sorted: Vec<&MiResult> = results.iter().collect();
    sorted
        .sort_by(|a, b| (&a.feature, a.context_type, &a.model_name).cmp(&(&b.feature, b.context_type, &b.model_name)));

    let mut csv =
        format!("# {header}\nfeature,context,model,h_nats,h_std,h_cond_nats,h_cond_std,mi_nats,mi_std,uc,flags\n");
    for r in &sorted {
        let mut flags = r.flags.clone();
        let uc = match uncertainty_coefficient(r, h_min_nats) {
            Ok(u) => {
                if u.clamped {
                    flags.push(FLAG_UC_CLAMPED.into());
                }
                u.value.to_string()
            }
            Err(_) => {
                flags.push(FLAG_UC_UNDEFINED.into());
                String::new()
            }
        };
        flags.sort();
        flags.dedup();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.feature),
            r.context_type.as_str(),
            csv_field(&r.model_name),
            r.h_nats,
            r.h_std,
            r.h_cond_nats,
            r.h_cond_std,
            r.mi_nats,
            r.mi_std,
            uc,
            flags.join(";")
        );
    }
    let table = out_dir.join("mi_report.csv");
    write_file(&table, &csv)?;

    let correlations_path = if correlations.is_empty() {
        None
    } else {
        let mut sorted_corr: Vec<&(String, Correlation)> = correlations.iter().collect();
        sorted_corr.sort_by(|a, b| a.0.cmp(&b.0));
        let mut text = format!("# {header}\npair,pearson_r,spearman_rho,n\n");
        for (name, c) in sorted_corr {
            let _ = writeln!(text, "{},{},{},{}", csv_field(name), c.pearson_r, c.spearman_rho, c.n);
        }
        let path = out_dir.join("correlations.csv");
        write_file(&path, &text)?;
        Some(path)
    };

    let mut charts = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let feature = &sorted[start].feature;
        let end = start + sorted[start..].iter().take_while(|r| &r.feature == feature).count();
        let path = out_dir.join(format!("mi_{}.svg", file_stem(feature)));
        write_file(&path, &render_chart(feature, &sorted[start..end], header))?;
        charts.push(path);
        start = end;
    }
    Ok(ReportFiles {
        table,
        correlations: correlations_path,
        charts,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| InfoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn file_stem(feature: &str) -> String {
    feature
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart of MI with one group per context type and one bar per
/// model, with ±1 spread whiskers. `rows` are sorted and share a feature.
fn render_chart(feature: &str, rows: &[&MiResult], header: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 70.0;

    let lo = rows.iter().map(|r| r.mi_nats - r.mi_std).fold(0.0f64, f64::min);
    let mut hi = rows.iter().map(|r| r.mi_nats + r.mi_std).fold(0.0f64, f64::max);
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let plot_h = H - TOP - BOTTOM;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;

    let groups: Vec<(ContextType, &str, Vec<&MiResult>)> = CONTEXT_COLORS
        .iter()
        .map(|&(ctx, color)| {
            (
                ctx,
                color,
                rows.iter()
                    .copied()
                    .filter(|r| r.context_type == ctx)
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, _, g)| !g.is_empty())
        .collect();
    let group_w = (W - LEFT - RIGHT) / groups.len() as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 400\" width=\"800\" height=\"400\">"
    );
    let _ = writeln!(s, "<!-- {} -->", xml_escape(header).replace("--", "- -"));
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">MI (nats): {}</text>",
        xml_escape(feature)
    );
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
        y(0.0),
        W - RIGHT,
        y(0.0)
    );
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.2}\" y1=\"{TOP:.2}\" x2=\"{LEFT:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
        H - BOTTOM
    );
    for tick in [lo, 0.0, hi] {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{tick:.3}</text>",
            LEFT - 6.0,
            y(tick) + 4.0
        );
    }
    for (gi, (ctx, color, members)) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * group_w;
        let bar_w = group_w * 0.8 / members.len() as f64;
        for (bi, r) in members.iter().enumerate() {
            let x = gx + group_w * 0.1 + bi as f64 * bar_w;
            let (top, bottom) = (y(r.mi_nats.max(0.0)), y(r.mi_nats.min(0.0)));
            let cx = x + bar_w / 2.0;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" stroke=\"#333333\"/>",
                bar_w * 0.9,
                bottom - top
            );
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
                cx - bar_w * 0.05,
                y(r.mi_nats + r.mi_std),
                cx - bar_w * 0.05,
                y(r.mi_nats - r.mi_std)
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
                cx - bar_w * 0.05,
                H - BOTTOM + 14.0,
                xml_escape(&r.model_name)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            gx + group_w / 2.0,
            H - BOTTOM + 34.0,
            ctx.as_str()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TokenId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn est(v: f64, s: f64) -> EntropyEstimate {
        EntropyEstimate {
            value_nats: v,
            std_nats: s,
            n_eval: 100,
            n_folds: 20,
        }
    }

    fn labeled(feature: &str, v: f64, s: f64) -> LabeledEntropy {
        LabeledEntropy {
            feature: feature.into(),
            zscored: false,
            estimate: est(v, s),
        }
    }

    fn mi(feature: &str, ctx: ContextType, h: f64, hc: f64) -> MiResult {
        mutual_information(&labeled(feature, h, 0.01), &labeled(feature, hc, 0.02), ctx, "m").unwrap()
    }

    #[test]
    fn prominence_bidirectional_arithmetic() {
        let r = mi("prominence", ContextType::Bidirectional, 0.536, -0.165);
        assert_eq!(format!("{:.3}", r.mi_nats), "0.701");
        assert!((r.mi_nats - 0.701).abs() < 1e-12);
        assert!(r.flags.is_empty());
        assert_relative_eq!(r.mi_std, (0.01f64 * 0.01 + 0.02 * 0.02).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn dct_row_arithmetic() {
        let r = mi("f0_dct", ContextType::Bidirectional, 11.619, 2.936);
        assert_eq!(format!("{:.3}", r.mi_nats), "8.683");
    }

    #[test]
    fn equal_estimates_give_zero() {
        let r = mi("energy", ContextType::PastContext, 1.25, 1.25);
        assert_eq!(r.mi_nats, 0.0);
        assert!(!r.is_negative());
    }

    #[test]
    fn negative_mi_is_kept_and_flagged() {
        let r = mi("energy", ContextType::PastContext, 1.0, 1.01);
        assert!(r.mi_nats < 0.0);
        assert_eq!(r.flags, vec![FLAG_NEGATIVE_MI.to_string()]);
    }

    #[test]
    fn mismatched_metadata_is_rejected() {
        let err = mutual_information(
            &labeled("a", 1.0, 0.0),
            &labeled("b", 0.5, 0.0),
            ContextType::CurrentWord,
            "m",
        );
        assert!(matches!(err, Err(InfoError::Consistency(_))));
        let mut z = labeled("a", 0.5, 0.0);
        z.zscored = true;
        assert!(mutual_information(&labeled("a", 1.0, 0.0), &z, ContextType::CurrentWord, "m").is_err());
    }

    #[test]
    fn future_gain() {
        let bi = mi("prominence", ContextType::Bidirectional, 0.536, -0.165);
        let past = mi("prominence", ContextType::PastContext, 0.536, -0.124);
        assert_relative_eq!(past.mi_nats, 0.660, epsilon = 1e-12);
        let g = future_context_mi(&bi, &past).unwrap();
        assert_relative_eq!(g.mi_nats, 0.041, epsilon = 1e-12);
        assert!(!g.negative);
        assert_eq!(future_context_mi(&past, &past).ok(), None);
        let same = future_context_mi(
            &bi,
            &MiResult {
                context_type: ContextType::PastContext,
                ..bi.clone()
            },
        )
        .unwrap();
        assert_eq!(same.mi_nats, 0.0);
        let cur = MiResult {
            context_type: ContextType::CurrentWord,
            ..past.clone()
        };
        assert!(matches!(future_context_mi(&bi, &cur), Err(InfoError::Consistency(_))));
    }

    #[test]
    fn uncertainty_coefficient_values() {
        let r = mi("prominence", ContextType::Bidirectional, 0.536, -0.165);
        let u = uncertainty_coefficient(&r, DEFAULT_H_MIN_NATS).unwrap();
        assert!((u.value - 0.0942).abs() <= 1e-4, "{}", u.value);
        let zero = mi("x", ContextType::Bidirectional, 0.5, 0.5);
        assert_eq!(uncertainty_coefficient(&zero, DEFAULT_H_MIN_NATS).unwrap().value, 0.0);
        let full = MiResult {
            mi_nats: 0.5 - DEFAULT_H_MIN_NATS,
            ..zero.clone()
        };
        assert_eq!(uncertainty_coefficient(&full, DEFAULT_H_MIN_NATS).unwrap().value, 1.0);
        let low = MiResult {
            h_nats: -7.0,
            ..zero.clone()
        };
        assert!(uncertainty_coefficient(&low, DEFAULT_H_MIN_NATS).is_err());
        let neg = mi("x", ContextType::Bidirectional, 0.5, 0.6);
        let u = uncertainty_coefficient(&neg, DEFAULT_H_MIN_NATS).unwrap();
        assert!(u.clamped && u.value == 0.0 && u.raw < 0.0);
    }

    proptest! {
        #[test]
        fn swapping_roles_negates_mi(h in -10.0f64..10.0, hc in -10.0f64..10.0) {
            let a = mi("f", ContextType::PastContext, h, hc);
            let b = mi("f", ContextType::PastContext, hc, h);
            prop_assert_eq!(a.mi_nats, -b.mi_nats);
        }

        #[test]
        fn doubling_mi_doubles_uc(h in -6.0f64..10.0, frac in 0.0f64..0.5) {
            let span = h - DEFAULT_H_MIN_NATS;
            let r = MiResult { mi_nats: frac * span, ..mi("f", ContextType::PastContext, h, 0.0) };
            let r2 = MiResult { mi_nats: 2.0 * r.mi_nats, ..r.clone() };
            let u1 = uncertainty_coefficient(&r, DEFAULT_H_MIN_NATS).unwrap();
            let u2 = uncertainty_coefficient(&r2, DEFAULT_H_MIN_NATS).unwrap();
            prop_assert_eq!(u2.raw, 2.0 * u1.raw);
        }
    }

    #[test]
    fn correlation_examples() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = correlate(&x, &lin).unwrap();
        assert_relative_eq!(c.pearson_r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.spearman_rho, 1.0, epsilon = 1e-12);
        let cube: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
        let c = correlate(&x, &cube).unwrap();
        assert!(c.pearson_r > -1.0 && c.pearson_r < 0.0);
        assert_eq!(c.spearman_rho, -1.0);
        assert!(matches!(correlate(&x, &vec![1.0; 20]), Err(InfoError::Degenerate(_))));
        assert!(correlate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn seeded_bivariate_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let n = Normal::new(0.0, 1.0).unwrap();
        let rho: f64 = 0.3;
        let (x, y): (Vec<f64>, Vec<f64>) = (0..10_000)
            .map(|_| {
                let a = n.sample(&mut rng);
                let b = n.sample(&mut rng);
                (a, rho * a + (1.0 - rho * rho).sqrt() * b)
            })
            .unzip();
        let c = correlate(&x, &y).unwrap();
        assert!((c.pearson_r - 0.3).abs() < 0.03, "{}", c.pearson_r);
        assert_eq!(c.n, 10_000);
    }

    #[test]
    fn ties_use_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn column_correlation_uses_shared_ids() {
        let col = |name: &str, vals: &[(u32, f64)]| Column {
            name: name.into(),
            values: vals.iter().map(|&(i, v)| (TokenId::new("u", i), v)).collect(),
        };
        let a = col("prominence", &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 9.0)]);
        let b = col("surprisal", &[(0, 2.0), (1, 4.0), (2, 6.5)]);
        assert_eq!(correlate_columns(&a, &b).unwrap().n, 3);
    }

    #[test]
    fn report_is_sorted_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            mi("pause_after_s", ContextType::Bidirectional, 0.3, 0.1),
            mi("energy", ContextType::PastContext, 1.0, 0.8),
            mi("energy", ContextType::CurrentWord, 1.0, 0.9),
        ];
        let files = emit_report(&rows, &[], "digest=abc seed=1", DEFAULT_H_MIN_NATS, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files.table).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# digest=abc seed=1");
        assert_eq!(
            lines[1],
            "feature,context,model,h_nats,h_std,h_cond_nats,h_cond_std,mi_nats,mi_std,uc,flags"
        );
        assert!(lines[2].starts_with("energy,current_word,"));
        assert!(lines[3].starts_with("energy,past_context,"));
        assert!(lines[4].starts_with("pause_after_s,bidirectional,"));
        assert_eq!(files.charts.len(), 2);
        let svg = std::fs::read(&files.charts[0]).unwrap();

        let mut reversed = rows.clone();
        reversed.reverse();
        let dir2 = tempfile::tempdir().unwrap();
        let again = emit_report(&reversed, &[], "digest=abc seed=1", DEFAULT_H_MIN_NATS, dir2.path()).unwrap();
        assert_eq!(std::fs::read_to_string(&again.table).unwrap(), text);
        assert_eq!(std::fs::read(&again.charts[0]).unwrap(), svg);
    }

    #[test]
    fn single_result_report() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(
            &[mi("energy", ContextType::CurrentWord, 1.0, 0.9)],
            &[(
                "prominence~surprisal".into(),
                Correlation {
                    pearson_r: 0.1,
                    spearman_rho: 0.2,
                    n: 5,
                },
            )],
            "h",
            DEFAULT_H_MIN_NATS,
            dir.path(),
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(&files.table).unwrap().lines().count(), 3);
        let svg = std::fs::read_to_string(&files.charts[0]).unwrap();
        assert!(svg.contains("viewBox=\"0 0 800 400\""));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(files.correlations.is_some());
        assert!(emit_report(&[], &[], "h", DEFAULT_H_MIN_NATS, dir.path()).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = [mi("energy", ContextType::CurrentWord, 1.0, 0.9)];
        let err = emit_report(&r, &[], "h", DEFAULT_H_MIN_NATS, Path::new("/nonexistent/dir")).unwrap_err();
        assert!(matches!(err, InfoError::Io { .. }));
    }
}
