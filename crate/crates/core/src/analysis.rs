//! Dataset-level statistics emitted as plot-ready tables: realized-density
//! distributions per regime and two-component PCA projections of benchmark
//! features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assets::Regime;
use crate::benchmark::{Subspace, SubspaceFeatures};
use crate::scenegen::Scene;
use crate::{Error, Result};

/// Points at which each density estimate is sampled.
pub const KDE_POINTS: usize = 256;

/// Bandwidth used when Silverman's rule degenerates (fewer than two
/// distinct samples).
pub const FALLBACK_BANDWIDTH: f64 = 0.01;

pub const STANDARDIZATION: &str =
    "per-column z-score over baseline and dataset rows combined; zero-variance columns set to 0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (n * width)`.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeDensity {
    pub regime: Regime,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub bandwidth: f64,
    pub histogram: Vec<HistogramBin>,
    /// `(x, density)` pairs.
    pub kde: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDistribution {
    pub regimes: Vec<RegimeDensity>,
}

fn mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let m = mean(samples);
    let mut ss = 0.0;
    for x in samples {
        ss += (x - m) * (x - m);
    }
    let sd = (ss / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        FALLBACK_BANDWIDTH
    }
}

/// Gaussian KDE sampled at [`KDE_POINTS`] points over
/// `[min - 4h, max + 4h]`.
pub fn gaussian_kde(samples: &[f64], bandwidth: f64) -> Vec<(f64, f64)> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bandwidth;
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    (0..KDE_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (KDE_POINTS - 1) as f64;
            let mut y = 0.0;
            for s in samples {
                let u = (x - s) / bandwidth;
                y += (-0.5 * u * u).exp();
            }
            (x, y * norm)
        })
        .collect()
}

/// Equal-width histogram over `[0, 1]`; values outside are clamped into the
/// end bins.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<HistogramBin> {
    let width = 1.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let b = ((s / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
            density: count as f64 / (samples.len() as f64 * width),
        })
        .collect()
}

/// Per-regime distribution of realized clutterness. Regimes without scenes
/// are omitted with a warning.
pub fn density_distribution(scenes: &[Scene], bins: usize) -> Result<DensityDistribution> {
    if bins == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    let mut regimes = Vec::new();
    for regime in Regime::ALL {
        let samples: Vec<f64> =
            scenes.iter().filter(|s| s.config.regime == regime).map(|s| s.realized_clutterness).collect();
        if samples.is_empty() {
            tracing::warn!(%regime, "no scenes for regime; omitted from density distribution");
            continue;
        }
        let bandwidth = silverman_bandwidth(&samples);
        regimes.push(RegimeDensity {
            regime,
            mean: mean(&samples),
            bandwidth,
            histogram: histogram(&samples, bins),
            kde: gaussian_kde(&samples, bandwidth),
            samples,
        });
    }
    if regimes.is_empty() {
        return Err(Error::domain("no scenes to summarize"));
    }
    Ok(DensityDistribution { regimes })
}

impl DensityDistribution {
    /// Long-format CSV with header `regime,kind,x,value`. Kinds: `sample`
    /// (value 1), `mean` (value = sample count), `histogram` (x = bin
    /// center, value = density), `kde` (value = density), `bandwidth`
    /// (x = bandwidth, value 0).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["regime", "kind", "x", "value"])?;
        for r in &self.regimes {
            let reg = r.regime.as_str();
            let mut row = |kind: &str, x: f64, v: f64| w.write_record([reg, kind, &x.to_string(), &v.to_string()]);
            for &s in &r.samples {
                row("sample", s, 1.0)?;
            }
            row("mean", r.mean, r.samples.len() as f64)?;
            row("bandwidth", r.bandwidth, 0.0)?;
            for b in &r.histogram {
                row("histogram", 0.5 * (b.lo + b.hi), b.density)?;
            }
            for &(x, y) in &r.kde {
                row("kde", x, y)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::domain(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Density curves with dashed per-regime means.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let ymax = self
            .regimes
            .iter()
            .flat_map(|r| r.kde.iter().map(|p| p.1).chain(r.histogram.iter().map(|b| b.density)))
            .fold(1e-12, f64::max);
        let sx = |x: f64| pad + x.clamp(0.0, 1.0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
        let colors = ["#1f77b4", "#d62728"];
        let mut s = String::new();
        let _ =
            writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            sx(0.0),
            sy(0.0),
            sx(1.0),
            sy(0.0)
        );
        for (i, r) in self.regimes.iter().enumerate() {
            let c = colors[i % colors.len()];
            for b in &r.histogram {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.2"/>"#,
                    sx(b.lo),
                    sy(b.density),
                    sx(b.hi) - sx(b.lo),
                    sy(0.0) - sy(b.density)
                );
            }
            let pts: Vec<String> = r.kde.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, pts.join(" "));
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{c}" stroke-dasharray="6 4"/>"#,
                sx(r.mean),
                sy(0.0),
                sy(ymax)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{c}" font-size="14">{} (mean {:.3})</text>"#,
                w - 220.0,
                pad + 18.0 * i as f64,
                r.regime,
                r.mean
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Baseline,
    Dataset,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Baseline => "baseline",
            Source::Dataset => "dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub source: Source,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub subspace: Subspace,
    pub standardization: String,
    /// Two unit-length rows of length feature-dimension.
    pub components: [Vec<f64>; 2],
    pub explained_variance_ratio: [f64; 2],
    pub points: Vec<ProjectedPoint>,
}

/// Fits PCA on the standardized union of both feature sets and projects
/// every row onto the first two components. Each component's sign is fixed
/// so its largest-magnitude entry is positive.
pub fn pca_project(baseline: &SubspaceFeatures, dataset: &SubspaceFeatures) -> Result<PcaProjection> {
    if baseline.subspace != dataset.subspace || baseline.dimension() != dataset.dimension() {
        return Err(Error::domain("baseline and dataset features must share a subspace"));
    }
    let d = baseline.dimension();
    let n = baseline.frames() + dataset.frames();
    if n < 3 {
        return Err(Error::domain(format!("PCA needs at least 3 rows, got {n}")));
    }
    if d < 2 {
        return Err(Error::domain("PCA projection needs at least 2 feature dimensions"));
    }
    let combined = SubspaceFeatures::concat([baseline, dataset])?;
    let mut x = combined.matrix;
    for c in 0..d {
        let mut m = 0.0;
        for r in 0..n {
            m += x[(r, c)];
        }
        m /= n as f64;
        let mut ss = 0.0;
        for r in 0..n {
            ss += (x[(r, c)] - m) * (x[(r, c)] - m);
        }
        let sd = (ss / (n - 1) as f64).sqrt();
        let scale = if sd > 1e-12 * (1.0 + m.abs()) { 1.0 / sd } else { 0.0 };
        for r in 0..n {
            x[(r, c)] = (x[(r, c)] - m) * scale;
        }
    }
    let mut cov: DMatrix<f64> = x.transpose() * &x / (n - 1) as f64;
    cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut total = 0.0;
    for &l in eig.eigenvalues.iter() {
        total += l.max(0.0);
    }
    let component = |k: usize| -> Vec<f64> {
        let v = eig.eigenvectors.column(order[k]);
        let lead = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() + 1e-12 { i } else { best });
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        v.iter().map(|e| e * sign).collect()
    };
    let components = [component(0), component(1)];
    let ratio = |k: usize| {
        if total > 0.0 {
            (eig.eigenvalues[order[k]].max(0.0) / total).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let points = (0..n)
        .map(|r| {
            let proj = |c: &Vec<f64>| {
                let mut s = 0.0;
                for i in 0..d {
                    s += x[(r, i)] * c[i];
                }
                s
            };
            ProjectedPoint {
                source: if r < baseline.frames() { Source::Baseline } else { Source::Dataset },
                pc1: proj(&components[0]),
                pc2: proj(&components[1]),
            }
        })
        .collect();
    Ok(PcaProjection {
        subspace: baseline.subspace,
        standardization: STANDARDIZATION.to_string(),
        components,
        explained_variance_ratio: [ratio(0), ratio(1)],
        points,
    })
}

impl PcaProjection {
    /// CSV with header `source,pc1,pc2`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["source", "pc1", "pc2"])?;
        for p in &self.points {
            w.write_record([p.source.as_str(), &p.pc1.to_string(), &p.pc2.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::domain(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (480.0, 480.0, 30.0);
        let ext = self.points.iter().flat_map(|p| [p.pc1.abs(), p.pc2.abs()]).fold(1e-12, f64::max);
        let sc = |v: f64| (v / ext) * (w / 2.0 - pad);
        let mut s = String::new();
        let _ =
            writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for src in [Source::Baseline, Source::Dataset] {
            let c = if src == Source::Baseline { "#7f7f7f" } else { "#d62728" };
            for p in self.points.iter().filter(|p| p.source == src) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{c}" fill-opacity="0.5"/>"#,
                    w / 2.0 + sc(p.pc1),
                    h / 2.0 - sc(p.pc2)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="10" y="20" font-size="14">{} PC1 {:.1}% PC2 {:.1}%</text>"#,
            self.subspace,
            100.0 * self.explained_variance_ratio[0],
            100.0 * self.explained_variance_ratio[1]
        );
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn feats(rows: Vec<Vec<f64>>) -> SubspaceFeatures {
        let (n, d) = (rows.len(), rows[0].len());
        SubspaceFeatures { subspace: Subspace::Smoothness, matrix: DMatrix::from_row_slice(n, d, &rows.concat()) }
    }

    fn regime_density(samples: Vec<f64>) -> RegimeDensity {
        let bw = silverman_bandwidth(&samples);
        RegimeDensity {
            regime: Regime::Domestic,
            mean: mean(&samples),
            bandwidth: bw,
            histogram: histogram(&samples, 20),
            kde: gaussian_kde(&samples, bw),
            samples,
        }
    }

    fn trapezoid(kde: &[(f64, f64)]) -> f64 {
        kde.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    }

    #[test]
    fn point_mass() {
        let r = regime_density(vec![0.3; 8]);
        assert!((r.mean - 0.3).abs() < 1e-15);
        assert_eq!(r.bandwidth, FALLBACK_BANDWIDTH);
        let peak = r.kde.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let spacing = r.kde[1].0 - r.kde[0].0;
        assert!((peak.0 - 0.3).abs() <= spacing);
        assert_eq!(r.histogram.iter().map(|b| b.count).sum::<usize>(), 8);
    }

    #[test]
    fn two_point_mean() {
        assert!((regime_density(vec![0.2, 0.4]).mean - 0.3).abs() < 1e-15);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 10, 200] {
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
            let r = regime_density(s);
            assert!((trapezoid(&r.kde) - 1.0).abs() < 0.02, "n={n}");
            assert_eq!(r.kde.len(), KDE_POINTS);
        }
    }

    #[test]
    fn silverman_matches_hand_value() {
        // sd of {1,2,3,4,5} = sqrt(2.5); IQR = 2 -> 2/1.34 = 1.4925 < 1.5811.
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((h - 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn planar_data_ratios_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                vec![a, b, a + b, a - 2.0 * b]
            })
            .collect();
        let p = pca_project(&feats(rows[..20].to_vec()), &feats(rows[20..].to_vec())).unwrap();
        let s = p.explained_variance_ratio[0] + p.explained_variance_ratio[1];
        assert!((s - 1.0).abs() < 1e-8, "{s}");
        assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
        let dot: f64 = p.components[0].iter().zip(&p.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-8);
        assert_eq!(p.points.iter().filter(|q| q.source == Source::Baseline).count(), 20);
    }

    #[test]
    fn isotropic_ratios_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> =
            (0..10_000).map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let p = pca_project(&feats(rows[..5000].to_vec()), &feats(rows[5000..].to_vec())).unwrap();
        let [a, b] = p.explained_variance_ratio;
        assert!(b >= 0.8 * a, "{a} {b}");
    }

    #[test]
    fn duplication_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                vec![a, 2.0 * a + rng.random_range(-0.1..0.1), rng.random_range(-1.0..1.0), 4.0]
            })
            .collect();
        let p = pca_project(&feats(rows[..10].to_vec()), &feats(rows[10..].to_vec())).unwrap();
        let dup = |r: &[Vec<f64>]| feats(r.iter().flat_map(|x| [x.clone(), x.clone()]).collect());
        let q = pca_project(&dup(&rows[..10]), &dup(&rows[10..])).unwrap();
        for k in 0..2 {
            assert!((p.explained_variance_ratio[k] - q.explained_variance_ratio[k]).abs() < 1e-9);
            for (a, b) in p.components[k].iter().zip(&q.components[k]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn row_order_only_flips_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..40).map(|_| (0..3).map(|k| rng.random_range(0.0..1.0 + k as f64)).collect()).collect();
        let p = pca_project(&feats(rows[..20].to_vec()), &feats(rows[20..].to_vec())).unwrap();
        let mut base = rows[..20].to_vec();
        base.reverse();
        let q = pca_project(&feats(base), &feats(rows[20..].to_vec())).unwrap();
        for i in 0..20 {
            let (a, b) = (&p.points[i], &q.points[19 - i]);
            assert!((a.pc1.abs() - b.pc1.abs()).abs() < 1e-9 && (a.pc2.abs() - b.pc2.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_rows() {
        let a = feats(vec![vec![1.0, 2.0]]);
        assert!(pca_project(&a, &a).is_err());
    }

    #[test]
    fn csv_and_svg_render() {
        let dist = DensityDistribution { regimes: vec![regime_density(vec![0.25])] };
        let csv = dist.to_csv().unwrap();
        assert!(csv.starts_with("regime,kind,x,value\n"));
        assert_eq!(csv.lines().filter(|l| l.contains(",sample,")).count(), 1);
        assert!(csv.contains("domestic,mean,0.25,1"));
        assert!(dist.to_svg().starts_with("<svg"));
    }
}
