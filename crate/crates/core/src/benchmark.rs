//! Locomotion scoring: subspace features, Gaussian summaries, Fréchet
//! adaptation scores and collision safety metrics.
//!
//! Finite differences use central stencils at spacing `h = 1 / rate`:
//!
//! * velocity `(x[i+1] - x[i-1]) / 2h`
//! * acceleration `(x[i+1] - 2 x[i] + x[i-1]) / h^2`
//! * jerk `(x[i+2] - 2 x[i+1] + 2 x[i-1] - x[i-2]) / 2h^3`
//!
//! Every subspace is evaluated on frames `2 ..= T-3`, the range where the
//! jerk stencil is complete, so all feature matrices share row alignment.
//!
//! Posture positions are taken relative to the pelvis and rotated about +z
//! into the body frame, whose forward axis is perpendicular to the
//! right-to-left hip vector. Posture velocities are central differences of
//! these body-frame positions. Skeletons without `left_hip`/`right_hip`
//! keypoints use world axes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embodiment::{sample_body_surface, sample_capsule_surface, Embodiment};
use crate::geometry::{Aabb, SceneGeometry};
use crate::scenegen::Scene;
use crate::trajectory::Trajectory;
use crate::{Error, Result, Vec3, TOOL_VERSION};

pub const ADAPTATION_SCHEMA: &str = "clutterbench.adaptation/1";
pub const SAFETY_SCHEMA: &str = "clutterbench.safety/1";

/// Default ridge as a fraction of the mean covariance diagonal.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-8;

/// Normalizers below this are treated as degenerate.
pub const MIN_NORMALIZER: f64 = 1e-12;

/// Fewest frames for which every stencil is complete on at least one row.
pub const MIN_FEATURE_FRAMES: usize = 5;

/// Frames trimmed from each end of a trajectory by feature extraction.
pub const STENCIL_MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    Posture,
    Vertical,
    Foot,
    Smoothness,
}

impl Subspace {
    pub const ALL: [Subspace; 4] = [Subspace::Posture, Subspace::Vertical, Subspace::Foot, Subspace::Smoothness];

    pub fn as_str(self) -> &'static str {
        match self {
            Subspace::Posture => "posture",
            Subspace::Vertical => "vertical",
            Subspace::Foot => "foot",
            Subspace::Smoothness => "smoothness",
        }
    }

    pub fn dimension(self, keypoints: usize) -> usize {
        match self {
            Subspace::Posture => 6 * keypoints,
            Subspace::Vertical => 3,
            Subspace::Foot => 4,
            Subspace::Smoothness => keypoints,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Subspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Subspace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subspace::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown subspace {s:?}")))
    }
}

/// Per-frame feature rows of one subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceFeatures {
    pub subspace: Subspace,
    /// Rows are frames, columns are feature dimensions.
    pub matrix: DMatrix<f64>,
}

impl SubspaceFeatures {
    pub fn frames(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.matrix.ncols()
    }

    /// Stacks rows of several feature sets of the same subspace.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a SubspaceFeatures>) -> Result<SubspaceFeatures> {
        let parts: Vec<&SubspaceFeatures> = parts.into_iter().collect();
        let first = parts.first().ok_or_else(|| Error::domain("nothing to concatenate"))?;
        let (subspace, dim) = (first.subspace, first.dimension());
        if parts.iter().any(|p| p.subspace != subspace || p.dimension() != dim) {
            return Err(Error::domain("cannot concatenate features of different subspaces"));
        }
        let rows: usize = parts.iter().map(|p| p.frames()).sum();
        let mut matrix = DMatrix::zeros(rows, dim);
        let mut r = 0;
        for p in parts {
            matrix.rows_mut(r, p.frames()).copy_from(&p.matrix);
            r += p.frames();
        }
        Ok(SubspaceFeatures { subspace, matrix })
    }
}

/// Features of one subspace for a validated trajectory.
pub fn extract_features(traj: &Trajectory, emb: &Embodiment, subspace: Subspace) -> Result<SubspaceFeatures> {
    let t = traj.frames.len();
    if t < MIN_FEATURE_FRAMES {
        return Err(Error::domain(format!("feature extraction needs at least {MIN_FEATURE_FRAMES} frames, got {t}")));
    }
    let k = emb.keypoint_count();
    for (i, f) in traj.frames.iter().enumerate() {
        if f.keypoints.len() != k {
            return Err(Error::domain(format!("frame {i}: expected {k} keypoints")));
        }
        if f.keypoints.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::domain(format!("frame {i}: non-finite keypoint")));
        }
    }
    if !(traj.frame_rate_hz > 0.0) {
        return Err(Error::domain("frame rate must be positive"));
    }
    let h = 1.0 / traj.frame_rate_hz;
    let kp = |i: usize, j: usize| traj.frames[i].keypoints[j];
    let pelvis = emb.pelvis_index;
    let hips = (
        emb.keypoint_names.iter().position(|n| n == "left_hip"),
        emb.keypoint_names.iter().position(|n| n == "right_hip"),
    );
    // Per-frame (cos, sin) of the body yaw.
    let yaw: Vec<(f64, f64)> = traj
        .frames
        .iter()
        .map(|f| match hips {
            (Some(l), Some(r)) => {
                let left = f.keypoints[l] - f.keypoints[r];
                let n = left.x.hypot(left.y);
                if n > 1e-9 {
                    // forward = left rotated by -90 degrees
                    (left.y / n, -left.x / n)
                } else {
                    (1.0, 0.0)
                }
            }
            _ => (1.0, 0.0),
        })
        .collect();
    let rel = |i: usize, j: usize| {
        let d = kp(i, j) - kp(i, pelvis);
        let (c, s) = yaw[i];
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    };
    let rows: Vec<usize> = (STENCIL_MARGIN..t - STENCIL_MARGIN).collect();
    let dim = subspace.dimension(k);
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (r, &i) in rows.iter().enumerate() {
        match subspace {
            Subspace::Posture => {
                for j in 0..k {
                    let p = rel(i, j);
                    let v = (rel(i + 1, j) - rel(i - 1, j)) / (2.0 * h);
                    for c in 0..3 {
                        m[(r, 3 * j + c)] = p[c];
                        m[(r, 3 * k + 3 * j + c)] = v[c];
                    }
                }
            }
            Subspace::Vertical => {
                let z = |i: usize| kp(i, pelvis).z;
                m[(r, 0)] = z(i);
                m[(r, 1)] = (z(i + 1) - z(i - 1)) / (2.0 * h);
                m[(r, 2)] = (z(i + 1) - 2.0 * z(i) + z(i - 1)) / (h * h);
            }
            Subspace::Foot => {
                for (c, foot) in [emb.left_foot_index, emb.right_foot_index].into_iter().enumerate() {
                    let z = |i: usize| kp(i, foot).z;
                    m[(r, c)] = z(i);
                    m[(r, 2 + c)] = (z(i + 1) - z(i - 1)) / (2.0 * h);
                }
            }
            Subspace::Smoothness => {
                for j in 0..k {
                    let jerk =
                        (kp(i + 2, j) - 2.0 * kp(i + 1, j) + 2.0 * kp(i - 1, j) - kp(i - 2, j)) / (2.0 * h * h * h);
                    m[(r, j)] = jerk.norm();
                }
            }
        }
    }
    Ok(SubspaceFeatures { subspace, matrix: m })
}

/// Features of all four subspaces, in [`Subspace::ALL`] order.
pub fn extract_all(traj: &Trajectory, emb: &Embodiment) -> Result<Vec<SubspaceFeatures>> {
    Subspace::ALL.iter().map(|&s| extract_features(traj, emb, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
    /// Ridge added to the covariance diagonal.
    pub ridge: f64,
}

impl GaussianSummary {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }
}

fn mean_and_covariance(features: &SubspaceFeatures) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.frames();
    if n < 2 {
        return Err(Error::domain(format!("Gaussian summary needs at least 2 frames, got {n}")));
    }
    let x = &features.matrix;
    let d = x.ncols();
    let mut mean = DVector::zeros(d);
    for r in 0..n {
        for c in 0..d {
            mean[c] += x[(r, c)];
        }
    }
    mean /= n as f64;
    let mut centered = x.clone();
    for r in 0..n {
        for c in 0..d {
            centered[(r, c)] -= mean[c];
        }
    }
    let mut cov = centered.transpose() * &centered;
    cov /= (n - 1) as f64;
    // Exact symmetry.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Sample mean and unbiased covariance with `ridge` added to the diagonal.
pub fn gaussian_summary(features: &SubspaceFeatures, ridge: f64) -> Result<GaussianSummary> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::domain(format!("ridge must be non-negative, got {ridge}")));
    }
    let (mean, mut covariance) = mean_and_covariance(features)?;
    for i in 0..covariance.nrows() {
        covariance[(i, i)] += ridge;
    }
    Ok(GaussianSummary { mean, covariance, count: features.frames(), ridge })
}

/// [`gaussian_summary`] with the ridge set to `relative` times the mean
/// diagonal of the sample covariance.
pub fn gaussian_summary_relative(features: &SubspaceFeatures, relative: f64) -> Result<GaussianSummary> {
    let (_, cov) = mean_and_covariance(features)?;
    let d = cov.nrows().max(1) as f64;
    gaussian_summary(features, relative * cov.trace() / d)
}

/// Square root of a symmetric positive semi-definite matrix through its
/// eigendecomposition; negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    (&s + s.transpose()) * 0.5
}

/// Squared Fréchet distance between two Gaussians:
/// `|mu_r - mu_t|^2 + tr(S_r) + tr(S_t) - 2 tr((R S_t R)^(1/2))` with
/// `R = S_r^(1/2)`. Matrix roots come from symmetric eigendecompositions
/// with negative eigenvalues clamped to zero; the result is clamped to be
/// non-negative.
pub fn frechet_distance_sq(reference: &GaussianSummary, test: &GaussianSummary) -> Result<f64> {
    let d = reference.dimension();
    if test.dimension() != d || reference.covariance.shape() != (d, d) || test.covariance.shape() != (d, d) {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", reference.dimension(), test.dimension())));
    }
    let diff = &reference.mean - &test.mean;
    let mean_term = diff.dot(&diff);
    // tr((R S_t R)^(1/2)) equals the sum of singular values of R T with
    // T = S_t^(1/2), since R S_t R = (R T)(R T)^T. Singular values keep
    // small eigenvalues accurate where a square root of the eigenvalues of
    // R S_t R would amplify their rounding error.
    let r = psd_sqrt(&reference.covariance);
    let t = psd_sqrt(&test.covariance);
    let mut sv: Vec<f64> = (&r * &t).singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    let mut cross = 0.0;
    for v in sv {
        cross += v;
    }
    let d2 = mean_term + reference.covariance.trace() + test.covariance.trace() - 2.0 * cross;
    Ok(d2.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceScore {
    pub subspace: Subspace,
    pub raw: f64,
    pub normalizer: f64,
    /// `raw / normalizer`, or `raw` when the normalizer is degenerate.
    pub normalized: f64,
    pub unnormalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub schema: String,
    pub tool_version: String,
    pub trajectory_id: String,
    pub embodiment_id: String,
    pub corpus_size: usize,
    pub relative_ridge: f64,
    pub subspaces: Vec<SubspaceScore>,
    /// Uniform mean of the normalized subspace scores.
    pub aggregate: f64,
}

impl AdaptationReport {
    pub fn score(&self, s: Subspace) -> &SubspaceScore {
        self.subspaces.iter().find(|x| x.subspace == s).expect("all subspaces scored")
    }
}

/// Flat-walking reference: pooled per-subspace Gaussians and leave-one-out
/// normalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub embodiment_id: String,
    pub member_ids: Vec<String>,
    pub relative_ridge: f64,
    /// Indexed in [`Subspace::ALL`] order.
    pub summaries: Vec<GaussianSummary>,
    pub normalizers: Vec<f64>,
}

pub const MIN_CORPUS_SIZE: usize = 3;

impl ReferenceModel {
    /// Builds the reference from a corpus. Members are pooled in id order,
    /// so the result does not depend on the order of `corpus`.
    pub fn fit(corpus: &[Trajectory], emb: &Embodiment, relative_ridge: f64) -> Result<ReferenceModel> {
        if corpus.len() < MIN_CORPUS_SIZE {
            return Err(Error::domain(format!(
                "reference corpus needs at least {MIN_CORPUS_SIZE} trajectories, got {}",
                corpus.len()
            )));
        }
        let mut order: Vec<&Trajectory> = corpus.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        let features: Vec<Vec<SubspaceFeatures>> =
            order.par_iter().map(|t| extract_all(t, emb)).collect::<Result<_>>()?;
        let per_subspace: Vec<(GaussianSummary, f64)> = Subspace::ALL
            .par_iter()
            .map(|&s| {
                let i = s.index();
                let pooled = SubspaceFeatures::concat(features.iter().map(|f| &f[i]))?;
                let summary = gaussian_summary_relative(&pooled, relative_ridge)?;
                let loo: Vec<f64> = (0..features.len())
                    .into_par_iter()
                    .map(|held| {
                        let rest = SubspaceFeatures::concat(
                            features.iter().enumerate().filter(|(j, _)| *j != held).map(|(_, f)| &f[i]),
                        )?;
                        let r = gaussian_summary_relative(&rest, relative_ridge)?;
                        let t = gaussian_summary_relative(&features[held][i], relative_ridge)?;
                        frechet_distance_sq(&r, &t)
                    })
                    .collect::<Result<_>>()?;
                let mut sum = 0.0;
                for v in &loo {
                    sum += v;
                }
                Ok((summary, sum / loo.len() as f64))
            })
            .collect::<Result<_>>()?;
        let (summaries, normalizers) = per_subspace.into_iter().unzip();
        Ok(ReferenceModel {
            embodiment_id: emb.id.clone(),
            member_ids: order.iter().map(|t| t.id.clone()).collect(),
            relative_ridge,
            summaries,
            normalizers,
        })
    }

    pub fn summary(&self, s: Subspace) -> &GaussianSummary {
        &self.summaries[s.index()]
    }

    pub fn normalizer(&self, s: Subspace) -> f64 {
        self.normalizers[s.index()]
    }

    /// Scores already summarized test distributions, one per subspace in
    /// [`Subspace::ALL`] order.
    pub fn score_summaries(&self, trajectory_id: &str, tests: &[GaussianSummary]) -> Result<AdaptationReport> {
        if tests.len() != Subspace::ALL.len() {
            return Err(Error::domain("one summary per subspace required"));
        }
        let subspaces = Subspace::ALL
            .par_iter()
            .map(|&s| {
                let raw = frechet_distance_sq(self.summary(s), &tests[s.index()])?;
                let normalizer = self.normalizer(s);
                let unnormalized = !(normalizer >= MIN_NORMALIZER);
                let normalized = if unnormalized { raw } else { raw / normalizer };
                Ok(SubspaceScore { subspace: s, raw, normalizer, normalized, unnormalized })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sum = 0.0;
        for s in &subspaces {
            sum += s.normalized;
        }
        Ok(AdaptationReport {
            schema: ADAPTATION_SCHEMA.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            trajectory_id: trajectory_id.to_string(),
            embodiment_id: self.embodiment_id.clone(),
            corpus_size: self.member_ids.len(),
            relative_ridge: self.relative_ridge,
            aggregate: sum / subspaces.len() as f64,
            subspaces,
        })
    }

    pub fn score(&self, test: &Trajectory, emb: &Embodiment) -> Result<AdaptationReport> {
        if emb.id != self.embodiment_id || test.embodiment_id != emb.id {
            return Err(Error::config(format!(
                "embodiment mismatch: reference {:?}, embodiment {:?}, trajectory {:?}",
                self.embodiment_id, emb.id, test.embodiment_id
            )));
        }
        let tests = extract_all(test, emb)?
            .iter()
            .map(|f| gaussian_summary_relative(f, self.relative_ridge))
            .collect::<Result<Vec<_>>>()?;
        self.score_summaries(&test.id, &tests)
    }
}

/// Scores `test` against a reference fitted on `corpus` with the default
/// ridge.
pub fn adaptation_score(test: &Trajectory, corpus: &[Trajectory], emb: &Embodiment) -> Result<AdaptationReport> {
    ReferenceModel::fit(corpus, emb, DEFAULT_RELATIVE_RIDGE)?.score(test, emb)
}

/// The four collision metrics of a penetration series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyMetrics {
    /// Fraction of frames with positive penetration.
    pub collision_rate: f64,
    /// Largest penetration (m).
    pub max_depth_m: f64,
    /// Mean penetration over colliding frames (m).
    pub conditional_mean_depth_m: f64,
    /// Mean penetration over all frames (m).
    pub penetration_integral_m: f64,
}

impl SafetyMetrics {
    pub fn from_penetrations(d: &[f64]) -> Result<SafetyMetrics> {
        if d.is_empty() {
            return Err(Error::domain("safety metrics need at least one frame"));
        }
        if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain(format!("frame {i}: penetration must be finite and non-negative")));
        }
        let t = d.len() as f64;
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        for &v in d {
            if v > 0.0 {
                count += 1;
            }
            sum += v;
            max = max.max(v);
        }
        let m = SafetyMetrics {
            collision_rate: count as f64 / t,
            max_depth_m: max,
            conditional_mean_depth_m: sum / count.max(1) as f64,
            penetration_integral_m: sum / t,
        };
        m.check_identity()?;
        Ok(m)
    }

    /// `I_pd = R_col * mean_cond` up to rounding, and the ordering
    /// constraints against `d_max`.
    pub fn check_identity(&self) -> Result<()> {
        let product = self.collision_rate * self.conditional_mean_depth_m;
        let scale = self.penetration_integral_m.abs().max(product.abs());
        if (self.penetration_integral_m - product).abs() > 1e-12 * scale {
            return Err(Error::domain(format!(
                "penetration integral {} != collision rate x conditional depth {product}",
                self.penetration_integral_m
            )));
        }
        let slack = 1e-12 * self.max_depth_m;
        if self.conditional_mean_depth_m > self.max_depth_m + slack
            || self.penetration_integral_m > self.max_depth_m + slack
        {
            return Err(Error::domain("mean depth exceeds maximum depth"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub schema: String,
    pub tool_version: String,
    pub scene_id: String,
    pub trajectory_id: String,
    pub embodiment_id: String,
    pub sample_density_per_m: f64,
    pub floor_contact_tolerance_m: f64,
    pub geometry_model: String,
    pub frames: usize,
    pub metrics: SafetyMetrics,
    pub penetration_m: Vec<f64>,
    pub notes: Vec<String>,
}

/// Penetration depth of one posed body: for each capsule, the samples of
/// that capsule are tested only against primitives whose bounds meet the
/// capsule's bounds. Equals `frame_penetration` on the full sample set.
pub fn pose_penetration(
    geom: &SceneGeometry,
    emb: &Embodiment,
    keypoints: &[Vec3],
    density: f64,
    scratch: &mut Vec<Vec3>,
) -> f64 {
    let mut depth: f64 = 0.0;
    for (&(p, c), &r) in emb.skeleton_edges.iter().zip(&emb.capsule_radii_m) {
        let (a, b) = (keypoints[p], keypoints[c]);
        let region = Aabb { min: a.inf(&b), max: a.sup(&b) }.expanded(r);
        if !geom.touches(&region) {
            continue;
        }
        scratch.clear();
        sample_capsule_surface(&a, &b, r, density, scratch);
        depth = depth.max(geom.penetration_within(&region, scratch));
    }
    depth
}

/// Per-frame penetration and the four safety metrics of a trajectory in a
/// scene.
pub fn safety_report(traj: &Trajectory, scene: &Scene, emb: &Embodiment, sample_density: f64) -> Result<SafetyReport> {
    let geom = SceneGeometry::compile(scene);
    safety_report_with(traj, &geom, &scene.id, emb, sample_density)
}

/// [`safety_report`] against precompiled geometry.
pub fn safety_report_with(
    traj: &Trajectory,
    geom: &SceneGeometry,
    scene_id: &str,
    emb: &Embodiment,
    sample_density: f64,
) -> Result<SafetyReport> {
    if traj.frames.is_empty() {
        return Err(Error::domain("empty trajectory"));
    }
    if !(sample_density > 0.0 && sample_density.is_finite()) {
        return Err(Error::domain(format!("sample density must be positive, got {sample_density}")));
    }
    if traj.embodiment_id != emb.id {
        return Err(Error::config(format!(
            "trajectory embodiment {:?} does not match {:?}",
            traj.embodiment_id, emb.id
        )));
    }
    let k = emb.keypoint_count();
    if let Some(i) = traj
        .frames
        .iter()
        .position(|f| f.keypoints.len() != k || f.keypoints.iter().any(|p| !p.iter().all(|v| v.is_finite())))
    {
        return Err(Error::domain(format!("frame {i}: invalid keypoints")));
    }
    let penetration: Vec<f64> = traj
        .frames
        .par_iter()
        .map_init(Vec::new, |scratch, f| pose_penetration(geom, emb, &f.keypoints, sample_density, scratch))
        .collect();
    let metrics = SafetyMetrics::from_penetrations(&penetration)?;
    Ok(SafetyReport {
        schema: SAFETY_SCHEMA.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        scene_id: scene_id.to_string(),
        trajectory_id: traj.id.clone(),
        embodiment_id: emb.id.clone(),
        sample_density_per_m: sample_density,
        floor_contact_tolerance_m: geom.floor_contact_tolerance_m,
        geometry_model: "union of oriented boxes, floor and wall half-spaces".to_string(),
        frames: penetration.len(),
        metrics,
        penetration_m: penetration,
        notes: vec!["postural stability is not evaluated".to_string()],
    })
}

/// Reference implementation of per-frame penetration without the broad
/// phase.
pub fn frame_penetration_full(geom: &SceneGeometry, emb: &Embodiment, keypoints: &[Vec3], density: f64) -> Result<f64> {
    geom.frame_penetration(&sample_body_surface(emb, keypoints, density)?)
}

/// One flat CSV row per evaluated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub scene_id: String,
    pub trajectory_id: String,
    pub embodiment_id: String,
    pub tool_version: String,
    pub posture: f64,
    pub vertical: f64,
    pub foot: f64,
    pub smoothness: f64,
    pub aggregate: f64,
    pub collision_rate: f64,
    pub max_depth_m: f64,
    pub conditional_mean_depth_m: f64,
    pub penetration_integral_m: f64,
    pub sample_density_per_m: f64,
    pub floor_contact_tolerance_m: f64,
    pub relative_ridge: f64,
}

impl EvaluationRow {
    pub const COLUMNS: [&'static str; 16] = [
        "scene_id",
        "trajectory_id",
        "embodiment_id",
        "tool_version",
        "posture",
        "vertical",
        "foot",
        "smoothness",
        "aggregate",
        "collision_rate",
        "max_depth_m",
        "conditional_mean_depth_m",
        "penetration_integral_m",
        "sample_density_per_m",
        "floor_contact_tolerance_m",
        "relative_ridge",
    ];

    pub fn new(adaptation: &AdaptationReport, safety: &SafetyReport) -> Self {
        let s = |x| adaptation.score(x).normalized;
        EvaluationRow {
            scene_id: safety.scene_id.clone(),
            trajectory_id: safety.trajectory_id.clone(),
            embodiment_id: safety.embodiment_id.clone(),
            tool_version: TOOL_VERSION.to_string(),
            posture: s(Subspace::Posture),
            vertical: s(Subspace::Vertical),
            foot: s(Subspace::Foot),
            smoothness: s(Subspace::Smoothness),
            aggregate: adaptation.aggregate,
            collision_rate: safety.metrics.collision_rate,
            max_depth_m: safety.metrics.max_depth_m,
            conditional_mean_depth_m: safety.metrics.conditional_mean_depth_m,
            penetration_integral_m: safety.metrics.penetration_integral_m,
            sample_density_per_m: safety.sample_density_per_m,
            floor_contact_tolerance_m: safety.floor_contact_tolerance_m,
            relative_ridge: adaptation.relative_ridge,
        }
    }
}

/// Writes the header even when `rows` is empty.
pub fn write_rows_csv<W: std::io::Write>(rows: &[EvaluationRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(EvaluationRow::COLUMNS)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;
    use crate::trajectory::{synthesize_walk, Frame, GaitProfile, WalkParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb() -> Embodiment {
        Embodiment::default_humanoid()
    }

    fn traj_from(frames: Vec<Vec<Vec3>>, rate: f64) -> Trajectory {
        Trajectory {
            id: "t".into(),
            embodiment_id: emb().id,
            frame_rate_hz: rate,
            applied_scale: 1.0,
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, keypoints)| Frame { time_s: i as f64 / rate, keypoints })
                .collect(),
        }
    }

    fn features(rows: &[&[f64]]) -> SubspaceFeatures {
        SubspaceFeatures {
            subspace: Subspace::Vertical,
            matrix: DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat()),
        }
    }

    fn summary(mean: &[f64], cov: DMatrix<f64>) -> GaussianSummary {
        GaussianSummary { mean: DVector::from_column_slice(mean), covariance: cov, count: 0, ridge: 0.0 }
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose() / d as f64;
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn stationary_pose_has_zero_derivatives() {
        let e = emb();
        let pose: Vec<Vec3> = e.rest_pose().iter().map(|p| p + Vec3::new(1.0, 2.0, 0.8)).collect();
        let t = traj_from(vec![pose; 12], 30.0);
        let post = extract_features(&t, &e, Subspace::Posture).unwrap();
        assert_eq!(post.frames(), 8);
        assert!(post.matrix.columns(72, 72).iter().all(|v| *v == 0.0));
        let vert = extract_features(&t, &e, Subspace::Vertical).unwrap();
        assert!(vert.matrix.column(1).iter().chain(vert.matrix.column(2).iter()).all(|v| *v == 0.0));
        let jerk = extract_features(&t, &e, Subspace::Smoothness).unwrap();
        assert!(jerk.matrix.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rising_pelvis_velocity() {
        let e = emb();
        let rate = 30.0;
        let frames = (0..20)
            .map(|i| {
                let z = 0.8 + 0.1 * i as f64 / rate;
                e.rest_pose().iter().map(|p| p + Vec3::new(0.0, 0.0, z)).collect()
            })
            .collect();
        let v = extract_features(&traj_from(frames, rate), &e, Subspace::Vertical).unwrap();
        for r in 0..v.frames() {
            assert!((v.matrix[(r, 1)] - 0.1).abs() < 1e-6);
            assert!(v.matrix[(r, 2)].abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_frames() {
        let e = emb();
        let t = traj_from(vec![e.rest_pose(); 4], 30.0);
        assert!(matches!(extract_features(&t, &e, Subspace::Foot), Err(Error::Domain(_))));
    }

    #[test]
    fn dimensions() {
        let e = emb();
        let t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 1.0, 0)).unwrap();
        for (s, d) in Subspace::ALL.iter().zip([144, 3, 4, 24]) {
            assert_eq!(extract_features(&t, &e, *s).unwrap().dimension(), d);
        }
    }

    #[test]
    fn pelvis_jerk_matches_symbolic_third_difference() {
        // Pelvis height f * (H + b cos(2 (2 pi f_c t + phi))) has central third
        // difference b f sin(W t + c) (2 sin(W h) - sin(2 W h)) / h^3 in z;
        // x is linear and y constant, so they contribute nothing.
        let e = emb();
        let mut params = WalkParams::new(GaitProfile::Flat, 6.0, 11);
        params.perturbation = 0.0;
        let t = synthesize_walk(&e, &params).unwrap();
        let shape = crate::trajectory::gait_shape(&e, &params).unwrap();
        let f = extract_features(&t, &e, Subspace::Smoothness).unwrap();
        let h = 1.0 / params.frame_rate_hz;
        let w = 2.0 * std::f64::consts::TAU * shape.cycle_hz;
        let c = 2.0 * shape.phase_rad;
        for row in [0, 17, 40, 91, f.frames() - 1] {
            let time = (row + STENCIL_MARGIN) as f64 * h;
            let expected = (shape.bob_amplitude_m * (w * time + c).sin() * (2.0 * (w * h).sin() - (2.0 * w * h).sin())
                / h.powi(3))
            .abs();
            let got = f.matrix[(row, e.pelvis_index)];
            assert!((got - expected).abs() < 1e-6 * (1.0 + expected), "row {row}: {got} vs {expected}");
        }
    }

    #[test]
    fn posture_ignores_walking_direction() {
        let e = emb();
        let mut a = WalkParams::new(GaitProfile::Flat, 2.0, 4);
        a.perturbation = 0.0;
        let mut b = a.clone();
        b.heading_rad = 2.1;
        b.start = [4.0, 1.0];
        let fa = extract_features(&synthesize_walk(&e, &a).unwrap(), &e, Subspace::Posture).unwrap();
        let fb = extract_features(&synthesize_walk(&e, &b).unwrap(), &e, Subspace::Posture).unwrap();
        assert!((fa.matrix - fb.matrix).amax() < 1e-9);
    }

    #[test]
    fn features_commute_with_horizontal_translation() {
        let e = emb();
        let t = synthesize_walk(&e, &WalkParams::new(GaitProfile::SideStep, 1.0, 2)).unwrap();
        let moved = t.translated(Vec3::new(3.5, -1.25, 0.0));
        for s in Subspace::ALL {
            let a = extract_features(&t, &e, s).unwrap();
            let b = extract_features(&moved, &e, s).unwrap();
            assert!((a.matrix - b.matrix).amax() < 1e-9, "{s}");
        }
    }

    #[test]
    fn summary_examples() {
        let s = gaussian_summary(&features(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]), 1e-6).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.covariance, DMatrix::identity(3, 3) * 1e-6);

        let s = gaussian_summary(&features(&[&[0.0], &[2.0]]), 0.5).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.covariance[(0, 0)], 2.5);

        let s = gaussian_summary(&features(&[&[0.0, 7.0], &[1.0, 7.0], &[5.0, 7.0]]), 0.25).unwrap();
        assert_eq!(s.covariance[(1, 1)], 0.25);
        assert!(gaussian_summary(&features(&[&[1.0]]), 0.1).is_err());
    }

    #[test]
    fn frechet_examples() {
        let a = summary(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let b = summary(&[3.0], DMatrix::from_element(1, 1, 4.0));
        assert!((frechet_distance_sq(&a, &b).unwrap() - 10.0).abs() < 1e-12);
        assert!(frechet_distance_sq(&a, &a).unwrap().abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = random_psd(&mut rng, 6);
        let x = summary(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], cov.clone());
        let y = summary(&[1.0, 1.0, 2.0, 0.0, 4.0, 5.5], cov);
        assert!((frechet_distance_sq(&x, &y).unwrap() - (1.0 + 9.0 + 0.25)).abs() < 1e-8);
        assert!(frechet_distance_sq(&a, &x).is_err());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [1, 3, 24, 144] {
            let m = random_psd(&mut rng, d);
            let s = psd_sqrt(&m);
            assert!((&s * &s - &m).norm() <= 1e-8 * (1.0 + m.norm()));
        }
    }

    fn corpus(n: usize, seed: u64) -> Vec<Trajectory> {
        let e = emb();
        (0..n as u64)
            .map(|i| {
                let mut t = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 6.0, seed + i)).unwrap();
                t.id = format!("flat-{}", seed + i);
                t
            })
            .collect()
    }

    #[test]
    fn held_out_flat_walks_score_near_one() {
        let e = emb();
        let c = corpus(8, 100);
        let model = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        let reports: Vec<AdaptationReport> = (0..6)
            .map(|i| {
                let held = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 6.0, 900 + i)).unwrap();
                model.score(&held, &e).unwrap()
            })
            .collect();
        for s in Subspace::ALL {
            let mean = reports.iter().map(|r| r.score(s).normalized).sum::<f64>() / reports.len() as f64;
            assert!(mean > 1.0 / 3.0 && mean < 3.0, "{s}: {mean}");
        }
    }

    #[test]
    fn pooled_reference_against_itself_is_zero() {
        let e = emb();
        let c = corpus(4, 7);
        let model = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        let tests: Vec<GaussianSummary> = Subspace::ALL.iter().map(|&s| model.summary(s).clone()).collect();
        let r = model.score_summaries("pooled", &tests).unwrap();
        assert!(r.subspaces.iter().all(|s| s.raw.abs() < 1e-9), "{:?}", r.subspaces);
        assert!(r.aggregate.abs() < 1e-9);
    }

    #[test]
    fn crouch_scores_higher_vertical() {
        let e = emb();
        let c = corpus(5, 20);
        let model = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        let flat = synthesize_walk(&e, &WalkParams::new(GaitProfile::Flat, 6.0, 77)).unwrap();
        let crouch = synthesize_walk(&e, &WalkParams::new(GaitProfile::Crouched, 6.0, 77)).unwrap();
        let v = |t: &Trajectory| model.score(t, &e).unwrap().score(Subspace::Vertical).normalized;
        assert!(v(&crouch) > v(&flat));
    }

    #[test]
    fn corpus_order_does_not_matter() {
        let e = emb();
        let mut c = corpus(4, 3);
        let a = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        c.reverse();
        let b = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        assert_eq!(a, b);
        assert!(ReferenceModel::fit(&c[..2], &e, DEFAULT_RELATIVE_RIDGE).is_err());
    }

    #[test]
    fn safety_metric_example() {
        let m = SafetyMetrics::from_penetrations(&[0.0, 0.02, 0.04, 0.0]).unwrap();
        assert_eq!(m.collision_rate, 0.5);
        assert_eq!(m.max_depth_m, 0.04);
        assert_eq!(m.conditional_mean_depth_m, 0.03);
        assert_eq!(m.penetration_integral_m, 0.015);
        let z = SafetyMetrics::from_penetrations(&[0.0; 5]).unwrap();
        assert_eq!([z.collision_rate, z.max_depth_m, z.conditional_mean_depth_m, z.penetration_integral_m], [0.0; 4]);
        assert!(SafetyMetrics::from_penetrations(&[]).is_err());
    }

    fn room_with(boxes: &[OrientedBox]) -> SceneGeometry {
        SceneGeometry::from_boxes(boxes, 10.0, 10.0)
    }

    #[test]
    fn free_walk_is_safe() {
        let e = emb();
        let mut p = WalkParams::new(GaitProfile::Flat, 3.0, 0);
        p.start = [2.0, 5.0];
        let t = synthesize_walk(&e, &p).unwrap();
        let r = safety_report_with(&t, &room_with(&[]), "empty", &e, 100.0).unwrap();
        assert_eq!(r.metrics.collision_rate, 0.0);
        assert_eq!(r.metrics.max_depth_m, 0.0);
    }

    #[test]
    fn walk_into_wall_block_matches_analytic_depth() {
        // A block spanning y and z well beyond the body, entered along +x. For a
        // capsule whose leading point lies inside, depth = leading x - face x.
        let e = emb();
        let face = 5.0;
        let block =
            OrientedBox { center: Vec3::new(7.0, 5.0, 1.6), yaw_rad: 0.0, half_extents: Vec3::new(2.0, 4.0, 1.2) };
        let geom = room_with(&[block]);
        let rest = e.rest_pose();
        let lift = -rest.iter().map(|p| p.z).fold(f64::INFINITY, f64::min) + 0.7;
        let frames: Vec<Vec<Vec3>> = (0..40)
            .map(|i| {
                let x = 4.8 + 0.005 * i as f64;
                rest.iter().map(|p| p + Vec3::new(x, 5.0, lift)).collect()
            })
            .collect();
        let t = traj_from(frames, 30.0);
        let r = safety_report_with(&t, &geom, "block", &e, 100.0).unwrap();
        assert!(r.metrics.collision_rate > 0.0);
        let deepest = t.frames.last().unwrap();
        let oracle = e
            .skeleton_edges
            .iter()
            .zip(&e.capsule_radii_m)
            .filter_map(|(&(p, c), &rad)| {
                let (a, b) = (deepest.keypoints[p], deepest.keypoints[c]);
                let lead = if a.x >= b.x { a } else { b };
                let depth = lead.x + rad - face;
                (lead.z > 0.4 + depth && lead.z < 2.8 - depth).then_some(depth)
            })
            .fold(0.0, f64::max);
        let ring_spacing = 1.0 / 100.0;
        assert!(r.metrics.max_depth_m <= oracle + 1e-9, "{} > {oracle}", r.metrics.max_depth_m);
        assert!(r.metrics.max_depth_m >= oracle - ring_spacing, "{} < {oracle}", r.metrics.max_depth_m);
    }

    #[test]
    fn broad_phase_matches_full_evaluation() {
        let e = emb();
        let boxes = [
            OrientedBox { center: Vec3::new(3.0, 5.0, 0.3), yaw_rad: 0.4, half_extents: Vec3::new(0.3, 0.4, 0.3) },
            OrientedBox { center: Vec3::new(3.6, 5.2, 1.0), yaw_rad: 1.1, half_extents: Vec3::new(0.2, 0.2, 1.0) },
        ];
        let geom = room_with(&boxes);
        let mut p = WalkParams::new(GaitProfile::Crouched, 4.0, 1);
        p.start = [1.5, 5.0];
        let t = synthesize_walk(&e, &p).unwrap();
        let mut scratch = Vec::new();
        let mut hits = 0;
        for f in &t.frames {
            let fast = pose_penetration(&geom, &e, &f.keypoints, 60.0, &mut scratch);
            let full = frame_penetration_full(&geom, &e, &f.keypoints, 60.0).unwrap();
            assert_eq!(fast, full);
            hits += (fast > 0.0) as usize;
        }
        assert!(hits > 0);
    }

    #[test]
    fn rows_to_csv() {
        let e = emb();
        let c = corpus(3, 1);
        let model = ReferenceModel::fit(&c, &e, DEFAULT_RELATIVE_RIDGE).unwrap();
        let a = model.score(&c[0], &e).unwrap();
        let s = safety_report_with(&c[0], &room_with(&[]), "room", &e, 50.0).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&[EvaluationRow::new(&a, &s)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scene_id,trajectory_id,embodiment_id,tool_version,posture"));
        assert_eq!(text.lines().count(), 2);

        // The fixed header matches the serde field order.
        let mut serde_buf = csv::Writer::from_writer(Vec::new());
        serde_buf.serialize(EvaluationRow::new(&a, &s)).unwrap();
        let serde_text = String::from_utf8(serde_buf.into_inner().unwrap()).unwrap();
        assert_eq!(serde_text, text);

        let mut empty = Vec::new();
        write_rows_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), format!("{}\n", EvaluationRow::COLUMNS.join(",")));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn frechet_is_symmetric(seed in any::<u64>(), d in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ma: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mb: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = summary(&ma, random_psd(&mut rng, d));
            let b = summary(&mb, random_psd(&mut rng, d));
            let ab = frechet_distance_sq(&a, &b).unwrap();
            let ba = frechet_distance_sq(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-6 * ab.abs().max(1e-12) + 1e-9);
            prop_assert!(frechet_distance_sq(&a, &a).unwrap() < 1e-9);
        }

        #[test]
        fn safety_identity(d in proptest::collection::vec(prop_oneof![Just(0.0), 0.0..0.5f64], 1..200)) {
            let m = SafetyMetrics::from_penetrations(&d).unwrap();
            prop_assert!(m.conditional_mean_depth_m <= m.max_depth_m * (1.0 + 1e-12));
            prop_assert!(m.penetration_integral_m <= m.max_depth_m * (1.0 + 1e-12));
            if m.collision_rate == 0.0 {
                prop_assert_eq!(m.max_depth_m + m.conditional_mean_depth_m + m.penetration_integral_m, 0.0);
            }
        }
    }
}
