//! Subspace learning over labeled feature vectors.
//!
//! The main fit is direct LDA, which stays well-defined when the feature
//! dimension dwarfs the number of training samples (the usual situation for
//! wavelet features): it diagonalizes the between-class scatter first,
//! whitens its non-null subspace, and then orders directions by ascending
//! within-class spread. Classical LDA, PCA, and Gaussian-kernel KPCA/KDDA
//! are provided as comparators behind the same model interface.
//!
//! Large scatter matrices are never formed explicitly: both the
//! between-class and projected within-class eigenproblems are solved through
//! their low-rank factors, so fitting is cheap even at feature length in the
//! thousands.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Relative floor below which scatter eigenvalues count as null space.
const EPS_REL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

/// One enrolled class with its feature vectors (as matrix columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSamples {
    pub label: String,
    pub vectors: DMatrix<f64>,
}

/// Labeled training vectors grouped by class, all with a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    classes: Vec<ClassSamples>,
    dim: usize,
}

impl TrainingSet {
    /// Build from per-class vector lists. Requires at least two classes, at
    /// least one vector per class, and a common vector length.
    pub fn new(classes: Vec<(String, Vec<Vec<f64>>)>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::DegenerateTraining(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let dim = classes
            .first()
            .and_then(|(_, vs)| vs.first())
            .map(|v| v.len())
            .unwrap_or(0);
        if dim == 0 {
            return Err(Error::DegenerateTraining("empty feature vectors".into()));
        }
        let mut out = Vec::with_capacity(classes.len());
        for (label, vectors) in classes {
            if vectors.is_empty() {
                return Err(Error::DegenerateTraining(format!("class {label:?} has no vectors")));
            }
            if vectors.iter().any(|v| v.len() != dim) {
                return Err(Error::ContractViolation(format!(
                    "class {label:?} has vectors of mixed length"
                )));
            }
            if vectors.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::ContractViolation(format!(
                    "class {label:?} has non-finite features"
                )));
            }
            let mat = DMatrix::from_fn(dim, vectors.len(), |i, j| vectors[j][i]);
            out.push(ClassSamples { label, vectors: mat });
        }
        Ok(TrainingSet { classes: out, dim })
    }

    /// Group labeled feature vectors by class (labels sorted for
    /// determinism). Vectors without a label are rejected.
    pub fn from_feature_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for fv in vectors {
            let label = fv
                .label
                .clone()
                .ok_or_else(|| Error::ContractViolation("unlabeled training vector".into()))?;
            groups.entry(label).or_default().push(fv.values.clone());
        }
        TrainingSet::new(groups.into_iter().collect())
    }

    pub fn classes(&self) -> &[ClassSamples] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total_samples(&self) -> usize {
        self.classes.iter().map(|c| c.vectors.ncols()).sum()
    }
}

// ---------------------------------------------------------------------------
// Scatter matrices
// ---------------------------------------------------------------------------

/// Between- and within-class scatter with the means that generated them.
#[derive(Debug, Clone)]
pub struct ScatterPair {
    pub s_b: DMatrix<f64>,
    pub s_w: DMatrix<f64>,
    pub class_means: Vec<DVector<f64>>,
    pub grand_mean: DVector<f64>,
}

fn class_means(ts: &TrainingSet) -> (Vec<DVector<f64>>, DVector<f64>) {
    let mut grand = DVector::zeros(ts.dim());
    let mut means = Vec::with_capacity(ts.n_classes());
    let mut total = 0.0;
    for class in ts.classes() {
        let nk = class.vectors.ncols() as f64;
        let mean = class.vectors.column_sum() / nk;
        grand += &mean * nk;
        total += nk;
        means.push(mean);
    }
    (means, grand / total)
}

/// Between-class scatter `sum_k N_k (mu_k - mu)(mu_k - mu)^T` and
/// within-class scatter `sum_k sum_i (z_ki - mu_k)(z_ki - mu_k)^T`,
/// symmetrized against rounding. O(L^2 N) — meant for the classical-LDA
/// regime and for verification; the direct-LDA path works on factors.
pub fn scatter_matrices(ts: &TrainingSet) -> ScatterPair {
    let (means, grand) = class_means(ts);
    let l = ts.dim();
    let mut s_b = DMatrix::zeros(l, l);
    let mut s_w = DMatrix::zeros(l, l);
    for (class, mean) in ts.classes().iter().zip(&means) {
        let nk = class.vectors.ncols() as f64;
        let d = mean - &grand;
        s_b += &d * d.transpose() * nk;
        for j in 0..class.vectors.ncols() {
            let dev = class.vectors.column(j) - mean;
            s_w += &dev * dev.transpose();
        }
    }
    let s_b = (&s_b + s_b.transpose()) * 0.5;
    let s_w = (&s_w + s_w.transpose()) * 0.5;
    ScatterPair { s_b, s_w, class_means: means, grand_mean: grand }
}

// ---------------------------------------------------------------------------
// Eigen helpers
// ---------------------------------------------------------------------------

/// Symmetric eigendecomposition sorted by descending eigenvalue.
fn sym_eig_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

/// Make the largest-magnitude entry of each column positive (first maximum
/// on ties) so fits are reproducible up to nothing.
fn fix_signs(m: &mut DMatrix<f64>) {
    for c in 0..m.ncols() {
        let mut arg = 0;
        let mut best = -1.0;
        for r in 0..m.nrows() {
            let a = m[(r, c)].abs();
            if a > best {
                best = a;
                arg = r;
            }
        }
        if m[(arg, c)] < 0.0 {
            for r in 0..m.nrows() {
                m[(r, c)] = -m[(r, c)];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceMethod {
    Lda,
    Dlda,
    Pca,
    Kpca,
    Kdda,
    /// No projection; gallery holds the raw feature vectors.
    Identity,
}

/// How test vectors map into the subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    /// `y = W^T v` with `W` of shape L x m.
    Linear { weights: DMatrix<f64> },
    /// Kernel expansion: `y = A^T ktilde(v)` where `ktilde` is the
    /// double-centered Gaussian kernel vector against the stored training
    /// set.
    Kernel {
        train: DMatrix<f64>,
        coeffs: DMatrix<f64>,
        kernel_col_means: DVector<f64>,
        kernel_total_mean: f64,
        sigma: f64,
    },
    Identity,
}

/// Projected gallery templates for one enrolled class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryClass {
    pub label: String,
    pub templates: Vec<Vec<f64>>,
}

/// A fitted projection plus the projected enrollment gallery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub method: SubspaceMethod,
    /// Expected input (feature) length L.
    pub input_dim: usize,
    /// Projected length m.
    pub output_dim: usize,
    pub projection: Projection,
    pub gallery: Vec<GalleryClass>,
}

impl SubspaceModel {
    pub fn gallery_class(&self, label: &str) -> Option<&GalleryClass> {
        self.gallery.iter().find(|g| g.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.gallery.iter().map(|g| g.label.as_str()).collect()
    }
}

/// Project a feature vector through a fitted model.
pub fn project(model: &SubspaceModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != model.input_dim {
        return Err(Error::ContractViolation(format!(
            "vector length {} does not match model input {}",
            v.len(),
            model.input_dim
        )));
    }
    match &model.projection {
        Projection::Identity => Ok(v.to_vec()),
        Projection::Linear { weights } => {
            let x = DVector::from_column_slice(v);
            Ok((weights.transpose() * x).iter().cloned().collect())
        }
        Projection::Kernel { train, coeffs, kernel_col_means, kernel_total_mean, sigma } => {
            let n = train.ncols();
            let x = DVector::from_column_slice(v);
            let mut k = DVector::zeros(n);
            for j in 0..n {
                k[j] = gaussian_kernel(&x, &train.column(j).into_owned(), *sigma);
            }
            let k_mean = k.sum() / n as f64;
            for j in 0..n {
                k[j] = k[j] - kernel_col_means[j] - k_mean + kernel_total_mean;
            }
            Ok((coeffs.transpose() * k).iter().cloned().collect())
        }
    }
}

fn gaussian_kernel(a: &DVector<f64>, b: &DVector<f64>, sigma: f64) -> f64 {
    let d2 = (a - b).norm_squared();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn build_gallery(model_wo_gallery: &SubspaceModel, ts: &TrainingSet) -> Result<Vec<GalleryClass>> {
    let mut gallery = Vec::with_capacity(ts.n_classes());
    for class in ts.classes() {
        let mut templates = Vec::with_capacity(class.vectors.ncols());
        for j in 0..class.vectors.ncols() {
            let col: Vec<f64> = class.vectors.column(j).iter().cloned().collect();
            templates.push(project(model_wo_gallery, &col)?);
        }
        gallery.push(GalleryClass { label: class.label.clone(), templates });
    }
    Ok(gallery)
}

fn finish_model(
    method: SubspaceMethod,
    input_dim: usize,
    projection: Projection,
    ts: &TrainingSet,
) -> Result<SubspaceModel> {
    let output_dim = match &projection {
        Projection::Linear { weights } => weights.ncols(),
        Projection::Kernel { coeffs, .. } => coeffs.ncols(),
        Projection::Identity => input_dim,
    };
    let mut model =
        SubspaceModel { method, input_dim, output_dim, projection, gallery: Vec::new() };
    model.gallery = build_gallery(&model, ts)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

/// Classical LDA: the top-`m` eigenvectors of `S_w^-1 S_b`, unit-normalized.
/// Needs the within-class scatter to be invertible, which requires far more
/// samples than features; otherwise this is a [`Error::SmallSampleSize`].
pub fn fit_lda(ts: &TrainingSet, m: usize) -> Result<SubspaceModel> {
    let l = ts.dim();
    let n = ts.total_samples();
    let k = ts.n_classes();
    if n.saturating_sub(k) < l {
        return Err(Error::SmallSampleSize { features: l, samples: n });
    }
    let sp = scatter_matrices(ts);
    // Tiny relative ridge so rounding in a barely-positive-definite scatter
    // (e.g. heavily collinear samples) cannot flip a Cholesky pivot.
    let mut s_w = sp.s_w.clone();
    let ridge = EPS_REL * s_w.trace() / l as f64;
    for i in 0..l {
        s_w[(i, i)] += ridge;
    }
    let chol = nalgebra::Cholesky::new(s_w)
        .ok_or(Error::SmallSampleSize { features: l, samples: n })?;
    let lower = chol.l();
    // C = L^-1 S_b L^-T is symmetric and shares eigenvalues with S_w^-1 S_b.
    let x = lower
        .solve_lower_triangular(&sp.s_b)
        .ok_or_else(|| Error::NumericInstability("triangular solve failed".into()))?;
    let c = lower
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::NumericInstability("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (_, u) = sym_eig_desc(c);

    let m_eff = m.min(l);
    let upper = lower.transpose();
    let mut w = DMatrix::zeros(l, m_eff);
    for j in 0..m_eff {
        let col = upper
            .solve_upper_triangular(&u.column(j).into_owned())
            .ok_or_else(|| Error::NumericInstability("triangular solve failed".into()))?;
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::NumericInstability("null LDA direction".into()));
        }
        w.set_column(j, &(col / norm));
    }
    fix_signs(&mut w);
    finish_model(SubspaceMethod::Lda, l, Projection::Linear { weights: w }, ts)
}

/// Direct LDA on explicit class column-matrices in an arbitrary space.
/// Returns the projection matrix (d x m_eff).
fn direct_lda_core(classes: &[DMatrix<f64>], m: usize) -> Result<DMatrix<f64>> {
    let d = classes[0].nrows();
    let total: usize = classes.iter().map(|c| c.ncols()).sum();

    // means and scatter factors
    let mut grand = DVector::zeros(d);
    let mut means = Vec::with_capacity(classes.len());
    for c in classes {
        let mean = c.column_sum() / c.ncols() as f64;
        grand += &mean * c.ncols() as f64;
        means.push(mean);
    }
    grand /= total as f64;

    let mut phi = DMatrix::zeros(d, classes.len());
    let mut psi = DMatrix::zeros(d, total);
    let mut col = 0;
    for (k, (c, mean)) in classes.iter().zip(&means).enumerate() {
        phi.set_column(k, &((mean - &grand) * (c.ncols() as f64).sqrt()));
        for j in 0..c.ncols() {
            psi.set_column(col, &(c.column(j) - mean));
            col += 1;
        }
    }

    // Non-null S_b subspace via the K x K Gram of phi.
    let (bvals, bvecs) = sym_eig_desc(phi.transpose() * &phi);
    let lam_max = bvals[0];
    if !(lam_max > 0.0) {
        return Err(Error::DegenerateTraining(
            "between-class scatter is zero; all class means coincide".into(),
        ));
    }
    let eps_b = EPS_REL * lam_max;
    let kept: Vec<usize> = (0..bvals.len()).filter(|&i| bvals[i] > eps_b).collect();
    let q = kept.len();
    // Whitening: columns phi u_i / lambda_i give Z with Z^T S_b Z = I.
    let mut z = DMatrix::zeros(d, q);
    for (j, &i) in kept.iter().enumerate() {
        z.set_column(j, &(&phi * bvecs.column(i) / bvals[i]));
    }

    // Projected within-class scatter, ordered by ascending spread.
    let p = z.transpose() * &psi;
    let t = &p * p.transpose();
    let t = (&t + t.transpose()) * 0.5;
    let (wvals_desc, wvecs_desc) = sym_eig_desc(t);
    if std::env::var_os("PP_DEBUG_DLDA").is_some() {
        let formatted: Vec<String> = wvals_desc.iter().map(|v| format!("{v:.3e}")).collect();
        eprintln!("dlda: q={q} projected within-class eigenvalues [{}]", formatted.join(", "));
    }
    let order: Vec<usize> = (0..q).rev().collect(); // ascending
    let m_eff = m.min(q);
    if m_eff < m {
        log::warn!("direct LDA reduced output dimension from {m} to {m_eff}");
    }
    let d_max = wvals_desc[0].max(0.0);
    let floor = if d_max > 0.0 { EPS_REL * d_max } else { EPS_REL };

    let mut w = DMatrix::zeros(d, m_eff);
    for (j, &i) in order.iter().take(m_eff).enumerate() {
        let dj = wvals_desc[i].max(floor);
        w.set_column(j, &(&z * wvecs_desc.column(i) / dj.sqrt()));
    }
    fix_signs(&mut w);
    Ok(w)
}

/// Direct LDA: diagonalize the between-class scatter, whiten its range, and
/// keep up to `K - 1` directions ordered by ascending within-class spread
/// (floored at a relative epsilon). Well-defined when features outnumber
/// samples.
pub fn fit_dlda(ts: &TrainingSet, m: usize) -> Result<SubspaceModel> {
    let mats: Vec<DMatrix<f64>> = ts.classes().iter().map(|c| c.vectors.clone()).collect();
    let w = direct_lda_core(&mats, m)?;
    finish_model(SubspaceMethod::Dlda, ts.dim(), Projection::Linear { weights: w }, ts)
}

/// PCA on the grand-mean-centered training covariance. When `m` exceeds the
/// data rank it is reduced with a warning.
pub fn fit_pca(ts: &TrainingSet, m: usize) -> Result<SubspaceModel> {
    let l = ts.dim();
    let n = ts.total_samples();
    let (_, grand) = class_means(ts);
    let mut x = DMatrix::zeros(l, n);
    let mut col = 0;
    for class in ts.classes() {
        for j in 0..class.vectors.ncols() {
            x.set_column(col, &(class.vectors.column(j) - &grand));
            col += 1;
        }
    }

    let (vals, vecs) = if l <= n {
        sym_eig_desc(&x * x.transpose())
    } else {
        // Gram trick: eigenvectors of X^T X map back through X.
        let (gvals, gvecs) = sym_eig_desc(x.transpose() * &x);
        let mut vecs = DMatrix::zeros(l, gvals.len());
        for j in 0..gvals.len() {
            if gvals[j] > 0.0 {
                let v = &x * gvecs.column(j);
                let norm = v.norm();
                if norm > 0.0 {
                    vecs.set_column(j, &(v / norm));
                }
            }
        }
        (gvals, vecs)
    };

    let lam_max = vals.first().cloned().unwrap_or(0.0);
    if !(lam_max > 0.0) {
        return Err(Error::DegenerateTraining("training data has zero variance".into()));
    }
    let rank = vals.iter().filter(|&&v| v > 1e-12 * lam_max).count();
    let m_eff = m.min(rank);
    if m_eff < m {
        log::warn!("PCA rank {rank} is below requested dimension {m}; reducing");
    }
    let mut w = vecs.columns(0, m_eff).into_owned();
    fix_signs(&mut w);
    finish_model(SubspaceMethod::Pca, l, Projection::Linear { weights: w }, ts)
}

/// Median pairwise Euclidean distance between training vectors — the usual
/// default for the Gaussian kernel width.
pub fn median_pairwise_distance(ts: &TrainingSet) -> f64 {
    let cols: Vec<DVector<f64>> = ts
        .classes()
        .iter()
        .flat_map(|c| (0..c.vectors.ncols()).map(|j| c.vectors.column(j).into_owned()))
        .collect();
    let mut dists = Vec::with_capacity(cols.len() * (cols.len() - 1) / 2);
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            dists.push((&cols[i] - &cols[j]).norm());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if dists.is_empty() {
        0.0
    } else {
        dists[dists.len() / 2]
    }
}

fn resolve_sigma(ts: &TrainingSet, sigma: Option<f64>) -> Result<f64> {
    let s = match sigma {
        Some(s) => s,
        None => median_pairwise_distance(ts),
    };
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidConfig(format!("kernel width must be positive, got {s}")));
    }
    Ok(s)
}

struct CenteredGram {
    centered: DMatrix<f64>,
    col_means: DVector<f64>,
    total_mean: f64,
    train: DMatrix<f64>,
}

fn centered_gram(ts: &TrainingSet, sigma: f64) -> CenteredGram {
    let n = ts.total_samples();
    let l = ts.dim();
    let mut train = DMatrix::zeros(l, n);
    let mut col = 0;
    for class in ts.classes() {
        for j in 0..class.vectors.ncols() {
            train.set_column(col, &class.vectors.column(j).into_owned());
            col += 1;
        }
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = gaussian_kernel(&train.column(i).into_owned(), &train.column(j).into_owned(), sigma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let col_means = DVector::from_fn(n, |j, _| k.column(j).sum() / n as f64);
    let total_mean = col_means.sum() / n as f64;
    let centered = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - col_means[i] - col_means[j] + total_mean);
    CenteredGram { centered, col_means, total_mean, train }
}

/// Eigendecompose a centered Gram matrix, clipping numerically negative
/// eigenvalues to zero (with a warning) and returning pairs above the
/// relative floor.
fn gram_eig(centered: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mut vals, vecs) = sym_eig_desc(centered.clone());
    let lam_max = vals.first().cloned().unwrap_or(0.0);
    if !(lam_max > 0.0) {
        return Err(Error::DegenerateTraining("centered kernel matrix is zero".into()));
    }
    if vals.iter().any(|&v| v < -1e-9 * lam_max) {
        log::warn!("centered Gram matrix is not numerically PSD; clipping negative eigenvalues");
    }
    for v in &mut vals {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((vals, vecs))
}

/// Kernel PCA with the Gaussian kernel: top-`m` eigenvectors of the
/// double-centered Gram matrix. The model stores the training vectors, as
/// any kernel method must.
pub fn fit_kpca(ts: &TrainingSet, m: usize, sigma: Option<f64>) -> Result<SubspaceModel> {
    let sigma = resolve_sigma(ts, sigma)?;
    let g = centered_gram(ts, sigma);
    let (vals, vecs) = gram_eig(&g.centered)?;
    let lam_max = vals[0];
    let rank = vals.iter().filter(|&&v| v > 1e-12 * lam_max).count();
    let m_eff = m.min(rank);
    if m_eff < m {
        log::warn!("kernel PCA rank {rank} is below requested dimension {m}; reducing");
    }
    let n = g.centered.nrows();
    let mut coeffs = DMatrix::zeros(n, m_eff);
    for j in 0..m_eff {
        coeffs.set_column(j, &(vecs.column(j) / vals[j].sqrt()));
    }
    fix_signs(&mut coeffs);
    let projection = Projection::Kernel {
        train: g.train,
        coeffs,
        kernel_col_means: g.col_means,
        kernel_total_mean: g.total_mean,
        sigma,
    };
    finish_model(SubspaceMethod::Kpca, ts.dim(), projection, ts)
}

/// Kernel direct discriminant analysis: the direct-LDA construction executed
/// in the Gaussian-kernel feature space. Exact feature-space coordinates are
/// recovered from the centered Gram matrix, direct LDA runs on those
/// coordinates, and the result folds back into kernel-expansion
/// coefficients.
pub fn fit_kdda(ts: &TrainingSet, m: usize, sigma: Option<f64>) -> Result<SubspaceModel> {
    let sigma = resolve_sigma(ts, sigma)?;
    let g = centered_gram(ts, sigma);
    let (vals, vecs) = gram_eig(&g.centered)?;
    let lam_max = vals[0];
    let kept: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > EPS_REL * lam_max).collect();
    let r = kept.len();
    let n = g.centered.nrows();

    // Coordinates Y (r x n): column i is the feature-space position of
    // training sample i in the orthonormal basis of the data span.
    let mut y = DMatrix::zeros(r, n);
    for (row, &i) in kept.iter().enumerate() {
        let s = vals[i].sqrt();
        for col in 0..n {
            y[(row, col)] = s * vecs[(col, i)];
        }
    }

    // Split coordinates back into classes (column order follows ts).
    let mut class_cols = Vec::with_capacity(ts.n_classes());
    let mut col = 0;
    for class in ts.classes() {
        let nk = class.vectors.ncols();
        class_cols.push(y.columns(col, nk).into_owned());
        col += nk;
    }
    let w_y = direct_lda_core(&class_cols, m)?;

    // A = V_r D^{-1/2} W_y maps centered kernel vectors to projections.
    let mut v_dinv = DMatrix::zeros(n, r);
    for (j, &i) in kept.iter().enumerate() {
        v_dinv.set_column(j, &(vecs.column(i) / vals[i].sqrt()));
    }
    let coeffs = v_dinv * w_y;

    let projection = Projection::Kernel {
        train: g.train,
        coeffs,
        kernel_col_means: g.col_means,
        kernel_total_mean: g.total_mean,
        sigma,
    };
    finish_model(SubspaceMethod::Kdda, ts.dim(), projection, ts)
}

/// No dimensionality reduction: the gallery stores raw feature vectors and
/// matching happens directly in feature space.
pub fn openset_model(ts: &TrainingSet) -> Result<SubspaceModel> {
    finish_model(SubspaceMethod::Identity, ts.dim(), Projection::Identity, ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(classes: Vec<(&str, Vec<Vec<f64>>)>) -> TrainingSet {
        TrainingSet::new(classes.into_iter().map(|(l, v)| (l.to_string(), v)).collect()).unwrap()
    }

    #[test]
    fn identical_vectors_zero_both_scatters() {
        let v = vec![1.0, 2.0, 3.0];
        let set = ts(vec![("a", vec![v.clone(), v.clone()]), ("b", vec![v.clone(), v.clone()])]);
        let sp = scatter_matrices(&set);
        assert!(sp.s_b.iter().all(|&x| x.abs() < 1e-12));
        assert!(sp.s_w.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn single_vector_classes_give_rank_one_between_scatter() {
        let set = ts(vec![("a", vec![vec![0.0, 0.0]]), ("b", vec![vec![2.0, 0.0]])]);
        let sp = scatter_matrices(&set);
        assert!(sp.s_w.iter().all(|&x| x == 0.0));
        let (vals, _) = sym_eig_desc(sp.s_b.clone());
        assert!(vals[0] > 1e-9);
        assert!(vals[1].abs() < 1e-9, "S_b must be rank one");
    }

    #[test]
    fn scatter_matches_hand_computed_values() {
        // three classes in the plane, sums worked out by hand
        let set = ts(vec![
            ("a", vec![vec![0.0, 0.0], vec![2.0, 0.0]]),
            ("b", vec![vec![4.0, 0.0], vec![6.0, 0.0]]),
            ("c", vec![vec![0.0, 4.0], vec![0.0, 6.0]]),
        ]);
        let sp = scatter_matrices(&set);
        let expected_b =
            DMatrix::from_row_slice(2, 2, &[28.0, -20.0, -20.0, 100.0 / 3.0]);
        let expected_w = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 2.0]);
        assert!((&sp.s_b - expected_b).abs().max() < 1e-12);
        assert!((&sp.s_w - expected_w).abs().max() < 1e-12);
        assert!((&sp.grand_mean - DVector::from_vec(vec![2.0, 5.0 / 3.0])).abs().max() < 1e-12);
    }

    fn gaussian_class(
        rng: &mut ChaCha8Rng,
        center: &[f64],
        std: f64,
        n: usize,
    ) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, Normal};
        let noise = Normal::new(0.0, std).unwrap();
        (0..n)
            .map(|_| center.iter().map(|&c| c + noise.sample(rng)).collect())
            .collect()
    }

    #[test]
    fn lda_one_dimensional_two_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[-1.0], 0.1, 30)),
            ("b", gaussian_class(&mut rng, &[1.0], 0.1, 30)),
        ]);
        let model = fit_lda(&set, 1).unwrap();
        if let Projection::Linear { weights } = &model.projection {
            assert!((weights[(0, 0)].abs() - 1.0).abs() < 1e-12);
            assert!(weights[(0, 0)] > 0.0, "sign convention");
        } else {
            panic!("expected linear projection");
        }
        // Fisher ratio is positive: projected between beats projected within
        let sp = scatter_matrices(&set);
        assert!(sp.s_b[(0, 0)] / sp.s_w[(0, 0)] > 0.0);
    }

    #[test]
    fn lda_finds_the_separating_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[-2.0, 0.0], 0.5, 200)),
            ("b", gaussian_class(&mut rng, &[2.0, 0.0], 0.5, 200)),
        ]);
        let model = fit_lda(&set, 1).unwrap();
        if let Projection::Linear { weights } = &model.projection {
            assert!(weights[(0, 0)].abs() > 0.99, "w should align with e1: {weights}");
        } else {
            panic!("expected linear projection");
        }
    }

    #[test]
    fn lda_reports_small_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center: Vec<f64> = vec![0.0; 500];
        let mut c2 = center.clone();
        c2[0] = 1.0;
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &center, 0.1, 20)),
            ("b", gaussian_class(&mut rng, &c2, 0.1, 20)),
        ]);
        assert!(matches!(fit_lda(&set, 1), Err(Error::SmallSampleSize { .. })));
    }

    /// Samples `mu +- sigma e_i` for every axis: the class's within-class
    /// scatter is exactly `2 sigma^2 I`. LDA and direct LDA only share a
    /// subspace exactly when the within-class scatter is isotropic like
    /// this; sampling noise in a random Gaussian cohort already tilts the
    /// LDA directions out of the between-class range.
    fn isotropic_class(center: &[f64], sigma: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..center.len() {
            for sign in [1.0, -1.0] {
                let mut v = center.to_vec();
                v[i] += sign * sigma;
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn dlda_matches_lda_span_when_well_conditioned() {
        let set = ts(vec![
            ("a", isotropic_class(&[0.0, 0.0, 0.0], 0.4)),
            ("b", isotropic_class(&[3.0, 0.5, 0.0], 0.4)),
            ("c", isotropic_class(&[0.0, 3.0, 1.0], 0.4)),
        ]);
        let lda = fit_lda(&set, 2).unwrap();
        let dlda = fit_dlda(&set, 2).unwrap();
        let (wa, wb) = match (&lda.projection, &dlda.projection) {
            (Projection::Linear { weights: a }, Projection::Linear { weights: b }) => (a, b),
            _ => panic!("expected linear projections"),
        };
        let qa = wa.clone().qr().q();
        let qb = wb.clone().qr().q();
        let overlap = qa.transpose() * qb;
        let svd = overlap.svd(false, false);
        for s in svd.singular_values.iter() {
            let angle = s.min(1.0).acos();
            assert!(angle < 1e-6, "principal angle {angle}");
        }
    }

    #[test]
    fn dlda_handles_more_features_than_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = 500;
        let k = 10;
        let mut classes = Vec::new();
        for c in 0..k {
            let mut center = vec![0.0; l];
            for i in 0..l {
                center[i] = rng.gen_range(-1.0..1.0) * ((i + c) % 7) as f64 * 0.2;
            }
            classes.push((format!("c{c}"), gaussian_class(&mut rng, &center, 0.3, 4)));
        }
        let set = TrainingSet::new(classes).unwrap();
        let model = fit_dlda(&set, 9).unwrap();
        assert_eq!(model.output_dim, 9);

        // projected between-class spread dominates projected within-class
        let w = match &model.projection {
            Projection::Linear { weights } => weights.clone(),
            _ => panic!(),
        };
        let sp = scatter_matrices(&set);
        let pb = (w.transpose() * &sp.s_b * &w).trace();
        let pw = (w.transpose() * &sp.s_w * &w).trace();
        assert!(pb > pw, "projected S_b trace {pb} <= projected S_w trace {pw}");
    }

    #[test]
    fn dlda_survives_zero_within_class_scatter() {
        let set = ts(vec![
            ("a", vec![vec![0.0, 1.0], vec![0.0, 1.0]]),
            ("b", vec![vec![1.0, 0.0], vec![1.0, 0.0]]),
        ]);
        let model = fit_dlda(&set, 1).unwrap();
        let w = match &model.projection {
            Projection::Linear { weights } => weights,
            _ => panic!(),
        };
        assert!(w.iter().all(|v| v.is_finite()));
        assert!(w.norm() > 0.0);
    }

    #[test]
    fn dlda_rejects_coincident_class_means() {
        let set = ts(vec![
            ("a", vec![vec![1.0, 0.0], vec![-1.0, 0.0]]),
            ("b", vec![vec![0.0, 1.0], vec![0.0, -1.0]]),
        ]);
        assert!(matches!(fit_dlda(&set, 1), Err(Error::DegenerateTraining(_))));
    }

    #[test]
    fn dlda_beats_random_projections_on_fisher_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut wins = 0;
        let trials = 100;
        for trial in 0..trials {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let l = 40;
            let mut classes = Vec::new();
            for c in 0..5 {
                let center: Vec<f64> =
                    (0..l).map(|_| trial_rng.gen_range(-1.0..1.0) * (c as f64 + 1.0) * 0.3).collect();
                classes.push((format!("c{c}"), gaussian_class(&mut trial_rng, &center, 0.5, 4)));
            }
            let set = TrainingSet::new(classes).unwrap();
            let sp = scatter_matrices(&set);
            let ratio = |w: &DMatrix<f64>| {
                let pb = (w.transpose() * &sp.s_b * w).trace();
                let pw = (w.transpose() * &sp.s_w * w).trace().max(1e-12);
                pb / pw
            };
            let model = fit_dlda(&set, 4).unwrap();
            let w = match &model.projection {
                Projection::Linear { weights } => weights.clone(),
                _ => panic!(),
            };
            let random = DMatrix::from_fn(l, 4, |_, _| rng.gen_range(-1.0..1.0));
            if ratio(&w) >= ratio(&random) {
                wins += 1;
            }
        }
        assert!(wins >= 95, "direct LDA beat random projections only {wins}/{trials} times");
    }

    #[test]
    fn pca_on_a_line_finds_the_line() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let set = ts(vec![
            ("a", pts[..10].to_vec()),
            ("b", pts[10..].to_vec()),
        ]);
        let model = fit_pca(&set, 1).unwrap();
        let w = match &model.projection {
            Projection::Linear { weights } => weights,
            _ => panic!(),
        };
        let expected = (1.0f64, 2.0f64);
        let norm = (expected.0 * expected.0 + expected.1 * expected.1).sqrt();
        assert!((w[(0, 0)] - expected.0 / norm).abs() < 1e-9);
        assert!((w[(1, 0)] - expected.1 / norm).abs() < 1e-9);
    }

    #[test]
    fn pca_isotropic_eigenvalues_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[0.0, 0.0], 1.0, 5000)),
            ("b", gaussian_class(&mut rng, &[0.0, 0.0], 1.0, 5000)),
        ]);
        let sp = scatter_matrices(&set);
        let total = &sp.s_b + &sp.s_w;
        let (vals, _) = sym_eig_desc(total);
        assert!(vals[0] / vals[1] < 1.2, "isotropic sample eigenvalues within 20%");
        let model = fit_pca(&set, 2).unwrap();
        assert_eq!(model.output_dim, 2);
    }

    #[test]
    fn pca_full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[1.0, -1.0, 0.5], 1.0, 40)),
            ("b", gaussian_class(&mut rng, &[-1.0, 1.0, -0.5], 1.0, 40)),
        ]);
        let model = fit_pca(&set, 3).unwrap();
        let w = match &model.projection {
            Projection::Linear { weights } => weights.clone(),
            _ => panic!(),
        };
        let (_, grand) = class_means(&set);
        let z = DVector::from_vec(vec![0.3, -0.7, 2.1]);
        let recon = &w * (w.transpose() * (&z - &grand)) + &grand;
        assert!((recon - z).norm() < 1e-9);
    }

    #[test]
    fn pca_reduces_m_beyond_rank() {
        let set = ts(vec![
            ("a", vec![vec![0.0, 0.0], vec![1.0, 2.0]]),
            ("b", vec![vec![2.0, 4.0], vec![3.0, 6.0]]),
        ]);
        let model = fit_pca(&set, 2).unwrap();
        assert_eq!(model.output_dim, 1, "rank-1 data cannot support 2 components");
    }

    #[test]
    fn kpca_with_huge_sigma_recovers_linear_pca() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[0.0, 0.0], 1.0, 25)),
            ("b", gaussian_class(&mut rng, &[2.0, 1.0], 1.0, 25)),
        ]);
        let pca = fit_pca(&set, 2).unwrap();
        let kpca = fit_kpca(&set, 2, Some(1e4)).unwrap();
        // compare per-sample projections by correlation, component-wise
        for comp in 0..2 {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (ga, gb) in pca.gallery.iter().zip(&kpca.gallery) {
                for (ta, tb) in ga.templates.iter().zip(&gb.templates) {
                    a.push(ta[comp]);
                    b.push(tb[comp]);
                }
            }
            let corr = correlation(&a, &b).abs();
            assert!(corr >= 0.999, "component {comp} correlation {corr}");
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn kernel_duplicates_project_identically() {
        let set = ts(vec![
            ("a", vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.2]]),
            ("b", vec![vec![0.0, 1.0], vec![0.1, 0.9]]),
        ]);
        let model = fit_kpca(&set, 2, Some(0.7)).unwrap();
        let t = &model.gallery[0].templates;
        assert_eq!(t[0], t[1], "duplicate training vectors share a projection");
    }

    #[test]
    fn kdda_separates_concentric_rings() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ring = |radius: f64, n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let t = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = radius + rng.gen_range(-0.05..0.05);
                    vec![r * t.cos(), r * t.sin()]
                })
                .collect()
        };
        let set = ts(vec![
            ("inner", ring(1.0, 40, &mut rng)),
            ("outer", ring(3.0, 40, &mut rng)),
        ]);
        let model = fit_kdda(&set, 1, Some(1.0)).unwrap();
        assert_eq!(model.output_dim, 1);
        let inner: Vec<f64> = model.gallery[0].templates.iter().map(|t| t[0]).collect();
        let outer: Vec<f64> = model.gallery[1].templates.iter().map(|t| t[0]).collect();
        let inner_max = inner.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inner_min = inner.iter().cloned().fold(f64::INFINITY, f64::min);
        let outer_max = outer.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let outer_min = outer.iter().cloned().fold(f64::INFINITY, f64::min);
        let separated = inner_max < outer_min || outer_max < inner_min;
        assert!(separated, "training projections overlap: inner [{inner_min}, {inner_max}], outer [{outer_min}, {outer_max}]");
    }

    #[test]
    fn projection_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[0.0, 0.0, 0.0], 0.5, 10)),
            ("b", gaussian_class(&mut rng, &[1.0, 1.0, 0.0], 0.5, 10)),
        ]);
        let model = fit_dlda(&set, 1).unwrap();

        // zero maps to zero for linear methods
        let zero = project(&model, &[0.0, 0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        // training vectors reproduce their gallery templates bit for bit
        let first = &set.classes()[0].vectors;
        let v: Vec<f64> = first.column(0).iter().cloned().collect();
        let p = project(&model, &v).unwrap();
        assert_eq!(p, model.gallery[0].templates[0]);

        // linearity to 1e-12
        let u = vec![0.3, -0.2, 0.9];
        let w = vec![-1.0, 0.4, 0.1];
        let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let pu = project(&model, &u).unwrap();
        let pw = project(&model, &w).unwrap();
        let pc = project(&model, &combo).unwrap();
        for i in 0..pc.len() {
            assert!((pc[i] - (2.0 * pu[i] - 0.5 * pw[i])).abs() < 1e-12);
        }

        // length mismatch is a contract violation
        assert!(matches!(
            project(&model, &[1.0, 2.0]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn model_serialization_round_trips_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let set = ts(vec![
            ("a", gaussian_class(&mut rng, &[0.0; 6], 0.5, 4)),
            ("b", gaussian_class(&mut rng, &[1.0; 6], 0.5, 4)),
            ("c", gaussian_class(&mut rng, &[-1.0; 6], 0.5, 4)),
        ]);
        for model in [
            fit_dlda(&set, 2).unwrap(),
            fit_kpca(&set, 2, None).unwrap(),
            openset_model(&set).unwrap(),
        ] {
            let json = serde_json::to_string(&model).unwrap();
            let back: SubspaceModel = serde_json::from_str(&json).unwrap();
            let probe: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
            let a = project(&model, &probe).unwrap();
            let b = project(&back, &probe).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
