//! Latent projection, cosine retrieval, ranking metrics, annotation and
//! classification evaluation, topic reports, and the LSI / raw-feature
//! baselines.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gmf::{annotate, GmfConfig};
use crate::linalg::{truncated_svd, Matrix};
use crate::math::{dot, norm};
use crate::model::{hidden_conditional_mean, HarmoniumParams};

/// One latent vector per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub rows: Matrix,
    pub ids: Vec<String>,
}

impl LatentMatrix {
    pub fn new(rows: Matrix, ids: Vec<String>) -> Result<Self> {
        if rows.rows() != ids.len() {
            return Err(Error::Shape(format!("{} rows for {} ids", rows.rows(), ids.len())));
        }
        if !rows.is_finite() {
            return Err(Error::Shape("latent matrix has non-finite entries".into()));
        }
        Ok(Self { rows, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        self.rows.row(n)
    }

    pub fn subset(&self, indices: &[usize]) -> LatentMatrix {
        let mut rows = Matrix::zeros(indices.len(), self.dim());
        for (dst, &src) in indices.iter().enumerate() {
            rows.row_mut(dst).copy_from_slice(self.row(src));
        }
        LatentMatrix {
            rows,
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Row `n` is `Wᵀx_n + Uᵀz_n`.
pub fn project(params: &HarmoniumParams, corpus: &Corpus) -> Result<LatentMatrix> {
    let mut rows = Matrix::zeros(corpus.len(), params.dims.aspects);
    for (n, obs) in corpus.observations.iter().enumerate() {
        rows.row_mut(n)
            .copy_from_slice(&hidden_conditional_mean(params, obs)?);
    }
    LatentMatrix::new(rows, corpus.ids.clone())
}

/// The design matrix rows as a no-reduction baseline representation.
pub fn raw_features(corpus: &Corpus) -> LatentMatrix {
    LatentMatrix {
        rows: corpus.design_matrix(),
        ids: corpus.ids.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsiProjection {
    pub latents: LatentMatrix,
    pub singular_values: Vec<f64>,
    /// Trailing dimensions without support (zero columns).
    pub padded: usize,
}

/// Rank-`aspects` truncated SVD of the design matrix; latent rows are
/// `U·diag(s)` (equivalently `A V`). Shares the SVD routine, seed handling
/// and sign convention with the coupling initialization.
pub fn lsi_project(corpus: &Corpus, aspects: usize, seed: u64) -> Result<LsiProjection> {
    if corpus.is_empty() {
        return Err(Error::Corpus("LSI needs at least one observation".into()));
    }
    let a = corpus.design_matrix();
    if aspects > a.cols() {
        return Err(Error::Config(format!(
            "{aspects} dimensions exceed the {} design-matrix columns",
            a.cols()
        )));
    }
    let svd = truncated_svd(&a, aspects, seed);
    let mut rows = svd.u.clone();
    for n in 0..rows.rows() {
        for (x, s) in rows.row_mut(n).iter_mut().zip(&svd.s) {
            *x *= s;
        }
    }
    Ok(LsiProjection {
        latents: LatentMatrix::new(rows, corpus.ids.clone())?,
        singular_values: svd.s,
        padded: svd.padded,
    })
}

/// Scored candidates in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query: String,
    pub entries: Vec<(String, f64)>,
}

/// Sorts by score descending, ties by ascending id.
pub fn sort_ranked(entries: &mut [(String, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Cosine similarity of `query` against every index row; zero rows score −1.
pub fn retrieve(
    query_id: &str,
    query: &[f64],
    index: &LatentMatrix,
    top_n: usize,
) -> Result<Ranking> {
    if query.len() != index.dim() {
        return Err(Error::Shape(format!(
            "query has {} dims, index has {}",
            query.len(),
            index.dim()
        )));
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroQuery);
    }
    let mut entries: Vec<(String, f64)> = (0..index.len())
        .map(|n| {
            let row = index.row(n);
            let rn = norm(row);
            let score = if rn == 0.0 {
                -1.0
            } else {
                dot(query, row) / (qn * rn)
            };
            (index.ids[n].clone(), score)
        })
        .collect();
    sort_ranked(&mut entries);
    entries.truncate(top_n);
    Ok(Ranking {
        query: query_id.to_string(),
        entries,
    })
}

/// Non-interpolated average precision: the sum of precision at each
/// relevant item's rank, divided by the total number of relevant items.
pub fn average_precision(ranking: &Ranking, relevant: &BTreeSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, (id, _)) in ranking.entries.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// `(recall, precision)` after each rank.
pub fn precision_recall_curve(
    ranking: &Ranking,
    relevant: &BTreeSet<String>,
) -> Result<Vec<(f64, f64)>> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    let total = relevant.len() as f64;
    let mut hits = 0usize;
    Ok(ranking
        .entries
        .iter()
        .enumerate()
        .map(|(r, (id, _))| {
            if relevant.contains(id) {
                hits += 1;
            }
            (hits as f64 / total, hits as f64 / (r + 1) as f64)
        })
        .collect())
}

/// Recall levels 0.0, 0.1, ..., 1.0.
pub const RECALL_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Interpolated precision (max precision at recall ≥ r) on [`RECALL_GRID`].
pub fn eleven_point(curve: &[(f64, f64)]) -> [f64; 11] {
    let mut out = [0.0; 11];
    for (slot, &r) in out.iter_mut().zip(RECALL_GRID.iter()) {
        *slot = curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|p| p.1)
            .fold(0.0, f64::max);
    }
    out
}

/// Query / index partition by observation position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub queries: Vec<usize>,
    pub index: Vec<usize>,
}

impl Split {
    /// Even positions go to the index, odd positions become queries.
    pub fn alternating(n: usize) -> Self {
        Self {
            index: (0..n).step_by(2).collect(),
            queries: (1..n).step_by(2).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub mean_ap: f64,
    pub per_query: Vec<(String, f64)>,
    /// Mean interpolated precision on [`RECALL_GRID`].
    pub pr_curve: [f64; 11],
    /// Queries whose label has no index example.
    pub skipped: Vec<String>,
}

/// Each query ranks the whole index by cosine similarity; relevant items are
/// the index rows with the query's label.
pub fn retrieval_eval(
    latents: &LatentMatrix,
    labels: &[String],
    split: &Split,
) -> Result<RetrievalReport> {
    if labels.len() != latents.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} latent rows",
            labels.len(),
            latents.len()
        )));
    }
    let index = latents.subset(&split.index);
    let mut by_label: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for &i in &split.index {
        by_label
            .entry(labels[i].as_str())
            .or_default()
            .insert(latents.ids[i].clone());
    }
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    let mut pr = [0.0; 11];
    for &q in &split.queries {
        let qid = &latents.ids[q];
        let Some(relevant) = by_label.get(labels[q].as_str()) else {
            skipped.push(qid.clone());
            continue;
        };
        let ranking = match retrieve(qid, latents.row(q), &index, index.len()) {
            Ok(r) => r,
            Err(Error::ZeroQuery) => {
                // A zero query has no direction; rank index in id order.
                let mut entries: Vec<(String, f64)> =
                    index.ids.iter().map(|id| (id.clone(), 0.0)).collect();
                sort_ranked(&mut entries);
                Ranking {
                    query: qid.clone(),
                    entries,
                }
            }
            Err(e) => return Err(e),
        };
        let ap = average_precision(&ranking, relevant)?;
        let curve = eleven_point(&precision_recall_curve(&ranking, relevant)?);
        for (acc, v) in pr.iter_mut().zip(curve) {
            *acc += v;
        }
        per_query.push((qid.clone(), ap));
    }
    let n = per_query.len();
    let mean_ap = if n == 0 {
        0.0
    } else {
        per_query.iter().map(|p| p.1).sum::<f64>() / n as f64
    };
    if n > 0 {
        pr.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(RetrievalReport {
        mean_ap,
        per_query,
        pr_curve: pr,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationReport {
    /// `(top_n, mean AP over evaluated images)`.
    pub by_top_n: Vec<(usize, f64)>,
    /// Ids skipped because they had no words or the solve failed.
    pub skipped: Vec<String>,
}

/// For every test image, ranks words with [`annotate`] and scores the
/// top-`n` list by average precision against the words present (`x_i > 0`).
pub fn annotation_eval(
    params: &HarmoniumParams,
    test: &Corpus,
    top_n_grid: &[usize],
    config: &GmfConfig,
) -> Result<AnnotationReport> {
    let m = params.dims.words;
    let mut sums = vec![0.0; top_n_grid.len()];
    let mut evaluated = 0usize;
    let mut skipped = Vec::new();
    for (obs, id) in test.observations.iter().zip(&test.ids) {
        let truth: BTreeSet<String> = obs
            .x
            .nonzeros()
            .iter()
            .map(|&(i, _)| i.to_string())
            .collect();
        if truth.is_empty() {
            skipped.push(id.clone());
            continue;
        }
        let full = match annotate(params, &obs.z, m, config) {
            Ok(r) => r,
            Err(Error::Divergence { .. } | Error::RateOverflow { .. }) => {
                skipped.push(id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        for (slot, &n) in sums.iter_mut().zip(top_n_grid) {
            let ranking = Ranking {
                query: id.clone(),
                entries: full
                    .iter()
                    .take(n)
                    .map(|&(i, s)| (i.to_string(), s))
                    .collect(),
            };
            *slot += average_precision(&ranking, &truth)?;
        }
        evaluated += 1;
    }
    let by_top_n = top_n_grid
        .iter()
        .zip(sums)
        .map(|(&n, s)| (n, if evaluated == 0 { 0.0 } else { s / evaluated as f64 }))
        .collect();
    Ok(AnnotationReport { by_top_n, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyReport {
    pub accuracy: f64,
    /// Sorted label set; indexes the confusion matrix.
    pub labels: Vec<String>,
    /// `confusion[(true, predicted)]` counts.
    pub confusion: Matrix,
}

/// Euclidean nearest-centroid classifier. Ties go to the label that sorts
/// first.
pub fn nearest_centroid_eval(
    latents: &LatentMatrix,
    labels: &[String],
    train: &[usize],
    test: &[usize],
) -> Result<ClassifyReport> {
    if labels.len() != latents.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} latent rows",
            labels.len(),
            latents.len()
        )));
    }
    let dim = latents.dim();
    let mut centroids: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for &i in train {
        let e = centroids
            .entry(labels[i].as_str())
            .or_insert_with(|| (vec![0.0; dim], 0));
        for (c, v) in e.0.iter_mut().zip(latents.row(i)) {
            *c += v;
        }
        e.1 += 1;
    }
    for (sum, count) in centroids.values_mut() {
        sum.iter_mut().for_each(|v| *v /= *count as f64);
    }
    for &i in test {
        if !centroids.contains_key(labels[i].as_str()) {
            return Err(Error::UnseenLabel(labels[i].clone()));
        }
    }
    let names: Vec<String> = centroids.keys().map(|s| s.to_string()).collect();
    let mut confusion = Matrix::zeros(names.len(), names.len());
    let mut correct = 0usize;
    for &i in test {
        let x = latents.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, (centroid, _)) in centroids.values().enumerate() {
            let d: f64 = x.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        let truth = names.iter().position(|n| *n == labels[i]).unwrap_or(0);
        confusion[(truth, best)] += 1.0;
        if truth == best {
            correct += 1;
        }
    }
    Ok(ClassifyReport {
        accuracy: if test.is_empty() {
            0.0
        } else {
            correct as f64 / test.len() as f64
        },
        labels: names,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectTopic {
    pub aspect: usize,
    /// `(word, W_ij)`, descending.
    pub words: Vec<(String, f64)>,
    /// `(observation id, γ_j)`, descending.
    pub documents: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicReport {
    pub aspects: Vec<AspectTopic>,
}

impl fmt::Display for TopicReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.aspects {
            write!(f, "aspect {}\twords:", t.aspect)?;
            for (w, s) in &t.words {
                write!(f, " {w}({s:.4})")?;
            }
            write!(f, "\tdocs:")?;
            for (d, s) in &t.documents {
                write!(f, " {d}({s:.4})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Per aspect: the `top_words` words with the largest coupling and the
/// `top_docs` observations with the largest projection.
pub fn topic_report(
    params: &HarmoniumParams,
    corpus: &Corpus,
    top_words: usize,
    top_docs: usize,
) -> Result<TopicReport> {
    if corpus.words() != params.dims.words {
        return Err(Error::Shape("corpus vocabulary does not match the model".into()));
    }
    let latents = project(params, corpus)?;
    let aspects = (0..params.dims.aspects)
        .map(|j| {
            let mut words: Vec<(String, f64)> = (0..params.dims.words)
                .map(|i| (corpus.vocab[i].clone(), params.w[(i, j)]))
                .collect();
            sort_ranked(&mut words);
            words.truncate(top_words);
            let mut documents: Vec<(String, f64)> = (0..latents.len())
                .map(|n| (latents.ids[n].clone(), latents.row(n)[j]))
                .collect();
            sort_ranked(&mut documents);
            documents.truncate(top_docs);
            AspectTopic {
                aspect: j,
                words,
                documents,
            }
        })
        .collect();
    Ok(TopicReport { aspects })
}
