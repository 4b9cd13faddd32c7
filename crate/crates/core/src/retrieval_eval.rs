//! Cosine ranking and retrieval metrics.
//!
//! Ranking sorts by descending cosine similarity with ties broken by the
//! ascending gallery index. AP is the hits-based (non-interpolated) form.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{FeatureMatrix, PairedMultimodalDataset};
use crate::error::{Result, XmsError};
use crate::methods::{Modality, SubspaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_index: usize,
    pub gallery_order: Vec<usize>,
    /// Aligned with `gallery_order`; non-increasing.
    pub similarities: Vec<f64>,
}

impl RankedList {
    /// 1-based rank of gallery item `g`.
    pub fn rank_of(&self, g: usize) -> Option<usize> {
        self.gallery_order.iter().position(|&x| x == g).map(|p| p + 1)
    }
}

/// Rankings for every query plus the number of zero-norm vectors met.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub lists: Vec<RankedList>,
    /// Zero-norm query and gallery vectors; each gets similarity −1 against
    /// everything.
    pub zero_norm_vectors: usize,
}

/// Ranks the gallery columns for each query column by cosine similarity.
pub fn rank_by_cosine(queries: &FeatureMatrix, gallery: &FeatureMatrix) -> Result<Ranking> {
    if queries.dim() != gallery.dim() {
        return Err(XmsError::DimensionMismatch {
            context: "query and gallery features".into(),
            expected: gallery.dim(),
            got: queries.dim(),
        });
    }
    if gallery.is_empty() {
        return Err(XmsError::InvalidArgument("empty gallery".into()));
    }
    let q = queries.values();
    let g = gallery.values();
    let qn: Vec<f64> = q.column_iter().map(|c| c.norm()).collect();
    let gn: Vec<f64> = g.column_iter().map(|c| c.norm()).collect();
    let zero_norm_vectors = qn.iter().chain(gn.iter()).filter(|&&v| v == 0.0).count();
    if zero_norm_vectors > 0 {
        log::warn!("{zero_norm_vectors} zero-norm vectors ranked with similarity -1");
    }

    let lists = (0..q.ncols())
        .into_par_iter()
        .map(|i| {
            let qi = q.column(i);
            let sims: Vec<f64> = (0..g.ncols())
                .map(|j| {
                    if qn[i] == 0.0 || gn[j] == 0.0 {
                        -1.0
                    } else {
                        (qi.dot(&g.column(j)) / (qn[i] * gn[j])).clamp(-1.0, 1.0)
                    }
                })
                .collect();
            let mut order: Vec<usize> = (0..g.ncols()).collect();
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
            let similarities = order.iter().map(|&j| sims[j]).collect();
            RankedList {
                query_index: i,
                gallery_order: order,
                similarities,
            }
        })
        .collect();
    Ok(Ranking {
        lists,
        zero_norm_vectors,
    })
}

fn relevance_mask(ranked: &RankedList, relevant: &[usize]) -> Result<Vec<bool>> {
    let n = ranked.gallery_order.len();
    if relevant.is_empty() {
        return Err(XmsError::InvalidArgument(format!(
            "query {} has no relevant gallery items; AP is undefined",
            ranked.query_index
        )));
    }
    let mut mask = vec![false; n];
    for &r in relevant {
        if r >= n {
            return Err(XmsError::IndexOutOfRange { index: r, len: n });
        }
        mask[r] = true;
    }
    Ok(mask)
}

/// Hits-based average precision over the full list.
pub fn average_precision(ranked: &RankedList, relevant: &[usize]) -> Result<f64> {
    average_precision_at(ranked, relevant, None)
}

/// Average precision truncated to the first `cutoff` ranks; the normalizer
/// is `min(|relevant|, cutoff)`.
pub fn average_precision_at(ranked: &RankedList, relevant: &[usize], cutoff: Option<usize>) -> Result<f64> {
    let mask = relevance_mask(ranked, relevant)?;
    let total = mask.iter().filter(|&&m| m).count();
    let depth = cutoff.unwrap_or(mask.len()).min(mask.len());
    if depth == 0 {
        return Err(XmsError::InvalidArgument("AP cutoff must be >= 1".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &g) in ranked.gallery_order.iter().take(depth).enumerate() {
        if mask[g] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total.min(depth) as f64)
}

/// Arithmetic mean of per-query AP values.
pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(XmsError::InvalidArgument("MAP of zero queries".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn match_ranks(ranked: &[RankedList], true_match: &[usize]) -> Result<Vec<usize>> {
    if ranked.len() != true_match.len() {
        return Err(XmsError::PairCountMismatch {
            detail: format!("{} ranked lists, {} true matches", ranked.len(), true_match.len()),
        });
    }
    ranked
        .iter()
        .zip(true_match)
        .map(|(l, &m)| {
            l.rank_of(m).ok_or(XmsError::IndexOutOfRange {
                index: m,
                len: l.gallery_order.len(),
            })
        })
        .collect()
}

/// Fraction of queries whose true match is within the first `k` ranks.
pub fn acc_at_k(ranked: &[RankedList], true_match: &[usize], k: usize) -> Result<f64> {
    let g = ranked.first().map_or(0, |l| l.gallery_order.len());
    if k == 0 || k > g {
        return Err(XmsError::InvalidArgument(format!("K = {k} outside 1..={g}")));
    }
    let ranks = match_ranks(ranked, true_match)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// `acc@K` for every `K = 1..=gallery_size`.
pub fn cmc_curve(ranked: &[RankedList], true_match: &[usize]) -> Result<Vec<f64>> {
    let ranks = match_ranks(ranked, true_match)?;
    if ranks.is_empty() {
        return Err(XmsError::InvalidArgument("CMC of zero queries".into()));
    }
    let g = ranked[0].gallery_order.len();
    let mut counts = vec![0usize; g + 1];
    for r in ranks {
        counts[r] += 1;
    }
    let q = ranked.len() as f64;
    let mut cum = 0usize;
    Ok((1..=g)
        .map(|k| {
            cum += counts[k];
            cum as f64 / q
        })
        .collect())
}

/// Query direction: `a2b` uses modality `a` (photos) as queries against the
/// modality `b` (sketches) gallery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "a2b", alias = "photo_queries_sketch")]
    AToB,
    #[serde(rename = "b2a", alias = "sketch_queries_photo")]
    BToA,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::AToB, Direction::BToA];

    pub fn key(self) -> &'static str {
        match self {
            Direction::AToB => "a2b",
            Direction::BToA => "b2a",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Direction::AToB => "photo_queries_sketch",
            Direction::BToA => "sketch_queries_photo",
        }
    }

    pub fn modalities(self) -> (Modality, Modality) {
        match self {
            Direction::AToB => (Modality::A, Modality::B),
            Direction::BToA => (Modality::B, Modality::A),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Direction {
    type Err = XmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a2b" | "photo_queries_sketch" => Ok(Direction::AToB),
            "b2a" | "sketch_queries_photo" => Ok(Direction::BToA),
            _ => Err(XmsError::Config(format!("unknown direction {s:?} (a2b or b2a)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvaluation {
    pub direction: Direction,
    pub map: f64,
    /// CMC curve, `acc_at_k[K-1]` for `K = 1..=gallery_size`.
    #[serde(rename = "cmc", alias = "acc_at_k")]
    pub acc_at_k: Vec<f64>,
    pub per_query_ap: Vec<f64>,
    #[serde(default)]
    pub zero_norm_vectors: usize,
}

impl RetrievalEvaluation {
    pub fn acc_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.acc_at_k.get(i).copied())
    }
}

/// Ranks projected queries against a projected gallery and scores them.
/// A gallery item is relevant when it shares the query's label; the
/// instance-level match of query `i` is `true_match[i]`.
pub fn evaluate_projected(
    direction: Direction,
    queries: &FeatureMatrix,
    gallery: &FeatureMatrix,
    query_labels: &[usize],
    gallery_labels: &[usize],
    true_match: &[usize],
    map_cutoff: Option<usize>,
) -> Result<RetrievalEvaluation> {
    if query_labels.len() != queries.len() || gallery_labels.len() != gallery.len() {
        return Err(XmsError::PairCountMismatch {
            detail: "labels do not match feature counts".into(),
        });
    }
    let ranking = rank_by_cosine(queries, gallery)?;
    let per_query_ap = ranking
        .lists
        .par_iter()
        .map(|l| {
            let label = query_labels[l.query_index];
            let relevant: Vec<usize> = (0..gallery_labels.len())
                .filter(|&g| gallery_labels[g] == label)
                .collect();
            average_precision_at(l, &relevant, map_cutoff)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RetrievalEvaluation {
        direction,
        map: mean_average_precision(&per_query_ap)?,
        acc_at_k: cmc_curve(&ranking.lists, true_match)?,
        per_query_ap,
        zero_norm_vectors: ranking.zero_norm_vectors,
    })
}

/// Evaluates `model` on paired test data in one direction; the true match of
/// query `i` is gallery item `i`.
pub fn evaluate_model(
    model: &SubspaceModel,
    test: &PairedMultimodalDataset,
    direction: Direction,
    map_cutoff: Option<usize>,
) -> Result<RetrievalEvaluation> {
    let fa = model.project(&test.xa, Modality::A)?;
    let fb = model.project(&test.xb, Modality::B)?;
    let (q, g) = match direction {
        Direction::AToB => (&fa, &fb),
        Direction::BToA => (&fb, &fa),
    };
    let identity: Vec<usize> = (0..test.len()).collect();
    evaluate_projected(direction, q, g, &test.labels, &test.labels, &identity, map_cutoff)
}
