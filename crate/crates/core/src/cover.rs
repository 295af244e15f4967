//! Coordinate covers for SM3 second-moment compression.
//!
//! A cover is a family of index groups whose union is every coordinate of the
//! model. SM3 keeps one accumulator per group, so the optimizer state costs
//! `q` floats instead of `d`.

use crate::error::CoverError;

/// Shapes of the tensors making up one model, in flattening order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeManifest {
    pub shapes: Vec<Vec<usize>>,
}

impl ShapeManifest {
    pub fn new(shapes: Vec<Vec<usize>>) -> Self {
        Self { shapes }
    }

    /// A single flat vector of length `d`.
    pub fn flat(d: usize) -> Self {
        Self {
            shapes: vec![vec![d]],
        }
    }

    pub fn num_params(&self) -> usize {
        self.shapes
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.shapes.iter().enumerate() {
            if s.is_empty() || s.contains(&0) {
                return Err(format!("shape {i} ({s:?}) must have positive dimensions"));
            }
        }
        Ok(())
    }

    /// Linear layers, biases and layer norms of a ViT-S/16 encoder
    /// (embed 384, 12 blocks, MLP 1536) plus patch/position embeddings.
    pub fn vit_small() -> Self {
        let e = 384;
        let mut shapes = vec![vec![3 * 16 * 16, e], vec![e], vec![e], vec![197, e]];
        for _ in 0..12 {
            shapes.extend([
                vec![e],
                vec![e],
                vec![e, 3 * e],
                vec![3 * e],
                vec![e, e],
                vec![e],
                vec![e],
                vec![e],
                vec![e, 4 * e],
                vec![4 * e],
                vec![4 * e, e],
                vec![e],
            ]);
        }
        shapes.extend([vec![e], vec![e]]);
        Self { shapes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverPolicy {
    /// One group per coordinate; SM3 is then exact AdaGrad.
    Singleton,
    /// One group per row and one per column of a matrix.
    RowCol,
    /// Singleton for vectors, row/column for matrices.
    Auto,
}

impl CoverPolicy {
    pub fn name(self) -> &'static str {
        match self {
            CoverPolicy::Singleton => "singleton",
            CoverPolicy::RowCol => "row_col",
            CoverPolicy::Auto => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "singleton" => Some(CoverPolicy::Singleton),
            "row_col" => Some(CoverPolicy::RowCol),
            "auto" | "default" => Some(CoverPolicy::Auto),
            _ => None,
        }
    }
}

/// Groups `S_1..S_q` over `[0, d)` with a per-coordinate reverse index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cover {
    d: usize,
    groups: Vec<Vec<usize>>,
    /// For each coordinate, ascending ids of the groups containing it.
    membership: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverStats {
    pub q: usize,
    /// Extra second-moment floats per model float.
    pub fraction: f64,
}

impl Cover {
    /// Build a cover from explicit groups, deriving the reverse index.
    /// Out-of-range entries are kept out of the index and reported by [`Cover::validate`].
    pub fn from_groups(groups: Vec<Vec<usize>>, d: usize) -> Self {
        let mut membership = vec![Vec::new(); d];
        for (b, group) in groups.iter().enumerate() {
            for &j in group {
                if j < d && membership[j].last() != Some(&b) {
                    membership[j].push(b);
                }
            }
        }
        Self {
            d,
            groups,
            membership,
        }
    }

    /// Build from both halves without reconciling them.
    pub fn from_parts(groups: Vec<Vec<usize>>, membership: Vec<Vec<usize>>) -> Self {
        Self {
            d: membership.len(),
            groups,
            membership,
        }
    }

    pub fn singleton(d: usize) -> Self {
        Self::from_groups((0..d).map(|j| vec![j]).collect(), d)
    }

    /// Row groups `0..m` then column groups `m..m+n` over a row-major `m x n` matrix.
    pub fn row_col(m: usize, n: usize) -> Self {
        let mut groups: Vec<Vec<usize>> = (0..m).map(|r| (r * n..(r + 1) * n).collect()).collect();
        groups.extend((0..n).map(|c| (0..m).map(|r| r * n + c).collect()));
        Self::from_groups(groups, m * n)
    }

    pub fn for_manifest(manifest: &ShapeManifest, policy: CoverPolicy) -> Result<Self, CoverError> {
        let mut groups = Vec::new();
        let mut offset = 0;
        for shape in &manifest.shapes {
            let part = build_cover(shape, policy)?;
            groups.extend(
                part.groups
                    .into_iter()
                    .map(|g| g.into_iter().map(|j| j + offset).collect::<Vec<_>>()),
            );
            offset += part.d;
        }
        Ok(Self::from_groups(groups, offset))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Groups covering coordinate `j`, ascending.
    pub fn covering(&self, j: usize) -> &[usize] {
        &self.membership[j]
    }

    pub fn stats(&self) -> CoverStats {
        cover_stats(self, self.d)
    }

    pub fn validate(&self) -> Result<(), CoverError> {
        validate_cover(self, self.d)
    }
}

/// Cover for one tensor shape under `policy`.
pub fn build_cover(shape: &[usize], policy: CoverPolicy) -> Result<Cover, CoverError> {
    let d: usize = shape.iter().product();
    match (policy, shape) {
        (CoverPolicy::Singleton, _) => Ok(Cover::singleton(d)),
        (CoverPolicy::RowCol | CoverPolicy::Auto, [m, n]) => Ok(Cover::row_col(*m, *n)),
        (CoverPolicy::Auto, [_]) => Ok(Cover::singleton(d)),
        _ => Err(CoverError::NotMatrix(shape.to_vec())),
    }
}

pub fn cover_stats(cover: &Cover, d: usize) -> CoverStats {
    let q = cover.num_groups();
    CoverStats {
        q,
        fraction: q as f64 / d as f64,
    }
}

/// Check that `cover` is a full cover of `[0, d)` and that its reverse index
/// agrees with its groups. Overlapping groups are allowed.
pub fn validate_cover(cover: &Cover, d: usize) -> Result<(), CoverError> {
    for (b, group) in cover.groups.iter().enumerate() {
        if group.is_empty() {
            return Err(CoverError::EmptyGroup(b));
        }
        if let Some(&j) = group.iter().find(|&&j| j >= d) {
            return Err(CoverError::OutOfRange {
                group: b,
                coordinate: j,
                d,
            });
        }
    }
    if cover.membership.len() != d {
        return Err(CoverError::InconsistentIndex(cover.membership.len().min(d)));
    }
    for (j, owners) in cover.membership.iter().enumerate() {
        if owners.is_empty() {
            return Err(CoverError::Uncovered(j));
        }
        let sorted = owners.windows(2).all(|w| w[0] < w[1]);
        if !sorted
            || owners
                .iter()
                .any(|&b| b >= cover.groups.len() || !cover.groups[b].contains(&j))
        {
            return Err(CoverError::InconsistentIndex(j));
        }
    }
    // Every (group, coordinate) pair must appear in the index.
    for (b, group) in cover.groups.iter().enumerate() {
        for &j in group {
            if cover.membership[j].binary_search(&b).is_err() {
                return Err(CoverError::InconsistentIndex(j));
            }
        }
    }
    Ok(())
}
