//! Pointwise and soft correspondences between two shapes.

use crate::error::{Error, Result};

/// Masses below this are dropped from soft rows (followed by renormalization).
pub const PRUNE_MASS: f64 = 1e-12;

/// Allowed deviation of a stored soft row from unit mass.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Sparse nonnegative distribution over the vertices of a shape.
///
/// Entries are kept sorted by vertex index with no duplicates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Distribution {
    entries: Vec<(usize, f64)>,
}

impl Distribution {
    pub fn delta(index: usize) -> Self {
        Distribution { entries: vec![(index, 1.0)] }
    }

    /// Builds a distribution by summing masses per index.
    ///
    /// Duplicate indices are merged in the order they were supplied, so the
    /// result is deterministic for a fixed input order.
    pub fn from_masses(masses: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<(usize, f64)> = masses.into_iter().collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, m) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += m,
                _ => merged.push((i, m)),
            }
        }
        Distribution { entries: merged }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, m)| m).sum()
    }

    pub fn mass_at(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Single support point with (numerically) all of the mass.
    pub fn as_delta(&self) -> Option<usize> {
        match self.entries.as_slice() {
            [(i, _)] => Some(*i),
            _ => None,
        }
    }

    pub fn normalized(mut self) -> Self {
        let total = self.total();
        if total > 0.0 {
            for (_, m) in &mut self.entries {
                *m /= total;
            }
        }
        self
    }

    /// Drops masses below [`PRUNE_MASS`], renormalizing if anything was
    /// dropped.
    pub fn pruned(mut self) -> Self {
        let before = self.entries.len();
        self.entries.retain(|&(_, m)| m >= PRUNE_MASS);
        if self.entries.len() < before {
            self.normalized()
        } else {
            self
        }
    }

    /// Half the L1 distance between two distributions.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(ia, ma)), Some(&(ib, mb))) if ia == ib => {
                    acc += (ma - mb).abs();
                    i += 1;
                    j += 1;
                }
                (Some(&(ia, ma)), Some(&(ib, _))) if ia < ib => {
                    acc += ma;
                    i += 1;
                }
                (Some(&(_, ma)), None) => {
                    acc += ma;
                    i += 1;
                }
                (_, Some(&(_, mb))) => {
                    acc += mb;
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        0.5 * acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Discrete,
    Soft,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapData {
    /// Target vertex per source vertex.
    Discrete(Vec<usize>),
    /// Distribution over target vertices per source vertex.
    Soft(Vec<Distribution>),
}

/// Correspondence from the vertices of `source_id` to those of `target_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMap {
    source_id: String,
    target_id: String,
    target_len: usize,
    data: MapData,
}

impl CorrespondenceMap {
    pub fn discrete(
        source_id: impl Into<String>,
        target_id: impl Into<String>,
        target_len: usize,
        images: Vec<usize>,
    ) -> Result<Self> {
        let map = CorrespondenceMap {
            source_id: source_id.into(),
            target_id: target_id.into(),
            target_len,
            data: MapData::Discrete(images),
        };
        if let MapData::Discrete(images) = &map.data {
            if let Some(&bad) = images.iter().find(|&&t| t >= target_len) {
                return Err(Error::IndexOutOfRange {
                    context: format!("target of map {}", map.label()),
                    index: bad,
                    len: target_len,
                });
            }
        }
        Ok(map)
    }

    /// Soft map; every row must be nonnegative and sum to one within
    /// [`ROW_SUM_TOLERANCE`]. Rows are pruned and renormalized on entry.
    pub fn soft(
        source_id: impl Into<String>,
        target_id: impl Into<String>,
        target_len: usize,
        rows: Vec<Distribution>,
    ) -> Result<Self> {
        let source_id = source_id.into();
        let target_id = target_id.into();
        let label = format!("{source_id}->{target_id}");
        for (r, row) in rows.iter().enumerate() {
            for &(t, m) in row.entries() {
                if t >= target_len {
                    return Err(Error::IndexOutOfRange {
                        context: format!("target of map {label}"),
                        index: t,
                        len: target_len,
                    });
                }
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(Error::InvalidMap {
                        map: label,
                        reason: format!("row {r} has mass {m}"),
                    });
                }
            }
            let sum = row.total();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonNormalizedRow { map: label, row: r, sum });
            }
        }
        let rows = rows.into_iter().map(Distribution::pruned).collect();
        Ok(CorrespondenceMap { source_id, target_id, target_len, data: MapData::Soft(rows) })
    }

    pub fn identity(id: impl Into<String>, len: usize) -> Self {
        let id = id.into();
        CorrespondenceMap {
            source_id: id.clone(),
            target_id: id,
            target_len: len,
            data: MapData::Discrete((0..len).collect()),
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn label(&self) -> String {
        format!("{}->{}", self.source_id, self.target_id)
    }

    pub fn source_len(&self) -> usize {
        match &self.data {
            MapData::Discrete(images) => images.len(),
            MapData::Soft(rows) => rows.len(),
        }
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn kind(&self) -> MapKind {
        match self.data {
            MapData::Discrete(_) => MapKind::Discrete,
            MapData::Soft(_) => MapKind::Soft,
        }
    }

    pub fn data(&self) -> &MapData {
        &self.data
    }

    pub fn as_discrete(&self) -> Option<&[usize]> {
        match &self.data {
            MapData::Discrete(images) => Some(images),
            MapData::Soft(_) => None,
        }
    }

    /// Image of a source vertex; discrete maps yield a delta.
    pub fn image(&self, vertex: usize) -> Distribution {
        match &self.data {
            MapData::Discrete(images) => Distribution::delta(images[vertex]),
            MapData::Soft(rows) => rows[vertex].clone(),
        }
    }

    /// Pushes a distribution on the source shape through this map.
    pub fn push_forward(&self, dist: &Distribution) -> Distribution {
        match &self.data {
            MapData::Discrete(images) => {
                Distribution::from_masses(dist.entries().iter().map(|&(v, m)| (images[v], m)))
            }
            MapData::Soft(rows) => Distribution::from_masses(
                dist.entries()
                    .iter()
                    .flat_map(|&(v, m)| rows[v].entries().iter().map(move |&(t, w)| (t, m * w))),
            ),
        }
    }

    /// Inverse of a discrete bijection.
    pub fn inverse(&self) -> Result<Self> {
        let images = self.as_discrete().ok_or_else(|| Error::InvalidMap {
            map: self.label(),
            reason: "only discrete maps can be inverted".into(),
        })?;
        if images.len() != self.target_len {
            return Err(Error::InvalidMap { map: self.label(), reason: "not a bijection".into() });
        }
        let mut inverse = vec![usize::MAX; self.target_len];
        for (s, &t) in images.iter().enumerate() {
            if inverse[t] != usize::MAX {
                return Err(Error::InvalidMap {
                    map: self.label(),
                    reason: format!("target {t} hit twice"),
                });
            }
            inverse[t] = s;
        }
        CorrespondenceMap::discrete(&self.target_id, &self.source_id, images.len(), inverse)
    }
}

/// `outer ∘ inner`: first apply `inner` (A→B), then `outer` (B→C).
///
/// Discrete∘discrete stays discrete; any soft operand promotes the result to
/// a soft map whose rows are pushforwards of the inner rows.
pub fn compose_maps(outer: &CorrespondenceMap, inner: &CorrespondenceMap) -> Result<CorrespondenceMap> {
    if inner.target_id != outer.source_id || inner.target_len != outer.source_len() {
        return Err(Error::MapMismatch {
            inner_target: inner.target_id.clone(),
            outer_source: outer.source_id.clone(),
        });
    }
    let data = match (&outer.data, &inner.data) {
        (MapData::Discrete(o), MapData::Discrete(i)) => {
            MapData::Discrete(i.iter().map(|&b| o[b]).collect())
        }
        _ => MapData::Soft(
            (0..inner.source_len())
                .map(|v| outer.push_forward(&inner.image(v)).pruned())
                .collect(),
        ),
    };
    Ok(CorrespondenceMap {
        source_id: inner.source_id.clone(),
        target_id: outer.target_id.clone(),
        target_len: outer.target_len,
        data,
    })
}
