//! Knowledge graph in compressed adjacency form with materialized inverse
//! relations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const KG_FILE: &str = "kg.txt";

/// A raw `(head, relation, tail)` triplet.
pub type Triplet = (usize, usize, usize);

/// Immutable relational graph. Item `i` is entity `i`.
///
/// Every stored raw triplet `(h, r, t)` contributes the edge `h -> (r, t)` and
/// its inverse `t -> (r + num_relations_raw, h)`. Each adjacency list is sorted
/// by `(relation, tail)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraph {
    num_entities: usize,
    num_relations_raw: usize,
    triplets: Vec<Triplet>,
    offsets: Vec<usize>,
    relations: Vec<usize>,
    tails: Vec<usize>,
}

impl KnowledgeGraph {
    /// Builds the graph; triplets are sorted and deduplicated.
    pub fn from_triplets(
        num_entities: usize,
        num_relations_raw: usize,
        mut triplets: Vec<Triplet>,
    ) -> Result<Self> {
        for &(h, r, t) in &triplets {
            if r >= num_relations_raw {
                return Err(Error::RelationOutOfRange {
                    relation: r,
                    limit: num_relations_raw,
                });
            }
            for e in [h, t] {
                if e >= num_entities {
                    return Err(Error::EntityOutOfRange {
                        entity: e,
                        limit: num_entities,
                    });
                }
            }
        }
        triplets.sort_unstable();
        triplets.dedup();

        let mut edges: Vec<(usize, usize, usize)> = Vec::with_capacity(triplets.len() * 2);
        for &(h, r, t) in &triplets {
            edges.push((h, r, t));
            edges.push((t, r + num_relations_raw, h));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut offsets = vec![0; num_entities + 1];
        for &(h, _, _) in &edges {
            offsets[h + 1] += 1;
        }
        for i in 0..num_entities {
            offsets[i + 1] += offsets[i];
        }
        let relations = edges.iter().map(|e| e.1).collect();
        let tails = edges.iter().map(|e| e.2).collect();
        Ok(KnowledgeGraph {
            num_entities,
            num_relations_raw,
            triplets,
            offsets,
            relations,
            tails,
        })
    }

    pub fn parse_str(
        text: &str,
        origin: &Path,
        num_relations_raw: usize,
        num_entities: Option<usize>,
    ) -> Result<Self> {
        let mut triplets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split([' ', '\t']).filter(|f| !f.is_empty()).collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("expected `head relation tail`, found {} fields", fields.len()),
                ));
            }
            let mut ids = [0usize; 3];
            for (slot, f) in ids.iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|_| {
                    Error::parse(origin, lineno + 1, format!("expected a non-negative integer id, found `{f}`"))
                })?;
            }
            if ids[1] >= num_relations_raw {
                return Err(Error::RelationOutOfRange {
                    relation: ids[1],
                    limit: num_relations_raw,
                });
            }
            triplets.push((ids[0], ids[1], ids[2]));
        }
        let inferred = triplets.iter().map(|&(h, _, t)| h.max(t) + 1).max().unwrap_or(0);
        Self::from_triplets(num_entities.unwrap_or(inferred), num_relations_raw, triplets)
    }

    /// Loads `head relation tail` lines. When `num_entities` is `None` the
    /// count is the largest referenced id plus one.
    pub fn load(path: &Path, num_relations_raw: usize, num_entities: Option<usize>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path, num_relations_raw, num_entities)
    }

    /// Scans a KG file for the largest relation and entity id so the caller
    /// can size the graph before loading.
    pub fn scan(path: &Path) -> Result<(usize, usize)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (mut max_rel, mut max_ent) = (None::<usize>, None::<usize>);
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split([' ', '\t']).filter(|f| !f.is_empty()).collect();
            if fields.is_empty() {
                continue;
            }
            let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[h, r, t]) => {
                    max_rel = max_rel.max(Some(r));
                    max_ent = max_ent.max(Some(h.max(t)));
                }
                _ => return Err(Error::parse(path, lineno + 1, "expected `head relation tail`")),
            }
        }
        Ok((max_rel.map_or(0, |r| r + 1), max_ent.map_or(0, |e| e + 1)))
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations_raw(&self) -> usize {
        self.num_relations_raw
    }

    /// Relation count after inverse doubling.
    pub fn num_relations(&self) -> usize {
        2 * self.num_relations_raw
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn num_edges(&self) -> usize {
        self.tails.len()
    }

    pub fn degree(&self, entity: usize) -> usize {
        self.offsets[entity + 1] - self.offsets[entity]
    }

    /// `(relation, tail)` pairs leaving `entity`.
    pub fn neighbors(&self, entity: usize) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        let range = self.offsets[entity]..self.offsets[entity + 1];
        self.relations[range.clone()]
            .iter()
            .copied()
            .zip(self.tails[range].iter().copied())
    }

    /// All materialized edges `(head, relation, tail)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.num_entities).flat_map(move |h| self.neighbors(h).map(move |(r, t)| (h, r, t)))
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for &(h, r, t) in &self.triplets {
            let _ = writeln!(out, "{h} {r} {t}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.format()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_doubling() {
        let kg = KnowledgeGraph::from_triplets(2, 1, vec![(0, 0, 1)]).unwrap();
        assert_eq!(kg.num_relations(), 2);
        assert_eq!(kg.neighbors(0).collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(kg.neighbors(1).collect::<Vec<_>>(), vec![(1, 0)]);
    }

    #[test]
    fn empty_file_is_valid() {
        let kg = KnowledgeGraph::parse_str("", Path::new("kg.txt"), 3, None).unwrap();
        assert_eq!(kg.num_edges(), 0);
        assert_eq!(kg.num_entities(), 0);
    }

    #[test]
    fn relation_out_of_range() {
        let err = KnowledgeGraph::parse_str("0 5 1\n", Path::new("kg.txt"), 3, None).unwrap_err();
        assert_eq!(err.to_string(), "relation 5 ≥ 3");
    }

    #[test]
    fn entity_beyond_declared_count() {
        let err = KnowledgeGraph::parse_str("0 0 9\n", Path::new("kg.txt"), 1, Some(4)).unwrap_err();
        assert!(matches!(err, Error::EntityOutOfRange { entity: 9, limit: 4 }));
    }

    #[test]
    fn adjacency_sorted_by_relation_then_tail() {
        let kg = KnowledgeGraph::from_triplets(5, 2, vec![(0, 1, 2), (0, 0, 4), (0, 0, 3), (0, 1, 1)]).unwrap();
        let adj: Vec<_> = kg.neighbors(0).collect();
        let mut sorted = adj.clone();
        sorted.sort_unstable();
        assert_eq!(adj, sorted);
        assert_eq!(kg.degree(0), 4);
    }

    #[test]
    fn inverse_closure_by_full_scan() {
        let kg = KnowledgeGraph::from_triplets(6, 3, vec![(0, 0, 1), (1, 2, 5), (3, 1, 3), (4, 0, 2)]).unwrap();
        let edges: std::collections::HashSet<_> = kg.edges().collect();
        for &(h, r, t) in &edges {
            if r < kg.num_relations_raw() {
                assert!(edges.contains(&(t, r + kg.num_relations_raw(), h)));
            }
        }
    }

    #[test]
    fn scan_infers_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kg.txt");
        fs::write(&p, "0 2 7\n3 0 1\n").unwrap();
        assert_eq!(KnowledgeGraph::scan(&p).unwrap(), (3, 8));
    }
}
