//! Dataset bundle: interactions, knowledge graph and item texts.

mod corpus;
mod interactions;
mod kg;
mod synth;

use std::path::Path;

pub use corpus::{ItemCorpus, ITEMS_FILE};
pub use interactions::{
    format_lists, write_lists, ColdStart, InteractionStore, Split, SplitFile, SplitSet, UserLists,
    COLD_HISTORY_FILE, COLD_TEST_FILE, TEST_FILE, TRAIN_FILE, VALID_FILE,
};
pub use kg::{KnowledgeGraph, Triplet, KG_FILE};
pub use synth::{make_synthetic_dataset, SynthSpec, SynthSummary};

use crate::error::{Error, Result};

/// Everything a training or evaluation run reads from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub interactions: InteractionStore,
    pub kg: KnowledgeGraph,
    pub corpus: ItemCorpus,
}

/// Counts in the order a dataset summary table lists them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
    pub interactions: usize,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "users\titems\tentities\trelations\ttriplets\tinteractions")?;
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.users, self.items, self.entities, self.relations, self.triplets, self.interactions
        )
    }
}

impl Dataset {
    /// Assembles a bundle, checking that items fit inside the entity range
    /// and that every described item exists.
    pub fn new(interactions: InteractionStore, kg: KnowledgeGraph, corpus: ItemCorpus) -> Result<Self> {
        if kg.num_entities() < interactions.num_items() {
            return Err(Error::Invalid(format!(
                "knowledge graph has {} entities but the catalog has {} items",
                kg.num_entities(),
                interactions.num_items()
            )));
        }
        if let Some(max) = corpus.max_id() {
            if max >= interactions.num_items() {
                return Err(Error::ItemOutOfRange {
                    item: max,
                    limit: interactions.num_items(),
                });
            }
        }
        Ok(Dataset {
            interactions,
            kg,
            corpus,
        })
    }

    /// Loads `train.txt` (+ optional splits), `kg.txt` and optional
    /// `items.tsv` from `dir`. Relation and entity counts are inferred.
    pub fn load(dir: &Path) -> Result<Self> {
        let items_path = dir.join(ITEMS_FILE);
        let corpus = if items_path.exists() {
            ItemCorpus::load(&items_path)?
        } else {
            ItemCorpus::default()
        };
        let kg_path = dir.join(KG_FILE);
        if !kg_path.exists() {
            return Err(Error::io(
                &kg_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "knowledge graph file not found"),
            ));
        }
        let (num_relations_raw, kg_entities) = KnowledgeGraph::scan(&kg_path)?;
        let min_items = corpus.max_id().map_or(0, |m| m + 1);
        let interactions = InteractionStore::load_dir(dir, min_items)?;
        let num_entities = kg_entities.max(interactions.num_items());
        let kg = KnowledgeGraph::load(&kg_path, num_relations_raw, Some(num_entities))?;
        Self::new(interactions, kg, corpus)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.interactions.write_dir(dir)?;
        self.kg.write(&dir.join(KG_FILE))?;
        self.corpus.write(&dir.join(ITEMS_FILE))
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            users: self.interactions.num_users(),
            items: self.interactions.num_items(),
            entities: self.kg.num_entities(),
            relations: self.kg.num_relations_raw(),
            triplets: self.kg.triplets().len(),
            interactions: self.interactions.num_interactions(),
        }
    }
}
