use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Dense index of an item inside one [`ItemCatalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A user reaction class. With the default `K = 2`, `0` is negative (skip)
/// and `1` is positive (click/purchase).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeedbackClass(pub u8);

impl FeedbackClass {
    pub const NEGATIVE: FeedbackClass = FeedbackClass(0);
    pub const POSITIVE: FeedbackClass = FeedbackClass(1);

    pub fn new(index: usize, k: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::contract(format!(
                "feedback class {index} out of range for K={k}"
            )));
        }
        Ok(FeedbackClass(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// One-hot encoding of length `k`.
    pub fn indicator(self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        v[self.index()] = 1.0;
        v
    }

    /// The top class counts as "positive" for binary metrics.
    pub fn is_positive(self, k: usize) -> bool {
        self.index() + 1 == k
    }

    /// Slot of this class inside a K-wide logit block. Blocks list the most
    /// positive class first, so for `K = 2` a block reads `[positive, negative]`.
    pub fn logit_slot(self, k: usize) -> usize {
        k - 1 - self.index()
    }

    pub fn from_logit_slot(slot: usize, k: usize) -> Self {
        FeedbackClass((k - 1 - slot) as u8)
    }
}

/// Item-id → embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogRepr")]
pub struct ItemCatalog {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, ItemId>,
    embeddings: Tensor,
}

#[derive(Deserialize)]
struct CatalogRepr {
    ids: Vec<String>,
    embeddings: Tensor,
}

impl TryFrom<CatalogRepr> for ItemCatalog {
    type Error = Error;

    fn try_from(r: CatalogRepr) -> Result<Self> {
        ItemCatalog::new(r.ids, r.embeddings)
    }
}

impl ItemCatalog {
    /// Builds a catalog; every embedding component must lie strictly inside
    /// `(-1, 1)` and ids must be unique, non-empty and whitespace-free.
    pub fn new(ids: Vec<String>, embeddings: Tensor) -> Result<Self> {
        if ids.len() != embeddings.nrows() {
            return Err(Error::shape(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                embeddings.nrows()
            )));
        }
        if let Some(v) = embeddings.iter().find(|v| v.is_nan() || v.abs() >= 1.0) {
            return Err(Error::contract(format!("embedding component {v} outside (-1, 1)")));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(Error::contract(format!("invalid item id `{id}`")));
            }
            if index.insert(id.clone(), ItemId(i as u32)).is_some() {
                return Err(Error::contract(format!("duplicate item id `{id}`")));
            }
        }
        Ok(Self {
            ids,
            index,
            embeddings: embeddings.as_standard_layout().into_owned(),
        })
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), ItemId(i as u32)))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn resolve(&self, id: &str) -> Result<ItemId> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    pub fn contains(&self, item: ItemId) -> bool {
        item.index() < self.ids.len()
    }

    pub fn check(&self, item: ItemId) -> Result<()> {
        if self.contains(item) {
            Ok(())
        } else {
            Err(Error::UnknownItem(format!("#{}", item.0)))
        }
    }

    pub fn id(&self, item: ItemId) -> &str {
        &self.ids[item.index()]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.ids.len() as u32).map(ItemId)
    }

    pub fn embedding(&self, item: ItemId) -> &[f64] {
        let d = self.dim();
        let i = item.index();
        &self.embeddings.as_slice().expect("row-major catalog")[i * d..(i + 1) * d]
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    /// Keeps only `keep` (in catalog order) and returns the old → new id map.
    pub fn retain(&self, keep: &[bool]) -> (ItemCatalog, Vec<Option<ItemId>>) {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut remap = vec![None; self.len()];
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = Some(ItemId(ids.len() as u32));
                ids.push(self.ids[i].clone());
                rows.extend_from_slice(self.embedding(ItemId(i as u32)));
            }
        }
        let embeddings = Tensor::from_shape_vec((ids.len(), self.dim()), rows).expect("retained rows");
        let mut catalog = ItemCatalog {
            ids,
            index: HashMap::new(),
            embeddings,
        };
        catalog.rebuild_index();
        (catalog, remap)
    }
}
