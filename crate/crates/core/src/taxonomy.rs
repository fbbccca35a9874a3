//! Fault taxonomy trees, lowest-common-ancestor distances, and soft-label
//! embeddings.
//!
//! Leaf classes are indexed depth-first left-to-right as they appear in the
//! taxonomy document, which fixes the class indexing for every downstream
//! consumer. All leaves must sit at the same depth; trees with uneven leaf
//! depths are rejected at construction.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nested-object document form of a taxonomy: a node name plus child nodes.
/// Leaves are nodes with an empty child list. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDoc {
    pub name: String,
    #[serde(default)]
    pub children: Vec<TaxonomyDoc>,
}

/// A validated fault hierarchy with fixed leaf indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyTree {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depths: Vec<usize>,
    /// Node ids of leaves, depth-first left-to-right; position = class index.
    leaves: Vec<usize>,
    height: usize,
}

impl TaxonomyTree {
    /// Parse a taxonomy from its JSON document form.
    pub fn parse(document: &str) -> Result<Self> {
        let doc: TaxonomyDoc = serde_json::from_str(document)
            .map_err(|e| Error::Taxonomy(format!("malformed document: {}", e)))?;
        Self::from_doc(&doc)
    }

    /// Build and validate a tree from its document form.
    pub fn from_doc(doc: &TaxonomyDoc) -> Result<Self> {
        let mut tree = TaxonomyTree {
            names: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
            depths: Vec::new(),
            leaves: Vec::new(),
            height: 0,
        };
        tree.push_node(doc, None, 0);

        if tree.leaves.len() < 2 {
            return Err(Error::Taxonomy(format!(
                "need at least 2 leaf classes, got {}",
                tree.leaves.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &leaf in &tree.leaves {
            if !seen.insert(tree.names[leaf].clone()) {
                return Err(Error::Taxonomy(format!(
                    "duplicate leaf name '{}'",
                    tree.names[leaf]
                )));
            }
        }
        let depth0 = tree.depths[tree.leaves[0]];
        if depth0 == 0 {
            // Unreachable given the K>=2 check, kept for clarity.
            return Err(Error::Taxonomy("root cannot be a leaf".into()));
        }
        for &leaf in &tree.leaves {
            if tree.depths[leaf] != depth0 {
                return Err(Error::Taxonomy(format!(
                    "leaves at unequal depths ({} vs {}); uniform leaf depth required",
                    depth0, tree.depths[leaf]
                )));
            }
        }
        tree.height = depth0;
        Ok(tree)
    }

    fn push_node(&mut self, doc: &TaxonomyDoc, parent: Option<usize>, depth: usize) -> usize {
        let id = self.names.len();
        self.names.push(doc.name.clone());
        self.parents.push(parent);
        self.children.push(Vec::new());
        self.depths.push(depth);
        if doc.children.is_empty() {
            self.leaves.push(id);
        } else {
            for child in &doc.children {
                let cid = self.push_node(child, Some(id), depth + 1);
                self.children[id].push(cid);
            }
        }
        id
    }

    /// Document form of the tree; `parse(to_document())` round-trips losslessly.
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc(0)).expect("taxonomy serializes")
    }

    fn to_doc(&self, node: usize) -> TaxonomyDoc {
        TaxonomyDoc {
            name: self.names[node].clone(),
            children: self.children[node].iter().map(|&c| self.to_doc(c)).collect(),
        }
    }

    /// Number of leaf classes K.
    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Tree height: edge count from the root to any leaf.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn leaf_name(&self, index: usize) -> Result<&str> {
        let node = self.leaf_node(index)?;
        Ok(&self.names[node])
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.leaves.iter().map(|&n| self.names[n].clone()).collect()
    }

    /// Class index of a leaf name, if present.
    pub fn leaf_index(&self, name: &str) -> Option<usize> {
        self.leaves.iter().position(|&n| self.names[n] == name)
    }

    fn leaf_node(&self, index: usize) -> Result<usize> {
        self.leaves.get(index).copied().ok_or_else(|| {
            Error::Taxonomy(format!(
                "leaf index {} out of range (K={})",
                index,
                self.leaves.len()
            ))
        })
    }

    /// Height of the lowest common ancestor of two leaves above the leaf
    /// level: `height - depth(LCA)`. Zero iff `i == j`.
    pub fn lca_levels(&self, i: usize, j: usize) -> Result<usize> {
        let mut a = self.leaf_node(i)?;
        let mut b = self.leaf_node(j)?;
        let mut steps = 0usize;
        while a != b {
            a = self.parents[a].expect("non-root has parent");
            b = self.parents[b].expect("non-root has parent");
            steps += 1;
        }
        Ok(steps)
    }

    /// Normalized LCA distance: `lca_levels(i, j) / height`, in [0, 1].
    pub fn lca_distance(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.lca_levels(i, j)? as f64 / self.height as f64)
    }

    /// Class index of the level-1 ancestor (child of the root) of a leaf.
    /// For depth-1 trees this is the leaf itself.
    pub fn level1_ancestor(&self, leaf_index: usize) -> Result<usize> {
        let mut node = self.leaf_node(leaf_index)?;
        while self.depths[node] > 1 {
            node = self.parents[node].expect("non-root has parent");
        }
        Ok(node)
    }

    /// Node ids of the root's children, in document order.
    pub fn level1_nodes(&self) -> &[usize] {
        &self.children[0]
    }

    /// True if two leaves share the same level-1 ancestor (and differ).
    pub fn are_siblings_under_level1(&self, i: usize, j: usize) -> Result<bool> {
        Ok(i != j && self.level1_ancestor(i)? == self.level1_ancestor(j)?)
    }

    /// New tree with one leaf removed. Internal nodes left childless by the
    /// removal are pruned as well; remaining leaves are re-indexed
    /// depth-first left-to-right.
    pub fn remove_leaf(&self, leaf_index: usize) -> Result<TaxonomyTree> {
        let name = self.leaf_name(leaf_index)?.to_string();
        let doc = self.to_doc(0);
        let pruned = prune_doc(&doc, &name).ok_or_else(|| {
            Error::Taxonomy("removing the leaf would empty the tree".into())
        })?;
        Self::from_doc(&pruned).map_err(|e| {
            Error::Taxonomy(format!("tree invalid after removing '{}': {}", name, e))
        })
    }
}

/// Remove the named leaf and any internal nodes left childless; `None` when
/// the whole subtree vanishes.
fn prune_doc(doc: &TaxonomyDoc, leaf_name: &str) -> Option<TaxonomyDoc> {
    if doc.children.is_empty() {
        if doc.name == leaf_name {
            return None;
        }
        return Some(doc.clone());
    }
    let children: Vec<TaxonomyDoc> = doc
        .children
        .iter()
        .filter_map(|c| prune_doc(c, leaf_name))
        .collect();
    if children.is_empty() {
        return None;
    }
    Some(TaxonomyDoc {
        name: doc.name.clone(),
        children,
    })
}

/// The built-in 14-leaf rolling-defect taxonomy used as the default
/// experiment hierarchy: one level-1 group with three children, four with
/// two, and three with one.
pub fn default_fault_taxonomy() -> TaxonomyTree {
    let doc = r#"{
        "name": "root",
        "children": [
            {"name": "G1", "children": [
                {"name": "A10", "children": []},
                {"name": "A11", "children": []},
                {"name": "A12", "children": []}
            ]},
            {"name": "G2", "children": [
                {"name": "A20", "children": []},
                {"name": "A21", "children": []}
            ]},
            {"name": "G3", "children": [
                {"name": "A30", "children": []},
                {"name": "A31", "children": []}
            ]},
            {"name": "G4", "children": [
                {"name": "A40", "children": []}
            ]},
            {"name": "G5", "children": [
                {"name": "A41", "children": []}
            ]},
            {"name": "G6", "children": [
                {"name": "A50", "children": []},
                {"name": "A51", "children": []}
            ]},
            {"name": "G7", "children": [
                {"name": "A60", "children": []},
                {"name": "A61", "children": []}
            ]},
            {"name": "G8", "children": [
                {"name": "A70", "children": []}
            ]}
        ]
    }"#;
    TaxonomyTree::parse(doc).expect("built-in taxonomy is valid")
}

/// K x K row-stochastic matrix of soft-label embeddings for one beta. Row i
/// holds the soft label of class i: mass concentrated on i and decaying with
/// LCA distance, `exp(-beta * d(k, i))` normalized over k.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    beta: f64,
    values: Array2<f64>,
}

impl SoftLabelMatrix {
    pub fn build(tree: &TaxonomyTree, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Taxonomy(format!(
                "soft-label beta must be positive and finite, got {}",
                beta
            )));
        }
        let k = tree.num_leaves();
        let mut values = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            // Log-space with max subtraction; the diagonal keeps the max at 0
            // so large beta underflows far entries harmlessly.
            let logits: Vec<f64> = (0..k)
                .map(|j| Ok(-beta * tree.lca_distance(j, i)?))
                .collect::<Result<_>>()?;
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for j in 0..k {
                values[(i, j)] = exps[j] / z;
            }
        }
        Ok(SoftLabelMatrix { beta, values })
    }

    /// Degenerate one-hot matrix (the beta -> infinity limit), used when
    /// hierarchical regularization is disabled.
    pub fn one_hot_rows(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Taxonomy(format!("need K >= 2, got {}", k)));
        }
        let mut values = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            values[(i, i)] = 1.0;
        }
        Ok(SoftLabelMatrix {
            beta: f64::INFINITY,
            values,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_classes(&self) -> usize {
        self.values.nrows()
    }

    /// Soft label for true/predicted class `i`.
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }
}

/// One-hot probability vector of length `k_total` with the 1 at `k`.
pub fn one_hot(k_total: usize, k: usize) -> Result<Vec<f64>> {
    if k >= k_total {
        return Err(Error::Taxonomy(format!(
            "class index {} out of range (K={})",
            k, k_total
        )));
    }
    let mut v = vec![0.0; k_total];
    v[k] = 1.0;
    Ok(v)
}
