//! Shared fixtures for unit tests: a hand-checked twelve-string corpus
//! whose tree shape, query answers, and proof brackets are all known, a
//! table-backed embedder with pinned coordinates for that corpus, and a
//! small random-corpus generator.

use std::collections::HashMap;

use crate::embedding::{Embedder, EmbeddedPoint};
use crate::mbtree::{MbTree, TreeLayout};
use crate::sign::DebugSigner;
use crate::vs2::Query;

pub(crate) use crate::workload::{random_corpus, random_word};

/// Twelve strings arranged so that, for q = "mmmm" and θ = 2, the third
/// leaf is the only pruned subtree, the first leaf holds all three
/// similar strings, and the remaining six disclosed strings are false
/// hits.
pub(crate) fn example_corpus() -> Vec<String> {
    [
        "mmmm", "mmmmzzzz", "mmn", "mmnazzz", "mmnn", "mmnnzzzz", "nzzza", "nzzzb",
        "nzzzc", "o", "ozzzz", "pzzzz",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// The example corpus packed three strings per leaf under two internal
/// nodes and a root, pinning the bracket structure tests rely on.
pub(crate) fn example_tree() -> MbTree {
    let layout = TreeLayout {
        leaf_sizes: vec![3, 3, 3, 3],
        internal_arities: vec![vec![2, 2], vec![2]],
    };
    MbTree::build_with_layout(example_corpus(), 3, &layout, &DebugSigner).unwrap()
}

pub(crate) fn example_query() -> Query {
    Query::new("mmmm", 2)
}

/// An embedder that looks coordinates up in a fixed table. Unknown
/// strings panic, which doubles as a guard that tests only embed what
/// they meant to.
pub(crate) struct TableEmbedder {
    dim: usize,
    table: HashMap<String, EmbeddedPoint>,
}

impl TableEmbedder {
    pub(crate) fn new(dim: usize, entries: &[(&str, &[f64])]) -> Self {
        let table = entries
            .iter()
            .map(|(s, p)| {
                assert_eq!(p.len(), dim, "table entry dimension mismatch");
                (s.to_string(), p.to_vec())
            })
            .collect();
        TableEmbedder { dim, table }
    }
}

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, s: &str) -> EmbeddedPoint {
        self.table
            .get(s)
            .unwrap_or_else(|| panic!("no table embedding for {s:?}"))
            .clone()
    }
}

/// Pinned two-dimensional coordinates for the example corpus: the three
/// similar strings sit within scaled distance 2 of the query, one false
/// hit ("mmnazzz") lands close in embedded space, and the other five
/// split into two well-separated clusters of dissimilarity boxes.
pub(crate) fn example_embedder() -> TableEmbedder {
    TableEmbedder::new(
        2,
        &[
            ("mmmm", &[0.0, 0.0]),
            ("mmn", &[1.0, 0.0]),
            ("mmnn", &[0.0, 1.0]),
            ("mmnazzz", &[1.0, 1.0]),
            ("mmmmzzzz", &[5.0, 0.0]),
            ("mmnnzzzz", &[5.5, 0.5]),
            ("o", &[6.0, 0.0]),
            ("ozzzz", &[-5.0, 0.0]),
            ("pzzzz", &[-5.5, -0.5]),
        ],
    )
}

