//! JSON document for trained maps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::som::{Node, NodeId, Params, Phase, SomModel};

const FORMAT: &str = "altsom-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    m: usize,
    phase: Phase,
    nwins: u64,
    next_id: u64,
    params: Params,
    class_names: Vec<String>,
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
}

impl SomModel {
    /// Lossless JSON rendering: floats are written in shortest round-trip form.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: FORMAT.to_string(),
            version: VERSION,
            m: self.m,
            phase: self.phase,
            nwins: self.nwins,
            next_id: self.next_id,
            params: self.params.clone(),
            class_names: self.class_names.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges(),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<SomModel> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(Error::Contract(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.params.validate()?;
        let mut nodes = doc.nodes;
        nodes.sort_by_key(|n| n.id);
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !seen.insert(n.id) {
                return Err(Error::Contract(format!("duplicate node id {}", n.id)));
            }
            for v in [&n.center, &n.relevance, &n.delta, &n.delta_hat] {
                if v.len() != doc.m {
                    return Err(Error::Dimension {
                        expected: doc.m,
                        got: v.len(),
                    });
                }
            }
            if n.id.0 >= doc.next_id {
                return Err(Error::Contract(format!("node id {} not below next_id", n.id)));
            }
        }
        let mut model = SomModel {
            nodes,
            connections: BTreeMap::new(),
            nwins: doc.nwins,
            m: doc.m,
            params: doc.params,
            phase: doc.phase,
            next_id: doc.next_id,
            class_names: doc.class_names,
        };
        for (a, b) in doc.edges {
            if a == b || !seen.contains(&a) || !seen.contains(&b) {
                return Err(Error::Contract(format!("invalid edge {a}-{b}")));
            }
            model.connect(a, b);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SomModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SomModel::from_json(&text)
    }
}
