use std::collections::BTreeMap;

use serde::Serialize;

use super::SceneError;
use crate::sdm::EntityId;

pub const ROOT_LAYER: &str = "city";

/// Canonical tree: `(layer_id, name, parent)` in display order.
const SKELETON: &[(&str, &str, Option<&str>)] = &[
    ("city", "City", None),
    ("above-ground", "Above ground", Some("city")),
    ("above-ground/buildings", "Buildings", Some("above-ground")),
    ("above-ground/roads", "Roads", Some("above-ground")),
    ("underground", "Underground", Some("city")),
    ("underground/pipelines", "Pipelines", Some("underground")),
    ("underground/subway", "Subway", Some("underground")),
    ("networks", "Networks", Some("city")),
    ("networks/power", "Power grid", Some("networks")),
    ("admin", "Administrative regions", Some("city")),
    ("overlays", "Overlays", Some("city")),
    ("overlays/heatmap", "Heat map", Some("overlays")),
    ("overlays/traffic", "Traffic", Some("overlays")),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerNode {
    pub layer_id: String,
    pub name: String,
    pub parent: Option<String>,
    pub visible: bool,
    pub children: Vec<String>,
    /// Scene objects attached to this leaf, sorted.
    pub objects: Vec<EntityId>,
}

impl LayerNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTree {
    nodes: BTreeMap<String, LayerNode>,
}

impl Default for LayerTree {
    fn default() -> Self {
        Self::skeleton()
    }
}

/// Nested view for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct LayerView {
    pub layer_id: String,
    pub name: String,
    pub visible: bool,
    pub effective_visible: bool,
    pub object_count: usize,
    pub children: Vec<LayerView>,
}

impl LayerTree {
    /// The canonical tree with every layer visible and no objects.
    pub fn skeleton() -> Self {
        let mut nodes = BTreeMap::new();
        for (id, name, parent) in SKELETON {
            nodes.insert(
                id.to_string(),
                LayerNode {
                    layer_id: id.to_string(),
                    name: name.to_string(),
                    parent: parent.map(str::to_string),
                    visible: true,
                    children: Vec::new(),
                    objects: Vec::new(),
                },
            );
        }
        for (id, _, parent) in SKELETON {
            if let Some(p) = parent {
                nodes.get_mut(*p).expect("skeleton parents exist").children.push(id.to_string());
            }
        }
        LayerTree { nodes }
    }

    pub fn get(&self, layer_id: &str) -> Option<&LayerNode> {
        self.nodes.get(layer_id)
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn is_leaf(&self, layer_id: &str) -> bool {
        self.nodes.get(layer_id).is_some_and(LayerNode::is_leaf)
    }

    pub(crate) fn attach(&mut self, layer_id: &str, object: EntityId) -> Result<(), SceneError> {
        match self.nodes.get_mut(layer_id) {
            Some(node) if node.is_leaf() => {
                if let Err(pos) = node.objects.binary_search(&object) {
                    node.objects.insert(pos, object);
                }
                Ok(())
            }
            _ => Err(SceneError::OrphanLayer { layer: layer_id.to_string(), object: object.to_string() }),
        }
    }

    pub(crate) fn detach(&mut self, layer_id: &str, object: &EntityId) {
        if let Some(node) = self.nodes.get_mut(layer_id) {
            node.objects.retain(|o| o != object);
        }
    }

    pub fn set_visible(&mut self, layer_id: &str, visible: bool) -> Result<(), SceneError> {
        let node = self.nodes.get_mut(layer_id).ok_or_else(|| SceneError::UnknownLayer(layer_id.to_string()))?;
        node.visible = visible;
        Ok(())
    }

    /// The layer's own flag AND-ed with every ancestor's.
    pub fn effective_visibility(&self, layer_id: &str) -> Result<bool, SceneError> {
        let mut cur = self.nodes.get(layer_id).ok_or_else(|| SceneError::UnknownLayer(layer_id.to_string()))?;
        loop {
            if !cur.visible {
                return Ok(false);
            }
            match &cur.parent {
                Some(p) => cur = &self.nodes[p],
                None => return Ok(true),
            }
        }
    }

    pub fn view(&self) -> LayerView {
        self.view_of(ROOT_LAYER)
    }

    fn view_of(&self, id: &str) -> LayerView {
        let n = &self.nodes[id];
        LayerView {
            layer_id: n.layer_id.clone(),
            name: n.name.clone(),
            visible: n.visible,
            effective_visible: self.effective_visibility(id).unwrap_or(false),
            object_count: n.objects.len(),
            children: n.children.iter().map(|c| self.view_of(c)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_is_all_visible() {
        let t = LayerTree::skeleton();
        assert_eq!(t.get(ROOT_LAYER).unwrap().children.len(), 5);
        for id in t.layer_ids() {
            assert!(t.effective_visibility(id).unwrap(), "{id}");
        }
        assert!(t.is_leaf("admin"));
        assert!(!t.is_leaf("underground"));
    }

    #[test]
    fn parent_off_hides_child() {
        let mut t = LayerTree::skeleton();
        t.set_visible("above-ground", false).unwrap();
        assert!(!t.effective_visibility("above-ground/buildings").unwrap());
        assert!(t.effective_visibility("underground/pipelines").unwrap());
    }

    #[test]
    fn root_off_hides_everything() {
        let mut t = LayerTree::skeleton();
        t.set_visible(ROOT_LAYER, false).unwrap();
        assert!(t.layer_ids().all(|id| !t.effective_visibility(id).unwrap()));
    }

    #[test]
    fn unknown_layer() {
        let t = LayerTree::skeleton();
        assert!(matches!(t.effective_visibility("nope"), Err(SceneError::UnknownLayer(_))));
    }

    #[test]
    fn attach_requires_leaf() {
        let mut t = LayerTree::skeleton();
        let b: EntityId = "building:b1".parse().unwrap();
        t.attach("above-ground/buildings", b.clone()).unwrap();
        assert_eq!(t.get("above-ground/buildings").unwrap().objects, vec![b.clone()]);
        assert!(matches!(t.attach("above-ground", b.clone()), Err(SceneError::OrphanLayer { .. })));
        assert!(matches!(t.attach("rooftops", b), Err(SceneError::OrphanLayer { .. })));
    }
}
