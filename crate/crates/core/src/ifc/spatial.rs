//! Spatial decomposition (project / site / building / storey / space).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::step::StepFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpatialKind {
    Project,
    Site,
    Building,
    Storey,
    Space,
}

impl SpatialKind {
    pub fn from_type_name(ty: &str) -> Option<Self> {
        Some(match ty {
            "IFCPROJECT" => SpatialKind::Project,
            "IFCSITE" => SpatialKind::Site,
            "IFCBUILDING" => SpatialKind::Building,
            "IFCBUILDINGSTOREY" => SpatialKind::Storey,
            "IFCSPACE" => SpatialKind::Space,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialNode {
    pub entity_id: u64,
    pub kind: SpatialKind,
    pub name: String,
    pub long_name: Option<String>,
    /// Storey elevation as stored in the file (project length units).
    pub elevation: Option<f64>,
    pub children: Vec<SpatialNode>,
    /// Elements placed directly in this node through
    /// IFCRELCONTAINEDINSPATIALSTRUCTURE, ascending by id.
    pub contained_elements: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpatialError {
    #[error("model has no IFCPROJECT")]
    MissingProject,
    #[error("model has more than one IFCPROJECT: {0:?}")]
    MultipleProjects(Vec<u64>),
    #[error("aggregation cycle through #{0}")]
    CyclicAggregation(u64),
}

impl SpatialNode {
    /// Depth-first, pre-order.
    pub fn walk(&self) -> Vec<&SpatialNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn storeys(&self) -> Vec<&SpatialNode> {
        self.walk()
            .into_iter()
            .filter(|n| n.kind == SpatialKind::Storey)
            .collect()
    }

    pub fn find(&self, entity_id: u64) -> Option<&SpatialNode> {
        self.walk().into_iter().find(|n| n.entity_id == entity_id)
    }

    /// Elements contained in this node or any node below it.
    pub fn elements_in_subtree(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .walk()
            .into_iter()
            .flat_map(|n| n.contained_elements.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn build_spatial_tree(file: &StepFile) -> Result<SpatialNode, SpatialError> {
    let projects: Vec<u64> = file.of_type("IFCPROJECT").map(|e| e.id).collect();
    let root = match projects.as_slice() {
        [] => return Err(SpatialError::MissingProject),
        [one] => *one,
        _ => return Err(SpatialError::MultipleProjects(projects)),
    };

    // IFCRELAGGREGATES(GlobalId, OwnerHistory, Name, Description, RelatingObject, RelatedObjects)
    let mut decomposes: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for rel in file.of_type("IFCRELAGGREGATES") {
        if let Some(parent) = rel.reference(4) {
            decomposes
                .entry(parent)
                .or_default()
                .extend(rel.references(5));
        }
    }

    // IFCRELCONTAINEDINSPATIALSTRUCTURE(GlobalId, OwnerHistory, Name, Description,
    //                                  RelatedElements, RelatingStructure)
    let mut contained: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut placed: HashSet<u64> = HashSet::new();
    for rel in file.of_type("IFCRELCONTAINEDINSPATIALSTRUCTURE") {
        let Some(structure) = rel.reference(5) else {
            continue;
        };
        for element in rel.references(4) {
            if placed.insert(element) {
                contained.entry(structure).or_default().push(element);
            } else {
                log::warn!("element #{element} is contained in more than one spatial structure; keeping the first");
            }
        }
    }
    for list in contained.values_mut() {
        list.sort_unstable();
    }

    let mut on_path = HashSet::new();
    build_node(file, root, &decomposes, &contained, &mut on_path)
}

fn build_node(
    file: &StepFile,
    id: u64,
    decomposes: &BTreeMap<u64, BTreeSet<u64>>,
    contained: &BTreeMap<u64, Vec<u64>>,
    on_path: &mut HashSet<u64>,
) -> Result<SpatialNode, SpatialError> {
    if !on_path.insert(id) {
        return Err(SpatialError::CyclicAggregation(id));
    }
    let entity = file.get(id).expect("spatial ids come from the entity map");
    let kind = SpatialKind::from_type_name(&entity.type_name).expect("caller checks kind");

    // IfcProject: Name 2, LongName 5. Spatial elements: Name 2, LongName 7,
    // IfcBuildingStorey.Elevation 9.
    let long_name_index = if kind == SpatialKind::Project { 5 } else { 7 };
    let elevation = if kind == SpatialKind::Storey {
        entity.number(9)
    } else {
        None
    };

    let mut children = Vec::new();
    if let Some(kids) = decomposes.get(&id) {
        for &child in kids {
            let Some(child_entity) = file.get(child) else {
                continue;
            };
            match SpatialKind::from_type_name(&child_entity.type_name) {
                Some(SpatialKind::Project) => return Err(SpatialError::CyclicAggregation(child)),
                Some(_) => children.push(build_node(file, child, decomposes, contained, on_path)?),
                None => {}
            }
        }
    }
    children.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then_with(|| {
                let ea = a.elevation.unwrap_or(f64::INFINITY);
                let eb = b.elevation.unwrap_or(f64::INFINITY);
                ea.total_cmp(&eb)
            })
            .then(a.entity_id.cmp(&b.entity_id))
    });

    on_path.remove(&id);
    Ok(SpatialNode {
        entity_id: id,
        kind,
        name: entity.text(2).unwrap_or_default().to_string(),
        long_name: entity.text(long_name_index).map(str::to_string),
        elevation,
        children,
        contained_elements: contained.get(&id).cloned().unwrap_or_default(),
    })
}
