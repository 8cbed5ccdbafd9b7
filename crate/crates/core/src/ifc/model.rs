//! Semantic view over a parsed IFC file: per-element records with storey,
//! direct attributes, property-set values, quantities and space links.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::class::ElementClass;

use super::spatial::{SpatialKind, SpatialNode};
use super::step::{AttrValue, EntityInstance, StepFile};

/// A flattened property or attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum PropValue {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl PropValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    fn from_attr(v: &AttrValue) -> Option<Self> {
        match v {
            AttrValue::Integer(i) => Some(PropValue::Number(*i as f64)),
            AttrValue::Real(r) => Some(PropValue::Number(*r)),
            AttrValue::Text(s) => Some(PropValue::Text(s.clone())),
            AttrValue::Enum(e) => Some(match e.as_str() {
                "T" => PropValue::Bool(true),
                "F" => PropValue::Bool(false),
                other => PropValue::Text(other.to_string()),
            }),
            AttrValue::Typed(_, inner) => PropValue::from_attr(inner),
            _ => None,
        }
    }
}

/// Railings are countable per storey but are not a routable class.
pub const RAILING_TYPES: &[&str] = &["IFCRAILING"];

#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub id: u64,
    pub type_name: String,
    pub name: Option<String>,
    pub long_name: Option<String>,
    /// Storey the element sits on, resolved through spaces when needed.
    pub storey_id: Option<u64>,
    pub storey_name: Option<String>,
    /// Storey elevation for floor records.
    pub elevation: Option<f64>,
    /// Direct schema attributes, e.g. `OverallWidth`.
    pub attributes: BTreeMap<String, PropValue>,
    /// IFCPROPERTYSINGLEVALUE values keyed by property name.
    pub properties: BTreeMap<String, PropValue>,
    /// Scalar quantities keyed by quantity name.
    pub quantities: BTreeMap<String, f64>,
    /// Linked spaces, ascending.
    pub space_ids: Vec<u64>,
}

impl ElementRecord {
    /// Attribute, then quantity, then property with the given name.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.attributes
            .get(key)
            .and_then(PropValue::as_f64)
            .or_else(|| self.quantities.get(key).copied())
            .or_else(|| self.properties.get(key).and_then(PropValue::as_f64))
    }
}

/// Precomputed relationship indexes for one model.
pub struct IfcModel<'a> {
    file: &'a StepFile,
    storey_names: HashMap<u64, String>,
    storey_elevations: HashMap<u64, Option<f64>>,
    /// element or space id -> storey id
    storey_of: HashMap<u64, u64>,
    /// element id -> containing space (direct containment only)
    contained_in_space: HashMap<u64, u64>,
    boundaries: HashMap<u64, BTreeSet<u64>>,
    psets: HashMap<u64, Vec<u64>>,
    skipped_properties: usize,
}

impl<'a> IfcModel<'a> {
    pub fn new(file: &'a StepFile, tree: &SpatialNode) -> Self {
        let mut model = IfcModel {
            file,
            storey_names: HashMap::new(),
            storey_elevations: HashMap::new(),
            storey_of: HashMap::new(),
            contained_in_space: HashMap::new(),
            boundaries: HashMap::new(),
            psets: HashMap::new(),
            skipped_properties: 0,
        };
        model.index_tree(tree, None);

        // IFCRELSPACEBOUNDARY(GlobalId, OwnerHistory, Name, Description,
        //                     RelatingSpace, RelatedBuildingElement, ...)
        for rel in file.of_type("IFCRELSPACEBOUNDARY") {
            if let (Some(space), Some(element)) = (rel.reference(4), rel.reference(5)) {
                if file.get(space).is_some_and(|s| s.type_name == "IFCSPACE") {
                    model.boundaries.entry(element).or_default().insert(space);
                }
            }
        }

        // IFCRELDEFINESBYPROPERTIES(GlobalId, OwnerHistory, Name, Description,
        //                           RelatedObjects, RelatingPropertyDefinition)
        for rel in file.of_type("IFCRELDEFINESBYPROPERTIES") {
            let Some(def) = rel.reference(5) else {
                continue;
            };
            for obj in rel.references(4) {
                model.psets.entry(obj).or_default().push(def);
            }
        }
        for defs in model.psets.values_mut() {
            defs.sort_unstable();
        }
        model.skipped_properties = model.count_skipped_properties();
        if model.skipped_properties > 0 {
            log::warn!(
                "{} complex or non-scalar properties skipped",
                model.skipped_properties
            );
        }
        model
    }

    pub fn file(&self) -> &StepFile {
        self.file
    }

    /// Properties that were not flattened (complex, enumerated, table, list
    /// or bounded values).
    pub fn skipped_properties(&self) -> usize {
        self.skipped_properties
    }

    fn index_tree(&mut self, node: &SpatialNode, storey: Option<u64>) {
        let storey = if node.kind == SpatialKind::Storey {
            self.storey_names.insert(node.entity_id, node.name.clone());
            self.storey_elevations
                .insert(node.entity_id, node.elevation);
            Some(node.entity_id)
        } else {
            storey
        };
        if let Some(s) = storey {
            if node.kind == SpatialKind::Space {
                self.storey_of.insert(node.entity_id, s);
            }
            for &e in &node.contained_elements {
                self.storey_of.insert(e, s);
            }
        }
        if node.kind == SpatialKind::Space {
            for &e in &node.contained_elements {
                self.contained_in_space.insert(e, node.entity_id);
            }
        }
        for child in &node.children {
            self.index_tree(child, storey);
        }
    }

    fn count_skipped_properties(&self) -> usize {
        let mut psets = BTreeSet::new();
        for defs in self.psets.values() {
            psets.extend(defs.iter().copied());
        }
        let mut skipped = BTreeSet::new();
        for d in psets {
            let Some(pset) = self.file.get(d) else {
                continue;
            };
            if pset.type_name != "IFCPROPERTYSET" {
                continue;
            }
            for p in pset.references(4) {
                let simple = self.file.get(p).is_some_and(|e| {
                    e.type_name == "IFCPROPERTYSINGLEVALUE"
                        && e.attr(2).and_then(PropValue::from_attr).is_some()
                });
                if !simple {
                    skipped.insert(p);
                }
            }
        }
        skipped.len()
    }

    /// Storey ids ordered by ascending elevation, ties by id.
    pub fn storeys(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.storey_names.keys().copied().collect();
        ids.sort_by(|a, b| {
            let ea = self.storey_elevations[a].unwrap_or(f64::INFINITY);
            let eb = self.storey_elevations[b].unwrap_or(f64::INFINITY);
            ea.total_cmp(&eb).then(a.cmp(b))
        });
        ids
    }

    pub fn storey_name(&self, storey: u64) -> Option<&str> {
        self.storey_names.get(&storey).map(String::as_str)
    }

    pub fn records_of_types(&self, types: &[&str]) -> Vec<ElementRecord> {
        self.file.of_types(types).map(|e| self.record(e)).collect()
    }

    pub fn element_records(&self, class: ElementClass) -> Vec<ElementRecord> {
        let mut records = self.records_of_types(class.ifc_types());
        if class == ElementClass::Floor {
            records.sort_by(|a, b| {
                let ea = a.elevation.unwrap_or(f64::INFINITY);
                let eb = b.elevation.unwrap_or(f64::INFINITY);
                ea.total_cmp(&eb).then(a.id.cmp(&b.id))
            });
        }
        records
    }

    fn record(&self, e: &EntityInstance) -> ElementRecord {
        let storey_id = if e.type_name == "IFCBUILDINGSTOREY" {
            Some(e.id)
        } else {
            self.storey_of.get(&e.id).copied()
        };
        let mut attributes = BTreeMap::new();
        let mut put = |name: &str, index: usize| {
            if let Some(v) = e.attr(index).and_then(PropValue::from_attr) {
                attributes.insert(name.to_string(), v);
            }
        };
        let mut elevation = None;
        match e.type_name.as_str() {
            "IFCDOOR" | "IFCDOORSTANDARDCASE" | "IFCWINDOW" | "IFCWINDOWSTANDARDCASE" => {
                put("Tag", 7);
                put("OverallHeight", 8);
                put("OverallWidth", 9);
            }
            "IFCBUILDINGSTOREY" => {
                put("Elevation", 9);
                elevation = e.number(9);
            }
            "IFCSPACE" => {}
            _ => put("Tag", 7),
        }

        let (properties, quantities) = self.property_values(e.id);

        let space_ids = if e.type_name == "IFCSPACE" {
            Vec::new()
        } else if let Some(spaces) = self.boundaries.get(&e.id) {
            spaces.iter().copied().collect()
        } else if let Some(space) = self.contained_in_space.get(&e.id) {
            vec![*space]
        } else {
            Vec::new()
        };

        ElementRecord {
            id: e.id,
            type_name: e.type_name.clone(),
            name: e.text(2).map(str::to_string),
            long_name: e.text(7).map(str::to_string).filter(|_| {
                matches!(
                    e.type_name.as_str(),
                    "IFCSPACE" | "IFCBUILDINGSTOREY" | "IFCSITE" | "IFCBUILDING"
                )
            }),
            storey_id,
            storey_name: storey_id.and_then(|s| self.storey_names.get(&s).cloned()),
            elevation,
            attributes,
            properties,
            quantities,
            space_ids,
        }
    }

    fn property_values(&self, id: u64) -> (BTreeMap<String, PropValue>, BTreeMap<String, f64>) {
        let mut props = BTreeMap::new();
        let mut quants = BTreeMap::new();
        let Some(defs) = self.psets.get(&id) else {
            return (props, quants);
        };
        for &d in defs {
            let Some(def) = self.file.get(d) else {
                continue;
            };
            match def.type_name.as_str() {
                // IFCPROPERTYSET(GlobalId, OwnerHistory, Name, Description, HasProperties)
                "IFCPROPERTYSET" => {
                    for p in def.references(4) {
                        let Some(prop) = self.file.get(p) else {
                            continue;
                        };
                        // IFCPROPERTYSINGLEVALUE(Name, Description, NominalValue, Unit)
                        if prop.type_name != "IFCPROPERTYSINGLEVALUE" {
                            continue;
                        }
                        if let (Some(name), Some(value)) =
                            (prop.text(0), prop.attr(2).and_then(PropValue::from_attr))
                        {
                            props.entry(name.to_string()).or_insert(value);
                        }
                    }
                }
                // IFCELEMENTQUANTITY(GlobalId, OwnerHistory, Name, Description,
                //                    MethodOfMeasurement, Quantities)
                "IFCELEMENTQUANTITY" => {
                    for q in def.references(5) {
                        let Some(quantity) = self.file.get(q) else {
                            continue;
                        };
                        // IFCQUANTITY*(Name, Description, Unit, Value, ...)
                        if !matches!(
                            quantity.type_name.as_str(),
                            "IFCQUANTITYLENGTH"
                                | "IFCQUANTITYAREA"
                                | "IFCQUANTITYVOLUME"
                                | "IFCQUANTITYCOUNT"
                                | "IFCQUANTITYWEIGHT"
                                | "IFCQUANTITYTIME"
                        ) {
                            continue;
                        }
                        if let (Some(name), Some(value)) = (quantity.text(0), quantity.number(3)) {
                            quants.entry(name.to_string()).or_insert(value);
                        }
                    }
                }
                _ => {}
            }
        }
        (props, quants)
    }

    /// Declared project length unit, e.g. `MILLIMETRE`, `METRE` or `FOOT`.
    pub fn length_unit(&self) -> Option<String> {
        let project = self.file.of_type("IFCPROJECT").next()?;
        // IfcProject.UnitsInContext is attribute 8
        let assignment = self.file.get(project.reference(8)?)?;
        for unit_id in assignment.references(0) {
            let Some(unit) = self.file.get(unit_id) else {
                continue;
            };
            if unit.attr(1).and_then(AttrValue::as_enum) != Some("LENGTHUNIT") {
                continue;
            }
            match unit.type_name.as_str() {
                // IFCSIUNIT(Dimensions, UnitType, Prefix, Name)
                "IFCSIUNIT" => {
                    let prefix = unit.attr(2).and_then(AttrValue::as_enum).unwrap_or("");
                    let name = unit.attr(3).and_then(AttrValue::as_enum).unwrap_or("");
                    return Some(format!("{prefix}{name}"));
                }
                // IFCCONVERSIONBASEDUNIT(Dimensions, UnitType, Name, ConversionFactor)
                "IFCCONVERSIONBASEDUNIT" => {
                    return unit.text(2).map(|s| s.to_ascii_uppercase());
                }
                _ => {}
            }
        }
        None
    }
}

/// One record per instance of `class`, ascending by id (floors by elevation).
pub fn element_records(
    file: &StepFile,
    tree: &SpatialNode,
    class: ElementClass,
) -> Vec<ElementRecord> {
    IfcModel::new(file, tree).element_records(class)
}
