use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::class::ElementClass;
use crate::ifc::{ElementRecord, IfcModel, PropValue, SpatialNode, StepFile, RAILING_TYPES};

use super::{CellValue, Column, ColumnKind, SubDatabase, TableError};

/// All eight tables of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTables {
    pub model_name: String,
    pub length_unit: String,
    pub tables: BTreeMap<ElementClass, SubDatabase>,
}

impl ModelTables {
    pub fn get(&self, class: ElementClass) -> Option<&SubDatabase> {
        self.tables.get(&class)
    }
}

/// `GrossFloorArea` -> `gross_floor_area`, `Net Volume` -> `net_volume`.
pub fn snake_case(name: &str) -> String {
    let mut out = String::new();
    let chars: Vec<char> = name.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            if c.is_uppercase() && i > 0 {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                if prev.is_lowercase() || (prev.is_uppercase() && next_lower) {
                    out.push('_');
                }
            }
            out.extend(c.to_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

fn prop_text(v: &PropValue) -> String {
    match v {
        PropValue::Number(n) => n.to_string(),
        PropValue::Text(s) => s.clone(),
        PropValue::Bool(b) => b.to_string(),
    }
}

fn floor_cell(r: &ElementRecord) -> CellValue {
    r.storey_name
        .clone()
        .map_or(CellValue::Empty, CellValue::text)
}

fn name_cell(r: &ElementRecord) -> CellValue {
    r.name.clone().map_or(CellValue::Empty, CellValue::text)
}

fn id_cell(id: u64) -> CellValue {
    CellValue::Number(id as f64)
}

fn columns(spec: &[(&str, ColumnKind)]) -> Vec<Column> {
    spec.iter().map(|(n, k)| Column::new(*n, *k)).collect()
}

/// Build the eight per-class tables. Rows ascend by entity id, floors by
/// elevation.
pub fn tabulate(
    file: &StepFile,
    tree: &SpatialNode,
    model_name: &str,
) -> Result<ModelTables, TableError> {
    use ColumnKind::*;

    let model = IfcModel::new(file, tree);
    let unit = model.length_unit().unwrap_or_default();
    let records: HashMap<ElementClass, Vec<ElementRecord>> = ElementClass::ALL
        .iter()
        .map(|&c| (c, model.element_records(c)))
        .collect();
    let railings = model.records_of_types(RAILING_TYPES);

    let mut tables = BTreeMap::new();
    let mut put = |class: ElementClass, cols: Vec<Column>, rows: Vec<Vec<CellValue>>| {
        SubDatabase::new(class, model_name, unit.clone(), cols, rows).map(|db| {
            tables.insert(class, db);
        })
    };

    // floor
    let count_on = |recs: &[ElementRecord], storey: u64| {
        CellValue::Number(recs.iter().filter(|r| r.storey_id == Some(storey)).count() as f64)
    };
    let floor_rows = records[&ElementClass::Floor]
        .iter()
        .map(|f| {
            let mut row = vec![
                id_cell(f.id),
                name_cell(f),
                CellValue::opt_number(f.elevation),
            ];
            for class in [
                ElementClass::Space,
                ElementClass::Door,
                ElementClass::Window,
                ElementClass::Beam,
                ElementClass::Column,
                ElementClass::Stair,
            ] {
                row.push(count_on(&records[&class], f.id));
            }
            row.push(count_on(&railings, f.id));
            row.push(count_on(&records[&ElementClass::Furniture], f.id));
            row
        })
        .collect();
    put(
        ElementClass::Floor,
        columns(&[
            ("floor_id", Number),
            ("name", Text),
            ("elevation", Number),
            ("space_count", Number),
            ("door_count", Number),
            ("window_count", Number),
            ("beam_count", Number),
            ("column_count", Number),
            ("stair_count", Number),
            ("railing_count", Number),
            ("furniture_count", Number),
        ]),
        floor_rows,
    )?;

    // space
    let linked = |class: ElementClass, space: u64| -> Vec<u64> {
        records[&class]
            .iter()
            .filter(|r| r.space_ids.contains(&space))
            .map(|r| r.id)
            .collect()
    };
    let space_rows = records[&ElementClass::Space]
        .iter()
        .map(|s| {
            let windows = linked(ElementClass::Window, s.id);
            let doors = linked(ElementClass::Door, s.id);
            vec![
                id_cell(s.id),
                name_cell(s),
                s.long_name
                    .clone()
                    .map_or(CellValue::Empty, CellValue::text),
                floor_cell(s),
                CellValue::opt_number(s.number("GrossFloorArea")),
                CellValue::opt_number(s.number("Height")),
                CellValue::Number(windows.len() as f64),
                CellValue::Number(doors.len() as f64),
                CellValue::ids(windows),
                CellValue::ids(doors),
            ]
        })
        .collect();
    put(
        ElementClass::Space,
        columns(&[
            ("space_id", Number),
            ("name", Text),
            ("long_name", Text),
            ("floor", Text),
            ("gross_floor_area", Number),
            ("height", Number),
            ("window_count", Number),
            ("door_count", Number),
            ("window_ids", Ids),
            ("door_ids", Ids),
        ]),
        space_rows,
    )?;

    // window
    let window_rows = records[&ElementClass::Window]
        .iter()
        .map(|w| {
            vec![
                id_cell(w.id),
                name_cell(w),
                floor_cell(w),
                CellValue::opt_number(w.number("OverallWidth")),
                CellValue::opt_number(w.number("OverallHeight")),
                CellValue::opt_number(w.space_ids.first().map(|&s| s as f64)),
            ]
        })
        .collect();
    put(
        ElementClass::Window,
        columns(&[
            ("window_id", Number),
            ("name", Text),
            ("floor", Text),
            ("width", Number),
            ("height", Number),
            ("space_id", Number),
        ]),
        window_rows,
    )?;

    // door
    let door_rows = records[&ElementClass::Door]
        .iter()
        .map(|d| {
            vec![
                id_cell(d.id),
                name_cell(d),
                floor_cell(d),
                CellValue::opt_number(d.number("OverallWidth")),
                CellValue::opt_number(d.number("OverallHeight")),
                d.properties
                    .get("FireRating")
                    .map_or(CellValue::Empty, |v| CellValue::text(prop_text(v))),
                CellValue::ids(d.space_ids.clone()),
            ]
        })
        .collect();
    put(
        ElementClass::Door,
        columns(&[
            ("door_id", Number),
            ("name", Text),
            ("floor", Text),
            ("width", Number),
            ("height", Number),
            ("fire_rating", Text),
            ("space_ids", Ids),
        ]),
        door_rows,
    )?;

    for class in [
        ElementClass::Beam,
        ElementClass::Column,
        ElementClass::Stair,
        ElementClass::Furniture,
    ] {
        let recs = &records[&class];
        let (cols, rows) = quantity_table(recs);
        put(class, cols, rows)?;
    }

    Ok(ModelTables {
        model_name: model_name.to_string(),
        length_unit: unit,
        tables,
    })
}

/// `id, name, floor` followed by every scalar quantity found, sorted by
/// column name.
fn quantity_table(recs: &[ElementRecord]) -> (Vec<Column>, Vec<Vec<CellValue>>) {
    let fixed = ["id", "name", "floor"];
    // snake name -> source quantity names mapping to it
    let mut by_column: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for r in recs {
        for q in r.quantities.keys() {
            let mut col = snake_case(q);
            if col.is_empty() || fixed.contains(&col.as_str()) {
                col = format!("q_{col}");
            }
            by_column.entry(col).or_default().insert(q.as_str());
        }
    }
    let mut cols = vec![
        Column::new("id", ColumnKind::Number),
        Column::new("name", ColumnKind::Text),
        Column::new("floor", ColumnKind::Text),
    ];
    cols.extend(
        by_column
            .keys()
            .map(|c| Column::new(c.clone(), ColumnKind::Number)),
    );
    let rows = recs
        .iter()
        .map(|r| {
            let mut row = vec![id_cell(r.id), name_cell(r), floor_cell(r)];
            for sources in by_column.values() {
                let v = sources.iter().find_map(|q| r.quantities.get(*q).copied());
                row.push(CellValue::opt_number(v));
            }
            row
        })
        .collect();
    (cols, rows)
}
