//! On-disk collection format.
//!
//! A JSON manifest names one points file per shape, an `n x n` CSV distance
//! matrix, and a directory of map files named `<target>__<source>.csv`.
//! Discrete map lines are `source_index,target_index`; soft map lines add a
//! third `mass` column. Reals are written in shortest round-trip form, so a
//! load/save cycle reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorrespondenceMap, Distribution, MapData, Point, Shape, ShapeCollection, SyncGraph, DEFAULT_BETA};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub shapes: Vec<ShapeEntry>,
    pub distances_file: String,
    pub maps_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ShapeEntry {
    pub id: String,
    pub points_file: String,
    #[serde(default)]
    pub landmarks: Vec<usize>,
    #[serde(default)]
    pub ground_truth: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_field_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces_file: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub allow_duplicates: bool,
    /// Overrides the manifest's beta.
    pub beta: Option<f64>,
}

pub fn load_collection(manifest_path: &Path, options: &LoadOptions) -> Result<ShapeCollection> {
    let text = read(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut shapes = Vec::with_capacity(manifest.shapes.len());
    for entry in &manifest.shapes {
        let points = parse_points(&base.join(&entry.points_file))?;
        let mut shape = Shape::new(entry.id.clone(), points)
            .with_landmarks(entry.landmarks.clone())
            .with_ground_truth(entry.ground_truth.clone());
        if let Some(file) = &entry.scalar_field_file {
            shape.scalar_field = Some(parse_scalar_field(&base.join(file))?);
        }
        if let Some(file) = &entry.faces_file {
            shape.faces = Some(parse_faces(&base.join(file))?);
        }
        shape.validate()?;
        shapes.push(shape);
    }

    let beta = options.beta.or(manifest.beta).unwrap_or(DEFAULT_BETA);
    let rows = parse_distances(&base.join(&manifest.distances_file))?;
    let graph = SyncGraph::new(rows, beta, options.allow_duplicates)?;

    let maps_dir = base.join(&manifest.maps_dir);
    let mut maps = Vec::new();
    for source in &shapes {
        for target in &shapes {
            if source.id == target.id {
                continue;
            }
            let path = maps_dir.join(map_file_name(&source.id, &target.id));
            if path.exists() {
                maps.push(parse_map(&path, source, target)?);
            }
        }
    }
    ShapeCollection::new(shapes, graph, maps)
}

/// Writes `collection` under `dir` and returns the manifest path.
pub fn save_collection(collection: &ShapeCollection, dir: &Path) -> Result<PathBuf> {
    save_collection_annotated(collection, dir, &[], None)
}

/// Like [`save_collection`], with `header` lines written as `#` comments at
/// the top of every text file and `provenance` stored in the manifest.
pub fn save_collection_annotated(
    collection: &ShapeCollection,
    dir: &Path,
    header: &[String],
    provenance: Option<serde_json::Value>,
) -> Result<PathBuf> {
    let comment: String = header.iter().map(|l| format!("# {l}\n")).collect();
    let write = |path: &Path, body: &str| write_atomic(path, &(comment.clone() + body));
    let shapes_dir = dir.join("shapes");
    let maps_dir = dir.join("maps");
    for d in [dir, &shapes_dir, &maps_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut entries = Vec::new();
    for shape in collection.shapes() {
        let points_file = format!("shapes/{}.xyz", shape.id);
        write(&dir.join(&points_file), &format_points(&shape.points))?;
        let scalar_field_file = match &shape.scalar_field {
            Some(field) => {
                let f = format!("shapes/{}.field", shape.id);
                write(&dir.join(&f), &format_scalar_field(field))?;
                Some(f)
            }
            None => None,
        };
        let faces_file = match &shape.faces {
            Some(faces) => {
                let f = format!("shapes/{}.faces", shape.id);
                write(&dir.join(&f), &format_faces(faces))?;
                Some(f)
            }
            None => None,
        };
        entries.push(ShapeEntry {
            id: shape.id.clone(),
            points_file,
            landmarks: shape.landmarks.clone(),
            ground_truth: shape.ground_truth.clone(),
            scalar_field_file,
            faces_file,
        });
    }
    write(&dir.join("distances.csv"), &format_distances(&collection.graph().rows()))?;
    for (_, map) in collection.maps() {
        write(&maps_dir.join(map_file_name(map.source_id(), map.target_id())), &format_map(map))?;
    }
    let manifest = Manifest {
        shapes: entries,
        distances_file: "distances.csv".into(),
        maps_dir: "maps".into(),
        beta: Some(collection.graph().beta()),
        provenance,
    };
    let path = dir.join("manifest.json");
    write_atomic(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(path)
}

pub fn map_file_name(source_id: &str, target_id: &str) -> String {
    format!("{target_id}__{source_id}.csv")
}

pub fn format_points(points: &[Point]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn format_distances(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn format_map(map: &CorrespondenceMap) -> String {
    let mut out = String::new();
    match map.data() {
        MapData::Discrete(images) => {
            for (s, t) in images.iter().enumerate() {
                let _ = writeln!(out, "{s},{t}");
            }
        }
        MapData::Soft(rows) => {
            for (s, row) in rows.iter().enumerate() {
                for &(t, m) in row.entries() {
                    let _ = writeln!(out, "{s},{t},{m}");
                }
            }
        }
    }
    out
}

fn format_scalar_field(field: &[f64]) -> String {
    field.iter().map(|v| format!("{v}\n")).collect()
}

fn format_faces(faces: &[[usize; 3]]) -> String {
    faces.iter().map(|f| format!("{} {} {}\n", f[0], f[1], f[2])).collect()
}

pub fn parse_points(path: &Path) -> Result<Vec<Point>> {
    let text = read(path)?;
    let mut points = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let values = parse_reals(path, line_no, line.split_whitespace())?;
        if values.len() != 3 {
            return Err(parse_err(path, line_no, format!("expected 3 coordinates, got {}", values.len())));
        }
        points.push(Point::new(values[0], values[1], values[2]));
    }
    Ok(points)
}

pub fn parse_distances(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(line_no, line)| parse_reals(path, line_no, line.split(',')))
        .collect()
}

fn parse_scalar_field(path: &Path) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (line_no, line) in data_lines(&text) {
        out.extend(parse_reals(path, line_no, line.split_whitespace())?);
    }
    Ok(out)
}

fn parse_faces(path: &Path) -> Result<Vec<[usize; 3]>> {
    let text = read(path)?;
    let mut faces = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(path, line_no, e.to_string())))
            .collect::<Result<_>>()?;
        let [a, b, c] = idx[..] else {
            return Err(parse_err(path, line_no, "expected 3 vertex indices".into()));
        };
        faces.push([a, b, c]);
    }
    Ok(faces)
}

/// Reads a map file between two shapes; the column count decides the kind.
pub fn parse_map(path: &Path, source: &Shape, target: &Shape) -> Result<CorrespondenceMap> {
    let text = read(path)?;
    let n_src = source.len();
    let n_tgt = target.len();
    let mut discrete: Vec<Option<usize>> = vec![None; n_src];
    let mut soft: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_src];
    let mut columns = None;
    for (line_no, line) in data_lines(&text) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if *columns.get_or_insert(cells.len()) != cells.len() {
            return Err(parse_err(path, line_no, "inconsistent column count".into()));
        }
        let index = |cell: &str| cell.parse::<usize>().map_err(|e| parse_err(path, line_no, e.to_string()));
        let s = index(cells[0])?;
        let t = index(cells.get(1).copied().unwrap_or(""))?;
        if s >= n_src {
            return Err(Error::IndexOutOfRange { context: format!("source of {}", path.display()), index: s, len: n_src });
        }
        if t >= n_tgt {
            return Err(Error::IndexOutOfRange { context: format!("target of {}", path.display()), index: t, len: n_tgt });
        }
        match cells.len() {
            2 => {
                if discrete[s].replace(t).is_some() {
                    return Err(parse_err(path, line_no, format!("source index {s} listed twice")));
                }
            }
            3 => {
                let m = cells[2].parse::<f64>().map_err(|e| parse_err(path, line_no, e.to_string()))?;
                soft[s].push((t, m));
            }
            c => return Err(parse_err(path, line_no, format!("expected 2 or 3 columns, got {c}"))),
        }
    }
    match columns {
        Some(3) => {
            let rows = soft.into_iter().map(Distribution::from_masses).collect();
            CorrespondenceMap::soft(&source.id, &target.id, n_tgt, rows)
        }
        _ => {
            let images = discrete
                .into_iter()
                .enumerate()
                .map(|(s, t)| t.ok_or_else(|| parse_err(path, 0, format!("source index {s} has no image"))))
                .collect::<Result<Vec<_>>>()?;
            CorrespondenceMap::discrete(&source.id, &target.id, n_tgt, images)
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_reals<'a>(path: &Path, line_no: usize, cells: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    cells
        .map(|c| c.trim().parse::<f64>().map_err(|e| parse_err(path, line_no, format!("{c:?}: {e}"))))
        .collect()
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_fixture(dir: &Path, d12: f64, d21: f64) -> PathBuf {
        fs::create_dir_all(dir.join("maps")).unwrap();
        fs::write(dir.join("a.xyz"), "0 0 0\n1 0 0\n").unwrap();
        fs::write(dir.join("b.xyz"), "0 1 0\n1 1 0\n").unwrap();
        fs::write(dir.join("d.csv"), format!("0,{d12}\n{d21},0\n")).unwrap();
        fs::write(dir.join("maps/b__a.csv"), "0,0\n1,1\n").unwrap();
        fs::write(dir.join("maps/a__b.csv"), "0,0\n1,1\n").unwrap();
        let manifest = r#"{"shapes":[{"id":"a","points_file":"a.xyz","landmarks":[0]},
            {"id":"b","points_file":"b.xyz","ground_truth":{"tip":1}}],
            "distances_file":"d.csv","maps_dir":"maps"}"#;
        fs::write(dir.join("m.json"), manifest).unwrap();
        dir.join("m.json")
    }

    #[test]
    fn loads_identity_pair() {
        let tmp = tempfile::tempdir().unwrap();
        let c = load_collection(&write_fixture(tmp.path(), 1.0, 1.0), &LoadOptions::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.graph().w(0, 1), (-1.0f64).exp());
        assert_eq!(c.map(0, 1).unwrap().as_discrete().unwrap(), &[0, 1]);
        assert_eq!(c.shape(1).ground_truth["tip"], 1);
    }

    #[test]
    fn rejects_asymmetric_distances() {
        let tmp = tempfile::tempdir().unwrap();
        let err = load_collection(&write_fixture(tmp.path(), 1.0, 2.0), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MetricAsymmetry { .. }));
    }

    #[test]
    fn rejects_bad_rows_and_indices() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture(tmp.path(), 1.0, 1.0);
        fs::write(tmp.path().join("maps/b__a.csv"), "0,0,0.5\n0,1,0.4\n1,1,1\n").unwrap();
        let err = load_collection(&manifest, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonNormalizedRow { row: 0, .. }));

        fs::write(tmp.path().join("maps/b__a.csv"), "0,0\n1,5\n").unwrap();
        let err = load_collection(&manifest, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 5, .. }));
    }

    #[test]
    fn missing_points_file() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture(tmp.path(), 1.0, 1.0);
        fs::remove_file(tmp.path().join("b.xyz")).unwrap();
        assert!(matches!(load_collection(&manifest, &LoadOptions::default()), Err(Error::Io { .. })));
    }

    #[test]
    fn line_fixture_distances() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        fs::create_dir_all(dir.join("maps")).unwrap();
        let mut shapes = Vec::new();
        for k in 0..4 {
            fs::write(dir.join(format!("s{k}.xyz")), "0 0 0\n1 0 0\n").unwrap();
            shapes.push(format!(r#"{{"id":"s{}","points_file":"s{k}.xyz"}}"#, k + 1));
        }
        let rows: Vec<Vec<f64>> = (0..4).map(|a| (0..4).map(|b| (a as f64 - b as f64).abs()).collect()).collect();
        fs::write(dir.join("d.csv"), format_distances(&rows)).unwrap();
        let manifest = format!(r#"{{"shapes":[{}],"distances_file":"d.csv","maps_dir":"maps"}}"#, shapes.join(","));
        fs::write(dir.join("m.json"), manifest).unwrap();
        let c = load_collection(&dir.join("m.json"), &LoadOptions::default()).unwrap();
        assert_eq!(c.graph().d(0, 3), 3.0);
        assert_eq!(c.graph().d(1, 2), 1.0);
    }

    proptest! {
        #[test]
        fn save_load_is_bit_exact(
            coords in prop::collection::vec(prop::array::uniform3(-1e3..1e3f64), 3..12),
            masses in prop::collection::vec(0.01..1.0f64, 3),
            beta in 0.01..10.0f64,
            d in 0.001..5.0f64,
        ) {
            let n = coords.len();
            let pts: Vec<Point> = coords.iter().map(|c| Point::new(c[0], c[1], c[2])).collect();
            let b_pts: Vec<Point> = pts.iter().map(|p| Point::new(p.x * 1.1, p.y - 0.3, p.z)).collect();
            let shapes = vec![Shape::new("a", pts.clone()).with_landmarks(vec![0, n - 1]), Shape::new("b", b_pts)];
            let graph = SyncGraph::new(vec![vec![0.0, d], vec![d, 0.0]], beta, false).unwrap();
            let total: f64 = masses.iter().sum();
            let row = Distribution::from_masses(masses.iter().enumerate().map(|(i, m)| (i, m / total)));
            let soft_rows: Vec<Distribution> = (0..n).map(|_| row.clone()).collect();
            let maps = vec![
                CorrespondenceMap::discrete("a", "b", n, (0..n).rev().collect()).unwrap(),
                CorrespondenceMap::soft("b", "a", n, soft_rows).unwrap(),
            ];
            let c = ShapeCollection::new(shapes, graph, maps).unwrap();
            let tmp = tempfile::tempdir().unwrap();
            let manifest = save_collection(&c, tmp.path()).unwrap();
            let back = load_collection(&manifest, &LoadOptions::default()).unwrap();
            prop_assert_eq!(back.shapes(), c.shapes());
            prop_assert_eq!(back.graph(), c.graph());
            prop_assert_eq!(back.map(0, 1).unwrap(), c.map(0, 1).unwrap());
            prop_assert_eq!(back.map(1, 0).unwrap(), c.map(1, 0).unwrap());
            // a second save is byte-identical
            let tmp2 = tempfile::tempdir().unwrap();
            save_collection(&back, tmp2.path()).unwrap();
            for f in ["distances.csv", "maps/b__a.csv", "maps/a__b.csv", "shapes/a.xyz", "manifest.json"] {
                prop_assert_eq!(fs::read(tmp.path().join(f)).unwrap(), fs::read(tmp2.path().join(f)).unwrap());
            }
        }
    }
}
