//! Landmark CSV files: `image_path,point_index,x,y`, one row per point.
//!
//! A file may hold several images. Whether an image carries 5 or 68 points
//! is decided by its row count.

use std::path::Path;

use super::{Landmarks5, Landmarks68, Point};
use crate::error::{Error, Result};
use crate::imageio::ensure_parent;

#[derive(Clone, Debug, PartialEq)]
pub enum LandmarkSet {
    Five(Landmarks5),
    SixtyEight(Landmarks68),
}

pub fn write_points<'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, &'a [Point])>,
) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["image_path", "point_index", "x", "y"])?;
    for (image, pts) in entries {
        for (i, p) in pts.iter().enumerate() {
            w.write_record([image, &i.to_string(), &p.x.to_string(), &p.y.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_lm5(path: &Path, image: &str, lm: &Landmarks5) -> Result<()> {
    write_points(path, [(image, &lm.to_array()[..])])
}

pub fn write_lm68(path: &Path, image: &str, lm: &Landmarks68) -> Result<()> {
    write_points(path, [(image, lm.points())])
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// All landmark sets in the file, in order of first appearance.
pub fn read_landmarks(path: &Path) -> Result<Vec<(String, LandmarkSet)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut groups: Vec<(String, Vec<(usize, Point)>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::format(path, "expected 4 columns"));
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("bad number '{}'", &rec[i])))
        };
        let idx: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("bad point index '{}'", &rec[1])))?;
        let p = Point::new(parse(2)?, parse(3)?);
        let name = rec[0].to_string();
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push((idx, p)),
            None => groups.push((name, vec![(idx, p)])),
        }
    }
    groups
        .into_iter()
        .map(|(name, mut pts)| {
            pts.sort_by_key(|(i, _)| *i);
            if pts.iter().enumerate().any(|(k, (i, _))| k != *i) {
                return Err(Error::format(path, format!("point indices for {name} are not 0..n")));
            }
            let pts: Vec<Point> = pts.into_iter().map(|(_, p)| p).collect();
            let set = match pts.len() {
                5 => LandmarkSet::Five(
                    Landmarks5::new(pts.try_into().expect("length checked"))
                        .map_err(|e| Error::format(path, e.to_string()))?,
                ),
                68 => LandmarkSet::SixtyEight(
                    Landmarks68::new(pts).map_err(|e| Error::format(path, e.to_string()))?,
                ),
                n => {
                    return Err(Error::format(
                        path,
                        format!("{name} has {n} points; expected 5 or 68"),
                    ))
                }
            };
            Ok((name, set))
        })
        .collect()
}

/// The single 5-point set in `path` (or the one for `image` when several exist).
pub fn read_lm5(path: &Path, image: Option<&str>) -> Result<Landmarks5> {
    for (name, set) in read_landmarks(path)? {
        if image.is_none_or(|i| i == name) {
            if let LandmarkSet::Five(lm) = set {
                return Ok(lm);
            }
        }
    }
    Err(Error::Integrity(format!(
        "no 5-point landmarks in {}",
        path.display()
    )))
}

pub fn read_lm68(path: &Path, image: Option<&str>) -> Result<Landmarks68> {
    for (name, set) in read_landmarks(path)? {
        if image.is_none_or(|i| i == name) {
            if let LandmarkSet::SixtyEight(lm) = set {
                return Ok(lm);
            }
        }
    }
    Err(Error::Integrity(format!(
        "no 68-point landmarks in {}",
        path.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::scale_template;

    #[test]
    fn mixed_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.csv");
        let five = scale_template(1.0, (112, 112)).unwrap();
        let sixty8: Vec<Point> = (0..68).map(|i| Point::new(i as f64 * 0.1, 1.0 / 3.0)).collect();
        write_points(
            &path,
            [("a.png", &five.to_array()[..]), ("b.png", &sixty8[..])],
        )
        .unwrap();
        let sets = read_landmarks(&path).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].1, LandmarkSet::Five(five));
        assert_eq!(read_lm68(&path, Some("b.png")).unwrap().points(), &sixty8[..]);
        assert!(read_lm68(&path, Some("a.png")).is_err());
    }

    #[test]
    fn wrong_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.csv");
        let pts = [Point::new(1.0, 2.0); 7];
        write_points(&path, [("x.png", &pts[..])]).unwrap();
        assert!(matches!(read_landmarks(&path), Err(Error::Format { .. })));
    }
}
