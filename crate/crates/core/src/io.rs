// SPDX-License-Identifier: Apache-2.0

//! File formats: 8-bit RGB rasters, comma-separated tables and JSON sidecars.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use image::{ImageFormat, ImageReader, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{CorrespondenceSet, PointPair};
use crate::features::BehaviorFeatureRow;
use crate::imaging::{ImageBuffer, Point2, StitchLayout};
use crate::trajectory::{validate_annotations, FishAnnotation};

/// Same-point tolerance for the head/center check on ingest.
pub const HEAD_CENTER_TOL: f64 = 1e-9;

pub const CORRESPONDENCE_COLUMNS: [&str; 5] = ["frame_index", "src_x", "src_y", "ref_x", "ref_y"];
pub const ANNOTATION_COLUMNS: [&str; 9] = [
    "frame_index",
    "fish_id",
    "species",
    "head_x",
    "head_y",
    "center_x",
    "center_y",
    "tail_x",
    "tail_y",
];
pub const SUMMARY_COLUMNS: [&str; 6] = [
    "fish_id",
    "species",
    "total_distance_px",
    "displacement_px",
    "avg_speed_px_per_s",
    "mean_body_length_px",
];
pub const NEIGHBOR_COLUMNS: [&str; 6] = [
    "frame_index",
    "fish_id",
    "neighbor_id",
    "neighbor_species",
    "distance_px",
    "angle",
];

fn image_format(path: &Path) -> Result<ImageFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ppm" | "pnm") => Ok(ImageFormat::Pnm),
        Some("png") => Ok(ImageFormat::Png),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// True for file names `load_image` can read.
pub fn is_supported_image(path: &Path) -> bool {
    image_format(path).is_ok()
}

/// Fails with `UnsupportedFormat` unless `path` names a writable raster.
pub fn image_format_check(path: &Path) -> Result<()> {
    image_format(path).map(|_| ())
}

/// Reads a PPM/PNM or PNG file; bytes are divided by 255.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let format = image_format(path)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = ImageReader::with_format(BufReader::new(file), format)
        .decode()
        .map_err(|e| Error::CorruptFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let rgb = decoded.to_rgb8();
    let pixels = rgb.pixels().map(|p| p.0.map(|b| f64::from(b) / 255.0)).collect();
    ImageBuffer::new(rgb.width() as usize, rgb.height() as usize, pixels)
}

/// Intensity to byte with round-half-up.
pub fn to_byte(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes a binary PPM or a PNG depending on the extension.
pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    let format = image_format(path)?;
    let bytes = img.pixels().iter().flat_map(|p| p.map(to_byte)).collect();
    let rgb =
        RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer length matches dimensions");
    rgb.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptFile {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Supported image files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_supported_image(&path) {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

pub fn load_frames(dir: &Path) -> Result<Vec<ImageBuffer>> {
    list_frames(dir)?.iter().map(|p| load_image(p)).collect()
}

struct Table {
    path: PathBuf,
    reader: csv::Reader<fs::File>,
    columns: Vec<usize>,
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
    columns: &'a [usize],
}

impl Row<'_> {
    fn parse_error(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message,
        }
    }

    fn text(&self, i: usize) -> &str {
        self.record.get(self.columns[i]).unwrap_or("").trim()
    }

    fn real(&self, i: usize, name: &str) -> Result<f64> {
        let s = self.text(i);
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.parse_error(format!("{name}: {s:?} is not a finite real"))),
        }
    }

    fn index(&self, i: usize, name: &str) -> Result<usize> {
        let s = self.text(i);
        s.parse::<usize>()
            .map_err(|_| self.parse_error(format!("{name}: {s:?} is not a non-negative integer")))
    }

    fn point(&self, i: usize, name: &str) -> Result<Point2> {
        Ok(Point2::new(self.real(i, name)?, self.real(i + 1, name)?))
    }
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let columns = required
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| Error::MissingColumn {
                        path: path.to_path_buf(),
                        column: name.to_string(),
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Table {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(&Row) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {}
                Err(e) => return Err(csv_error(&self.path, e)),
            }
            let line = record.position().map_or(0, |p| p.line());
            f(&Row {
                path: &self.path,
                line,
                record: &record,
                columns: &self.columns,
            })?;
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads keypoint pairs grouped by frame; sets are sorted by frame index and
/// pairs keep their row order. Frame 0 is the reference and may not appear.
pub fn load_correspondences(path: &Path) -> Result<Vec<CorrespondenceSet>> {
    let mut groups: BTreeMap<usize, Vec<PointPair>> = BTreeMap::new();
    Table::open(path, &CORRESPONDENCE_COLUMNS)?.for_each(|row| {
        let frame = row.index(0, "frame_index")?;
        if frame == 0 {
            return Err(row.parse_error("frame 0 is the reference frame and takes no correspondences".into()));
        }
        let pair = PointPair::new(row.point(1, "src")?, row.point(3, "ref")?);
        groups.entry(frame).or_default().push(pair);
        Ok(())
    })?;
    Ok(groups
        .into_iter()
        .map(|(frame_index, pairs)| CorrespondenceSet { frame_index, pairs })
        .collect())
}

/// A row dropped on ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub annotations: Vec<FishAnnotation>,
    pub skipped: Vec<SkippedRow>,
}

/// Reads fish annotations. Rows whose head coincides with the center are
/// skipped with a warning; duplicate observations are an error.
pub fn load_annotations(path: &Path) -> Result<AnnotationFile> {
    let mut annotations = Vec::new();
    let mut skipped = Vec::new();
    Table::open(path, &ANNOTATION_COLUMNS)?.for_each(|row| {
        let a = FishAnnotation {
            frame_index: row.index(0, "frame_index")?,
            fish_id: row.text(1).to_string(),
            species: row.text(2).to_string(),
            head: row.point(3, "head")?,
            center: row.point(5, "center")?,
            tail: row.point(7, "tail")?,
        };
        if a.fish_id.is_empty() {
            return Err(row.parse_error("empty fish_id".into()));
        }
        if a.head.distance(a.center) <= HEAD_CENTER_TOL {
            let reason = format!(
                "fish {} in frame {}: head coincides with center",
                a.fish_id, a.frame_index
            );
            log::warn!("{}:{}: {reason}; row skipped", path.display(), row.line);
            skipped.push(SkippedRow { line: row.line, reason });
            return Ok(());
        }
        annotations.push(a);
        Ok(())
    })?;
    validate_annotations(&annotations)?;
    Ok(AnnotationFile { annotations, skipped })
}

/// Six-decimal fixed point; negative zero prints as zero.
pub fn format_real(v: f64) -> String {
    let s = format!("{v:.6}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn csv_to_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for r in rows {
        w.write_record(&r).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

/// Per-fish summary table.
pub fn format_summary_csv(rows: &[BehaviorFeatureRow]) -> String {
    csv_to_string(
        &SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.fish_id.clone(),
                r.species.clone(),
                format_real(r.total_distance),
                format_real(r.displacement),
                r.average_speed.map(format_real).unwrap_or_default(),
                format_real(r.mean_body_length),
            ]
        }),
    )
}

/// Per-frame nearest-neighbor table sorted by frame, then fish id. Angles
/// are in radians unless `degrees` is set.
pub fn format_neighbors_csv(rows: &[BehaviorFeatureRow], degrees: bool) -> String {
    let mut obs: Vec<_> = rows.iter().flat_map(|r| &r.neighbor_observations).collect();
    obs.sort_by(|a, b| (a.frame_index, &a.fish_id).cmp(&(b.frame_index, &b.fish_id)));
    csv_to_string(
        &NEIGHBOR_COLUMNS,
        obs.into_iter().map(|o| {
            let angle = if degrees { o.angle.to_degrees() } else { o.angle };
            vec![
                o.frame_index.to_string(),
                o.fish_id.clone(),
                o.neighbor_id.clone(),
                o.neighbor_species.clone(),
                format_real(o.distance),
                format_real(angle),
            ]
        }),
    )
}

/// Paths of the summary and neighbor tables written for `prefix`.
pub fn feature_table_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with_suffix = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with_suffix("_summary.csv"), with_suffix("_neighbors.csv"))
}

/// Writes `<prefix>_summary.csv` and `<prefix>_neighbors.csv`.
pub fn write_feature_tables(rows: &[BehaviorFeatureRow], prefix: &Path, degrees: bool) -> Result<(PathBuf, PathBuf)> {
    let (summary, neighbors) = feature_table_paths(prefix);
    write_text(&summary, &format_summary_csv(rows))?;
    write_text(&neighbors, &format_neighbors_csv(rows, degrees))?;
    Ok((summary, neighbors))
}

/// Writes correspondences with shortest round-trip real formatting.
pub fn write_correspondences(sets: &[CorrespondenceSet], path: &Path) -> Result<()> {
    let rows = sets.iter().flat_map(|s| {
        s.pairs.iter().map(move |p| {
            vec![
                s.frame_index.to_string(),
                p.source.x.to_string(),
                p.source.y.to_string(),
                p.reference.x.to_string(),
                p.reference.y.to_string(),
            ]
        })
    });
    write_text(path, &csv_to_string(&CORRESPONDENCE_COLUMNS, rows))
}

pub fn write_annotations(annotations: &[FishAnnotation], path: &Path) -> Result<()> {
    let rows = annotations.iter().map(|a| {
        vec![
            a.frame_index.to_string(),
            a.fish_id.clone(),
            a.species.clone(),
            a.head.x.to_string(),
            a.head.y.to_string(),
            a.center.x.to_string(),
            a.center.y.to_string(),
            a.tail.x.to_string(),
            a.tail.y.to_string(),
        ]
    });
    write_text(path, &csv_to_string(&ANNOTATION_COLUMNS, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn write_layout(layout: &StitchLayout, path: &Path) -> Result<()> {
    write_json(layout, path)
}

pub fn read_layout(path: &Path) -> Result<StitchLayout> {
    read_json(path)
}
