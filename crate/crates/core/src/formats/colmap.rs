//! COLMAP sparse reconstruction, text layout only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Diagnostic, DiagnosticKind, SceneBundle, SparsePoints};
use crate::camera::{CameraIntrinsics, CameraModel, CameraPose};
use crate::error::{Error, Result};
use crate::formats::read_image;
use crate::io::write_atomic;

/// The three text files, without images.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColmapModel {
    pub intrinsics: BTreeMap<u32, CameraIntrinsics>,
    pub poses: Vec<CameraPose>,
    pub points: SparsePoints,
    pub warnings: Vec<Diagnostic>,
}

/// Finds the text export either directly in `dir` or in `dir/sparse/0`.
fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let direct = dir.join(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let nested = dir.join("sparse").join("0").join(name);
    if nested.is_file() {
        return Ok(nested);
    }
    Err(Error::MissingFile(direct))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        Error::parse(
            &path.display().to_string(),
            0,
            format!("not valid UTF-8 text: {}", e),
        )
    })
}

/// Parses the text files in `dir` without touching images.
pub fn parse_colmap_text(dir: &Path) -> Result<ColmapModel> {
    let cameras_path = locate(dir, "cameras.txt")?;
    let images_path = locate(dir, "images.txt")?;
    let points_path = locate(dir, "points3D.txt")?;
    let mut warnings = Vec::new();
    let intrinsics = read_cameras_txt(&read_text(&cameras_path)?, &mut warnings)?;
    let poses = read_images_txt(&read_text(&images_path)?)?;
    let points = read_points3d_txt(&read_text(&points_path)?, &mut warnings)?;
    for pose in &poses {
        if !intrinsics.contains_key(&pose.camera_id) {
            return Err(Error::parse(
                "images.txt",
                0,
                format!(
                    "image {} references unknown camera {}",
                    pose.image_name, pose.camera_id
                ),
            ));
        }
    }
    Ok(ColmapModel {
        intrinsics,
        poses,
        points,
        warnings,
    })
}

/// Parses a COLMAP text export plus the images it references from
/// `dir/images`.
pub fn parse_colmap_dir(dir: &Path) -> Result<SceneBundle> {
    let model = parse_colmap_text(dir)?;
    let image_dir = dir.join("images");
    let mut images = BTreeMap::new();
    for pose in &model.poses {
        let path = image_dir.join(&pose.image_name);
        if !path.is_file() {
            return Err(Error::MissingImage {
                path,
                referenced_by: "images.txt".into(),
            });
        }
        images.insert(pose.image_name.clone(), read_image(&path)?);
    }
    let bundle = SceneBundle {
        intrinsics: model.intrinsics,
        poses: model.poses,
        points: model.points,
        images,
        warnings: model.warnings,
    };
    bundle.check_links()?;
    Ok(bundle)
}

/// Non-comment lines with their 1-based line numbers. Blank lines are kept;
/// they are significant in `images.txt`.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'))
}

fn field<T: FromStr>(file: &str, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(file, line, format!("missing field {}", what)))?;
    tok.parse()
        .map_err(|_| Error::parse(file, line, format!("malformed {}: {:?}", what, tok)))
}

fn finite(file: &str, line: usize, v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(file, line, format!("non-finite {}", what)))
    }
}

pub fn read_cameras_txt(
    text: &str,
    warnings: &mut Vec<Diagnostic>,
) -> Result<BTreeMap<u32, CameraIntrinsics>> {
    const FILE: &str = "cameras.txt";
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let camera_id: u32 = field(FILE, ln, toks.next(), "CAMERA_ID")?;
        let model_str = toks
            .next()
            .ok_or_else(|| Error::parse(FILE, ln, "missing field MODEL"))?;
        let model =
            CameraModel::parse(model_str).ok_or_else(|| Error::UnknownCameraModel(model_str.into()))?;
        let width: usize = field(FILE, ln, toks.next(), "WIDTH")?;
        let height: usize = field(FILE, ln, toks.next(), "HEIGHT")?;
        let mut params = Vec::with_capacity(4);
        for i in 0..model.num_params() {
            let v: f64 = field(FILE, ln, toks.next(), &format!("PARAMS[{}]", i))?;
            params.push(finite(FILE, ln, v, "camera parameter")?);
        }
        if toks.next().is_some() {
            return Err(Error::parse(FILE, ln, "too many parameters for camera model"));
        }
        let (fx, fy, cx, cy, radial_k) = match model {
            CameraModel::SimplePinhole => (params[0], params[0], params[1], params[2], 0.0),
            CameraModel::Pinhole => (params[0], params[1], params[2], params[3], 0.0),
            CameraModel::SimpleRadial => (params[0], params[0], params[1], params[2], params[3]),
        };
        let intr = CameraIntrinsics {
            camera_id,
            model,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            radial_k,
        };
        intr.validate()
            .map_err(|e| Error::parse(FILE, ln, e.to_string()))?;
        if model == CameraModel::SimpleRadial {
            warnings.push(Diagnostic {
                kind: DiagnosticKind::RadialDistortionIgnored { camera_id },
            });
        }
        if out.insert(camera_id, intr).is_some() {
            return Err(Error::parse(FILE, ln, format!("duplicate camera id {}", camera_id)));
        }
    }
    Ok(out)
}

pub fn read_images_txt(text: &str) -> Result<Vec<CameraPose>> {
    const FILE: &str = "images.txt";
    let mut out: Vec<CameraPose> = Vec::new();
    let mut ids = BTreeSet::new();
    let mut names = BTreeSet::new();
    let mut lines = content_lines(text);
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let image_id: u32 = field(FILE, ln, toks.next(), "IMAGE_ID")?;
        let mut q = [0.0; 4];
        for (i, name) in ["QW", "QX", "QY", "QZ"].iter().enumerate() {
            q[i] = finite(FILE, ln, field(FILE, ln, toks.next(), name)?, name)?;
        }
        let mut t = [0.0; 3];
        for (i, name) in ["TX", "TY", "TZ"].iter().enumerate() {
            t[i] = finite(FILE, ln, field(FILE, ln, toks.next(), name)?, name)?;
        }
        let camera_id: u32 = field(FILE, ln, toks.next(), "CAMERA_ID")?;
        // Names may contain spaces; the rest of the line is the name.
        let name = toks.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(Error::parse(FILE, ln, "missing field NAME"));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::parse(FILE, ln, "zero quaternion"));
        }
        let q = q.map(|v| v / norm);

        let mut num_observations = 0;
        if let Some((oln, obs)) = lines.next() {
            let toks: Vec<&str> = obs.split_whitespace().collect();
            if toks.len() % 3 != 0 {
                return Err(Error::parse(
                    FILE,
                    oln,
                    "observation line must hold (X, Y, POINT3D_ID) triples",
                ));
            }
            for triple in toks.chunks(3) {
                let _: f64 = field(FILE, oln, Some(triple[0]), "X")?;
                let _: f64 = field(FILE, oln, Some(triple[1]), "Y")?;
                let id: i64 = field(FILE, oln, Some(triple[2]), "POINT3D_ID")?;
                if id != -1 {
                    num_observations += 1;
                }
            }
        }
        if !ids.insert(image_id) {
            return Err(Error::parse(FILE, ln, format!("duplicate image id {}", image_id)));
        }
        if !names.insert(name.clone()) {
            return Err(Error::parse(FILE, ln, format!("duplicate image name {}", name)));
        }
        out.push(CameraPose {
            image_id,
            q,
            t,
            camera_id,
            image_name: name,
            num_observations,
        });
    }
    Ok(out)
}

pub fn read_points3d_txt(text: &str, warnings: &mut Vec<Diagnostic>) -> Result<SparsePoints> {
    const FILE: &str = "points3D.txt";
    let mut out = SparsePoints::default();
    for (ln, line) in content_lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let point_id: u64 = field(FILE, ln, toks.next(), "POINT3D_ID")?;
        let mut p = [0.0; 3];
        for (i, name) in ["X", "Y", "Z"].iter().enumerate() {
            p[i] = finite(FILE, ln, field(FILE, ln, toks.next(), name)?, name)?;
        }
        let mut rgb = [0u8; 3];
        for (i, name) in ["R", "G", "B"].iter().enumerate() {
            rgb[i] = field(FILE, ln, toks.next(), name)?;
        }
        let _error: f64 = field(FILE, ln, toks.next(), "ERROR")?;
        let track: Vec<&str> = toks.collect();
        if track.len() % 2 != 0 {
            return Err(Error::parse(FILE, ln, "track must hold (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        for pair in track.chunks(2) {
            let _: u32 = field(FILE, ln, Some(pair[0]), "IMAGE_ID")?;
            let _: u32 = field(FILE, ln, Some(pair[1]), "POINT2D_IDX")?;
        }
        let track_length = track.len() / 2;
        if track_length < 2 {
            warnings.push(Diagnostic {
                kind: DiagnosticKind::DroppedPoint {
                    point_id,
                    track_length,
                },
            });
            continue;
        }
        out.point_ids.push(point_id);
        out.positions.push(p);
        out.colors.push(rgb);
        out.track_lengths.push(track_length);
    }
    Ok(out)
}

/// Writes `cameras.txt`, `images.txt` and `points3D.txt` into `dir`.
///
/// Only track lengths and per-image observation counts are retained on
/// parse, so 2D payloads are written as placeholders that reproduce those
/// counts: observation entries `0 0 <point id>` and track entries
/// `<image id> <index>` cycling through the registered images.
pub fn write_colmap_text(
    dir: &Path,
    intrinsics: &BTreeMap<u32, CameraIntrinsics>,
    poses: &[CameraPose],
    points: &SparsePoints,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut cams = String::from("# Camera list with one line of data per camera:\n");
    cams.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(cams, "# Number of cameras: {}", intrinsics.len());
    for c in intrinsics.values() {
        let params = match c.model {
            CameraModel::SimplePinhole => format!("{} {} {}", c.fx, c.cx, c.cy),
            CameraModel::Pinhole => format!("{} {} {} {}", c.fx, c.fy, c.cx, c.cy),
            CameraModel::SimpleRadial => format!("{} {} {} {}", c.fx, c.cx, c.cy, c.radial_k),
        };
        let _ = writeln!(
            cams,
            "{} {} {} {} {}",
            c.camera_id,
            c.model.as_str(),
            c.width,
            c.height,
            params
        );
    }

    let mut imgs = String::from("# Image list with two lines of data per image:\n");
    imgs.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    imgs.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    let _ = writeln!(imgs, "# Number of images: {}", poses.len());
    for (i, p) in poses.iter().enumerate() {
        let _ = writeln!(
            imgs,
            "{} {} {} {} {} {} {} {} {} {}",
            p.image_id, p.q[0], p.q[1], p.q[2], p.q[3], p.t[0], p.t[1], p.t[2], p.camera_id, p.image_name
        );
        let obs: Vec<String> = (0..p.num_observations)
            .map(|k| {
                let id = if points.is_empty() {
                    0
                } else {
                    points.point_ids[(i + k) % points.len()]
                };
                format!("0 0 {}", id)
            })
            .collect();
        let _ = writeln!(imgs, "{}", obs.join(" "));
    }

    let mut pts = String::from("# 3D point list with one line of data per point:\n");
    pts.push_str("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    let _ = writeln!(pts, "# Number of points: {}", points.len());
    for i in 0..points.len() {
        let p = points.positions[i];
        let c = points.colors[i];
        let _ = write!(
            pts,
            "{} {} {} {} {} {} {} 0",
            points.point_ids[i], p[0], p[1], p[2], c[0], c[1], c[2]
        );
        for k in 0..points.track_lengths[i] {
            let image_id = if poses.is_empty() {
                1
            } else {
                poses[(i + k) % poses.len()].image_id
            };
            let _ = write!(pts, " {} {}", image_id, i);
        }
        pts.push('\n');
    }

    write_atomic(&dir.join("cameras.txt"), cams.as_bytes())?;
    write_atomic(&dir.join("images.txt"), imgs.as_bytes())?;
    write_atomic(&dir.join("points3D.txt"), pts.as_bytes())?;
    Ok(())
}
