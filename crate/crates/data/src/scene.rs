use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use hdrtv_color::EncodedFrame;

use crate::png::{read_frame, BitDepth};
use crate::{io_err, DataError};

/// Name of the manifest written next to generated scenes.
pub const MANIFEST: &str = "manifest.txt";

/// Corresponding SDR and HDR frames of one scene, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub scene_id: String,
    pub sdr: Vec<EncodedFrame>,
    pub hdr: Vec<EncodedFrame>,
}

impl SequencePair {
    /// Checks equal counts and one shared extent across both sides.
    pub fn new(scene_id: impl Into<String>, sdr: Vec<EncodedFrame>, hdr: Vec<EncodedFrame>) -> Result<Self, DataError> {
        let scene_id = scene_id.into();
        let fail = |detail: String| DataError::Scene { scene: scene_id.clone(), detail };
        if sdr.is_empty() {
            return Err(fail("no frames".into()));
        }
        if sdr.len() != hdr.len() {
            return Err(fail(format!("{} SDR frames but {} HDR frames", sdr.len(), hdr.len())));
        }
        let extents = sdr[0].extents();
        for (side, frames) in [("sdr", &sdr), ("hdr", &hdr)] {
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.extents() != extents) {
                return Err(fail(format!("{side} frame {i} is {:?}, frame 0 is {extents:?}", f.extents())));
            }
        }
        Ok(SequencePair { scene_id, sdr, hdr })
    }

    pub fn len(&self) -> usize {
        self.sdr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sdr.is_empty()
    }

    /// (height, width) shared by every frame.
    pub fn extents(&self) -> (usize, usize) {
        self.sdr[0].extents()
    }
}

/// Frame indices of `NNNN.png` files in `dir`; other entries are ignored.
fn frame_indices(dir: &Path) -> Result<BTreeSet<usize>, DataError> {
    let mut out = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let name = entry.map_err(io_err(dir))?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.len() == 4 && stem.bytes().all(|b| b.is_ascii_digit()) {
                out.insert(stem.parse().expect("four digits"));
            }
        }
    }
    Ok(out)
}

pub fn frame_path(scene_dir: &Path, side: &str, index: usize) -> PathBuf {
    scene_dir.join(side).join(format!("{index:04}.png"))
}

/// Loads `<dir>/{sdr,hdr}/NNNN.png`. Every index must exist on both sides and
/// the indices must be consecutive.
pub fn load_scene(dir: &Path) -> Result<SequencePair, DataError> {
    let scene = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
    let sdr_idx = frame_indices(&dir.join("sdr"))?;
    let hdr_idx = frame_indices(&dir.join("hdr"))?;
    if let Some(&index) = sdr_idx.symmetric_difference(&hdr_idx).next() {
        let side = if sdr_idx.contains(&index) { "hdr" } else { "sdr" };
        return Err(DataError::MissingFrame { scene, index, side });
    }
    let (Some(&first), Some(&last)) = (sdr_idx.first(), sdr_idx.last()) else {
        return Err(DataError::Scene { scene, detail: "no frames".into() });
    };
    if last - first + 1 != sdr_idx.len() {
        let gap = sdr_idx.iter().zip(sdr_idx.iter().skip(1)).find(|(a, b)| **b != **a + 1).map(|(a, _)| *a);
        return Err(DataError::Scene {
            scene,
            detail: format!("frame indices not consecutive after {}", gap.unwrap_or(first)),
        });
    }
    let mut sdr = Vec::with_capacity(sdr_idx.len());
    let mut hdr = Vec::with_capacity(sdr_idx.len());
    for &i in &sdr_idx {
        sdr.push(read_frame(&frame_path(dir, "sdr", i), BitDepth::Eight)?);
        hdr.push(read_frame(&frame_path(dir, "hdr", i), BitDepth::Sixteen)?);
    }
    SequencePair::new(scene, sdr, hdr)
}

/// Loads several scenes on up to `available_parallelism` threads; the result
/// keeps the order of `dirs`.
pub fn load_scenes(dirs: &[PathBuf]) -> Result<Vec<SequencePair>, DataError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(dirs.len()).max(1);
    let chunk = dirs.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<SequencePair>, DataError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            dirs.chunks(chunk).map(|part| s.spawn(move || part.iter().map(|d| load_scene(d)).collect())).collect();
        handles.into_iter().map(|h| h.join().expect("loader thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(dirs.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// The `2t+1` SDR frames centred on `center`, replicating the first and last
/// frame past the sequence ends.
pub fn window(seq: &SequencePair, center: usize, t: usize) -> Result<Vec<&EncodedFrame>, DataError> {
    let len = seq.len();
    if center >= len {
        return Err(DataError::Window { center, len });
    }
    Ok((0..=2 * t).map(|k| &seq.sdr[(center + k).saturating_sub(t).min(len - 1)]).collect())
}

/// One scene directory per line, relative paths resolved against the
/// manifest's directory. Blank lines and `#` comments are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<PathBuf>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = base.join(line);
        if !p.is_dir() {
            return Err(DataError::Manifest {
                path: path.into(),
                line: i + 1,
                detail: format!("{} is not a directory", p.display()),
            });
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(DataError::Manifest { path: path.into(), line: 0, detail: "lists no scenes".into() });
    }
    Ok(out)
}

/// Writes `scenes` (paths under `dir`) as a manifest in `dir`.
pub fn write_manifest(dir: &Path, scenes: &[PathBuf]) -> Result<PathBuf, DataError> {
    let mut text = String::new();
    for s in scenes {
        let rel = s.strip_prefix(dir).unwrap_or(s);
        text.push_str(&rel.to_string_lossy());
        text.push('\n');
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Scene directories of a dataset: the manifest if `root` holds one, else
/// every subdirectory with an `sdr` folder, sorted by name.
pub fn dataset_scenes(root: &Path) -> Result<Vec<PathBuf>, DataError> {
    let manifest = root.join(MANIFEST);
    if manifest.is_file() {
        return load_manifest(&manifest);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let p = entry.map_err(io_err(root))?.path();
        if p.join("sdr").is_dir() {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(DataError::Scene { scene: root.display().to_string(), detail: "no scene directories".into() });
    }
    Ok(out)
}
