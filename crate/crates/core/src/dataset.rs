//! Tracking sequences and their on-disk layout.
//!
//! A sequence directory holds `frames/NNNNNN.png` (or `.jpg`), numbered from
//! `000001`, plus `groundtruth.txt` with one `x,y,w,h` line per frame in
//! top-left convention.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::Image;

#[derive(Clone, Debug)]
enum Frames {
    Memory(Vec<RgbImage>),
    Files(Vec<PathBuf>),
}

/// A named sequence of frames with one ground-truth box per frame.
///
/// Frames read from disk are decoded lazily, one at a time.
#[derive(Clone, Debug)]
pub struct Sequence {
    id: String,
    frames: Frames,
    groundtruth: Vec<BBox>,
}

impl Sequence {
    pub fn from_memory(id: impl Into<String>, frames: Vec<RgbImage>, groundtruth: Vec<BBox>) -> Result<Self> {
        if frames.len() != groundtruth.len() {
            return Err(Error::invalid(format!(
                "{} frames but {} ground-truth boxes",
                frames.len(),
                groundtruth.len()
            )));
        }
        if frames.is_empty() {
            return Err(Error::invalid("a sequence needs at least one frame"));
        }
        for b in &groundtruth {
            b.validate()?;
        }
        Ok(Self {
            id: id.into(),
            frames: Frames::Memory(frames),
            groundtruth,
        })
    }

    /// Opens a sequence directory; frames are decoded on access.
    pub fn open(dir: &Path) -> Result<Self> {
        let frame_dir = dir.join("frames");
        let entries = fs::read_dir(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&frame_dir, e))?.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                paths.push(path);
            }
        }
        paths.sort();
        let gt_path = dir.join("groundtruth.txt");
        let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        let groundtruth = parse_groundtruth(&text)?;
        if paths.len() != groundtruth.len() {
            return Err(Error::Format {
                expected: format!("{} frames to match groundtruth.txt", groundtruth.len()),
                found: format!("{} frames in {}", paths.len(), frame_dir.display()),
            });
        }
        if paths.is_empty() {
            return Err(Error::invalid(format!("{} contains no frames", dir.display())));
        }
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
        Ok(Self {
            id,
            frames: Frames::Files(paths),
            groundtruth,
        })
    }

    /// Writes the sequence in directory format (PNG frames).
    pub fn save(&self, dir: &Path) -> Result<()> {
        let frame_dir = dir.join("frames");
        fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        for i in 0..self.len() {
            let path = frame_dir.join(format!("{:06}.png", i + 1));
            match &self.frames {
                Frames::Memory(f) => f[i].save(&path).map_err(|source| Error::Image { path, source })?,
                Frames::Files(_) => self.frame(i)?.save_png(&path)?,
            }
        }
        let gt_path = dir.join("groundtruth.txt");
        fs::write(&gt_path, format_groundtruth(&self.groundtruth)).map_err(|e| Error::io(&gt_path, e))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.groundtruth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groundtruth.is_empty()
    }

    pub fn groundtruth(&self) -> &[BBox] {
        &self.groundtruth
    }

    pub fn frame(&self, idx: usize) -> Result<Image> {
        match &self.frames {
            Frames::Memory(f) => Ok(Image::from_rgb8(&f[idx])),
            Frames::Files(p) => Image::load(&p[idx]),
        }
    }

    /// Frame dimensions `(height, width)` of the first frame.
    pub fn frame_size(&self) -> Result<(usize, usize)> {
        match &self.frames {
            Frames::Memory(f) => Ok((f[0].height() as usize, f[0].width() as usize)),
            Frames::Files(_) => {
                let f = self.frame(0)?;
                Ok((f.height(), f.width()))
            }
        }
    }
}

pub fn parse_groundtruth(text: &str) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Format {
                expected: "x,y,w,h".into(),
                found: format!("line {}: {line:?}", n + 1),
            })?;
        let [x, y, w, h] = vals[..] else {
            return Err(Error::Format {
                expected: "four comma-separated values".into(),
                found: format!("line {}: {line:?}", n + 1),
            });
        };
        boxes.push(BBox::from_top_left(x, y, w, h)?);
    }
    Ok(boxes)
}

pub fn format_groundtruth(boxes: &[BBox]) -> String {
    boxes
        .iter()
        .map(|b| {
            let [x, y, w, h] = b.to_top_left();
            format!("{x},{y},{w},{h}\n")
        })
        .collect()
}

/// Opens every sequence directory under `root` (sorted by name).
pub fn open_all(root: &Path) -> Result<Vec<Sequence>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join("groundtruth.txt").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| Sequence::open(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groundtruth_round_trip() {
        let boxes = vec![
            BBox::from_top_left(1.0, 2.0, 3.0, 4.0).unwrap(),
            BBox::from_top_left(10.5, 0.25, 7.0, 9.0).unwrap(),
        ];
        let text = format_groundtruth(&boxes);
        assert_eq!(text.lines().next().unwrap(), "1,2,3,4");
        assert_eq!(parse_groundtruth(&text).unwrap(), boxes);
    }

    #[test]
    fn malformed_groundtruth_is_rejected() {
        assert!(parse_groundtruth("1,2,3").is_err());
        assert!(parse_groundtruth("1,2,x,4").is_err());
        assert!(parse_groundtruth("1,2,0,4").is_err());
    }

    #[test]
    fn directory_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let frames = vec![RgbImage::from_pixel(8, 6, image::Rgb([10, 20, 30])); 3];
        let gt = vec![BBox::from_top_left(1.0, 1.0, 2.0, 2.0).unwrap(); 3];
        let seq = Sequence::from_memory("s", frames, gt.clone()).unwrap();
        let dir = tmp.path().join("s");
        seq.save(&dir).unwrap();
        assert!(dir.join("frames/000001.png").is_file());
        let back = Sequence::open(&dir).unwrap();
        assert_eq!(back.id(), "s");
        assert_eq!(back.groundtruth(), &gt[..]);
        assert_eq!(back.frame(2).unwrap(), seq.frame(2).unwrap());
        assert_eq!(back.frame_size().unwrap(), (6, 8));
    }

    #[test]
    fn frame_count_mismatch_is_a_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        let frames = vec![RgbImage::new(4, 4); 2];
        let gt = vec![BBox::from_top_left(0.0, 0.0, 2.0, 2.0).unwrap(); 2];
        Sequence::from_memory("s", frames, gt).unwrap().save(tmp.path()).unwrap();
        fs::write(tmp.path().join("groundtruth.txt"), "0,0,2,2\n").unwrap();
        assert!(matches!(Sequence::open(tmp.path()), Err(Error::Format { .. })));
    }
}
