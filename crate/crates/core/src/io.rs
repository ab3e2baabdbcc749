//! File formats: frame stacks (text header plus raw `f32` payload),
//! molecule lists as CSV, and PGM renderings.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{nm_to_fine_index, CoarseFrame, GridGeometry, Molecule, MoleculeSet};
use crate::sim::FrameStack;

pub const MOLECULE_HEADER: &str = "frame,xnano,ynano,intensity";
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackHeader {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl StackHeader {
    pub fn payload_bytes(&self) -> u64 {
        (self.width * self.height * self.frames * 4) as u64
    }
}

/// The payload sits next to the header with the extension `raw`.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn write_stack(path: &Path, stack: &FrameStack) -> Result<()> {
    let m = stack.geometry().coarse_size();
    let header = format!("width={m}\nheight={m}\nframes={}\ndtype={DTYPE}\n", stack.len());
    let mut payload = Vec::with_capacity(m * m * stack.len() * 4);
    for frame in stack.frames() {
        for v in frame.values().iter() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    let raw = payload_path(path);
    fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))
}

pub fn read_stack_header(path: &Path) -> Result<StackHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Header {
        path: path.to_path_buf(),
        reason,
    };
    let (mut width, mut height, mut frames, mut dtype) = (None, None, None, None);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| bad(format!("line {}: {key} must be a nonnegative integer, got {value:?}", n + 1)))
        };
        match key {
            "width" => width = Some(number()?),
            "height" => height = Some(number()?),
            "frames" => frames = Some(number()?),
            "dtype" => dtype = Some(value.to_string()),
            other => return Err(bad(format!("line {}: unknown key {other:?}", n + 1))),
        }
    }
    let width = width.ok_or_else(|| bad("missing width".into()))?;
    let height = height.ok_or_else(|| bad("missing height".into()))?;
    let frames = frames.ok_or_else(|| bad("missing frames".into()))?;
    match dtype.as_deref() {
        Some(DTYPE) => {}
        Some(other) => return Err(bad(format!("unsupported dtype {other:?}, expected {DTYPE}"))),
        None => return Err(bad("missing dtype".into())),
    }
    Ok(StackHeader { width, height, frames })
}

/// Reads a stack of square frames with the given fine-grid refinement.
pub fn read_stack(path: &Path, upsample: usize, coarse_pixel_nm: f64) -> Result<FrameStack> {
    let header = read_stack_header(path)?;
    if header.width != header.height {
        return Err(Error::Header {
            path: path.to_path_buf(),
            reason: format!("frames must be square, got {}x{}", header.width, header.height),
        });
    }
    let g = GridGeometry::new(header.width, upsample, coarse_pixel_nm)?;
    let raw = payload_path(path);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() as u64 != header.payload_bytes() {
        return Err(Error::Truncated {
            path: raw,
            expected: header.payload_bytes(),
            found: bytes.len() as u64,
        });
    }
    let per_frame = header.width * header.height;
    let frames = if per_frame == 0 {
        Vec::new()
    } else {
        bytes
            .chunks_exact(per_frame * 4)
            .enumerate()
            .map(|(f, chunk)| {
                let values: Vec<f64> = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect();
                let arr = Array2::from_shape_vec((header.height, header.width), values).expect("frame size");
                CoarseFrame::new(g, arr, f)
            })
            .collect::<Result<_>>()?
    };
    FrameStack::new(g, frames)
}

pub fn format_molecules(set: &MoleculeSet) -> String {
    let mut s = String::with_capacity(48 * (set.len() + 1));
    s.push_str(MOLECULE_HEADER);
    s.push('\n');
    for m in set.molecules() {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", m.frame_index, m.x_nm, m.y_nm, m.intensity);
    }
    s
}

pub fn write_molecules(path: &Path, set: &MoleculeSet) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_molecules(set).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_molecules(text: &str, path: &Path, geometry: GridGeometry) -> Result<MoleculeSet> {
    let record = |line: usize, reason: String| Error::Record {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MOLECULE_HEADER => {}
        Some((_, h)) => return Err(record(1, format!("expected header {MOLECULE_HEADER:?}, got {h:?}"))),
        None => return Err(record(1, "empty file".into())),
    }
    let mut set = MoleculeSet::empty(geometry);
    for (n, line) in lines {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(record(line_no, format!("expected 4 columns, found {}", fields.len())));
        }
        let frame_index = fields[0]
            .parse::<usize>()
            .map_err(|_| record(line_no, format!("frame {:?} is not a nonnegative integer", fields[0])))?;
        let mut nums = [0.0; 3];
        for (slot, (name, raw)) in nums.iter_mut().zip(["xnano", "ynano", "intensity"].iter().zip(&fields[1..])) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| record(line_no, format!("{name} {raw:?} is not a finite number")))?;
        }
        let m = Molecule {
            x_nm: nums[0],
            y_nm: nums[1],
            intensity: nums[2],
            frame_index,
        };
        set.push(m).map_err(|e| record(line_no, e.to_string()))?;
    }
    Ok(set)
}

pub fn read_molecules(path: &Path, geometry: GridGeometry) -> Result<MoleculeSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_molecules(&text, path, geometry)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistogramWeight {
    #[default]
    Count,
    Intensity,
}

/// Fine-grid histogram of molecule positions, min-max scaled to 8 bits.
pub fn histogram_image(set: &MoleculeSet, geometry: &GridGeometry, weight: HistogramWeight) -> Result<Array2<u8>> {
    let n = geometry.fine_size();
    let mut bins = Array2::<f64>::zeros((n, n));
    for m in set.molecules() {
        let (i, j) = nm_to_fine_index(m.x_nm, m.y_nm, geometry)?;
        bins[[i, j]] += match weight {
            HistogramWeight::Count => 1.0,
            HistogramWeight::Intensity => m.intensity,
        };
    }
    let lo = bins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(bins.mapv(|v| if span > 0.0 { (255.0 * (v - lo) / span).round() as u8 } else { 0 }))
}

pub fn encode_pgm(image: &Array2<u8>) -> Vec<u8> {
    let (rows, cols) = image.dim();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(image.iter());
    out
}

pub fn render_histogram(set: &MoleculeSet, geometry: &GridGeometry, weight: HistogramWeight, path: &Path) -> Result<()> {
    let image = histogram_image(set, geometry, weight)?;
    fs::write(path, encode_pgm(&image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> GridGeometry {
        GridGeometry::new(8, 4, 100.0).unwrap()
    }

    fn random_stack(frames: usize, seed: u64) -> FrameStack {
        let g = geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..frames)
            .map(|f| {
                let arr = Array2::from_shape_fn((8, 8), |_| rng.random_range(-50.0f32..500.0) as f64);
                CoarseFrame::new(g, arr, f).unwrap()
            })
            .collect();
        FrameStack::new(g, frames).unwrap()
    }

    #[test]
    fn stack_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hdr");
        let stack = random_stack(3, 1);
        write_stack(&path, &stack).unwrap();
        let back = read_stack(&path, 4, 100.0).unwrap();
        assert_eq!(back, stack);
        let bytes = fs::read(payload_path(&path)).unwrap();
        write_stack(&path, &back).unwrap();
        assert_eq!(fs::read(payload_path(&path)).unwrap(), bytes);
        assert_eq!(bytes.len(), 3 * 64 * 4);
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hdr");
        write_stack(&path, &random_stack(1, 2)).unwrap();
        fs::write(&path, "width=8\nheight=8\nframes=2\ndtype=f32le\n").unwrap();
        match read_stack(&path, 4, 100.0) {
            Err(Error::Truncated { expected, found, .. }) => {
                assert_eq!(expected, 512);
                assert_eq!(found, 256);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn empty_stack() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.hdr");
        write_stack(&path, &FrameStack::new(geometry(), Vec::new()).unwrap()).unwrap();
        assert_eq!(fs::metadata(payload_path(&path)).unwrap().len(), 0);
        assert!(read_stack(&path, 4, 100.0).unwrap().is_empty());
    }

    #[test]
    fn malformed_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.hdr");
        for text in [
            "width=8\nheight=8\ndtype=f32le\n",
            "width=8\nheight=8\nframes=1\ndtype=f64le\n",
            "width=eight\nheight=8\nframes=1\ndtype=f32le\n",
            "width 8\n",
            "width=8\nheight=4\nframes=0\ndtype=f32le\n",
        ] {
            fs::write(&path, text).unwrap();
            fs::write(payload_path(&path), []).unwrap();
            assert!(matches!(read_stack(&path, 4, 100.0), Err(Error::Header { .. })), "{text:?}");
        }
    }

    #[test]
    fn molecule_round_trip() {
        let g = geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mols: Vec<Molecule> = (0..40)
            .map(|i| Molecule {
                x_nm: rng.random_range(0.0..800.0),
                y_nm: rng.random_range(0.0..800.0),
                intensity: rng.random_range(0.0..2000.0),
                frame_index: i / 7,
            })
            .collect();
        let set = MoleculeSet::new(g, mols).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_molecules(&path, &set).unwrap();
        let back = read_molecules(&path, g).unwrap();
        assert_eq!(back.len(), set.len());
        for (a, b) in set.molecules().iter().zip(back.molecules()) {
            assert_eq!(a.frame_index, b.frame_index);
            assert!((a.x_nm - b.x_nm).abs() <= 1e-6);
            assert!((a.y_nm - b.y_nm).abs() <= 1e-6);
            assert!((a.intensity - b.intensity).abs() <= 1e-6);
        }
    }

    #[test]
    fn header_only_file_is_empty() {
        let set = parse_molecules("frame,xnano,ynano,intensity\n", Path::new("m.csv"), geometry()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn bad_rows_name_their_line() {
        let cases = [
            ("frame,xnano,ynano,intensity\n0,1,1,5\n0,10,10,-1\n", 3),
            ("frame,xnano,ynano,intensity\n0,1,1\n", 2),
            ("frame,xnano,ynano,intensity\n0,1,1,1\n\n0,abc,1,1\n", 4),
            ("frame,x,y,intensity\n", 1),
        ];
        for (text, want) in cases {
            match parse_molecules(text, Path::new("m.csv"), geometry()) {
                Err(Error::Record { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("expected a record error, got {other:?}"),
            }
        }
    }

    fn at(x: f64, y: f64, intensity: f64) -> Molecule {
        Molecule {
            x_nm: x,
            y_nm: y,
            intensity,
            frame_index: 0,
        }
    }

    #[test]
    fn histogram_examples() {
        let g = geometry();
        let one = MoleculeSet::new(g, vec![at(12.5, 37.5, 3.0)]).unwrap();
        let img = histogram_image(&one, &g, HistogramWeight::Count).unwrap();
        assert_eq!(img[[1, 0]], 255);
        assert_eq!(img.iter().filter(|v| **v != 0).count(), 1);

        let empty = MoleculeSet::empty(g);
        assert!(histogram_image(&empty, &g, HistogramWeight::Count).unwrap().iter().all(|v| *v == 0));

        let two = MoleculeSet::new(g, vec![at(12.5, 12.5, 1.0), at(13.0, 14.0, 9.0)]).unwrap();
        let img = histogram_image(&two, &g, HistogramWeight::Count).unwrap();
        assert_eq!(img[[0, 0]], 255);
        assert_eq!(img.iter().filter(|v| **v != 0).count(), 1);

        let mixed = MoleculeSet::new(g, vec![at(12.5, 12.5, 1.0), at(112.5, 12.5, 4.0)]).unwrap();
        let img = histogram_image(&mixed, &g, HistogramWeight::Intensity).unwrap();
        assert_eq!((img[[0, 0]], img[[0, 4]]), (64, 255));
    }

    #[test]
    fn pgm_encoding() {
        let img = Array2::from_shape_vec((2, 3), vec![0u8, 1, 2, 3, 4, 255]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 3, 4, 255]);
    }
}
