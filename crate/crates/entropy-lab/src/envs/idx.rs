//! IDX binary image/label ingestion.
//!
//! The format is big-endian: images carry magic `0x00000803`, then count,
//! rows, cols, then one unsigned byte per pixel; labels carry magic
//! `0x00000801`, then count, then one byte per label. Parse errors name the
//! offending field and the byte offset where it was detected.

use super::{EnvError, StateVector};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Flattened images in `[0,1]` with their labels. The action space is the
/// ten class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub images: Vec<StateVector>,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl LabeledImageSet {
    pub const ACTION_COUNT: usize = 10;

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.rows * self.cols
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32, EnvError> {
    let end = offset.checked_add(4).ok_or(EnvError::Format {
        what,
        offset,
        detail: "offset overflow".into(),
    })?;
    let slice = bytes.get(offset..end).ok_or(EnvError::Format {
        what,
        offset,
        detail: format!("truncated: need 4 bytes, stream has {}", bytes.len()),
    })?;
    Ok(u32::from_be_bytes([slice[0], slice[1], slice[2], slice[3]]))
}

/// Parses an IDX image stream into flattened `[0,1]` vectors (row-major,
/// pixels divided by 255). Returns `(images, rows, cols)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<StateVector>, usize, usize), EnvError> {
    let magic = read_u32_be(bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(EnvError::Format {
            what: "image magic",
            offset: 0,
            detail: format!("expected 0x{IMAGE_MAGIC:08x}, got 0x{magic:08x}"),
        });
    }
    let count = read_u32_be(bytes, 4, "image count")? as usize;
    let rows = read_u32_be(bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(bytes, 12, "image cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(EnvError::Format {
            what: "image dimensions",
            offset: 8,
            detail: format!("degenerate image shape {rows}x{cols}"),
        });
    }
    let pixel_len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(EnvError::Format {
            what: "image count",
            offset: 4,
            detail: "pixel count overflows".into(),
        })?;
    let data = &bytes[16..];
    if data.len() < pixel_len {
        return Err(EnvError::Format {
            what: "image pixels",
            offset: 16 + data.len(),
            detail: format!("truncated: expected {pixel_len} pixel bytes, got {}", data.len()),
        });
    }
    if data.len() > pixel_len {
        return Err(EnvError::Format {
            what: "image pixels",
            offset: 16 + pixel_len,
            detail: format!("{} trailing bytes after pixel data", data.len() - pixel_len),
        });
    }
    let dim = rows * cols;
    let images = (0..count)
        .map(|i| {
            data[i * dim..(i + 1) * dim]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect()
        })
        .collect();
    Ok((images, rows, cols))
}

/// Parses an IDX label stream. Labels must fit the ten-class action space.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, EnvError> {
    let magic = read_u32_be(bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(EnvError::Format {
            what: "label magic",
            offset: 0,
            detail: format!("expected 0x{LABEL_MAGIC:08x}, got 0x{magic:08x}"),
        });
    }
    let count = read_u32_be(bytes, 4, "label count")? as usize;
    let data = &bytes[8..];
    if data.len() < count {
        return Err(EnvError::Format {
            what: "label bytes",
            offset: 8 + data.len(),
            detail: format!("truncated: expected {count} label bytes, got {}", data.len()),
        });
    }
    if data.len() > count {
        return Err(EnvError::Format {
            what: "label bytes",
            offset: 8 + count,
            detail: format!("{} trailing bytes after label data", data.len() - count),
        });
    }
    data.iter()
        .enumerate()
        .map(|(i, &b)| {
            let label = b as usize;
            if label >= LabeledImageSet::ACTION_COUNT {
                Err(EnvError::Format {
                    what: "label value",
                    offset: 8 + i,
                    detail: format!("label {label} outside 0..={}", LabeledImageSet::ACTION_COUNT - 1),
                })
            } else {
                Ok(label)
            }
        })
        .collect()
}

/// Parses paired image and label streams and checks that their counts agree.
pub fn load_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledImageSet, EnvError> {
    let (images, rows, cols) = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if images.len() != labels.len() {
        return Err(EnvError::Format {
            what: "item count",
            offset: 4,
            detail: format!("{} images but {} labels", images.len(), labels.len()),
        });
    }
    Ok(LabeledImageSet {
        images,
        labels,
        rows,
        cols,
    })
}

/// Loads a labeled set from IDX files on disk.
pub fn load_idx_files(
    images_path: &std::path::Path,
    labels_path: &std::path::Path,
) -> Result<LabeledImageSet, EnvError> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    load_idx(&images, &labels)
}

/// Encodes raw pixel bytes as an IDX image stream (the inverse of
/// [`parse_idx_images`] up to quantization). Handy for writing fixtures and
/// exporting generated datasets.
pub fn encode_idx_images(images: &[Vec<u8>], rows: u32, cols: u32) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&rows.to_be_bytes());
    bytes.extend_from_slice(&cols.to_be_bytes());
    for img in images {
        bytes.extend_from_slice(img);
    }
    bytes
}

/// Encodes labels as an IDX label stream.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_assembled_image_fixture() {
        // magic, count=1, rows=2, cols=2, pixels [0, 128, 255, 64]
        let bytes = [
            0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00,
            0x00, 0x02, 0, 128, 255, 64,
        ];
        let (images, rows, cols) = parse_idx_images(&bytes).unwrap();
        assert_eq!((rows, cols), (2, 2));
        assert_eq!(images.len(), 1);
        assert_eq!(images[0], vec![0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn hand_assembled_label_fixture() {
        let bytes = [0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x01, 7];
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7]);
    }

    #[test]
    fn label_magic_in_the_image_slot_is_rejected() {
        let bytes = [0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x01, 7];
        let err = parse_idx_images(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("image magic"), "{msg}");
        assert!(msg.contains("byte 0"), "{msg}");
        assert!(msg.contains("0x00000801"), "{msg}");
    }

    #[test]
    fn truncated_streams_name_field_and_offset() {
        let full = encode_idx_images(&[vec![1, 2, 3, 4]], 2, 2);
        let err = parse_idx_images(&full[..18]).unwrap_err();
        assert!(matches!(
            err,
            EnvError::Format {
                what: "image pixels",
                ..
            }
        ));
        let err = parse_idx_images(&full[..7]).unwrap_err();
        assert!(matches!(err, EnvError::Format { what: "image count", offset: 4, .. }));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_idx_labels(&[3]);
        bytes.push(9);
        let err = parse_idx_labels(&bytes).unwrap_err();
        assert!(matches!(err, EnvError::Format { what: "label bytes", offset: 9, .. }));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let images = encode_idx_images(&[vec![0; 4], vec![0; 4]], 2, 2);
        let labels = encode_idx_labels(&[1]);
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(matches!(err, EnvError::Format { what: "item count", .. }));
    }

    #[test]
    fn labels_outside_action_space_are_rejected() {
        let err = parse_idx_labels(&encode_idx_labels(&[4, 11])).unwrap_err();
        assert!(matches!(err, EnvError::Format { what: "label value", offset: 9, .. }));
    }

    #[test]
    fn pixel_overflow_is_rejected_not_panicking() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        assert!(parse_idx_images(&bytes).is_err());
    }
}
