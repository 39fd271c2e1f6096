//! Raw binary dataset ingestion.
//!
//! Record layout: 1 label byte followed by 3072 pixel bytes — the three
//! 32x32 channel planes (R, then G, then B), row-major. This matches the
//! common binary distribution format of 32x32x3 image benchmarks, so real
//! data can be dropped in without any bundled download tooling.

use std::fs;
use std::path::Path;

use super::{DataError, Dataset, LabeledExample};
use crate::image::ImageTensor;

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;
const RECORD: usize = 1 + PIXELS;

/// Reads every record of `path` into a dataset with `class_count` classes.
pub fn read_raw_bin(path: &Path, class_count: usize) -> Result<Dataset, DataError> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(DataError::MalformedFile { len: bytes.len() as u64, record: RECORD });
    }
    let mut examples = Vec::with_capacity(bytes.len() / RECORD);
    for record in bytes.chunks_exact(RECORD) {
        let label = record[0] as usize;
        if label >= class_count {
            return Err(DataError::BadLabel { label, classes: class_count });
        }
        let data: Vec<f64> = record[1..].iter().map(|&b| b as f64).collect();
        let image = ImageTensor::from_vec(3, SIDE, SIDE, data).expect("record length fixed");
        examples.push(LabeledExample { image, label });
    }
    Dataset::new(examples, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Test-only encoder mirroring the record layout.
    fn write_raw_bin(path: &Path, examples: &[(u8, Vec<u8>)]) {
        let mut f = fs::File::create(path).unwrap();
        for (label, pixels) in examples {
            assert_eq!(pixels.len(), PIXELS);
            f.write_all(&[*label]).unwrap();
            f.write_all(pixels).unwrap();
        }
    }

    fn pixels_from_pattern(base: u8) -> Vec<u8> {
        (0..PIXELS).map(|i| base.wrapping_add((i % 251) as u8)).collect()
    }

    #[test]
    fn reads_well_formed_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.bin");
        write_raw_bin(&path, &[(3, pixels_from_pattern(0)), (7, pixels_from_pattern(9))]);
        let ds = read_raw_bin(&path, 10).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.example(0).label, 3);
        assert_eq!(ds.example(1).label, 7);
    }

    #[test]
    fn truncated_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        let mut bytes = vec![0u8; RECORD];
        bytes.push(42); // one stray byte: length 3073*n + 1
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_raw_bin(&path, 10), Err(DataError::MalformedFile { .. })));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("label.bin");
        write_raw_bin(&path, &[(9, pixels_from_pattern(1))]);
        assert!(matches!(read_raw_bin(&path, 5), Err(DataError::BadLabel { .. })));
    }

    #[test]
    fn round_trip_preserves_all_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.bin");
        let records: Vec<(u8, Vec<u8>)> =
            (0..4).map(|i| (i, pixels_from_pattern(17 * i + 1))).collect();
        write_raw_bin(&path, &records);
        let ds = read_raw_bin(&path, 10).unwrap();
        for (ex, (label, pixels)) in ds.examples().iter().zip(&records) {
            assert_eq!(ex.label, *label as usize);
            let back: Vec<u8> = ex.image.as_slice().iter().map(|&v| v as u8).collect();
            assert_eq!(&back, pixels);
        }
    }
}
