//! Zip packaging of the report bundle.

use std::io::{Cursor, Write};

use famrisk_core::report::BundleEntry;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

/// Deflated archive of `entries`, in order, with a fixed timestamp so the
/// same result always yields the same bytes.
pub fn zip_entries(entries: &[BundleEntry]) -> Vec<u8> {
    let mut w = ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    for e in entries {
        w.start_file(e.name, opts).expect("in-memory zip entry");
        w.write_all(&e.bytes).expect("in-memory zip write");
    }
    w.finish().expect("in-memory zip finish").into_inner()
}

/// Entry names of an archive, in stored order.
pub fn entry_names(archive: &[u8]) -> Result<Vec<String>, zip::result::ZipError> {
    let mut z = zip::ZipArchive::new(Cursor::new(archive))?;
    (0..z.len()).map(|i| Ok(z.by_index(i)?.name().to_string())).collect()
}
