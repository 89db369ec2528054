//! File open/create helpers whose errors name the offending path; a bare
//! "No such file or directory" is useless in a command taking several
//! path arguments.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use crate::error::Result;

/// Open `path` for buffered reading.
pub fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) => Err(tag(path, e).into()),
    }
}

/// Create or truncate `path` for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    match File::create(path) {
        Ok(f) => Ok(BufWriter::new(f)),
        Err(e) => Err(tag(path, e).into()),
    }
}

/// Read `path` to a string.
pub fn read_to_string(path: &Path) -> Result<String> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| tag(path, e))?;
    Ok(text)
}

/// Same error, prefixed with the path; the kind survives so callers can
/// still match on it.
fn tag(path: &Path, e: std::io::Error) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn missing_file_error_names_the_path() {
        let err = open(Path::new("/no/such/file.tsv")).unwrap_err();
        let Error::Io(io) = err else {
            panic!("expected io error, got {err:?}");
        };
        assert_eq!(io.kind(), std::io::ErrorKind::NotFound);
        assert!(io.to_string().contains("/no/such/file.tsv"), "{io}");
    }

    #[test]
    fn round_trip_through_string() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(read_to_string(&path).unwrap(), "abc");
    }
}
