//! File formats at the command-line boundary: timestamp, scan and
//! saturation CSVs, JSON documents and sha256 digests.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sps_core::mc::TimestampRecord;
use sps_core::polarization::AngleScan;

use crate::error::{CliError, CliResult};

pub const TIMESTAMP_HEADER: &str = "channel,t_ps";

pub fn timestamp_file_name(channel: u8) -> String {
    format!("ch{channel}.csv")
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Runs `body` against a buffered writer for `path` and flushes it.
pub fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let mut out = create(path)?;
    body(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
        writeln!(out)
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::io(path, format!("{}: {}", e.path(), e.inner())))
}

pub fn write_timestamps(path: &Path, records: &[TimestampRecord]) -> CliResult<()> {
    write_with(path, |out| {
        writeln!(out, "{TIMESTAMP_HEADER}")?;
        for r in records {
            writeln!(out, "{},{}", r.channel, r.t_ps)?;
        }
        Ok(())
    })
}

fn csv_reader(path: &Path, header: &str) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got = rdr.headers().map_err(|e| CliError::io(path, e))?.iter().collect::<Vec<_>>().join(",");
    if got != header {
        return Err(CliError::io(path, format!("expected header `{header}`, found `{got}`")));
    }
    Ok(rdr)
}

/// Reads one channel's timestamp file, checking the channel column, sign
/// and time order.
pub fn read_timestamps(path: &Path, channel: u8) -> CliResult<Vec<i64>> {
    let mut rdr = csv_reader(path, TIMESTAMP_HEADER)?;
    let mut times = Vec::new();
    for (row, rec) in rdr.deserialize::<TimestampRecord>().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| CliError::io(path, format!("line {line}: {e}")))?;
        if rec.channel != channel {
            return Err(CliError::io(path, format!("line {line}: expected channel {channel}, found {}", rec.channel)));
        }
        if rec.t_ps < 0 {
            return Err(CliError::io(path, format!("line {line}: negative timestamp {}", rec.t_ps)));
        }
        if times.last().is_some_and(|&last| rec.t_ps < last) {
            return Err(CliError::io(path, format!("line {line}: timestamps are not sorted")));
        }
        times.push(rec.t_ps);
    }
    Ok(times)
}

fn read_pairs(path: &Path, header: &str) -> CliResult<Vec<(f64, f64)>> {
    let mut rdr = csv_reader(path, header)?;
    rdr.deserialize::<(f64, f64)>()
        .enumerate()
        .map(|(row, r)| r.map_err(|e| CliError::io(path, format!("line {}: {e}", row + 2))))
        .collect()
}

pub const SCAN_HEADER: &str = "angle_deg,counts_per_s";
pub const SATURATION_HEADER: &str = "power_nw,counts_per_s";

pub fn read_scan(path: &Path) -> CliResult<AngleScan> {
    let (angles, counts) = read_pairs(path, SCAN_HEADER)?.into_iter().unzip();
    Ok(AngleScan::new(angles, counts)?)
}

pub fn read_saturation(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    read_pairs(path, SATURATION_HEADER)
}

/// Digest of one file, as recorded in manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(h.finalize()), total))
}

/// Digest of `dir/name`, recorded under the relative `name`.
pub fn digest_in(dir: &Path, name: &str) -> CliResult<FileDigest> {
    let (sha256, bytes) = sha256_file(&dir.join(name))?;
    Ok(FileDigest { path: PathBuf::from(name), sha256, bytes })
}

/// Digest recorded under the path as given.
pub fn digest_at(path: &Path) -> CliResult<FileDigest> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileDigest { path: path.to_path_buf(), sha256, bytes })
}
