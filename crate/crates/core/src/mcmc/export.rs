//! Draw export.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `BSBE` |
//! | 4     | version, u32 |
//! | 8 × 3 | `n_chains`, `n_draws`, `n_params` as u64 |
//! | 8 × N | f64 draws ordered `[chain][draw][param]` |
//!
//! Parameter names go in a sidecar text file, one per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ChainSet, SamplerSettings};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"BSBE";
pub const BINARY_VERSION: u32 = 1;

pub fn write_binary(chains: &ChainSet, path: &Path, names_path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(BINARY_MAGIC)?;
    put(&BINARY_VERSION.to_le_bytes())?;
    for dim in [chains.n_chains(), chains.n_draws(), chains.n_params()] {
        put(&(dim as u64).to_le_bytes())?;
    }
    for c in 0..chains.n_chains() {
        let columns = (0..chains.n_params()).map(|p| chains.chain_draws(c, p)).collect::<Vec<_>>();
        for d in 0..chains.n_draws() {
            for column in &columns {
                put(&column[d].to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mut names = String::new();
    for name in chains.names() {
        names.push_str(name);
        names.push('\n');
    }
    std::fs::write(names_path, names).map_err(|e| Error::io(names_path, e))
}

/// Reads a binary dump back. The settings are not stored in the dump; the
/// returned set carries `settings` as given.
pub fn read_binary(path: &Path, names_path: &Path, settings: SamplerSettings) -> Result<ChainSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        r.read_exact(&mut buf).map_err(|e| Error::data(path, format!("truncated dump: {e}")))?;
        Ok(buf)
    };
    if take(4)? != BINARY_MAGIC {
        return Err(Error::data(path, "not a BSBE draw dump"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(Error::data(path, format!("unsupported dump version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    }
    let [n_chains, n_draws, n_params] = dims;

    let names_file = File::open(names_path).map_err(|e| Error::io(names_path, e))?;
    let names: Vec<String> = BufReader::new(names_file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(names_path, e))?;
    if names.len() != n_params {
        return Err(Error::data(
            names_path,
            format!("{} names for {n_params} parameters", names.len()),
        ));
    }

    let raw = take(n_chains * n_draws * n_params * 8)?;
    let mut values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let mut draws = vec![vec![vec![0.0; n_draws]; n_params]; n_chains];
    for chain in draws.iter_mut() {
        for d in 0..n_draws {
            for param in chain.iter_mut() {
                param[d] = values.next().expect("length checked");
            }
        }
    }
    ChainSet::from_draws(names, draws, settings)
}

/// One row per retained draw: `chain,draw,<parameters...>`.
pub fn write_csv(chains: &ChainSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let fail = |e: csv::Error| Error::data(path, e.to_string());
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(chains.names().iter().cloned());
    w.write_record(&header).map_err(fail)?;
    for c in 0..chains.n_chains() {
        let columns = (0..chains.n_params()).map(|p| chains.chain_draws(c, p)).collect::<Vec<_>>();
        for d in 0..chains.n_draws() {
            let mut row = vec![c.to_string(), d.to_string()];
            row.extend(columns.iter().map(|col| col[d].to_string()));
            w.write_record(&row).map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ChainSet {
        let draws = vec![
            vec![vec![0.1, -2.5, 3.0], vec![1e-300, f64::MAX, 7.0]],
            vec![vec![4.0, 5.0, 6.0], vec![-0.0, 8.0, 9.5]],
        ];
        ChainSet::from_draws(vec!["a".into(), "log_rr[x:y]".into()], draws, SamplerSettings::desk()).unwrap()
    }

    #[test]
    fn binary_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (bin, names) = (dir.path().join("c.bin"), dir.path().join("p.txt"));
        let set = sample();
        write_binary(&set, &bin, &names).unwrap();
        let bytes = std::fs::read(&bin).unwrap();
        assert_eq!(&bytes[..4], b"BSBE");
        assert_eq!(bytes.len(), 4 + 4 + 24 + 12 * 8);
        // chain 0, draw 0: params a then log_rr.
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.1);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 1e-300);
        let back = read_binary(&bin, &names, SamplerSettings::desk()).unwrap();
        assert_eq!(back, set);

        std::fs::write(&bin, b"NOPE").unwrap();
        assert!(read_binary(&bin, &names, SamplerSettings::desk()).is_err());
    }

    #[test]
    fn csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&sample(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "chain,draw,a,log_rr[x:y]");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[4], "1,0,4,-0");
    }
}
