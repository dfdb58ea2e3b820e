//! Binary checkpoints for networks and codebooks, and codebook CSV.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! `f64`. A network checkpoint is
//!
//! ```text
//! "EVNT" | version | layer_count
//! per layer: inputs | outputs | nonlinearity (u8) | weights (out*in, row-major) | biases (out)
//! ```
//!
//! and a codebook is `"EVCB" | version | rows | cols | data (rows*cols, row-major)`.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::codebook::Codebook;
use crate::error::{EvError, Result};
use crate::network::{DenseLayer, DenseNet, LayerParams, Nonlinearity};

pub const NET_MAGIC: &[u8; 4] = b"EVNT";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"EVCB";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn dim_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| EvError::invalid(format!("dimension {n} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(EvError::Parse {
                offset: self.bytes.len() as u64,
                msg: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| EvError::Parse {
            offset: self.pos as u64,
            msg: format!("{what} size overflows"),
        })?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(EvError::Parse {
                offset: 0,
                msg: format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(magic)),
            });
        }
        let at = self.pos as u64;
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(EvError::Parse {
                offset: at,
                msg: format!("unsupported version {v}"),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(EvError::Parse {
                offset: self.pos as u64,
                msg: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub fn encode_net(net: &DenseNet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(NET_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim_u32(net.layers().len())?);
    for layer in net.layers() {
        put_u32(&mut out, dim_u32(layer.inputs())?);
        put_u32(&mut out, dim_u32(layer.outputs())?);
        out.push(layer.nonlinearity().code());
        put_f64s(&mut out, &layer.params().weights);
        put_f64s(&mut out, &layer.params().biases);
    }
    Ok(out)
}

pub fn decode_net(bytes: &[u8]) -> Result<DenseNet> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(NET_MAGIC)?;
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let inputs = r.u32("layer inputs")? as usize;
        let outputs = r.u32("layer outputs")? as usize;
        let at = r.pos as u64;
        let code = r.take(1, "nonlinearity")?[0];
        let nl = Nonlinearity::from_code(code).ok_or_else(|| EvError::Parse {
            offset: at,
            msg: format!("unknown nonlinearity code {code}"),
        })?;
        let weights = r.f64s(inputs.saturating_mul(outputs), "weights")?;
        let biases = r.f64s(outputs, "biases")?;
        layers.push(DenseLayer::new(inputs, outputs, LayerParams { weights, biases }, nl)?);
    }
    r.finish()?;
    DenseNet::from_layers(layers)
}

pub fn save_net(net: &DenseNet, path: &Path) -> Result<()> {
    std::fs::write(path, encode_net(net)?)?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    decode_net(&std::fs::read(path)?)
}

pub fn encode_codebook(cb: &Codebook) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CODEBOOK_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim_u32(cb.size())?);
    put_u32(&mut out, dim_u32(cb.dim())?);
    put_f64s(&mut out, cb.as_flat());
    Ok(out)
}

pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(CODEBOOK_MAGIC)?;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let data = r.f64s(rows.saturating_mul(cols), "codebook data")?;
    r.finish()?;
    Codebook::from_flat(rows, cols, data)
}

pub fn save_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    std::fs::write(path, encode_codebook(cb)?)?;
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    decode_codebook(&std::fs::read(path)?)
}

/// One code item per row, with header `c0,...,c{D-1}`.
pub fn write_codebook_csv<W: Write>(cb: &Codebook, mut out: W) -> Result<()> {
    let header: Vec<String> = (0..cb.dim()).map(|j| format!("c{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..cb.size() {
        let row: Vec<String> = cb.item(i).iter().map(f64::to_string).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the CSV written by [`write_codebook_csv`]; a header line is optional.
pub fn read_codebook_csv<R: BufRead>(input: R) -> Result<Codebook> {
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let start = offset;
        offset += line.len() as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if n == 0 => continue,
            Err(e) => {
                return Err(EvError::Parse {
                    offset: start,
                    msg: format!("line {}: {e}", n + 1),
                })
            }
        }
    }
    Codebook::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::InitSpec;

    fn net() -> DenseNet {
        DenseNet::init(&[3, 5, 4, 2], Nonlinearity::Tanh, &InitSpec::uniform(11)).unwrap()
    }

    #[test]
    fn net_round_trip_is_bit_exact() {
        let mut n = net();
        n.layers_mut()[0].params_mut().weights[0] = -0.0;
        n.layers_mut()[1].params_mut().biases[1] = f64::MIN_POSITIVE / 3.0;
        let back = decode_net(&encode_net(&n).unwrap()).unwrap();
        let bits = |d: &DenseNet| d.blocks().flat_map(|b| b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        assert_eq!(bits(&n), bits(&back));
        assert_eq!(n, back);
    }

    #[test]
    fn net_layout() {
        let n = DenseNet::init(&[1, 1], Nonlinearity::Tanh, &InitSpec::constant(2.0)).unwrap();
        let b = encode_net(&n).unwrap();
        let mut expect = b"EVNT".to_vec();
        for w in [1u32, 1, 1, 1] {
            expect.extend_from_slice(&w.to_le_bytes());
        }
        expect.push(Nonlinearity::Identity.code());
        expect.extend_from_slice(&2.0f64.to_le_bytes());
        expect.extend_from_slice(&2.0f64.to_le_bytes());
        assert_eq!(b, expect);
    }

    #[test]
    fn net_decode_errors() {
        let b = encode_net(&net()).unwrap();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_net(&bad), Err(EvError::Parse { offset: 0, .. })));
        assert!(matches!(decode_net(&b[..b.len() - 3]), Err(EvError::Parse { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_net(&extra).is_err());
        let mut ver = b.clone();
        ver[4] = 9;
        assert!(matches!(decode_net(&ver), Err(EvError::Parse { offset: 4, .. })));
        let mut nl = b;
        nl[20] = 77;
        assert!(matches!(decode_net(&nl), Err(EvError::Parse { offset: 20, .. })));
    }

    #[test]
    fn codebook_round_trips() {
        let cb = Codebook::new(vec![vec![0.1, -2.5, 1e-300], vec![3.0, 0.0, -0.0]]).unwrap();
        assert_eq!(decode_codebook(&encode_codebook(&cb).unwrap()).unwrap(), cb);
        let mut csv = Vec::new();
        write_codebook_csv(&cb, &mut csv).unwrap();
        assert!(csv.starts_with(b"c0,c1,c2\n"));
        assert_eq!(read_codebook_csv(&csv[..]).unwrap(), cb);
        assert_eq!(read_codebook_csv(&b"1,2\n3,4\n"[..]).unwrap().size(), 2);
        assert!(read_codebook_csv(&b"1,2\n3,x\n"[..]).is_err());
        assert!(decode_codebook(&encode_net(&net()).unwrap()).is_err());
    }

    #[test]
    fn files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.bin");
        save_net(&net(), &p).unwrap();
        assert_eq!(load_net(&p).unwrap(), net());
        let q = dir.path().join("cb.bin");
        let cb = Codebook::new(vec![vec![1.0]]).unwrap();
        save_codebook(&cb, &q).unwrap();
        assert_eq!(load_codebook(&q).unwrap(), cb);
    }
}
