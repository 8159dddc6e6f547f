//! Binary checkpoint: magic, format version, a length-prefixed JSON header and
//! every parameter block as little-endian f64 in declaration order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::ParamBlock;
use super::{Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MDADCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    cardinalities: Vec<u32>,
    n_levels: usize,
    n_params: usize,
    blocks: Vec<ParamBlock>,
}

pub fn write_checkpoint<W: Write>(net: &Model, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: net.config().clone(),
        cardinalities: net.cardinalities(),
        n_levels: net.n_levels(),
        n_params: net.n_params(),
        blocks: net.blocks().to_vec(),
    })?;
    let io = |e| Error::io("checkpoint", e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for p in net.params_f64() {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model> {
    let truncated = |_| Error::Checkpoint("truncated file".into());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(truncated)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(truncated)?;
    let len = u64::from_le_bytes(b8);
    if len > 1 << 30 {
        return Err(Error::Checkpoint("header too large".into()));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header).map_err(truncated)?;
    let header: Header = serde_json::from_slice(&header)?;
    let (config, cards, n_levels) = (header.config, header.cardinalities, header.n_levels);
    let net = Model::new(config.clone(), &cards, n_levels)?;
    if net.n_params() != header.n_params || net.blocks().len() != header.blocks.len() {
        return Err(Error::Checkpoint("parameter layout does not match the configuration".into()));
    }
    for (a, b) in net.blocks().iter().zip(&header.blocks) {
        if (a.name.as_str(), a.rows, a.cols) != (b.name.as_str(), b.rows, b.cols) {
            return Err(Error::Checkpoint(format!("block `{}` has an unexpected shape", b.name)));
        }
    }
    let mut params = Vec::with_capacity(net.n_params());
    for _ in 0..net.n_params() {
        r.read_exact(&mut b8).map_err(truncated)?;
        params.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut b8).map_err(|e| Error::io("checkpoint", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Model::from_f64_params(config, &cards, n_levels, params)
}

pub fn save_checkpoint(net: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(net, BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::MaskedView;
    use crate::scorer::ReconstructionEstimator;

    use crate::model::{Precision, ReconNet};

    fn net(precision: Precision) -> Model {
        let cfg = ModelConfig {
            embed_dim: 3,
            hidden_dim: 4,
            n_layers: 2,
            seed: 9,
            precision,
            ..ModelConfig::default()
        };
        let mut net = ReconNet::<f64>::new(cfg.clone(), &[2, 5, 3], 4).unwrap();
        net.update_params(|p| {
            for (i, v) in p.iter_mut().enumerate() {
                *v += (i as f64).sin() * 1e-3;
            }
        });
        Model::from_f64_params(cfg, &[2, 5, 3], 4, net.params().to_vec()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for precision in [Precision::F32, Precision::F64] {
            let a = net(precision);
            let mut buf = Vec::new();
            write_checkpoint(&a, &mut buf).unwrap();
            let b = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(a.params_f64(), b.params_f64());
            assert_eq!(a.config(), b.config());
            assert_eq!(b.config().precision, precision);
            let v = MaskedView::from_mask(&[1, 4, 0], &[true, false, true], 2, 0);
            assert_eq!(a.predict_masked(&v).unwrap(), b.predict_masked(&v).unwrap());
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&net(Precision::F64), &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        let mut ver = buf;
        ver[8] = 9;
        assert!(matches!(read_checkpoint(&ver[..]), Err(Error::Checkpoint(_))));
    }
}
