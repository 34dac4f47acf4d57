use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::io::{
    expect_eof, expect_magic, open_reader, read_f32, read_f32_vec, read_u32, read_u64, read_u8, write_atomic,
    write_f32_slice, write_magic,
};
use crate::krnet::{KrNet, NetworkConfig};
use crate::signal::Domain;

const MAGIC: &[u8; 4] = b"KRN1";
const KIND: &str = "checkpoint";

/// Trained (or initial) network state with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: Vec<f32>,
    pub adam: Option<AdamState>,
    pub epoch: u32,
    pub val_loss: f32,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_network(net: &KrNet<f32>, adam: Option<AdamState>, epoch: u32, val_loss: f32, seed: u64) -> Self {
        Self {
            config: net.config().clone(),
            params: net.params().to_vec(),
            adam,
            epoch,
            val_loss,
            seed,
        }
    }

    pub fn network(&self) -> Result<KrNet<f32>> {
        KrNet::from_params(self.config.clone(), self.params.clone())
    }

    /// Layout: magic, network config (feat, blocks_per, kernel, n_total as
    /// u32; transform flag u8; u32 block count; one u8 per block, 0 = k,
    /// 1 = R), u64 parameter count, f32 parameters, u8 moment flag with
    /// optional u64 step and f32 `m`, `v`, u32 epoch, f32 validation loss,
    /// u64 seed.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        write_magic(w, MAGIC)?;
        for v in [c.feat, c.blocks_per, c.kernel, c.n_total] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_u8(c.use_domain_transforms as u8)?;
        w.write_u32::<LittleEndian>(c.domain_sequence.len() as u32)?;
        for d in &c.domain_sequence {
            w.write_u8(match d {
                Domain::K => 0,
                Domain::R => 1,
            })?;
        }
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        write_f32_slice(w, &self.params)?;
        match &self.adam {
            Some(a) => {
                w.write_u8(1)?;
                w.write_u64::<LittleEndian>(a.step)?;
                write_f32_slice(w, &a.m)?;
                write_f32_slice(w, &a.v)?;
            }
            None => w.write_u8(0)?,
        }
        w.write_u32::<LittleEndian>(self.epoch)?;
        w.write_f32::<LittleEndian>(self.val_loss)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, KIND)?;
        let feat = read_u32(r, KIND)? as usize;
        let blocks_per = read_u32(r, KIND)? as usize;
        let kernel = read_u32(r, KIND)? as usize;
        let n_total = read_u32(r, KIND)? as usize;
        let use_domain_transforms = read_u8(r, KIND)? != 0;
        let blocks = read_u32(r, KIND)? as usize;
        if blocks > 64 {
            return Err(format_err(format!("implausible block count {blocks}")));
        }
        let mut domain_sequence = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            domain_sequence.push(match read_u8(r, KIND)? {
                0 => Domain::K,
                1 => Domain::R,
                other => return Err(format_err(format!("unknown domain tag {other}"))),
            });
        }
        let config = NetworkConfig {
            feat,
            blocks_per,
            kernel,
            n_total,
            domain_sequence,
            use_domain_transforms,
        };
        config.validate()?;
        let count = read_u64(r, KIND)? as usize;
        let expected = config.param_count();
        if count != expected {
            return Err(format_err(format!(
                "parameter count {count} does not match the {expected} implied by the config"
            )));
        }
        let params = read_f32_vec(r, count, KIND)?;
        let adam = match read_u8(r, KIND)? {
            0 => None,
            1 => {
                let step = read_u64(r, KIND)?;
                let m = read_f32_vec(r, count, KIND)?;
                let v = read_f32_vec(r, count, KIND)?;
                Some(AdamState { m, v, step })
            }
            other => return Err(format_err(format!("unknown moment flag {other}"))),
        };
        let epoch = read_u32(r, KIND)?;
        let val_loss = read_f32(r, KIND)?;
        let seed = read_u64(r, KIND)?;
        expect_eof(r, KIND)?;
        Ok(Self {
            config,
            params,
            adam,
            epoch,
            val_loss,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut open_reader(path)?)
    }
}

fn format_err(reason: String) -> Error {
    Error::Format { kind: KIND, reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_moments() {
        let net = KrNet::<f32>::new(NetworkConfig::tiny(), 1).unwrap();
        let mut adam = AdamState::new(net.param_count());
        adam.step = 3;
        adam.m[0] = 0.5;
        for ck in [
            Checkpoint::from_network(&net, None, 2, 0.25, 9),
            Checkpoint::from_network(&net, Some(adam), 4, 0.125, 9),
        ] {
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).unwrap();
            let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.network().unwrap().params(), net.params());
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = KrNet::<f32>::new(NetworkConfig::tiny(), 1).unwrap();
        let ck = Checkpoint::from_network(&net, None, 0, 0.0, 0);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert!(Checkpoint::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(&mut extra.as_slice()).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut wrong.as_slice()),
            Err(Error::Format { .. })
        ));
    }
}
