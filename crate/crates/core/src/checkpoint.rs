//! Versioned binary checkpoints for denoiser parameters and optimizer state.
//!
//! Layout: 8-byte magic, u32 version, then the denoiser config, the fixed
//! frequencies, every layer (in flattening order), and optionally the Adam
//! state. All floats are stored as little-endian f64.

use crate::denoiser::{DenoiserConfig, DenoiserParams, Layer};
use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::scalar::Scalar;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DPDIFCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64_slice<F: Scalar, W: Write>(w: &mut W, vs: &[F]) -> Result<()> {
    write_u64(w, vs.len() as u64)?;
    for v in vs {
        write_f64(w, v.as_f64())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Malformed("truncated checkpoint".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Malformed("truncated checkpoint".into()))?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_vec<F: Scalar, R: Read>(r: &mut R) -> Result<Vec<F>> {
    let len = read_u64(r)? as usize;
    if len > 100_000_000 {
        return Err(Error::Malformed(format!("implausible vector length {len}")));
    }
    (0..len).map(|_| Ok(F::from_f64(read_f64(r)?))).collect()
}

pub fn save<F: Scalar, W: Write>(
    w: &mut W,
    params: &DenoiserParams<F>,
    adam: Option<&AdamState<F>>,
) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;

    let cfg = params.cfg();
    write_u64(w, cfg.image_shape.len() as u64)?;
    for &d in &cfg.image_shape {
        write_u64(w, d as u64)?;
    }
    write_u64(w, cfg.num_classes as u64)?;
    write_u64(w, cfg.hidden.len() as u64)?;
    for &h in &cfg.hidden {
        write_u64(w, h as u64)?;
    }
    write_u64(w, cfg.embed_features as u64)?;
    write_f64(w, cfg.sigma_data.as_f64())?;

    write_f64_slice(w, params.freqs())?;
    write_u64(w, params.layers().len() as u64)?;
    for layer in params.layers() {
        write_u64(w, layer.in_dim as u64)?;
        write_u64(w, layer.out_dim as u64)?;
        write_f64_slice(w, &layer.weights)?;
        write_f64_slice(w, &layer.bias)?;
    }

    match adam {
        None => w.write_all(&[0u8])?,
        Some(state) => {
            w.write_all(&[1u8])?;
            write_u64(w, state.step_count())?;
            write_f64(w, state.learning_rate.as_f64())?;
            write_f64(w, state.beta1.as_f64())?;
            write_f64(w, state.beta2.as_f64())?;
            write_f64(w, state.epsilon.as_f64())?;
            write_f64_slice(w, state.first_moment())?;
            write_f64_slice(w, state.second_moment())?;
        }
    }
    Ok(())
}

pub fn load<F: Scalar, R: Read>(r: &mut R) -> Result<(DenoiserParams<F>, Option<AdamState<F>>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Malformed("truncated checkpoint".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Malformed("bad checkpoint magic".into()));
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)
        .map_err(|_| Error::Malformed("truncated checkpoint".into()))?;
    let version = u32::from_le_bytes(vbuf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Malformed(format!("unsupported checkpoint version {version}")));
    }

    let rank = read_u64(r)? as usize;
    let image_shape: Vec<usize> = (0..rank)
        .map(|_| Ok(read_u64(r)? as usize))
        .collect::<Result<_>>()?;
    let num_classes = read_u64(r)? as usize;
    let hidden_count = read_u64(r)? as usize;
    let hidden: Vec<usize> = (0..hidden_count)
        .map(|_| Ok(read_u64(r)? as usize))
        .collect::<Result<_>>()?;
    let embed_features = read_u64(r)? as usize;
    let sigma_data = F::from_f64(read_f64(r)?);
    let cfg = DenoiserConfig { image_shape, num_classes, hidden, embed_features, sigma_data };

    let freqs = read_f64_vec(r)?;
    let layer_count = read_u64(r)? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = read_u64(r)? as usize;
        let out_dim = read_u64(r)? as usize;
        let weights = read_f64_vec(r)?;
        let bias = read_f64_vec(r)?;
        layers.push(Layer { weights, bias, in_dim, out_dim });
    }
    let params = DenoiserParams::from_parts(cfg, layers, freqs)?;

    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)
        .map_err(|_| Error::Malformed("truncated checkpoint".into()))?;
    let adam = if flag[0] == 1 {
        let step = read_u64(r)?;
        let lr = F::from_f64(read_f64(r)?);
        let b1 = F::from_f64(read_f64(r)?);
        let b2 = F::from_f64(read_f64(r)?);
        let eps = F::from_f64(read_f64(r)?);
        let m = read_f64_vec(r)?;
        let v = read_f64_vec(r)?;
        Some(AdamState::from_parts(m, v, step, lr, b1, b2, eps)?)
    } else {
        None
    };
    Ok((params, adam))
}

pub fn save_file<F: Scalar>(
    path: &Path,
    params: &DenoiserParams<F>,
    adam: Option<&AdamState<F>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save(&mut w, params, adam)?;
    w.flush()?;
    Ok(())
}

pub fn load_file<F: Scalar>(path: &Path) -> Result<(DenoiserParams<F>, Option<AdamState<F>>)> {
    let mut r = BufReader::new(File::open(path)?);
    load(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg() -> DenoiserConfig<f64> {
        DenoiserConfig {
            image_shape: vec![1, 3, 3],
            num_classes: 4,
            hidden: vec![7, 5],
            embed_features: 3,
            sigma_data: 0.5,
        }
    }

    #[test]
    fn round_trip_params_and_adam() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let mut adam = AdamState::new(params.param_count(), 3e-4);
        let mut flat = params.to_flat();
        crate::optim::adam_step_flat(&mut adam, &mut flat, &vec![0.1; params.param_count()])
            .unwrap();

        let mut buf = Vec::new();
        save(&mut buf, &params, Some(&adam)).unwrap();
        let (p2, a2) = load::<f64, _>(&mut buf.as_slice()).unwrap();
        assert_eq!(p2.to_flat(), params.to_flat());
        assert_eq!(p2.freqs(), params.freqs());
        let a2 = a2.unwrap();
        assert_eq!(a2.step_count(), adam.step_count());
        assert_eq!(a2.first_moment(), adam.first_moment());
        assert_eq!(a2.second_moment(), adam.second_moment());
    }

    #[test]
    fn round_trip_without_adam() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let mut buf = Vec::new();
        save(&mut buf, &params, None).unwrap();
        let (p2, a2) = load::<f64, _>(&mut buf.as_slice()).unwrap();
        assert!(a2.is_none());
        assert_eq!(p2.to_flat(), params.to_flat());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let mut buf = Vec::new();
        save(&mut buf, &params, None).unwrap();
        buf[2] ^= 0x55;
        assert!(load::<f64, _>(&mut buf.as_slice()).is_err());
    }
}
