// Layout (u32 little-endian integers, f32 little-endian floats):
//
//   magic "RNPG" | version | emb dim | encoder hidden | vocab size
//   | config length | TrainConfig JSON | vocab: (length, UTF-8 bytes) per token
//   | parameter count | parameters

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelDims, PointerGenModel, Result, Seq2SeqError, TrainConfig, Vocab};

const MAGIC: &[u8; 4] = b"RNPG";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Seq2SeqError::BadModelFile(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_model(path: &Path, model: &PointerGenModel, config: &TrainConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_vec(config).expect("config serializes");
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, model.dims.emb_dim)?;
    put_u32(&mut w, model.dims.enc_hidden)?;
    put_u32(&mut w, model.vocab.len())?;
    put_u32(&mut w, json.len())?;
    w.write_all(&json)?;
    for t in model.vocab.tokens() {
        put_u32(&mut w, t.len())?;
        w.write_all(t.as_bytes())?;
    }
    put_u32(&mut w, model.params.len())?;
    for &p in &model.params {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<(PointerGenModel, TrainConfig)> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |m: &str| Seq2SeqError::BadModelFile(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    if get_u32(&mut r)? != VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let dims = ModelDims {
        emb_dim: get_u32(&mut r)?,
        enc_hidden: get_u32(&mut r)?,
    };
    let vocab_len = get_u32(&mut r)?;
    let json_len = get_u32(&mut r)?;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let config: TrainConfig =
        serde_json::from_slice(&json).map_err(|e| bad(&format!("config: {e}")))?;
    let mut tokens = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let len = get_u32(&mut r)?;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        tokens.push(String::from_utf8(bytes).map_err(|e| bad(&e.to_string()))?);
    }
    let vocab = Vocab::from_tokens(tokens.iter().cloned());
    if vocab.tokens() != tokens.as_slice() {
        return Err(bad("vocabulary specials out of place"));
    }
    let n = get_u32(&mut r)?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    let params = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((PointerGenModel::from_parts(vocab, dims, params)?, config))
}
