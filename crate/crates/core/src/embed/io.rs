// Binary layout (all integers u32 little-endian, floats f32 little-endian):
//
//   magic "RNEM" | version | dim | vocab size | bucket count | stored buckets
//   | config length | config JSON
//   | vocab: (length, UTF-8 bytes) per word
//   | stored bucket ids
//   | word matrix (vocab x dim) | bucket matrix (stored x dim)

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingConfig, EmbeddingTable, Result};

const MAGIC: &[u8; 4] = b"RNEM";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| EmbedError::BadFile(format!("length {n} exceeds u32")))
}

pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let config = serde_json::to_vec(&table.config).expect("config serializes");
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_u32(&mut w, len_u32(table.dim())?)?;
    put_u32(&mut w, len_u32(table.words.len())?)?;
    put_u32(&mut w, table.config.buckets)?;
    put_u32(&mut w, len_u32(table.bucket_ids.len())?)?;
    put_u32(&mut w, len_u32(config.len())?)?;
    w.write_all(&config)?;
    for word in &table.words {
        put_u32(&mut w, len_u32(word.len())?)?;
        w.write_all(word.as_bytes())?;
    }
    for &b in &table.bucket_ids {
        put_u32(&mut w, b)?;
    }
    for x in table.word_vectors.iter().chain(&table.bucket_vectors) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EmbedError::BadFile("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(EmbedError::BadFile(format!(
            "unsupported version {version}"
        )));
    }
    let dim = get_u32(&mut r)? as usize;
    let n_words = get_u32(&mut r)? as usize;
    let buckets = get_u32(&mut r)?;
    let n_buckets = get_u32(&mut r)? as usize;
    let config_len = get_u32(&mut r)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let mut config: EmbeddingConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| EmbedError::BadFile(format!("config: {e}")))?;
    if config.dim != dim || config.buckets != buckets {
        return Err(EmbedError::BadFile("header disagrees with config".into()));
    }
    config.dim = dim;

    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let len = get_u32(&mut r)? as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        words.push(String::from_utf8(bytes).map_err(|e| EmbedError::BadFile(e.to_string()))?);
    }
    let bucket_ids = (0..n_buckets)
        .map(|_| get_u32(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let word_vectors = get_f32s(&mut r, n_words * dim)?;
    let bucket_vectors = get_f32s(&mut r, n_buckets * dim)?;
    Ok(EmbeddingTable::from_parts(
        config,
        words,
        word_vectors,
        bucket_ids,
        bucket_vectors,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::train_embeddings;

    #[test]
    fn round_trip_is_exact() {
        let streams: Vec<Vec<&str>> = vec![
            vec!["low", "lung", "volumes"],
            vec!["calcified", "hilar", "lymph", "nodes"],
        ];
        let table = train_embeddings(
            &streams,
            &EmbeddingConfig {
                dim: 8,
                buckets: 1000,
                ..EmbeddingConfig::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        write_embeddings(&path, &table).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.vector("lungs"), table.vector("lungs"));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(EmbedError::BadFile(_))
        ));
    }
}
