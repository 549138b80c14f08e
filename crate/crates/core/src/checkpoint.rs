//! Versioned binary snapshots of trained model state.
//!
//! Layout: an 8-byte magic, a format version, the kernel tag, the three
//! shape fields, a length-prefixed UTF-8 config text, then the embedding,
//! projection, readout, and decay arrays as little-endian f64.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::embedding::EmbeddingSequence;
use crate::error::{DhprepError, Result};
use crate::hawkes::{HawkesParams, KernelKind};

const MAGIC: &[u8; 8] = b"DHPREPCK";
const VERSION: u32 = 1;

/// Model state restored from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub embeddings: EmbeddingSequence,
    pub params: HawkesParams,
    /// The training configuration as flat `key=value` lines, for provenance.
    pub config_text: String,
}

/// Serialize model state. The embedding and parameter shapes must agree.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config_text: &str,
) -> Result<()> {
    if params.dim() != emb.dim() || params.vertex_count() != emb.vertex_count() {
        return Err(DhprepError::Validation(format!(
            "parameter shape (dim {}, {} vertices) does not match embeddings (dim {}, {} vertices)",
            params.dim(),
            params.vertex_count(),
            emb.dim(),
            emb.vertex_count()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(params.kernel.as_byte())?;
    w.write_u32::<LittleEndian>(emb.dim() as u32)?;
    w.write_u32::<LittleEndian>(emb.vertex_count() as u32)?;
    w.write_u32::<LittleEndian>(emb.snapshot_count() as u32)?;
    let text = config_text.as_bytes();
    w.write_u64::<LittleEndian>(text.len() as u64)?;
    w.write_all(text)?;
    for &x in emb.data() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in params.w.iter().chain(&params.z).chain(&params.theta) {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

/// Restore model state written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    read_section(r.read_exact(&mut magic), "magic")?;
    if &magic != MAGIC {
        return Err(DhprepError::Checkpoint(format!(
            "bad magic {:02x?}; not a checkpoint file",
            magic
        )));
    }
    let version = read_section(r.read_u32::<LittleEndian>(), "version")?;
    if version != VERSION {
        return Err(DhprepError::Checkpoint(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let kernel = KernelKind::from_byte(read_section(r.read_u8(), "kernel tag")?)?;
    let dim = read_section(r.read_u32::<LittleEndian>(), "dim")? as usize;
    let vertices = read_section(r.read_u32::<LittleEndian>(), "vertex count")? as usize;
    let snapshots = read_section(r.read_u32::<LittleEndian>(), "snapshot count")? as usize;
    if dim == 0 || vertices == 0 || snapshots == 0 {
        return Err(DhprepError::Checkpoint(format!(
            "degenerate shape: dim {dim}, {vertices} vertices, {snapshots} snapshots"
        )));
    }
    let text_len = read_section(r.read_u64::<LittleEndian>(), "config length")? as usize;
    let mut text = vec![0u8; text_len];
    read_section(r.read_exact(&mut text), "config text")?;
    let config_text = String::from_utf8(text)
        .map_err(|_| DhprepError::Checkpoint("config text is not UTF-8".into()))?;

    let emb_data = read_array(&mut r, snapshots * vertices * dim, "embeddings")?;
    let embeddings = EmbeddingSequence::from_raw(snapshots, vertices, dim, emb_data)?;
    let mut params = HawkesParams::new(dim, vertices, kernel)?;
    params.w = read_array(&mut r, dim * dim, "attention projection")?;
    params.z = read_array(&mut r, dim, "attention readout")?;
    params.theta = read_array(&mut r, vertices, "decay rates")?;

    Ok(Checkpoint {
        embeddings,
        params,
        config_text,
    })
}

fn read_array<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    for x in &mut out {
        *x = read_section(r.read_f64::<LittleEndian>(), what)?;
    }
    Ok(out)
}

fn read_section<T>(result: std::io::Result<T>, what: &str) -> Result<T> {
    result.map_err(|e| DhprepError::Checkpoint(format!("reading {what}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_state() -> (EmbeddingSequence, HawkesParams) {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let emb = EmbeddingSequence::random(3, 7, 4, &mut rng).unwrap();
        let params = HawkesParams::random(4, 7, KernelKind::Rayleigh, &mut rng).unwrap();
        (emb, params)
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let (emb, params) = sample_state();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &emb, &params, "epochs=3\nseed=5\n").unwrap();
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(ck.embeddings, emb);
        assert_eq!(ck.params, params);
        assert_eq!(ck.config_text, "epochs=3\nseed=5\n");
    }

    #[test]
    fn rejects_foreign_and_corrupt_files() {
        let (emb, params) = sample_state();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &emb, &params, "").unwrap();

        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            read_checkpoint(wrong_magic.as_slice()),
            Err(DhprepError::Checkpoint(_))
        ));

        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        let err = read_checkpoint(wrong_version.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            read_checkpoint(truncated),
            Err(DhprepError::Checkpoint(_))
        ));

        assert!(read_checkpoint(&b"short"[..]).is_err());
    }

    #[test]
    fn write_rejects_mismatched_shapes() {
        let (emb, _) = sample_state();
        let params = HawkesParams::new(4, 9, KernelKind::Flat).unwrap();
        let mut buf = Vec::new();
        assert!(matches!(
            write_checkpoint(&mut buf, &emb, &params, ""),
            Err(DhprepError::Validation(_))
        ));
    }
}
