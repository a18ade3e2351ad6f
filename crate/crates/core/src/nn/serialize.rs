//! Binary weight files. Layout: an eight-byte magic, a format version, the
//! model spec, then each named parameter block as little-endian f64 values
//! followed by a SHA-256 digest of those bytes. Loading rebuilds the model
//! from the stored spec and refuses files whose digests, names, or shapes
//! disagree with it.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::arch::{Architecture, Layout, ModelSpec};
use super::model::SeqModel;
use super::tensor::NnError;

const MAGIC: &[u8; 8] = b"SEQWNET1";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<(), NnError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<(), NnError> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String, NnError> {
    let len = read_u32(r)? as usize;
    if len > 4096 {
        return Err(NnError::Io(format!("unreasonable string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| NnError::Io(e.to_string()))
}

fn layout_fields(layout: Layout) -> Vec<u32> {
    match layout {
        Layout::Cnn { channels, kernel } => vec![channels.0 as u32, channels.1 as u32, kernel as u32],
        Layout::Lstm { layers, units } => vec![layers as u32, units as u32],
        Layout::Tcn { blocks, channels, kernel } => {
            vec![blocks as u32, channels as u32, kernel as u32]
        }
    }
}

fn layout_from_fields(arch: Architecture, f: &[u32]) -> Result<Layout, NnError> {
    let need = match arch {
        Architecture::Lstm => 2,
        _ => 3,
    };
    if f.len() != need {
        return Err(NnError::SpecMismatch(format!(
            "{} layout wants {need} fields, file has {}",
            arch.name(),
            f.len()
        )));
    }
    Ok(match arch {
        Architecture::Cnn => {
            Layout::Cnn { channels: (f[0] as usize, f[1] as usize), kernel: f[2] as usize }
        }
        Architecture::Lstm => Layout::Lstm { layers: f[0] as usize, units: f[1] as usize },
        Architecture::Tcn => {
            Layout::Tcn { blocks: f[0] as usize, channels: f[1] as usize, kernel: f[2] as usize }
        }
    })
}

pub fn save_model(model: &SeqModel, path: &Path) -> Result<(), NnError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let spec = model.spec();
    write_str(&mut w, spec.arch().name())?;
    write_u32(&mut w, spec.input_channels as u32)?;
    write_u32(&mut w, spec.window as u32)?;
    write_u32(&mut w, spec.output_dim as u32)?;
    let fields = layout_fields(spec.layout);
    write_u32(&mut w, fields.len() as u32)?;
    for f in fields {
        write_u32(&mut w, f)?;
    }
    let blocks = model.param_blocks();
    write_u32(&mut w, blocks.len() as u32)?;
    for (name, values) in blocks {
        write_str(&mut w, &name)?;
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        let mut hasher = Sha256::new();
        for v in values {
            let bytes = v.to_le_bytes();
            hasher.update(bytes);
            w.write_all(&bytes)?;
        }
        w.write_all(&hasher.finalize())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SeqModel, NnError> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::BadVersion(version));
    }
    let arch: Architecture = read_str(&mut r)?.parse()?;
    let input_channels = read_u32(&mut r)? as usize;
    let window = read_u32(&mut r)? as usize;
    let output_dim = read_u32(&mut r)? as usize;
    let n_fields = read_u32(&mut r)? as usize;
    if n_fields > 8 {
        return Err(NnError::SpecMismatch(format!("{n_fields} layout fields")));
    }
    let mut fields = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        fields.push(read_u32(&mut r)?);
    }
    let spec = ModelSpec {
        input_channels,
        window,
        output_dim,
        layout: layout_from_fields(arch, &fields)?,
    };
    let mut model = SeqModel::new(spec, 0)?;

    let n_blocks = read_u32(&mut r)? as usize;
    {
        let expected = model.param_blocks();
        if n_blocks != expected.len() {
            return Err(NnError::SpecMismatch(format!(
                "file has {n_blocks} parameter blocks, spec wants {}",
                expected.len()
            )));
        }
    }
    let expected_names: Vec<(String, usize)> = model
        .param_blocks()
        .iter()
        .map(|(n, b)| (n.clone(), b.len()))
        .collect();
    let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(n_blocks);
    for (name, len) in &expected_names {
        let file_name = read_str(&mut r)?;
        if &file_name != name {
            return Err(NnError::SpecMismatch(format!(
                "parameter block {file_name:?} where {name:?} was expected"
            )));
        }
        let count = read_u64(&mut r)? as usize;
        if count != *len {
            return Err(NnError::SpecMismatch(format!(
                "block {name} has {count} values, spec wants {len}"
            )));
        }
        let mut hasher = Sha256::new();
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            hasher.update(buf);
            values.push(f64::from_le_bytes(buf));
        }
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        if digest != *hasher.finalize() {
            return Err(NnError::ChecksumMismatch(name.clone()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(format!("parameter block {name}")));
        }
        loaded.push(values);
    }
    for (dst, src) in model.param_blocks_mut().into_iter().zip(loaded) {
        *dst = src;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{mini_specs, random_window};
    use super::*;

    #[test]
    fn round_trip_is_bitwise_exact_for_every_architecture() {
        let dir = tempfile::tempdir().unwrap();
        for (i, spec) in mini_specs().into_iter().enumerate() {
            let model = SeqModel::new(spec, 99).unwrap();
            let path = dir.path().join(format!("m{i}.weights"));
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(model, loaded);
            let window = random_window(&spec, 1);
            assert_eq!(
                model.forward(&window).unwrap(),
                loaded.forward(&window).unwrap()
            );
        }
    }

    #[test]
    fn wrong_magic_and_version_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.weights");
        std::fs::write(&path, b"NOTAMODL____junk").unwrap();
        assert!(matches!(load_model(&path), Err(NnError::BadMagic)));

        let model = SeqModel::new(mini_specs()[0], 1).unwrap();
        let good = dir.path().join("good.weights");
        save_model(&model, &good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes[8] = 9; // version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(NnError::BadVersion(9))));
    }

    #[test]
    fn flipped_payload_byte_fails_its_block_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.weights");
        let model = SeqModel::new(mini_specs()[2], 7).unwrap();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Last 32 bytes are the final block's digest; the bytes just before
        // them are its payload.
        let n = bytes.len();
        bytes[n - 40] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(NnError::ChecksumMismatch(_))));
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.weights");
        let model = SeqModel::new(mini_specs()[1], 7).unwrap();
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(NnError::Io(_))));
    }
}
