//! Model file format.
//!
//! ```text
//! bytes 0..5    magic "FLIS" + format version byte 0x01
//! bytes 5..9    header length H, little-endian u32
//! bytes 9..9+H  UTF-8 `key=value` lines (version, method, geometry,
//!               hyperparameters, seed)
//! then          per partition: dictionary rows then classifier rows,
//!               row-major little-endian f64
//! ```
//!
//! Loading is strict: wrong magic, unsupported version, malformed or
//! inconsistent headers, short reads and trailing bytes each map to
//! their own error so corruption is reported for what it is.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{FlisError, Result};
use crate::imaging::CLASS_COUNT;
use crate::mat::Mat;
use crate::train::{FlisHyperParams, PartitionModel};

use super::{Method, Model, ModelMeta};

/// Leading bytes of every model file.
pub const MAGIC: &[u8; 5] = b"FLIS\x01";
const FORMAT_VERSION: u32 = 1;

/// Serializes the model; byte output is a pure function of the model.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    model.validate()?;
    let meta = &model.meta;
    let hp = &meta.hp;
    let atoms = model.partitions[0].atoms();
    let header = format!(
        "version={FORMAT_VERSION}\nmethod={}\npartitions={}\npatch_width={}\ndict_size={}\n\
         feature_len={}\natoms={atoms}\nrho={}\nbeta={}\nlambda={}\nlambda1={}\nmax_iters={}\n\
         tol={}\nseed={}\n",
        meta.method.name(),
        meta.partitions,
        meta.patch_width,
        hp.dict_size,
        model.feature_len(),
        hp.rho,
        hp.beta,
        hp.lambda,
        hp.lambda1,
        hp.max_iters,
        hp.tol,
        meta.seed,
    );
    let mut out = Vec::with_capacity(
        MAGIC.len() + 4 + header.len() + model.partitions.len() * atoms * 8 * (model.feature_len() + CLASS_COUNT),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for pm in &model.partitions {
        for &v in pm.dict.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in pm.classifier.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| FlisError::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| FlisError::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| FlisError::io(path, e))?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FlisError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(FlisError::Header("missing header length".into()));
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(FlisError::Header("header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&rest[..header_len])
        .map_err(|_| FlisError::Header("header is not UTF-8".into()))?;
    let mut body = &rest[header_len..];

    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for line in header.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FlisError::Header(format!("malformed line '{line}'")))?;
        if kv.insert(k, v).is_some() {
            return Err(FlisError::Header(format!("duplicate key '{k}'")));
        }
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| FlisError::Header(format!("missing key '{k}'")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| FlisError::Header(format!("key '{k}': bad value '{v}'")))
    }

    let version: u32 = num("version", get("version")?)?;
    if version != FORMAT_VERSION {
        return Err(FlisError::VersionMismatch(version));
    }
    let known = [
        "version", "method", "partitions", "patch_width", "dict_size", "feature_len", "atoms",
        "rho", "beta", "lambda", "lambda1", "max_iters", "tol", "seed",
    ];
    if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
        return Err(FlisError::Header(format!("unknown key '{k}'")));
    }

    let method_name = get("method")?;
    let method = Method::parse(method_name)
        .ok_or_else(|| FlisError::Header(format!("unknown method '{method_name}'")))?;
    let partitions: usize = num("partitions", get("partitions")?)?;
    let patch_width: usize = num("patch_width", get("patch_width")?)?;
    let feature_len: usize = num("feature_len", get("feature_len")?)?;
    let atoms: usize = num("atoms", get("atoms")?)?;
    let hp = FlisHyperParams {
        dict_size: num("dict_size", get("dict_size")?)?,
        rho: num("rho", get("rho")?)?,
        beta: num("beta", get("beta")?)?,
        lambda: num("lambda", get("lambda")?)?,
        lambda1: num("lambda1", get("lambda1")?)?,
        max_iters: num("max_iters", get("max_iters")?)?,
        tol: num("tol", get("tol")?)?,
    };
    let seed: u64 = num("seed", get("seed")?)?;

    if partitions == 0 || atoms == 0 {
        return Err(FlisError::Header("partitions and atoms must be positive".into()));
    }
    if patch_width % 2 == 0 || patch_width == 0 {
        return Err(FlisError::Header(format!("patch_width {patch_width} is not odd")));
    }
    if feature_len != 2 * patch_width * patch_width {
        return Err(FlisError::Header(format!(
            "feature_len {feature_len} does not match patch_width {patch_width}"
        )));
    }
    if atoms != CLASS_COUNT * hp.dict_size {
        return Err(FlisError::Header(format!(
            "atoms {atoms} does not match dict_size {} over {CLASS_COUNT} classes",
            hp.dict_size
        )));
    }
    hp.validate().map_err(|e| FlisError::Header(e.to_string()))?;

    let mut parts = Vec::with_capacity(partitions);
    for p in 0..partitions {
        let dict = read_matrix(&mut body, feature_len, atoms)
            .ok_or(FlisError::Truncated { partition: p, matrix: "dictionary" })?;
        let classifier = read_matrix(&mut body, CLASS_COUNT, atoms)
            .ok_or(FlisError::Truncated { partition: p, matrix: "classifier" })?;
        for (m, what) in [(&dict, "dictionary"), (&classifier, "classifier")] {
            if !m.is_finite() {
                return Err(FlisError::Header(format!(
                    "non-finite value in partition {p} {what}"
                )));
            }
        }
        parts.push(PartitionModel { dict, classifier });
    }
    if !body.is_empty() {
        return Err(FlisError::TrailingData);
    }

    let model = Model {
        meta: ModelMeta { method, patch_width, partitions, hp, seed },
        partitions: parts,
    };
    model.validate()?;
    Ok(model)
}

fn read_matrix(body: &mut &[u8], rows: usize, cols: usize) -> Option<Mat> {
    let bytes = rows.checked_mul(cols)?.checked_mul(8)?;
    if body.len() < bytes {
        return None;
    }
    let (take, rest) = body.split_at(bytes);
    *body = rest;
    let data = take.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some(Mat::from_vec(rows, cols, data))
}

/// FNV-1a over the serialized model; the checksum the CLI prints so two
/// runs can be compared without diffing files.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
