//! Checkpoint files: a UTF-8 manifest terminated by an `end` line, followed
//! by every parameter as little-endian `f64` values.
//!
//! ```text
//! usersim-checkpoint 1
//! round 50
//! layout full
//! config {...json...}
//! environment {...json...}        (optional)
//! param gen.enc.feedback.weight 10 2 0
//! ...
//! payload 123456
//! sha256 <hex digest of the payload>
//! end
//! <payload bytes>
//! ```
//!
//! Parameter lines carry `name rows cols byte_offset`; offsets must tile the
//! payload in order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::algorithm::Trained;
use super::config::TrainConfig;
use crate::data::{Dataset, ItemCatalog, State};
use crate::discriminator::{self, Discriminator, HeadLayout};
use crate::error::{Error, Result};
use crate::generator::{self, Generator};
use crate::nn::{ParameterStore, Tensor};

pub const FORMAT_VERSION: &str = "1";
const MAGIC: &str = "usersim-checkpoint";

/// What a simulator needs besides the networks: the catalog, the initial
/// states it may reset to and item popularity for baseline policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvBundle {
    pub catalog: ItemCatalog,
    pub reset_states: Vec<State>,
    pub popularity: Vec<usize>,
}

impl EnvBundle {
    /// Reset states are the test-split states; popularity counts every
    /// logged event.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self {
            catalog: dataset.catalog().clone(),
            reset_states: dataset.test().into_iter().map(|t| t.state).collect(),
            popularity: dataset.corpus.item_counts(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub config: TrainConfig,
    pub round: usize,
    pub environment: Option<EnvBundle>,
}

impl Checkpoint {
    pub fn from_trained(trained: &Trained, environment: Option<EnvBundle>) -> Self {
        Self {
            generator: trained.generator.clone(),
            discriminator: trained.discriminator.clone(),
            config: trained.config.clone(),
            round: trained.rounds_run(),
            environment,
        }
    }

    /// Serializes to the on-disk byte layout.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut manifest = format!("{MAGIC} {FORMAT_VERSION}\n");
        manifest += &format!("round {}\n", self.round);
        manifest += &format!("layout {}\n", layout_tag(self.discriminator.layout));
        manifest += &format!("config {}\n", to_json(&self.config)?);
        if let Some(env) = &self.environment {
            manifest += &format!("environment {}\n", to_json(env)?);
        }
        let mut payload = Vec::new();
        for store in [&self.generator.store, &self.discriminator.store] {
            for (name, p) in store.iter() {
                let (rows, cols) = p.value.dim();
                manifest += &format!("param {name} {rows} {cols} {}\n", payload.len());
                for v in p.value.iter() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        manifest += &format!("payload {}\n", payload.len());
        manifest += &format!("sha256 {}\n", hex::encode(Sha256::digest(&payload)));
        manifest += "end\n";
        let mut out = manifest.into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (lines, payload) = split_manifest(bytes)?;
        let mut lines = lines.into_iter();

        let header = lines.next().unwrap_or_default();
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::CheckpointMalformed("not a checkpoint file".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }

        let mut round = None;
        let mut layout = None;
        let mut config: Option<TrainConfig> = None;
        let mut environment = None;
        let mut params: Vec<(String, usize, usize, usize)> = Vec::new();
        let mut declared_len = None;
        let mut digest = None;
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "round" => round = Some(parse_num(rest, "round")?),
                "layout" => layout = Some(parse_layout(rest)?),
                "config" => config = Some(from_json(rest, "config")?),
                "environment" => environment = Some(from_json::<EnvBundle>(rest, "environment")?),
                "param" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(Error::CheckpointMalformed(format!("bad param line `{line}`")));
                    }
                    params.push((
                        f[0].to_string(),
                        parse_num(f[1], "rows")?,
                        parse_num(f[2], "cols")?,
                        parse_num(f[3], "offset")?,
                    ));
                }
                "payload" => declared_len = Some(parse_num(rest, "payload")?),
                "sha256" => digest = Some(rest.to_string()),
                other => return Err(Error::CheckpointMalformed(format!("unknown manifest key `{other}`"))),
            }
        }
        let missing = |what: &str| Error::CheckpointMalformed(format!("manifest lacks `{what}`"));
        let round = round.ok_or_else(|| missing("round"))?;
        let layout = layout.ok_or_else(|| missing("layout"))?;
        let config = config.ok_or_else(|| missing("config"))?;
        let declared_len = declared_len.ok_or_else(|| missing("payload"))?;
        let digest = digest.ok_or_else(|| missing("sha256"))?;

        if payload.len() < declared_len {
            return Err(Error::CheckpointTruncated(format!(
                "payload has {} of {declared_len} bytes",
                payload.len()
            )));
        }
        if payload.len() > declared_len {
            return Err(Error::CheckpointMalformed(format!(
                "{} trailing bytes after the payload",
                payload.len() - declared_len
            )));
        }
        if hex::encode(Sha256::digest(payload)) != digest {
            return Err(Error::CheckpointChecksum);
        }
        config.validate()?;
        if layout != config.layout() {
            return Err(Error::CheckpointMalformed(
                "layout disagrees with the configured variant".into(),
            ));
        }

        let mut gen_store = ParameterStore::new();
        let mut disc_store = ParameterStore::new();
        let mut offset = 0usize;
        for (name, rows, cols, at) in params {
            if at != offset {
                return Err(Error::CheckpointMalformed(format!(
                    "parameter `{name}` at byte {at}, expected {offset}"
                )));
            }
            let len = rows * cols * 8;
            let bytes = payload
                .get(offset..offset + len)
                .ok_or_else(|| Error::CheckpointMalformed(format!("parameter `{name}` overruns the payload")))?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let tensor = Tensor::from_shape_vec((rows, cols), values).expect("sized from manifest");
            offset += len;
            if name.starts_with(&format!("{}.", generator::PREFIX)) {
                gen_store.insert(name, tensor)?;
            } else if name.starts_with(&format!("{}.", discriminator::PREFIX)) {
                disc_store.insert(name, tensor)?;
            } else {
                return Err(Error::CheckpointMalformed(format!(
                    "parameter `{name}` belongs to no network"
                )));
            }
        }
        if offset != declared_len {
            return Err(Error::CheckpointMalformed("parameters do not cover the payload".into()));
        }

        if let Some(env) = &environment {
            if env.catalog.dim() != config.embed {
                return Err(Error::Dimension {
                    what: "catalog embedding size".into(),
                    found: env.catalog.dim(),
                    expected: config.embed,
                });
            }
        }
        let dims = config.dims();
        let generator = Generator::attach(gen_store, dims)?;
        let discriminator = Discriminator::attach(disc_store, dims, layout)?;
        Ok(Self {
            generator,
            discriminator,
            config,
            round,
            environment,
        })
    }
}

fn layout_tag(layout: HeadLayout) -> &'static str {
    match layout {
        HeadLayout::Full => "full",
        HeadLayout::SingleFake => "single-fake",
    }
}

fn parse_layout(s: &str) -> Result<HeadLayout> {
    match s {
        "full" => Ok(HeadLayout::Full),
        "single-fake" => Ok(HeadLayout::SingleFake),
        other => Err(Error::CheckpointMalformed(format!("unknown layout `{other}`"))),
    }
}

fn parse_num(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::CheckpointMalformed(format!("invalid {what} `{s}`")))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::contract(format!("serializing checkpoint: {e}")))
}

fn from_json<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::CheckpointMalformed(format!("{what}: {e}")))
}

/// Splits the bytes after the `end` line from the manifest lines before it.
fn split_manifest(bytes: &[u8]) -> Result<(Vec<&str>, &[u8])> {
    let mut lines = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(len) = bytes[start..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let line = std::str::from_utf8(&bytes[start..start + len])
            .map_err(|_| Error::CheckpointMalformed("manifest is not UTF-8".into()))?;
        start += len + 1;
        if line == "end" {
            return Ok((lines, &bytes[start..]));
        }
        lines.push(line);
    }
    if lines.first().is_some_and(|l| l.starts_with(MAGIC)) {
        Err(Error::CheckpointTruncated("manifest has no `end` line".into()))
    } else {
        Err(Error::CheckpointMalformed("not a checkpoint file".into()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.encode()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

/// Conventional file name carrying the round count, e.g. `model.r050.ckpt`.
pub fn checkpoint_file_name(stem: &str, round: usize) -> String {
    format!("{stem}.r{round:03}.ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::algorithm::init_models;

    fn tiny() -> Checkpoint {
        let config = TrainConfig {
            n: 2,
            embed: 3,
            feedback: 2,
            hidden: 4,
            action: 2,
            head_hidden: 3,
            ..TrainConfig::default()
        };
        let (generator, discriminator) = init_models(&config, HeadLayout::Full).unwrap();
        Checkpoint {
            generator,
            discriminator,
            config,
            round: 7,
            environment: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = tiny();
        let bytes = c.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert!(back.generator.store.values_bit_equal(&c.generator.store));
        assert!(back.discriminator.store.values_bit_equal(&c.discriminator.store));
        assert_eq!(back.config, c.config);
        assert_eq!(back.round, 7);
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = tiny().encode().unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x01;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::CheckpointChecksum)));
    }

    #[test]
    fn truncation_and_version_are_distinct() {
        let bytes = tiny().encode().unwrap();
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 8]),
            Err(Error::CheckpointTruncated(_))
        ));
        assert!(matches!(
            Checkpoint::decode(&bytes[..40]),
            Err(Error::CheckpointTruncated(_))
        ));
        let text = String::from_utf8_lossy(&bytes[..30]).to_string();
        assert!(text.starts_with("usersim-checkpoint 1\n"));
        let mut v2 = bytes.clone();
        v2[MAGIC.len() + 1] = b'9';
        assert!(matches!(Checkpoint::decode(&v2), Err(Error::CheckpointVersion { .. })));
        assert!(matches!(
            Checkpoint::decode(b"hello\n"),
            Err(Error::CheckpointMalformed(_))
        ));
    }

    #[test]
    fn file_name_carries_round() {
        assert_eq!(checkpoint_file_name("model", 50), "model.r050.ckpt");
    }
}
