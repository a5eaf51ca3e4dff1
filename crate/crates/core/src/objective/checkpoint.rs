use std::path::Path;

use crate::autograd::{AdamState, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::models::{Discriminator, DiscriminatorSpec, DiscriminatorVariant, Generator, GeneratorSpec, Network};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VGANCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A snapshot of both networks and their optimizers after a training round.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub round: usize,
    pub val_loss: f64,
    pub fingerprint: u64,
    pub generator: Generator<f32>,
    pub discriminator: Option<Discriminator<f32>>,
    pub g_adam: AdamState<f32>,
    pub d_adam: Option<AdamState<f32>>,
}

fn variant_name(v: DiscriminatorVariant) -> String {
    match v {
        DiscriminatorVariant::Pixel => "pixel".into(),
        DiscriminatorVariant::Patch(k) => format!("patch{k}"),
        DiscriminatorVariant::Image => "image".into(),
    }
}

fn parse_variant(s: &str) -> Option<DiscriminatorVariant> {
    match s {
        "pixel" => Some(DiscriminatorVariant::Pixel),
        "image" => Some(DiscriminatorVariant::Image),
        _ => s.strip_prefix("patch")?.parse().ok().map(DiscriminatorVariant::Patch),
    }
}

impl Checkpoint {
    fn metadata(&self) -> String {
        let gs = self.generator.spec();
        let mut meta = format!(
            "round={}\nval_loss={:?}\nfingerprint={:016x}\ng.scales={}\ng.base_channels={}\ng.adam_t={}\n",
            self.round, self.val_loss, self.fingerprint, gs.scales, gs.base_channels, self.g_adam.t
        );
        if let Some(d) = &self.discriminator {
            let ds = d.spec();
            meta.push_str(&format!(
                "d.variant={}\nd.height={}\nd.width={}\nd.base_channels={}\nd.adam_t={}\n",
                variant_name(ds.variant),
                ds.input_size.0,
                ds.input_size.1,
                ds.base_channels,
                self.d_adam.as_ref().map_or(0, |a| a.t)
            ));
        }
        meta
    }

    /// Serializes to the binary layout:
    /// magic, `u16` version, `u32` metadata length and UTF-8 `key=value`
    /// metadata, `u32` record count, then per tensor: `u16` name length,
    /// name, `u8` rank, `u32` extents, `u32` byte length, little-endian f32
    /// values. All integers are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut records: Vec<(String, &[usize], &[f32])> = Vec::new();
        push_net(&mut records, "G", self.generator.params(), Some(&self.g_adam));
        if let Some(d) = &self.discriminator {
            push_net(&mut records, "D", d.params(), self.d_adam.as_ref());
        }

        let meta = self.metadata();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        for (name, shape, data) in records {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &e in shape {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            out.extend_from_slice(&((data.len() * 4) as u32).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.fail_at(0, "magic", format!("expected {:?}", String::from_utf8_lossy(CHECKPOINT_MAGIC))));
        }
        let at = r.pos;
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(r.fail_at(at, "version", format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_at = r.pos;
        let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
            .map_err(|_| r.fail_at(meta_at, "metadata", "not valid UTF-8".into()))?
            .to_string();
        let meta = Metadata::parse(&meta, meta_at)?;

        let count = r.u32("record count")? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let start = r.pos;
            let name_len = r.u16("name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
                .map_err(|_| r.fail_at(start, "name", "not valid UTF-8".into()))?;
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("extent")? as usize);
            }
            let len_at = r.pos;
            let declared = r.u32("byte length")? as usize;
            let expected = shape.iter().product::<usize>() * 4;
            if declared != expected {
                return Err(r.fail_at(
                    len_at,
                    "byte length",
                    format!("tensor {name} declares {declared} bytes, shape {shape:?} needs {expected}"),
                ));
            }
            let data: Vec<f32> = r
                .take(declared, "tensor data")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push((start, name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(r.fail_at(r.pos, "trailer", format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
        }
        let mut records = records.into_iter();

        let gspec = GeneratorSpec::new(meta.usize("g.scales")?, meta.usize("g.base_channels")?);
        gspec.validate()?;
        let reference = Generator::<f32>::build(gspec, 0)?;
        let (gparams, g_adam) = take_net(&mut records, "G", reference.params(), true, meta.u64("g.adam_t")?)?;
        let generator = Generator::from_params(gspec, gparams)?;

        let (discriminator, d_adam) = match meta.get("d.variant") {
            None => (None, None),
            Some(v) => {
                let variant = parse_variant(v)
                    .ok_or_else(|| Error::Data(format!("checkpoint metadata: unknown discriminator variant {v}")))?;
                let spec = DiscriminatorSpec::new(
                    variant,
                    (meta.usize("d.height")?, meta.usize("d.width")?),
                    meta.usize("d.base_channels")?,
                )?;
                let reference = Discriminator::<f32>::from_spec(spec, 0);
                let (params, adam) = take_net(&mut records, "D", reference.params(), true, meta.u64("d.adam_t")?)?;
                (Some(Discriminator::from_params(spec, params)?), adam)
            }
        };
        if let Some((at, name, _)) = records.next() {
            return Err(Error::Format {
                what: "checkpoint",
                offset: at,
                reason: format!("unexpected tensor {name}"),
            });
        }
        Ok(Self {
            round: meta.usize("round")?,
            val_loss: meta
                .get("val_loss")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data("checkpoint metadata: bad val_loss".into()))?,
            fingerprint: meta
                .get("fingerprint")
                .and_then(|v| u64::from_str_radix(v, 16).ok())
                .ok_or_else(|| Error::Data("checkpoint metadata: bad fingerprint".into()))?,
            generator,
            discriminator,
            g_adam: g_adam.expect("generator optimizer"),
            d_adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { what, offset, reason } => Error::Format {
                what,
                offset,
                reason: format!("{}: {reason}", path.display()),
            },
            e => e,
        })
    }
}

fn push_net<'a>(
    records: &mut Vec<(String, &'a [usize], &'a [f32])>,
    prefix: &str,
    params: &'a [Parameter<f32>],
    adam: Option<&'a AdamState<f32>>,
) {
    for (i, p) in params.iter().enumerate() {
        let shape = p.tensor.shape();
        records.push((format!("{prefix}/{}", p.name), shape, p.tensor.data()));
        if let Some(a) = adam {
            records.push((format!("{prefix}.adam_m/{}", p.name), shape, &a.m[i]));
            records.push((format!("{prefix}.adam_v/{}", p.name), shape, &a.v[i]));
        }
    }
}

type Record = (usize, String, Tensor<f32>);

fn take_net(
    records: &mut impl Iterator<Item = Record>,
    prefix: &str,
    reference: &[Parameter<f32>],
    with_adam: bool,
    adam_t: u64,
) -> Result<(Vec<Parameter<f32>>, Option<AdamState<f32>>)> {
    let mut params = Vec::with_capacity(reference.len());
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for r in reference {
        let mut next = |kind: &str| -> Result<Tensor<f32>> {
            let expected = format!("{kind}/{}", r.name);
            match records.next() {
                Some((_, name, t)) if name == expected && t.shape() == r.tensor.shape() => Ok(t),
                Some((at, name, t)) => Err(Error::Format {
                    what: "checkpoint",
                    offset: at,
                    reason: format!("expected tensor {expected} {:?}, found {name} {:?}", r.tensor.shape(), t.shape()),
                }),
                None => Err(Error::Data(format!("checkpoint is missing tensor {expected}"))),
            }
        };
        let t = next(prefix)?;
        if with_adam {
            m.push(next(&format!("{prefix}.adam_m"))?.into_data());
            v.push(next(&format!("{prefix}.adam_v"))?.into_data());
        }
        params.push(Parameter {
            name: r.name.clone(),
            tensor: t,
        });
    }
    let adam = with_adam.then_some(AdamState { t: adam_t, m, v });
    Ok((params, adam))
}

struct Metadata(Vec<(String, String)>);

impl Metadata {
    fn parse(text: &str, offset: usize) -> Result<Self> {
        let mut out = Vec::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "checkpoint",
                offset,
                reason: format!("malformed metadata line {line:?}"),
            })?;
            out.push((k.to_string(), v.to_string()));
        }
        Ok(Self(out))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("checkpoint metadata: missing or bad {key}")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.u64(key).map(|v| v as usize)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail_at(&self, offset: usize, field: &str, reason: String) -> Error {
        Error::Format {
            what: "checkpoint",
            offset,
            reason: format!("{field}: {reason}"),
        }
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail_at(
                self.pos,
                field,
                format!("truncated, need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
