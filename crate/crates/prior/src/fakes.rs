use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vqat_core::container::{Archive, StoredTensor};
use vqat_core::rng::{derive_seed, seeded};
use vqat_core::Scalar;

use crate::error::{PriorError, Result};
use crate::model::Transformer;
use crate::sample::{sample_continuation, TokenModel};
use crate::vocab::{class_token, BOS, CODEBOOK_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Conditioned,
    Unconditioned,
}

/// How unconditioned sequences begin. `Random` still feeds BOS at
/// position 0 and draws the first body token uniformly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPolicy {
    #[default]
    Bos,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FakeMeta {
    pub mode: GenerationMode,
    pub start: StartPolicy,
    pub temperature: f64,
    pub seed: u64,
    pub model_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FakeSet {
    pub meta: FakeMeta,
    /// Body tokens; every sequence has the same length.
    pub sequences: Vec<Vec<u16>>,
    /// Class of each sequence in conditioned sets.
    pub labels: Vec<Option<u8>>,
}

impl FakeSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new(json!({
            "kind": "fakes",
            "meta": self.meta,
            "labels": self.labels,
        }));
        let flat: Vec<u16> = self.sequences.concat();
        a.insert("tokens", StoredTensor::tokens(vec![self.len(), self.seq_len()], flat)?);
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        if a.header["kind"] != "fakes" {
            return Err(PriorError::Format("archive is not a fake set".into()));
        }
        let bad = |e: serde_json::Error| PriorError::Format(e.to_string());
        let meta: FakeMeta = serde_json::from_value(a.header["meta"].clone()).map_err(bad)?;
        let labels: Vec<Option<u8>> = serde_json::from_value(a.header["labels"].clone()).map_err(bad)?;
        let t = a.get("tokens")?;
        let (n, len) = match t.shape.as_slice() {
            &[n, len] => (n, len),
            s => return Err(PriorError::Format(format!("token tensor has shape {s:?}"))),
        };
        let data = t.as_u16()?;
        let sequences: Vec<Vec<u16>> = if len == 0 { vec![Vec::new(); n] } else { data.chunks(len).map(<[u16]>::to_vec).collect() };
        if labels.len() != n {
            return Err(PriorError::Format(format!("{} labels for {n} sequences", labels.len())));
        }
        if sequences.iter().flatten().any(|&t| t as usize >= CODEBOOK_SIZE) {
            return Err(PriorError::Format("fake set holds control tokens".into()));
        }
        Ok(Self { meta, sequences, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_archive()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// Conditioned: `per_class` sequences for each digit, digit-major order.
/// Unconditioned: `10 * per_class` sequences. Sequence `i` draws from its
/// own RNG stream, so sets are reproducible regardless of ordering.
pub fn generate_fake_set<T: Scalar>(
    model: &Transformer<T>,
    mode: GenerationMode,
    per_class: usize,
    length: usize,
    temperature: f64,
    start: StartPolicy,
    seed: u64,
) -> Result<FakeSet> {
    if mode == GenerationMode::Conditioned && !model.config.conditioned {
        return Err(PriorError::Usage("conditioned fakes need a class-conditioned prior".into()));
    }
    let mut gen = model.generator();
    if gen.context() < length + 1 {
        return Err(PriorError::Config(format!(
            "context {} cannot hold a start token and {length} body tokens",
            gen.context()
        )));
    }
    let total = 10 * per_class;
    let mut sequences = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let mut rng = seeded(derive_seed(seed, &format!("fake/{i}")));
        let (prefix, label) = match mode {
            GenerationMode::Conditioned => {
                let d = (i / per_class) as u8;
                (vec![class_token(d)], Some(d))
            }
            GenerationMode::Unconditioned => match start {
                StartPolicy::Bos => (vec![BOS], None),
                StartPolicy::Random => (vec![BOS, rng.gen_range(0..CODEBOOK_SIZE)], None),
            },
        };
        sequences.push(sample_continuation(&mut gen, &prefix, length, temperature, &mut rng)?);
        labels.push(label);
    }
    Ok(FakeSet {
        meta: FakeMeta { mode, start, temperature, seed, model_digest: model.digest() },
        sequences,
        labels,
    })
}

/// `count` conditioned sequences of one digit. Sequence `k` uses the
/// stream of index `digit * count + k`, so the result equals that
/// digit's slice of a full set with `per_class = count`.
pub fn generate_class_fakes<T: Scalar>(
    model: &Transformer<T>,
    digit: u8,
    count: usize,
    length: usize,
    temperature: f64,
    seed: u64,
) -> Result<FakeSet> {
    if digit > 9 {
        return Err(PriorError::Usage(format!("class {digit} is not a digit")));
    }
    if !model.config.conditioned {
        return Err(PriorError::Usage("conditioned fakes need a class-conditioned prior".into()));
    }
    let mut gen = model.generator();
    let mut sequences = Vec::with_capacity(count);
    for k in 0..count {
        let i = digit as usize * count + k;
        let mut rng = seeded(derive_seed(seed, &format!("fake/{i}")));
        sequences.push(sample_continuation(&mut gen, &[class_token(digit)], length, temperature, &mut rng)?);
    }
    Ok(FakeSet {
        meta: FakeMeta {
            mode: GenerationMode::Conditioned,
            start: StartPolicy::Bos,
            temperature,
            seed,
            model_digest: model.digest(),
        },
        sequences,
        labels: vec![Some(digit); count],
    })
}
