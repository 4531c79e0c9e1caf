//! Progressive bundle: a JSON manifest plus one bit-packed blob per stage.
//!
//! Stage `m`'s blob concatenates, in canonical tensor order, each tensor's
//! packed fragment plane for that stage. Every tensor segment starts on a
//! byte boundary. A directory on disk holds `manifest.json` and
//! `stage-01.bin` .. `stage-NN.bin`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::{self, BitSchedule, FragmentPlane};
use crate::error::FormatError;
use crate::model::{validate_model, ModelSpec, WeightSet};
use crate::pack;
use crate::quant::{self, QuantizedTensor};
use crate::tensor::numel;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn stage_file_name(stage: usize) -> String {
    format!("stage-{stage:02}.bin")
}

/// `f32` stored as its shortest round-tripping decimal string.
mod float_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f32, D::Error> {
        let text = String::deserialize(d)?;
        match text.parse::<f32>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(D::Error::custom(format!("invalid float literal {text:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(with = "float_text")]
    pub min_val: f32,
    #[serde(with = "float_text")]
    pub max_val: f32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub byte_length: u64,
    pub crc32: u32,
    /// Start of each tensor's segment within the stage blob.
    pub tensor_offsets: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub model: ModelSpec,
    pub k: u32,
    /// Cumulative bit positions, last one equal to `k`.
    pub schedule: Vec<u32>,
    pub tensors: Vec<TensorRecord>,
    pub stages: Vec<StageRecord>,
}

impl BundleManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, FormatError> {
        let manifest: Self = serde_json::from_slice(bytes)?;
        manifest.check()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<Vec<u8>, FormatError> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn bit_schedule(&self) -> Result<BitSchedule, FormatError> {
        Ok(BitSchedule::new(self.k, self.schedule.clone())?)
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, stage: usize) -> Result<&StageRecord, FormatError> {
        stage
            .checked_sub(1)
            .and_then(|i| self.stages.get(i))
            .ok_or(FormatError::UnknownStage {
                stage,
                stages: self.stages.len(),
            })
    }

    /// Bits available after `stage` stages.
    pub fn bits_after(&self, stage: usize) -> u32 {
        if stage == 0 {
            0
        } else {
            self.schedule[stage - 1]
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        self.stages.iter().map(|s| s.byte_length).sum()
    }

    /// Internal consistency: version, schedule, tensor list and stage sizes.
    pub fn check(&self) -> Result<(), FormatError> {
        if self.format_version != FORMAT_VERSION {
            return Err(FormatError::Version(self.format_version));
        }
        let sched = self.bit_schedule()?;
        self.model.check()?;
        let required = self.model.required_tensors();
        if required.len() != self.tensors.len()
            || required
                .iter()
                .zip(&self.tensors)
                .any(|((name, shape), rec)| *name != rec.name || *shape != rec.shape)
        {
            return Err(FormatError::Manifest(
                "tensor records do not match the model layers".into(),
            ));
        }
        if let Some(rec) = self.tensors.iter().find(|t| {
            !matches!(
                t.min_val.partial_cmp(&t.max_val),
                Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
            )
        }) {
            return Err(FormatError::Manifest(format!("tensor {} has min > max", rec.name)));
        }
        if self.stages.len() != sched.stages() {
            return Err(FormatError::Manifest(format!(
                "{} stage records for a {}-stage schedule",
                self.stages.len(),
                sched.stages()
            )));
        }
        for (i, rec) in self.stages.iter().enumerate() {
            let width = sched.width(i + 1);
            let mut offset = 0u64;
            if rec.stage != i + 1 || rec.tensor_offsets.len() != self.tensors.len() {
                return Err(FormatError::Manifest(format!("malformed stage record {}", i + 1)));
            }
            for (t, &start) in self.tensors.iter().zip(&rec.tensor_offsets) {
                if start != offset {
                    return Err(FormatError::Manifest(format!(
                        "stage {}: tensor {} offset {} should be {}",
                        rec.stage, t.name, start, offset
                    )));
                }
                offset += pack::packed_len(numel(&t.shape), width) as u64;
            }
            if offset != rec.byte_length {
                return Err(FormatError::Manifest(format!(
                    "stage {}: byte_length {} should be {}",
                    rec.stage, rec.byte_length, offset
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageBlob {
    pub stage: usize,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub stages: Vec<StageBlob>,
}

impl Bundle {
    /// All stage blobs back to back, stage 1 first.
    pub fn singleton_payload(&self) -> Vec<u8> {
        self.stages.iter().flat_map(|s| s.bytes.iter().copied()).collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), FormatError> {
        fs::create_dir_all(dir)?;
        for blob in &self.stages {
            fs::write(dir.join(stage_file_name(blob.stage)), &blob.bytes)?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest.to_json()?)?;
        Ok(())
    }

    /// Loads a bundle directory, verifying every stage's length and checksum.
    pub fn read_dir(dir: &Path) -> Result<Self, FormatError> {
        let manifest = BundleManifest::from_json(&fs::read(dir.join(MANIFEST_FILE))?)?;
        let stages = manifest
            .stages
            .iter()
            .map(|rec| {
                let blob = StageBlob {
                    stage: rec.stage,
                    bytes: fs::read(dir.join(stage_file_name(rec.stage)))?,
                };
                verify_stage(&blob, &manifest)?;
                Ok(blob)
            })
            .collect::<Result<_, FormatError>>()?;
        Ok(Self { manifest, stages })
    }
}

/// Quantizes every tensor to `k` bits and splits the codes into one packed
/// blob per schedule stage.
pub fn encode_bundle(
    spec: &ModelSpec,
    weights: &WeightSet,
    k: u32,
    sched: &BitSchedule,
) -> Result<Bundle, FormatError> {
    if sched.bits() != k {
        return Err(crate::error::CodecError::WrongEnd { k, last: sched.bits() }.into());
    }
    validate_model(spec, weights)?;

    let mut records = Vec::new();
    let mut planes = Vec::new();
    for (name, _) in spec.required_tensors() {
        let tensor = weights.get(&name).expect("validated");
        let q = quant::quantize(tensor, k)?;
        planes.push(codec::divide_all(q.codes(), sched)?);
        records.push(TensorRecord {
            name,
            shape: tensor.shape().to_vec(),
            min_val: q.min_val(),
            max_val: q.max_val(),
        });
    }

    let mut stage_records = Vec::with_capacity(sched.stages());
    let mut blobs = Vec::with_capacity(sched.stages());
    for m in 1..=sched.stages() {
        let mut bytes = Vec::new();
        let mut tensor_offsets = Vec::with_capacity(planes.len());
        for tensor_planes in &planes {
            let plane = &tensor_planes[m - 1];
            tensor_offsets.push(bytes.len() as u64);
            bytes.extend(pack::pack(&plane.values, plane.width));
        }
        stage_records.push(StageRecord {
            stage: m,
            byte_length: bytes.len() as u64,
            crc32: crc32fast::hash(&bytes),
            tensor_offsets,
        });
        blobs.push(StageBlob { stage: m, bytes });
    }

    Ok(Bundle {
        manifest: BundleManifest {
            format_version: FORMAT_VERSION,
            model: spec.clone(),
            k,
            schedule: sched.cumulative().to_vec(),
            tensors: records,
            stages: stage_records,
        },
        stages: blobs,
    })
}

/// Checks a blob's stage index, length and checksum against the manifest.
pub fn verify_stage(blob: &StageBlob, manifest: &BundleManifest) -> Result<(), FormatError> {
    let rec = manifest.stage(blob.stage)?;
    if blob.bytes.len() as u64 != rec.byte_length {
        return Err(FormatError::Length {
            stage: blob.stage,
            expected: rec.byte_length as usize,
            actual: blob.bytes.len(),
        });
    }
    let actual = crc32fast::hash(&blob.bytes);
    if actual != rec.crc32 {
        return Err(FormatError::Checksum {
            stage: blob.stage,
            expected: rec.crc32,
            actual,
        });
    }
    Ok(())
}

/// Unpacks a verified stage blob into one fragment plane per tensor.
pub fn decode_stage(blob: &StageBlob, manifest: &BundleManifest) -> Result<Vec<FragmentPlane>, FormatError> {
    verify_stage(blob, manifest)?;
    let rec = manifest.stage(blob.stage)?;
    let width = manifest.bit_schedule()?.width(blob.stage);
    Ok(manifest
        .tensors
        .iter()
        .zip(&rec.tensor_offsets)
        .map(|(t, &offset)| FragmentPlane {
            stage: blob.stage,
            width,
            values: pack::unpack(&blob.bytes[offset as usize..], width, numel(&t.shape)),
        })
        .collect())
}

/// Splits a singleton payload (all stages concatenated) back into stage
/// blobs, verifying each one.
pub fn split_singleton(payload: &[u8], manifest: &BundleManifest) -> Result<Vec<StageBlob>, FormatError> {
    let expected = manifest.payload_bytes() as usize;
    if payload.len() != expected {
        return Err(FormatError::Length {
            stage: 0,
            expected,
            actual: payload.len(),
        });
    }
    let mut rest = payload;
    manifest
        .stages
        .iter()
        .map(|rec| {
            let (head, tail) = rest.split_at(rec.byte_length as usize);
            rest = tail;
            let blob = StageBlob {
                stage: rec.stage,
                bytes: head.to_vec(),
            };
            verify_stage(&blob, manifest)?;
            Ok(blob)
        })
        .collect()
}

/// Accumulated codes for every tensor after some prefix of stages.
///
/// Cloning is the snapshot mechanism: a clone is an immutable copy that can be
/// materialized while the original keeps receiving stages.
#[derive(Debug, Clone)]
pub struct ReconstructionState {
    manifest: Arc<BundleManifest>,
    schedule: BitSchedule,
    codes: Vec<Vec<u16>>,
    received: usize,
}

impl ReconstructionState {
    pub fn new(manifest: Arc<BundleManifest>) -> Result<Self, FormatError> {
        let schedule = manifest.bit_schedule()?;
        let codes = manifest.tensors.iter().map(|t| vec![0u16; numel(&t.shape)]).collect();
        Ok(Self {
            manifest,
            schedule,
            codes,
            received: 0,
        })
    }

    pub fn manifest(&self) -> &BundleManifest {
        &self.manifest
    }

    pub fn received(&self) -> usize {
        self.received
    }

    pub fn is_complete(&self) -> bool {
        self.received == self.schedule.stages()
    }

    /// Bits of precision currently held, `b_m`.
    pub fn effective_bits(&self) -> u32 {
        self.schedule.position(self.received)
    }

    pub fn codes(&self) -> &[Vec<u16>] {
        &self.codes
    }

    /// ORs the next stage's planes into the accumulated codes. Stages must
    /// arrive as 1, 2, 3, ...
    pub fn apply(&mut self, stage: usize, planes: &[FragmentPlane]) -> Result<(), FormatError> {
        let expected = self.received + 1;
        if stage != expected || stage > self.schedule.stages() {
            return Err(FormatError::OutOfOrder { expected, got: stage });
        }
        if planes.len() != self.codes.len() || planes.iter().any(|p| p.stage != stage) {
            return Err(FormatError::Manifest(format!(
                "stage {stage}: expected {} planes",
                self.codes.len()
            )));
        }
        // validate before mutating so a bad plane leaves the state untouched
        let mut updated = self.codes.clone();
        for (codes, plane) in updated.iter_mut().zip(planes) {
            codec::accumulate_tensor(codes, plane, &self.schedule)?;
        }
        self.codes = updated;
        self.received = stage;
        Ok(())
    }

    /// Decodes and applies a raw stage blob.
    pub fn apply_blob(&mut self, blob: &StageBlob) -> Result<(), FormatError> {
        let planes = decode_stage(blob, &self.manifest)?;
        self.apply(blob.stage, &planes)
    }

    pub fn quantized(&self) -> Result<Vec<QuantizedTensor>, FormatError> {
        self.manifest
            .tensors
            .iter()
            .zip(&self.codes)
            .map(|(t, codes)| {
                Ok(QuantizedTensor::from_parts(
                    t.shape.clone(),
                    self.manifest.k,
                    t.min_val,
                    t.max_val,
                    codes.clone(),
                )?)
            })
            .collect()
    }

    /// Dequantizes every tensor at the currently received precision.
    pub fn materialize(&self) -> Result<WeightSet, FormatError> {
        if self.received == 0 {
            return Err(FormatError::NothingReceived);
        }
        let bits = self.effective_bits();
        self.quantized()?
            .iter()
            .zip(&self.manifest.tensors)
            .map(|(q, t)| Ok((t.name.clone(), quant::dequantize(q, bits)?)))
            .collect()
    }
}

/// Direct quantize -> dequantize of every tensor at full precision, without
/// going through fragments.
pub fn quantize_roundtrip(weights: &WeightSet, k: u32) -> Result<WeightSet, FormatError> {
    weights
        .iter()
        .map(|(name, t)| {
            let q = quant::quantize(t, k)?;
            Ok((name.to_string(), quant::dequantize(&q, k)?))
        })
        .collect::<Result<_, FormatError>>()
}
