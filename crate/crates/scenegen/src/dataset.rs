//! Dataset persistence: PNG rasters plus JSON records under
//! `{split}/{sample_id}.png|.json`, with an `index.json` at the root.
//!
//! Detection training images use the narrow scene preset and test images the
//! wide one, mirroring a hand-collected training set evaluated on messier
//! deployment imagery; the augmentations exist to bridge exactly that gap.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use skyhook_nn::Tensor;
use skyhook_perception::{AttachState, BinMask, BrickClass, FoamState};

use crate::gripper::render_gripper_crop;
use crate::raster::{from_rgb8, to_rgb8};
use crate::rle::{rle_decode, rle_encode};
use crate::scene::{narrow_cfg, synth_scene_cfg, wide_cfg, SceneAnnotation, SceneInstance};
use crate::sequence::{draw_motion, gen_sequence_cfg};
use crate::{Result, SceneError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// How much of everything to generate. The defaults reproduce the reference
/// recipe: ~100 detection images split 7:3, 10 sequences of 10 frames per
/// tracking split, and 100 gripper crops per kind split 40/60.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub detection: usize,
    pub tracking_seqs: usize,
    pub tracking_frames: usize,
    pub grasp_per_kind: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            detection: 100,
            tracking_seqs: 10,
            tracking_frames: 10,
            grasp_per_kind: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    pub fn get(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    fn push(&mut self, split: Split, id: String) {
        match split {
            Split::Train => self.train.push(id),
            Split::Test => self.test.push(id),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub seed: u64,
    pub detection: SplitIds,
    pub tracking: SplitIds,
    pub grasp: SplitIds,
}

#[derive(Serialize, Deserialize)]
struct DetRecord {
    kind: String,
    id: String,
    split: String,
    w: usize,
    h: usize,
    classes: Vec<u8>,
    boxes: Vec<[u32; 4]>,
    occlusion: Vec<u32>,
    inst_rle: Vec<Vec<u32>>,
    part_rle: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct TrackRecord {
    kind: String,
    id: String,
    split: String,
    seq: u32,
    frame: u32,
    w: usize,
    h: usize,
    target_rle: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct GraspRecord {
    kind: String,
    id: String,
    split: String,
    foam: String,
    attach: String,
}

#[derive(Debug, Clone)]
pub struct DetSample {
    pub id: String,
    pub image: Tensor,
    pub annotation: SceneAnnotation,
}

#[derive(Debug, Clone)]
pub struct TrackFrame {
    pub seq: u32,
    pub frame: u32,
    pub image: Tensor,
    pub mask: BinMask,
}

#[derive(Debug, Clone)]
pub struct GraspSample {
    pub id: String,
    pub image: Tensor,
    pub foam: FoamState,
    pub attach: AttachState,
}

fn mix(seed: u64, tag: u64, i: u64) -> u64 {
    let mut z = seed
        ^ tag.wrapping_mul(0xA3EC_647C_5F3E_8A91)
        ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    let (_, _, h, w) = img.rank4().map_err(|e| SceneError::Format(e.to_string()))?;
    let buf = image::RgbImage::from_raw(w as u32, h as u32, to_rgb8(img))
        .ok_or_else(|| SceneError::Format("raw buffer size mismatch".into()))?;
    buf.save(path)
        .map_err(|e| SceneError::Format(format!("png write {}: {e}", path.display())))
}

fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::ImageReader::open(path)?
        .decode()
        .map_err(|e| SceneError::Format(format!("png read {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(from_rgb8(w, h, img.as_raw()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn foam_tag(f: FoamState) -> &'static str {
    match f {
        FoamState::Compressed => "compressed",
        FoamState::Uncompressed => "uncompressed",
    }
}

fn attach_tag(a: AttachState) -> &'static str {
    match a {
        AttachState::Attached => "attached",
        AttachState::NotAttached => "not_attached",
    }
}

fn parse_foam(s: &str) -> Result<FoamState> {
    match s {
        "compressed" => Ok(FoamState::Compressed),
        "uncompressed" => Ok(FoamState::Uncompressed),
        other => Err(SceneError::Format(format!("unknown foam state {other:?}"))),
    }
}

fn parse_attach(s: &str) -> Result<AttachState> {
    match s {
        "attached" => Ok(AttachState::Attached),
        "not_attached" => Ok(AttachState::NotAttached),
        other => Err(SceneError::Format(format!("unknown attach state {other:?}"))),
    }
}

/// Write one detection sample (PNG + JSON record) into `{dir}/{split}/`.
pub fn save_detection_sample(
    dir: &Path,
    split: Split,
    id: &str,
    image: &Tensor,
    ann: &SceneAnnotation,
) -> Result<()> {
    let sub = dir.join(split.dir());
    fs::create_dir_all(&sub)?;
    save_png(&sub.join(format!("{id}.png")), image)?;
    let record = DetRecord {
        kind: "detection".into(),
        id: id.to_string(),
        split: split.dir().into(),
        w: ann.w,
        h: ann.h,
        classes: ann.instances.iter().map(|i| i.class.id() as u8).collect(),
        boxes: ann.instances.iter().map(|i| i.bbox).collect(),
        occlusion: ann
            .instances
            .iter()
            .map(|i| i.occlusion_index as u32)
            .collect(),
        inst_rle: ann.instances.iter().map(|i| rle_encode(&i.mask)).collect(),
        part_rle: ann
            .instances
            .iter()
            .map(|i| rle_encode(&i.part_mask))
            .collect(),
    };
    write_json(&sub.join(format!("{id}.json")), &record)
}

/// Generate every dataset into `dir` and write `index.json`. A spec of all
/// zeros produces just the (empty) index.
pub fn build_all(seed: u64, dir: &Path, spec: &DatasetSpec) -> Result<DatasetIndex> {
    fs::create_dir_all(dir)?;
    let mut index = DatasetIndex {
        seed,
        ..DatasetIndex::default()
    };

    // Detection, 7:3.
    let n_train = spec.detection * 7 / 10;
    for i in 0..spec.detection {
        let split = if i < n_train { Split::Train } else { Split::Test };
        let cfg = if split == Split::Train {
            narrow_cfg()
        } else {
            wide_cfg()
        };
        let (img, ann) = synth_scene_cfg(mix(seed, 1, i as u64), &cfg);
        let id = format!("det{i:04}");
        save_detection_sample(dir, split, &id, &img, &ann)?;
        index.detection.push(split, id);
    }

    // Tracking sequences.
    for split in [Split::Train, Split::Test] {
        if spec.tracking_frames < 2 {
            break;
        }
        let wide = split == Split::Test;
        let cfg = if wide { wide_cfg() } else { narrow_cfg() };
        let tag = if wide { 3 } else { 2 };
        for s in 0..spec.tracking_seqs {
            let seq_seed = mix(seed, tag, s as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
            let motion = draw_motion(&mut rng, wide);
            let frames = gen_sequence_cfg(seq_seed ^ 0xF00D, spec.tracking_frames, &motion, &cfg);
            let sub = dir.join(split.dir());
            fs::create_dir_all(&sub)?;
            for (f, (img, mask)) in frames.iter().enumerate() {
                let id = format!("trk{s:02}_f{f:02}");
                save_png(&sub.join(format!("{id}.png")), img)?;
                let record = TrackRecord {
                    kind: "tracking".into(),
                    id: id.clone(),
                    split: split.dir().into(),
                    seq: s as u32,
                    frame: f as u32,
                    w: mask.w,
                    h: mask.h,
                    target_rle: rle_encode(mask),
                };
                write_json(&sub.join(format!("{id}.json")), &record)?;
                index.tracking.push(split, id);
            }
        }
    }

    // Gripper crops, 2:3 within each kind.
    let kinds = [
        (FoamState::Uncompressed, AttachState::NotAttached, "un"),
        (FoamState::Uncompressed, AttachState::Attached, "ua"),
        (FoamState::Compressed, AttachState::NotAttached, "cn"),
        (FoamState::Compressed, AttachState::Attached, "ca"),
    ];
    let n_grasp_train = spec.grasp_per_kind * 2 / 5;
    for (k, &(foam, attach, tag)) in kinds.iter().enumerate() {
        for i in 0..spec.grasp_per_kind {
            let split = if i < n_grasp_train {
                Split::Train
            } else {
                Split::Test
            };
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 4, (k * 1_000_000 + i) as u64));
            let (img, _) = render_gripper_crop(foam, attach, &mut rng);
            let id = format!("grasp_{tag}_{i:03}");
            let sub = dir.join(split.dir());
            fs::create_dir_all(&sub)?;
            save_png(&sub.join(format!("{id}.png")), &img)?;
            let record = GraspRecord {
                kind: "grasp".into(),
                id: id.clone(),
                split: split.dir().into(),
                foam: foam_tag(foam).into(),
                attach: attach_tag(attach).into(),
            };
            write_json(&sub.join(format!("{id}.json")), &record)?;
            index.grasp.push(split, id);
        }
    }

    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    fs::write(dir.join("index.json"), text)?;
    Ok(index)
}

pub fn load_index(dir: &Path) -> Result<DatasetIndex> {
    let text = fs::read_to_string(dir.join("index.json"))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_detection(dir: &Path, split: Split) -> Result<Vec<DetSample>> {
    let index = load_index(dir)?;
    let sub = dir.join(split.dir());
    let mut out = Vec::new();
    for id in index.detection.get(split) {
        let image = load_png(&sub.join(format!("{id}.png")))?;
        let text = fs::read_to_string(sub.join(format!("{id}.json")))?;
        let rec: DetRecord = serde_json::from_str(&text)?;
        let mut instances = Vec::with_capacity(rec.classes.len());
        for j in 0..rec.classes.len() {
            let class = BrickClass::from_id(rec.classes[j] as usize)
                .ok_or_else(|| SceneError::Format(format!("bad class id {}", rec.classes[j])))?;
            instances.push(SceneInstance {
                class,
                mask: rle_decode(rec.w, rec.h, &rec.inst_rle[j])?,
                part_mask: rle_decode(rec.w, rec.h, &rec.part_rle[j])?,
                bbox: rec.boxes[j],
                occlusion_index: rec.occlusion[j] as usize,
            });
        }
        out.push(DetSample {
            id: id.clone(),
            image,
            annotation: SceneAnnotation {
                w: rec.w,
                h: rec.h,
                instances,
            },
        });
    }
    Ok(out)
}

/// Frames grouped by sequence, ordered by frame number.
pub fn load_tracking(dir: &Path, split: Split) -> Result<Vec<Vec<TrackFrame>>> {
    let index = load_index(dir)?;
    let sub = dir.join(split.dir());
    let mut flat = Vec::new();
    for id in index.tracking.get(split) {
        let image = load_png(&sub.join(format!("{id}.png")))?;
        let text = fs::read_to_string(sub.join(format!("{id}.json")))?;
        let rec: TrackRecord = serde_json::from_str(&text)?;
        flat.push(TrackFrame {
            seq: rec.seq,
            frame: rec.frame,
            image,
            mask: rle_decode(rec.w, rec.h, &rec.target_rle)?,
        });
    }
    flat.sort_by_key(|f| (f.seq, f.frame));
    let mut out: Vec<Vec<TrackFrame>> = Vec::new();
    for f in flat {
        match out.last_mut() {
            Some(seq) if seq[0].seq == f.seq => seq.push(f),
            _ => out.push(vec![f]),
        }
    }
    Ok(out)
}

pub fn load_grasp(dir: &Path, split: Split) -> Result<Vec<GraspSample>> {
    let index = load_index(dir)?;
    let sub = dir.join(split.dir());
    let mut out = Vec::new();
    for id in index.grasp.get(split) {
        let image = load_png(&sub.join(format!("{id}.png")))?;
        let text = fs::read_to_string(sub.join(format!("{id}.json")))?;
        let rec: GraspRecord = serde_json::from_str(&text)?;
        out.push(GraspSample {
            id: id.clone(),
            image,
            foam: parse_foam(&rec.foam)?,
            attach: parse_attach(&rec.attach)?,
        });
    }
    Ok(out)
}
