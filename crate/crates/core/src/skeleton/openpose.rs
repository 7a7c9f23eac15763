use std::path::Path;

use serde_json::Value;

use super::Frame;
use crate::error::{Error, Result};
use crate::graph::{joint, BODY25_JOINTS};

/// Parses one OpenPose per-frame document into one candidate per person.
pub fn parse_openpose_frame(doc: &str, frame_index: usize) -> Result<Vec<Frame>> {
    let parse_err = |msg: String| Error::Parse {
        frame: frame_index,
        msg,
    };
    let value: Value = serde_json::from_str(doc).map_err(|e| parse_err(e.to_string()))?;
    let people = value
        .get("people")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("missing \"people\" array".into()))?;
    let mut frames = Vec::with_capacity(people.len());
    for (p, person) in people.iter().enumerate() {
        let kp = person
            .get("pose_keypoints_2d")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(format!("person {p} has no \"pose_keypoints_2d\" array")))?;
        if kp.len() != 3 * BODY25_JOINTS {
            return Err(Error::Structure {
                frame: frame_index,
                msg: format!("person {p} has {} keypoint values, expected 75", kp.len()),
            });
        }
        let mut flat = Vec::with_capacity(kp.len());
        for (k, v) in kp.iter().enumerate() {
            let x = v
                .as_f64()
                .ok_or_else(|| parse_err(format!("person {p} value {k} is not a number")))?;
            flat.push(x as f32);
        }
        for (j, c) in flat.chunks_exact(3).enumerate() {
            if !(0.0..=1.0).contains(&c[2]) {
                return Err(Error::Structure {
                    frame: frame_index,
                    msg: format!("person {p} joint {j} confidence {} outside [0, 1]", c[2]),
                });
            }
        }
        frames.push(Frame::from_flat(&flat).expect("length checked"));
    }
    Ok(frames)
}

/// Serializes candidates back into the OpenPose per-frame layout.
pub fn openpose_document(people: &[Frame]) -> String {
    let people: Vec<Value> = people
        .iter()
        .map(|f| serde_json::json!({ "pose_keypoints_2d": f.to_flat() }))
        .collect();
    serde_json::json!({ "version": 1.3, "people": people }).to_string()
}

/// Reads every `*.json` keypoint file in `dir`, ordered by file name.
pub fn read_openpose_dir(dir: &Path) -> Result<Vec<Vec<Frame>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "meta.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| parse_openpose_frame(&std::fs::read_to_string(p)?, i))
        .collect()
}

fn anchor(f: &Frame) -> Option<(f32, f32)> {
    let hip = f.joints[joint::MID_HIP];
    if hip.confidence > 0.0 {
        return Some((hip.x, hip.y));
    }
    let seen: Vec<_> = f.joints.iter().filter(|j| j.confidence > 0.0).collect();
    if seen.is_empty() {
        return None;
    }
    let n = seen.len() as f32;
    Some((
        seen.iter().map(|j| j.x).sum::<f32>() / n,
        seen.iter().map(|j| j.y).sum::<f32>() / n,
    ))
}

struct Track {
    frames: Vec<Option<Frame>>,
    last: Option<(f32, f32)>,
}

/// Links candidates into tracks by nearest MidHip between consecutive
/// frames (greedy, closest pairs first).
fn associate(candidates_over_time: &[Vec<Frame>]) -> Vec<Track> {
    let len = candidates_over_time.len();
    let mut tracks: Vec<Track> = Vec::new();
    for (t, cands) in candidates_over_time.iter().enumerate() {
        let mut pairs = Vec::new();
        for (ti, track) in tracks.iter().enumerate() {
            let Some((tx, ty)) = track.last else { continue };
            for (ci, c) in cands.iter().enumerate() {
                if let Some((cx, cy)) = anchor(c) {
                    let d = (tx - cx).powi(2) + (ty - cy).powi(2);
                    pairs.push((d, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; tracks.len()];
        let mut cand_used = vec![false; cands.len()];
        for (_, ti, ci) in pairs {
            if track_used[ti] || cand_used[ci] {
                continue;
            }
            track_used[ti] = true;
            cand_used[ci] = true;
            tracks[ti].frames[t] = Some(cands[ci]);
            tracks[ti].last = anchor(&cands[ci]);
        }
        for (ci, c) in cands.iter().enumerate() {
            if !cand_used[ci] {
                let mut frames = vec![None; len];
                frames[t] = Some(*c);
                tracks.push(Track {
                    frames,
                    last: anchor(c),
                });
            }
        }
    }
    tracks
}

/// Sum over joints and both coordinates of the temporal standard deviation.
fn motion_score(track: &Track) -> f64 {
    let present: Vec<&Frame> = track.frames.iter().flatten().collect();
    let n = present.len() as f64;
    if present.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..BODY25_JOINTS {
        for coord in 0..2 {
            let val = |f: &Frame| {
                let p = f.joints[j];
                if coord == 0 { p.x as f64 } else { p.y as f64 }
            };
            let mean = present.iter().map(|f| val(f)).sum::<f64>() / n;
            let var = present.iter().map(|f| (val(f) - mean).powi(2)).sum::<f64>() / n;
            total += var.sqrt();
        }
    }
    total
}

/// Keeps the candidate track that moves most over time. Frames where that
/// track has no detection become empty frames.
pub fn select_primary_skeleton(candidates_over_time: &[Vec<Frame>]) -> Result<Vec<Frame>> {
    let tracks = associate(candidates_over_time);
    let mut best: Option<(f64, &Track)> = None;
    for track in &tracks {
        let score = motion_score(track);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, track));
        }
    }
    let (_, track) =
        best.ok_or_else(|| Error::EmptySequence("no skeleton candidate in any frame".into()))?;
    Ok(track.frames.iter().map(|f| f.unwrap_or_default()).collect())
}
