use hybrid_sysid::dataset::{self, bin_index, in_split, DataSet, RandomizationSpec, Resolution, Split, N_BINS};
use hybrid_sysid::dynamics::normalize_position;

/// Minimal reader written from the format description alone.
struct RawSet {
    n_clips: usize,
    width: usize,
    height: usize,
    n_frames: usize,
    frames: Vec<u8>,
    labels: Vec<f32>,
    trailer: serde_json::Value,
    checksum: u64,
}

fn parse_raw(bytes: &[u8]) -> RawSet {
    assert_eq!(&bytes[..4], b"V2P1");
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    assert_eq!(word(0), 1);
    let (n_clips, width, height, n_frames, n_theta) = (word(1), word(2), word(3), word(4), word(5));
    assert_eq!(n_theta, 7);
    let start = 28;
    let frames_len = n_clips * n_frames * width * height;
    let labels_len = n_clips * n_frames * n_theta * 4;
    let frames = bytes[start..start + frames_len].to_vec();
    let label_bytes = &bytes[start + frames_len..start + frames_len + labels_len];
    let labels = label_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let at = start + frames_len + labels_len;
    let json_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    assert_eq!(at + 4 + json_len, bytes.len());
    let trailer = serde_json::from_slice(&bytes[at + 4..]).unwrap();
    let mut checksum: u64 = 0xcbf29ce484222325;
    for &b in &bytes[start..start + frames_len + labels_len] {
        checksum ^= b as u64;
        checksum = checksum.wrapping_mul(0x100000001b3);
    }
    RawSet { n_clips, width, height, n_frames, frames, labels, trailer, checksum }
}

fn encoded(set: &DataSet) -> Vec<u8> {
    let mut buf = Vec::new();
    set.write(&mut buf).unwrap();
    buf
}

#[test]
fn byte_layout_matches_an_independent_reader() {
    let spec = RandomizationSpec::wide(Split::Train, 5);
    let set = dataset::generate(&spec, 3, Resolution::WIDE, 20).unwrap();
    let raw = parse_raw(&encoded(&set));
    assert_eq!((raw.n_clips, raw.width, raw.height, raw.n_frames), (3, 100, 50, 20));
    let frame_len = raw.width * raw.height;
    for (c, clip) in set.clips.iter().enumerate() {
        for (f, frame) in clip.frames.iter().enumerate() {
            let off = (c * raw.n_frames + f) * frame_len;
            assert_eq!(&raw.frames[off..off + frame_len], frame.as_slice());
        }
    }
    for (c, label) in set.labels.iter().enumerate() {
        for f in 0..raw.n_frames {
            let row = &raw.labels[(c * raw.n_frames + f) * 7..][..7];
            let p = label.params_at(f);
            let pos = label.positions[f];
            assert_eq!(row, [pos[0] as f32, pos[1] as f32, p.e as f32, p.g as f32, p.c as f32, p.r as f32, p.table_h as f32]);
        }
    }
    assert_eq!(raw.trailer["clips"].as_array().unwrap().len(), 3);
    assert_eq!(raw.trailer["dt"].as_f64().unwrap(), set.dt);
}

#[test]
fn checksum_agrees_with_the_raw_bytes() {
    let set = dataset::generate(&RandomizationSpec::small(Split::Test, 9), 1, Resolution::SMALL, 200).unwrap();
    let bytes = encoded(&set);
    assert_eq!(parse_raw(&bytes).checksum, set.checksum());
    assert_eq!(DataSet::from_bytes(&bytes).unwrap().checksum(), set.checksum());
}

#[test]
fn stored_positions_are_normalized_ground_truth() {
    let spec = RandomizationSpec::small(Split::Train, 2);
    let g = dataset::generate_clip(&spec, 0, Resolution::SMALL, 200, 200).unwrap();
    for (s, pos) in g.trajectory.states.iter().zip(&g.label.positions) {
        assert_eq!(*pos, normalize_position(s.x, s.y));
    }
}

#[test]
fn test_split_clips_only_use_test_bins() {
    let spec = RandomizationSpec::small(Split::Test, 13);
    let set = dataset::generate(&spec, 100, Resolution::SMALL, 200).unwrap();
    assert_eq!(set.len(), 100);
    for label in &set.labels {
        let p = label.params_at(0);
        assert!(in_split(&spec.ranges, &p, Split::Test));
        assert_eq!(bin_index(&spec.ranges.e, p.e) % 2, 1);
    }
    assert_eq!(N_BINS, 20);
}

#[test]
fn almost_every_clip_bounces() {
    for (spec, res, n) in [
        (RandomizationSpec::small(Split::Train, 1), Resolution::SMALL, 200),
        (RandomizationSpec::wide(Split::Train, 1), Resolution::WIDE, 75),
    ] {
        let clips = dataset::generate_clips(&spec, 400, res, n, n).unwrap();
        let bouncing = clips.iter().filter(|g| !g.label.impacts.is_empty()).count();
        assert!(bouncing as f64 / 400.0 > 0.95, "{bouncing}/400");
    }
}

#[test]
fn a_single_regime_matches_plain_generation() {
    let spec = RandomizationSpec::small(Split::Train, 4);
    let a = dataset::generate(&spec, 4, Resolution::SMALL, 200).unwrap();
    let b = dataset::generate_varying(&spec, 4, Resolution::SMALL, 200, 200).unwrap();
    assert_eq!(encoded(&a), encoded(&b));
    let v = dataset::generate_varying(&spec, 4, Resolution::SMALL, 200, 50).unwrap();
    assert!(v.labels.iter().all(|l| l.regimes.len() == 4));
}

#[test]
fn wide_clips_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.v2p");
    let set = dataset::generate(&RandomizationSpec::wide(Split::Test, 8), 2, Resolution::WIDE, 75).unwrap();
    set.save(&path).unwrap();
    let back = DataSet::load(&path).unwrap();
    assert_eq!(back.clips, set.clips);
    assert_eq!(back.checksum(), set.checksum());
    for (a, b) in back.labels.iter().zip(&set.labels) {
        assert_eq!(a.regimes, b.regimes);
        assert_eq!(a.init, b.init);
    }
}
