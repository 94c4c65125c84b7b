use rand::Rng;

use super::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub episode: usize,
    pub step: usize,
}

/// Anchor and positive are adjacent frames of one episode; the negative is a random frame.
#[derive(Debug, Clone, Copy)]
pub struct Triplet<'a> {
    pub anchor: &'a Image,
    pub positive: &'a Image,
    pub negative: &'a Image,
    pub anchor_at: FrameRef,
    pub negative_at: FrameRef,
}

impl<'a> Triplet<'a> {
    pub fn new(anchor: &'a Image, positive: &'a Image, negative: &'a Image) -> Self {
        let at = FrameRef { episode: 0, step: 0 };
        Self {
            anchor,
            positive,
            negative,
            anchor_at: at,
            negative_at: at,
        }
    }
}

/// Maps a flat index to `(episode, step)` given cumulative lengths.
fn locate(offsets: &[usize], flat: usize) -> (usize, usize) {
    let e = offsets.partition_point(|&o| o <= flat) - 1;
    (e, flat - offsets[e])
}

/// Draws `batch` triplets from episode-ordered frames.
///
/// Anchors are uniform over all adjacent pairs. Negatives are uniform over all
/// frames, redrawn while they fall within one step of the anchor in the same
/// episode. When no frame qualifies (a single short episode) the negative is
/// taken uniformly without rejection.
pub fn sample_triplets<'a, R: Rng + ?Sized>(
    episodes: &'a [Vec<Image>],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<Triplet<'a>>> {
    if episodes.is_empty() || episodes.iter().all(Vec::is_empty) {
        return Err(Error::EmptyDataset("no frames to sample triplets from".into()));
    }
    if let Some(e) = episodes.iter().position(|ep| ep.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "episode {e} has fewer than 2 frames"
        )));
    }
    let mut frame_offsets = Vec::with_capacity(episodes.len() + 1);
    let mut pair_offsets = Vec::with_capacity(episodes.len() + 1);
    let (mut frames, mut pairs) = (0, 0);
    for ep in episodes {
        frame_offsets.push(frames);
        pair_offsets.push(pairs);
        frames += ep.len();
        pairs += ep.len() - 1;
    }
    frame_offsets.push(frames);
    pair_offsets.push(pairs);

    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (e, t) = locate(&pair_offsets, rng.random_range(0..pairs));
        let ep_len = episodes[e].len();
        let near = (t.saturating_sub(1)..=(t + 1).min(ep_len - 1)).count();
        let (ne, nt) = if near >= frames {
            locate(&frame_offsets, rng.random_range(0..frames))
        } else {
            loop {
                let (ne, nt) = locate(&frame_offsets, rng.random_range(0..frames));
                if ne != e || nt.abs_diff(t) > 1 {
                    break (ne, nt);
                }
            }
        };
        out.push(Triplet {
            anchor: &episodes[e][t],
            positive: &episodes[e][t + 1],
            negative: &episodes[ne][nt],
            anchor_at: FrameRef { episode: e, step: t },
            negative_at: FrameRef {
                episode: ne,
                step: nt,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::ImageShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episodes(lengths: &[usize]) -> Vec<Vec<Image>> {
        let shape = ImageShape {
            height: 1,
            width: 1,
            channels: 1,
        };
        lengths
            .iter()
            .map(|&n| (0..n).map(|i| Image::filled(shape, i as f32 / n as f32)).collect())
            .collect()
    }

    #[test]
    fn two_frame_episode_always_yields_the_only_pair() {
        let data = episodes(&[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in sample_triplets(&data, 50, &mut rng).unwrap() {
            assert_eq!(t.anchor_at, FrameRef { episode: 0, step: 0 });
            assert!(std::ptr::eq(t.anchor, &data[0][0]));
            assert!(std::ptr::eq(t.positive, &data[0][1]));
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let data = episodes(&[5, 7, 3]);
        let a = sample_triplets(&data, 32, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_triplets(&data, 32, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let key = |t: &Triplet| (t.anchor_at, t.negative_at);
        assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
    }

    #[test]
    fn negatives_avoid_the_anchor_neighbourhood() {
        let data = episodes(&[6, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in sample_triplets(&data, 500, &mut rng).unwrap() {
            if t.negative_at.episode == t.anchor_at.episode {
                assert!(t.negative_at.step.abs_diff(t.anchor_at.step) > 1);
            }
            assert!(std::ptr::eq(t.positive, &data[t.anchor_at.episode][t.anchor_at.step + 1]));
        }
    }

    #[test]
    fn empty_and_short_datasets_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_triplets(&[], 4, &mut rng), Err(Error::EmptyDataset(_))));
        let data = episodes(&[3, 1]);
        assert!(sample_triplets(&data, 4, &mut rng).is_err());
    }
}
