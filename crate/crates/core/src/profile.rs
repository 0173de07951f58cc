//! Integer encodings of joint and opponent action profiles.
//!
//! Both encodings read the channel indices as big-endian base-`M` digits in
//! player order. For player `k` the opponent profile drops digit `k`.

/// `base^exp` as `usize`, or `None` on overflow.
pub fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Code of a full joint profile.
pub fn encode_joint(profile: &[usize], channels: usize) -> usize {
    profile.iter().fold(0, |acc, &a| acc * channels + a)
}

/// Inverse of [`encode_joint`].
pub fn decode_joint(mut code: usize, players: usize, channels: usize) -> Vec<usize> {
    let mut out = vec![0; players];
    for slot in out.iter_mut().rev() {
        *slot = code % channels;
        code /= channels;
    }
    out
}

/// Code of the opponents of `player` in `profile`.
pub fn encode_opponents(profile: &[usize], player: usize, channels: usize) -> usize {
    profile
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != player)
        .fold(0, |acc, (_, &a)| acc * channels + a)
}

/// Rebuilds the joint profile in which `player` plays `arm` against the
/// opponent profile `opponents`.
pub fn insert_player(opponents: usize, player: usize, arm: usize, players: usize, channels: usize) -> Vec<usize> {
    let others = decode_joint(opponents, players - 1, channels);
    let mut out = Vec::with_capacity(players);
    out.extend_from_slice(&others[..player]);
    out.push(arm);
    out.extend_from_slice(&others[player..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn big_endian_order() {
        assert_eq!(encode_joint(&[1, 0, 2], 3), 9 + 2);
        assert_eq!(encode_opponents(&[1, 0, 2], 1, 3), 3 + 2);
        assert_eq!(encode_opponents(&[1], 0, 3), 0);
    }

    proptest! {
        #[test]
        fn round_trips(players in 1usize..6, channels in 1usize..5, seed in any::<u64>()) {
            let total = checked_pow(channels, players).unwrap();
            let code = (seed as usize) % total;
            let p = decode_joint(code, players, channels);
            prop_assert_eq!(encode_joint(&p, channels), code);
            for k in 0..players {
                let d = encode_opponents(&p, k, channels);
                prop_assert_eq!(insert_player(d, k, p[k], players, channels), p.clone());
            }
        }
    }
}
