/// Round-robin output-channel tiling: PE `p` owns channels `p, p + n, p + 2n, …`.
///
/// Returns one channel list per PE; PEs beyond `out_channels` get none.
pub fn tile_output_channels(out_channels: usize, n_pes: usize) -> Vec<Vec<usize>> {
    assert!(n_pes >= 1, "at least one PE is required");
    (0..n_pes)
        .map(|p| (p..out_channels).step_by(n_pes).collect())
        .collect()
}

/// Channels processed together in round `r`: the `r`-th channel of every PE.
pub(crate) fn round_channels(round: usize, out_channels: usize, n_pes: usize) -> std::ops::Range<usize> {
    let start = round * n_pes;
    start..(start + n_pes).min(out_channels)
}

pub(crate) fn rounds(out_channels: usize, n_pes: usize) -> usize {
    out_channels.div_ceil(n_pes)
}
